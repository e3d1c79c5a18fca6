//! Optional oversampled passband stage: zero-stuffing interpolation, a
//! Butterworth reconstruction low-pass and real upconversion.
//!
//! Not used by the BER harness; it exists to produce the real-valued
//! emitted waveform and its spectrum for inspection.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::DvbtConfig;
use crate::stream::SampleStream;

pub const RECONSTRUCTION_ORDER: usize = 13;
/// Oversampling factor used for passband plots when none is given.
pub const DEFAULT_OVERSAMPLE: usize = 40;

/// One biquad (or first-order, with `b2 = a2 = 0`) section,
/// `a0` normalized to 1.
#[derive(Debug, Clone, Copy)]
struct Section {
    b: [f64; 3],
    a: [f64; 2],
}

/// Digital Butterworth low-pass designed by the bilinear transform with
/// frequency prewarping, stored as cascaded second-order sections.
#[derive(Debug, Clone)]
pub struct Butterworth {
    sections: Vec<Section>,
    order: usize,
    cutoff_hz: f64,
    sample_rate_hz: f64,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if order == 0 || cutoff_hz.is_nan() || cutoff_hz <= 0.0 || cutoff_hz >= sample_rate_hz / 2.0 {
            return Err(Error::NyquistViolation {
                sample_rate_hz,
                highest_hz: cutoff_hz,
            });
        }
        let fs2 = 2.0 * sample_rate_hz;
        let warped = fs2 * (PI * cutoff_hz / sample_rate_hz).tan();
        let bilinear = |p: Complex64| (1.0 + p / fs2) / (1.0 - p / fs2);

        let mut sections = Vec::with_capacity(order.div_ceil(2));
        // upper-half-plane poles of each conjugate pair
        for k in 0..order / 2 {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            let z = bilinear(Complex64::from_polar(warped, theta));
            let a1 = -2.0 * z.re;
            let a2 = z.norm_sqr();
            let g = (1.0 + a1 + a2) / 4.0;
            sections.push(Section {
                b: [g, 2.0 * g, g],
                a: [a1, a2],
            });
        }
        if order % 2 == 1 {
            let z = bilinear(Complex64::new(-warped, 0.0)).re;
            let g = (1.0 - z) / 2.0;
            sections.push(Section {
                b: [g, g, 0.0],
                a: [-z, 0.0],
            });
        }
        Ok(Butterworth {
            sections,
            order,
            cutoff_hz,
            sample_rate_hz,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let zi = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.sample_rate_hz);
        let zi2 = zi * zi;
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
            acc * (s.b[0] + s.b[1] * zi + s.b[2] * zi2) / (1.0 + s.a[0] * zi + s.a[1] * zi2)
        })
    }

    /// Filters in place with zero initial state (transposed direct form II).
    pub fn filter(&self, x: &mut [Complex64]) {
        for s in &self.sections {
            let (mut w1, mut w2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + w1;
                w1 = s.b[1] * input - s.a[0] * y + w2;
                w2 = s.b[2] * input - s.a[1] * y;
                *v = y;
            }
        }
    }
}

/// Interpolates a baseband stream by `oversample` and mixes it to a real
/// passband signal at `carrier_hz`.
///
/// The reconstruction filter has order 13 and passes a two-sided band of
/// width 1/T, i.e. a one-sided cutoff of 1/(2T).
pub fn to_passband(stream: &SampleStream, carrier_hz: f64, oversample: usize) -> Result<Vec<f64>> {
    let elementary_rate = 1.0 / stream.sample_period_s;
    let fs = oversample as f64 * elementary_rate;
    // the reconstruction band, not just the occupied band, must fit below Nyquist
    let highest = carrier_hz + elementary_rate / 2.0;
    if oversample == 0 || carrier_hz.is_nan() || carrier_hz < 0.0 || fs <= 2.0 * highest {
        return Err(Error::NyquistViolation {
            sample_rate_hz: fs,
            highest_hz: highest,
        });
    }
    let filter = Butterworth::lowpass(RECONSTRUCTION_ORDER, elementary_rate / 2.0, fs)?;

    let mut up = vec![Complex64::new(0.0, 0.0); stream.len() * oversample];
    for (i, s) in stream.samples.iter().enumerate() {
        up[i * oversample] = s * oversample as f64;
    }
    filter.filter(&mut up);

    let w = 2.0 * PI * carrier_hz / fs;
    Ok(up
        .iter()
        .enumerate()
        .map(|(i, y)| (y * Complex64::from_polar(1.0, w * i as f64)).re)
        .collect())
}

/// Passband conversion with the default oversampling factor.
pub fn to_passband_default(stream: &SampleStream, config: &DvbtConfig, carrier_hz: f64) -> Result<Vec<f64>> {
    debug_assert_eq!(stream.sample_period_s, config.elementary_period_s);
    to_passband(stream, carrier_hz, DEFAULT_OVERSAMPLE)
}
