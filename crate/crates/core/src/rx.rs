//! Receive chain: symbol slicing, CP removal, unitary forward DFT, optional
//! timing-phase derotation and hard-decision demapping.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::DvbtConfig;
use crate::qam::demap_qam4;
use crate::stream::SampleStream;
use crate::sync::{correct_timing, TimingEstimate};

/// Demodulated carriers of one symbol in carrier order.
#[derive(Debug, Clone, PartialEq)]
pub struct RxSymbol {
    pub carriers: Vec<Complex64>,
    pub symbol_index_l: usize,
}

pub struct OfdmDemodulator {
    config: DvbtConfig,
    fft: Arc<dyn Fft<f64>>,
    bins: Vec<usize>,
    rel: Vec<i64>,
}

impl OfdmDemodulator {
    pub fn new(config: &DvbtConfig) -> Self {
        OfdmDemodulator {
            config: *config,
            fft: FftPlanner::new().plan_fft_forward(config.fft_size),
            bins: config.active_bins(),
            rel: config.relative_indices(),
        }
    }

    /// Demodulates N + N_g samples. A nonzero `derotate_delta` removes the
    /// rotation 2 pi k' delta / N left by an FFT window `derotate_delta`
    /// samples late (negative for early).
    pub fn demodulate(
        &self,
        time_samples: &[Complex64],
        derotate_delta: i64,
        symbol_index_l: usize,
    ) -> Result<RxSymbol> {
        let (n, ng) = (self.config.fft_size, self.config.guard_samples);
        if time_samples.len() != n + ng {
            return Err(Error::LengthMismatch {
                what: "symbol samples",
                expected: n + ng,
                actual: time_samples.len(),
            });
        }
        let mut buf = time_samples[ng..].to_vec();
        self.fft.process(&mut buf);
        let scale = 1.0 / (n as f64).sqrt();
        let carriers = self
            .bins
            .iter()
            .zip(&self.rel)
            .map(|(&bin, &kp)| {
                let v = buf[bin] * scale;
                if derotate_delta == 0 {
                    v
                } else {
                    let phi = -2.0 * PI * kp as f64 * derotate_delta as f64 / n as f64;
                    v * Complex64::from_polar(1.0, phi)
                }
            })
            .collect();
        Ok(RxSymbol {
            carriers,
            symbol_index_l,
        })
    }

    /// Demodulates one frame's symbols starting at the stream origin, or at
    /// the corrected origin when an estimate is supplied.
    ///
    /// With `derotate` set, the estimate is applied as a per-carrier phase
    /// correction instead of moving the FFT window.
    pub fn receive_symbols(
        &self,
        stream: &SampleStream,
        estimate: Option<&TimingEstimate>,
        derotate: bool,
    ) -> Result<Vec<RxSymbol>> {
        let (stream, lateness) = match estimate {
            Some(est) if derotate => (stream.clone(), -est.signed_offset()),
            Some(est) => (correct_timing(stream, est)?, 0),
            None => (stream.clone(), 0),
        };
        let p = self.config.symbol_period();
        let needed = self.config.symbols_per_frame * p;
        let r = stream.from_origin();
        if r.len() < needed {
            return Err(Error::InsufficientSamples {
                needed,
                available: r.len(),
            });
        }
        (0..self.config.symbols_per_frame)
            .into_par_iter()
            .map(|l| self.demodulate(&r[l * p..(l + 1) * p], lateness, l))
            .collect()
    }

    pub fn receive_frame(
        &self,
        stream: &SampleStream,
        estimate: Option<&TimingEstimate>,
        derotate: bool,
    ) -> Result<Vec<u8>> {
        let symbols = self.receive_symbols(stream, estimate, derotate)?;
        let mut bits = Vec::with_capacity(self.config.bits_per_frame());
        for s in &symbols {
            bits.extend(demap_qam4(&s.carriers));
        }
        Ok(bits)
    }
}

pub fn demodulate_symbol(config: &DvbtConfig, time_samples: &[Complex64], derotate_delta: i64) -> Result<RxSymbol> {
    OfdmDemodulator::new(config).demodulate(time_samples, derotate_delta, 0)
}

pub fn receive_frame(
    config: &DvbtConfig,
    stream: &SampleStream,
    estimate: Option<&TimingEstimate>,
    derotate: bool,
) -> Result<Vec<u8>> {
    OfdmDemodulator::new(config).receive_frame(stream, estimate, derotate)
}

/// Root-mean-square distance of received carriers from the transmitted ones.
pub fn constellation_rms_error(received: &[RxSymbol], sent: &[Vec<Complex64>]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (r, s) in received.iter().zip(sent) {
        for (a, b) in r.carriers.iter().zip(s) {
            sum += (a - b).norm_sqr();
            count += 1;
        }
    }
    (sum / count.max(1) as f64).sqrt()
}

/// Writes `re,im,k_prime,l` rows for every received carrier.
pub fn write_constellation_csv<W: Write>(config: &DvbtConfig, symbols: &[RxSymbol], w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        re: f64,
        im: f64,
        k_prime: i64,
        l: usize,
    }
    let rel = config.relative_indices();
    let mut out = csv::Writer::from_writer(w);
    for s in symbols {
        for (c, &k_prime) in s.carriers.iter().zip(&rel) {
            out.serialize(Row {
                re: c.re,
                im: c.im,
                k_prime,
                l: s.symbol_index_l,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{make_2k_config, GuardFraction};
    use crate::tx::{modulate_symbol, random_bits, QamSymbolBlock};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block(config: &DvbtConfig, seed: u64) -> QamSymbolBlock {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        QamSymbolBlock::from_bits(&random_bits(&mut rng, config.bits_per_symbol()), 0, 0).unwrap()
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn round_trip() {
        let c = make_2k_config(GuardFraction::Sixteenth);
        let b = block(&c, 1);
        let sym = modulate_symbol(&c, &b).unwrap();
        let rx = demodulate_symbol(&c, &sym.time, 0).unwrap();
        assert!(max_err(&rx.carriers, &b.carriers) < 1e-10);
    }

    #[test]
    fn early_window_rotation_and_derotation() {
        let c = make_2k_config(GuardFraction::Quarter);
        let b = block(&c, 2);
        let sym = modulate_symbol(&c, &b).unwrap();
        let delta = 5usize;
        // window starting `delta` samples before the symbol
        let mut shifted = vec![Complex64::new(0.0, 0.0); delta];
        shifted.extend_from_slice(&sym.time[..sym.time.len() - delta]);

        let fixed = demodulate_symbol(&c, &shifted, -(delta as i64)).unwrap();
        assert!(max_err(&fixed.carriers, &b.carriers) < 1e-9);

        let raw = demodulate_symbol(&c, &shifted, 0).unwrap();
        for (i, &kp) in c.relative_indices().iter().enumerate().step_by(50) {
            let want = crate::sync::phase_rotation(&c, -(delta as i64), kp);
            let got = (raw.carriers[i] / b.carriers[i]).arg();
            let diff = (got - want).rem_euclid(2.0 * PI);
            assert!(diff.min(2.0 * PI - diff) < 1e-6);
        }
    }

    #[test]
    fn length_mismatch() {
        let c = make_2k_config(GuardFraction::Quarter);
        assert!(matches!(
            demodulate_symbol(&c, &[Complex64::new(0.0, 0.0); 2048], 0),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn short_stream_rejected() {
        let c = make_2k_config(GuardFraction::Quarter);
        let s = SampleStream::new(vec![Complex64::new(0.0, 0.0); 1000], c.elementary_period_s);
        assert!(matches!(
            receive_frame(&c, &s, None, false),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn constellation_csv_header() {
        let c = make_2k_config(GuardFraction::Quarter);
        let rx = RxSymbol {
            carriers: vec![Complex64::new(0.5, -0.5); c.active_carriers],
            symbol_index_l: 3,
        };
        let mut buf = Vec::new();
        write_constellation_csv(&c, &[rx], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("re,im,k_prime,l"));
        assert_eq!(lines.next(), Some("0.5,-0.5,-852,3"));
        assert_eq!(text.lines().count(), 1 + c.active_carriers);
    }
}
