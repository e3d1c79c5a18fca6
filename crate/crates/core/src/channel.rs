//! Channel impairments: integer-sample timing offset and AWGN.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::SampleStream;

/// Which way the receiver's symbol grid ends up misplaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetDirection {
    /// Stream delayed; a receiver at the nominal origin samples early and
    /// its FFT window stays inside the cyclic prefix.
    #[default]
    Delay,
    /// Receiver origin lags the true symbol start; the FFT window runs
    /// into the next symbol.
    Advance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Per-sample signal power over complex noise power, dB. `+inf` disables noise.
    pub snr_db: f64,
    pub timing_offset_samples: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub direction: OffsetDirection,
}

impl ChannelSpec {
    pub fn noiseless(timing_offset_samples: usize) -> Self {
        ChannelSpec {
            snr_db: f64::INFINITY,
            timing_offset_samples,
            rng_seed: 0,
            direction: OffsetDirection::Delay,
        }
    }

    /// Lag, in `[0, symbol_period)` from the receiver's assumed origin, of
    /// the true symbol start after this channel.
    pub fn expected_delta(&self, symbol_period: usize) -> usize {
        let o = self.timing_offset_samples % symbol_period;
        match self.direction {
            OffsetDirection::Delay => o,
            OffsetDirection::Advance => (symbol_period - o) % symbol_period,
        }
    }

    pub fn apply(&self, stream: &SampleStream) -> Result<SampleStream> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidConfig(format!("snr_db {} is not usable", self.snr_db)));
        }
        let shifted = match self.direction {
            OffsetDirection::Delay => apply_timing_offset(stream, self.timing_offset_samples)?,
            OffsetDirection::Advance => apply_sampling_lag(stream, self.timing_offset_samples)?,
        };
        add_awgn(&shifted, self.snr_db, self.rng_seed)
    }
}

/// Delays the stream by `offset` samples by prepending zeros. The origin
/// index is kept, so the receiver's nominal slicing is now `offset` early.
pub fn apply_timing_offset(stream: &SampleStream, offset: usize) -> Result<SampleStream> {
    if offset >= stream.len().max(1) {
        return Err(Error::OffsetOutOfRange {
            offset,
            len: stream.len(),
        });
    }
    let mut samples = Vec::with_capacity(stream.len() + offset);
    samples.resize(offset, num_complex::Complex64::new(0.0, 0.0));
    samples.extend_from_slice(&stream.samples);
    Ok(SampleStream {
        samples,
        sample_period_s: stream.sample_period_s,
        origin_index: stream.origin_index,
    })
}

/// Moves the receiver's assumed origin `lag` samples past the true symbol
/// start, leaving the samples untouched.
pub fn apply_sampling_lag(stream: &SampleStream, lag: usize) -> Result<SampleStream> {
    let origin = stream.origin_index + lag;
    if origin >= stream.len() {
        return Err(Error::OffsetOutOfRange {
            offset: lag,
            len: stream.len(),
        });
    }
    Ok(SampleStream {
        origin_index: origin,
        ..stream.clone()
    })
}

/// Real delay corresponding to `offset` samples.
pub fn offset_delay_s(offset: usize, sample_period_s: f64) -> f64 {
    offset as f64 * sample_period_s
}

/// Noise variance for a target SNR given the measured signal power.
pub fn noise_variance(signal_power: f64, snr_db: f64) -> f64 {
    signal_power / 10f64.powf(snr_db / 10.0)
}

/// Adds circular complex Gaussian noise at `snr_db` relative to the
/// stream's measured mean power. Deterministic in `seed`.
pub fn add_awgn(stream: &SampleStream, snr_db: f64, seed: u64) -> Result<SampleStream> {
    if snr_db == f64::INFINITY {
        return Ok(stream.clone());
    }
    let power = stream.mean_power();
    if power.is_nan() || power <= 0.0 {
        return Err(Error::ZeroSignalPower);
    }
    let sigma = (noise_variance(power, snr_db) / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = stream.clone();
    for s in out.samples.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        s.re += sigma * re;
        s.im += sigma * im;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn ramp(n: usize) -> SampleStream {
        SampleStream::new(
            (0..n).map(|i| Complex64::new(i as f64 + 1.0, -(i as f64))).collect(),
            7.0 / 64.0 * 1e-6,
        )
    }

    #[test]
    fn zero_offset_is_identity() {
        let s = ramp(10);
        assert_eq!(apply_timing_offset(&s, 0).unwrap(), s);
    }

    #[test]
    fn offset_prepends_zeros() {
        let s = ramp(10);
        let d = apply_timing_offset(&s, 5).unwrap();
        assert_eq!(d.origin_index, 0);
        assert!(d.samples[..5].iter().all(|x| x.norm() == 0.0));
        assert_eq!(&d.samples[5..], &s.samples[..]);
        assert!(matches!(
            apply_timing_offset(&s, 10),
            Err(Error::OffsetOutOfRange { .. })
        ));
    }

    #[test]
    fn delay_in_seconds() {
        let t = offset_delay_s(5, 7.0 / 64.0 * 1e-6);
        assert!((t - 546.875e-9).abs() < 1e-18);
    }

    #[test]
    fn offsets_compose() {
        let s = ramp(20);
        for (a, b) in [(0, 3), (2, 5), (7, 1)] {
            let twice = apply_timing_offset(&apply_timing_offset(&s, a).unwrap(), b).unwrap();
            assert_eq!(twice, apply_timing_offset(&s, a + b).unwrap());
        }
    }

    #[test]
    fn sampling_lag_moves_origin_only() {
        let s = ramp(10);
        let l = apply_sampling_lag(&s, 3).unwrap();
        assert_eq!(l.samples, s.samples);
        assert_eq!(l.origin_index, 3);
        assert!(apply_sampling_lag(&s, 10).is_err());
    }

    #[test]
    fn infinite_snr_is_identity_and_seed_is_deterministic() {
        let s = ramp(64);
        assert_eq!(add_awgn(&s, f64::INFINITY, 1).unwrap(), s);
        let a = add_awgn(&s, 3.0, 42).unwrap();
        let b = add_awgn(&s, 3.0, 42).unwrap();
        let c = add_awgn(&s, 3.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_power_rejected() {
        let s = SampleStream::new(vec![Complex64::new(0.0, 0.0); 8], 1.0);
        assert!(matches!(add_awgn(&s, 10.0, 0), Err(Error::ZeroSignalPower)));
        assert!(add_awgn(&s, f64::INFINITY, 0).is_ok());
    }

    #[test]
    fn noise_statistics_at_zero_db() {
        let n = 1_000_000;
        let s = SampleStream::new(vec![Complex64::new(1.0, 0.0); n], 1.0);
        let noisy = add_awgn(&s, 0.0, 7).unwrap();
        let noise: Vec<Complex64> = noisy.samples.iter().map(|x| x - 1.0).collect();
        let nf = n as f64;
        let power = noise.iter().map(|z| z.norm_sqr()).sum::<f64>() / nf;
        assert!((power - 1.0).abs() < 0.01, "power {power}");
        let mean: Complex64 = noise.iter().sum::<Complex64>() / nf;
        let sigma = 1.0;
        assert!(mean.norm() < 4.0 * sigma / nf.sqrt());
        let var_re = noise.iter().map(|z| z.re * z.re).sum::<f64>() / nf;
        let var_im = noise.iter().map(|z| z.im * z.im).sum::<f64>() / nf;
        assert!((var_re - 0.5).abs() < 0.01);
        assert!((var_im - 0.5).abs() < 0.01);
    }
}
