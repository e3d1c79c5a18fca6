//! Transmit chain: bits, 4-QAM carriers, unitary inverse DFT, cyclic
//! prefix, frame serialization.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::params::DvbtConfig;
use crate::qam::map_bits_qam4;
use crate::stream::SampleStream;

/// Complex carrier values of one OFDM symbol, in carrier order k_min..=k_max.
#[derive(Debug, Clone, PartialEq)]
pub struct QamSymbolBlock {
    pub carriers: Vec<Complex64>,
    pub symbol_index_l: usize,
    pub frame_index_m: usize,
}

impl QamSymbolBlock {
    pub fn new(carriers: Vec<Complex64>, symbol_index_l: usize, frame_index_m: usize) -> Self {
        QamSymbolBlock {
            carriers,
            symbol_index_l,
            frame_index_m,
        }
    }

    pub fn from_bits(bits: &[u8], symbol_index_l: usize, frame_index_m: usize) -> Result<Self> {
        Ok(Self::new(map_bits_qam4(bits)?, symbol_index_l, frame_index_m))
    }

    pub fn mean_power(&self) -> f64 {
        self.carriers.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.carriers.len() as f64
    }
}

/// One modulated symbol: the full N-bin spectrum and N + N_g time samples
/// with the cyclic prefix in front.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmSymbol {
    pub freq: Vec<Complex64>,
    pub time: Vec<Complex64>,
}

impl OfdmSymbol {
    /// Time samples after the cyclic prefix.
    pub fn useful(&self) -> &[Complex64] {
        let ng = self.time.len() - self.freq.len();
        &self.time[ng..]
    }
}

/// Reusable modulator holding an inverse transform plan for one config.
pub struct OfdmModulator {
    config: DvbtConfig,
    ifft: Arc<dyn Fft<f64>>,
    bins: Vec<usize>,
}

impl OfdmModulator {
    pub fn new(config: &DvbtConfig) -> Self {
        let ifft = FftPlanner::new().plan_fft_inverse(config.fft_size);
        OfdmModulator {
            config: *config,
            ifft,
            bins: config.active_bins(),
        }
    }

    pub fn config(&self) -> &DvbtConfig {
        &self.config
    }

    pub fn modulate(&self, block: &QamSymbolBlock) -> Result<OfdmSymbol> {
        let n = self.config.fft_size;
        let ng = self.config.guard_samples;
        if block.carriers.len() != self.config.active_carriers {
            return Err(Error::LengthMismatch {
                what: "carriers",
                expected: self.config.active_carriers,
                actual: block.carriers.len(),
            });
        }
        let mut freq = vec![Complex64::new(0.0, 0.0); n];
        for (&bin, &c) in self.bins.iter().zip(&block.carriers) {
            freq[bin] = c;
        }
        let mut useful = freq.clone();
        self.ifft.process(&mut useful);
        let scale = 1.0 / (n as f64).sqrt();
        useful.iter_mut().for_each(|x| *x *= scale);

        let mut time = Vec::with_capacity(n + ng);
        time.extend_from_slice(&useful[n - ng..]);
        time.extend_from_slice(&useful);
        Ok(OfdmSymbol { freq, time })
    }

    /// Maps one frame's worth of bits and modulates every symbol.
    pub fn modulate_frame_bits(&self, bits: &[u8], frame_index_m: usize) -> Result<Vec<OfdmSymbol>> {
        let per_symbol = self.config.bits_per_symbol();
        if bits.len() != self.config.bits_per_frame() {
            return Err(Error::LengthMismatch {
                what: "frame bits",
                expected: self.config.bits_per_frame(),
                actual: bits.len(),
            });
        }
        bits.chunks_exact(per_symbol)
            .enumerate()
            .map(|(l, chunk)| self.modulate(&QamSymbolBlock::from_bits(chunk, l, frame_index_m)?))
            .collect()
    }

    /// Bits to a serialized baseband frame.
    pub fn transmit_frame(&self, bits: &[u8], frame_index_m: usize) -> Result<SampleStream> {
        let symbols = self.modulate_frame_bits(bits, frame_index_m)?;
        serialize_frame(&self.config, &symbols)
    }
}

/// One-shot form of [`OfdmModulator::modulate`].
pub fn modulate_symbol(config: &DvbtConfig, block: &QamSymbolBlock) -> Result<OfdmSymbol> {
    OfdmModulator::new(config).modulate(block)
}

/// Concatenates exactly one frame of symbols in symbol order.
pub fn serialize_frame(config: &DvbtConfig, symbols: &[OfdmSymbol]) -> Result<SampleStream> {
    if symbols.len() != config.symbols_per_frame {
        return Err(Error::LengthMismatch {
            what: "symbols per frame",
            expected: config.symbols_per_frame,
            actual: symbols.len(),
        });
    }
    let mut samples = Vec::with_capacity(config.frame_samples());
    for s in symbols {
        if s.time.len() != config.symbol_period() {
            return Err(Error::LengthMismatch {
                what: "symbol samples",
                expected: config.symbol_period(),
                actual: s.time.len(),
            });
        }
        samples.extend_from_slice(&s.time);
    }
    Ok(SampleStream::new(samples, config.elementary_period_s))
}

pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{make_2k_config, GuardFraction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> DvbtConfig {
        make_2k_config(GuardFraction::Quarter)
    }

    #[test]
    fn dc_impulse_gives_flat_useful_part() {
        let c = cfg();
        let mut carriers = vec![Complex64::new(0.0, 0.0); c.active_carriers];
        carriers[852] = Complex64::new(1.0, 0.0);
        let sym = modulate_symbol(&c, &QamSymbolBlock::new(carriers, 0, 0)).unwrap();
        let level = 1.0 / (c.fft_size as f64).sqrt();
        for x in &sym.time {
            assert!((x - Complex64::new(level, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_block_gives_zero_samples() {
        let c = cfg();
        let carriers = vec![Complex64::new(0.0, 0.0); c.active_carriers];
        let sym = modulate_symbol(&c, &QamSymbolBlock::new(carriers, 0, 0)).unwrap();
        assert_eq!(sym.time.len(), 2560);
        assert!(sym.time.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn cyclic_prefix_copies_tail() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits = random_bits(&mut rng, c.bits_per_symbol());
        let sym = modulate_symbol(&c, &QamSymbolBlock::from_bits(&bits, 0, 0).unwrap()).unwrap();
        let (n, ng) = (c.fft_size, c.guard_samples);
        assert_eq!(sym.time[..ng], sym.time[n..n + ng]);
    }

    #[test]
    fn wrong_block_length() {
        let c = cfg();
        let err = modulate_symbol(&c, &QamSymbolBlock::new(vec![Complex64::new(1.0, 0.0); 10], 0, 0));
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn frame_length_and_duration() {
        let c = cfg();
        let m = OfdmModulator::new(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits = random_bits(&mut rng, c.bits_per_frame());
        let symbols = m.modulate_frame_bits(&bits, 0).unwrap();
        let stream = serialize_frame(&c, &symbols).unwrap();
        assert_eq!(stream.len(), 174_080);
        assert_eq!(stream.sample_period_s, c.elementary_period_s);
        assert!((stream.duration_s() - 19.04e-3).abs() < 1e-12);
        assert!((c.frame_duration_s() - 19.04e-3).abs() < 1e-12);
        assert!(matches!(
            serialize_frame(&c, &symbols[..67]),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
