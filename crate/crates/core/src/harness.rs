//! Monte-Carlo BER experiments over SNR x timing-offset grids.
//!
//! Every point is replayable from `(spec, seed)`: frame `f` of a point draws
//! its payload and noise seed from ChaCha stream `f` of the point seed, and
//! frames are evaluated in fixed-size batches whose results are accumulated
//! in frame order, so the thread count never changes the output.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSpec, OffsetDirection};
use crate::error::{Error, Result};
use crate::params::{value_f64, value_i64, value_usize, DvbtConfig, CONFIG_KEYS};
use crate::rx::OfdmDemodulator;
use crate::sync::{estimate_timing, TimingEstimate};
use crate::tx::{random_bits, OfdmModulator, QamSymbolBlock};

/// Frames evaluated concurrently before the stopping rule is checked.
const FRAME_BATCH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Slice at the nominal origin, no timing correction.
    Off,
    /// Cyclic-prefix timing estimator.
    On,
    /// Ground-truth offset handed to the receiver.
    Oracle,
}

impl EstimatorMode {
    pub const ALL: [EstimatorMode; 3] = [EstimatorMode::Off, EstimatorMode::On, EstimatorMode::Oracle];
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorMode::Off => "off",
            EstimatorMode::On => "on",
            EstimatorMode::Oracle => "oracle",
        })
    }
}

impl FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(EstimatorMode::Off),
            "on" => Ok(EstimatorMode::On),
            "oracle" => Ok(EstimatorMode::Oracle),
            _ => Err(Error::InvalidSpec(format!("unknown estimator mode `{s}`"))),
        }
    }
}

impl FromStr for OffsetDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delay" => Ok(OffsetDirection::Delay),
            "advance" => Ok(OffsetDirection::Advance),
            _ => Err(Error::InvalidSpec(format!("unknown offset direction `{s}`"))),
        }
    }
}

pub const EXPERIMENT_KEYS: [&str; 10] = [
    "snr_grid_db",
    "offsets",
    "estimator_mode",
    "derotate",
    "direction",
    "n_symbols_averaged",
    "min_bits",
    "max_bits",
    "target_errors",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub config: DvbtConfig,
    /// Per-sample SNR points, dB.
    pub snr_grid_db: Vec<f64>,
    pub offsets: Vec<usize>,
    pub estimator_mode: EstimatorMode,
    /// Correct timing by per-carrier derotation instead of moving the window.
    pub derotate: bool,
    pub direction: OffsetDirection,
    /// Symbol periods averaged by the estimator.
    pub n_symbols_averaged: usize,
    pub min_bits: u64,
    pub max_bits: u64,
    pub target_errors: u64,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(config: DvbtConfig, snr_grid_db: Vec<f64>, offsets: Vec<usize>, estimator_mode: EstimatorMode) -> Self {
        ExperimentSpec {
            config,
            snr_grid_db,
            offsets,
            estimator_mode,
            derotate: false,
            direction: OffsetDirection::Delay,
            n_symbols_averaged: 10,
            min_bits: 10_000,
            max_bits: 10_000_000,
            target_errors: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidSpec(m));
        self.config.validate()?;
        if self.snr_grid_db.is_empty() {
            return fail("snr_grid_db is empty".into());
        }
        if self.offsets.is_empty() {
            return fail("offsets is empty".into());
        }
        if self.snr_grid_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return fail("snr_grid_db contains NaN or -inf".into());
        }
        if self.min_bits < 10_000 {
            return fail(format!("min_bits {} below 10000", self.min_bits));
        }
        if self.max_bits < self.min_bits {
            return fail("max_bits below min_bits".into());
        }
        if self.target_errors < 100 {
            return fail(format!("target_errors {} below 100", self.target_errors));
        }
        if self.n_symbols_averaged == 0 || self.n_symbols_averaged >= self.config.symbols_per_frame {
            return fail(format!(
                "n_symbols_averaged must be in 1..{}",
                self.config.symbols_per_frame
            ));
        }
        if let Some(o) = self.offsets.iter().find(|&&o| o >= self.config.frame_samples()) {
            return fail(format!("offset {o} exceeds one frame"));
        }
        Ok(())
    }

    /// Reads experiment keys from a parsed flat config table. Config keys
    /// build the [`DvbtConfig`]; keys of neither kind are ignored here.
    pub fn from_table(table: &toml::Table) -> Result<Self> {
        let config = DvbtConfig::from_table(table)?;
        let mut spec = ExperimentSpec::new(config, Vec::new(), Vec::new(), EstimatorMode::On);
        for (key, value) in table {
            match key.as_str() {
                "snr_grid_db" => {
                    spec.snr_grid_db = value_array(key, value)?
                        .iter()
                        .map(|v| value_f64(key, v))
                        .collect::<Result<_>>()?
                }
                "offsets" => {
                    spec.offsets = value_array(key, value)?
                        .iter()
                        .map(|v| value_usize(key, v))
                        .collect::<Result<_>>()?
                }
                "estimator_mode" => spec.estimator_mode = value_str(key, value)?.parse()?,
                "derotate" => spec.derotate = value_bool(key, value)?,
                "direction" => spec.direction = value_str(key, value)?.parse()?,
                "n_symbols_averaged" => spec.n_symbols_averaged = value_usize(key, value)?,
                "min_bits" => spec.min_bits = value_usize(key, value)? as u64,
                "max_bits" => spec.max_bits = value_usize(key, value)? as u64,
                "target_errors" => spec.target_errors = value_usize(key, value)? as u64,
                "seed" => spec.seed = value_i64(key, value)? as u64,
                _ => {}
            }
        }
        Ok(spec)
    }

    /// Parses a flat experiment file; keys outside the config and experiment
    /// sets are rejected by name.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        check_keys(&table, &[&CONFIG_KEYS, &EXPERIMENT_KEYS])?;
        let spec = Self::from_table(&table)?;
        spec.validate()?;
        Ok(spec)
    }
}

pub const CHANNEL_KEYS: [&str; 4] = ["snr_db", "timing_offset_samples", "rng_seed", "direction"];

impl ChannelSpec {
    /// Channel keys from a flat config table; absent keys give a noiseless,
    /// offset-free channel.
    pub fn from_table(table: &toml::Table) -> Result<Self> {
        let mut ch = ChannelSpec::noiseless(0);
        for (key, value) in table {
            match key.as_str() {
                "snr_db" => ch.snr_db = value_f64(key, value)?,
                "timing_offset_samples" => ch.timing_offset_samples = value_usize(key, value)?,
                "rng_seed" => ch.rng_seed = value_i64(key, value)? as u64,
                "direction" => ch.direction = value_str(key, value)?.parse()?,
                _ => {}
            }
        }
        Ok(ch)
    }
}

/// Fails on the first key not listed in any of `allowed`.
pub fn check_keys(table: &toml::Table, allowed: &[&[&str]]) -> Result<()> {
    match table
        .keys()
        .find(|k| !allowed.iter().any(|set| set.contains(&k.as_str())))
    {
        Some(k) => Err(Error::UnknownKey(k.clone())),
        None => Ok(()),
    }
}

fn value_array<'a>(key: &str, value: &'a toml::Value) -> Result<&'a Vec<toml::Value>> {
    value
        .as_array()
        .ok_or_else(|| Error::InvalidConfig(format!("`{key}` expects an array")))
}

fn value_str<'a>(key: &str, value: &'a toml::Value) -> Result<&'a str> {
    value
        .as_str()
        .ok_or_else(|| Error::InvalidConfig(format!("`{key}` expects a string")))
}

fn value_bool(key: &str, value: &toml::Value) -> Result<bool> {
    value
        .as_bool()
        .ok_or_else(|| Error::InvalidConfig(format!("`{key}` expects true or false")))
}

/// One grid point's result. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub snr_db: f64,
    pub offset: usize,
    #[serde(rename = "mode")]
    pub estimator_mode: EstimatorMode,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    /// Frames where the estimate missed the true symbol boundary.
    pub est_failures: u64,
    pub seed: u64,
}

impl BerRecord {
    /// Whether the point met its stopping rule (enough errors or the cap).
    pub fn quoted(&self, spec: &ExperimentSpec) -> bool {
        self.errors >= spec.target_errors || self.bits >= spec.max_bits
    }

    pub fn ebn0_db(&self, config: &DvbtConfig) -> f64 {
        snr_to_ebn0_db(config, self.snr_db)
    }

    /// Binomial standard deviation of the BER estimate.
    pub fn ber_std(&self) -> f64 {
        (self.ber * (1.0 - self.ber) / self.bits as f64).sqrt()
    }
}

/// dB offset between per-sample SNR and Eb/N0: bits per carrier times the
/// occupied fraction K/N of the transform.
pub fn ebn0_offset_db(config: &DvbtConfig) -> f64 {
    10.0 * (config.bits_per_carrier() as f64 * config.active_carriers as f64 / config.fft_size as f64).log10()
}

pub fn snr_to_ebn0_db(config: &DvbtConfig, snr_db: f64) -> f64 {
    snr_db - ebn0_offset_db(config)
}

pub fn ebn0_to_snr_db(config: &DvbtConfig, ebn0_db: f64) -> f64 {
    ebn0_db + ebn0_offset_db(config)
}

/// Gray-coded 4-QAM bit error probability in AWGN, ½ erfc(√(Eb/N0)).
pub fn theory_ber_qpsk(ebn0_db: f64) -> f64 {
    if ebn0_db == f64::INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(10f64.powf(ebn0_db / 10.0).sqrt())
}

/// Seed of grid point `index`.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

struct FrameOutcome {
    bits: u64,
    errors: u64,
    est_failure: bool,
}

struct PointRunner<'a> {
    spec: &'a ExperimentSpec,
    modulator: OfdmModulator,
    demodulator: OfdmDemodulator,
    snr_db: f64,
    offset: usize,
}

impl PointRunner<'_> {
    fn run_frame(&self, frame: u64, take_bits: usize) -> Result<FrameOutcome> {
        let cfg = &self.spec.config;
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(frame);
        let bits = random_bits(&mut rng, cfg.bits_per_frame());
        let mut stream = self.modulator.transmit_frame(&bits, frame as usize)?;
        // one trailing symbol so late windows see the next symbol, not silence
        let tail_bits = random_bits(&mut rng, cfg.bits_per_symbol());
        let tail = self
            .modulator
            .modulate(&QamSymbolBlock::from_bits(&tail_bits, 0, frame as usize + 1)?)?;
        stream.samples.extend_from_slice(&tail.time);

        let channel = ChannelSpec {
            snr_db: self.snr_db,
            timing_offset_samples: self.offset,
            rng_seed: rng.next_u64(),
            direction: self.spec.direction,
        };
        let received = channel.apply(&stream)?;

        let truth = channel.expected_delta(cfg.symbol_period());
        let (estimate, est_failure) = match self.spec.estimator_mode {
            EstimatorMode::Off => (None, false),
            EstimatorMode::Oracle => (Some(TimingEstimate::known(truth, cfg.symbol_period())), false),
            EstimatorMode::On => {
                let est = estimate_timing(&received, cfg, self.spec.n_symbols_averaged)?;
                let failed = est.delta_hat != truth;
                (Some(est), failed)
            }
        };
        let rx_bits = self
            .demodulator
            .receive_frame(&received, estimate.as_ref(), self.spec.derotate)?;
        let errors = bits[..take_bits].iter().zip(&rx_bits).filter(|(a, b)| a != b).count() as u64;
        Ok(FrameOutcome {
            bits: take_bits as u64,
            errors,
            est_failure,
        })
    }
}

/// Runs one grid point until `target_errors` errors or `max_bits` bits,
/// and at least `min_bits`. The last frame is truncated so that `bits`
/// never exceeds `max_bits`.
pub fn run_point(spec: &ExperimentSpec, snr_db: f64, offset: usize) -> Result<BerRecord> {
    spec.validate()?;
    let runner = PointRunner {
        spec,
        modulator: OfdmModulator::new(&spec.config),
        demodulator: OfdmDemodulator::new(&spec.config),
        snr_db,
        offset,
    };
    let frame_bits = spec.config.bits_per_frame() as u64;
    let (mut bits, mut errors, mut failures) = (0u64, 0u64, 0u64);
    let done =
        |bits: u64, errors: u64| bits >= spec.min_bits && (errors >= spec.target_errors || bits >= spec.max_bits);
    let mut next_frame = 0u64;
    'outer: loop {
        let batch: Vec<(u64, usize)> = (0..FRAME_BATCH as u64)
            .map(|i| {
                let before = bits + i * frame_bits;
                let take = frame_bits.min(spec.max_bits.saturating_sub(before));
                (next_frame + i, take as usize)
            })
            .filter(|&(_, take)| take > 0)
            .collect();
        if batch.is_empty() {
            break;
        }
        let outcomes: Vec<Result<FrameOutcome>> = batch
            .par_iter()
            .map(|&(frame, take)| runner.run_frame(frame, take))
            .collect();
        for outcome in outcomes {
            let o = outcome?;
            bits += o.bits;
            errors += o.errors;
            failures += u64::from(o.est_failure);
            next_frame += 1;
            if done(bits, errors) {
                break 'outer;
            }
        }
    }
    Ok(BerRecord {
        snr_db,
        offset,
        estimator_mode: spec.estimator_mode,
        bits,
        errors,
        ber: errors as f64 / bits as f64,
        est_failures: failures,
        seed: spec.seed,
    })
}

/// Runs the full grid (offsets outer, SNR inner), writing and flushing one
/// CSV row per completed point. On failure the rows already written stay
/// valid and the error is returned.
pub fn sweep_into<W: Write>(
    spec: &ExperimentSpec,
    out: &mut csv::Writer<W>,
    mut on_point: impl FnMut(&BerRecord),
) -> Result<Vec<BerRecord>> {
    spec.validate()?;
    let mut records = Vec::with_capacity(spec.offsets.len() * spec.snr_grid_db.len());
    let mut index = 0;
    for &offset in &spec.offsets {
        for &snr in &spec.snr_grid_db {
            let point_spec = ExperimentSpec {
                seed: point_seed(spec.seed, index),
                ..spec.clone()
            };
            index += 1;
            let rec = run_point(&point_spec, snr, offset)?;
            out.serialize(&rec)?;
            out.flush()?;
            on_point(&rec);
            records.push(rec);
        }
    }
    Ok(records)
}

pub fn sweep<W: Write>(spec: &ExperimentSpec, w: W) -> Result<Vec<BerRecord>> {
    let mut out = csv::Writer::from_writer(w);
    sweep_into(spec, &mut out, |_| {})
}

/// SNR at which one (mode, offset) curve crosses the target BER.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequiredSnr {
    pub timing_offset: usize,
    pub mode: EstimatorMode,
    pub ber: f64,
    /// Per-sample SNR; `None` when the grid does not bracket the target.
    pub snr_db: Option<f64>,
    pub ebn0_db: Option<f64>,
}

impl RequiredSnr {
    pub fn bracketed(&self) -> bool {
        self.snr_db.is_some()
    }
}

/// Interpolates log10(BER) linearly in dB between the first pair of
/// adjacent grid points that brackets `target_ber`. Results are grouped by
/// (mode, offset) in first-appearance order. No extrapolation.
pub fn required_snr(config: &DvbtConfig, records: &[BerRecord], target_ber: f64) -> Vec<RequiredSnr> {
    let mut keys: Vec<(EstimatorMode, usize)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.estimator_mode, r.offset)) {
            keys.push((r.estimator_mode, r.offset));
        }
    }
    keys.into_iter()
        .map(|(mode, offset)| {
            let mut curve: Vec<&BerRecord> = records
                .iter()
                .filter(|r| r.estimator_mode == mode && r.offset == offset)
                .collect();
            curve.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
            let snr = crossing(&curve, target_ber);
            RequiredSnr {
                timing_offset: offset,
                mode,
                ber: target_ber,
                snr_db: snr,
                ebn0_db: snr.map(|s| snr_to_ebn0_db(config, s)),
            }
        })
        .collect()
}

fn crossing(curve: &[&BerRecord], target: f64) -> Option<f64> {
    for w in curve.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.ber == target {
            return Some(a.snr_db);
        }
        if a.ber > target && b.ber <= target {
            if b.ber == target {
                return Some(b.snr_db);
            }
            if b.ber <= 0.0 || !a.snr_db.is_finite() || !b.snr_db.is_finite() {
                return None;
            }
            let (la, lb, lt) = (a.ber.log10(), b.ber.log10(), target.log10());
            return Some(a.snr_db + (lt - la) / (lb - la) * (b.snr_db - a.snr_db));
        }
    }
    match curve {
        [only] if only.ber == target => Some(only.snr_db),
        [.., last] if last.ber == target => Some(last.snr_db),
        _ => None,
    }
}

pub fn write_required_snr_csv<W: Write>(rows: &[RequiredSnr], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
