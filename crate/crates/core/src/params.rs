//! DVB-T numerology.
//!
//! [`DvbtConfig`] holds the 2K-mode parameter table together with the
//! quantities derived from it (guard length in samples, symbol duration,
//! carrier-to-bin layout). Every other module reads its dimensions from here.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard interval as a fraction of the useful symbol duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GuardFraction {
    Quarter,
    Eighth,
    Sixteenth,
    ThirtySecond,
}

impl GuardFraction {
    pub const ALL: [GuardFraction; 4] = [
        GuardFraction::Quarter,
        GuardFraction::Eighth,
        GuardFraction::Sixteenth,
        GuardFraction::ThirtySecond,
    ];

    pub fn denominator(self) -> usize {
        match self {
            GuardFraction::Quarter => 4,
            GuardFraction::Eighth => 8,
            GuardFraction::Sixteenth => 16,
            GuardFraction::ThirtySecond => 32,
        }
    }

    pub fn as_f64(self) -> f64 {
        1.0 / self.denominator() as f64
    }
}

impl fmt::Display for GuardFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "1/{}", self.denominator())
    }
}

impl FromStr for GuardFraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace(' ', "").as_str() {
            "1/4" => Ok(GuardFraction::Quarter),
            "1/8" => Ok(GuardFraction::Eighth),
            "1/16" => Ok(GuardFraction::Sixteenth),
            "1/32" => Ok(GuardFraction::ThirtySecond),
            _ => Err(Error::InvalidGuardFraction(s.to_string())),
        }
    }
}

impl TryFrom<String> for GuardFraction {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GuardFraction> for String {
    fn from(g: GuardFraction) -> String {
        g.to_string()
    }
}

/// Complete OFDM parameter record for one DVB-T transmission mode.
///
/// Durations are in seconds and frequencies in Hz. The record is plain data
/// and is `Copy`; [`DvbtConfig::validate`] checks the cross-field invariants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DvbtConfig {
    /// Elementary period T, also the baseband sample period.
    pub elementary_period_s: f64,
    /// Transform length N.
    pub fft_size: usize,
    /// Number of transmitted carriers K.
    pub active_carriers: usize,
    pub k_min: i64,
    pub k_max: i64,
    /// Useful symbol duration T_U.
    pub useful_duration_s: f64,
    /// Exact 1/T_U (about 4464 Hz in 2K mode).
    pub carrier_spacing_hz: f64,
    pub guard_fraction: GuardFraction,
    /// N_g = guard_fraction * N.
    pub guard_samples: usize,
    /// T_s = Δ + T_U.
    pub symbol_duration_s: f64,
    pub symbols_per_frame: usize,
    pub frames_per_superframe: usize,
    pub constellation_order: usize,
}

/// Field names as they appear in configuration files.
pub const CONFIG_KEYS: [&str; 13] = [
    "elementary_period_s",
    "fft_size",
    "active_carriers",
    "k_min",
    "k_max",
    "useful_duration_s",
    "carrier_spacing_hz",
    "guard_fraction",
    "guard_samples",
    "symbol_duration_s",
    "symbols_per_frame",
    "frames_per_superframe",
    "constellation_order",
];

const SYMBOLS_PER_FRAME: usize = 68;
const FRAMES_PER_SUPERFRAME: usize = 4;
const ELEMENTARY_PERIOD_S: f64 = 7.0 / 64.0 * 1e-6;

fn make_config(fft_size: usize, active_carriers: usize, guard: GuardFraction) -> DvbtConfig {
    let useful_duration_s = fft_size as f64 * ELEMENTARY_PERIOD_S;
    DvbtConfig {
        elementary_period_s: ELEMENTARY_PERIOD_S,
        fft_size,
        active_carriers,
        k_min: 0,
        k_max: active_carriers as i64 - 1,
        useful_duration_s,
        carrier_spacing_hz: 1.0 / useful_duration_s,
        guard_fraction: guard,
        guard_samples: fft_size / guard.denominator(),
        symbol_duration_s: useful_duration_s * (1.0 + guard.as_f64()),
        symbols_per_frame: SYMBOLS_PER_FRAME,
        frames_per_superframe: FRAMES_PER_SUPERFRAME,
        constellation_order: 4,
    }
}

/// 2K mode: 1705 carriers on a 2048-point transform, T_U = 224 µs.
pub fn make_2k_config(guard: GuardFraction) -> DvbtConfig {
    make_config(2048, 1705, guard)
}

/// 8K mode: 6817 carriers on an 8192-point transform.
///
/// Provided for completeness of the schema; the simulator is exercised in
/// 2K mode only.
pub fn make_8k_config(guard: GuardFraction) -> DvbtConfig {
    make_config(8192, 6817, guard)
}

/// Parses a guard fraction string and builds the matching 2K configuration.
pub fn make_2k_config_str(guard: &str) -> Result<DvbtConfig> {
    Ok(make_2k_config(guard.parse()?))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

impl Default for DvbtConfig {
    fn default() -> Self {
        make_2k_config(GuardFraction::Quarter)
    }
}

impl DvbtConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.fft_size == 0 || self.active_carriers == 0 {
            return fail("fft_size and active_carriers must be positive".into());
        }
        if !(self.elementary_period_s > 0.0 && self.elementary_period_s.is_finite()) {
            return fail("elementary_period_s must be positive".into());
        }
        if self.k_max - self.k_min + 1 != self.active_carriers as i64 {
            return fail(format!(
                "k_max - k_min + 1 = {} but active_carriers = {}",
                self.k_max - self.k_min + 1,
                self.active_carriers
            ));
        }
        if self.active_carriers > self.fft_size {
            return fail(format!(
                "active_carriers {} exceeds fft_size {}",
                self.active_carriers, self.fft_size
            ));
        }
        // centered layout needs an integer center carrier
        if (self.k_max + self.k_min) % 2 != 0 {
            return fail("k_min + k_max must be even".into());
        }
        if !self.fft_size.is_multiple_of(self.guard_fraction.denominator())
            || self.guard_samples * self.guard_fraction.denominator() != self.fft_size
        {
            return fail(format!(
                "guard_samples {} != {} x {}",
                self.guard_samples, self.guard_fraction, self.fft_size
            ));
        }
        if !rel_close(
            self.useful_duration_s,
            self.fft_size as f64 * self.elementary_period_s,
            1e-12,
        ) {
            return fail("useful_duration_s != fft_size x elementary_period_s".into());
        }
        if !rel_close(self.carrier_spacing_hz * self.useful_duration_s, 1.0, 1e-12) {
            return fail("carrier_spacing_hz x useful_duration_s != 1".into());
        }
        if !rel_close(
            self.symbol_duration_s,
            self.useful_duration_s * (1.0 + self.guard_fraction.as_f64()),
            1e-12,
        ) {
            return fail("symbol_duration_s != useful_duration_s x (1 + guard_fraction)".into());
        }
        if self.symbols_per_frame == 0 || self.frames_per_superframe == 0 {
            return fail("frame structure counts must be positive".into());
        }
        if self.constellation_order != 4 {
            return fail(format!(
                "constellation_order {} unsupported (only 4-QAM)",
                self.constellation_order
            ));
        }
        Ok(())
    }

    /// Samples per OFDM symbol including the cyclic prefix, N + N_g.
    pub fn symbol_period(&self) -> usize {
        self.fft_size + self.guard_samples
    }

    pub fn frame_samples(&self) -> usize {
        self.symbols_per_frame * self.symbol_period()
    }

    /// Guard interval duration Δ.
    pub fn guard_duration_s(&self) -> f64 {
        self.useful_duration_s * self.guard_fraction.as_f64()
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.symbols_per_frame as f64 * self.symbol_duration_s
    }

    /// Spacing between the outermost carriers, (K - 1) / T_U.
    pub fn carrier_span_hz(&self) -> f64 {
        (self.active_carriers - 1) as f64 * self.carrier_spacing_hz
    }

    /// Occupied bandwidth K / T_U.
    pub fn bandwidth_hz(&self) -> f64 {
        self.active_carriers as f64 * self.carrier_spacing_hz
    }

    pub fn bits_per_carrier(&self) -> usize {
        self.constellation_order.trailing_zeros() as usize
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.active_carriers * self.bits_per_carrier()
    }

    pub fn bits_per_frame(&self) -> usize {
        self.symbols_per_frame * self.bits_per_symbol()
    }

    /// Carrier index relative to the band center, k' = k - (k_max + k_min) / 2.
    pub fn relative_index(&self, k: i64) -> Result<i64> {
        if k < self.k_min || k > self.k_max {
            return Err(Error::CarrierOutOfRange {
                k,
                k_min: self.k_min,
                k_max: self.k_max,
            });
        }
        Ok(k - (self.k_max + self.k_min) / 2)
    }

    /// DFT bin carrying carrier `k`. The center carrier sits on DC and
    /// negative k' wraps to the upper half of the transform.
    pub fn carrier_to_bin(&self, k: i64) -> Result<usize> {
        let kp = self.relative_index(k)?;
        Ok(kp.rem_euclid(self.fft_size as i64) as usize)
    }

    /// Inverse of [`carrier_to_bin`](Self::carrier_to_bin); `None` for null bins.
    pub fn bin_to_carrier(&self, bin: usize) -> Option<i64> {
        if bin >= self.fft_size {
            return None;
        }
        let n = self.fft_size as i64;
        let half = (self.active_carriers as i64 - 1) / 2;
        let kp = if (bin as i64) <= half {
            bin as i64
        } else {
            bin as i64 - n
        };
        if kp < -half || kp > half {
            return None;
        }
        Some(kp + (self.k_max + self.k_min) / 2)
    }

    /// Bins of all active carriers in carrier order k_min..=k_max.
    pub fn active_bins(&self) -> Vec<usize> {
        let n = self.fft_size as i64;
        let center = (self.k_max + self.k_min) / 2;
        (self.k_min..=self.k_max)
            .map(|k| (k - center).rem_euclid(n) as usize)
            .collect()
    }

    /// Relative indices k' of all active carriers in carrier order.
    pub fn relative_indices(&self) -> Vec<i64> {
        let center = (self.k_max + self.k_min) / 2;
        (self.k_min..=self.k_max).map(|k| k - center).collect()
    }

    /// Flat `key = value` rendering with SI units; round-trips through
    /// [`from_config_str`](Self::from_config_str).
    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("flat record serializes")
    }

    /// Parses a flat key/value configuration.
    ///
    /// Missing keys are filled from the 2K configuration for the given (or
    /// default 1/4) guard fraction; unknown keys are rejected by name.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        if let Some(key) = table.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(Error::UnknownKey(key.clone()));
        }
        Self::from_table(&table)
    }

    /// Builds a configuration from the config keys in `table`, ignoring any
    /// other keys.
    pub fn from_table(table: &toml::Table) -> Result<Self> {
        let guard = match table.get("guard_fraction") {
            Some(v) => parse_guard(v)?,
            None => GuardFraction::Quarter,
        };
        let mut cfg = make_2k_config(guard);
        for (key, value) in table {
            cfg.set_field(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set_field(&mut self, key: &str, value: &toml::Value) -> Result<bool> {
        match key {
            "elementary_period_s" => self.elementary_period_s = value_f64(key, value)?,
            "fft_size" => self.fft_size = value_usize(key, value)?,
            "active_carriers" => self.active_carriers = value_usize(key, value)?,
            "k_min" => self.k_min = value_i64(key, value)?,
            "k_max" => self.k_max = value_i64(key, value)?,
            "useful_duration_s" => self.useful_duration_s = value_f64(key, value)?,
            "carrier_spacing_hz" => self.carrier_spacing_hz = value_f64(key, value)?,
            "guard_fraction" => self.guard_fraction = parse_guard(value)?,
            "guard_samples" => self.guard_samples = value_usize(key, value)?,
            "symbol_duration_s" => self.symbol_duration_s = value_f64(key, value)?,
            "symbols_per_frame" => self.symbols_per_frame = value_usize(key, value)?,
            "frames_per_superframe" => self.frames_per_superframe = value_usize(key, value)?,
            "constellation_order" => self.constellation_order = value_usize(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn parse_guard(value: &toml::Value) -> Result<GuardFraction> {
    match value {
        toml::Value::String(s) => s.parse(),
        other => Err(Error::InvalidGuardFraction(other.to_string())),
    }
}

pub(crate) fn value_f64(key: &str, value: &toml::Value) -> Result<f64> {
    match value {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(Error::InvalidConfig(format!("`{key}` expects a number, got {other}"))),
    }
}

pub(crate) fn value_i64(key: &str, value: &toml::Value) -> Result<i64> {
    match value {
        toml::Value::Integer(i) => Ok(*i),
        other => Err(Error::InvalidConfig(format!("`{key}` expects an integer, got {other}"))),
    }
}

pub(crate) fn value_usize(key: &str, value: &toml::Value) -> Result<usize> {
    let v = value_i64(key, value)?;
    usize::try_from(v).map_err(|_| Error::InvalidConfig(format!("`{key}` must be non-negative, got {v}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_rows() {
        let q = make_2k_config(GuardFraction::Quarter);
        assert_eq!(q.guard_samples, 512);
        assert!((q.guard_duration_s() - 56e-6).abs() < 1e-15);
        assert!((q.symbol_duration_s - 280e-6).abs() < 1e-15);

        let t = make_2k_config(GuardFraction::ThirtySecond);
        assert_eq!(t.guard_samples, 64);
        assert!((t.guard_duration_s() - 7e-6).abs() < 1e-15);
        assert!((t.symbol_duration_s - 231e-6).abs() < 1e-15);
    }

    #[test]
    fn rejects_unlisted_guard() {
        assert!(matches!(
            "1/3".parse::<GuardFraction>(),
            Err(Error::InvalidGuardFraction(_))
        ));
        assert!(make_2k_config_str("1/2").is_err());
        assert!(make_2k_config_str("1/16").is_ok());
    }

    #[test]
    fn bin_mapping_examples() {
        let c = make_2k_config(GuardFraction::Quarter);
        assert_eq!(c.carrier_to_bin(852).unwrap(), 0);
        assert_eq!(c.carrier_to_bin(1704).unwrap(), 852);
        assert_eq!(c.carrier_to_bin(0).unwrap(), 1196);
        assert!(matches!(c.carrier_to_bin(1705), Err(Error::CarrierOutOfRange { .. })));
        assert!(c.carrier_to_bin(-1).is_err());
    }

    #[test]
    fn bin_mapping_is_injective_with_343_nulls() {
        let c = make_2k_config(GuardFraction::Eighth);
        let bins = c.active_bins();
        let mut used = vec![false; c.fft_size];
        for &b in &bins {
            assert!(!used[b]);
            used[b] = true;
        }
        assert_eq!(used.iter().filter(|u| !**u).count(), 343);
        for k in c.k_min..=c.k_max {
            assert_eq!(c.bin_to_carrier(c.carrier_to_bin(k).unwrap()), Some(k));
        }
        for (b, u) in used.iter().enumerate() {
            assert_eq!(c.bin_to_carrier(b).is_some(), *u);
        }
    }

    #[test]
    fn config_text_round_trip() {
        for g in GuardFraction::ALL {
            let c = make_2k_config(g);
            let text = c.to_config_string();
            assert!(text.contains("guard_fraction = \""));
            assert_eq!(DvbtConfig::from_config_str(&text).unwrap(), c);
        }
    }

    #[test]
    fn partial_config_and_unknown_key() {
        let c = DvbtConfig::from_config_str("guard_fraction = \"1/8\"\n").unwrap();
        assert_eq!(c, make_2k_config(GuardFraction::Eighth));
        match DvbtConfig::from_config_str("fft_sise = 2048\n") {
            Err(Error::UnknownKey(k)) => assert_eq!(k, "fft_sise"),
            other => panic!("unexpected {other:?}"),
        }
        // inconsistent override fails validation
        assert!(DvbtConfig::from_config_str("guard_samples = 100\n").is_err());
    }

    #[test]
    fn eight_k_layout() {
        let c = make_8k_config(GuardFraction::Quarter);
        assert_eq!(c.guard_samples, 2048);
        assert_eq!(c.carrier_to_bin(3408).unwrap(), 0);
        c.validate().unwrap();
    }
}
