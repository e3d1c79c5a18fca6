//! Config-file loading and flag overrides.

use std::fs;

use anyhow::{Context, Result};
use dvbt_core::harness::{check_keys, CHANNEL_KEYS, EXPERIMENT_KEYS};
use dvbt_core::params::CONFIG_KEYS;

use crate::CommonArgs;

/// Keys accepted by `txrx` and `metric` beyond the config and channel keys.
pub const RUN_KEYS: [&str; 3] = ["estimator_mode", "derotate", "n_symbols_averaged"];
/// Keys accepted by `sweep` beyond the config and experiment keys.
pub const SWEEP_KEYS: [&str; 2] = ["modes", "target_ber"];

/// Reads the config file (if any), rejects unknown keys, then layers the
/// command-line flags on top.
pub fn load_table(common: &CommonArgs, extra: &[&[&str]]) -> Result<toml::Table> {
    let mut table = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let table: toml::Table = text.parse().map_err(dvbt_core::Error::from)?;
            let mut allowed: Vec<&[&str]> = vec![&CONFIG_KEYS];
            allowed.extend_from_slice(extra);
            check_keys(&table, &allowed)?;
            table
        }
        None => toml::Table::new(),
    };
    if let Some(g) = &common.guard {
        table.insert("guard_fraction".into(), toml::Value::String(g.clone()));
    }
    if let Some(m) = &common.mode {
        table.insert("estimator_mode".into(), toml::Value::String(m.clone()));
        table.remove("modes");
    }
    Ok(table)
}

pub fn run_table(common: &CommonArgs) -> Result<toml::Table> {
    let mut table = load_table(common, &[&CHANNEL_KEYS, &RUN_KEYS])?;
    if let Some(s) = common.snr_db {
        table.insert("snr_db".into(), toml::Value::Float(s));
    }
    if let Some(o) = common.offset {
        table.insert("timing_offset_samples".into(), toml::Value::Integer(o as i64));
    }
    if let Some(seed) = common.seed {
        table.insert("rng_seed".into(), toml::Value::Integer(seed as i64));
    }
    Ok(table)
}

pub fn sweep_table(common: &CommonArgs) -> Result<toml::Table> {
    let mut table = load_table(common, &[&EXPERIMENT_KEYS, &SWEEP_KEYS])?;
    if let Some(s) = common.snr_db {
        table.insert("snr_grid_db".into(), toml::Value::Array(vec![toml::Value::Float(s)]));
    }
    if let Some(o) = common.offset {
        table.insert(
            "offsets".into(),
            toml::Value::Array(vec![toml::Value::Integer(o as i64)]),
        );
    }
    if let Some(seed) = common.seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    Ok(table)
}
