use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use dvbt_core::channel::{ChannelSpec, OffsetDirection};
use dvbt_core::harness::{required_snr, sweep_into, write_required_snr_csv, EstimatorMode, ExperimentSpec};
use dvbt_core::qam::demap_qam4;
use dvbt_core::rx::{write_constellation_csv, OfdmDemodulator};
use dvbt_core::sync::{cp_timing_metric, estimate_offset, estimate_timing, TimingEstimate};
use dvbt_core::tx::{random_bits, OfdmModulator, QamSymbolBlock};
use dvbt_core::{DvbtConfig, Error, SampleStream};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::settings::{run_table, sweep_table};
use crate::CommonArgs;

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config_path: Option<String>,
    out_dir: String,
    seed: u64,
    tool_version: &'static str,
    timestamp_unix_s: u64,
    /// Merged file + flag settings, replayable with `--config`.
    resolved_config: &'static str,
}

const RESOLVED_CONFIG: &str = "resolved_config.toml";

pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::UnknownKey(_)
            | Error::InvalidConfig(_)
            | Error::InvalidSpec(_)
            | Error::InvalidGuardFraction(_)
            | Error::Toml(_),
        ) => 2,
        _ => 1,
    }
}

fn timestamp() -> u64 {
    // SOURCE_DATE_EPOCH pins the manifest for byte-reproducible reruns
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
}

fn prepare_out(common: &CommonArgs, command: &str, seed: u64, table: &toml::Table) -> Result<()> {
    let out = &common.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(RESOLVED_CONFIG), toml::to_string(table)?)?;
    let manifest = RunManifest {
        command: command.to_string(),
        config_path: common.config.as_ref().map(|p| p.display().to_string()),
        out_dir: out.display().to_string(),
        seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp_unix_s: timestamp(),
        resolved_config: RESOLVED_CONFIG,
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

fn table_str<'a>(table: &'a toml::Table, key: &str) -> Result<Option<&'a str>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(Error::InvalidConfig(format!("`{key}` expects a string, got {other}")).into()),
    }
}

fn table_usize(table: &toml::Table, key: &str) -> Result<Option<usize>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::Integer(i)) if *i > 0 => Ok(Some(*i as usize)),
        Some(other) => Err(Error::InvalidConfig(format!("`{key}` expects a positive integer, got {other}")).into()),
    }
}

fn read_bits(path: &Path, capacity: usize) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut bits = Vec::new();
    for (i, ch) in text.chars().filter(|c| !c.is_whitespace()).enumerate() {
        match ch {
            '0' => bits.push(0),
            '1' => bits.push(1),
            _ => bail!(Error::InvalidConfig(format!(
                "bit file character {i} is {ch:?}, expected 0 or 1"
            ))),
        }
    }
    if bits.len() > capacity {
        bail!(Error::InvalidConfig(format!(
            "bit file holds {} bits, one frame carries {capacity}",
            bits.len()
        )));
    }
    Ok(bits)
}

fn write_bits(path: &Path, bits: &[u8]) -> Result<()> {
    let mut s: String = bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect();
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Frame plus one trailing symbol, so late windows see a following symbol.
fn transmit_with_tail(modulator: &OfdmModulator, bits: &[u8], rng: &mut ChaCha8Rng) -> Result<SampleStream> {
    let cfg = modulator.config();
    let mut stream = modulator.transmit_frame(bits, 0)?;
    let tail_bits = random_bits(rng, cfg.bits_per_symbol());
    let tail = modulator.modulate(&QamSymbolBlock::from_bits(&tail_bits, 0, 1)?)?;
    stream.samples.extend_from_slice(&tail.time);
    Ok(stream)
}

fn channel_from(table: &toml::Table, direction: Option<&str>) -> Result<ChannelSpec> {
    let mut channel = ChannelSpec::from_table(table)?;
    if let Some(d) = direction {
        channel.direction = d.parse::<OffsetDirection>()?;
    }
    Ok(channel)
}

pub fn txrx(common: &CommonArgs, bits_path: Option<&Path>, derotate_flag: bool, direction: Option<&str>) -> Result<()> {
    let table = run_table(common)?;
    let config = DvbtConfig::from_table(&table)?;
    let channel = channel_from(&table, direction)?;
    let mode: EstimatorMode = table_str(&table, "estimator_mode")?.unwrap_or("on").parse()?;
    let derotate = derotate_flag || table.get("derotate").and_then(|v| v.as_bool()).unwrap_or(false);
    let n_symbols = table_usize(&table, "n_symbols_averaged")?.unwrap_or(10);

    let capacity = config.bits_per_frame();
    let mut rng = ChaCha8Rng::seed_from_u64(channel.rng_seed);
    let input = match bits_path {
        Some(p) => read_bits(p, capacity)?,
        None => random_bits(&mut rng, capacity),
    };
    let mut frame_bits = input.clone();
    frame_bits.resize(capacity, 0);

    prepare_out(common, "txrx", channel.rng_seed, &table)?;
    let modulator = OfdmModulator::new(&config);
    let tx = transmit_with_tail(&modulator, &frame_bits, &mut rng)?;
    let rx = channel.apply(&tx)?;

    let estimate = match mode {
        EstimatorMode::Off => None,
        EstimatorMode::On => Some(estimate_timing(&rx, &config, n_symbols)?),
        EstimatorMode::Oracle => Some(TimingEstimate::known(
            channel.expected_delta(config.symbol_period()),
            config.symbol_period(),
        )),
    };
    let demodulator = OfdmDemodulator::new(&config);
    let symbols = demodulator.receive_symbols(&rx, estimate.as_ref(), derotate)?;
    let mut recovered: Vec<u8> = symbols.iter().flat_map(|s| demap_qam4(&s.carriers)).collect();
    recovered.truncate(input.len());

    let out = &common.out;
    tx.write_files(&out.join("tx_stream"))?;
    rx.write_files(&out.join("rx_stream"))?;
    write_constellation_csv(
        &config,
        &symbols,
        BufWriter::new(File::create(out.join("constellation.csv"))?),
    )?;
    write_bits(&out.join("tx_bits.txt"), &input)?;
    write_bits(&out.join("rx_bits.txt"), &recovered)?;

    let errors = input.iter().zip(&recovered).filter(|(a, b)| a != b).count();
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "bits={} errors={} ber={:e}",
        input.len(),
        errors,
        errors as f64 / input.len().max(1) as f64
    )?;
    if let Some(e) = &estimate {
        writeln!(stdout, "delta_hat={} confidence={:.6}", e.delta_hat, e.confidence)?;
    }
    Ok(())
}

pub fn metric(common: &CommonArgs, symbols: Option<usize>) -> Result<()> {
    let table = run_table(common)?;
    let config = DvbtConfig::from_table(&table)?;
    let channel = channel_from(&table, None)?;
    let n_symbols = match symbols {
        Some(n) => n,
        None => table_usize(&table, "n_symbols_averaged")?.unwrap_or(10),
    };
    if n_symbols == 0 || n_symbols >= config.symbols_per_frame {
        bail!(Error::InvalidConfig(format!(
            "averaging over {n_symbols} symbols, must be in 1..{}",
            config.symbols_per_frame
        )));
    }

    prepare_out(common, "metric", channel.rng_seed, &table)?;
    let modulator = OfdmModulator::new(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(channel.rng_seed);
    let bits = random_bits(&mut rng, config.bits_per_frame());
    let tx = transmit_with_tail(&modulator, &bits, &mut rng)?;
    let rx = channel.apply(&tx)?;

    let trace = cp_timing_metric(&rx, &config, n_symbols * config.symbol_period())?;
    trace.write_csv(BufWriter::new(File::create(common.out.join("metric.csv"))?))?;
    let est = estimate_offset(&trace, n_symbols)?;
    // peak of the period-folded average; the raw trace maximum may sit in any period
    println!(
        "peak_lag={} peak_value={:.6} trace_peak_lag={} trace_peak_value={:.6}",
        est.delta_hat, est.confidence, trace.peak_lag, trace.peak_value
    );
    Ok(())
}

pub fn sweep(common: &CommonArgs) -> Result<()> {
    let table = sweep_table(common)?;
    let spec = ExperimentSpec::from_table(&table)?;
    let modes: Vec<EstimatorMode> = match table.get("modes") {
        Some(toml::Value::Array(items)) => items
            .iter()
            .map(|v| match v.as_str() {
                Some(s) => s.parse(),
                None => Err(Error::InvalidConfig(format!(
                    "`modes` entries must be strings, got {v}"
                ))),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => bail!(Error::InvalidConfig(format!("`modes` expects an array, got {other}"))),
        None => vec![spec.estimator_mode],
    };
    if modes.is_empty() {
        bail!(Error::InvalidSpec("`modes` is empty".into()));
    }
    let target_ber = match table.get("target_ber") {
        Some(v) => v
            .as_float()
            .filter(|b| *b > 0.0 && *b < 1.0)
            .ok_or_else(|| Error::InvalidConfig(format!("`target_ber` must be in (0, 1), got {v}")))?,
        None => 1e-5,
    };
    let specs: Vec<ExperimentSpec> = modes
        .iter()
        .map(|&m| ExperimentSpec {
            estimator_mode: m,
            ..spec.clone()
        })
        .collect();
    for s in &specs {
        s.validate()?;
    }

    prepare_out(common, "sweep", spec.seed, &table)?;
    let mut writer = csv::Writer::from_writer(File::create(common.out.join("ber.csv"))?);
    let mut records = Vec::new();
    for s in &specs {
        let total = s.offsets.len() * s.snr_grid_db.len();
        let mut done = 0;
        records.extend(sweep_into(s, &mut writer, |r| {
            done += 1;
            eprintln!(
                "[{} {done}/{total}] offset={} snr_db={} bits={} errors={} ber={:e}",
                r.estimator_mode, r.offset, r.snr_db, r.bits, r.errors, r.ber
            );
        })?);
    }
    let summary = required_snr(&spec.config, &records, target_ber);
    write_required_snr_csv(&summary, File::create(common.out.join("required_snr.csv"))?)?;
    for row in &summary {
        match (row.snr_db, row.ebn0_db) {
            (Some(s), Some(e)) => println!(
                "mode={} offset={} ber={:e} snr_db={s:.3} ebn0_db={e:.3}",
                row.mode, row.timing_offset, row.ber
            ),
            _ => println!(
                "mode={} offset={} ber={:e} not bracketed by the SNR grid",
                row.mode, row.timing_offset, row.ber
            ),
        }
    }
    Ok(())
}
