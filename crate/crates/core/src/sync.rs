//! Preamble-free symbol timing from the cyclic prefix.
//!
//! For every candidate lag `d` the guard-length window starting at `d` is
//! correlated against the window `N` samples later. At a true symbol start
//! the two windows are identical, so the normalized metric
//!
//! ```text
//! C(d) = sum_{m<Ng} r(d+m) conj(r(d+m+N))
//! E(d) = sum_{m<Ng} (|r(d+m)|^2 + |r(d+m+N)|^2) / 2
//! M(d) = |C(d)|^2 / E(d)^2
//! ```
//!
//! reaches 1 there and stays well below it elsewhere. Lags are counted from
//! the stream's assumed origin.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::DvbtConfig;
use crate::stream::SampleStream;

#[derive(Debug, Clone, PartialEq)]
pub struct TimingMetricTrace {
    pub lags: Vec<usize>,
    pub metric: Vec<f64>,
    pub peak_lag: usize,
    pub peak_value: f64,
    /// N + N_g; lags are folded modulo this when averaging.
    pub symbol_period: usize,
}

impl TimingMetricTrace {
    /// Builds a trace over lags `0..metric.len()` and locates its peak.
    pub fn from_metric(metric: Vec<f64>, symbol_period: usize) -> Result<Self> {
        let (peak_lag, peak_value) = argmax_first(&metric).ok_or(Error::EmptyTrace)?;
        Ok(TimingMetricTrace {
            lags: (0..metric.len()).collect(),
            metric,
            peak_lag,
            peak_value,
            symbol_period,
        })
    }

    pub fn len(&self) -> usize {
        self.metric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metric.is_empty()
    }

    /// `lag,metric` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            lag: usize,
            metric: f64,
        }
        let mut out = csv::Writer::from_writer(w);
        for (&lag, &metric) in self.lags.iter().zip(&self.metric) {
            out.serialize(Row { lag, metric })?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingEstimate {
    /// Lag of the detected symbol start, in `[0, symbol_period)`.
    pub delta_hat: usize,
    pub confidence: f64,
    pub trace: TimingMetricTrace,
}

impl TimingEstimate {
    /// An estimate carrying a known offset, with an empty trace.
    pub fn known(delta_hat: usize, symbol_period: usize) -> Self {
        TimingEstimate {
            delta_hat,
            confidence: 1.0,
            trace: TimingMetricTrace {
                lags: Vec::new(),
                metric: Vec::new(),
                peak_lag: delta_hat,
                peak_value: 1.0,
                symbol_period,
            },
        }
    }

    pub fn symbol_period(&self) -> usize {
        self.trace.symbol_period
    }

    /// Offset of the detected boundary folded into `(-P/2, P/2]`; negative
    /// means the true symbol start lies before the assumed origin.
    pub fn signed_offset(&self) -> i64 {
        let p = self.symbol_period() as i64;
        let d = self.delta_hat as i64;
        if p > 0 && d > p / 2 {
            d - p
        } else {
            d
        }
    }
}

fn argmax_first(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// Metric at a single lag `d` of `r` (absolute index).
fn metric_at(r: &[Complex64], d: usize, n: usize, ng: usize) -> f64 {
    let mut corr = Complex64::new(0.0, 0.0);
    let mut energy = 0.0;
    for m in 0..ng {
        let a = r[d + m];
        let b = r[d + m + n];
        corr += a * b.conj();
        energy += 0.5 * (a.norm_sqr() + b.norm_sqr());
    }
    if energy == 0.0 {
        0.0
    } else {
        (corr.norm_sqr() / (energy * energy)).min(1.0)
    }
}

/// Sliding cyclic-prefix correlation over lags `0..search_span` from the
/// stream origin.
///
/// Each lag is summed independently in a fixed order, so the result does not
/// depend on how the lags are split across threads.
pub fn cp_timing_metric(received: &SampleStream, config: &DvbtConfig, search_span: usize) -> Result<TimingMetricTrace> {
    let (n, ng) = (config.fft_size, config.guard_samples);
    let r = received.from_origin();
    let needed = search_span + n + ng;
    if r.len() < needed || search_span == 0 {
        return Err(Error::InsufficientSamples {
            needed,
            available: r.len(),
        });
    }
    let metric: Vec<f64> = (0..search_span)
        .into_par_iter()
        .map(|d| metric_at(r, d, n, ng))
        .collect();
    TimingMetricTrace::from_metric(metric, config.symbol_period())
}

/// Folds the trace modulo the symbol period over `n_symbols_averaged`
/// periods, averages, and takes the first maximum.
pub fn estimate_offset(trace: &TimingMetricTrace, n_symbols_averaged: usize) -> Result<TimingEstimate> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let p = trace.symbol_period.min(trace.len());
    let s = n_symbols_averaged.max(1);
    if trace.len() < s * p {
        return Err(Error::InsufficientSamples {
            needed: s * p,
            available: trace.len(),
        });
    }
    let averaged: Vec<f64> = (0..p)
        .map(|j| (0..s).map(|i| trace.metric[j + i * p]).sum::<f64>() / s as f64)
        .collect();
    let (delta_hat, confidence) = argmax_first(&averaged).ok_or(Error::EmptyTrace)?;
    Ok(TimingEstimate {
        delta_hat,
        confidence,
        trace: trace.clone(),
    })
}

/// Computes the metric over `n_symbols` symbol periods and estimates the
/// symbol start.
pub fn estimate_timing(received: &SampleStream, config: &DvbtConfig, n_symbols: usize) -> Result<TimingEstimate> {
    let trace = cp_timing_metric(received, config, n_symbols * config.symbol_period())?;
    estimate_offset(&trace, n_symbols)
}

/// Rotation of carrier `k_prime` when the FFT window starts `offset` samples
/// after the symbol's useful part: 2 pi k' offset / N. Early windows take
/// negative offsets.
pub fn phase_rotation(config: &DvbtConfig, offset: i64, k_prime: i64) -> f64 {
    2.0 * PI * k_prime as f64 * offset as f64 / config.fft_size as f64
}

/// Moves the stream origin onto the detected symbol boundary.
///
/// Of the boundaries `origin + delta_hat - j P`, the one nearest the assumed
/// origin that still lies inside the stream is taken.
pub fn correct_timing(received: &SampleStream, estimate: &TimingEstimate) -> Result<SampleStream> {
    if estimate.delta_hat >= received.len() {
        return Err(Error::OffsetOutOfRange {
            offset: estimate.delta_hat,
            len: received.len(),
        });
    }
    let origin = received.origin_index as i64;
    let near = origin + estimate.signed_offset();
    let new_origin = if near >= 0 {
        near
    } else {
        origin + estimate.delta_hat as i64
    };
    if new_origin as usize >= received.len() {
        return Err(Error::OffsetOutOfRange {
            offset: estimate.delta_hat,
            len: received.len(),
        });
    }
    Ok(SampleStream {
        origin_index: new_origin as usize,
        ..received.clone()
    })
}
