//! Complex baseband sample streams and their on-disk form.
//!
//! A stream is written as two files: `<stem>.bin` holds interleaved
//! little-endian `f64` pairs `(re, im)`, and `<stem>.hdr` is a small
//! `key = value` text header with `sample_period_s`, `length` and
//! `origin_index`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{value_f64, value_usize};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub samples: Vec<Complex64>,
    pub sample_period_s: f64,
    /// Index where the receiver believes the first symbol starts.
    pub origin_index: usize,
}

impl SampleStream {
    pub fn new(samples: Vec<Complex64>, sample_period_s: f64) -> Self {
        SampleStream {
            samples,
            sample_period_s,
            origin_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples from the origin onward.
    pub fn from_origin(&self) -> &[Complex64] {
        &self.samples[self.origin_index.min(self.samples.len())..]
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 * self.sample_period_s
    }

    fn paths(stem: &Path) -> (PathBuf, PathBuf) {
        (stem.with_extension("bin"), stem.with_extension("hdr"))
    }

    pub fn header_string(&self) -> String {
        format!(
            "sample_period_s = {:?}\nlength = {}\norigin_index = {}\n",
            self.sample_period_s,
            self.samples.len(),
            self.origin_index
        )
    }

    /// Writes `<stem>.bin` and `<stem>.hdr`.
    pub fn write_files(&self, stem: &Path) -> Result<()> {
        let (bin, hdr) = Self::paths(stem);
        let mut w = BufWriter::new(fs::File::create(bin)?);
        for s in &self.samples {
            w.write_all(&s.re.to_le_bytes())?;
            w.write_all(&s.im.to_le_bytes())?;
        }
        w.flush()?;
        fs::write(hdr, self.header_string())?;
        Ok(())
    }

    pub fn read_files(stem: &Path) -> Result<Self> {
        let (bin, hdr) = Self::paths(stem);
        let header: toml::Table = fs::read_to_string(hdr)?.parse()?;
        let get = |key: &str| {
            header
                .get(key)
                .ok_or_else(|| Error::InvalidConfig(format!("stream header missing `{key}`")))
        };
        let sample_period_s = value_f64("sample_period_s", get("sample_period_s")?)?;
        let length = value_usize("length", get("length")?)?;
        let origin_index = value_usize("origin_index", get("origin_index")?)?;

        let raw = fs::read(bin)?;
        if raw.len() != length * 16 {
            return Err(Error::LengthMismatch {
                what: "stream bytes",
                expected: length * 16,
                actual: raw.len(),
            });
        }
        let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
        let samples = raw
            .chunks_exact(16)
            .map(|c| Complex64::new(f(&c[..8]), f(&c[8..])))
            .collect();
        Ok(SampleStream {
            samples,
            sample_period_s,
            origin_index,
        })
    }
}
