use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("guard fraction `{0}` is not one of 1/4, 1/8, 1/16, 1/32")]
    InvalidGuardFraction(String),

    #[error("carrier index {k} outside [{k_min}, {k_max}]")]
    CarrierOutOfRange { k: i64, k_min: i64, k_max: i64 },

    #[error("bit sequence has odd length {0}")]
    OddBitCount(usize),

    #[error("bit value {0} at position {1} is not 0 or 1")]
    InvalidBit(u8, usize),

    #[error("expected {expected} {what}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("timing offset {offset} out of range for stream of {len} samples")]
    OffsetOutOfRange { offset: usize, len: usize },

    #[error("need {needed} samples from the origin, stream has {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("timing metric trace is empty")]
    EmptyTrace,

    #[error("sample rate {sample_rate_hz} Hz cannot carry a signal up to {highest_hz} Hz")]
    NyquistViolation { sample_rate_hz: f64, highest_hz: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),

    #[error("signal power is zero, SNR is undefined")]
    ZeroSignalPower,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}
