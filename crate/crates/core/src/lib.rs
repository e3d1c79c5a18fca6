//! DVB-T 2K OFDM baseband simulator.
//!
//! The crate covers the transmit chain ([`tx`]), an AWGN channel with
//! integer timing offsets ([`channel`]), a preamble-free cyclic-prefix
//! timing estimator ([`sync`]), the matching receiver ([`rx`]) and a
//! Monte-Carlo BER harness ([`harness`]). [`params`] holds the mode
//! numerology used by all of them.

pub mod channel;
pub mod error;
pub mod harness;
pub mod params;
pub mod passband;
pub mod qam;
pub mod rx;
pub mod stream;
pub mod sync;
pub mod tx;

pub use error::{Error, Result};
pub use params::{make_2k_config, make_8k_config, DvbtConfig, GuardFraction};
pub use stream::SampleStream;
