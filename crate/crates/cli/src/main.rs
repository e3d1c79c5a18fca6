//! `dvbt-sim`: transmit/receive loopback, timing-metric traces and BER sweeps.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dvbt-sim", version, about = "DVB-T 2K OFDM timing synchronization simulator")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. Flags take precedence over config-file keys.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Flat key = value config or experiment file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; every artifact is written beneath it
    #[arg(long, global = true, env = "DVBT_SIM_OUT", default_value = "dvbt-out")]
    pub out: PathBuf,
    /// Guard fraction: 1/4, 1/8, 1/16 or 1/32
    #[arg(long, global = true)]
    pub guard: Option<String>,
    /// Per-sample SNR in dB (`inf` for a noiseless channel)
    #[arg(long = "snr-db", global = true, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    /// Timing offset in samples
    #[arg(long, global = true)]
    pub offset: Option<usize>,
    /// Timing estimator mode: off, on or oracle
    #[arg(long, global = true)]
    pub mode: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one frame through transmitter, channel and receiver
    Txrx {
        /// Text file of 0/1 characters; random bits when omitted
        #[arg(long)]
        bits: Option<PathBuf>,
        /// Apply the timing estimate as a carrier phase correction
        #[arg(long)]
        derotate: bool,
        /// Offset direction: delay or advance
        #[arg(long)]
        direction: Option<String>,
    },
    /// Emit the cyclic-prefix timing metric for one received frame
    Metric {
        /// Symbol periods averaged by the estimator
        #[arg(long)]
        symbols: Option<usize>,
    },
    /// Run a BER sweep and the required-SNR summary
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Txrx {
            bits,
            derotate,
            direction,
        } => commands::txrx(&cli.common, bits.as_deref(), derotate, direction.as_deref()),
        Command::Metric { symbols } => commands::metric(&cli.common, symbols),
        Command::Sweep => commands::sweep(&cli.common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
