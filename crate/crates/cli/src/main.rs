//! `treegibbs` command-line front end.

mod commands;
mod output;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use treegibbs::{Error, Pairing};

#[derive(Parser, Debug)]
#[command(name = "treegibbs", version, about = "Localized Gibbs measures and gradient Gibbs measures on regular trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairingArg {
    Half,
    One,
}

impl From<PairingArg> for Pairing {
    fn from(p: PairingArg) -> Self {
        match p {
            PairingArg::Half => Pairing::HalfNorm,
            PairingArg::One => Pairing::OneNorm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    Gibbs,
    Ggm,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// `sos`, `log` or `custom:<path-to-json>`.
    #[arg(long, default_value = "sos")]
    pub model: String,
    /// Inverse temperature; overrides the value in a custom file.
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Transfer-operator norms, summability and the double-sum condition.
    Norms {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        d: u32,
        /// Also report the fuzzy operator on ℤ_q.
        #[arg(long)]
        q: Option<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Good-set verdict for an explicit pair or for a model's norm pair.
    Goodset {
        #[arg(long)]
        d: u32,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "half")]
        pairing: PairingArg,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Smallest inverse temperature with the norm pair in the good set.
    Threshold {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        d: u32,
        #[arg(long, value_enum, default_value = "half")]
        pairing: PairingArg,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Localized boundary law on a truncated copy of ℤ.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        d: u32,
        /// Truncation radius; derived from the tail of Q when absent.
        #[arg(long)]
        truncation: Option<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        /// Iterate without a contraction certificate.
        #[arg(long)]
        best_effort: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Height-periodic boundary law on ℤ_q and its fuzzy chain.
    Periodic {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        best_effort: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Single-edge gradient marginal of the q-periodic gradient measure.
    Ggm {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 20)]
        window: i64,
        #[arg(long, default_value_t = 1e-10)]
        tail_tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Exact laws of W_n, or a sampled path dump with --sample-length.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        d: u32,
        #[arg(long, value_enum, default_value = "ggm")]
        mode: SimMode,
        #[arg(long, default_value_t = 1)]
        q: usize,
        /// Path lengths, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1,8,32")]
        n: Vec<usize>,
        /// DP window K; defaults to ⌈8σ√n⌉ + q.
        #[arg(long)]
        window: Option<i64>,
        #[arg(long)]
        truncation: Option<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dump one sampled path of this many steps instead of exact tables.
        #[arg(long)]
        sample_length: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Membership over a (β, d) grid with per-degree thresholds.
    PhaseDiagram {
        #[arg(long, default_value = "sos")]
        model: String,
        /// `a:b:step`
        #[arg(long)]
        beta_range: String,
        #[arg(long, value_delimiter = ',')]
        d_list: Vec<u32>,
        #[arg(long, value_enum, default_value = "half")]
        pairing: PairingArg,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Threshold table over a list of degrees.
    Table {
        #[arg(long, default_value = "sos")]
        model: String,
        #[arg(long, value_delimiter = ',', default_value = "2,3,6,7,100,1000")]
        d: Vec<u32>,
        #[arg(long, value_enum, default_value = "half")]
        pairing: PairingArg,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    use commands as c;
    let (emit, out, default_format) = match cli.command {
        Command::Norms { model, d, q, tol, out } => (c::norms(&model, d, q, tol)?, out, Format::Json),
        Command::Goodset { d, gamma, delta, model, pairing, tol, out } => {
            (c::goodset(d, gamma, delta, &model, pairing.into(), tol)?, out, Format::Json)
        }
        Command::Threshold { model, d, pairing, tol, out } => {
            (c::threshold(&model, d, pairing.into(), tol)?, out, Format::Json)
        }
        Command::Solve { model, d, truncation, tol, max_iter, best_effort, out } => {
            (c::solve(&model, d, truncation, tol, max_iter, best_effort)?, out, Format::Csv)
        }
        Command::Periodic { model, d, q, tol, best_effort, out } => {
            (c::periodic(&model, d, q, tol, best_effort)?, out, Format::Json)
        }
        Command::Ggm { model, d, q, window, tail_tol, out } => (c::ggm(&model, d, q, window, tail_tol)?, out, Format::Csv),
        Command::Simulate { model, d, mode, q, n, window, truncation, tol, seed, sample_length, out } => {
            let opts = c::SimulateOpts { d, mode, q, n, window, truncation, tol, seed, sample_length };
            (c::simulate(&model, &opts)?, out, Format::Csv)
        }
        Command::PhaseDiagram { model, beta_range, d_list, pairing, tol, out } => {
            (c::phase_diagram(&model, &beta_range, &d_list, pairing.into(), tol)?, out, Format::Csv)
        }
        Command::Table { model, d, pairing, tol, out } => (c::table(&model, &d, pairing.into(), tol)?, out, Format::Csv),
    };
    let text = match out.format.unwrap_or(default_format) {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&emit.json).map_err(|e| Error::Config(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => emit.csv,
    };
    match out.out {
        Some(path) => fs::write(&path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Config(e.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() });
            eprintln!("{body}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
