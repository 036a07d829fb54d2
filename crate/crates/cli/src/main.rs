//! `specsurg`: spectral diagnostics, checkpoint surgery, gauge experiments and
//! the 24-game verifier from the command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spectral_surgery::gp::Rule;
use spectral_surgery::spectral::DEFAULT_BUCKET_FRACTION;
use spectral_surgery::surgery::LayerScope;

#[derive(Parser, Debug)]
#[command(name = "specsurg", version, about = "Spectral diagnostics and surgery for weight checkpoints")]
struct Cli {
    /// Worker threads; defaults to the number of available cores. Outputs
    /// never depend on this value.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-rank singular values and principal angles between two checkpoints (CSV).
    Spectra(SpectraArgs),
    /// Same as `spectra` with angle columns only.
    Angles(SpectraArgs),
    /// Recombine singular directions and values from two checkpoints.
    Surgery(SurgeryArgs),
    /// Step-size scaling experiment for rotation-gauge updates.
    Gauge(GaugeArgs),
    /// The 24-point card game.
    #[command(subcommand)]
    Gp(GpCommand),
    /// Head/bulk/tail bucket statistics of a spectra report.
    ReportSummary(SummaryArgs),
}

#[derive(Args, Debug)]
struct SpectraArgs {
    #[arg(long, value_name = "PATH")]
    base: PathBuf,
    #[arg(long, value_name = "PATH")]
    target: PathBuf,
    /// Glob over tensor names; 2-D tensors only.
    #[arg(long, value_name = "GLOB", default_value = "*")]
    pattern: String,
    /// CSV destination; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Base directions with target singular values.
    Directions,
    /// Target directions with base singular values.
    Values,
}

/// A rank bound as given on the command line.
#[derive(Clone, Copy, Debug, PartialEq)]
enum RankSpec {
    Count(usize),
    Fraction(f64),
    Full,
    None,
}

fn parse_rank_head(s: &str) -> Result<RankSpec, String> {
    match s {
        "full" => Ok(RankSpec::Full),
        "none" => Ok(RankSpec::None),
        _ => parse_rank_tail(s),
    }
}

fn parse_rank_tail(s: &str) -> Result<RankSpec, String> {
    if let Some(frac) = s.strip_prefix("f:") {
        let f: f64 = frac.parse().map_err(|_| format!("bad fraction {frac:?}"))?;
        if !(0.0..=1.0).contains(&f) {
            return Err(format!("fraction {f} outside [0, 1]"));
        }
        Ok(RankSpec::Fraction(f))
    } else {
        s.parse()
            .map(RankSpec::Count)
            .map_err(|_| format!("expected K, f:FRAC, full or none, got {s:?}"))
    }
}

#[derive(Args, Debug)]
struct SurgeryArgs {
    #[arg(long, value_name = "PATH")]
    base: PathBuf,
    #[arg(long, value_name = "PATH")]
    target: PathBuf,
    /// Merged checkpoint destination.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Plan file; excludes the inline plan flags below.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["mode", "rank_head", "rank_tail", "layers", "pattern", "include_untied"])]
    plan: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// K, f:FRAC, full or none.
    #[arg(long, value_name = "K|f:FRAC|full", value_parser = parse_rank_head)]
    rank_head: Option<RankSpec>,
    /// K or f:FRAC; same kind as --rank-head.
    #[arg(long, value_name = "K|f:FRAC", value_parser = parse_rank_tail)]
    rank_tail: Option<RankSpec>,
    /// Half-open layer ranges, e.g. `0..8` or `10..20,24..28`.
    #[arg(long, value_name = "A..B[,C..D]", value_parser = |s: &str| s.parse::<LayerScope>())]
    layers: Option<LayerScope>,
    #[arg(long, value_name = "GLOB")]
    pattern: Option<String>,
    /// Also merge embedding and output-head matrices.
    #[arg(long)]
    include_untied: bool,
}

#[derive(Args, Debug)]
struct GaugeArgs {
    #[arg(long, value_name = "IN,MID,OUT", default_value = "8,16,8", value_delimiter = ',')]
    dims: Vec<usize>,
    /// Decreasing step sizes in (0, 1).
    #[arg(long, value_name = "LIST", default_value = "0.1,0.01,0.001,0.0001", value_delimiter = ',')]
    eta_grid: Vec<f64>,
    #[arg(long, value_name = "N", default_value_t = 32)]
    trials: usize,
    #[arg(long, value_name = "S", default_value_t = 0)]
    seed: u64,
    /// Weight-decay coefficient for the penalty comparison.
    #[arg(long, default_value_t = 1e-2)]
    lambda: f64,
    /// CSV destination; the JSON result goes beside it with a `.json`
    /// extension. Without it the JSON result goes to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct HandArgs {
    #[arg(long, value_name = "C1,C2,C3,C4", value_delimiter = ',', required = true)]
    cards: Vec<String>,
    #[arg(long, value_name = "id|ood", default_value = "id", value_parser = |s: &str| s.parse::<Rule>())]
    rule: Rule,
    #[arg(long, value_name = "N", default_value_t = 24)]
    target_number: u32,
}

#[derive(Subcommand, Debug)]
enum GpCommand {
    /// Print one solution, or fail with exit code 1 when none exists.
    Solve {
        #[command(flatten)]
        hand: HandArgs,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Check an equation; exit code 1 when it is not a valid solution.
    Validate {
        #[command(flatten)]
        hand: HandArgs,
        #[arg(long, value_name = "TEXT")]
        equation: String,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Deal seeded hands as JSON lines.
    Deal {
        #[arg(long, value_name = "S", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "N", default_value_t = 1)]
        count: usize,
        #[arg(long, value_name = "id|ood", default_value = "id", value_parser = |s: &str| s.parse::<Rule>())]
        rule: Rule,
        #[arg(long, value_name = "N", default_value_t = 24)]
        target_number: u32,
        #[arg(long)]
        solvable_only: bool,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Score model transcripts (JSON lines) and report the success rate.
    Score {
        #[arg(long, value_name = "PATH")]
        transcripts: PathBuf,
        /// Default rule for records without their own.
        #[arg(long, value_name = "id|ood", default_value = "id", value_parser = |s: &str| s.parse::<Rule>())]
        rule: Rule,
        /// Text preceding the answer; an empty string scans the whole response.
        #[arg(long, value_name = "STR", default_value = spectral_surgery::gp::DEFAULT_MARKER)]
        marker: String,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SummaryArgs {
    /// A full spectra CSV report.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["base", "target"], required_unless_present_all = ["base", "target"])]
    input: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "target")]
    base: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "base")]
    target: Option<PathBuf>,
    #[arg(long, value_name = "GLOB", default_value = "*")]
    pattern: String,
    /// Width of the head and tail buckets as a fraction of the rank.
    #[arg(long, value_name = "FRAC", default_value_t = DEFAULT_BUCKET_FRACTION)]
    bucket_frac: f64,
    /// JSON destination; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// How a run ended, mapped onto the process exit code.
pub enum Failure {
    /// Bad input data or a negative verdict (exit 1).
    Domain(anyhow::Error),
    /// Flags that cannot be combined (exit 2).
    Usage(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Spectra(a) => commands::spectra(a, false),
        Command::Angles(a) => commands::spectra(a, true),
        Command::Surgery(a) => commands::surgery(a),
        Command::Gauge(a) => commands::gauge(a),
        Command::Gp(g) => commands::gp(g),
        Command::ReportSummary(a) => commands::report_summary(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.jobs {
        Some(0) => Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli)),
            Err(e) => Err(Failure::Domain(e.into())),
        },
        None => dispatch(cli),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
