use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trichotomy_core::genlab::Defect;
use trichotomy_lab::{commands, Command, Options, Preset};

/// Name of the environment variable capping worker threads.
const THREADS_VAR: &str = "TRICHOTOMY_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "trichotomy-lab", version, about = "Verify trichotomies and dichotomies of linear time-varying systems")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Json,
}

#[derive(Debug, Args)]
struct Common {
    /// Last step of the verification window (defaults to the horizon).
    #[arg(long)]
    window: Option<usize>,
    /// Relative tolerance when comparing sharp constants with the declared one.
    #[arg(long)]
    tol: Option<f64>,
    /// Divergence floor for growth-rate checks.
    #[arg(long)]
    floor: Option<f64>,
    /// Rotation seed for generated systems.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Structural checks on a document.
    Validate {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Sharp constants and the full verdict.
    Verify {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Build the two rescaled dichotomy documents.
    Couple {
        input: PathBuf,
        #[arg(long)]
        out_b: Option<PathBuf>,
        #[arg(long)]
        out_c: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Forward to both dichotomies and back, stage by stage.
    Roundtrip {
        input: PathBuf,
        /// Dichotomy document replacing the rescaled system B.
        #[arg(long)]
        b: Option<PathBuf>,
        /// Dichotomy document replacing the rescaled system C.
        #[arg(long)]
        c: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Grid search over the exponents.
    Estimate {
        input: PathBuf,
        /// JSON object with lists `a`, `b`, `eps`, inline or as a path.
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        common: Common,
    },
    /// Expand a generator spec into a full document.
    Generate {
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        corrupt: Option<Defect>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn options(c: &Common) -> Options {
    let Format::Json = c.format;
    Options {
        window: c.window,
        tol: c.tol,
        floor: c.floor,
        seed: c.seed,
    }
}

fn split(sub: Sub) -> (Command, Options) {
    match sub {
        Sub::Validate { input, common } => (Command::Validate { input }, options(&common)),
        Sub::Verify { input, common } => (Command::Verify { input }, options(&common)),
        Sub::Couple {
            input,
            out_b,
            out_c,
            common,
        } => (Command::Couple { input, out_b, out_c }, options(&common)),
        Sub::Roundtrip { input, b, c, common } => (Command::Roundtrip { input, b, c }, options(&common)),
        Sub::Estimate { input, grid, common } => (Command::Estimate { input, grid }, options(&common)),
        Sub::Generate {
            input,
            preset,
            horizon,
            corrupt,
            out,
            common,
        } => (
            Command::Generate {
                input,
                preset,
                horizon,
                corrupt,
                out,
            },
            options(&common),
        ),
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("{THREADS_VAR}: {e}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let (cmd, opts) = split(cli.command);
    let out = commands::run(&cmd, &opts);
    print!("{}", out.stdout);
    if let Some(e) = &out.error {
        eprintln!("error: {e}");
    }
    ExitCode::from(out.exit_code)
}
