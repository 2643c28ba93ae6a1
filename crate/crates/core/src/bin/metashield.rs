use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metashield::cli::{self, exit_code, Command};
use metashield::config::RunConfig;
use metashield::{Error, Result};

#[derive(Parser)]
#[command(
    name = "metashield",
    version,
    about = "Resonator layout design and voice anonymization toolkit"
)]
struct Args {
    /// JSON run configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides a config key, e.g. `--set perturb.kappa=0`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Resonator gain against frequency, as CSV.
    GainCurve {
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy unit orientation search, as JSON.
    DesignLayout {
        #[arg(long)]
        out: PathBuf,
    },
    /// Interference gain against head angle, as CSV.
    GainMap {
        #[arg(long)]
        out: PathBuf,
        /// Layout JSON written by `design-layout`.
        #[arg(long)]
        layout: Option<PathBuf>,
    },
    /// Seeded slide schedule, as JSON.
    Schedule {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "input")]
        frames: Option<usize>,
        /// Size the schedule for this WAV file.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Perturbs a mono WAV file.
    Anonymize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Miss-match rate and band distortion report.
    Evaluate {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, requires = "anonymized")]
        original: Option<PathBuf>,
        #[arg(long, requires = "original")]
        anonymized: Option<PathBuf>,
    },
    /// Every stage on the bundled synthetic corpus.
    Pipeline {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-runs a run manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Write outputs here instead of the recorded location.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("METASHIELD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Error::Parameter(format!(
            "METASHIELD_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))
}

fn resolve_config(args: &Args) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg = cfg.apply_override(o)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main_inner(args: Args) -> Result<Vec<PathBuf>> {
    init_threads()?;
    if let Sub::Replay { manifest, out } = args.command {
        return cli::replay(&manifest, out);
    }
    let cfg = resolve_config(&args)?;
    let command = match args.command {
        Sub::GainCurve { out } => Command::GainCurve { out },
        Sub::DesignLayout { out } => Command::DesignLayout { out },
        Sub::GainMap { out, layout } => Command::GainMap { out, layout },
        Sub::Schedule { out, frames, input } => Command::Schedule { out, frames, input },
        Sub::Anonymize {
            input,
            out,
            schedule,
        } => Command::Anonymize {
            input,
            out,
            schedule,
        },
        Sub::Evaluate {
            out,
            original,
            anonymized,
        } => Command::Evaluate {
            out,
            original,
            anonymized,
        },
        Sub::Pipeline { out } => Command::Pipeline { out },
        Sub::Replay { .. } => unreachable!("handled above"),
    };
    cli::run(&command, &cfg)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(args) {
        Ok(outputs) => {
            for p in outputs {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
