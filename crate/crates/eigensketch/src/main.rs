use clap::{Parser, Subcommand, ValueEnum};
use eigensketch::cli::{
    cmd_all, cmd_evaluate, cmd_generate, cmd_recover, cmd_sketch, SketchInputKind,
};
use eigensketch::config::{parse_config_str, RunConfig};
use eigensketch::{Error, Result};
use std::path::PathBuf;

/// One-pass spectral sketching of huge PSD matrices with sparse eigenvector
/// recovery.
///
/// Settings come from defaults, then an optional config file, then --set
/// overrides in order, then the dedicated flags; later sources win.
#[derive(Parser)]
#[command(name = "eigensketch", version)]
struct Cli {
    /// Config file of key=value lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory for artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for multi-trial runs (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    /// CSV lines row,col,value with 1-based indices.
    EntriesCsv,
    /// 24-byte little-endian (row, col, value) records, 1-based.
    EntriesBin,
    /// A ground truth directory written by generate.
    Factors,
}

impl From<KindArg> for SketchInputKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::EntriesCsv => SketchInputKind::EntriesCsv,
            KindArg::EntriesBin => SketchInputKind::EntriesBin,
            KindArg::Factors => SketchInputKind::Factors,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Plant a synthetic sparse-eigenvector ground truth.
    Generate,
    /// Stream a matrix into a compressed sketch file.
    Sketch {
        /// Entry stream file, or ground truth directory for --kind factors.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "entries-csv")]
        kind: KindArg,
    },
    /// Extract eigenpairs from a sketch and decode sparse eigenvectors.
    Recover {
        /// Sketch file written by the sketch command.
        #[arg(long, value_name = "FILE")]
        sketch: PathBuf,
    },
    /// Score a recover run against planted ground truth.
    Evaluate {
        /// Ground truth directory.
        #[arg(long, value_name = "DIR")]
        truth: PathBuf,
        /// Directory holding eigs.csv, ensemble.txt, and rec_XXX.csv.
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
    },
    /// Full synthetic experiment over multiple trials.
    All,
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            parse_config_str(&text)?
        }
        None => RunConfig::default(),
    };
    for pair in &cli.set {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {pair:?}: expected KEY=VALUE")))?;
        cfg.apply_override(key.trim(), value)?;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.display().to_string();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli)?;
    match cli.cmd {
        Cmd::Generate => cmd_generate(&cfg),
        Cmd::Sketch { input, kind } => cmd_sketch(&cfg, &input, kind.into()),
        Cmd::Recover { sketch } => cmd_recover(&cfg, &sketch),
        Cmd::Evaluate { truth, run } => cmd_evaluate(&cfg, &truth, &run),
        Cmd::All => cmd_all(&cfg),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) => 2,
                Error::Io(_) => 3,
                Error::Numeric(_) => 4,
            };
            std::process::exit(code);
        }
    }
}
