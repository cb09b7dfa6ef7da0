mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunConfig, CONFIG_ENV};

/// Excess-vocabulary analysis of longitudinal text corpora.
///
/// Each subcommand reads the artifacts of earlier stages from the output
/// directory and writes its own, so a pipeline can be resumed at any stage.
#[derive(Debug, Parser)]
#[command(name = "excessvocab", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Output (and artifact) directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for synthetic corpora.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Target year.
    #[arg(long, global = true)]
    year: Option<i32>,
    /// Count matrix (`.csv` or `.csv.gz`).
    #[arg(long, global = true)]
    matrix: Option<PathBuf>,
    /// Marker-set word list; repeatable.
    #[arg(long, global = true)]
    markers: Vec<PathBuf>,
    /// Word annotation CSV (`word,label[,pos]`).
    #[arg(long, global = true)]
    annotations: Option<PathBuf>,
    /// Skip and tally malformed records instead of failing.
    #[arg(long, global = true)]
    lenient: bool,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// MEDLINE XML or JSONL inputs to filtered canonical JSONL.
    Ingest {
        /// Input files; added to `paths.inputs`.
        inputs: Vec<PathBuf>,
    },
    /// Strip contaminating strings and drop correction notices.
    Clean {
        /// Cleaning rule TSV (defaults to the starter set).
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Word-by-year document counts into a gzipped matrix.
    Count,
    /// Per-word excess statistics for the target year.
    Excess {
        /// Also summarise every year that has three earlier years.
        #[arg(long)]
        all_years: bool,
    },
    /// Set-level gaps for the rare, common and extra marker sets.
    Gap,
    /// Rare-set threshold sweep; writes the chosen rare marker set.
    Sweep,
    /// Per-subgroup gaps with the eligibility rule.
    Subgroups {
        /// JSON list of subgroup definitions.
        #[arg(long)]
        specs: Option<PathBuf>,
    },
    /// Neighbourhood gaps over precomputed 2D coordinates.
    LocalDelta {
        /// CSV with `id,x,y` and optional `year,rare,common`.
        #[arg(long)]
        points: Option<PathBuf>,
        /// Neighbours per year.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        reference_year: Option<i32>,
    },
    /// Generate a synthetic corpus with optional marker injection.
    Synth {
        /// JSON with `corpus` and optional `injection` sections.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Bundle every figure table into `report/`.
    Report,
}

/// A failed run: exit code 1 for usage errors, 2 for data errors.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    /// A prerequisite artifact is absent.
    pub fn missing(path: &Path, producer: &str) -> Self {
        Failure::data(format!(
            "missing {}: run `excessvocab {producer}` first",
            path.display()
        ))
    }
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::data(e.to_string())
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.paths.out_dir = o.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(y) = cli.year {
        cfg.analysis.target_year = y;
    }
    if let Some(m) = &cli.matrix {
        cfg.paths.matrix = Some(m.clone());
    }
    cfg.paths.markers.extend(cli.markers.iter().cloned());
    if let Some(a) = &cli.annotations {
        cfg.paths.annotations = Some(a.clone());
    }
    if cli.lenient {
        cfg.mode = excessvocab::ingest::ParseMode::Lenient;
    }
    match &cli.command {
        Some(Command::Ingest { inputs }) => cfg.paths.inputs.extend(inputs.iter().cloned()),
        Some(Command::Clean { rules: Some(r) }) => cfg.paths.cleaning_rules = Some(r.clone()),
        Some(Command::Subgroups { specs: Some(s) }) => cfg.paths.subgroup_specs = Some(s.clone()),
        Some(Command::LocalDelta { points, k, reference_year }) => {
            if let Some(p) = points {
                cfg.paths.points = Some(p.clone());
            }
            if let Some(k) = k {
                cfg.analysis.local_k = *k;
            }
            if let Some(y) = reference_year {
                cfg.analysis.reference_year = *y;
            }
        }
        Some(Command::Synth { spec: Some(s) }) => cfg.paths.synth_spec = Some(s.clone()),
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = effective_config(&cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    cfg.validate()?;
    let Some(command) = cli.command else {
        return Err(Failure::usage("no subcommand given (see --help)"));
    };
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| Failure::usage(format!("workers: {e}")))?;
    }
    match command {
        Command::Ingest { .. } => commands::ingest(&cfg),
        Command::Clean { .. } => commands::clean(&cfg),
        Command::Count => commands::count(&cfg),
        Command::Excess { all_years } => commands::excess(&cfg, all_years),
        Command::Gap => commands::gap(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Subgroups { .. } => commands::subgroups(&cfg),
        Command::LocalDelta { .. } => commands::local_delta(&cfg),
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Report => report::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
