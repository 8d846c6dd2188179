//! Command-line pipeline around `qdstrain-core`: spectrum ingestion, peak
//! fitting, strain maps, exciton-phonon fits, ensemble statistics,
//! synthetic datasets and plot-data export.
//!
//! Every command writes its tables and a `report_<command>.json` into the
//! output directory. Exit codes: 0 clean, 1 input or configuration error,
//! 2 partial results (flagged fits, skipped stages).

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;

use std::path::PathBuf;

pub use args::{Cli, Command};
pub use config::AnalysisConfig;
pub use error::{CliError, Result};
pub use report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Clean,
    Partial,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Clean => 0,
            Status::Partial => 2,
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub warnings: Vec<String>,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    pub(crate) fn new(warnings: Vec<String>, flagged: bool, written: Vec<PathBuf>) -> Self {
        let status = if flagged || !warnings.is_empty() {
            Status::Partial
        } else {
            Status::Clean
        };
        Outcome {
            status,
            warnings,
            written,
        }
    }
}

/// Shared state of one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: AnalysisConfig,
    pub output_dir: PathBuf,
    pub jobs: Option<usize>,
    /// `--seed`, when given.
    pub seed: Option<u64>,
}

impl Context {
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.jobs {
            builder = builder.num_threads(n.max(1));
        }
        builder.build().map_err(|e| CliError::Pool(e.to_string()))
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let mut config = AnalysisConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    std::fs::create_dir_all(&cli.output_dir).map_err(CliError::io(&cli.output_dir))?;
    let ctx = Context {
        config,
        output_dir: cli.output_dir.clone(),
        jobs: cli.jobs,
        seed: cli.seed,
    };
    match &cli.command {
        Command::FitPeaks { inputs } => commands::fit_peaks::run(&ctx, inputs),
        Command::StrainMap {
            peaks,
            references,
            raman,
        } => commands::strain_map::run(&ctx, peaks, references.as_deref(), raman.as_deref()),
        Command::Odonnell { series } => commands::odonnell::run(&ctx, series),
        Command::Ensemble {
            energies,
            strain,
            piezo,
        } => commands::ensemble::run(&ctx, energies, strain.as_deref(), piezo.as_deref()),
        Command::Synth { generator } => commands::synth::run(&ctx, generator.as_deref()),
        Command::ReportPlots { reports } => commands::plots::run(&ctx, reports),
    }
}
