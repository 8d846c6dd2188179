use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// Strain, exciton-phonon and ensemble analysis of quantum-emitter
/// photoluminescence.
#[derive(Debug, Parser)]
#[command(name = "qdstrain", version, about)]
pub struct Cli {
    /// Analysis configuration (JSON); the shipped defaults when omitted
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; all cores when omitted
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Directory receiving tables and reports
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    pub output_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect and fit emission lines in spectra (files or directories)
    FitPeaks {
        #[arg(required = true, value_name = "SPECTRA")]
        inputs: Vec<PathBuf>,
    },
    /// Convert fitted X0 energies to local strain per location
    StrainMap {
        /// peaks.csv written by fit-peaks
        #[arg(value_name = "PEAKS")]
        peaks: PathBuf,
        /// Per-location or per-sample reference energies
        #[arg(long, value_name = "CSV")]
        references: Option<PathBuf>,
        /// Raman shifts for the PL/Raman cross-check
        #[arg(long, value_name = "CSV")]
        raman: Option<PathBuf>,
    },
    /// Fit the O'Donnell-Chen model to temperature series per emitter
    Odonnell {
        #[arg(value_name = "SERIES")]
        series: PathBuf,
    },
    /// Histograms, gauge regression and broadening of QD ensembles
    Ensemble {
        /// Per-QD energies tagged by sample
        #[arg(value_name = "ENERGIES")]
        energies: PathBuf,
        /// Per-sample strain table (strain_summary.csv or strain_table.csv)
        #[arg(long, value_name = "CSV")]
        strain: Option<PathBuf>,
        /// Piezo field sweep of QD and X0 shifts
        #[arg(long, value_name = "CSV")]
        piezo: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with ground truth
    Synth {
        /// Generator configuration (JSON); the shipped example when omitted
        #[arg(value_name = "GENERATOR")]
        generator: Option<PathBuf>,
    },
    /// Export plot-ready tables from one or more reports
    ReportPlots {
        #[arg(required = true, value_name = "REPORTS")]
        reports: Vec<PathBuf>,
    },
}
