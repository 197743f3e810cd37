//! Experiment harness: configuration, sweeps, rate fits and CSV reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod fit;
pub mod report;

use std::path::Path;

use anyhow::{Context, Result};

pub use config::SuiteConfig;
pub use experiments::{run_experiment, run_suite, REGISTRY};
pub use report::{Check, ExperimentOutput};

/// Runs the suite on a dedicated pool of `threads` workers (all cores when
/// `None`) and writes the CSV files into `out_dir`.
pub fn run_to_dir(cfg: &SuiteConfig, out_dir: &Path, threads: Option<usize>) -> Result<Vec<ExperimentOutput>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().context("building the worker pool")?;
    let outputs = pool.install(|| run_suite(cfg))?;
    report::write_all(out_dir, &outputs)?;
    Ok(outputs)
}
