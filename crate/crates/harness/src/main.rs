use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use kinlab::report::verify_summary;
use kinlab::{run_to_dir, SuiteConfig, REGISTRY};

#[derive(Parser)]
#[command(
    name = "kinlab",
    version,
    about = "Kinetic diffusion-limit experiments and certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment present in a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores). Results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the available experiments.
    List,
    /// Re-check pass/fail and margins of a stored summary CSV.
    Verify { csv: PathBuf },
}

fn run(config: PathBuf, out: Option<PathBuf>, threads: Option<usize>) -> Result<bool> {
    let cfg = SuiteConfig::load(&config)?;
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let outputs = run_to_dir(&cfg, &dir, threads)?;
    let mut all = true;
    for o in &outputs {
        let passed = o.checks.iter().filter(|c| c.pass()).count();
        let verdict = if o.passed() { "PASS" } else { "FAIL" };
        println!("{} {verdict} {passed}/{} checks", o.id, o.checks.len());
        for c in o.checks.iter().filter(|c| !c.pass()) {
            println!("  failed {}: lhs {:.6e} > rhs {:.6e}", c.name, c.lhs, c.rhs);
        }
        all &= o.passed();
    }
    println!("wrote {}", dir.display());
    Ok(all)
}

fn verify(path: PathBuf) -> Result<bool> {
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let v = verify_summary(&bytes)?;
    for m in &v.mismatches {
        println!("line {}: {}: {}", m.line, m.check, m.reason);
    }
    for f in &v.failing {
        println!("failing: {f}");
    }
    println!(
        "{} rows, {} failing, {} inconsistent",
        v.rows,
        v.failing.len(),
        v.mismatches.len()
    );
    Ok(v.mismatches.is_empty() && v.failing.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, threads } => run(config, out, threads),
        Command::List => {
            for (id, what) in REGISTRY {
                println!("{id}  {what}");
            }
            Ok(true)
        }
        Command::Verify { csv } => verify(csv),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
