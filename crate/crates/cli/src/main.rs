use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use geoaffine::scenarios::{self, RunOptions, ScenarioReport};

#[derive(Parser)]
#[command(name = "geoaffine", version, about = "Run the built-in geometry scenarios and merge their reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, or `all`, writing OUT/<scenario>/report.json.
    Run {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Integrator steps for every scenario manifold.
        #[arg(long)]
        steps: Option<usize>,
        /// Sphere grid size for norm fields.
        #[arg(long)]
        grid: Option<usize>,
        /// JSON file with run settings and per-scenario parameter overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the built-in catalog.
    List,
    /// Combine reports under DIR into DIR/summary.json.
    Report {
        #[arg(long, value_name = "DIR")]
        merge: PathBuf,
    },
}

fn print_report(r: &ScenarioReport) {
    if r.passed {
        println!("{}: PASS ({} checks)", r.scenario, r.checks.len());
    } else {
        let failed: Vec<&str> = r.failed().iter().map(|c| c.name.as_str()).collect();
        println!("{}: FAIL ({} of {} checks: {})", r.scenario, failed.len(), r.checks.len(), failed.join(", "));
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::List => {
            for c in scenarios::list_scenarios() {
                println!("{:<22} {}", c.name, c.summary);
            }
            Ok(true)
        }
        Command::Run {
            scenario,
            out,
            seed,
            steps,
            grid,
            config,
        } => {
            let mut opts = match &config {
                Some(p) => RunOptions::from_file(p).with_context(|| format!("reading config {}", p.display()))?,
                None => RunOptions::default(),
            };
            if let Some(s) = seed {
                opts.seed = s;
            }
            if steps.is_some() {
                opts.steps = steps;
            }
            if grid.is_some() {
                opts.grid = grid;
            }
            let reports = if scenario == "all" {
                scenarios::run_all(&opts, &out)?
            } else {
                scenarios::run_many(&[scenario.as_str()], &opts, &out)?
            };
            for r in &reports {
                print_report(r);
            }
            Ok(reports.iter().all(|r| r.passed))
        }
        Command::Report { merge } => {
            if !merge.is_dir() {
                bail!("{} is not a directory", merge.display());
            }
            let summary = scenarios::merge_reports(&merge)?;
            for s in &summary.scenarios {
                let status = if s.passed { "PASS" } else { "FAIL" };
                println!("{:<22} {status} {}/{}", s.scenario, s.checks - s.failed.len(), s.checks);
            }
            for c in &summary.criteria {
                println!("criterion {:>2}: {}", c.criterion, if c.passed { "PASS" } else { "FAIL" });
            }
            println!("wrote {}", merge.join(scenarios::SUMMARY_FILE).display());
            Ok(summary.passed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
