//! Command line front end: `train`, `eval`, `rollout` and `selfcheck`.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for runtime failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use hetnav::eval::{self, DEFAULT_TEST_EPISODES};
use hetnav::scenario::ScenarioConfig;
use hetnav::trainer::{self, TrainFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hetnav", version, about = "Train and evaluate crowd-navigation value policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy from a JSON config ({"train": {...}, "scenario": {...}}).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory for the log and checkpoints.
        #[arg(long)]
        out: PathBuf,
        /// Print a progress line every N episodes (0 disables).
        #[arg(long, default_value_t = 100)]
        progress_every: usize,
    },
    /// Evaluate a checkpoint on a seeded test suite.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TEST_EPISODES)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Metrics report (JSON).
        #[arg(long)]
        report: PathBuf,
        /// Optional per-episode records (JSON lines).
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Run one greedy episode and export its trajectory.
    Rollout {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trajectory output (JSON lines, one record per step).
        #[arg(long)]
        traj: PathBuf,
    },
    /// Run the gradient, reduction and ORCA consistency suites.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train { config, out, progress_every } => train(&config, &out, progress_every),
        Command::Eval { ckpt, scenario, episodes, seed, report, records } => {
            evaluate(&ckpt, &scenario, episodes, seed, &report, records.as_deref())
        }
        Command::Rollout { ckpt, scenario, seed, traj } => rollout(&ckpt, &scenario, seed, &traj),
        Command::Selfcheck { seed } => selfcheck(seed),
    }
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn train(config: &Path, out: &Path, progress_every: usize) -> Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let file: TrainFile =
        serde_json::from_str(&text).with_context(|| format!("parsing training config {}", config.display()))?;
    let result = trainer::run_training_with(&file.train, &file.scenario, Some(out), |log| {
        if progress_every > 0 && (log.episode + 1) % progress_every == 0 {
            eprintln!(
                "episode {:>6}  outcome {:<9?}  return {:+.3}  epsilon {:.3}  loss {}",
                log.episode + 1,
                log.outcome,
                log.episode_return,
                log.epsilon,
                log.mean_loss.map_or("-".to_string(), |l| format!("{l:.5}")),
            );
        }
    })?;
    let successes = result.log.iter().filter(|l| l.outcome == trainer::Outcome::Success).count();
    println!(
        "trained {} episodes ({} successes); outputs in {}",
        result.log.len(),
        successes,
        out.display()
    );
    Ok(())
}

fn evaluate(
    ckpt: &Path,
    scenario: &Path,
    episodes: usize,
    seed: u64,
    report: &Path,
    records: Option<&Path>,
) -> Result<()> {
    if episodes == 0 {
        bail!("--episodes must be positive");
    }
    let scenario = load_scenario(scenario)?;
    let params = eval::load_for_scenario(ckpt, &scenario)?;
    let result = eval::evaluate(&params, &scenario, episodes, seed, 0.0)?;
    let text = serde_json::to_string_pretty(&result.metrics)?;
    std::fs::write(report, format!("{text}\n")).with_context(|| format!("writing {}", report.display()))?;
    if let Some(path) = records {
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        for r in &result.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    println!("{text}");
    Ok(())
}

fn rollout(ckpt: &Path, scenario: &Path, seed: u64, traj: &Path) -> Result<()> {
    let scenario = load_scenario(scenario)?;
    let params = eval::load_for_scenario(ckpt, &scenario)?;
    let (mut record, steps) = eval::rollout(&params, &scenario, seed)?;
    eval::write_trajectory(traj, &steps).with_context(|| format!("writing {}", traj.display()))?;
    record.trajectory = Some(traj.display().to_string());
    println!("{}", serde_json::to_string(&record)?);
    Ok(())
}

fn selfcheck(seed: u64) -> Result<()> {
    let reports = hetnav::selfcheck::run_all(seed);
    for r in &reports {
        println!("[{}] {:<10} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("{passed}/{} checks passed", reports.len());
    if passed != reports.len() {
        bail!("{} check(s) failed", reports.len() - passed);
    }
    Ok(())
}
