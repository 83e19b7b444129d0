//! Test-suite metrics, seeded evaluation and trajectory export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{decode_checkpoint, CheckpointError, ModelParams};
use crate::policy::{action_space, select_action, DEFAULT_GAMMA};
use crate::rng::{RngStream, StreamKind};
use crate::scenario::ScenarioConfig;
use crate::sim::{Env, SimError, StepRecord};
use crate::trainer::Outcome;

/// Size of a standard test suite.
pub const DEFAULT_TEST_EPISODES: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub outcome: Outcome,
    /// Seconds.
    pub duration: f64,
    pub steps: usize,
    /// Robot's smallest surface gap after each step; `None` with no
    /// neighbours.
    pub min_separation: Vec<Option<f64>>,
    /// Where the step-by-step trajectory was written, if anywhere.
    pub trajectory: Option<String>,
}

impl EpisodeRecord {
    fn discomfort_steps(&self, discomfort_dist: f64) -> impl Iterator<Item = f64> + '_ {
        self.min_separation
            .iter()
            .flatten()
            .copied()
            .filter(move |&s| (0.0..discomfort_dist).contains(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "CR")]
    pub cr: f64,
    #[serde(rename = "DR")]
    pub dr: f64,
    /// Mean success time; absent without successes.
    #[serde(rename = "AT")]
    pub at: Option<f64>,
    /// Mean minimum separation over risk episodes; absent without any.
    #[serde(rename = "MD")]
    pub md: Option<f64>,
    pub n_episodes: usize,
    pub timeout_rate: f64,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Suite metrics. Sums run in episode-index order so the result does not
/// depend on how the records are arranged.
///
/// * DR: per episode, the fraction of steps with `0 <= sep < d`; averaged.
/// * MD: over episodes with at least one such step, the smallest of those
///   separations; averaged.
///
/// # Panics
///
/// On an empty record list.
pub fn compute_metrics(records: &[EpisodeRecord], discomfort_dist: f64) -> Metrics {
    assert!(!records.is_empty(), "compute_metrics needs at least one episode");
    let mut sorted: Vec<&EpisodeRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.index);
    let n = sorted.len() as f64;
    let count = |o: Outcome| sorted.iter().filter(|r| r.outcome == o).count() as f64;
    let dr = mean(sorted.iter().map(|r| {
        if r.steps == 0 {
            0.0
        } else {
            r.discomfort_steps(discomfort_dist).count() as f64 / r.steps as f64
        }
    }))
    .unwrap();
    Metrics {
        sr: count(Outcome::Success) / n,
        cr: count(Outcome::Collision) / n,
        dr,
        at: mean(sorted.iter().filter(|r| r.outcome == Outcome::Success).map(|r| r.duration)),
        md: mean(
            sorted
                .iter()
                .filter_map(|r| r.discomfort_steps(discomfort_dist).reduce(f64::min)),
        ),
        n_episodes: sorted.len(),
        timeout_rate: count(Outcome::Timeout) / n,
    }
}

/// Runs one episode from `env` under epsilon-greedy selection.
pub fn run_episode(
    index: usize,
    mut env: Env,
    params: &ModelParams,
    epsilon: f64,
    rng: &mut RngStream,
    keep_trajectory: bool,
) -> Result<(EpisodeRecord, Vec<StepRecord>), SimError> {
    let config = env.config().clone();
    let space = action_space(config.v_pref);
    let mut min_separation = Vec::new();
    let mut trajectory = Vec::new();
    let outcome = loop {
        let (action, _) = select_action(env.states(), params, &space, epsilon, DEFAULT_GAMMA, &config, rng);
        let step = env.step(action)?;
        let sep = step.event.min_separation;
        min_separation.push(sep.is_finite().then_some(sep));
        if keep_trajectory {
            trajectory.push(StepRecord::new(env.time(), env.states(), action, &step));
        }
        if step.done {
            break Outcome::from_event(step.event.kind).expect("terminal step has an outcome");
        }
    };
    let record = EpisodeRecord {
        index,
        outcome,
        duration: env.time(),
        steps: env.steps(),
        min_separation,
        trajectory: None,
    };
    Ok((record, trajectory))
}

fn test_env(scenario: &ScenarioConfig, seed: u64, index: usize) -> Result<Env, SimError> {
    Env::reset(scenario, &mut RngStream::new(seed, StreamKind::TestScenario, index as u64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub metrics: Metrics,
    pub records: Vec<EpisodeRecord>,
}

/// `n_episodes` test scenes seeded from the test namespace, so they never
/// coincide with training scenes. `epsilon = 0` is the greedy policy;
/// `epsilon = 1` the uniformly random baseline.
pub fn evaluate(
    params: &ModelParams,
    scenario: &ScenarioConfig,
    n_episodes: usize,
    seed: u64,
    epsilon: f64,
) -> Result<EvalResult, SimError> {
    scenario.validate()?;
    let records = (0..n_episodes)
        .map(|i| {
            let mut rng = RngStream::new(seed, StreamKind::TestPolicy, i as u64);
            run_episode(i, test_env(scenario, seed, i)?, params, epsilon, &mut rng, false).map(|r| r.0)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalResult {
        metrics: compute_metrics(&records, scenario.discomfort_dist),
        records,
    })
}

/// Single greedy test episode with its full trajectory.
pub fn rollout(
    params: &ModelParams,
    scenario: &ScenarioConfig,
    seed: u64,
) -> Result<(EpisodeRecord, Vec<StepRecord>), SimError> {
    scenario.validate()?;
    let mut rng = RngStream::new(seed, StreamKind::TestPolicy, 0);
    run_episode(0, test_env(scenario, seed, 0)?, params, 0.0, &mut rng, true)
}

/// Loads a checkpoint for use on `scenario`, refusing one trained for a
/// different ablation with a per-tensor dimension diff.
pub fn load_for_scenario(path: &Path, scenario: &ScenarioConfig) -> Result<ModelParams, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let params = decode_checkpoint(&bytes, None)?;
    if params.ablation != scenario.ablation {
        // Re-decode against the expected layout to report the difference.
        decode_checkpoint(&bytes, Some((scenario.ablation, &params.dims)))?;
    }
    Ok(params)
}

pub fn write_trajectory(path: &Path, steps: &[StepRecord]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in steps {
        serde_json::to_writer(&mut w, s)?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn read_trajectory(path: &Path) -> std::io::Result<Vec<StepRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::from))
        .collect()
}
