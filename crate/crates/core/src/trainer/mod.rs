//! Deep V-learning: replay, one-step Bellman targets, a hard-synced target
//! network, the epsilon schedule and the episode loop.

mod replay;

pub use replay::{ReplayBuffer, Transition};

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::model::{forward_on_tape, save_checkpoint, value_batch, CheckpointError, ModelDims, ModelParams};
use crate::obs::to_robot_frame;
use crate::policy::{action_space, select_action};
use crate::rng::{RngStream, StreamKind};
use crate::scenario::ScenarioConfig;
use crate::sim::{Env, EventKind, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub target_sync_every: usize,
    /// Gradient steps after each episode; `None` means one per environment
    /// step taken in that episode.
    pub updates_per_episode: Option<usize>,
    /// Transitions collected before the first gradient step.
    pub warmup_transitions: usize,
    pub buffer_capacity: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
    pub dims: ModelDims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            batch_size: 100,
            gamma: 0.9,
            lr: 1e-3,
            epsilon_start: 0.5,
            epsilon_end: 0.1,
            epsilon_decay_episodes: 4000,
            target_sync_every: 50,
            updates_per_episode: None,
            warmup_transitions: 2000,
            buffer_capacity: 100_000,
            checkpoint_every: 1000,
            seed: 0,
            dims: ModelDims::default(),
        }
    }
}

impl TrainConfig {
    /// Default schedule for scenes with other robots.
    pub fn multi_robot() -> Self {
        Self {
            episodes: 15_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch_size and buffer_capacity must be positive");
        }
        if self.target_sync_every == 0 || self.checkpoint_every == 0 {
            return bad("target_sync_every and checkpoint_every must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        let eps_ok = |e: f64| (0.0..=1.0).contains(&e);
        if !eps_ok(self.epsilon_start) || !eps_ok(self.epsilon_end) || self.epsilon_end > self.epsilon_start {
            return bad("need 0 <= epsilon_end <= epsilon_start <= 1");
        }
        if self.dims.hidden == 0 || self.dims.value_hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        Ok(())
    }
}

/// On-disk layout of a training configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub train: TrainConfig,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("non-finite loss in episode {episode}; {detail}")]
    NonFiniteLoss { episode: usize, detail: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end`, then constant.
pub fn epsilon_schedule(episode: usize, cfg: &TrainConfig) -> f64 {
    if episode >= cfg.epsilon_decay_episodes {
        return cfg.epsilon_end;
    }
    let frac = episode as f64 / cfg.epsilon_decay_episodes as f64;
    (cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac).max(cfg.epsilon_end)
}

/// `r` for terminal transitions, `r + gamma V_target(s')` otherwise.
pub fn bellman_target(batch: &[&Transition], target: &ModelParams, gamma: f64) -> Vec<f64> {
    assert!(!batch.is_empty(), "empty batch");
    let live: Vec<_> = batch.iter().filter(|t| !t.done).map(|t| t.next_obs.clone()).collect();
    let mut values = value_batch(&live, target).into_iter();
    batch
        .iter()
        .map(|t| {
            if t.done {
                t.reward
            } else {
                t.reward + gamma * values.next().unwrap()
            }
        })
        .collect()
}

/// Mean squared error of `V(obs)` against fixed targets and its gradient,
/// in [`ModelParams::named_tensors`] order.
pub fn loss_and_grad(batch: &[&Transition], targets: &[f64], params: &ModelParams) -> (f64, Vec<Tensor>, Vec<f64>) {
    let obs: Vec<_> = batch.iter().map(|t| t.obs.clone()).collect();
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let pred = forward_on_tape(&mut tape, &vars, params.ablation, &obs);
    let y = tape.constant(Tensor::from_vec(targets.len(), 1, targets.to_vec()));
    let loss = tape.mse(pred, y);
    let value = tape.value(loss).item();
    let predictions = tape.value(pred).data().to_vec();
    let grads = tape.backward(loss);
    let g = vars
        .all()
        .into_iter()
        .zip(params.shapes())
        .map(|(v, s)| grads.get_or_zeros(v, s))
        .collect();
    (value, g, predictions)
}

/// What went wrong in a failed update, for the diagnostic dump.
#[derive(Debug, Clone, Serialize)]
pub struct BatchDump {
    pub loss: f64,
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone)]
pub enum StepReport {
    /// Buffer had fewer than `batch_size` transitions; nothing changed.
    Skipped { buffer_len: usize },
    Updated { loss: f64 },
    NonFinite(Box<BatchDump>),
}

/// One gradient step on a uniformly sampled minibatch.
pub fn train_step(
    params: &mut ModelParams,
    target: &ModelParams,
    buffer: &ReplayBuffer,
    adam: &mut AdamState,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> StepReport {
    if buffer.len() < cfg.batch_size {
        return StepReport::Skipped { buffer_len: buffer.len() };
    }
    let batch = buffer.sample(cfg.batch_size, rng);
    let targets = bellman_target(&batch, target, cfg.gamma);
    apply_update(params, batch, targets, adam)
}

/// [`train_step`] with bootstrap values memoised in `cache`, which must
/// have been cleared whenever `target` last changed.
pub fn train_step_cached(
    params: &mut ModelParams,
    target: &ModelParams,
    cache: &mut TargetCache,
    buffer: &ReplayBuffer,
    adam: &mut AdamState,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> StepReport {
    if buffer.len() < cfg.batch_size {
        return StepReport::Skipped { buffer_len: buffer.len() };
    }
    let indices = buffer.sample_indices(cfg.batch_size, rng);
    let targets = cache.targets(buffer, &indices, target, cfg.gamma);
    let batch = indices.iter().map(|&i| buffer.get(i)).collect();
    apply_update(params, batch, targets, adam)
}

fn apply_update(params: &mut ModelParams, batch: Vec<&Transition>, targets: Vec<f64>, adam: &mut AdamState) -> StepReport {
    let (loss, grads, predictions) = loss_and_grad(&batch, &targets, params);
    if !loss.is_finite() || !grads.iter().all(Tensor::all_finite) {
        return StepReport::NonFinite(Box::new(BatchDump {
            loss,
            predictions,
            targets,
            transitions: batch.into_iter().cloned().collect(),
        }));
    }
    adam_step(&mut params.tensors_mut(), &grads, adam);
    StepReport::Updated { loss }
}

/// `V_target(s')` per buffered transition, keyed by sequence id. The target
/// network only changes at a sync, so each value is computed once per sync.
#[derive(Debug, Default, Clone)]
pub struct TargetCache {
    values: HashMap<u64, f64>,
}

impl TargetCache {
    pub fn clear(&mut self) {
        self.values.clear();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same values as [`bellman_target`] on the indexed transitions.
    pub fn targets(&mut self, buffer: &ReplayBuffer, indices: &[usize], target: &ModelParams, gamma: f64) -> Vec<f64> {
        let mut missing: Vec<usize> = Vec::new();
        for &i in indices {
            let id = buffer.sequence_id(i);
            if !buffer.get(i).done && !self.values.contains_key(&id) && !missing.contains(&i) {
                missing.push(i);
            }
        }
        if !missing.is_empty() {
            let obs: Vec<_> = missing.iter().map(|&i| buffer.get(i).next_obs.clone()).collect();
            for (i, v) in missing.iter().zip(value_batch(&obs, target)) {
                self.values.insert(buffer.sequence_id(*i), v);
            }
        }
        indices
            .iter()
            .map(|&i| {
                let t = buffer.get(i);
                if t.done {
                    t.reward
                } else {
                    t.reward + gamma * self.values[&buffer.sequence_id(i)]
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
}

impl Outcome {
    pub fn from_event(kind: EventKind) -> Option<Self> {
        match kind {
            EventKind::ReachedGoal => Some(Outcome::Success),
            EventKind::Collision => Some(Outcome::Collision),
            EventKind::Timeout => Some(Outcome::Timeout),
            EventKind::None => None,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub outcome: Outcome,
    pub epsilon: f64,
    /// `None` when no gradient step ran after this episode.
    pub mean_loss: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ModelParams,
    pub log: Vec<EpisodeLog>,
}

pub const LOG_FILE: &str = "train_log.jsonl";

pub fn checkpoint_name(episode: usize) -> String {
    format!("ckpt_{episode}.bin")
}

pub fn run_training(
    cfg: &TrainConfig,
    scenario: &ScenarioConfig,
    out_dir: Option<&Path>,
) -> Result<TrainResult, TrainError> {
    run_training_with(cfg, scenario, out_dir, |_| {})
}

/// Full training run. With `out_dir`, writes the JSON-lines log and
/// `ckpt_{episode}.bin` every `checkpoint_every` episodes and at the end.
/// `on_episode` sees every log line as it is produced.
pub fn run_training_with(
    cfg: &TrainConfig,
    scenario: &ScenarioConfig,
    out_dir: Option<&Path>,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    scenario.validate().map_err(SimError::from)?;

    let mut log_writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join(LOG_FILE);
            Some((BufWriter::new(File::create(&path).map_err(io_err(&path))?), path))
        }
        None => None,
    };
    let save = |episode: usize, params: &ModelParams| -> Result<(), TrainError> {
        if let Some(dir) = out_dir {
            save_checkpoint(&dir.join(checkpoint_name(episode)), params)?;
        }
        Ok(())
    };

    let mut params = ModelParams::init(
        scenario.ablation,
        &cfg.dims,
        &mut RngStream::new(cfg.seed, StreamKind::Init, 0),
    );
    let mut target = params.clone();
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        params.shapes(),
    );
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut cache = TargetCache::default();
    let space = action_space(scenario.v_pref);
    let mut log = Vec::with_capacity(cfg.episodes);

    if cfg.episodes == 0 {
        save(0, &params)?;
    }

    for episode in 0..cfg.episodes {
        let epsilon = epsilon_schedule(episode, cfg);
        let mut scenario_rng = RngStream::new(cfg.seed, StreamKind::TrainScenario, episode as u64);
        let mut explore_rng = RngStream::new(cfg.seed, StreamKind::Exploration, episode as u64);
        let mut replay_rng = RngStream::new(cfg.seed, StreamKind::Replay, episode as u64);

        let mut env = Env::reset(scenario, &mut scenario_rng)?;
        let mut episode_return = 0.0;
        let mut discount = 1.0;
        let outcome = loop {
            let obs = to_robot_frame(env.states());
            let (action, _) = select_action(
                env.states(),
                &params,
                &space,
                epsilon,
                cfg.gamma,
                scenario,
                &mut explore_rng,
            );
            let step = env.step(action)?;
            episode_return += discount * step.reward;
            discount *= cfg.gamma;
            buffer.push(Transition {
                obs,
                reward: step.reward,
                next_obs: to_robot_frame(env.states()),
                done: step.done,
            });
            if step.done {
                break Outcome::from_event(step.event.kind).expect("terminal step has an outcome");
            }
        };

        let n_updates = if buffer.len() >= cfg.warmup_transitions {
            cfg.updates_per_episode.unwrap_or(env.steps())
        } else {
            0
        };
        let mut losses = Vec::with_capacity(n_updates);
        for _ in 0..n_updates {
            match train_step_cached(&mut params, &target, &mut cache, &buffer, &mut adam, cfg, &mut replay_rng) {
                StepReport::Skipped { .. } => break,
                StepReport::Updated { loss } => losses.push(loss),
                StepReport::NonFinite(dump) => {
                    let detail = match out_dir {
                        Some(dir) => {
                            let path = dir.join(format!("nonfinite_batch_{episode}.json"));
                            let text = serde_json::to_string_pretty(&dump).expect("dump serialises");
                            std::fs::write(&path, text).map_err(io_err(&path))?;
                            format!("offending batch written to {}", path.display())
                        }
                        None => format!(
                            "loss {}, targets {:?}, predictions {:?}",
                            dump.loss, dump.targets, dump.predictions
                        ),
                    };
                    return Err(TrainError::NonFiniteLoss { episode, detail });
                }
            }
        }

        if (episode + 1) % cfg.target_sync_every == 0 {
            target = params.clone();
            cache.clear();
        }

        let entry = EpisodeLog {
            episode,
            episode_return,
            outcome,
            epsilon,
            mean_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            steps: env.steps(),
        };
        if let Some((w, path)) = log_writer.as_mut() {
            let line = serde_json::to_string(&entry).expect("log entry serialises");
            writeln!(w, "{line}").map_err(io_err(path))?;
        }
        on_episode(&entry);
        log.push(entry);

        let done = episode + 1;
        if done % cfg.checkpoint_every == 0 || done == cfg.episodes {
            save(done, &params)?;
        }
    }

    if let Some((mut w, path)) = log_writer {
        w.flush().map_err(io_err(&path))?;
    }
    Ok(TrainResult { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs::{CenterObs, JointObservation, NeighborObs};
    use crate::scenario::Ablation;

    fn small_dims() -> ModelDims {
        ModelDims { hidden: 8, value_hidden: vec![8] }
    }

    fn obs(g: f64) -> JointObservation {
        let cr = CenterObs { goal_distance: g, v_pref: 1.0, theta: 0.2, radius: 0.3, vx: 0.1, vy: 0.0 };
        let nb = NeighborObs { px: 1.0, py: -0.5, vx: 0.0, vy: 0.3, radius: 0.3, distance: 1.1, radius_sum: 0.6, category: 1.0 };
        JointObservation { cr, humans: vec![nb], other_robots: vec![] }
    }

    #[test]
    fn epsilon_schedule_matches_reference_points() {
        let cfg = TrainConfig::default();
        assert_eq!(epsilon_schedule(0, &cfg), 0.5);
        assert!((epsilon_schedule(2000, &cfg) - 0.3).abs() < 1e-15);
        assert_eq!(epsilon_schedule(4000, &cfg), 0.1);
        assert_eq!(epsilon_schedule(12_345, &cfg), 0.1);
        let mut prev = 1.0;
        for e in 0..5000 {
            let x = epsilon_schedule(e, &cfg);
            assert!((0.1..=0.5).contains(&x) && x <= prev);
            prev = x;
        }
    }

    #[test]
    fn bellman_targets() {
        let p = ModelParams::init(Ablation::HeR, &small_dims(), &mut RngStream::from_seed(1));
        let done = Transition { obs: obs(1.0), reward: -0.25, next_obs: obs(2.0), done: true };
        let live = Transition { obs: obs(1.0), reward: 0.1, next_obs: obs(3.0), done: false };
        let v = crate::model::value(&obs(3.0), &p);
        let y = bellman_target(&[&done, &live], &p, 0.9);
        assert_eq!(y[0], -0.25);
        assert!((y[1] - (0.1 + 0.9 * v)).abs() < 1e-15);
        assert_eq!(bellman_target(&[&done, &live], &p, 0.0), vec![-0.25, 0.1]);
        // Terminal targets ignore the target network entirely.
        let other = ModelParams::init(Ablation::HeR, &small_dims(), &mut RngStream::from_seed(2));
        assert_eq!(bellman_target(&[&done], &other, 0.9), vec![-0.25]);
    }

    #[test]
    fn cached_targets_match_direct_targets_across_evictions() {
        let p = ModelParams::init(Ablation::HeR, &small_dims(), &mut RngStream::from_seed(1));
        let mut buffer = ReplayBuffer::new(6);
        let mut cache = TargetCache::default();
        for k in 0..15 {
            buffer.push(Transition { obs: obs(1.0), reward: 0.01 * k as f64, next_obs: obs(1.0 + 0.3 * k as f64), done: k % 4 == 0 });
            let indices = buffer.sample_indices(5, &mut RngStream::from_seed(k));
            let direct = bellman_target(&indices.iter().map(|&i| buffer.get(i)).collect::<Vec<_>>(), &p, 0.9);
            let cached = cache.targets(&buffer, &indices, &p, 0.9);
            for (a, b) in direct.iter().zip(&cached) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
        assert!(!cache.is_empty());
        cache.clear();
        assert!(cache.is_empty());
    }

    #[test]
    fn arithmetic_target_example() {
        // V_target == 1 everywhere: zero weights and a unit output bias.
        let mut p = ModelParams::zeros(Ablation::HeR, &small_dims());
        p.value_head.layers.last_mut().unwrap().bias.data_mut()[0] = 1.0;
        let t = Transition { obs: obs(1.0), reward: 0.0, next_obs: obs(2.0), done: false };
        assert!((bellman_target(&[&t], &p, 0.9)[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_has_zero_loss_and_gradient() {
        let p = ModelParams::init(Ablation::HeR, &small_dims(), &mut RngStream::from_seed(3));
        let t = Transition { obs: obs(1.5), reward: 0.0, next_obs: obs(1.5), done: false };
        let v = crate::model::value(&t.obs, &p);
        let (loss, grads, _) = loss_and_grad(&[&t], &[v], &p);
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| g.max_abs() == 0.0));
    }

    #[test]
    fn single_transition_gradient_is_two_residual_times_dv() {
        let p = ModelParams::init(Ablation::HeR, &small_dims(), &mut RngStream::from_seed(4));
        let t = Transition { obs: obs(2.0), reward: 0.0, next_obs: obs(1.0), done: true };
        let y = 0.37;
        let (loss, grads, pred) = loss_and_grad(&[&t], &[y], &p);
        let (v, dv) = crate::model::value_and_grad(&t.obs, &p);
        assert!((pred[0] - v).abs() < 1e-15);
        assert!((loss - (v - y).powi(2)).abs() < 1e-15);
        for (g, d) in grads.iter().zip(&dv) {
            for (a, b) in g.data().iter().zip(d.data()) {
                assert!((a - 2.0 * (v - y) * b).abs() < 1e-12);
            }
        }
        // Finite-difference check of one coordinate of the loss.
        let h = 1e-5;
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus.value_head.layers[0].weight.data_mut()[3] += h;
        minus.value_head.layers[0].weight.data_mut()[3] -= h;
        let l = |q: &ModelParams| (crate::model::value(&t.obs, q) - y).powi(2);
        let fd = (l(&plus) - l(&minus)) / (2.0 * h);
        let names = p.named_tensors();
        let idx = names.iter().position(|(n, _)| n == "value.0.weight").unwrap();
        let an = grads[idx].data()[3];
        assert!((fd - an).abs() <= 1e-6 + 1e-4 * an.abs(), "{fd} vs {an}");
    }

    #[test]
    fn under_filled_buffer_skips() {
        let mut p = ModelParams::init(Ablation::HeR, &small_dims(), &mut RngStream::from_seed(5));
        let before = p.clone();
        let mut buffer = ReplayBuffer::new(10);
        buffer.push(Transition { obs: obs(1.0), reward: 0.0, next_obs: obs(1.0), done: true });
        let mut adam = AdamState::new(AdamConfig::default(), p.shapes());
        let cfg = TrainConfig::default();
        let target = p.clone();
        let r = train_step(&mut p, &target, &buffer, &mut adam, &cfg, &mut RngStream::from_seed(0));
        assert!(matches!(r, StepReport::Skipped { buffer_len: 1 }));
        assert_eq!(p, before);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn train_step_reduces_loss_on_fixed_batch() {
        let dims = ModelDims { hidden: 32, value_hidden: vec![32] };
        let mut p = ModelParams::init(Ablation::HeR, &dims, &mut RngStream::from_seed(6));
        let target = p.clone();
        let mut buffer = ReplayBuffer::new(10);
        for k in 0..4 {
            buffer.push(Transition { obs: obs(1.0 + k as f64), reward: k as f64 * 0.1, next_obs: obs(0.5), done: true });
        }
        let cfg = TrainConfig { batch_size: 4, lr: 1e-2, ..TrainConfig::default() };
        let mut adam = AdamState::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, p.shapes());
        let loss = |p: &ModelParams| {
            let batch: Vec<&Transition> = buffer.iter().collect();
            let y = bellman_target(&batch, &target, cfg.gamma);
            loss_and_grad(&batch, &y, p).0
        };
        let start = loss(&p);
        for i in 0..200 {
            let r = train_step(&mut p, &target, &buffer, &mut adam, &cfg, &mut RngStream::from_seed(i));
            assert!(matches!(r, StepReport::Updated { loss } if loss >= 0.0));
        }
        assert!(loss(&p) < 0.1 * start, "{} -> {}", start, loss(&p));
    }

    #[test]
    fn zero_episodes_checkpoint_is_init() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { episodes: 0, seed: 7, dims: small_dims(), ..TrainConfig::default() };
        let scenario = ScenarioConfig::crossing(1, 1);
        let r = run_training(&cfg, &scenario, Some(dir.path())).unwrap();
        let init = ModelParams::init(Ablation::HeR, &small_dims(), &mut RngStream::new(7, StreamKind::Init, 0));
        assert_eq!(r.params, init);
        let loaded = crate::model::load_checkpoint(&dir.path().join("ckpt_0.bin"), None).unwrap();
        assert_eq!(loaded, init);
        assert!(r.log.is_empty());
    }

    #[test]
    fn short_run_is_reproducible_and_logs_every_episode() {
        let cfg = TrainConfig {
            episodes: 6,
            batch_size: 8,
            warmup_transitions: 20,
            checkpoint_every: 4,
            target_sync_every: 2,
            seed: 3,
            dims: small_dims(),
            ..TrainConfig::default()
        };
        let scenario = ScenarioConfig::crossing(1, 1);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run_training(&cfg, &scenario, Some(a.path())).unwrap();
        let rb = run_training(&cfg, &scenario, Some(b.path())).unwrap();
        assert_eq!(ra.log, rb.log);
        assert_eq!(ra.params, rb.params);
        let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
        assert_eq!(read(a.path(), LOG_FILE), read(b.path(), LOG_FILE));
        for f in ["ckpt_4.bin", "ckpt_6.bin"] {
            assert_eq!(read(a.path(), f), read(b.path(), f));
        }
        let text = String::from_utf8(read(a.path(), LOG_FILE)).unwrap();
        assert_eq!(text.lines().count(), 6);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["episode", "return", "outcome", "epsilon", "mean_loss"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert!(ra.log.iter().any(|l| l.mean_loss.is_some()));
    }

    #[test]
    fn config_file_layout() {
        let text = r#"{"train": {"episodes": 5, "seed": 2}, "scenario": {"n_humans": 2, "n_other_robots": 1}}"#;
        let f: TrainFile = serde_json::from_str(text).unwrap();
        assert_eq!(f.train.episodes, 5);
        assert_eq!(f.train.batch_size, 100);
        assert_eq!(f.scenario.n_humans, 2);
        assert!(serde_json::from_str::<TrainFile>(r#"{"train": {"epochs": 5}}"#).is_err());
        let bad = TrainConfig { epsilon_end: 0.6, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}
