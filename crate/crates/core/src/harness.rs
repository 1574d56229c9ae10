//! Experiment orchestration: the train loop, policy evaluation with the
//! gait metric suite, weight-sweep planning/aggregation, curve smoothing,
//! and the binary checkpoint format.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, ObsNormalizer};
use crate::model::ModelConfig;
use crate::nn::{policy_sample, Activation, Actor, Critic, Layer, Mlp};
use crate::ppo::{PpoConfig, PpoLearner, RolloutBuffer, UpdateStats};
use crate::rewards::{crutch_displacement_cost, CrutchCostForm, RewardConfig};

/// Full experiment description: physical model, reward shaping, learner
/// hyperparameters, and the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub reward: RewardConfig,
    pub ppo: PpoConfig,
    pub env: crate::env::EnvConfig,
    /// Rollout+update cycles per training run.
    pub iterations: usize,
    pub seeds: Vec<u64>,
    /// Crutch-penalty weights, one trained agent per entry; a weight-0
    /// baseline row is always prepended by the sweep.
    pub agent_weights: Vec<f64>,
    pub eval_horizon: usize,
    /// Common evaluation weight applied to every agent's crutch cost.
    pub eval_weight: f64,
    /// Initial policy standard deviation.
    pub init_std: f64,
    /// Checkpoint cadence in iterations (0 = only final).
    pub checkpoint_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            reward: RewardConfig::default(),
            ppo: PpoConfig::default(),
            env: crate::env::EnvConfig::default(),
            iterations: 8000,
            seeds: alloc::vec![0, 1, 2, 3, 4],
            agent_weights: alloc::vec![4e4, 3e4, 2e4, 1e4],
            eval_horizon: 2000,
            eval_weight: 4e4,
            init_std: 1.0,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    ZeroIterations,
    NoSeeds,
    ZeroEvalHorizon,
}

impl core::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ConfigError::ZeroIterations => write!(f, "iterations must be >= 1"),
            ConfigError::NoSeeds => write!(f, "at least one seed is required"),
            ConfigError::ZeroEvalHorizon => write!(f, "evaluation horizon must be >= 1"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.iterations == 0 {
            return Err(ConfigError::ZeroIterations);
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::NoSeeds);
        }
        if self.eval_horizon == 0 {
            return Err(ConfigError::ZeroEvalHorizon);
        }
        Ok(())
    }
}

/// One training-log row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterLog {
    pub iter: usize,
    /// Average cumulative return over the episodes touched by the rollout.
    pub cum_reward: f64,
    pub mean_ratio: f64,
    pub clip_frac: f64,
    pub entropy: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy_coef: f64,
}

impl IterLog {
    pub fn csv_header() -> &'static str {
        "iter,cum_reward,mean_ratio,clip_frac,entropy,actor_loss,critic_loss,entropy_coef"
    }

    pub fn csv_row(&self) -> String {
        alloc::format!(
            "{},{},{},{},{},{},{},{}",
            self.iter,
            self.cum_reward,
            self.mean_ratio,
            self.clip_frac,
            self.entropy,
            self.actor_loss,
            self.critic_loss,
            self.entropy_coef
        )
    }

    fn from_stats(iter: usize, cum_reward: f64, s: &UpdateStats) -> Self {
        IterLog {
            iter,
            cum_reward,
            mean_ratio: s.mean_ratio,
            clip_frac: s.clip_fraction,
            entropy: s.entropy,
            actor_loss: s.actor_loss,
            critic_loss: s.critic_loss,
            entropy_coef: s.entropy_coef,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Config(ConfigError),
    /// The update produced a non-finite loss at this iteration.
    NonFiniteLoss { iter: usize },
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::Config(e) => write!(f, "invalid config: {e}"),
            TrainError::NonFiniteLoss { iter } => {
                write!(f, "training diverged (non-finite loss) at iteration {iter}")
            }
        }
    }
}

pub struct TrainResult {
    pub learner: PpoLearner,
    pub normalizer: ObsNormalizer,
    pub logs: Vec<IterLog>,
}

/// Run the full iteration loop (collect rollout -> PPO update) on any
/// environment. Deterministic for a given seed: one master RNG drives
/// network initialization, episode reset seeds, action sampling, and
/// minibatch shuffling. `on_iter` fires after every update and can be used
/// for logging or periodic checkpointing.
pub fn train<E: Environment + ?Sized>(
    env: &mut E,
    ppo_cfg: PpoConfig,
    iterations: usize,
    init_std: f64,
    seed: u64,
    mut on_iter: impl FnMut(&IterLog, &PpoLearner, &ObsNormalizer),
) -> Result<TrainResult, TrainError> {
    if iterations == 0 {
        return Err(TrainError::Config(ConfigError::ZeroIterations));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actor = Actor::new(env.obs_dim(), env.action_dim(), init_std, &mut rng);
    let critic = Critic::new(env.obs_dim(), &mut rng);
    let mut learner = PpoLearner::new(actor, critic, ppo_cfg);

    let mut logs = Vec::with_capacity(iterations);
    let mut buffer = RolloutBuffer::with_capacity(ppo_cfg.rollout_length);
    let mut obs = env.reset(rng.gen());
    let mut need_reset = false;

    for iter in 0..iterations {
        buffer.clear();
        let mut reward_sum = 0.0;
        let mut episodes = 0usize;
        let mut last_done = false;
        for _ in 0..ppo_cfg.rollout_length {
            if need_reset {
                obs = env.reset(rng.gen());
                need_reset = false;
            }
            let (out, _) = learner.actor.forward(&obs);
            let (action, log_prob) = policy_sample(&out, &mut rng);
            let (value, _) = learner.critic.value(&obs);
            let result = env.step(&action);
            reward_sum += result.reward;
            buffer.push(obs, action, log_prob, value, result.reward, result.done);
            obs = result.observation;
            last_done = result.done;
            if result.done {
                episodes += 1;
                need_reset = true;
            }
        }
        // Trailing partial episode counts toward the average return.
        let episode_count = episodes + usize::from(!last_done);
        let cum_reward = reward_sum / episode_count as f64;

        let bootstrap = if last_done { 0.0 } else { learner.critic.value(&obs).0 };
        let stats = learner
            .update(&buffer, bootstrap, &mut rng)
            .map_err(|_| TrainError::NonFiniteLoss { iter })?;

        let log = IterLog::from_stats(iter, cum_reward, &stats);
        let normalizer = env
            .normalizer()
            .cloned()
            .unwrap_or_else(|| ObsNormalizer::new(env.obs_dim(), false));
        on_iter(&log, &learner, &normalizer);
        logs.push(log);
    }

    let normalizer = env
        .normalizer()
        .cloned()
        .unwrap_or_else(|| ObsNormalizer::new(env.obs_dim(), false));
    Ok(TrainResult { learner, normalizer, logs })
}

/// Trailing moving average with partial windows at the head.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be >= 1");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        let n = core::cmp::min(window, i + 1);
        out.push(sum / n as f64);
    }
    out
}

/// Gait quality metrics over one evaluation rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Mean per-step weighted crutch displacement cost.
    pub mean_crutch_cost: f64,
    /// Mean absolute percentage error of forward velocity, %.
    pub mape_velocity: f64,
    /// Mean absolute percentage error of trunk lean, %.
    pub mape_orientation: f64,
    /// Mean absolute lateral drift, m.
    pub mean_abs_lateral_displacement: f64,
}

/// Per-step evaluation trace alongside the aggregated report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTrace {
    /// Steps realized before termination (== horizon when no fall).
    pub steps: usize,
    pub fell: bool,
    pub mean_step_reward: f64,
    /// (time index, forward velocity, pitch, crutch disp r, crutch disp l).
    pub rows: Vec<(usize, f64, f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub horizon: usize,
    pub weight: f64,
    pub cost_form: CrutchCostForm,
    pub target_velocity: f64,
    pub target_orientation: f64,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            horizon: 2000,
            weight: 4e4,
            cost_form: CrutchCostForm::Linear,
            target_velocity: 0.25,
            target_orientation: 0.35,
            seed: 0,
        }
    }
}

/// Deterministic evaluation rollout with mean actions and frozen
/// observation normalization. Metrics are averaged over realized steps, so
/// an early fall still yields a report.
pub fn evaluate<E: Environment + ?Sized>(
    env: &mut E,
    actor: &Actor,
    settings: &EvalSettings,
) -> (MetricsReport, EvalTrace) {
    env.set_normalizer_frozen(true);
    let mut obs = env.reset(settings.seed);
    let mut crutch_cost = 0.0;
    let mut vel_err = 0.0;
    let mut ori_err = 0.0;
    let mut lat = 0.0;
    let mut reward_sum = 0.0;
    let mut rows = Vec::new();
    let mut steps = 0usize;
    let mut fell = false;
    for t in 0..settings.horizon {
        let (out, _) = actor.forward(&obs);
        let result = env.step(&out.mean);
        let info = &result.info;
        let d_r = info.contact_disp.get(3).copied().unwrap_or(0.0);
        let d_l = info.contact_disp.get(2).copied().unwrap_or(0.0);
        crutch_cost += settings.weight * crutch_displacement_cost(d_r, d_l, settings.cost_form);
        vel_err += (info.com_vel.0 - settings.target_velocity).abs() / settings.target_velocity;
        ori_err += (info.pitch - settings.target_orientation).abs() / settings.target_orientation;
        lat += info.lateral_pos.abs();
        reward_sum += result.reward;
        rows.push((t, info.com_vel.0, info.pitch, d_r, d_l));
        steps += 1;
        obs = result.observation;
        if result.done {
            fell = result.cause == Some(crate::env::TerminationCause::Fall)
                || result.cause == Some(crate::env::TerminationCause::Divergence);
            break;
        }
    }
    env.set_normalizer_frozen(false);
    let n = steps.max(1) as f64;
    let report = MetricsReport {
        mean_crutch_cost: crutch_cost / n,
        mape_velocity: 100.0 * vel_err / n,
        mape_orientation: 100.0 * ori_err / n,
        mean_abs_lateral_displacement: lat / n,
    };
    let trace = EvalTrace { steps, fell, mean_step_reward: reward_sum / n, rows };
    (report, trace)
}

/// One (agent, seed) cell of the sweep grid. Agent 0 is always the
/// weight-0 baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub agent: usize,
    pub weight: f64,
    pub seed: u64,
}

/// Canonical cell ordering: baseline first, then agents in config order,
/// seeds innermost. Parallel executors must restore this order before
/// emitting results.
pub fn sweep_plan(cfg: &ExperimentConfig) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    let mut weights = alloc::vec![0.0];
    weights.extend(cfg.agent_weights.iter().copied());
    for (agent, &weight) in weights.iter().enumerate() {
        for &seed in &cfg.seeds {
            cells.push(SweepCell { agent, weight, seed });
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: SweepCell,
    pub report: MetricsReport,
    pub logs: Vec<IterLog>,
}

/// Per-agent arithmetic means of every metric, in agent order.
pub fn aggregate_cells(results: &[CellResult]) -> Vec<(usize, f64, MetricsReport)> {
    let mut agents: Vec<usize> = results.iter().map(|r| r.cell.agent).collect();
    agents.sort_unstable();
    agents.dedup();
    agents
        .iter()
        .map(|&agent| {
            let rows: Vec<&CellResult> =
                results.iter().filter(|r| r.cell.agent == agent).collect();
            let n = rows.len() as f64;
            let weight = rows[0].cell.weight;
            let mean = MetricsReport {
                mean_crutch_cost: rows.iter().map(|r| r.report.mean_crutch_cost).sum::<f64>() / n,
                mape_velocity: rows.iter().map(|r| r.report.mape_velocity).sum::<f64>() / n,
                mape_orientation: rows.iter().map(|r| r.report.mape_orientation).sum::<f64>() / n,
                mean_abs_lateral_displacement: rows
                    .iter()
                    .map(|r| r.report.mean_abs_lateral_displacement)
                    .sum::<f64>()
                    / n,
            };
            (agent, weight, mean)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic "CGCK", version, layer shape table for the actor
// (trunk layers, mean head, std head) and critic, then all parameters as
// little-endian f64 in flatten order, then the normalizer state.

const CHECKPOINT_MAGIC: [u8; 4] = *b"CGCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub actor: Actor,
    pub critic: Critic,
    pub normalizer: ObsNormalizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointError {
    BadMagic,
    BadVersion,
    Truncated,
    BadShape,
    BadActivation,
}

impl core::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let msg = match self {
            CheckpointError::BadMagic => "bad magic bytes",
            CheckpointError::BadVersion => "unsupported version",
            CheckpointError::Truncated => "truncated data",
            CheckpointError::BadShape => "inconsistent layer shapes",
            CheckpointError::BadActivation => "unknown activation tag",
        };
        write!(f, "checkpoint corrupt: {msg}")
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_layer_shape(out: &mut Vec<u8>, layer: &Layer) {
    put_u32(out, layer.w.nrows() as u32);
    put_u32(out, layer.w.ncols() as u32);
    out.push(layer.act.tag());
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.data.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    fn layer_shape(&mut self) -> Result<Layer, CheckpointError> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        if rows == 0 || cols == 0 || rows > 1 << 20 || cols > 1 << 20 {
            return Err(CheckpointError::BadShape);
        }
        let act = Activation::from_tag(self.u8()?).ok_or(CheckpointError::BadActivation)?;
        Ok(Layer::zeros(cols, rows, act))
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, ckpt.actor.trunk.layers.len() as u32);
    for l in &ckpt.actor.trunk.layers {
        put_layer_shape(&mut out, l);
    }
    put_layer_shape(&mut out, &ckpt.actor.mean_head);
    put_layer_shape(&mut out, &ckpt.actor.std_head);
    put_u32(&mut out, ckpt.critic.net.layers.len() as u32);
    for l in &ckpt.critic.net.layers {
        put_layer_shape(&mut out, l);
    }
    for v in ckpt.actor.flatten() {
        put_f64(&mut out, v);
    }
    for v in ckpt.critic.flatten() {
        put_f64(&mut out, v);
    }
    let norm = &ckpt.normalizer;
    put_u32(&mut out, norm.mean.len() as u32);
    out.push(u8::from(norm.enabled));
    put_f64(&mut out, norm.count);
    for v in &norm.mean {
        put_f64(&mut out, *v);
    }
    for v in &norm.m2 {
        put_f64(&mut out, *v);
    }
    out
}

pub fn decode_checkpoint(data: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if r.u32()? != CHECKPOINT_VERSION {
        return Err(CheckpointError::BadVersion);
    }
    let n_trunk = r.u32()? as usize;
    if n_trunk == 0 || n_trunk > 64 {
        return Err(CheckpointError::BadShape);
    }
    let mut trunk_layers = Vec::with_capacity(n_trunk);
    for _ in 0..n_trunk {
        trunk_layers.push(r.layer_shape()?);
    }
    let mean_head = r.layer_shape()?;
    let std_head = r.layer_shape()?;
    let n_critic = r.u32()? as usize;
    if n_critic == 0 || n_critic > 64 {
        return Err(CheckpointError::BadShape);
    }
    let mut critic_layers = Vec::with_capacity(n_critic);
    for _ in 0..n_critic {
        critic_layers.push(r.layer_shape()?);
    }

    // Consecutive layers must chain; both heads hang off the trunk output.
    for pair in trunk_layers.windows(2) {
        if pair[1].w.ncols() != pair[0].w.nrows() {
            return Err(CheckpointError::BadShape);
        }
    }
    let hidden = trunk_layers.last().unwrap().w.nrows();
    if mean_head.w.ncols() != hidden || std_head.w.ncols() != hidden {
        return Err(CheckpointError::BadShape);
    }
    if mean_head.w.nrows() != std_head.w.nrows() {
        return Err(CheckpointError::BadShape);
    }
    for pair in critic_layers.windows(2) {
        if pair[1].w.ncols() != pair[0].w.nrows() {
            return Err(CheckpointError::BadShape);
        }
    }
    if critic_layers.last().unwrap().w.nrows() != 1 {
        return Err(CheckpointError::BadShape);
    }

    let mut actor = Actor { trunk: Mlp { layers: trunk_layers }, mean_head, std_head };
    let mut critic = Critic { net: Mlp { layers: critic_layers } };

    let mut actor_params = alloc::vec![0.0; actor.param_count()];
    for v in actor_params.iter_mut() {
        *v = r.f64()?;
    }
    actor.unflatten(&actor_params);
    let mut critic_params = alloc::vec![0.0; critic.param_count()];
    for v in critic_params.iter_mut() {
        *v = r.f64()?;
    }
    critic.unflatten(&critic_params);

    let dim = r.u32()? as usize;
    if dim > 1 << 20 {
        return Err(CheckpointError::BadShape);
    }
    let enabled = r.u8()? != 0;
    let count = r.f64()?;
    let mut normalizer = ObsNormalizer::new(dim, enabled);
    normalizer.count = count;
    for v in normalizer.mean.iter_mut() {
        *v = r.f64()?;
    }
    for v in normalizer.m2.iter_mut() {
        *v = r.f64()?;
    }
    if r.pos != data.len() {
        return Err(CheckpointError::BadShape);
    }
    Ok(Checkpoint { actor, critic, normalizer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointmass::PointMassEnv;

    #[test]
    fn moving_average_constant_series() {
        let s = alloc::vec![3.5; 40];
        let out = moving_average(&s, 10);
        assert_eq!(out.len(), 40);
        assert!(out.iter().all(|v| (v - 3.5).abs() < 1e-12));
    }

    #[test]
    fn moving_average_partial_window() {
        let out = moving_average(&[0.0, 1.0], 2);
        assert_eq!(out, alloc::vec![0.0, 0.5]);
    }

    #[test]
    fn moving_average_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let series: Vec<f64> = (0..500).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let window = 100;
        let fast = moving_average(&series, window);
        for i in 0..series.len() {
            let lo = i + 1 - core::cmp::min(window, i + 1);
            let slow: f64 =
                series[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64;
            assert!((fast[i] - slow).abs() < 1e-12, "index {i}");
        }
    }

    #[test]
    fn train_rejects_zero_iterations() {
        let mut env = PointMassEnv::new(64);
        let err = train(&mut env, PpoConfig::default(), 0, 0.5, 1, |_, _, _| {});
        assert!(matches!(err, Err(TrainError::Config(ConfigError::ZeroIterations))));
    }

    #[test]
    fn train_logs_are_deterministic() {
        let run = || {
            let mut env = PointMassEnv::new(64);
            let cfg = PpoConfig { rollout_length: 128, ..PpoConfig::default() };
            train(&mut env, cfg, 2, 0.5, 7, |_, _, _| {}).unwrap().logs
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.iterations = 0;
        assert_eq!(cfg.validate(), Err(ConfigError::ZeroIterations));
        cfg.iterations = 1;
        cfg.seeds.clear();
        assert_eq!(cfg.validate(), Err(ConfigError::NoSeeds));
    }

    #[test]
    fn sweep_plan_includes_baseline_and_all_cells() {
        let cfg = ExperimentConfig {
            agent_weights: alloc::vec![4e4, 2e4],
            seeds: alloc::vec![0, 1, 2],
            ..ExperimentConfig::default()
        };
        let plan = sweep_plan(&cfg);
        assert_eq!(plan.len(), (2 + 1) * 3);
        assert_eq!(plan[0], SweepCell { agent: 0, weight: 0.0, seed: 0 });
        assert_eq!(plan[3], SweepCell { agent: 1, weight: 4e4, seed: 0 });
    }

    #[test]
    fn aggregation_is_arithmetic_mean() {
        let mk = |agent, weight, seed, cost| CellResult {
            cell: SweepCell { agent, weight, seed },
            report: MetricsReport {
                mean_crutch_cost: cost,
                mape_velocity: 2.0 * cost,
                mape_orientation: 0.0,
                mean_abs_lateral_displacement: 0.0,
            },
            logs: Vec::new(),
        };
        let cells = alloc::vec![
            mk(0, 0.0, 0, 1.0),
            mk(0, 0.0, 1, 3.0),
            mk(1, 4e4, 0, 10.0)
        ];
        let agg = aggregate_cells(&cells);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].0, 0);
        assert!((agg[0].2.mean_crutch_cost - 2.0).abs() < 1e-12);
        assert!((agg[0].2.mape_velocity - 4.0).abs() < 1e-12);
        assert!((agg[1].2.mean_crutch_cost - 10.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_metrics_arithmetic() {
        // Velocity exactly on target -> 0% error; 0.20 -> 20%.
        let err = |v: f64| (v - 0.25f64).abs() / 0.25 * 100.0;
        assert_eq!(err(0.25), 0.0);
        assert!((err(0.20) - 20.0).abs() < 1e-12);
        // d_r = d_l = 1e-5 at weight 4e4 (linear form) -> 0.8 per step.
        let cost = 4e4 * crutch_displacement_cost(1e-5, 1e-5, CrutchCostForm::Linear);
        assert!((cost - 0.8).abs() < 1e-12);
    }

    #[test]
    fn evaluate_uses_mean_actions_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let actor = Actor::new(1, 1, 0.5, &mut rng);
        let settings = EvalSettings { horizon: 64, ..EvalSettings::default() };
        let mut env = PointMassEnv::new(64);
        let (r1, t1) = evaluate(&mut env, &actor, &settings);
        let mut env = PointMassEnv::new(64);
        let (r2, t2) = evaluate(&mut env, &actor, &settings);
        assert_eq!(r1, r2);
        assert_eq!(t1, t2);
        assert_eq!(t1.steps, 64);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let actor = Actor::new(46, 10, 0.6, &mut rng);
        let critic = Critic::new(46, &mut rng);
        let mut normalizer = ObsNormalizer::new(46, true);
        normalizer.count = 3.0;
        for (i, v) in normalizer.mean.iter_mut().enumerate() {
            *v = i as f64 * 0.1;
        }
        let ckpt = Checkpoint { actor, critic, normalizer };
        let bytes = encode_checkpoint(&ckpt);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ckpt, back);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ckpt = Checkpoint {
            actor: Actor::new(4, 2, 0.5, &mut rng),
            critic: Critic::new(4, &mut rng),
            normalizer: ObsNormalizer::new(4, true),
        };
        let bytes = encode_checkpoint(&ckpt);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode_checkpoint(&bad), Err(CheckpointError::BadMagic));

        let mut bad = bytes.clone();
        bad[4] = 99;
        assert_eq!(decode_checkpoint(&bad), Err(CheckpointError::BadVersion));

        let truncated = &bytes[..bytes.len() - 3];
        assert_eq!(decode_checkpoint(truncated), Err(CheckpointError::Truncated));

        // Corrupt the mean-head shape header: rows of the first trunk layer.
        let mut bad = bytes.clone();
        bad[12] = 0xFF;
        bad[13] = 0xFF;
        bad[14] = 0xFF;
        assert!(decode_checkpoint(&bad).is_err());
    }

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
}
