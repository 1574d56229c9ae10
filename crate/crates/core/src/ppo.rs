//! PPO learner: GAE advantages, clipped surrogate objective, critic
//! regression, entropy regularization, and the epoch/minibatch update loop.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mathx;
use crate::nn::{policy_entropy, policy_log_prob, Actor, ActorGrad, Adam, Critic, MlpGrad};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub k_epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    /// Multiplicative decay of the entropy coefficient per update.
    pub entropy_decay: f64,
    pub gae_lambda: f64,
    pub gamma: f64,
    /// Critic loss weight in the combined objective.
    pub critic_coef: f64,
    pub learning_rate: f64,
    pub rollout_length: usize,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_epsilon: 0.2,
            k_epochs: 10,
            minibatch_size: 64,
            entropy_coef: 1e-3,
            entropy_decay: 0.99,
            gae_lambda: 0.95,
            gamma: 0.99,
            critic_coef: 0.5,
            learning_rate: 3e-4,
            rollout_length: 2000,
            normalize_advantages: true,
        }
    }
}

/// On-policy trajectory storage for one update.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub observations: Vec<DVector<f64>>,
    pub actions: Vec<DVector<f64>>,
    pub log_probs_old: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl RolloutBuffer {
    pub fn with_capacity(n: usize) -> Self {
        RolloutBuffer {
            observations: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            log_probs_old: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
        }
    }

    pub fn push(
        &mut self,
        obs: DVector<f64>,
        action: DVector<f64>,
        log_prob: f64,
        value: f64,
        reward: f64,
        done: bool,
    ) {
        self.observations.push(obs);
        self.actions.push(action);
        self.log_probs_old.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        self.observations.clear();
        self.actions.clear();
        self.log_probs_old.clear();
        self.values.clear();
        self.rewards.clear();
        self.dones.clear();
    }
}

/// Generalized advantage estimation. Returns (advantages, value targets).
/// `bootstrap_value` is V(s_T) for the state after the last stored step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let delta = rewards[t] + gamma * next_value * not_done - values[t];
        next_adv = delta + gamma * lambda * not_done * next_adv;
        advantages[t] = next_adv;
    }
    let returns: Vec<f64> = advantages.iter().zip(values.iter()).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Probability ratio pi_new / pi_old from log-probabilities.
pub fn prob_ratio(log_prob_new: f64, log_prob_old: f64) -> f64 {
    mathx::exp(log_prob_new - log_prob_old)
}

/// Clipped surrogate objective for one sample (to be maximized).
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Mean squared error critic loss.
pub fn critic_loss(v_pred: &[f64], v_targ: &[f64]) -> f64 {
    assert_eq!(v_pred.len(), v_targ.len());
    assert!(!v_pred.is_empty());
    let sum: f64 = v_pred.iter().zip(v_targ.iter()).map(|(p, t)| (p - t) * (p - t)).sum();
    sum / v_pred.len() as f64
}

/// Combined loss to minimize: the negated entropy-regularized objective.
pub fn total_loss(surrogate: f64, critic: f64, entropy: f64, c1: f64, c2: f64) -> f64 {
    -(surrogate - c1 * critic + c2 * entropy)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonFiniteLoss;

impl core::fmt::Display for NonFiniteLoss {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "PPO update produced a non-finite loss")
    }
}

/// Actor-critic pair with optimizers and the decaying entropy coefficient.
pub struct PpoLearner {
    pub actor: Actor,
    pub critic: Critic,
    pub cfg: PpoConfig,
    actor_opt: Adam,
    critic_opt: Adam,
    entropy_coef: f64,
}

impl PpoLearner {
    pub fn new(actor: Actor, critic: Critic, cfg: PpoConfig) -> Self {
        let actor_opt = Adam::new(cfg.learning_rate, actor.param_count());
        let critic_opt = Adam::new(cfg.learning_rate, critic.param_count());
        let entropy_coef = cfg.entropy_coef;
        PpoLearner { actor, critic, cfg, actor_opt, critic_opt, entropy_coef }
    }

    pub fn entropy_coef(&self) -> f64 {
        self.entropy_coef
    }

    /// One PPO update over a full rollout buffer: K epochs of shuffled
    /// minibatches, then entropy coefficient decay.
    pub fn update(
        &mut self,
        buffer: &RolloutBuffer,
        bootstrap_value: f64,
        rng: &mut impl Rng,
    ) -> Result<UpdateStats, NonFiniteLoss> {
        let n = buffer.len();
        assert!(n > 0, "empty rollout buffer");

        let (mut advantages, returns) = compute_gae(
            &buffer.rewards,
            &buffer.values,
            &buffer.dones,
            bootstrap_value,
            self.cfg.gamma,
            self.cfg.gae_lambda,
        );
        if self.cfg.normalize_advantages && n > 1 {
            let mean: f64 = advantages.iter().sum::<f64>() / n as f64;
            let var: f64 =
                advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
            let std = mathx::sqrt(var).max(1e-8);
            for a in &mut advantages {
                *a = (*a - mean) / std;
            }
        }

        let mut stats = UpdateStats { entropy_coef: self.entropy_coef, ..Default::default() };
        let mut batches = 0usize;
        let mut samples = 0usize;

        let mut indices: Vec<usize> = (0..n).collect();
        for _ in 0..self.cfg.k_epochs {
            shuffle(&mut indices, rng);
            for chunk in indices.chunks(self.cfg.minibatch_size.max(1)) {
                let m = chunk.len() as f64;
                let mut actor_grad = ActorGrad::zeros_like(&self.actor);
                let mut critic_grad = MlpGrad::zeros_like(&self.critic.net);
                let mut batch_surrogate = 0.0;
                let mut batch_critic = 0.0;
                let mut batch_entropy = 0.0;

                for &i in chunk {
                    let obs = &buffer.observations[i];
                    let action = &buffer.actions[i];
                    let adv = advantages[i];

                    let (out, cache) = self.actor.forward(obs);
                    let lp_new = policy_log_prob(&out, action);
                    let ratio = prob_ratio(lp_new, buffer.log_probs_old[i]);
                    stats.mean_ratio += ratio;
                    samples += 1;

                    let eps = self.cfg.clip_epsilon;
                    let unclipped = ratio * adv;
                    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
                    batch_surrogate += unclipped.min(clipped);
                    if (ratio - 1.0).abs() > eps {
                        stats.clip_fraction += 1.0;
                    }

                    // d surrogate / d log_prob_new: nonzero only on the
                    // unclipped branch of the min.
                    let surr_dlp = if unclipped <= clipped { ratio * adv } else { 0.0 };

                    // Chain into mean/std gradients of the Gaussian log-prob
                    // and the entropy bonus. Objective is maximized, so the
                    // parameter gradient gets a leading minus for Adam.
                    let dim = out.mean.len();
                    let mut dmean = DVector::zeros(dim);
                    let mut dstd = DVector::zeros(dim);
                    for k in 0..dim {
                        let sigma = out.std[k];
                        let diff = action[k] - out.mean[k];
                        let dlp_dmean = diff / (sigma * sigma);
                        let dlp_dstd = diff * diff / (sigma * sigma * sigma) - 1.0 / sigma;
                        // entropy: dS/dstd = 1/sigma
                        dmean[k] = -(surr_dlp * dlp_dmean);
                        dstd[k] = -(surr_dlp * dlp_dstd + self.entropy_coef / sigma);
                    }
                    batch_entropy += policy_entropy(&out.std);
                    let g = self.actor.backward(&cache, &dmean, &dstd);
                    actor_grad.accumulate(&g, 1.0 / m);

                    // Critic regression toward the GAE returns.
                    let (v, vcache) = self.critic.value(obs);
                    let err = v - returns[i];
                    batch_critic += err * err;
                    let dv = DVector::from_column_slice(&[2.0 * err * self.cfg.critic_coef / m]);
                    let (cg, _) = self.critic.net.backward(&vcache, &dv);
                    critic_grad.accumulate(&cg, 1.0);
                }

                batch_surrogate /= m;
                batch_critic /= m;
                batch_entropy /= m;
                let loss = total_loss(
                    batch_surrogate,
                    batch_critic,
                    batch_entropy,
                    self.cfg.critic_coef,
                    self.entropy_coef,
                );
                if !loss.is_finite() {
                    return Err(NonFiniteLoss);
                }
                stats.actor_loss += -batch_surrogate;
                stats.critic_loss += batch_critic;
                stats.entropy += batch_entropy;
                batches += 1;

                let mut params = self.actor.flatten();
                self.actor_opt.step(&mut params, &actor_grad.flatten());
                self.actor.unflatten(&params);

                let mut params = self.critic.flatten();
                self.critic_opt.step(&mut params, &critic_grad.flatten());
                self.critic.unflatten(&params);
            }
        }

        stats.actor_loss /= batches as f64;
        stats.critic_loss /= batches as f64;
        stats.entropy /= batches as f64;
        stats.mean_ratio /= samples as f64;
        stats.clip_fraction /= samples as f64;

        self.entropy_coef *= self.cfg.entropy_decay;
        Ok(stats)
    }
}

/// Fisher-Yates shuffle (kept local so rollouts stay reproducible across
/// `rand` version bumps).
fn shuffle(indices: &mut [usize], rng: &mut impl Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gae_single_terminal_step() {
        let (adv, ret) = compute_gae(&[1.0], &[0.0], &[true], 99.0, 0.99, 0.95);
        assert_eq!(adv, vec![1.0]);
        assert_eq!(ret, vec![1.0]);
    }

    #[test]
    fn gae_gamma_zero_is_td_error() {
        let rewards = [1.0, 2.0, 3.0];
        let values = [0.5, 0.25, -0.5];
        let dones = [false, false, false];
        let (adv, _) = compute_gae(&rewards, &values, &dones, 1.0, 0.0, 0.95);
        for t in 0..3 {
            assert!((adv[t] - (rewards[t] - values[t])).abs() < 1e-15);
        }
    }

    /// Brute-force oracle: advantage as the explicit double loop over
    /// (gamma lambda)^k weighted TD residuals, truncated at episode ends.
    fn gae_brute_force(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        bootstrap: f64,
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let n = rewards.len();
        let delta = |t: usize| -> f64 {
            let next = if t + 1 < n { values[t + 1] } else { bootstrap };
            let not_done = if dones[t] { 0.0 } else { 1.0 };
            rewards[t] + gamma * next * not_done - values[t]
        };
        (0..n)
            .map(|t| {
                let mut acc = 0.0;
                let mut weight = 1.0;
                for k in t..n {
                    acc += weight * delta(k);
                    if dones[k] {
                        break;
                    }
                    weight *= gamma * lambda;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn gae_matches_brute_force_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let n = 10;
            let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dones: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
            let bootstrap = rng.gen_range(-1.0..1.0);
            let gamma = rng.gen_range(0.9..1.0);
            let lambda = rng.gen_range(0.8..1.0);
            let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
            let oracle = gae_brute_force(&rewards, &values, &dones, bootstrap, gamma, lambda);
            for t in 0..n {
                assert!((adv[t] - oracle[t]).abs() < 1e-10, "t={t}");
                assert!((ret[t] - (oracle[t] + values[t])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn prob_ratio_values() {
        assert_eq!(prob_ratio(-1.3, -1.3), 1.0);
        assert!((prob_ratio(-0.5 + mathx::ln(2.0), -0.5) - 2.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let lp_new = rng.gen_range(-5.0..0.0);
            let lp_old = rng.gen_range(-5.0..0.0);
            let direct = mathx::exp(lp_new) / mathx::exp(lp_old);
            assert!((prob_ratio(lp_new, lp_old) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn clipped_surrogate_branches() {
        assert!((clipped_surrogate(1.5, 2.0, 0.2) - 2.4).abs() < 1e-15);
        assert!((clipped_surrogate(1.0, 3.7, 0.2) - 3.7).abs() < 1e-15);
        assert!((clipped_surrogate(0.5, -1.0, 0.25) - (-0.75)).abs() < 1e-15);
    }

    #[test]
    fn surrogate_monotone_in_epsilon_tightening() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let r = rng.gen_range(0.0..2.0);
            let a = rng.gen_range(-2.0..2.0);
            let loose = clipped_surrogate(r, a, 0.3);
            let tight = clipped_surrogate(r, a, 0.1);
            assert!(tight <= loose + 1e-12);
        }
    }

    #[test]
    fn critic_loss_values() {
        assert_eq!(critic_loss(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(critic_loss(&[1.0], &[0.0]), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let pred: Vec<f64> = (0..32).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let targ: Vec<f64> = (0..32).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut hand = 0.0;
        for i in 0..32 {
            hand += (pred[i] - targ[i]) * (pred[i] - targ[i]);
        }
        hand /= 32.0;
        assert!((critic_loss(&pred, &targ) - hand).abs() < 1e-12);
    }

    #[test]
    fn total_loss_values() {
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.5, 1e-3), 0.0);
        assert_eq!(total_loss(1.0, 0.0, 0.0, 0.5, 1e-3), -1.0);
        let v = total_loss(1.0, 2.0, 3.0, 0.5, 1e-3);
        assert!((v - (-0.003)).abs() < 1e-12);
    }

    fn synthetic_buffer(n: usize, obs_dim: usize, act_dim: usize, seed: u64) -> RolloutBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Actor::new(obs_dim, act_dim, 0.5, &mut rng);
        let mut buf = RolloutBuffer::with_capacity(n);
        for t in 0..n {
            let obs = DVector::from_fn(obs_dim, |_, _| rng.gen_range(-1.0..1.0));
            let (out, _) = actor.forward(&obs);
            let (action, lp) = crate::nn::policy_sample(&out, &mut rng);
            buf.push(obs, action, lp, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), t == n - 1);
        }
        buf
    }

    fn learner(obs_dim: usize, act_dim: usize, lr: f64, seed: u64, cfg: PpoConfig) -> PpoLearner {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Actor::new(obs_dim, act_dim, 0.5, &mut rng);
        let critic = Critic::new(obs_dim, &mut rng);
        PpoLearner::new(actor, critic, PpoConfig { learning_rate: lr, ..cfg })
    }

    #[test]
    fn mean_ratio_is_one_before_any_gradient_step() {
        // Single epoch, single minibatch spanning the buffer, and the actor
        // that produced the old log-probs: every ratio must be exactly 1.
        let n = 32;
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let actor = Actor::new(4, 2, 0.5, &mut rng);
        let critic = Critic::new(4, &mut rng);
        let mut buf = RolloutBuffer::with_capacity(n);
        let mut data_rng = ChaCha8Rng::seed_from_u64(31);
        for t in 0..n {
            let obs = DVector::from_fn(4, |_, _| data_rng.gen_range(-1.0..1.0));
            let (out, _) = actor.forward(&obs);
            let (action, lp) = crate::nn::policy_sample(&out, &mut data_rng);
            let v = critic.value(&obs).0;
            buf.push(obs, action, lp, v, data_rng.gen_range(-1.0..1.0), t == n - 1);
        }
        let cfg = PpoConfig { k_epochs: 1, minibatch_size: n, ..PpoConfig::default() };
        let mut ppo = PpoLearner::new(actor, critic, cfg);
        let stats = ppo.update(&buf, 0.0, &mut rng).unwrap();
        assert!((stats.mean_ratio - 1.0).abs() < 1e-6, "mean ratio {}", stats.mean_ratio);
        assert_eq!(stats.clip_fraction, 0.0);
    }

    #[test]
    fn entropy_coef_decays_per_update() {
        let buf = synthetic_buffer(16, 3, 2, 40);
        let mut ppo = learner(3, 2, 1e-4, 41, PpoConfig { k_epochs: 2, ..PpoConfig::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        assert_eq!(ppo.entropy_coef(), 1e-3);
        ppo.update(&buf, 0.0, &mut rng).unwrap();
        ppo.update(&buf, 0.0, &mut rng).unwrap();
        assert!((ppo.entropy_coef() - 1e-3 * 0.99 * 0.99).abs() < 1e-15);
        assert!((ppo.entropy_coef() - 9.801e-4).abs() < 1e-10);
    }

    #[test]
    fn update_is_deterministic_under_seed() {
        let buf = synthetic_buffer(32, 3, 2, 50);
        let run = || {
            let mut ppo = learner(3, 2, 3e-4, 51, PpoConfig::default());
            let mut rng = ChaCha8Rng::seed_from_u64(52);
            let stats = ppo.update(&buf, 0.1, &mut rng).unwrap();
            (stats, ppo.actor.flatten(), ppo.critic.flatten())
        };
        let (s1, a1, c1) = run();
        let (s2, a2, c2) = run();
        assert_eq!(s1, s2);
        assert_eq!(a1, a2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn zero_learning_rate_leaves_params_bitwise_unchanged() {
        let buf = synthetic_buffer(32, 3, 2, 60);
        let mut ppo = learner(3, 2, 0.0, 61, PpoConfig::default());
        let a0 = ppo.actor.flatten();
        let c0 = ppo.critic.flatten();
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        ppo.update(&buf, 0.0, &mut rng).unwrap();
        assert_eq!(ppo.actor.flatten(), a0);
        assert_eq!(ppo.critic.flatten(), c0);
    }

    #[test]
    fn advantage_normalization_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let n = 256;
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.05)).collect();
        let (mut adv, _) = compute_gae(&rewards, &values, &dones, 0.0, 0.99, 0.95);
        let mean: f64 = adv.iter().sum::<f64>() / n as f64;
        let var: f64 = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(1e-8);
        for a in &mut adv {
            *a = (*a - mean) / std;
        }
        let m: f64 = adv.iter().sum::<f64>() / n as f64;
        let v: f64 = adv.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n as f64;
        assert!(m.abs() < 1e-10);
        assert!((v - 1.0).abs() < 1e-6);
    }
}
