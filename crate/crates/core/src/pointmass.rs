//! Minimal 1-D velocity-tracking environment used to exercise the full
//! learning stack end to end with cheap dynamics.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{
    Action, Environment, Observation, StepInfo, StepResult, TerminationCause,
};
use crate::mathx;
use crate::rewards::RewardBreakdown;

/// A unit point mass on a line driven by a bounded force. The observation is
/// the current velocity; the reward peaks when the velocity matches the
/// target.
pub struct PointMassEnv {
    pub target_vel: f64,
    /// Reward sharpness; reward = exp(-c * (v - target)^2).
    pub c_track: f64,
    pub dt: f64,
    pub force_limit: f64,
    pub horizon: usize,
    pub vel: f64,
    steps: usize,
    rng: ChaCha8Rng,
    reset_noise: f64,
}

impl PointMassEnv {
    pub fn new(horizon: usize) -> Self {
        PointMassEnv {
            target_vel: 0.25,
            c_track: 50.0,
            dt: 0.05,
            force_limit: 1.0,
            horizon,
            vel: 0.0,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
            reset_noise: 0.05,
        }
    }
}

impl Environment for PointMassEnv {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.steps = 0;
        self.vel = self.rng.gen_range(-self.reset_noise..=self.reset_noise);
        DVector::from_element(1, self.vel)
    }

    fn step(&mut self, action: &Action) -> StepResult {
        let f = action[0].clamp(-self.force_limit, self.force_limit);
        self.vel += f * self.dt;
        self.steps += 1;
        let err = self.vel - self.target_vel;
        let reward = mathx::exp(-self.c_track * err * err);
        let done = self.steps >= self.horizon;
        let mut breakdown = RewardBreakdown::default();
        breakdown.r_walk = reward;
        breakdown.total = reward;
        StepResult {
            observation: DVector::from_element(1, self.vel),
            reward,
            done,
            cause: done.then_some(TerminationCause::Horizon),
            breakdown,
            info: StepInfo {
                com_vel: (self.vel, 0.0),
                ..StepInfo::default()
            },
        }
    }
}
