//! Planar locomotion-learning laboratory for a human-exoskeleton-crutch system.
//!
//! The crate is `no_std` (with `alloc`) and carries the full algorithmic
//! stack: anthropometric model construction, sagittal-plane articulated
//! rigid-body dynamics with spring-damper ground contact, the shaped reward
//! for crutch ground-reaction-force minimization, hand-written actor-critic
//! networks, a PPO learner, and the evaluation metric suite. File formats,
//! CSV/SVG emission, and the CLI live in the companion `crutchgait` crate.

#![no_std]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod dynamics;
pub mod env;
pub mod harness;
pub mod mathx;
pub mod model;
pub mod nn;
pub mod pointmass;
pub mod ppo;
pub mod rewards;

pub use dynamics::SimState;
pub use env::{Action, CrutchGaitEnv, Environment, Observation, StepResult};
pub use model::{ModelConfig, RobotModel, SubjectMeasurements};
pub use rewards::{RewardBreakdown, RewardConfig};
