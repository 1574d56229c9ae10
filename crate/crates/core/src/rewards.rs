//! Shaped reward for crutch-assisted walking.
//!
//! Nine terms: a Gaussian forward-velocity tracking reward, lateral-drift and
//! fall penalties, a quadratic action cost on the exoskeleton torques, trunk
//! orientation and flat-foot shaping, a crutch ground-reaction-force penalty
//! driven by contact-spring displacements, a hip-extension penalty, and a
//! both-crutches-airborne penalty. All constants are configurable.

use serde::{Deserialize, Serialize};

use crate::mathx;

/// Functional form of the crutch reaction-force penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrutchCostForm {
    /// -w * (d_r + d_l)
    Linear,
    /// -w * (d_r^2 + d_l^2)
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Gain inside the velocity-tracking exponential.
    pub c_walk: f64,
    /// Desired forward velocity, m/s.
    pub v_des: f64,
    pub p_z_min: f64,
    pub p_z_max: f64,
    pub dont_fall_bonus: f64,
    /// Quadratic action cost coefficient over the 6 exoskeleton torques.
    pub c_action: f64,
    /// Target trunk lean, rad.
    pub orientation_target: f64,
    pub orientation_gain: f64,
    pub flat_contact_gain: f64,
    pub w_crutch_reaction_force: f64,
    pub crutch_cost_form: CrutchCostForm,
    pub hip_penalty: f64,
    /// Crutch-tip displacement below which a crutch counts as airborne, m.
    pub crutch_contact_threshold: f64,
    pub crutch_contact_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            c_walk: 5e5,
            v_des: 0.25,
            p_z_min: 0.65,
            p_z_max: 3.0,
            dont_fall_bonus: 5.0,
            c_action: 1e-4,
            orientation_target: 0.35,
            orientation_gain: 8.0,
            flat_contact_gain: 10.0,
            w_crutch_reaction_force: 4e4,
            crutch_cost_form: CrutchCostForm::Linear,
            hip_penalty: 2.0,
            crutch_contact_threshold: 0.003,
            crutch_contact_penalty: 2.0,
        }
    }
}

/// Per-term reward values for one control step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub r_walk: f64,
    pub r_walk_straight: f64,
    pub r_dont_fall: f64,
    pub r_action: f64,
    pub r_orientation: f64,
    pub r_flat_contact: f64,
    pub r_crutch_reaction_force: f64,
    pub r_hip_angle: f64,
    pub r_ensure_crutch_contact: f64,
    pub total: f64,
}

/// Everything the reward terms need from one simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardInputs {
    /// CoM forward velocity, m/s.
    pub com_vel_x: f64,
    /// Lateral root position, m (identically 0 in the planar simulator).
    pub lateral_pos: f64,
    /// Root height, m.
    pub root_height: f64,
    /// Trunk lean angle, rad.
    pub pitch: f64,
    /// Exoskeleton joint torques: ankles, knees, hips.
    pub exo_torques: [f64; 6],
    pub hip_r: f64,
    pub knee_r: f64,
    pub ankle_r: f64,
    pub hip_l: f64,
    pub knee_l: f64,
    pub ankle_l: f64,
    /// Right/left crutch-tip spring displacements, m.
    pub d_crutch_r: f64,
    pub d_crutch_l: f64,
}

pub fn r_walk(com_vel_x: f64, cfg: &RewardConfig) -> f64 {
    let err = com_vel_x - cfg.v_des;
    mathx::exp(-cfg.c_walk * err * err)
}

pub fn r_walk_straight(lateral_pos: f64) -> f64 {
    -mathx::abs(lateral_pos)
}

pub fn r_dont_fall(root_height: f64, cfg: &RewardConfig) -> f64 {
    if cfg.p_z_min < root_height && root_height < cfg.p_z_max {
        cfg.dont_fall_bonus
    } else {
        0.0
    }
}

pub fn r_action(exo_torques: &[f64; 6], cfg: &RewardConfig) -> f64 {
    let sq: f64 = exo_torques.iter().map(|t| t * t).sum();
    -cfg.c_action * sq
}

pub fn r_orientation(pitch: f64, cfg: &RewardConfig) -> f64 {
    let err = pitch - cfg.orientation_target;
    -cfg.orientation_gain * err * err
}

pub fn r_flat_contact(
    pitch: f64,
    hip_r: f64,
    knee_r: f64,
    ankle_r: f64,
    hip_l: f64,
    knee_l: f64,
    ankle_l: f64,
    cfg: &RewardConfig,
) -> f64 {
    let right = pitch + hip_r + knee_r + ankle_r;
    let left = pitch + hip_l + knee_l + ankle_l;
    let r_foot_flat = right * right;
    let l_foot_flat = left * left;
    let sum = r_foot_flat + l_foot_flat;
    -cfg.flat_contact_gain * sum * sum
}

pub fn r_crutch_reaction_force(d_r: f64, d_l: f64, cfg: &RewardConfig) -> f64 {
    -cfg.w_crutch_reaction_force * crutch_displacement_cost(d_r, d_l, cfg.crutch_cost_form)
}

/// Unweighted displacement cost, shared with the evaluation metric.
pub fn crutch_displacement_cost(d_r: f64, d_l: f64, form: CrutchCostForm) -> f64 {
    match form {
        CrutchCostForm::Linear => d_r + d_l,
        CrutchCostForm::Squared => d_r * d_r + d_l * d_l,
    }
}

pub fn r_hip_angle(hip_r: f64, hip_l: f64, cfg: &RewardConfig) -> f64 {
    if hip_r < 0.0 && hip_l < 0.0 {
        -cfg.hip_penalty
    } else {
        0.0
    }
}

pub fn r_ensure_crutch_contact(d_r: f64, d_l: f64, cfg: &RewardConfig) -> f64 {
    if d_r < cfg.crutch_contact_threshold && d_l < cfg.crutch_contact_threshold {
        -cfg.crutch_contact_penalty
    } else {
        0.0
    }
}

/// All nine terms and their sum.
pub fn total_reward(inputs: &RewardInputs, cfg: &RewardConfig) -> RewardBreakdown {
    let mut b = RewardBreakdown {
        r_walk: r_walk(inputs.com_vel_x, cfg),
        r_walk_straight: r_walk_straight(inputs.lateral_pos),
        r_dont_fall: r_dont_fall(inputs.root_height, cfg),
        r_action: r_action(&inputs.exo_torques, cfg),
        r_orientation: r_orientation(inputs.pitch, cfg),
        r_flat_contact: r_flat_contact(
            inputs.pitch,
            inputs.hip_r,
            inputs.knee_r,
            inputs.ankle_r,
            inputs.hip_l,
            inputs.knee_l,
            inputs.ankle_l,
            cfg,
        ),
        r_crutch_reaction_force: r_crutch_reaction_force(inputs.d_crutch_r, inputs.d_crutch_l, cfg),
        r_hip_angle: r_hip_angle(inputs.hip_r, inputs.hip_l, cfg),
        r_ensure_crutch_contact: r_ensure_crutch_contact(inputs.d_crutch_r, inputs.d_crutch_l, cfg),
        total: 0.0,
    };
    b.total = b.r_walk
        + b.r_walk_straight
        + b.r_dont_fall
        + b.r_action
        + b.r_orientation
        + b.r_flat_contact
        + b.r_crutch_reaction_force
        + b.r_hip_angle
        + b.r_ensure_crutch_contact;
    b
}
