//! Reinforcement-learning environment around the planar dynamics:
//! observation assembly, action application, termination, reward dispatch.

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, SimState};
use crate::mathx;
use crate::model::{self, RobotModel};
use crate::rewards::{total_reward, RewardBreakdown, RewardConfig, RewardInputs};

/// Fixed observation layout. Offsets into the 46-slot vector:
/// base quaternion (4), joint angles (10), contact displacements (4),
/// base pitch rate (1), joint velocities (10), contact displacement
/// rates (4), CoM velocity (2), aggregate CoM inertia (1), last torques (10).
pub mod obs_layout {
    pub const QUAT: usize = 0;
    pub const JOINT_POS: usize = 4;
    pub const CONTACT_DISP: usize = 14;
    pub const PITCH_RATE: usize = 18;
    pub const JOINT_VEL: usize = 19;
    pub const CONTACT_RATE: usize = 29;
    pub const COM_VEL: usize = 33;
    pub const COM_INERTIA: usize = 35;
    pub const LAST_TORQUES: usize = 36;
    pub const DIM: usize = 46;
}

pub type Observation = DVector<f64>;
/// Torque commands, one per revolute joint:
/// ankle_l, knee_l, hip_l, ankle_r, knee_r, hip_r, shoulder_l, arm_l, shoulder_r, arm_r.
pub type Action = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationCause {
    Fall,
    Horizon,
    Divergence,
}

/// Per-step diagnostic channel consumed by rewards logging and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub com_pos: (f64, f64),
    pub com_vel: (f64, f64),
    pub pitch: f64,
    pub root_height: f64,
    pub lateral_pos: f64,
    pub contact_disp: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub cause: Option<TerminationCause>,
    pub breakdown: RewardBreakdown,
    pub info: StepInfo,
}

/// Common surface shared by the full environment and the point-mass
/// verification environment.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Observation;
    fn step(&mut self, action: &Action) -> StepResult;
    /// Evaluation mode: freeze observation normalization statistics.
    fn set_normalizer_frozen(&mut self, _frozen: bool) {}
    fn normalizer(&self) -> Option<&ObsNormalizer> {
        None
    }
    fn set_normalizer_state(&mut self, _state: ObsNormalizer) {}
}

/// Running mean/variance observation normalizer (Welford updates).
#[derive(Debug, Clone, PartialEq)]
pub struct ObsNormalizer {
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub count: f64,
    pub enabled: bool,
    pub frozen: bool,
}

impl ObsNormalizer {
    pub fn new(dim: usize, enabled: bool) -> Self {
        ObsNormalizer {
            mean: alloc::vec![0.0; dim],
            m2: alloc::vec![0.0; dim],
            count: 0.0,
            enabled,
            frozen: false,
        }
    }

    pub fn update(&mut self, obs: &Observation) {
        if !self.enabled || self.frozen {
            return;
        }
        self.count += 1.0;
        for i in 0..self.mean.len() {
            let delta = obs[i] - self.mean[i];
            self.mean[i] += delta / self.count;
            self.m2[i] += delta * (obs[i] - self.mean[i]);
        }
    }

    pub fn normalize(&self, obs: &Observation) -> Observation {
        if !self.enabled || self.count < 2.0 {
            return obs.clone();
        }
        DVector::from_fn(obs.len(), |i, _| {
            let var = self.m2[i] / self.count;
            let z = (obs[i] - self.mean[i]) / mathx::sqrt(var + 1e-8);
            z.clamp(-10.0, 10.0)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Episode horizon in control steps.
    pub horizon: usize,
    /// Physics substeps per control action.
    pub substeps: usize,
    /// Physics timestep, s (control period = substeps * dt).
    pub dt: f64,
    /// Uniform reset noise amplitude on q, rad/m.
    pub reset_noise: f64,
    pub normalize_obs: bool,
    /// Trunk lean at reset, rad.
    pub reset_pitch: f64,
    /// Crutch-tip penetration at reset, m.
    pub reset_crutch_penetration: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            horizon: 2000,
            substeps: 4,
            dt: 0.005,
            reset_noise: 0.005,
            normalize_obs: true,
            reset_pitch: 0.35,
            reset_crutch_penetration: 0.002,
        }
    }
}

/// The crutch-gait training environment. One instance per rollout worker;
/// instances share only the immutable model.
pub struct CrutchGaitEnv {
    pub model: RobotModel,
    pub reward_cfg: RewardConfig,
    pub cfg: EnvConfig,
    pub state: SimState,
    pub normalizer: ObsNormalizer,
    steps: usize,
    rng: ChaCha8Rng,
}

impl CrutchGaitEnv {
    pub fn new(model: RobotModel, reward_cfg: RewardConfig, cfg: EnvConfig) -> Self {
        let normalizer = ObsNormalizer::new(obs_layout::DIM, cfg.normalize_obs);
        let state = SimState::new(&model);
        CrutchGaitEnv {
            model,
            reward_cfg,
            cfg,
            state,
            normalizer,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Nominal standing pose: trunk leaning at the orientation target, knees
    /// bent so the arms reach the ground, feet flat below the hips, arm
    /// chains vertical with the crutch tips lightly loaded.
    pub fn nominal_pose(&self) -> Vec<f64> {
        let m = &self.model;
        let mut q = alloc::vec![0.0; m.dof()];
        let pitch = self.cfg.reset_pitch;
        q[2] = pitch;

        let trunk_len = m.links[model::LINK_TRUNK].length;
        let ua_len = m.links[model::LINK_UPPER_ARM_L].length;
        let crutch_len = m.links[model::LINK_CRUTCHARM_L].length;
        let radius = m.contact_spheres[model::SPHERE_CRUTCH_L].radius;
        let thigh_len = m.links[model::LINK_THIGH_L].length;
        let shank_len = m.links[model::LINK_SHANK_L].length;
        let ankle_height = m.contact_spheres[model::SPHERE_FOOT_L].radius
            - m.contact_spheres[model::SPHERE_FOOT_L].perp;

        // Crutches planted ahead of the body and ankles behind it. The wide
        // support span matters because the ground springs are the only
        // source of pitch stiffness for the floating base: the stance is
        // statically stable only while k * sum(dx_i^2) over the contact
        // lever arms exceeds the inverted-pendulum term m*g*h_com.
        let crutch_tilt = 0.12;
        let arm_chain = ua_len + crutch_len;

        // Base height so the tilted crutch tips sit at the requested
        // penetration.
        let base_z = radius - self.cfg.reset_crutch_penetration - trunk_len * mathx::cos(pitch)
            + arm_chain * mathx::cos(crutch_tilt);
        q[1] = base_z;

        // Upper-arm world angle 3*pi/2 + tilt (forward-down).
        let q_shoulder = pitch + crutch_tilt;
        q[3 + model::SHOULDER_L] = q_shoulder;
        q[3 + model::SHOULDER_R] = q_shoulder;

        // Legs: two-link IK placing the ankles behind the pelvis with the
        // knees bent forward and the feet flat, putting the foot contacts
        // well behind the whole-body CoM.
        let tx = -0.18;
        let tz = ankle_height - base_z;
        let d = mathx::hypot(tx, tz);
        let cos_alpha = ((thigh_len * thigh_len + d * d - shank_len * shank_len)
            / (2.0 * thigh_len * d))
            .clamp(-1.0, 1.0);
        let alpha = mathx::acos(cos_alpha);
        let gamma = mathx::atan2(tz, tx);
        let phi_thigh = gamma + alpha;
        let phi_shank = mathx::atan2(
            tz - thigh_len * mathx::sin(phi_thigh),
            tx - thigh_len * mathx::cos(phi_thigh),
        );
        let q_hip = wrap_angle(phi_thigh - (mathx::PI / 2.0 - pitch + mathx::PI));
        let q_knee = wrap_angle(phi_shank - phi_thigh);
        let q_ankle = wrap_angle(-phi_shank - mathx::PI / 2.0);
        for (hip, knee, ankle) in
            [(model::HIP_L, model::KNEE_L, model::ANKLE_L), (model::HIP_R, model::KNEE_R, model::ANKLE_R)]
        {
            q[3 + hip] = q_hip;
            q[3 + knee] = q_knee;
            q[3 + ankle] = q_ankle;
        }
        q
    }

    fn exo_torques(&self) -> [f64; 6] {
        let t = &self.state.last_torques;
        [
            t[model::ANKLE_L],
            t[model::KNEE_L],
            t[model::HIP_L],
            t[model::ANKLE_R],
            t[model::KNEE_R],
            t[model::HIP_R],
        ]
    }

    fn reward_inputs(&self) -> RewardInputs {
        let q = &self.state.q;
        let (vx, _) = dynamics::com_velocity(&self.model, q, &self.state.qd);
        RewardInputs {
            com_vel_x: vx,
            lateral_pos: 0.0,
            root_height: q[1],
            pitch: q[2],
            exo_torques: self.exo_torques(),
            hip_r: q[3 + model::HIP_R],
            knee_r: q[3 + model::KNEE_R],
            ankle_r: q[3 + model::ANKLE_R],
            hip_l: q[3 + model::HIP_L],
            knee_l: q[3 + model::KNEE_L],
            ankle_l: q[3 + model::ANKLE_L],
            d_crutch_r: self.state.contact_disp[model::SPHERE_CRUTCH_R],
            d_crutch_l: self.state.contact_disp[model::SPHERE_CRUTCH_L],
        }
    }

    fn info(&self) -> StepInfo {
        let (cx, cz) = model::total_com(&self.model, &self.state.q);
        let (vx, vz) = dynamics::com_velocity(&self.model, &self.state.q, &self.state.qd);
        StepInfo {
            com_pos: (cx, cz),
            com_vel: (vx, vz),
            pitch: self.state.q[2],
            root_height: self.state.q[1],
            lateral_pos: 0.0,
            contact_disp: [
                self.state.contact_disp[0],
                self.state.contact_disp[1],
                self.state.contact_disp[2],
                self.state.contact_disp[3],
            ],
        }
    }

    /// Raw (un-normalized) observation assembled from the current state.
    pub fn raw_observation(&self) -> Observation {
        use obs_layout::*;
        let q = &self.state.q;
        let qd = &self.state.qd;
        let mut obs = DVector::zeros(DIM);
        let half = q[2] / 2.0;
        obs[QUAT] = mathx::cos(half);
        obs[QUAT + 1] = 0.0;
        obs[QUAT + 2] = mathx::sin(half);
        obs[QUAT + 3] = 0.0;
        for j in 0..10 {
            obs[JOINT_POS + j] = q[3 + j];
            obs[JOINT_VEL + j] = qd[3 + j];
            obs[LAST_TORQUES + j] = self.state.last_torques[j];
        }
        for s in 0..4 {
            obs[CONTACT_DISP + s] = self.state.contact_disp[s];
            obs[CONTACT_RATE + s] = self.state.contact_rate[s];
        }
        obs[PITCH_RATE] = qd[2];
        let (vx, vz) = dynamics::com_velocity(&self.model, q, qd);
        obs[COM_VEL] = vx;
        obs[COM_VEL + 1] = vz;
        obs[COM_INERTIA] = model::aggregate_inertia(&self.model, q);
        obs
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a;
    while x > mathx::PI {
        x -= mathx::TAU;
    }
    while x < -mathx::PI {
        x += mathx::TAU;
    }
    x
}

impl Environment for CrutchGaitEnv {
    fn obs_dim(&self) -> usize {
        obs_layout::DIM
    }

    fn action_dim(&self) -> usize {
        self.model.num_joints()
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.steps = 0;
        let mut state = SimState::new(&self.model);
        state.q = self.nominal_pose();
        if self.cfg.reset_noise > 0.0 {
            let amp = self.cfg.reset_noise;
            for v in state.q.iter_mut() {
                *v += self.rng.gen_range(-amp..=amp);
            }
        }
        // Settle the contact coordinates for the initial observation.
        let forces = dynamics::contact_forces(&self.model, &state.q, &state.qd);
        for (i, f) in forces.iter().enumerate() {
            state.contact_disp[i] = f.compression;
            state.contact_rate[i] = f.compression_rate;
        }
        self.state = state;
        let obs = self.raw_observation();
        self.normalizer.normalize(&obs)
    }

    fn step(&mut self, action: &Action) -> StepResult {
        assert_eq!(action.len(), self.action_dim(), "action dimension mismatch");
        let torques: Vec<f64> = action.iter().copied().collect();
        let mut diverged = false;
        for _ in 0..self.cfg.substeps {
            match dynamics::step(&self.model, &self.state, &torques, self.cfg.dt) {
                Ok(next) => self.state = next,
                Err(_) => {
                    diverged = true;
                    break;
                }
            }
        }
        self.steps += 1;

        if diverged {
            let obs = DVector::zeros(obs_layout::DIM);
            return StepResult {
                observation: obs,
                reward: 0.0,
                done: true,
                cause: Some(TerminationCause::Divergence),
                breakdown: RewardBreakdown::default(),
                info: StepInfo::default(),
            };
        }

        let breakdown = total_reward(&self.reward_inputs(), &self.reward_cfg);
        let root_height = self.state.q[1];
        let (done, cause) = if root_height < self.reward_cfg.p_z_min {
            (true, Some(TerminationCause::Fall))
        } else if self.steps >= self.cfg.horizon {
            (true, Some(TerminationCause::Horizon))
        } else {
            (false, None)
        };

        let raw = self.raw_observation();
        self.normalizer.update(&raw);
        let observation = self.normalizer.normalize(&raw);

        StepResult {
            observation,
            reward: breakdown.total,
            done,
            cause,
            breakdown,
            info: self.info(),
        }
    }

    fn set_normalizer_frozen(&mut self, frozen: bool) {
        self.normalizer.frozen = frozen;
    }

    fn normalizer(&self) -> Option<&ObsNormalizer> {
        Some(&self.normalizer)
    }

    fn set_normalizer_state(&mut self, state: ObsNormalizer) {
        self.normalizer = state;
    }
}
