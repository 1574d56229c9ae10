//! Anthropometric construction of the planar human-exoskeleton-crutch model.
//!
//! The subject's segment lengths come from tape measurements (hip height,
//! knee height, arm span, ...), segment masses from fixed anthropometric
//! fractions of total body mass, and the exoskeleton is folded in as
//! per-link mass increments. Links are cylinders and boxes; the crutch is a
//! rigid extension of the forearm with a contact sphere at its tip.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::mathx;

/// Joint indices, matching the action vector layout.
pub const ANKLE_L: usize = 0;
pub const KNEE_L: usize = 1;
pub const HIP_L: usize = 2;
pub const ANKLE_R: usize = 3;
pub const KNEE_R: usize = 4;
pub const HIP_R: usize = 5;
pub const SHOULDER_L: usize = 6;
pub const ARM_L: usize = 7;
pub const SHOULDER_R: usize = 8;
pub const ARM_R: usize = 9;

pub const NUM_JOINTS: usize = 10;
/// Base x, base z, base pitch + revolute joints.
pub const NUM_DOF: usize = 3 + NUM_JOINTS;

/// Contact sphere indices: feet first, then crutch tips.
pub const SPHERE_FOOT_L: usize = 0;
pub const SPHERE_FOOT_R: usize = 1;
pub const SPHERE_CRUTCH_L: usize = 2;
pub const SPHERE_CRUTCH_R: usize = 3;
pub const NUM_SPHERES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    NonPositiveMeasurement(&'static str),
    MeasurementOrdering(&'static str),
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::NonPositiveMeasurement(name) => {
                write!(f, "measurement `{name}` must be strictly positive")
            }
            ModelError::MeasurementOrdering(what) => {
                write!(f, "measurement ordering violated: {what}")
            }
        }
    }
}

/// Tape measurements of the human subject, all in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeasurements {
    pub mass: f64,
    pub height: f64,
    pub foot_size: f64,
    pub arm_span: f64,
    pub ankle_height: f64,
    pub hip_height: f64,
    pub hip_width: f64,
    pub knee_height: f64,
    pub shoulder_width: f64,
    pub shoulder_height: f64,
}

impl SubjectMeasurements {
    /// The measured subject used throughout: 62.2 kg, 1.68 m.
    pub fn reference_subject() -> Self {
        SubjectMeasurements {
            mass: 62.2,
            height: 1.68,
            foot_size: 0.24,
            arm_span: 1.63,
            ankle_height: 0.08,
            hip_height: 0.91,
            hip_width: 0.25,
            knee_height: 0.485,
            shoulder_width: 0.354,
            shoulder_height: 1.40,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            (self.mass, "mass"),
            (self.height, "height"),
            (self.foot_size, "foot_size"),
            (self.arm_span, "arm_span"),
            (self.ankle_height, "ankle_height"),
            (self.hip_height, "hip_height"),
            (self.hip_width, "hip_width"),
            (self.knee_height, "knee_height"),
            (self.shoulder_width, "shoulder_width"),
            (self.shoulder_height, "shoulder_height"),
        ];
        for (value, name) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::NonPositiveMeasurement(name));
            }
        }
        if !(self.ankle_height < self.knee_height) {
            return Err(ModelError::MeasurementOrdering("ankle_height < knee_height"));
        }
        if !(self.knee_height < self.hip_height) {
            return Err(ModelError::MeasurementOrdering("knee_height < hip_height"));
        }
        if !(self.hip_height < self.shoulder_height) {
            return Err(ModelError::MeasurementOrdering("hip_height < shoulder_height"));
        }
        if !(self.shoulder_height < self.height) {
            return Err(ModelError::MeasurementOrdering("shoulder_height < height"));
        }
        Ok(())
    }
}

/// Per-side segment mass fractions of total body mass. The trunk (plus head)
/// takes whatever remains so the fractions always sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassFractions {
    pub foot: f64,
    pub shank: f64,
    pub thigh: f64,
    pub upper_arm: f64,
    pub forearm_hand: f64,
}

impl Default for MassFractions {
    fn default() -> Self {
        MassFractions {
            foot: 0.0145,
            shank: 0.0465,
            thigh: 0.100,
            upper_arm: 0.028,
            forearm_hand: 0.022,
        }
    }
}

impl MassFractions {
    pub fn trunk_fraction(&self) -> f64 {
        1.0 - 2.0 * (self.foot + self.shank + self.thigh + self.upper_arm + self.forearm_hand)
    }
}

/// Exoskeleton masses added onto the human links, kg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExoMasses {
    pub thigh: f64,
    pub shank: f64,
    pub trunk: f64,
}

impl Default for ExoMasses {
    fn default() -> Self {
        ExoMasses { thigh: 2.0, shank: 2.0, trunk: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mass_fractions: MassFractions,
    pub exo_masses: ExoMasses,
    /// Elbow-to-crutch-tip length, m. The forearm and crutch form one rigid link.
    pub crutch_length: f64,
    /// Fraction of the full arm length assigned to the upper arm.
    pub upper_arm_ratio: f64,
    pub sphere_radius: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction_mu: f64,
    /// Slip-velocity scale for the viscous friction regularization, m/s.
    pub friction_vel_reg: f64,
    pub lower_limb_torque_limit: f64,
    pub upper_limb_torque_limit: f64,
    pub joint_limit_stiffness: f64,
    pub gravity: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mass_fractions: MassFractions::default(),
            exo_masses: ExoMasses::default(),
            crutch_length: 0.9,
            upper_arm_ratio: 0.45,
            sphere_radius: 0.02,
            contact_stiffness: 1e4,
            contact_damping: 100.0,
            friction_mu: 0.8,
            friction_vel_reg: 0.01,
            lower_limb_torque_limit: 150.0,
            upper_limb_torque_limit: 80.0,
            joint_limit_stiffness: 200.0,
            gravity: 9.81,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Parent {
    /// Attached to the floating base (pelvis frame).
    Base,
    /// Attached to another link at `attach_along`/`attach_perp` in its frame.
    Link(usize),
}

#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    pub length: f64,
    pub mass: f64,
    /// Planar moment of inertia about the link CoM, kg·m².
    pub inertia_about_com: f64,
    /// CoM position along the link axis from the link origin, m.
    pub com_offset: f64,
    pub parent: Parent,
    /// Joint position along the parent axis, m.
    pub attach_along: f64,
    /// Joint position perpendicular to the parent axis, m.
    pub attach_perp: f64,
    /// Link axis angle relative to the parent axis at zero joint angle, rad.
    pub rest_angle: f64,
    /// Index into the joint vector, or None for welded links (trunk).
    pub joint: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ContactSphere {
    pub name: String,
    pub link: usize,
    pub along: f64,
    pub perp: f64,
    pub radius: f64,
    pub stiffness: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
    pub stiffness: f64,
}

/// Immutable physical description of the articulated system. Safe to share
/// read-only across concurrent rollouts.
#[derive(Debug, Clone)]
pub struct RobotModel {
    pub links: Vec<Link>,
    pub joint_names: Vec<String>,
    pub torque_limits: Vec<f64>,
    pub joint_limits: Vec<Option<JointLimit>>,
    pub contact_spheres: Vec<ContactSphere>,
    pub gravity: f64,
    pub friction_mu: f64,
    pub friction_vel_reg: f64,
    /// When true the floating base is welded to the world (test reductions).
    pub fixed_base: bool,
}

/// World pose of one link: joint origin, axis angle, CoM position.
#[derive(Debug, Clone, Copy)]
pub struct LinkFrame {
    pub origin: [f64; 2],
    pub angle: f64,
    pub com: [f64; 2],
}

impl RobotModel {
    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn dof(&self) -> usize {
        3 + self.num_joints()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Forward kinematics for every link. `q` layout: base x, base z,
    /// base pitch (positive = forward lean), then joint angles.
    pub fn link_frames(&self, q: &[f64]) -> Vec<LinkFrame> {
        assert_eq!(q.len(), self.dof(), "q dimension mismatch");
        let base = [q[0], q[1]];
        // Pitch tilts the trunk toward +x, which is a clockwise rotation in
        // the CCW-from-+x angle convention.
        let base_angle = -q[2];
        let mut frames: Vec<LinkFrame> = Vec::with_capacity(self.links.len());
        for link in &self.links {
            let (parent_origin, parent_angle) = match link.parent {
                Parent::Base => {
                    let (ax, nx) = axis_normal(base_angle);
                    let origin = [
                        base[0] + link.attach_along * ax[0] + link.attach_perp * nx[0],
                        base[1] + link.attach_along * ax[1] + link.attach_perp * nx[1],
                    ];
                    (origin, base_angle)
                }
                Parent::Link(p) => {
                    let pf = &frames[p];
                    let (ax, nx) = axis_normal(pf.angle);
                    let origin = [
                        pf.origin[0] + link.attach_along * ax[0] + link.attach_perp * nx[0],
                        pf.origin[1] + link.attach_along * ax[1] + link.attach_perp * nx[1],
                    ];
                    (origin, pf.angle)
                }
            };
            let mut angle = parent_angle + link.rest_angle;
            if let Some(j) = link.joint {
                angle += q[3 + j];
            }
            let (ax, _) = axis_normal(angle);
            let com = [
                parent_origin[0] + link.com_offset * ax[0],
                parent_origin[1] + link.com_offset * ax[1],
            ];
            frames.push(LinkFrame { origin: parent_origin, angle, com });
        }
        frames
    }

    pub fn parameter_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "total mass: {:.6} kg   gravity: {:.3} m/s^2   mu: {:.2}\n",
            self.total_mass(),
            self.gravity,
            self.friction_mu
        ));
        out.push_str("links:\n");
        out.push_str("  name           length[m]  mass[kg]  I_com[kg m^2]  com_off[m]\n");
        for l in &self.links {
            out.push_str(&format!(
                "  {:<14} {:>9.4} {:>9.4} {:>14.6} {:>11.4}\n",
                l.name, l.length, l.mass, l.inertia_about_com, l.com_offset
            ));
        }
        out.push_str("joints:\n");
        for (j, name) in self.joint_names.iter().enumerate() {
            out.push_str(&format!(
                "  [{j}] {:<12} torque limit {:>7.1} N m\n",
                name, self.torque_limits[j]
            ));
        }
        out.push_str("contact spheres:\n");
        for s in &self.contact_spheres {
            out.push_str(&format!(
                "  {:<10} link {:<2} r {:.3} m  k {:.1} N/m  b {:.1} N s/m\n",
                s.name, s.link, s.radius, s.stiffness, s.damping
            ));
        }
        out
    }
}

/// Unit axis and normal for a link angle (CCW from world +x in the x-z plane).
pub fn axis_normal(angle: f64) -> ([f64; 2], [f64; 2]) {
    let c = mathx::cos(angle);
    let s = mathx::sin(angle);
    ([c, s], [-s, c])
}

fn cylinder_inertia(mass: f64, length: f64, radius: f64) -> f64 {
    mass * (length * length / 12.0 + radius * radius / 4.0)
}

fn box_inertia(mass: f64, length: f64, height: f64) -> f64 {
    mass * (length * length + height * height) / 12.0
}

/// Link indices in the built subject model.
pub const LINK_TRUNK: usize = 0;
pub const LINK_THIGH_L: usize = 1;
pub const LINK_SHANK_L: usize = 2;
pub const LINK_FOOT_L: usize = 3;
pub const LINK_THIGH_R: usize = 4;
pub const LINK_SHANK_R: usize = 5;
pub const LINK_FOOT_R: usize = 6;
pub const LINK_UPPER_ARM_L: usize = 7;
pub const LINK_CRUTCHARM_L: usize = 8;
pub const LINK_UPPER_ARM_R: usize = 9;
pub const LINK_CRUTCHARM_R: usize = 10;

/// Build the 11-link, 10-joint sagittal model from subject measurements.
///
/// Lengths come from measurement differences (thigh = hip − knee height,
/// shank = knee − ankle height, ...), masses from the configured fractions,
/// and exoskeleton masses are added on top of the human segment masses.
pub fn build_subject_model(
    m: &SubjectMeasurements,
    cfg: &ModelConfig,
) -> Result<RobotModel, ModelError> {
    m.validate()?;

    let thigh_len = m.hip_height - m.knee_height;
    let shank_len = m.knee_height - m.ankle_height;
    let foot_len = m.foot_size;
    let trunk_len = m.shoulder_height - m.hip_height;
    let arm_len = (m.arm_span - m.shoulder_width) / 2.0;
    let upper_arm_len = cfg.upper_arm_ratio * arm_len;
    let crutcharm_len = cfg.crutch_length;

    let fr = &cfg.mass_fractions;
    let trunk_mass = fr.trunk_fraction() * m.mass + cfg.exo_masses.trunk;
    let thigh_mass = fr.thigh * m.mass + cfg.exo_masses.thigh;
    let shank_mass = fr.shank * m.mass + cfg.exo_masses.shank;
    let foot_mass = fr.foot * m.mass;
    let upper_arm_mass = fr.upper_arm * m.mass;
    let crutcharm_mass = fr.forearm_hand * m.mass;

    let half_pi = mathx::PI / 2.0;
    let pi = mathx::PI;

    let mut links = Vec::with_capacity(11);
    // Trunk (with head), welded to the base, pointing up at zero pitch.
    links.push(Link {
        name: "trunk".into(),
        length: trunk_len,
        mass: trunk_mass,
        inertia_about_com: cylinder_inertia(trunk_mass, trunk_len, 0.12),
        com_offset: 0.5 * trunk_len,
        parent: Parent::Base,
        attach_along: 0.0,
        attach_perp: 0.0,
        rest_angle: half_pi,
        joint: None,
    });

    let leg = |side: &str, hip: usize, knee: usize, ankle: usize, links: &mut Vec<Link>| {
        let thigh_idx = links.len();
        links.push(Link {
            name: format!("thigh_{side}"),
            length: thigh_len,
            mass: thigh_mass,
            inertia_about_com: cylinder_inertia(thigh_mass, thigh_len, 0.07),
            com_offset: 0.5 * thigh_len,
            parent: Parent::Base,
            attach_along: 0.0,
            attach_perp: 0.0,
            rest_angle: 3.0 * half_pi,
            joint: Some(hip),
        });
        let shank_idx = links.len();
        links.push(Link {
            name: format!("shank_{side}"),
            length: shank_len,
            mass: shank_mass,
            inertia_about_com: cylinder_inertia(shank_mass, shank_len, 0.05),
            com_offset: 0.5 * shank_len,
            parent: Parent::Link(thigh_idx),
            attach_along: thigh_len,
            attach_perp: 0.0,
            rest_angle: 0.0,
            joint: Some(knee),
        });
        links.push(Link {
            name: format!("foot_{side}"),
            length: foot_len,
            mass: foot_mass,
            inertia_about_com: box_inertia(foot_mass, foot_len, 0.05),
            com_offset: 0.5 * foot_len,
            parent: Parent::Link(shank_idx),
            attach_along: shank_len,
            attach_perp: 0.0,
            rest_angle: half_pi,
            joint: Some(ankle),
        });
    };
    leg("l", HIP_L, KNEE_L, ANKLE_L, &mut links);
    leg("r", HIP_R, KNEE_R, ANKLE_R, &mut links);

    let arm = |side: &str, shoulder: usize, elbow: usize, links: &mut Vec<Link>| {
        let ua_idx = links.len();
        links.push(Link {
            name: format!("upper_arm_{side}"),
            length: upper_arm_len,
            mass: upper_arm_mass,
            inertia_about_com: cylinder_inertia(upper_arm_mass, upper_arm_len, 0.04),
            com_offset: 0.5 * upper_arm_len,
            parent: Parent::Link(LINK_TRUNK),
            attach_along: trunk_len,
            attach_perp: 0.0,
            rest_angle: pi,
            joint: Some(shoulder),
        });
        links.push(Link {
            name: format!("crutcharm_{side}"),
            length: crutcharm_len,
            mass: crutcharm_mass,
            inertia_about_com: cylinder_inertia(crutcharm_mass, crutcharm_len, 0.02),
            com_offset: 0.3 * crutcharm_len,
            parent: Parent::Link(ua_idx),
            attach_along: upper_arm_len,
            attach_perp: 0.0,
            rest_angle: 0.0,
            joint: Some(elbow),
        });
    };
    arm("l", SHOULDER_L, ARM_L, &mut links);
    arm("r", SHOULDER_R, ARM_R, &mut links);

    let joint_names: Vec<String> = [
        "ankle_l", "knee_l", "hip_l", "ankle_r", "knee_r", "hip_r", "shoulder_l", "arm_l",
        "shoulder_r", "arm_r",
    ]
    .iter()
    .map(|s| String::from(*s))
    .collect();

    let torque_limits: Vec<f64> = (0..NUM_JOINTS)
        .map(|j| {
            if j <= HIP_R {
                cfg.lower_limb_torque_limit
            } else {
                cfg.upper_limb_torque_limit
            }
        })
        .collect();

    let ks = cfg.joint_limit_stiffness;
    let limit = |lo: f64, hi: f64| Some(JointLimit { lower: lo, upper: hi, stiffness: ks });
    let mut joint_limits = alloc::vec![None; NUM_JOINTS];
    for (j, lim) in [
        (ANKLE_L, limit(-0.8, 0.8)),
        (ANKLE_R, limit(-0.8, 0.8)),
        (KNEE_L, limit(-2.0, 0.1)),
        (KNEE_R, limit(-2.0, 0.1)),
        (HIP_L, limit(-0.6, 1.3)),
        (HIP_R, limit(-0.6, 1.3)),
        (SHOULDER_L, limit(-1.5, 1.5)),
        (SHOULDER_R, limit(-1.5, 1.5)),
        (ARM_L, limit(-1.5, 1.5)),
        (ARM_R, limit(-1.5, 1.5)),
    ] {
        joint_limits[j] = lim;
    }

    let sphere = |name: &str, link: usize, along: f64, perp: f64| ContactSphere {
        name: name.into(),
        link,
        along,
        perp,
        radius: cfg.sphere_radius,
        stiffness: cfg.contact_stiffness,
        damping: cfg.contact_damping,
    };
    // Foot spheres sit below the foot axis so their bottoms touch the ground
    // in the flat standing pose (ankle at ankle_height).
    let foot_drop = -(m.ankle_height - cfg.sphere_radius);
    let contact_spheres = alloc::vec![
        sphere("foot_l", LINK_FOOT_L, 0.5 * foot_len, foot_drop),
        sphere("foot_r", LINK_FOOT_R, 0.5 * foot_len, foot_drop),
        sphere("crutch_l", LINK_CRUTCHARM_L, crutcharm_len, 0.0),
        sphere("crutch_r", LINK_CRUTCHARM_R, crutcharm_len, 0.0),
    ];

    Ok(RobotModel {
        links,
        joint_names,
        torque_limits,
        joint_limits,
        contact_spheres,
        gravity: cfg.gravity,
        friction_mu: cfg.friction_mu,
        friction_vel_reg: cfg.friction_vel_reg,
        fixed_base: false,
    })
}

/// Mass-weighted mean of link CoM world positions.
pub fn total_com(model: &RobotModel, q: &[f64]) -> (f64, f64) {
    let frames = model.link_frames(q);
    let mut mx = 0.0;
    let mut mz = 0.0;
    let mut mass = 0.0;
    for (link, frame) in model.links.iter().zip(frames.iter()) {
        mx += link.mass * frame.com[0];
        mz += link.mass * frame.com[1];
        mass += link.mass;
    }
    (mx / mass, mz / mass)
}

/// Total planar moment of inertia about the system CoM (parallel axis per link).
pub fn aggregate_inertia(model: &RobotModel, q: &[f64]) -> f64 {
    let frames = model.link_frames(q);
    let (cx, cz) = total_com(model, q);
    let mut inertia = 0.0;
    for (link, frame) in model.links.iter().zip(frames.iter()) {
        let dx = frame.com[0] - cx;
        let dz = frame.com[1] - cz;
        inertia += link.inertia_about_com + link.mass * (dx * dx + dz * dz);
    }
    inertia
}

/// One-link reduction: a uniform rod hanging from a base-mounted revolute
/// joint. Used by dynamics oracles (pendulum tracking, mass-matrix checks).
pub fn single_link_model(mass: f64, length: f64, fixed_base: bool) -> RobotModel {
    RobotModel {
        links: alloc::vec![Link {
            name: "rod".into(),
            length,
            mass,
            inertia_about_com: mass * length * length / 12.0,
            com_offset: length / 2.0,
            parent: Parent::Base,
            attach_along: 0.0,
            attach_perp: 0.0,
            rest_angle: 3.0 * mathx::PI / 2.0,
            joint: Some(0),
        }],
        joint_names: alloc::vec!["pivot".into()],
        torque_limits: alloc::vec![100.0],
        joint_limits: alloc::vec![None],
        contact_spheres: alloc::vec![],
        gravity: 9.81,
        friction_mu: 0.8,
        friction_vel_reg: 0.01,
        fixed_base,
    }
}
