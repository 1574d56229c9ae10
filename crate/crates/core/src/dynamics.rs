//! Sagittal-plane articulated rigid-body dynamics.
//!
//! Generalized coordinates: base x, base z, base pitch, then joint angles.
//! The mass matrix is assembled as sum of J^T m J over link CoMs plus the
//! rotational inertia terms; bias forces collect Coriolis/centrifugal and
//! gravity contributions. Ground contact is a penalty spring-damper acting
//! at each sphere's lowest point, with Coulomb friction regularized by a
//! viscous law near zero slip velocity.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::model::{axis_normal, Parent, RobotModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Generalized positions: base x, base z, base pitch, joint angles.
    pub q: Vec<f64>,
    /// Generalized velocities, same layout.
    pub qd: Vec<f64>,
    /// Per-sphere spring compression, m (0 when out of contact).
    pub contact_disp: Vec<f64>,
    /// Per-sphere compression rate, m/s.
    pub contact_rate: Vec<f64>,
    /// Torques applied on the last step, after clamping.
    pub last_torques: Vec<f64>,
    pub time: f64,
}

impl SimState {
    pub fn new(model: &RobotModel) -> Self {
        SimState {
            q: vec![0.0; model.dof()],
            qd: vec![0.0; model.dof()],
            contact_disp: vec![0.0; model.contact_spheres.len()],
            contact_rate: vec![0.0; model.contact_spheres.len()],
            last_torques: vec![0.0; model.num_joints()],
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactForce {
    pub sphere: usize,
    /// Normal (vertical) force, N, always >= 0.
    pub normal: f64,
    /// Tangential friction force, N, |tangential| <= mu * normal.
    pub tangential: f64,
    /// Spring compression, m.
    pub compression: f64,
    /// Compression rate, m/s.
    pub compression_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceError {
    pub time: f64,
}

impl core::fmt::Display for DivergenceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "dynamics diverged to non-finite state at t={}", self.time)
    }
}

fn rot90(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

/// Kinematics of one link with first derivatives and bias accelerations.
struct LinkKin {
    angle: f64,
    origin: [f64; 2],
    com: [f64; 2],
    /// d(angle)/dq.
    s: DVector<f64>,
    /// 2 x n Jacobian of the link origin.
    j_origin: DMatrix<f64>,
    /// 2 x n Jacobian of the link CoM.
    j_com: DMatrix<f64>,
    omega: f64,
    v_origin: [f64; 2],
    v_com: [f64; 2],
    /// Acceleration of the origin with qdd = 0.
    a_bias_origin: [f64; 2],
    /// Acceleration of the CoM with qdd = 0.
    a_bias_com: [f64; 2],
}

struct TreeKin {
    links: Vec<LinkKin>,
}

fn tree_kinematics(model: &RobotModel, q: &[f64], qd: &[f64]) -> TreeKin {
    let n = model.dof();
    assert_eq!(q.len(), n);
    assert_eq!(qd.len(), n);

    let base_origin = [q[0], q[1]];
    let base_angle = -q[2];
    let mut base_s = DVector::zeros(n);
    base_s[2] = -1.0;
    let mut base_j = DMatrix::zeros(2, n);
    base_j[(0, 0)] = 1.0;
    base_j[(1, 1)] = 1.0;
    let base_v = [qd[0], qd[1]];
    let base_omega = -qd[2];

    let mut links: Vec<LinkKin> = Vec::with_capacity(model.links.len());
    for link in &model.links {
        // Parent frame quantities at the attachment point.
        let (p_angle, p_s, p_omega, o_parent, j_parent, v_parent, a_parent) = match link.parent {
            Parent::Base => (
                base_angle,
                base_s.clone(),
                base_omega,
                base_origin,
                base_j.clone(),
                base_v,
                [0.0, 0.0],
            ),
            Parent::Link(p) => {
                let pk = &links[p];
                (
                    pk.angle,
                    pk.s.clone(),
                    pk.omega,
                    pk.origin,
                    pk.j_origin.clone(),
                    pk.v_origin,
                    pk.a_bias_origin,
                )
            }
        };
        let (pa, pn) = axis_normal(p_angle);
        let origin = [
            o_parent[0] + link.attach_along * pa[0] + link.attach_perp * pn[0],
            o_parent[1] + link.attach_along * pa[1] + link.attach_perp * pn[1],
        ];
        let r = [origin[0] - o_parent[0], origin[1] - o_parent[1]];
        let r90 = rot90(r);
        let mut j_origin = j_parent.clone();
        for k in 0..n {
            j_origin[(0, k)] += p_s[k] * r90[0];
            j_origin[(1, k)] += p_s[k] * r90[1];
        }
        let v_origin = [v_parent[0] + p_omega * r90[0], v_parent[1] + p_omega * r90[1]];
        let dv = [v_origin[0] - v_parent[0], v_origin[1] - v_parent[1]];
        let dv90 = rot90(dv);
        let a_bias_origin = [a_parent[0] + p_omega * dv90[0], a_parent[1] + p_omega * dv90[1]];

        let mut angle = p_angle + link.rest_angle;
        let mut s = p_s;
        let mut omega = p_omega;
        if let Some(j) = link.joint {
            angle += q[3 + j];
            s[3 + j] += 1.0;
            omega += qd[3 + j];
        }

        let (la, _) = axis_normal(angle);
        let com = [origin[0] + link.com_offset * la[0], origin[1] + link.com_offset * la[1]];
        let rc = [com[0] - origin[0], com[1] - origin[1]];
        let rc90 = rot90(rc);
        let mut j_com = j_origin.clone();
        for k in 0..n {
            j_com[(0, k)] += s[k] * rc90[0];
            j_com[(1, k)] += s[k] * rc90[1];
        }
        let v_com = [v_origin[0] + omega * rc90[0], v_origin[1] + omega * rc90[1]];
        let dvc = [v_com[0] - v_origin[0], v_com[1] - v_origin[1]];
        let dvc90 = rot90(dvc);
        let a_bias_com =
            [a_bias_origin[0] + omega * dvc90[0], a_bias_origin[1] + omega * dvc90[1]];

        links.push(LinkKin {
            angle,
            origin,
            com,
            s,
            j_origin,
            j_com,
            omega,
            v_origin,
            v_com,
            a_bias_origin,
            a_bias_com,
        });
    }
    TreeKin { links }
}

/// Kinematics of a point rigidly attached to a link.
struct PointKin {
    pos: [f64; 2],
    vel: [f64; 2],
    jac: DMatrix<f64>,
}

fn point_kinematics(kin: &TreeKin, link: usize, along: f64, perp: f64, n: usize) -> PointKin {
    let lk = &kin.links[link];
    let (la, ln) = axis_normal(lk.angle);
    let pos = [
        lk.origin[0] + along * la[0] + perp * ln[0],
        lk.origin[1] + along * la[1] + perp * ln[1],
    ];
    let r = [pos[0] - lk.origin[0], pos[1] - lk.origin[1]];
    let r90 = rot90(r);
    let mut jac = lk.j_origin.clone();
    for k in 0..n {
        jac[(0, k)] += lk.s[k] * r90[0];
        jac[(1, k)] += lk.s[k] * r90[1];
    }
    let vel = [lk.v_origin[0] + lk.omega * r90[0], lk.v_origin[1] + lk.omega * r90[1]];
    PointKin { pos, vel, jac }
}

/// Joint-space inertia matrix, symmetric positive definite.
pub fn mass_matrix(model: &RobotModel, q: &[f64]) -> DMatrix<f64> {
    let n = model.dof();
    let qd = vec![0.0; n];
    let kin = tree_kinematics(model, q, &qd);
    let mut m = DMatrix::zeros(n, n);
    for (link, lk) in model.links.iter().zip(kin.links.iter()) {
        // m * Jc^T Jc + I * s s^T
        for i in 0..n {
            for j in i..n {
                let translational = link.mass
                    * (lk.j_com[(0, i)] * lk.j_com[(0, j)] + lk.j_com[(1, i)] * lk.j_com[(1, j)]);
                let rotational = link.inertia_about_com * lk.s[i] * lk.s[j];
                m[(i, j)] += translational + rotational;
            }
        }
    }
    // Mirror the upper triangle.
    for i in 0..n {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    m
}

/// Coriolis/centrifugal plus gravity generalized forces, so that the
/// equations of motion read M qdd = tau + Jc^T f - bias.
pub fn bias_forces(model: &RobotModel, q: &[f64], qd: &[f64]) -> DVector<f64> {
    let n = model.dof();
    let kin = tree_kinematics(model, q, qd);
    let mut b = DVector::zeros(n);
    let g = model.gravity;
    for (link, lk) in model.links.iter().zip(kin.links.iter()) {
        let fx = link.mass * lk.a_bias_com[0];
        let fz = link.mass * (lk.a_bias_com[1] + g);
        for k in 0..n {
            b[k] += lk.j_com[(0, k)] * fx + lk.j_com[(1, k)] * fz;
        }
    }
    b
}

/// Evaluate contact spring-dampers at the current state.
pub fn contact_forces(model: &RobotModel, q: &[f64], qd: &[f64]) -> Vec<ContactForce> {
    let n = model.dof();
    let kin = tree_kinematics(model, q, qd);
    let mut forces = Vec::with_capacity(model.contact_spheres.len());
    for (idx, sphere) in model.contact_spheres.iter().enumerate() {
        let pk = point_kinematics(&kin, sphere.link, sphere.along, sphere.perp, n);
        let bottom = pk.pos[1] - sphere.radius;
        let compression = if bottom < 0.0 { -bottom } else { 0.0 };
        let (normal, tangential, rate) = if compression > 0.0 {
            let rate = -pk.vel[1];
            let normal = (sphere.stiffness * compression + sphere.damping * rate).max(0.0);
            let slip = pk.vel[0];
            let scale = (slip / model.friction_vel_reg).clamp(-1.0, 1.0);
            let tangential = -model.friction_mu * normal * scale;
            (normal, tangential, rate)
        } else {
            (0.0, 0.0, 0.0)
        };
        forces.push(ContactForce {
            sphere: idx,
            normal,
            tangential,
            compression,
            compression_rate: rate,
        });
    }
    forces
}

fn generalized_contact_force(model: &RobotModel, q: &[f64], qd: &[f64]) -> DVector<f64> {
    let n = model.dof();
    let kin = tree_kinematics(model, q, qd);
    let forces = contact_forces(model, q, qd);
    let mut tau = DVector::zeros(n);
    for (sphere, force) in model.contact_spheres.iter().zip(forces.iter()) {
        if force.normal == 0.0 && force.tangential == 0.0 {
            continue;
        }
        let pk = point_kinematics(&kin, sphere.link, sphere.along, sphere.perp, n);
        for k in 0..n {
            tau[k] += pk.jac[(0, k)] * force.tangential + pk.jac[(1, k)] * force.normal;
        }
    }
    tau
}

/// Soft anatomical joint limits as penalty torques.
fn joint_limit_torques(model: &RobotModel, q: &[f64]) -> Vec<f64> {
    let mut tau = vec![0.0; model.num_joints()];
    for (j, limit) in model.joint_limits.iter().enumerate() {
        if let Some(lim) = limit {
            let angle = q[3 + j];
            if angle > lim.upper {
                tau[j] = -lim.stiffness * (angle - lim.upper);
            } else if angle < lim.lower {
                tau[j] = -lim.stiffness * (angle - lim.lower);
            }
        }
    }
    tau
}

/// Velocity of the system CoM (mass-weighted mean of link CoM velocities).
pub fn com_velocity(model: &RobotModel, q: &[f64], qd: &[f64]) -> (f64, f64) {
    let kin = tree_kinematics(model, q, qd);
    let mut vx = 0.0;
    let mut vz = 0.0;
    let mut mass = 0.0;
    for (link, lk) in model.links.iter().zip(kin.links.iter()) {
        vx += link.mass * lk.v_com[0];
        vz += link.mass * lk.v_com[1];
        mass += link.mass;
    }
    (vx / mass, vz / mass)
}

/// Total mechanical energy (kinetic + gravitational potential).
pub fn total_energy(model: &RobotModel, q: &[f64], qd: &[f64]) -> f64 {
    let m = mass_matrix(model, q);
    let v = DVector::from_column_slice(qd);
    let kinetic = 0.5 * (&v.transpose() * &m * &v)[(0, 0)];
    let kin = tree_kinematics(model, q, &vec![0.0; model.dof()]);
    let potential: f64 = model
        .links
        .iter()
        .zip(kin.links.iter())
        .map(|(l, k)| l.mass * model.gravity * k.com[1])
        .sum();
    kinetic + potential
}

/// Advance the state by one physics step of size `dt` (semi-implicit Euler:
/// velocities first, then positions). Torques act on the revolute joints
/// only; the floating base is unactuated.
pub fn step(
    model: &RobotModel,
    state: &SimState,
    torques: &[f64],
    dt: f64,
) -> Result<SimState, DivergenceError> {
    let n = model.dof();
    let nj = model.num_joints();
    assert_eq!(torques.len(), nj, "torque dimension mismatch");
    assert!(dt > 0.0, "dt must be positive");

    let mut tau_clamped = vec![0.0; nj];
    for j in 0..nj {
        tau_clamped[j] = torques[j].clamp(-model.torque_limits[j], model.torque_limits[j]);
    }

    let m = mass_matrix(model, &state.q);
    let bias = bias_forces(model, &state.q, &state.qd);
    let contact = generalized_contact_force(model, &state.q, &state.qd);
    let limits = joint_limit_torques(model, &state.q);

    let mut rhs = DVector::zeros(n);
    for j in 0..nj {
        rhs[3 + j] = tau_clamped[j] + limits[j];
    }
    rhs += contact - bias;

    let qdd = solve_accelerations(model, &m, &rhs);

    let mut next = state.clone();
    for k in 0..n {
        next.qd[k] += qdd[k] * dt;
        next.q[k] += next.qd[k] * dt;
    }
    if model.fixed_base {
        for k in 0..3 {
            next.q[k] = state.q[k];
            next.qd[k] = 0.0;
        }
    }
    next.time = state.time + dt;
    next.last_torques = tau_clamped;

    // Record contact coordinates at the new state for reward consumption.
    let forces = contact_forces(model, &next.q, &next.qd);
    for (i, f) in forces.iter().enumerate() {
        next.contact_disp[i] = f.compression;
        next.contact_rate[i] = f.compression_rate;
    }

    if next.is_finite() {
        Ok(next)
    } else {
        Err(DivergenceError { time: next.time })
    }
}

fn solve_accelerations(model: &RobotModel, m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let n = m.nrows();
    if model.fixed_base {
        // Base welded: solve the joint block only.
        let nj = n - 3;
        let sub = m.view((3, 3), (nj, nj)).into_owned();
        let sub_rhs = rhs.rows(3, nj).into_owned();
        let sol = sub
            .clone()
            .cholesky()
            .map(|c| c.solve(&sub_rhs))
            .unwrap_or_else(|| sub.lu().solve(&sub_rhs).expect("singular mass matrix"));
        let mut qdd = DVector::zeros(n);
        for k in 0..nj {
            qdd[3 + k] = sol[k];
        }
        qdd
    } else {
        m.clone()
            .cholesky()
            .map(|c| c.solve(rhs))
            .unwrap_or_else(|| m.clone().lu().solve(rhs).expect("singular mass matrix"))
    }
}

/// Header for the optional per-step trajectory CSV dump.
pub fn trajectory_csv_header(model: &RobotModel) -> alloc::string::String {
    use core::fmt::Write;
    let mut h = alloc::string::String::from("time,qx,qz,pitch");
    for j in 0..model.num_joints() {
        let _ = write!(h, ",j{j}");
    }
    for j in 0..model.num_joints() {
        let _ = write!(h, ",dj{j}");
    }
    h.push_str(",d_fl,d_fr,d_cl,d_cr");
    for j in 0..model.num_joints() {
        let _ = write!(h, ",tau{j}");
    }
    h
}

/// One CSV row matching [`trajectory_csv_header`].
pub fn trajectory_csv_row(state: &SimState) -> alloc::string::String {
    use core::fmt::Write;
    let mut row = alloc::string::String::new();
    let _ = write!(row, "{}", state.time);
    for v in &state.q {
        let _ = write!(row, ",{v}");
    }
    for v in &state.qd[3..] {
        let _ = write!(row, ",{v}");
    }
    for v in &state.contact_disp {
        let _ = write!(row, ",{v}");
    }
    for v in &state.last_torques {
        let _ = write!(row, ",{v}");
    }
    row
}
