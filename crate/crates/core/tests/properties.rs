//! Property-based invariants for the numerics that unit tests only probe
//! pointwise: reward decomposition, parameter-vector round-trips, and
//! structural properties of the mass matrix.

use crutchgait_core::dynamics::mass_matrix;
use crutchgait_core::model::{build_subject_model, ModelConfig, SubjectMeasurements};
use crutchgait_core::nn::{Actor, Critic};
use crutchgait_core::rewards::{
    crutch_displacement_cost, total_reward, CrutchCostForm, RewardConfig, RewardInputs,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> impl Strategy<Value = f64> {
    -10.0..10.0f64
}

proptest! {
    /// The reported total is exactly the sum of the component terms.
    #[test]
    fn reward_breakdown_sums_to_total(
        vel in small(), lat in small(), height in -1.0..2.0f64, pitch in small(),
        t0 in small(), t1 in small(), t2 in small(),
        hip_r in small(), knee_r in small(), ankle_r in small(),
        hip_l in small(), knee_l in small(), ankle_l in small(),
        d_r in 0.0..0.1f64, d_l in 0.0..0.1f64,
    ) {
        let inputs = RewardInputs {
            com_vel_x: vel,
            lateral_pos: lat,
            root_height: height,
            pitch,
            exo_torques: [t0, t1, t2, t0, t1, t2],
            hip_r, knee_r, ankle_r, hip_l, knee_l, ankle_l,
            d_crutch_r: d_r,
            d_crutch_l: d_l,
        };
        let cfg = RewardConfig::default();
        let b = total_reward(&inputs, &cfg);
        let sum = b.r_walk + b.r_walk_straight + b.r_dont_fall + b.r_action
            + b.r_orientation + b.r_flat_contact + b.r_crutch_reaction_force
            + b.r_hip_angle + b.r_ensure_crutch_contact;
        prop_assert!((b.total - sum).abs() <= 1e-12 * sum.abs().max(1.0));
        prop_assert!(b.total.is_finite());
    }

    /// Both cost forms are nonnegative, zero only at zero displacement, and
    /// monotone nondecreasing in each displacement.
    #[test]
    fn crutch_cost_nonnegative_and_monotone(
        d_r in 0.0..0.5f64, d_l in 0.0..0.5f64, bump in 0.0..0.5f64,
    ) {
        for form in [CrutchCostForm::Linear, CrutchCostForm::Squared] {
            let c = crutch_displacement_cost(d_r, d_l, form);
            prop_assert!(c >= 0.0);
            prop_assert_eq!(crutch_displacement_cost(0.0, 0.0, form), 0.0);
            prop_assert!(crutch_displacement_cost(d_r + bump, d_l, form) >= c);
            prop_assert!(crutch_displacement_cost(d_r, d_l + bump, form) >= c);
        }
    }

    /// flatten -> unflatten into a differently initialized network of the
    /// same shape reproduces the original parameter vector bit for bit.
    #[test]
    fn actor_param_vector_round_trips(seed in 0u64..1000, obs in 2usize..8, act in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = Actor::new(obs, act, 1.0, &mut rng);
        let mut dst = Actor::new(obs, act, 0.5, &mut rng);
        let params = src.flatten();
        dst.unflatten(&params);
        prop_assert_eq!(dst.flatten(), params);
    }

    /// Same round-trip for the critic.
    #[test]
    fn critic_param_vector_round_trips(seed in 0u64..1000, obs in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = Critic::new(obs, &mut rng);
        let mut dst = Critic::new(obs, &mut rng);
        let params = src.flatten();
        dst.unflatten(&params);
        prop_assert_eq!(dst.flatten(), params);
    }
}

proptest! {
    // The full-model mass matrix is expensive; keep the case count low.
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// M(q) is symmetric with strictly positive diagonal for arbitrary
    /// configurations.
    #[test]
    fn mass_matrix_symmetric_positive_diagonal(
        pitch in -1.0..1.0f64,
        j0 in -1.5..1.5f64, j1 in -1.5..1.5f64, j2 in -1.5..1.5f64,
        j3 in -1.5..1.5f64, j4 in -1.5..1.5f64,
    ) {
        let model = build_subject_model(
            &SubjectMeasurements::reference_subject(),
            &ModelConfig::default(),
        )
        .unwrap();
        let mut q = vec![0.0; model.dof()];
        q[1] = 0.8;
        q[2] = pitch;
        for (k, v) in [j0, j1, j2, j3, j4, j0, j1, j2, j3, j4].iter().enumerate() {
            if 3 + k < q.len() {
                q[3 + k] = *v;
            }
        }
        let m = mass_matrix(&model, &q);
        for r in 0..m.nrows() {
            prop_assert!(m[(r, r)] > 0.0);
            for c in 0..m.ncols() {
                let scale = m[(r, r)].max(m[(c, c)]);
                prop_assert!((m[(r, c)] - m[(c, r)]).abs() <= 1e-9 * scale);
            }
        }
    }
}
