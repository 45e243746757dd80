mod common;

use common::*;
use lqrlab::certificates::{certificate, resolve_shift};
use lqrlab::convex_param::{geometric_identity, h_cost, hessian_h_quadratic_form, y_from_k};
use lqrlab::lqr_core::{
    gradient, lqr_cost, lqr_cost_via_p, solve_riccati_kleinman, stability_radius, OperatorKind, Plant,
};
use lqrlab::lyap_kernel::dense::inner;
use lqrlab::lyap_kernel::{
    lyapunov_residual, matrix_exponential, operator_two_norm, solve_adjoint_lyapunov, solve_lyapunov, Mat, SymOperatorRep,
    Vector,
};
use lqrlab::sim_engine::{
    exact_rollout_cost, rollout_cost, sample_sphere_direction, truncated_cost_matrix, RngStream, RolloutConfig,
};
use lqrlab::zeroth_order::{bias_decomposition, draw_samples, twopoint_with_draws, BiasOptions, EstimatorConfig, SampleDraw};
use proptest::prelude::*;
use rand::Rng;

fn plant_strategy() -> impl Strategy<Value = (Plant, u64)> {
    (2usize..5, 1usize..3, any::<u64>()).prop_map(|(n, m, seed)| (random_plant(n, m, &mut rng(seed)), seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lyapunov_round_trip(n in 1usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = hurwitz(n, &mut r);
        let w = spd(n, &mut r);
        let x = solve_lyapunov(&f, &w).unwrap();
        prop_assert!(lyapunov_residual(&f, &x, &w) <= 1e-10 * w.norm());
    }

    #[test]
    fn lyapunov_adjoint_identity(n in 1usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = hurwitz(n, &mut r);
        let (w1, w2) = (spd(n, &mut r), spd(n, &mut r));
        let lhs = inner(&solve_lyapunov(&f, &w1).unwrap(), &w2);
        let rhs = inner(&w1, &solve_adjoint_lyapunov(&f, &w2).unwrap());
        prop_assert!(rel(lhs, rhs) <= 1e-8);
    }

    #[test]
    fn exponential_semigroup(n in 1usize..7, s in 0.0f64..2.0, t in 0.0f64..2.0, seed in any::<u64>()) {
        let f = hurwitz(n, &mut rng(seed));
        let whole = matrix_exponential(&f, s + t).unwrap();
        let split = matrix_exponential(&f, s).unwrap() * matrix_exponential(&f, t).unwrap();
        prop_assert!((&whole - &split).norm() <= 1e-9 * whole.norm().max(1e-300));
    }

    #[test]
    fn closed_loop_inverse_norm_below_trace(n in 1usize..6, seed in any::<u64>()) {
        let f = hurwitz(n, &mut rng(seed));
        let inv = SymOperatorRep::lyapunov(&f).inverse().unwrap();
        let bound = solve_lyapunov(&f, &Mat::identity(n, n)).unwrap().trace();
        prop_assert!(operator_two_norm(&inv) <= bound * (1.0 + 1e-10));
    }

    #[test]
    fn rng_streams_are_bit_identical(seed in any::<u64>(), stream in any::<u64>(), m in 1usize..4, n in 1usize..6) {
        let a = sample_sphere_direction(m, n, &mut RngStream::new(seed, stream).rng());
        let b = sample_sphere_direction(m, n, &mut RngStream::new(seed, stream).rng());
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cost_forms_agree((plant, seed) in plant_strategy()) {
        for k in stabilizing_gains(&plant, 3.0, 4, seed) {
            let x_form = lqr_cost(&plant, &k).value();
            prop_assert!(rel(lqr_cost_via_p(&plant, &k).value(), x_form) <= 1e-10);
        }
    }

    #[test]
    fn stationary_points_are_optimal((plant, _) in plant_strategy()) {
        let ric = solve_riccati_kleinman(&plant, None).unwrap();
        prop_assert!(gradient(&plant, &ric.k_star).unwrap().norm() <= 1e-8);
    }

    #[test]
    fn convex_cost_equality_and_curvature((plant, seed) in plant_strategy()) {
        let shift = resolve_shift(&plant, None).unwrap();
        let mut r = rng(seed ^ 1);
        for k in stabilizing_gains(&plant, 3.0, 4, seed) {
            let f = lqr_cost(&plant, &k).value();
            let y = y_from_k(&plant, &k, shift.as_ref()).unwrap().y;
            let hv = h_cost(&plant, &y, shift.as_ref()).unwrap();
            // Forward error of X(Y) scales with the conditioning of the open-loop operator.
            let tol = 1e-10f64.max(1e-12 / SymOperatorRep::lyapunov(&plant.a).inverse_condition());
            prop_assert!(rel(hv, f) <= tol, "h {} f {} tol {:e}", hv, f, tol);
            let yt = gaussian(plant.m(), plant.n(), &mut r);
            let curv = hessian_h_quadratic_form(&plant, &y, &yt, shift.as_ref()).unwrap();
            prop_assert!(curv >= -1e-10 * yt.norm_squared());
            let cert = certificate(&plant, f, shift.as_ref()).unwrap();
            let scale = yt.norm_squared();
            prop_assert!(curv >= cert.mu * scale * (1.0 - 1e-9));
            prop_assert!(curv <= cert.l * scale * (1.0 + 1e-9));
        }
    }

    #[test]
    fn geometric_identity_holds((plant, seed) in plant_strategy()) {
        let shift = resolve_shift(&plant, None).unwrap();
        for k in stabilizing_gains(&plant, 3.0, 4, seed) {
            let (lhs, rhs) = geometric_identity(&plant, &k, shift.as_ref()).unwrap();
            prop_assert!(rel(rhs, lhs) <= 1e-8, "{} vs {}", lhs, rhs);
        }
    }

    #[test]
    fn stability_radius_perturbations_stabilize((plant, seed) in plant_strategy()) {
        let mut r = rng(seed ^ 2);
        for k in stabilizing_gains(&plant, 3.0, 3, seed) {
            let zeta = stability_radius(&plant, &k).unwrap();
            for _ in 0..10 {
                let d = gaussian(plant.m(), plant.n(), &mut r);
                let kp = &k + &d * (0.99 * zeta / lqrlab::lyap_kernel::dense::spectral_norm(&d));
                prop_assert!(lqr_cost(&plant, &kp).is_finite());
            }
        }
    }

    #[test]
    fn rollouts_match_exact_and_grow_with_horizon((plant, seed) in plant_strategy(), tau in 0.1f64..20.0) {
        let mut r = rng(seed ^ 3);
        let k = stabilizing_gains(&plant, 2.0, 1, seed).remove(0);
        let x0 = Vector::from_fn(plant.n(), |_, _| r.sample::<f64, _>(rand_distr::StandardNormal));
        let exact = exact_rollout_cost(&plant, &k, &x0, tau).unwrap();
        let rk = rollout_cost(&plant, &k, &x0, &RolloutConfig::rk45(tau)).unwrap();
        prop_assert!((rk - exact).abs() <= 1e-6f64.max(1e-6 * exact.abs()));
        let longer = exact_rollout_cost(&plant, &k, &x0, 1.5 * tau).unwrap();
        prop_assert!(longer >= exact * (1.0 - 1e-12));
        let p = lqrlab::lqr_core::cost_to_go(&plant, &k).unwrap();
        prop_assert!(exact <= x0.dot(&(&p * &x0)) * (1.0 + 1e-10));
        let m = truncated_cost_matrix(&plant, &k, tau).unwrap();
        prop_assert!(rel(x0.dot(&(&m * &x0)), exact) <= 1e-9);
    }

    #[test]
    fn twopoint_estimate_is_even_in_u((plant, seed) in plant_strategy()) {
        let k = stabilizing_gains(&plant, 2.0, 1, seed).remove(0);
        let cfg = EstimatorConfig { rollout: RolloutConfig::exact(10.0), ..EstimatorConfig::new(1e-3, 4, 10.0, seed) };
        let draws = draw_samples(&plant, &cfg);
        let flipped: Vec<SampleDraw> = draws.iter().map(|d| SampleDraw { u: -&d.u, x: d.x.clone() }).collect();
        let a = twopoint_with_draws(&plant, &k, &cfg, &draws).unwrap().value;
        let b = twopoint_with_draws(&plant, &k, &cfg, &flipped).unwrap().value;
        prop_assert!((&a - &b).norm() <= 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn truncation_bias_within_certified_envelope((plant, seed) in plant_strategy()) {
        let k = stabilizing_gains(&plant, 2.0, 1, seed).remove(0);
        let a = lqr_cost(&plant, &k).value();
        let opts = BiasOptions { a, ell: Some(0.0), ell_samples: 0 };
        let mut gaps = Vec::new();
        for tau in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let cfg = EstimatorConfig { rollout: RolloutConfig::exact(tau), ..EstimatorConfig::new(1e-4, 4, tau, seed) };
            let rep = bias_decomposition(&plant, &k, &cfg, opts).unwrap();
            prop_assume!(rep.within_budget);
            prop_assert!(rep.finite_time_ok, "tau {}: {:e} > {:e}", tau, rep.tilde_bar, rep.finite_time_bound);
            gaps.push(rep.tilde_bar);
        }
        prop_assert!(gaps[4] <= gaps[0]);
    }
}

#[test]
fn operator_kind_norms_are_consistent() {
    let plant = random_plant(3, 2, &mut rng(11));
    let k = stabilizing_gains(&plant, 2.0, 1, 11).remove(0);
    let op = plant.operator(OperatorKind::ClosedLoop(&k)).unwrap();
    let inv = op.inverse().unwrap();
    let f = plant.closed_loop(&k);
    let bound = solve_lyapunov(&f, &Mat::identity(3, 3)).unwrap().trace();
    assert!(operator_two_norm(&inv) <= bound * (1.0 + 1e-10));
}
