mod common;

use common::*;
use lqrlab::bench::plants::{make_mass_spring, MassSpringSpec};
use lqrlab::certificates::{certificate, resolve_shift};
use lqrlab::convex_param::h_cost;
use lqrlab::lqr_core::{gradient, lqr_cost, solve_riccati_kleinman, Plant};
use lqrlab::optimizers::{
    gradient_descent, gradient_descent_y, gradient_flow, DescentOptions, FlowOptions, StepRule, YStart,
};
use lqrlab::sim_engine::RolloutConfig;
use lqrlab::zeroth_order::{estimate_gradient_unbiased, EstimatorConfig};
use lqrlab::Mat;

fn plants() -> Vec<(Plant, Mat)> {
    let scalar = Plant::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let coupled = Plant::new(
        Mat::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
        Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        Mat::identity(2, 2),
        Mat::identity(1, 1),
        Mat::identity(2, 2),
    )
    .unwrap();
    let chain = make_mass_spring(&MassSpringSpec::identity(2)).unwrap();
    vec![
        (scalar, Mat::from_element(1, 1, 3.0)),
        (coupled, Mat::from_row_slice(1, 2, &[2.0, 3.0])),
        (chain, Mat::from_row_slice(2, 4, &[1.0, 0.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.5])),
    ]
}

#[test]
fn theory_step_descent_decreases_and_obeys_rates() {
    for (plant, k0) in plants() {
        let ric = solve_riccati_kleinman(&plant, None).unwrap();
        let f0 = lqr_cost(&plant, &k0).value();
        let cert = certificate(&plant, f0, None).unwrap();
        let opts = DescentOptions { rule: StepRule::Theory, max_iters: 300, tol: 0.0, target_rel_err: None };
        let (trace, _) = gradient_descent(&plant, &k0, &opts).unwrap();
        let errs = trace.objective_errors();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "objective error must strictly decrease");
        assert!(errs.iter().all(|e| e + ric.f_star(&plant) <= f0 * (1.0 + 1e-12)), "left the sublevel set");
        let alpha = 1.0 / cert.l_f;
        let gamma = 1.0 - alpha * cert.mu_f;
        assert!(trace.bounded_by(|r| gamma.powi(r.iter as i32)));
        let e0 = (&k0 - &ric.k_star).norm_squared();
        for r in &trace.rows {
            assert!(r.gain_err.powi(2) <= cert.b * gamma.powi(r.iter as i32) * e0 * (1.0 + 1e-9));
        }
    }
}

#[test]
fn flow_obeys_exponential_rate() {
    for (plant, k0) in plants() {
        let f0 = lqr_cost(&plant, &k0).value();
        let rho = certificate(&plant, f0, None).unwrap().rho;
        let (trace, _) = gradient_flow(&plant, &k0, &FlowOptions::new(5.0)).unwrap();
        assert!(trace.monotone(1e-12));
        assert!(trace.bounded_by(|r| (-rho * r.time).exp()));
    }
}

#[test]
fn y_descent_obeys_strongly_convex_rate() {
    for (plant, k0) in plants() {
        let shift = resolve_shift(&plant, None).unwrap();
        let f0 = lqr_cost(&plant, &k0).value();
        let cert = certificate(&plant, f0, shift.as_ref()).unwrap();
        let opts = DescentOptions { rule: StepRule::Theory, max_iters: 300, tol: 0.0, target_rel_err: None };
        let (trace, gain) = gradient_descent_y(&plant, &YStart::K(k0.clone()), shift.as_ref(), &opts).unwrap();
        let errs = trace.objective_errors();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-14 * f0));
        let gamma = 1.0 - cert.mu / cert.l;
        assert!(trace.bounded_by(|r| gamma.powi(r.iter as i32)));
        let y = lqrlab::convex_param::y_from_k(&plant, &gain.k, shift.as_ref()).unwrap().y;
        assert!(h_cost(&plant, &y, shift.as_ref()).unwrap() <= f0);
    }
}

#[test]
fn single_sample_unbiased_estimates_average_to_gradient() {
    let plant = Plant::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let k = Mat::from_element(1, 1, 3.0);
    let g = gradient(&plant, &k).unwrap()[(0, 0)];
    let trials = 100_000u64;
    let mut cfg = EstimatorConfig { rollout: RolloutConfig::exact(1.0), ..EstimatorConfig::new(1e-3, 1, 1.0, 17) };
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for t in 0..trials {
        cfg.stream_base = t;
        let v = estimate_gradient_unbiased(&plant, &k, &cfg).unwrap().value[(0, 0)];
        sum += v;
        sum_sq += v * v;
    }
    let n = trials as f64;
    let mean = sum / n;
    let se = ((sum_sq / n - mean * mean) / n).sqrt();
    assert!((mean - g).abs() <= 3.0 * se, "mean {mean} gradient {g} se {se}");
}

#[test]
fn random_plants_descend_to_riccati_gain() {
    let mut r = rng(5);
    for _ in 0..5 {
        let plant = random_plant(3, 2, &mut r);
        let ric = solve_riccati_kleinman(&plant, None).unwrap();
        let k0 = stabilizing_gains(&plant, 2.0, 1, 9).remove(0);
        let opts = DescentOptions { max_iters: 20_000, tol: 1e-9, ..Default::default() };
        let (trace, k) = gradient_descent(&plant, &k0, &opts).unwrap();
        assert!((&k - &ric.k_star).norm() <= 1e-5 * ric.k_star.norm().max(1.0), "{:?}", trace.status);
    }
}
