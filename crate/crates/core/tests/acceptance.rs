//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line to stdout
//! and then asserts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lqrlab::bench::gradcheck::grad_check;
use lqrlab::bench::median_relative_error;
use lqrlab::bench::plants::{make_mass_spring, nonconvex_demo, MassSpringSpec};
use lqrlab::bench::bias_sweep;
use lqrlab::certificates::{
    check_gradient_comparison, check_gradient_lipschitz, check_hessian_sandwich, check_r_of_a, check_stability_radius,
    check_sublevel_bounds, check_truncation, pl_check, resolve_shift, sample_sublevel,
};
use lqrlab::convex_param::{geometric_identity, h_cost, y_from_k};
use lqrlab::lqr_core::{are_residual, lqr_cost, lqr_cost_via_p, solve_riccati_kleinman, suboptimality_identity, Plant};
use lqrlab::optimizers::{
    gradient_descent, gradient_descent_y, linear_fit, log_error_fit, random_search, DescentOptions, FailurePolicy,
    Oracle, RandomSearchOptions, Status, StepRule, YStart,
};
use lqrlab::sim_engine::{InitialDist, RolloutConfig};
use lqrlab::zeroth_order::{correlation_events, EstimatorConfig, MU1};
use lqrlab::Mat;

fn report(id: u32, name: &str, pass: bool, elapsed: Duration, detail: String) {
    let line = format!(
        "[acceptance] criterion {id:>2} {:<4} {name} ({:.2} s): {detail}\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn chain(s: usize) -> Plant {
    make_mass_spring(&MassSpringSpec::identity(s)).unwrap()
}

fn weighted_chain(s: usize) -> Plant {
    make_mass_spring(&MassSpringSpec::weighted(s)).unwrap()
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

#[test]
fn criterion_01_nonconvexity_regression() {
    let start = Instant::now();
    let demo = nonconvex_demo(0.1, 3).unwrap();
    let elapsed = start.elapsed();
    let target = -135.27;
    let pass = (demo.hessian_k3 - target).abs() <= 0.5 && elapsed < Duration::from_secs(1);
    report(
        1,
        "Hessian form at the segment midpoint",
        pass,
        elapsed,
        format!(
            "computed {:.6} (second difference {:.6}, f(K3) = {:.12}), expected {target} ± 0.5",
            demo.hessian_k3, demo.second_difference_k3, demo.cost_k3
        ),
    );
}

#[test]
fn criterion_02_riccati_consistency() {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut ok = true;
    let mut plants = vec![Plant::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap()];
    for s in [1, 2, 5, 10] {
        plants.push(chain(s));
        plants.push(weighted_chain(s));
    }
    for p in &plants {
        let sol = solve_riccati_kleinman(p, None).unwrap();
        let r = are_residual(p, &sol.p_star).unwrap() / p.q.norm();
        worst = worst.max(r);
        ok &= r <= 1e-9;
    }
    let scalar = solve_riccati_kleinman(&plants[0], None).unwrap();
    let k_err = (scalar.k_star[(0, 0)] - (1.0 + 2f64.sqrt())).abs();
    let elapsed = start.elapsed();
    let pass = ok && k_err <= 1e-10 && elapsed < Duration::from_secs(5);
    report(
        2,
        "Riccati consistency",
        pass,
        elapsed,
        format!("max ARE residual / ‖Q‖_F = {worst:.3e} over {} plants, scalar |K⋆ − (1+√2)| = {k_err:.3e}", plants.len()),
    );
}

#[test]
fn criterion_03_gradient_oracles() {
    let start = Instant::now();
    let (mut gf, mut gh, mut hs, mut points) = (0.0_f64, 0.0_f64, 0.0_f64, 0);
    for (i, s) in [1, 2, 5].into_iter().enumerate() {
        let p = chain(s);
        let f_star = solve_riccati_kleinman(&p, None).unwrap().f_star(&p);
        let rep = grad_check(&p, 3.0 * f_star, 50, 1e-5, 1e-4, 100 + i as u64).unwrap();
        gf = gf.max(rep.max_grad_f_err);
        gh = gh.max(rep.max_grad_h_err);
        hs = hs.max(rep.max_hessian_err);
        points += rep.rows.len();
    }
    let elapsed = start.elapsed();
    let pass = gf <= 1e-5 && gh <= 1e-5 && hs <= 1e-3 && elapsed < Duration::from_secs(60);
    report(
        3,
        "gradient and Hessian oracles vs finite differences",
        pass,
        elapsed,
        format!("{points} points: max rel err ∇f {gf:.2e}, ∇h {gh:.2e}, Hessian {hs:.2e}"),
    );
}

#[test]
fn criterion_04_identity_suite() {
    let start = Instant::now();
    let (mut trace_form, mut subopt, mut geo, mut cost_eq) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut gains_checked = 0;
    for (i, p) in [chain(2), weighted_chain(5)].iter().enumerate() {
        let ric = solve_riccati_kleinman(p, None).unwrap();
        let shift = resolve_shift(p, None).unwrap();
        let gains = sample_sublevel(p, 3.0 * ric.f_star(p), 100, 400 + i as u64, &ric.k_star, &[]).unwrap();
        for k in &gains {
            let f = lqr_cost(p, k).value();
            trace_form = trace_form.max(rel(lqr_cost_via_p(p, k).value(), f));
            let (lhs, rhs) = suboptimality_identity(p, k, &ric).unwrap();
            subopt = subopt.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
            let (g_lhs, g_rhs) = geometric_identity(p, k, shift.as_ref()).unwrap();
            geo = geo.max(rel(g_rhs, g_lhs));
            let y = y_from_k(p, k, shift.as_ref()).unwrap().y;
            cost_eq = cost_eq.max(rel(h_cost(p, &y, shift.as_ref()).unwrap(), f));
            gains_checked += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = trace_form <= 1e-10 && subopt <= 1e-8 && geo <= 1e-8 && cost_eq <= 1e-10;
    report(
        4,
        "identity suite",
        pass,
        elapsed,
        format!(
            "{gains_checked} gains: f = tr(PΩ) {trace_form:.2e}, suboptimality {subopt:.2e}, geometric {geo:.2e}, f = h {cost_eq:.2e}"
        ),
    );
}

#[test]
fn criterion_05_certified_inequalities() {
    let start = Instant::now();
    let trials = 1000;
    let coupled = Plant::new(
        Mat::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
        Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        Mat::identity(2, 2),
        Mat::identity(1, 1),
        Mat::identity(2, 2),
    )
    .unwrap();
    let plants = [("scalar", Plant::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap()), ("coupled", coupled), ("chain2", chain(2))];
    let taus: Vec<f64> = (1..=50).map(f64::from).collect();
    let mut failures = Vec::new();
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for (i, (label, p)) in plants.iter().enumerate() {
        let ric = solve_riccati_kleinman(p, None).unwrap();
        let a = 2.0 * ric.f_star(p);
        let seed = 500 + i as u64;
        let reports = vec![
            check_sublevel_bounds(p, a, trials, seed).unwrap(),
            check_hessian_sandwich(p, a, trials, seed).unwrap(),
            check_gradient_comparison(p, a, trials, seed).unwrap(),
            check_gradient_lipschitz(p, a, trials, seed).unwrap(),
            check_truncation(p, a, trials, seed, &taus).unwrap(),
            check_stability_radius(p, &ric.k_star, trials, seed).unwrap(),
            check_r_of_a(p, a, trials, seed).unwrap(),
        ];
        for r in &reports {
            let w = worst.entry(r.name.clone()).or_insert(0.0);
            *w = w.max(r.worst_ratio);
            if !r.pass {
                failures.push(format!("{label}/{} ({} violations)", r.name, r.violations));
            }
        }
        let pl = pl_check(p, a, trials, seed).unwrap();
        let w = worst.entry("pl".into()).or_insert(0.0);
        *w = w.max(pl.threshold / pl.min_ratio);
        if !pl.pass {
            failures.push(format!("{label}/pl"));
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(300);
    let ratios: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.2e}")).collect();
    report(
        5,
        "certified inequalities",
        pass,
        elapsed,
        format!("{trials} trials per check on 3 plants; worst observed/bound: {}; violations: {:?}", ratios.join(", "), failures),
    );
}

struct BiasShape {
    r2: Vec<f64>,
    segment: Vec<usize>,
    floors: Vec<f64>,
    saturated: bool,
}

/// Fits `ln bias_rel` against `τ` on the points more than ten times above the
/// floor (the value at the largest `τ`), per radius.
fn bias_shape(plant: &Plant, samples: usize, seed: u64, taus: &[f64], radii: &[f64]) -> BiasShape {
    let k = Mat::zeros(plant.m(), plant.n());
    let base = EstimatorConfig { rollout: RolloutConfig::exact(taus[0]), ..EstimatorConfig::new(radii[0], samples, taus[0], seed) };
    let rows = bias_sweep(plant, &k, &base, radii, taus).unwrap();
    let mut shape = BiasShape { r2: Vec::new(), segment: Vec::new(), floors: Vec::new(), saturated: true };
    for (j, _) in radii.iter().enumerate() {
        let series: Vec<(f64, f64)> = rows[j * taus.len()..(j + 1) * taus.len()].iter().map(|b| (b.tau, b.bias_rel)).collect();
        let floor = series.last().unwrap().1;
        let tail = &series[series.len() * 3 / 4..];
        shape.saturated &= tail.iter().all(|(_, b)| (b / floor - 1.0).abs() <= 0.5);
        let (xs, ys): (Vec<f64>, Vec<f64>) = series.iter().filter(|(_, b)| *b > 10.0 * floor).map(|(t, b)| (*t, b.ln())).unzip();
        let fit = linear_fit(&xs, &ys);
        shape.r2.push(fit.filter(|f| f.slope < 0.0).map_or(0.0, |f| f.r2));
        shape.segment.push(xs.len());
        shape.floors.push(floor);
    }
    shape
}

#[test]
fn criterion_06_bias_shape() {
    let start = Instant::now();
    let mut taus: Vec<f64> = vec![1.0, 2.0, 5.0];
    taus.extend((1..=40).map(|i| 10.0 * i as f64));
    let radii = [1e-4, 1e-5];
    let mut details = Vec::new();
    let mut pass = true;
    for s in [5, 10] {
        let shape = bias_shape(&chain(s), 20, 600 + s as u64, &taus, &radii);
        let ratio = shape.floors[0] / shape.floors[1];
        let ok = shape.r2.iter().zip(&shape.segment).all(|(r2, n)| *r2 >= 0.98 && *n >= 3)
            && shape.saturated
            && (30.0..=300.0).contains(&ratio);
        pass &= ok;
        details.push(format!(
            "s={s}: R² {:?} on {:?} points, floors {:.3e}/{:.3e} (ratio {ratio:.1}), saturated {}",
            shape.r2.iter().map(|r| (r * 1e4).round() / 1e4).collect::<Vec<_>>(),
            shape.segment,
            shape.floors[0],
            shape.floors[1],
            shape.saturated
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(600);
    report(6, "bias shape", pass, elapsed, details.join("; "));
}

#[test]
fn criterion_07_convergence_rates() {
    let start = Instant::now();
    let plant = weighted_chain(10);
    let k0 = Mat::zeros(10, 20);
    let gd_opts = DescentOptions { rule: StepRule::backtracking(), max_iters: 100_000, tol: 0.0, target_rel_err: Some(1e-6) };
    let (gd, _) = gradient_descent(&plant, &k0, &gd_opts).unwrap();
    let fit = log_error_fit(&gd).unwrap();
    let gd_rel = gd.relative_errors().last().copied().unwrap();
    let gd_ok = gd.status == Status::Converged && gd_rel <= 1e-6 && fit.slope < 0.0 && fit.r2 >= 0.95;

    let shift = resolve_shift(&plant, None).unwrap();
    let gy_opts = DescentOptions { rule: StepRule::backtracking(), max_iters: 50_000, tol: 0.0, target_rel_err: Some(1e-3) };
    let (gy, _) = gradient_descent_y(&plant, &YStart::K(k0), shift.as_ref(), &gy_opts).unwrap();
    let gy_rel = gy.relative_errors().last().copied().unwrap();
    let gy_ok = gy.status == Status::Converged && gy_rel <= 1e-3;
    let elapsed = start.elapsed();
    report(
        7,
        "convergence rates",
        gd_ok && gy_ok,
        elapsed,
        format!(
            "GD: {} iterations to rel err {gd_rel:.2e}, log-error slope {:.3e}, R² {:.4}; GY: {} iterations to rel err {gy_rel:.2e}",
            gd.last().unwrap().iter,
            fit.slope,
            fit.r2,
            gy.last().unwrap().iter
        ),
    );
}

#[test]
fn criterion_08_random_search() {
    let start = Instant::now();
    let plant = chain(10);
    let ric = solve_riccati_kleinman(&plant, None).unwrap();
    let f_star = ric.f_star(&plant);
    let k0 = Mat::zeros(10, 20);
    let opts = RandomSearchOptions {
        rule: StepRule::fixed(1e-4),
        max_iters: 4000,
        on_failure: FailurePolicy::Retry(3),
        oracle: Some(Oracle { f_star, k_star: Some(ric.k_star.clone()) }),
        ..Default::default()
    };
    let traces: Vec<_> = (0..11u64)
        .map(|seed| {
            let est = EstimatorConfig { rollout: RolloutConfig::exact(200.0), ..EstimatorConfig::new(1e-5, 20, 200.0, 800 + seed) };
            random_search(&plant, &k0, &est, &opts).unwrap().0
        })
        .collect();
    let median = median_relative_error(&traces);
    let windows: Vec<f64> = median.chunks_exact(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    let monotone = windows.windows(2).all(|w| w[1] < w[0]);
    let (first, last) = (median[0], *median.last().unwrap());
    let dropped = last <= 0.1 * first;

    let eps = [1e-1, 3e-2, 1e-2];
    let hits: Vec<Option<usize>> = eps.iter().map(|e| median.iter().position(|m| m / first <= *e)).collect();
    let fit = if hits.iter().all(Option::is_some) {
        let xs: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
        let ys: Vec<f64> = hits.iter().map(|h| h.unwrap() as f64).collect();
        linear_fit(&xs, &ys)
    } else {
        None
    };
    let scaling = fit.is_some_and(|f| f.r2 >= 0.9);
    let elapsed = start.elapsed();
    let pass = monotone && dropped && scaling && elapsed < Duration::from_secs(1800);
    report(
        8,
        "random search",
        pass,
        elapsed,
        format!(
            "median rel err {first:.3} → {last:.4} over {} iterations, window means monotone {monotone}, \
             iterations to ε {:?}, log(1/ε) fit R² {:.3}",
            median.len() - 1,
            hits,
            fit.map_or(f64::NAN, |f| f.r2)
        ),
    );
}

#[test]
fn criterion_09_correlation_events() {
    let start = Instant::now();
    let plant = chain(5);
    let k = Mat::zeros(5, 10);
    let n = plant.n();
    let trials = 500;
    let counts = [n, 2 * n, 4 * n, 8 * n];
    let ps: Vec<f64> = counts
        .iter()
        .map(|&c| correlation_events(&plant, &k, c, trials, 900, InitialDist::StandardNormal, None).unwrap().p_m1)
        .collect();
    let sigma = |p: f64| (p * (1.0 - p) / trials as f64).sqrt();
    let nondecreasing = ps.windows(2).all(|w| w[1] >= w[0] - 2.0 * (sigma(w[0]).powi(2) + sigma(w[1]).powi(2)).sqrt());
    let elapsed = start.elapsed();
    let pass = ps[2] >= 0.95 && nondecreasing && elapsed < Duration::from_secs(600);
    report(
        9,
        "correlation events",
        pass,
        elapsed,
        format!("P(M1, μ1 = {MU1}) for N = {counts:?}: {ps:?}; nondecreasing within 2σ {nondecreasing}"),
    );
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn criterion_10_determinism() {
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_lqrlab");
    let work = tempfile::tempdir().unwrap();
    let config = work.path().join("run.toml");
    fs::write(
        &config,
        r#"
seed = 3

[plant]
source = "mass-spring"
masses = 2
q = { identity_plus = [[1, 10.0]] }

[grad_check]
points = 5

[flow]
t_final = 2.0

[descend]
max_iters = 50

[descend_y]
max_iters = 50

[random_search]
max_iters = 20
seeds = 3
samples = 4
tau = 20.0
r = 1e-4
alpha = 1e-3

[bias_sweep]
taus = [1.0, 5.0, 20.0]
samples = 4

[correlation]
samples = [4, 8]
trials = 20

[certify]
samples = 20
"#,
    )
    .unwrap();
    let tasks = [
        "solve", "grad-check", "flow", "descend", "descend-y", "random-search", "bias-sweep", "correlation", "certify",
        "nonconvex-demo",
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for task in tasks {
        let out = work.path().join(task);
        let run = || {
            let status = Command::new(bin)
                .args([task, "--config"])
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .output()
                .unwrap();
            assert!(status.status.success(), "{task}: {}", String::from_utf8_lossy(&status.stderr));
            let files = read_dir(&out);
            fs::remove_dir_all(&out).unwrap();
            files
        };
        let (first, second) = (run(), run());
        files += first.len();
        if first != second {
            mismatches.push(task);
        }
    }
    let elapsed = start.elapsed();
    report(
        10,
        "determinism",
        mismatches.is_empty(),
        elapsed,
        format!("{} tasks, {files} artifacts compared byte for byte; mismatched tasks {mismatches:?}", tasks.len()),
    );
}
