//! Experiment harness behind the `lqrlab` binary.
//!
//! Every run writes its artifacts plus `manifest.toml` into the output
//! directory. The manifest is the fully resolved config (plant and initial
//! gain inlined) followed by a `[manifest]` table of artifact digests, and can
//! be passed back as `--config` to replay the run.
//!
//! CSV schemas:
//!
//! | task | file | columns |
//! |------|------|---------|
//! | flow, descend, descend-y | `trace.csv` | `iter,obj_err,grad_norm,step,wall_ms` |
//! | random-search | `trace_seed<S>.csv` | same as above |
//! | random-search | `median.csv` | `iter,median_rel_err` |
//! | bias-sweep | `bias.csv` | `tau,r,bias_rel,total_rel` |
//! | correlation | `correlation.csv` | `samples,trials,p_m1,p_m2,mu2,implied_constant` |
//! | grad-check | `gradcheck.csv` | `point,cost,grad_f_err,grad_h_err,hessian_err` |
//! | nonconvex-demo | `curve.csv` | `gamma,cost` |
//!
//! `bias_rel = ‖∇̂f − ∇̄f‖_F/‖∇̂f‖_F` and `total_rel = ‖∇̄f − ∇f‖_F/‖∇f‖_F`.

pub mod config;
pub mod gradcheck;
pub mod plants;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use self::config::{mat_to_rows as rows, Artifact, ExperimentConfig, GainSpec, ManifestInfo, MatrixSpec, PlantSource, Task};
use crate::certificates::{
    certificate, check_gradient_comparison, check_gradient_lipschitz, check_hessian_sandwich, check_r_of_a,
    check_stability_radius, check_sublevel_bounds, check_truncation, pl_check, sublevel_bounds, theta_bound,
    resolve_shift, InequalityReport,
};
use crate::error::LqrError;
use crate::lqr_core::{gradient, solve_riccati_kleinman, Plant};
use crate::lyap_kernel::Mat;
use crate::optimizers::{
    fmt_f64, gradient_descent_y, gradient_flow, preconditioned_descent, random_search, ConvergenceTrace,
    DescentOptions, FailurePolicy, FlowOptions, Oracle, RandomSearchOptions, StepRule, YStart,
};
use crate::parallel::map_indexed;
use crate::zeroth_order::{correlation_events, draw_samples, twopoint_with_draws, unbiased_with_draws, EstimatorConfig};

pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("bad config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] LqrError),
    /// Artifacts were written but a requested check did not hold.
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => EXIT_CONFIG,
            BenchError::Numerical(_) => EXIT_NUMERICAL,
            BenchError::CheckFailed(_) => EXIT_CHECK,
            BenchError::Io(_) => EXIT_IO,
        }
    }
}

type Result<T> = std::result::Result<T, BenchError>;

/// Reads and validates a config; relative CSV paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf)> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
    let cfg = ExperimentConfig::from_toml(&text).map_err(BenchError::Config)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub task: Task,
    pub dir: PathBuf,
    pub artifacts: Vec<Artifact>,
    pub summary: serde_json::Value,
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<Artifact>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| BenchError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(Artifact { file: name.into(), bytes: bytes.len() as u64, sha256: hex(&Sha256::digest(bytes)) });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&sanitize(serde_json::to_value(value).map_err(io)?)).map_err(io)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(&r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(io)?;
        self.write(name, &bytes)
    }

    fn trace(&mut self, name: &str, trace: &ConvergenceTrace, keep_wall: bool) -> Result<()> {
        let mut t = trace.clone();
        if !keep_wall {
            t.strip_wall_time();
        }
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        self.write(name, &buf)
    }
}

fn io(e: impl std::fmt::Display) -> BenchError {
    BenchError::Io(e.to_string())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// JSON has no NaN or infinity; they are written as strings.
fn sanitize(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Array(a) => Value::Array(a.into_iter().map(sanitize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, sanitize(v))).collect()),
        Value::Null => Value::String("NaN".into()),
        other => other,
    }
}

fn trace_summary(trace: &ConvergenceTrace, k: &Mat) -> serde_json::Value {
    let last = trace.last();
    json!({
        "method": trace.method,
        "status": trace.status,
        "iterations": last.map(|r| r.iter),
        "f_star": trace.f_star,
        "final_obj_err": last.map(|r| r.obj_err),
        "final_grad_norm": last.map(|r| r.grad_norm),
        "final_gain": rows(k),
        "notes": trace.notes,
    })
}

/// Runs the configured task and writes its artifacts and manifest.
pub fn run(cfg: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    cfg.validate().map_err(BenchError::Config)?;
    let task = cfg.task.ok_or_else(|| BenchError::Config("no task given".into()))?;
    let source = match (&cfg.plant, task) {
        (Some(p), _) => p.clone(),
        (None, Task::NonconvexDemo) => PlantSource::Nonconvex,
        (None, _) => return Err(BenchError::Config("no [plant] section".into())),
    };
    let plant = source.build(base).map_err(BenchError::Config)?;
    let uses_k0 = matches!(task, Task::Flow | Task::Descend | Task::DescendY | Task::RandomSearch | Task::BiasSweep | Task::Correlation);
    let k0 = uses_k0.then(|| cfg.k0.resolve(&plant, base)).transpose().map_err(BenchError::Config)?;

    let mut out = Artifacts::new(&cfg.output.dir)?;
    let wall = cfg.output.record_wall_time;
    let result = dispatch(task, cfg, &plant, k0.as_ref(), &mut out, wall);

    let mut resolved = cfg.clone();
    resolved.task = Some(task);
    resolved.plant = Some(if task == Task::NonconvexDemo && cfg.plant.is_none() { source } else { PlantSource::inlined(&plant) });
    if let Some(k0) = &k0 {
        resolved.k0 = GainSpec(MatrixSpec::Rows { rows: rows(k0) });
    }
    resolved.manifest =
        Some(ManifestInfo { tool: "lqrlab".into(), version: env!("CARGO_PKG_VERSION").into(), artifacts: out.written.clone() });
    let text = toml::to_string(&resolved).map_err(io)?;
    let manifest_path = out.dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, text).map_err(|e| BenchError::Io(format!("{}: {e}", manifest_path.display())))?;

    let summary = result?;
    Ok(Outcome { task, dir: out.dir.clone(), artifacts: out.written, summary })
}

fn dispatch(
    task: Task,
    cfg: &ExperimentConfig,
    plant: &Plant,
    k0: Option<&Mat>,
    out: &mut Artifacts,
    wall: bool,
) -> Result<serde_json::Value> {
    let k0 = || k0.expect("initial gain resolved for this task");
    let seed = cfg.seed;
    match task {
        Task::Solve => {
            let ric = solve_riccati_kleinman(plant, None)?;
            let summary = json!({
                "f_star": ric.f_star(plant),
                "k_star": rows(&ric.k_star),
                "p_star": rows(&ric.p_star),
                "are_residual": ric.residual,
                "iterations": ric.iterations,
                "monotone": ric.monotone,
            });
            out.json("solution.json", &summary)?;
            Ok(summary)
        }
        Task::GradCheck => {
            let p = &cfg.grad_check;
            let f_star = solve_riccati_kleinman(plant, None)?.f_star(plant);
            let rep = gradcheck::grad_check(plant, p.a_factor * f_star, p.points, p.step, p.hessian_step, seed)?;
            out.csv(
                "gradcheck.csv",
                &["point", "cost", "grad_f_err", "grad_h_err", "hessian_err"],
                rep.rows.iter().map(|r| {
                    vec![r.point.to_string(), fmt_f64(r.cost), fmt_f64(r.grad_f_err), fmt_f64(r.grad_h_err), fmt_f64(r.hessian_err)]
                }),
            )?;
            out.json("gradcheck.json", &rep)?;
            let summary = json!({
                "max_grad_f_err": rep.max_grad_f_err,
                "max_grad_h_err": rep.max_grad_h_err,
                "max_hessian_err": rep.max_hessian_err,
            });
            if rep.max_grad_f_err > GRAD_TOL || rep.max_grad_h_err > GRAD_TOL || rep.max_hessian_err > HESSIAN_TOL {
                return Err(BenchError::CheckFailed(summary.to_string()));
            }
            Ok(summary)
        }
        Task::Flow => {
            let p = &cfg.flow;
            let opts = FlowOptions { rtol: p.rtol, atol: p.atol, ..FlowOptions::new(p.t_final) };
            let (trace, k) = gradient_flow(plant, k0(), &opts)?;
            out.trace("trace.csv", &trace, wall)?;
            let summary = trace_summary(&trace, &k);
            out.json("summary.json", &summary)?;
            Ok(summary)
        }
        Task::Descend | Task::DescendY => {
            let p = if task == Task::Descend { &cfg.descend } else { &cfg.descend_y };
            let opts = DescentOptions { rule: p.rule, max_iters: p.max_iters, tol: p.tol, target_rel_err: p.target_rel_err };
            let (trace, k) = if task == Task::Descend {
                preconditioned_descent(plant, k0(), p.left, p.right, &opts)?
            } else {
                let shift = resolve_shift(plant, None)?;
                let (trace, gain) = gradient_descent_y(plant, &YStart::K(k0().clone()), shift.as_ref(), &opts)?;
                (trace, gain.k.clone())
            };
            out.trace("trace.csv", &trace, wall)?;
            let summary = trace_summary(&trace, &k);
            out.json("summary.json", &summary)?;
            Ok(summary)
        }
        Task::RandomSearch => random_search_task(cfg, plant, k0(), out, wall),
        Task::BiasSweep => bias_sweep_task(cfg, plant, k0(), out),
        Task::Correlation => {
            let p = &cfg.correlation;
            let mut reports = Vec::new();
            for &n in &p.samples {
                reports.push(correlation_events(plant, k0(), n, p.trials, seed, p.dist, p.mu2)?);
            }
            out.csv(
                "correlation.csv",
                &["samples", "trials", "p_m1", "p_m2", "mu2", "implied_constant"],
                reports.iter().map(|r| {
                    vec![
                        r.samples.to_string(),
                        r.trials.to_string(),
                        fmt_f64(r.p_m1),
                        fmt_f64(r.p_m2),
                        fmt_f64(r.mu2),
                        fmt_f64(r.implied_constant),
                    ]
                }),
            )?;
            out.json("correlation.json", &reports)?;
            Ok(json!({ "p_m1": reports.iter().map(|r| r.p_m1).collect::<Vec<_>>() }))
        }
        Task::Certify => certify_task(cfg, plant, out),
        Task::NonconvexDemo => {
            let p = &cfg.nonconvex_demo;
            let demo = plants::nonconvex_demo(p.eps, p.grid)?;
            out.csv("curve.csv", &["gamma", "cost"], demo.curve.iter().map(|(g, c)| vec![fmt_f64(*g), fmt_f64(*c)]))?;
            out.json("nonconvex.json", &demo)?;
            let summary = json!({ "hessian_k3": demo.hessian_k3, "cost_k3": demo.cost_k3 });
            if let Some(expected) = p.expected {
                let tol = p.tolerance.unwrap_or(0.0);
                if (demo.hessian_k3 - expected).abs() > tol {
                    return Err(BenchError::CheckFailed(format!(
                        "Hessian form at the midpoint is {}, expected {expected} ± {tol}",
                        demo.hessian_k3
                    )));
                }
            }
            Ok(summary)
        }
    }
}

/// Relative Frobenius tolerance of the gradient checks.
pub const GRAD_TOL: f64 = 1e-5;
/// Relative tolerance of the Hessian check.
pub const HESSIAN_TOL: f64 = 1e-3;

fn random_search_task(
    cfg: &ExperimentConfig,
    plant: &Plant,
    k0: &Mat,
    out: &mut Artifacts,
    wall: bool,
) -> Result<serde_json::Value> {
    let p = &cfg.random_search;
    let oracle = if p.model_free {
        None
    } else {
        let ric = solve_riccati_kleinman(plant, None)?;
        Some(Oracle { f_star: ric.f_star(plant), k_star: Some(ric.k_star) })
    };
    let opts = RandomSearchOptions {
        rule: if p.theory { StepRule::Theory } else { StepRule::fixed(p.alpha) },
        max_iters: p.max_iters,
        target_eps: p.target_eps,
        grad_tol: p.grad_tol,
        window: p.window,
        on_failure: FailurePolicy::Retry(p.retries),
        oracle,
        ..Default::default()
    };
    let seeds: Vec<u64> = (0..p.seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let runs = map_indexed(seeds.len(), |i| {
        let est = EstimatorConfig {
            r: p.r,
            samples: p.samples,
            dist: p.dist,
            seed: seeds[i],
            stream_base: 0,
            rollout: p.rollout.config(p.tau),
            keep_samples: false,
        };
        random_search(plant, k0, &est, &opts)
    });
    let mut per_seed = Vec::new();
    let mut traces = Vec::new();
    for (seed, run) in seeds.iter().zip(runs) {
        let (trace, k) = run?;
        out.trace(&format!("trace_seed{seed}.csv"), &trace, wall)?;
        let mut s = trace_summary(&trace, &k);
        s["seed"] = json!(seed);
        per_seed.push(s);
        traces.push(trace);
    }
    let median = median_relative_error(&traces);
    if !median.is_empty() {
        out.csv("median.csv", &["iter", "median_rel_err"], median.iter().enumerate().map(|(i, v)| vec![i.to_string(), fmt_f64(*v)]))?;
    }
    let summary = json!({ "seeds": per_seed, "final_median_rel_err": median.last() });
    out.json("summary.json", &summary)?;
    Ok(summary)
}

/// Median over traces of `obj_err / f⋆` at each iteration all traces reached.
pub fn median_relative_error(traces: &[ConvergenceTrace]) -> Vec<f64> {
    let len = traces.iter().map(|t| t.rows.len()).min().unwrap_or(0);
    let rel: Vec<Vec<f64>> = traces.iter().map(ConvergenceTrace::relative_errors).collect();
    (0..len)
        .map(|i| {
            let mut col: Vec<f64> = rel.iter().map(|r| r[i]).collect();
            col.sort_by(f64::total_cmp);
            let n = col.len();
            if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BiasRow {
    pub tau: f64,
    pub r: f64,
    pub bias_rel: f64,
    pub total_rel: f64,
}

/// Truncated estimates against the unbiased one on a shared draw, per `(r, τ)`.
pub fn bias_sweep(plant: &Plant, k: &Mat, base: &EstimatorConfig, radii: &[f64], taus: &[f64]) -> crate::error::Result<Vec<BiasRow>> {
    let g = gradient(plant, k)?;
    let mut out = Vec::new();
    for &r in radii {
        let cfg = EstimatorConfig { r, ..base.clone() };
        let draws = draw_samples(plant, &cfg);
        let hat = unbiased_with_draws(plant, k, &cfg, &draws)?.value;
        for &tau in taus {
            let cfg = EstimatorConfig { rollout: crate::sim_engine::RolloutConfig { tau, ..cfg.rollout }, ..cfg.clone() };
            let bar = twopoint_with_draws(plant, k, &cfg, &draws)?.value;
            out.push(BiasRow { tau, r, bias_rel: (&hat - &bar).norm() / hat.norm(), total_rel: (&bar - &g).norm() / g.norm() });
        }
    }
    Ok(out)
}

fn bias_sweep_task(cfg: &ExperimentConfig, plant: &Plant, k0: &Mat, out: &mut Artifacts) -> Result<serde_json::Value> {
    let p = &cfg.bias_sweep;
    let first_tau = p.taus.first().copied().unwrap_or(1.0);
    let base = EstimatorConfig {
        r: p.radii.first().copied().unwrap_or(1e-5),
        samples: p.samples,
        dist: p.dist,
        seed: cfg.seed,
        stream_base: 0,
        rollout: p.rollout.config(first_tau),
        keep_samples: false,
    };
    let rows = bias_sweep(plant, k0, &base, &p.radii, &p.taus)?;
    out.csv(
        "bias.csv",
        &["tau", "r", "bias_rel", "total_rel"],
        rows.iter().map(|b| vec![fmt_f64(b.tau), fmt_f64(b.r), fmt_f64(b.bias_rel), fmt_f64(b.total_rel)]),
    )?;
    Ok(json!({ "rows": rows.len() }))
}

fn certify_task(cfg: &ExperimentConfig, plant: &Plant, out: &mut Artifacts) -> Result<serde_json::Value> {
    let p = &cfg.certify;
    let a = match p.a {
        Some(a) => a,
        None => p.a_factor * solve_riccati_kleinman(plant, None)?.f_star(plant),
    };
    let cert = certificate(plant, a, None)?;
    let bounds = sublevel_bounds(plant, a)?;
    let theta = theta_bound(plant, a, p.samples, cfg.seed)?;
    let mut checks: Vec<InequalityReport> = Vec::new();
    let mut pl = None;
    if p.checks {
        let (n, s) = (p.samples, cfg.seed);
        let k_star = solve_riccati_kleinman(plant, None)?.k_star;
        checks.push(check_sublevel_bounds(plant, a, n, s)?);
        checks.push(check_hessian_sandwich(plant, a, n, s)?);
        checks.push(check_gradient_comparison(plant, a, n, s)?);
        checks.push(check_gradient_lipschitz(plant, a, n, s)?);
        checks.push(check_truncation(plant, a, n, s, &[1.0, 5.0, 20.0])?);
        checks.push(check_stability_radius(plant, &k_star, n, s)?);
        checks.push(check_r_of_a(plant, a, n, s)?);
        pl = Some(pl_check(plant, a, n, s)?);
    }
    let report = json!({ "certificate": cert, "bounds": bounds, "theta": theta, "checks": checks, "pl": pl });
    out.json("certificate.json", &report)?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .chain(pl.iter().filter(|r| !r.pass).map(|_| "pl"))
        .collect();
    if !failed.is_empty() {
        return Err(BenchError::CheckFailed(format!("violated: {}", failed.join(", "))));
    }
    Ok(json!({ "a": a, "checks": checks.len() + pl.iter().count() }))
}
