use serde::{Deserialize, Serialize};

use super::{gain_err, Clock, ConvergenceTrace, Status, StepRule, TraceRow};
use crate::certificates::certificate;
use crate::error::{LqrError, Result};
use crate::lqr_core::{lqr_cost, Plant};
use crate::lyap_kernel::Mat;
use crate::zeroth_order::{correlation_events, estimate_gradient_twopoint, EstimatorConfig, MU1};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    Abort,
    /// Redraw the iteration with a fresh seed, at most this many times.
    Retry(usize),
}

/// Reporting oracle: the optimum, used only to log errors and check a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub f_star: f64,
    pub k_star: Option<Mat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSearchOptions {
    /// `Fixed` or `Theory`; backtracking needs exact costs and is rejected.
    pub rule: StepRule,
    pub max_iters: usize,
    /// Stop once `f − f⋆ ≤ target_eps` (checked through the oracle).
    pub target_eps: Option<f64>,
    /// Model-free stop: moving average of `‖∇̄f‖_F` over `window` iterations.
    pub grad_tol: Option<f64>,
    pub window: usize,
    pub on_failure: FailurePolicy,
    pub oracle: Option<Oracle>,
    /// Trials used to estimate `μ₂` for the theory stepsize.
    pub theory_trials: usize,
}

impl Default for RandomSearchOptions {
    fn default() -> Self {
        Self {
            rule: StepRule::fixed(1e-4),
            max_iters: 1000,
            target_eps: None,
            grad_tol: None,
            window: 10,
            on_failure: FailurePolicy::Retry(3),
            oracle: None,
            theory_trials: 200,
        }
    }
}

const RETRY_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// `Kᵏ⁺¹ = Kᵏ − α ∇̄f(Kᵏ)` with the truncated two-point estimate.
///
/// Iteration `k` draws streams `k·N + i`. Costs and gains of the plant are
/// consulted only for the oracle columns and the theory stepsize.
pub fn random_search(
    plant: &Plant,
    k0: &Mat,
    estimator: &EstimatorConfig,
    opts: &RandomSearchOptions,
) -> Result<(ConvergenceTrace, Mat)> {
    estimator.validate()?;
    opts.rule.validate()?;
    let clock = Clock::start();
    let n_samples = estimator.samples as u64;
    let f_star = opts.oracle.as_ref().map(|o| o.f_star);
    let k_star = opts.oracle.as_ref().and_then(|o| o.k_star.clone());
    let mut trace = ConvergenceTrace::new("rs", f_star);
    let alpha = match opts.rule {
        StepRule::Fixed { alpha } => alpha,
        StepRule::Theory => {
            let a = lqr_cost(plant, k0).value();
            if !a.is_finite() {
                return Err(LqrError::NotStabilizing { margin: f64::NAN });
            }
            let l_f = certificate(plant, a, None)?.l_f;
            let corr = correlation_events(plant, k0, estimator.samples, opts.theory_trials, estimator.seed, estimator.dist, None)?;
            let alpha = MU1 / (corr.mu2 * l_f);
            trace.notes.push(format!(
                "theory stepsize mu1/(mu2 L_f) = {alpha:e} with empirical mu2 = {:e} (99th percentile)",
                corr.mu2
            ));
            alpha
        }
        StepRule::Backtracking { .. } => {
            return Err(LqrError::InvalidArgument("random search takes a fixed or theory stepsize".into()))
        }
    };
    let objective = |k: &Mat| -> f64 {
        match f_star {
            Some(fs) => lqr_cost(plant, k).value() - fs,
            None => f64::NAN,
        }
    };
    let mut k = k0.clone();
    let mut recent: Vec<f64> = Vec::new();
    for it in 0..=opts.max_iters {
        let obj_err = objective(&k);
        if f_star.is_some() && !obj_err.is_finite() {
            trace.status = Status::LeftSublevelSet;
            break;
        }
        if let (Some(eps), true) = (opts.target_eps, f_star.is_some()) {
            if obj_err <= eps {
                push_row(&mut trace, it, obj_err, f64::NAN, &k, k_star.as_ref(), &clock);
                trace.status = Status::Converged;
                break;
            }
        }
        if it == opts.max_iters {
            push_row(&mut trace, it, obj_err, f64::NAN, &k, k_star.as_ref(), &clock);
            trace.status = Status::MaxIters;
            break;
        }
        let retries = match opts.on_failure {
            FailurePolicy::Abort => 0,
            FailurePolicy::Retry(r) => r,
        };
        let mut estimate = None;
        let mut last_err = None;
        for attempt in 0..=retries {
            let mut cfg = estimator.clone();
            cfg.stream_base = it as u64 * n_samples;
            cfg.seed = estimator.seed.wrapping_add(attempt as u64 * RETRY_SALT);
            match estimate_gradient_twopoint(plant, &k, &cfg) {
                Ok(e) => {
                    if attempt > 0 {
                        trace.notes.push(format!("iteration {it}: estimate redrawn {attempt} time(s)"));
                    }
                    estimate = Some(e.value);
                    break;
                }
                Err(e @ LqrError::EstimateFailure { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        let Some(g) = estimate else {
            push_row(&mut trace, it, obj_err, f64::NAN, &k, k_star.as_ref(), &clock);
            trace.status = Status::EstimateFailure;
            if let Some(e) = last_err {
                trace.notes.push(e.to_string());
            }
            break;
        };
        let gn = g.norm();
        push_row(&mut trace, it, obj_err, gn, &k, k_star.as_ref(), &clock);
        trace.rows.last_mut().expect("row").step = alpha;
        recent.push(gn);
        if let Some(tol) = opts.grad_tol {
            if recent.len() >= opts.window.max(1) {
                let w = &recent[recent.len() - opts.window.max(1)..];
                if w.iter().sum::<f64>() / w.len() as f64 <= tol {
                    trace.status = Status::Converged;
                    break;
                }
            }
        }
        k -= g * alpha;
    }
    Ok((trace, k))
}

fn push_row(trace: &mut ConvergenceTrace, it: usize, obj_err: f64, grad_norm: f64, k: &Mat, k_star: Option<&Mat>, clock: &Clock) {
    trace.rows.push(TraceRow {
        iter: it,
        obj_err,
        grad_norm,
        step: 0.0,
        wall_ms: clock.ms(),
        time: it as f64,
        gain_err: gain_err(k, k_star),
    });
}
