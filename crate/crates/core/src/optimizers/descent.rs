use serde::{Deserialize, Serialize};

use super::{gain_err, Clock, ConvergenceTrace, Status, StepRule, TraceRow};
use crate::certificates::certificate;
use crate::convex_param::{ConvexModel, Shift};
use crate::error::{LqrError, Result};
use crate::lqr_core::{gradient_from, solve_riccati_kleinman, Gain, Plant};
use crate::lyap_kernel::dense::{inner, spd_inverse};
use crate::lyap_kernel::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub rule: StepRule,
    pub max_iters: usize,
    /// Stop when `‖∇‖_F ≤ tol·(1 + |f|)`.
    pub tol: f64,
    /// Also stop once `(f − f⋆)/f⋆` falls to this level.
    pub target_rel_err: Option<f64>,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self { rule: StepRule::backtracking(), max_iters: 1000, tol: 1e-10, target_rel_err: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    Identity,
    RInverse,
    XInverse,
}

struct Point {
    k: Mat,
    f: f64,
    x: Mat,
    grad: Mat,
}

fn evaluate(plant: &Plant, k: Mat) -> Result<Option<Point>> {
    let g = Gain::new(plant, k)?;
    let Ok(cert) = g.certificate() else { return Ok(None) };
    let grad = gradient_from(plant, &g.k, cert);
    let (f, x) = (cert.f, cert.x.clone());
    Ok(Some(Point { k: g.k, f, x, grad }))
}

fn stop_reached(opts: &DescentOptions, f: f64, grad_norm: f64, f_star: f64) -> bool {
    grad_norm <= opts.tol * (1.0 + f.abs())
        || opts.target_rel_err.is_some_and(|t| (f - f_star) / f_star.abs() <= t)
}

/// `Kᵏ⁺¹ = Kᵏ − α ∇f(Kᵏ)`.
pub fn gradient_descent(plant: &Plant, k0: &Mat, opts: &DescentOptions) -> Result<(ConvergenceTrace, Mat)> {
    let (mut trace, k) = descend(plant, k0, opts, Preconditioner::Identity, Preconditioner::Identity)?;
    trace.method = "gd".into();
    Ok((trace, k))
}

/// `Kᵏ⁺¹ = Kᵏ − α H₁ ∇f(Kᵏ) H₂`; `(0.5, R⁻¹, X⁻¹)` is the Kleinman iteration and
/// `(α, I, X⁻¹)` the natural gradient.
pub fn preconditioned_descent(
    plant: &Plant,
    k0: &Mat,
    h1: Preconditioner,
    h2: Preconditioner,
    opts: &DescentOptions,
) -> Result<(ConvergenceTrace, Mat)> {
    if h1 == Preconditioner::XInverse || h2 == Preconditioner::RInverse {
        return Err(LqrError::InvalidArgument(
            "R^-1 acts on the left (m x m) and X^-1 on the right (n x n)".into(),
        ));
    }
    descend(plant, k0, opts, h1, h2)
}

fn descend(plant: &Plant, k0: &Mat, opts: &DescentOptions, h1: Preconditioner, h2: Preconditioner) -> Result<(ConvergenceTrace, Mat)> {
    opts.rule.validate()?;
    let clock = Clock::start();
    let ric = solve_riccati_kleinman(plant, None)?;
    let f_star = ric.f_star(plant);
    let mut pt = evaluate(plant, k0.clone())?.ok_or_else(|| {
        LqrError::NotStabilizing { margin: Gain::new(plant, k0.clone()).map(|g| g.margin).unwrap_or(f64::NAN) }
    })?;
    let a0 = pt.f;
    let rinv = if h1 == Preconditioner::RInverse { Some(spd_inverse("R", &plant.r)?) } else { None };
    let fixed_alpha = match opts.rule {
        StepRule::Fixed { alpha } => Some(alpha),
        StepRule::Theory => Some(1.0 / certificate(plant, a0, None)?.l_f),
        StepRule::Backtracking { .. } => None,
    };
    let mut trace = ConvergenceTrace::new("preconditioned", Some(f_star));
    if let Some(a) = fixed_alpha {
        trace.notes.push(format!("stepsize {a:e}"));
    }
    let mut prev_alpha: Option<f64> = None;
    for it in 0..=opts.max_iters {
        let gn = pt.grad.norm();
        trace.rows.push(TraceRow {
            iter: it,
            obj_err: pt.f - f_star,
            grad_norm: gn,
            step: 0.0,
            wall_ms: clock.ms(),
            time: it as f64,
            gain_err: gain_err(&pt.k, Some(&ric.k_star)),
        });
        if stop_reached(opts, pt.f, gn, f_star) {
            trace.status = Status::Converged;
            break;
        }
        if it == opts.max_iters {
            trace.status = Status::MaxIters;
            break;
        }
        let mut dir = pt.grad.clone();
        if let Some(ri) = &rinv {
            dir = ri * dir;
        }
        if h2 == Preconditioner::XInverse {
            dir *= spd_inverse("X(K)", &pt.x)?;
        }
        let slope = inner(&pt.grad, &dir);
        let (alpha, next) = match (fixed_alpha, opts.rule) {
            (Some(alpha), _) => {
                match evaluate(plant, &pt.k - &dir * alpha)? {
                    Some(n) if n.f <= a0 * (1.0 + 1e-12) => (alpha, n),
                    _ => {
                        trace.status = Status::LeftSublevelSet;
                        trace.notes.push(format!("step {alpha:e} at iteration {it} left the sublevel set"));
                        break;
                    }
                }
            }
            (None, StepRule::Backtracking { initial, shrink, sufficient_decrease, max_halvings, warm_start }) => {
                let mut alpha = match (warm_start, prev_alpha) {
                    (true, Some(p)) => initial.min(2.0 * p),
                    _ => initial,
                };
                let mut found = None;
                for _ in 0..=max_halvings {
                    if let Some(n) = evaluate(plant, &pt.k - &dir * alpha)? {
                        if n.f <= pt.f - sufficient_decrease * alpha * slope {
                            found = Some(n);
                            break;
                        }
                    }
                    alpha *= shrink;
                }
                match found {
                    Some(n) => (alpha, n),
                    None => {
                        trace.status = Status::Stalled;
                        break;
                    }
                }
            }
            (None, _) => unreachable!("fixed and theory rules carry a stepsize"),
        };
        trace.rows.last_mut().expect("row").step = alpha;
        prev_alpha = Some(alpha);
        pt = next;
    }
    Ok((trace, pt.k))
}

/// Starting point of descent on `Y`.
#[derive(Debug, Clone)]
pub enum YStart {
    Y(Mat),
    /// Converted through `Y = (K − K⁰) X(K)`.
    K(Mat),
}

/// `Yᵏ⁺¹ = Yᵏ − α ∇h(Yᵏ)`; the final gain is recovered as `K⁰ + Y X(Y)⁻¹`.
pub fn gradient_descent_y(
    plant: &Plant,
    start: &YStart,
    shift: Option<&Shift>,
    opts: &DescentOptions,
) -> Result<(ConvergenceTrace, Gain)> {
    opts.rule.validate()?;
    let clock = Clock::start();
    let model = ConvexModel::new(plant, shift)?;
    let ric = solve_riccati_kleinman(plant, None)?;
    let f_star = ric.f_star(plant);
    let mut y = match start {
        YStart::Y(y) => y.clone(),
        YStart::K(k) => model.y_from_k(k)?.y,
    };
    let mut h = model.h(&y);
    if !h.is_finite() {
        return Err(LqrError::Infeasible("starting Y has no positive definite X(Y)".into()));
    }
    let h0 = h;
    let fixed_alpha = match opts.rule {
        StepRule::Fixed { alpha } => Some(alpha),
        StepRule::Theory => Some(1.0 / certificate(plant, h0, shift)?.l),
        StepRule::Backtracking { .. } => None,
    };
    let mut trace = ConvergenceTrace::new("gd-y", Some(f_star));
    if let Some(a) = fixed_alpha {
        trace.notes.push(format!("stepsize {a:e}"));
    }
    let mut prev_alpha: Option<f64> = None;
    for it in 0..=opts.max_iters {
        let grad = model.grad_h(&y)?;
        let gn = grad.norm();
        let x = model.x_of_y(&y)?;
        let k = model.k0() + &y * spd_inverse("X(Y)", &x)?;
        trace.rows.push(TraceRow {
            iter: it,
            obj_err: h - f_star,
            grad_norm: gn,
            step: 0.0,
            wall_ms: clock.ms(),
            time: it as f64,
            gain_err: gain_err(&k, Some(&ric.k_star)),
        });
        if stop_reached(opts, h, gn, f_star) {
            trace.status = Status::Converged;
            break;
        }
        if it == opts.max_iters {
            trace.status = Status::MaxIters;
            break;
        }
        let (alpha, y_next, h_next) = match (fixed_alpha, opts.rule) {
            (Some(alpha), _) => {
                let yn = &y - &grad * alpha;
                let hn = model.h(&yn);
                if !(hn <= h0 * (1.0 + 1e-12)) {
                    trace.status = Status::LeftSublevelSet;
                    trace.notes.push(format!("step {alpha:e} at iteration {it} left the sublevel set"));
                    break;
                }
                (alpha, yn, hn)
            }
            (None, StepRule::Backtracking { initial, shrink, sufficient_decrease, max_halvings, warm_start }) => {
                let mut alpha = match (warm_start, prev_alpha) {
                    (true, Some(p)) => initial.min(2.0 * p),
                    _ => initial,
                };
                let mut found = None;
                for _ in 0..=max_halvings {
                    let yn = &y - &grad * alpha;
                    let hn = model.h(&yn);
                    if hn <= h - sufficient_decrease * alpha * gn * gn {
                        found = Some((yn, hn));
                        break;
                    }
                    alpha *= shrink;
                }
                match found {
                    Some((yn, hn)) => (alpha, yn, hn),
                    None => {
                        trace.status = Status::Stalled;
                        break;
                    }
                }
            }
            (None, _) => unreachable!("fixed and theory rules carry a stepsize"),
        };
        trace.rows.last_mut().expect("row").step = alpha;
        prev_alpha = Some(alpha);
        y = y_next;
        h = h_next;
    }
    let gain = model.k_from_y(&y)?;
    Ok((trace, gain))
}
