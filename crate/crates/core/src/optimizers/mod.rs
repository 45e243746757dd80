//! Iterative schemes over stabilizing gains, each emitting a [`ConvergenceTrace`].

mod descent;
mod flow;
mod random_search;

pub use descent::{gradient_descent, gradient_descent_y, preconditioned_descent, DescentOptions, Preconditioner, YStart};
pub use flow::{gradient_flow, FlowOptions};
pub use random_search::{random_search, FailurePolicy, Oracle, RandomSearchOptions};

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::error::{LqrError, Result};
use crate::lyap_kernel::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIters,
    LeftSublevelSet,
    EstimateFailure,
    /// Backtracking could not find an acceptable step.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    /// `f(Kᵏ) − f⋆`; NaN when no oracle is available.
    pub obj_err: f64,
    /// Norm of the gradient (or of its estimate) at `Kᵏ`.
    pub grad_norm: f64,
    /// Stepsize taken from `Kᵏ`; 0 on the last row.
    pub step: f64,
    pub wall_ms: f64,
    /// Integration time for flows, iteration count otherwise.
    pub time: f64,
    /// `‖Kᵏ − K⋆‖_F`; NaN when unknown.
    pub gain_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTrace {
    pub method: String,
    pub rows: Vec<TraceRow>,
    pub status: Status,
    pub f_star: Option<f64>,
    pub notes: Vec<String>,
}

pub const CSV_HEADER: &str = "iter,obj_err,grad_norm,step,wall_ms";

impl ConvergenceTrace {
    fn new(method: &str, f_star: Option<f64>) -> Self {
        Self { method: method.into(), rows: Vec::new(), status: Status::MaxIters, f_star, notes: Vec::new() }
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn objective_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.obj_err).collect()
    }

    /// `obj_err / f⋆` per row.
    pub fn relative_errors(&self) -> Vec<f64> {
        let fs = self.f_star.unwrap_or(f64::NAN);
        self.rows.iter().map(|r| r.obj_err / fs.abs()).collect()
    }

    /// Whether the objective error never increases by more than `slack·|f⋆|`.
    pub fn monotone(&self, slack: f64) -> bool {
        let scale = self.f_star.map_or(1.0, f64::abs);
        self.rows.windows(2).all(|w| w[1].obj_err <= w[0].obj_err + slack * scale)
    }

    /// `obj_err(row) ≤ factor(row) · obj_err(0)` on every row.
    pub fn bounded_by(&self, factor: impl Fn(&TraceRow) -> f64) -> bool {
        let Some(first) = self.rows.first() else { return true };
        let e0 = first.obj_err;
        self.rows.iter().all(|r| r.obj_err <= factor(r) * e0 * (1.0 + 1e-9) + 1e-14 * e0.abs().max(1.0))
    }

    /// First iteration at which `obj_err ≤ eps`.
    pub fn iterations_to(&self, eps: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.obj_err <= eps).map(|r| r.iter)
    }

    /// Sets every `wall_ms` to zero so the trace depends on its inputs only.
    pub fn strip_wall_time(&mut self) {
        for r in &mut self.rows {
            r.wall_ms = 0.0;
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.iter.to_string(),
                fmt_f64(r.obj_err),
                fmt_f64(r.grad_norm),
                fmt_f64(r.step),
                fmt_f64(r.wall_ms),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> LqrError {
    LqrError::Io(e.to_string())
}

/// Shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// How the stepsize is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum StepRule {
    Fixed { alpha: f64 },
    /// Armijo backtracking that also rejects destabilizing trial steps.
    Backtracking {
        initial: f64,
        shrink: f64,
        sufficient_decrease: f64,
        max_halvings: usize,
        /// Start each search from `min(initial, 2·previous)`.
        warm_start: bool,
    },
    /// Stepsize from certified constants at `a = f(K⁰)`.
    Theory,
}

impl StepRule {
    pub fn fixed(alpha: f64) -> Self {
        StepRule::Fixed { alpha }
    }

    pub fn backtracking() -> Self {
        StepRule::Backtracking { initial: 1.0, shrink: 0.5, sufficient_decrease: 1e-4, max_halvings: 80, warm_start: true }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepRule::Fixed { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(LqrError::InvalidArgument(format!("stepsize must be positive, got {alpha}")))
            }
            StepRule::Backtracking { initial, shrink, sufficient_decrease, .. }
                if !(initial > 0.0 && shrink > 0.0 && shrink < 1.0 && (0.0..1.0).contains(&sufficient_decrease)) =>
            {
                Err(LqrError::InvalidArgument("backtracking needs initial > 0, shrink in (0,1), decrease in [0,1)".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Least-squares line `y ≈ slope·x + intercept` with its `R²`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { slope, intercept: my - slope * mx, r2 })
}

/// Fit of `ln(obj_err)` against the iteration index over the rows with positive error.
pub fn log_error_fit(trace: &ConvergenceTrace) -> Option<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = trace
        .rows
        .iter()
        .filter(|r| r.obj_err > 0.0 && r.obj_err.is_finite())
        .map(|r| (r.time, r.obj_err.ln()))
        .unzip();
    linear_fit(&xs, &ys)
}

struct Clock(Instant);

impl Clock {
    fn start() -> Self {
        Clock(Instant::now())
    }

    fn ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

fn gain_err(k: &Mat, k_star: Option<&Mat>) -> f64 {
    k_star.map_or(f64::NAN, |ks| (k - ks).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -0.5 * x + 2.0).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14 && (f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn csv_header_and_rows() {
        let mut t = ConvergenceTrace::new("gd", Some(1.0));
        t.rows.push(TraceRow { iter: 0, obj_err: 0.5, grad_norm: 1.0, step: 0.1, wall_ms: 3.0, time: 0.0, gain_err: f64::NAN });
        t.strip_wall_time();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,obj_err,grad_norm,step,wall_ms\n0,5e-1,1e0,1e-1,0e0\n");
    }
}
