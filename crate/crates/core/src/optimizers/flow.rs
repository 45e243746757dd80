use serde::{Deserialize, Serialize};

use super::{gain_err, Clock, ConvergenceTrace, Status, TraceRow};
use crate::error::{LqrError, Result};
use crate::lqr_core::{gradient_from, solve_riccati_kleinman, Gain, Plant};
use crate::lyap_kernel::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub t_final: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl FlowOptions {
    pub fn new(t_final: f64) -> Self {
        Self { t_final, rtol: 1e-9, atol: 1e-12, max_steps: 1_000_000 }
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// `(f, ∇f)` at `k`, or `None` when `k` is not stabilizing.
fn field(plant: &Plant, k: &Mat) -> Result<Option<(f64, Mat)>> {
    let g = Gain::new(plant, k.clone())?;
    Ok(g.certificate().ok().map(|c| (c.f, gradient_from(plant, k, c))))
}

/// Integrates `K̇ = −∇f(K)` on `[0, T]` with adaptive Dormand–Prince steps.
///
/// A step whose stages leave the stabilizing set is rejected and halved.
pub fn gradient_flow(plant: &Plant, k0: &Mat, opts: &FlowOptions) -> Result<(ConvergenceTrace, Mat)> {
    if !(opts.t_final > 0.0) || !(opts.rtol > 0.0) || !(opts.atol > 0.0) {
        return Err(LqrError::InvalidArgument("flow needs T > 0 and positive tolerances".into()));
    }
    let clock = Clock::start();
    let ric = solve_riccati_kleinman(plant, None)?;
    let f_star = ric.f_star(plant);
    let (mut f, mut grad) = field(plant, k0)?.ok_or(LqrError::NotStabilizing { margin: f64::NAN })?;
    let mut k = k0.clone();
    let mut t = 0.0;
    let mut h = (opts.t_final / 100.0).min(0.1 / (1.0 + grad.norm()));
    let mut trace = ConvergenceTrace::new("gf", Some(f_star));
    let push = |trace: &mut ConvergenceTrace, it: usize, t: f64, f: f64, g: &Mat, k: &Mat, step: f64| {
        trace.rows.push(TraceRow {
            iter: it,
            obj_err: f - f_star,
            grad_norm: g.norm(),
            step,
            wall_ms: clock.ms(),
            time: t,
            gain_err: gain_err(k, Some(&ric.k_star)),
        });
    };
    let mut it = 0;
    trace.status = Status::Converged;
    while t < opts.t_final {
        if it >= opts.max_steps {
            trace.status = Status::MaxIters;
            break;
        }
        h = h.min(opts.t_final - t);
        if h < 1e-14 * opts.t_final.max(1.0) {
            trace.status = Status::Stalled;
            trace.notes.push(format!("step size underflow at t = {t:e}"));
            break;
        }
        let mut stages: Vec<Mat> = Vec::with_capacity(7);
        stages.push(-&grad);
        let mut ok = true;
        let mut last: Option<(f64, Mat)> = None;
        for s in 1..7 {
            let mut ks = k.clone();
            for (j, st) in stages.iter().enumerate() {
                if A[s][j] != 0.0 {
                    ks += st * (h * A[s][j]);
                }
            }
            match field(plant, &ks)? {
                Some((fs, gs)) => {
                    stages.push(-&gs);
                    if s == 6 {
                        last = Some((fs, gs));
                    }
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            h *= 0.5;
            continue;
        }
        let mut k_new = k.clone();
        let mut err = Mat::zeros(k.nrows(), k.ncols());
        for (s, st) in stages.iter().enumerate() {
            if s < 6 {
                k_new += st * (h * A[6][s]);
            }
            err += st * (h * E[s]);
        }
        let scale = opts.atol + opts.rtol * k.amax().max(k_new.amax());
        let en = err.amax() / scale;
        if en > 1.0 {
            h *= (0.9 * en.powf(-0.2)).max(0.2);
            continue;
        }
        // FSAL: the last stage is evaluated at k_new.
        let (fn_, gn) = match last {
            Some(v) => v,
            None => field(plant, &k_new)?.ok_or(LqrError::NotStabilizing { margin: f64::NAN })?,
        };
        push(&mut trace, it, t, f, &grad, &k, h);
        t += h;
        it += 1;
        k = k_new;
        f = fn_;
        grad = gn;
        h *= if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
    }
    push(&mut trace, it, t, f, &grad, &k, 0.0);
    Ok((trace, k))
}
