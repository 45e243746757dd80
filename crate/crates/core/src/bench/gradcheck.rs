//! Finite-difference checks of analytic derivatives.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::certificates::{resolve_shift, sample_sublevel};
use crate::convex_param::ConvexModel;
use crate::error::Result;
use crate::lqr_core::{gradient, hessian_quadratic_form, lqr_cost, solve_riccati_kleinman, Plant};
use crate::lyap_kernel::Mat;
use crate::parallel::map_indexed;
use crate::sim_engine::RngStream;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckRow {
    pub point: usize,
    pub cost: f64,
    /// `‖∇f − D∇f‖_F / ‖∇f‖_F` with `D∇f` the entrywise central difference.
    pub grad_f_err: f64,
    /// Same for `∇h` at `Y(K)`.
    pub grad_h_err: f64,
    /// `|⟨D, ∇²f[D]⟩ − second difference| / max(|⟨D, ∇²f[D]⟩|, 1)` along a random unit `D`.
    pub hessian_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub a: f64,
    pub step: f64,
    pub hessian_step: f64,
    pub rows: Vec<GradCheckRow>,
    pub max_grad_f_err: f64,
    pub max_grad_h_err: f64,
    pub max_hessian_err: f64,
}

fn unit_direction(m: usize, n: usize, seed: u64, stream: u64) -> Mat {
    let mut rng = RngStream::new(seed, stream).rng();
    let d = Mat::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
    let norm = d.norm();
    d / norm
}

/// Entrywise central-difference gradient of `g` at `x`.
pub fn central_difference(x: &Mat, step: f64, g: impl Fn(&Mat) -> f64) -> Mat {
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let v = x[(i, j)];
            probe[(i, j)] = v + step;
            let up = g(&probe);
            probe[(i, j)] = v - step;
            let down = g(&probe);
            probe[(i, j)] = v;
            out[(i, j)] = (up - down) / (2.0 * step);
        }
    }
    out
}

fn rel_fro(analytic: &Mat, numeric: &Mat) -> f64 {
    (analytic - numeric).norm() / analytic.norm()
}

/// Checks `∇f`, `∇h` and the Hessian form at `points` gains drawn in `S_K(a)`.
pub fn grad_check(plant: &Plant, a: f64, points: usize, step: f64, hessian_step: f64, seed: u64) -> Result<GradCheckReport> {
    let ric = solve_riccati_kleinman(plant, None)?;
    let gains = sample_sublevel(plant, a, points, seed, &ric.k_star, &[])?;
    let shift = resolve_shift(plant, None)?;
    let model = ConvexModel::new(plant, shift.as_ref())?;
    let (m, n) = (plant.m(), plant.n());
    let results = map_indexed(gains.len(), |i| -> Result<GradCheckRow> {
        let k = &gains[i];
        let f = |x: &Mat| lqr_cost(plant, x).value();
        let grad_f_err = rel_fro(&gradient(plant, k)?, &central_difference(k, step, f));

        let y = model.y_from_k(k)?.y;
        let ys = step * y.norm().max(1.0);
        let grad_h_err = rel_fro(&model.grad_h(&y)?, &central_difference(&y, ys, |x| model.h(x)));

        let d = unit_direction(m, n, seed, i as u64);
        let hs = hessian_step;
        let along = |t: f64| f(&(k + &d * t));
        let f0 = along(0.0);
        let second = (along(hs) - 2.0 * f0 + along(-hs)) / (hs * hs);
        let analytic = hessian_quadratic_form(plant, k, &d, None)?;
        let hessian_err = (analytic - second).abs() / analytic.abs().max(1.0);
        Ok(GradCheckRow { point: i, cost: f0, grad_f_err, grad_h_err, hessian_err })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let max = |g: fn(&GradCheckRow) -> f64| rows.iter().map(g).fold(0.0, f64::max);
    Ok(GradCheckReport {
        a,
        step,
        hessian_step,
        max_grad_f_err: max(|r| r.grad_f_err),
        max_grad_h_err: max(|r| r.grad_h_err),
        max_hessian_err: max(|r| r.hessian_err),
        rows,
    })
}
