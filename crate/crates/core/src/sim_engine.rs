//! Closed-loop rollouts and the random draws of the model-free pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LqrError, Result};
use crate::lqr_core::Plant;
use crate::lyap_kernel::dense::{check_shape, inner, sym_sqrt};
use crate::lyap_kernel::{matrix_exponential, Mat, Vector};

const OVERFLOW_NORM: f64 = 1e150;

/// Deterministic random stream addressed by `(seed, stream)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Law of the i.i.d. zero-mean unit-variance initial-state entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialDist {
    #[default]
    StandardNormal,
    Rademacher,
    /// Uniform on `[−√3, √3]`.
    UniformScaled,
}

/// `U` uniform on the sphere of radius `√(mn)` in `ℝ^{m×n}`.
pub fn sample_sphere_direction<R: Rng>(m: usize, n: usize, rng: &mut R) -> Mat {
    let scale = ((m * n) as f64).sqrt();
    loop {
        let g = Mat::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 && norm.is_finite() {
            return g * (scale / norm);
        }
    }
}

pub fn sample_initial_condition<R: Rng>(n: usize, dist: InitialDist, rng: &mut R) -> Vector {
    match dist {
        InitialDist::StandardNormal => Vector::from_fn(n, |_, _| rng.sample(StandardNormal)),
        InitialDist::Rademacher => Vector::from_fn(n, |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 }),
        InitialDist::UniformScaled => {
            let a = 3f64.sqrt();
            Vector::from_fn(n, |_, _| rng.gen_range(-a..a))
        }
    }
}

/// Initial condition with covariance Ω: `Ω^{1/2} v` with `v` drawn from `dist`.
pub fn sample_plant_initial_condition<R: Rng>(plant: &Plant, dist: InitialDist, rng: &mut R) -> Vector {
    let v = sample_initial_condition(plant.n(), dist, rng);
    if plant.omega == Mat::identity(plant.n(), plant.n()) {
        v
    } else {
        sym_sqrt(&plant.omega) * v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Integrator {
    /// Dormand–Prince 5(4) with adaptive steps.
    Rk45 { atol: f64, rtol: f64 },
    /// Classical RK4 with a fixed step.
    Rk4 { dt: f64 },
    /// Matrix-exponential evaluation of the finite-horizon integral.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// Running cost carried as an extra ODE state.
    #[default]
    Embedded,
    /// Trapezoid rule on the integrator grid.
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub tau: f64,
    pub integrator: Integrator,
    #[serde(default)]
    pub quadrature: Quadrature,
}

impl RolloutConfig {
    pub fn rk45(tau: f64) -> Self {
        Self { tau, integrator: Integrator::Rk45 { atol: 1e-9, rtol: 1e-9 }, quadrature: Quadrature::Embedded }
    }

    pub fn exact(tau: f64) -> Self {
        Self { tau, integrator: Integrator::Exact, quadrature: Quadrature::Embedded }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(LqrError::InvalidArgument(format!("horizon must be positive, got {}", self.tau)));
        }
        match self.integrator {
            Integrator::Rk45 { atol, rtol } => {
                for (name, v) in [("atol", atol), ("rtol", rtol)] {
                    if !(v > 0.0 && v <= 1e-2) {
                        return Err(LqrError::InvalidArgument(format!("{name} must lie in (0, 1e-2], got {v}")));
                    }
                }
            }
            Integrator::Rk4 { dt } => {
                if !(dt > 0.0) || !dt.is_finite() {
                    return Err(LqrError::InvalidArgument(format!("dt must be positive, got {dt}")));
                }
            }
            Integrator::Exact => {}
        }
        Ok(())
    }
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self::rk45(10.0)
    }
}

/// `∫₀^τ e^{Ft} W e^{Fᵀt} dt`.
///
/// A Van Loan block exponential gives the integral over a short base step;
/// repeated doubling `X_{2h} = X_h + e^{Fh} X_h e^{Fᵀh}` reaches `τ` without
/// the cancellation that a direct long-horizon block exponential suffers.
pub fn finite_horizon_gramian(f: &Mat, w: &Mat, tau: f64) -> Result<Mat> {
    let n = f.nrows();
    check_shape("W", w, n, n)?;
    if !(tau >= 0.0) {
        return Err(LqrError::InvalidArgument(format!("horizon must be nonnegative, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(Mat::zeros(n, n));
    }
    let norm = f.abs().row_sum().max().max(f64::MIN_POSITIVE);
    let mut doublings = 0u32;
    let mut h = tau;
    while norm * h > 0.5 && doublings < 60 {
        h *= 0.5;
        doublings += 1;
    }
    let mut block = Mat::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&-f);
    block.view_mut((0, n), (n, n)).copy_from(w);
    block.view_mut((n, n), (n, n)).copy_from(&f.transpose());
    let e = matrix_exponential(&block, h).map_err(|_| LqrError::RolloutOverflow { time: h })?;
    let e12 = e.view((0, n), (n, n)).into_owned();
    let mut step = e.view((n, n), (n, n)).transpose();
    let mut x = &step * e12;
    let mut t = h;
    for _ in 0..doublings {
        x = &x + &step * &x * step.transpose();
        step = &step * &step;
        t *= 2.0;
        if !x.iter().all(|v| v.is_finite()) || x.norm() > OVERFLOW_NORM {
            return Err(LqrError::RolloutOverflow { time: t });
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(LqrError::RolloutOverflow { time: tau });
    }
    Ok(crate::lyap_kernel::dense::symmetrize(&x))
}

/// `P_τ = ∫₀^τ e^{Fᵀt} (Q + KᵀRK) e^{Ft} dt`, so that `f_{x,τ}(K) = xᵀ P_τ x`.
pub fn truncated_cost_matrix(plant: &Plant, k: &Mat, tau: f64) -> Result<Mat> {
    check_shape("K", k, plant.m(), plant.n())?;
    let f = plant.closed_loop(k);
    finite_horizon_gramian(&f.transpose(), &plant.stage_weight(k), tau)
}

/// `∫₀^τ x(t)ᵀ (Q + KᵀRK) x(t) dt` through matrix exponentials.
pub fn exact_rollout_cost(plant: &Plant, k: &Mat, x0: &Vector, tau: f64) -> Result<f64> {
    if x0.len() != plant.n() {
        return Err(LqrError::Dimension(format!("x0 must have length {}", plant.n())));
    }
    let p = truncated_cost_matrix(plant, k, tau)?;
    Ok((x0.transpose() * p * x0)[(0, 0)])
}

struct Dynamics {
    f: Mat,
    s: Mat,
}

impl Dynamics {
    fn rhs(&self, x: &Vector) -> (Vector, f64) {
        let dx = &self.f * x;
        let dc = x.dot(&(&self.s * x));
        (dx, dc)
    }

    fn running_cost(&self, x: &Vector) -> f64 {
        x.dot(&(&self.s * x))
    }
}

fn overflowed(x: &Vector) -> bool {
    !x.iter().all(|v| v.is_finite()) || x.norm() > OVERFLOW_NORM
}

fn rk4_rollout(dy: &Dynamics, x0: &Vector, tau: f64, dt: f64, quad: Quadrature) -> Result<f64> {
    let steps = (tau / dt).ceil().max(1.0) as usize;
    let h = tau / steps as f64;
    let mut x = x0.clone();
    let mut cost = 0.0;
    let mut g = dy.running_cost(&x);
    for i in 0..steps {
        let (k1, c1) = dy.rhs(&x);
        let (k2, c2) = dy.rhs(&(&x + &k1 * (0.5 * h)));
        let (k3, c3) = dy.rhs(&(&x + &k2 * (0.5 * h)));
        let (k4, c4) = dy.rhs(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        match quad {
            Quadrature::Embedded => cost += (c1 + 2.0 * c2 + 2.0 * c3 + c4) * (h / 6.0),
            Quadrature::Trapezoid => {
                let g_next = dy.running_cost(&x);
                cost += 0.5 * h * (g + g_next);
                g = g_next;
            }
        }
        if overflowed(&x) || !cost.is_finite() {
            return Err(LqrError::RolloutOverflow { time: (i + 1) as f64 * h });
        }
    }
    Ok(cost)
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn rk45_rollout(dy: &Dynamics, x0: &Vector, tau: f64, atol: f64, rtol: f64, quad: Quadrature) -> Result<f64> {
    let n = x0.len();
    let mut x = x0.clone();
    let mut cost = 0.0;
    let mut t = 0.0;
    let scale0 = x0.amax().max(1e-300);
    let (f0, _) = dy.rhs(x0);
    let mut h = (0.01 * scale0 / f0.amax().max(1e-300)).min(tau).max(1e-12 * tau);
    let mut g = dy.running_cost(&x);
    let mut steps = 0usize;
    while t < tau {
        if t + h > tau {
            h = tau - t;
        }
        let mut kx: Vec<Vector> = Vec::with_capacity(7);
        let mut kc = [0.0; 7];
        for s in 0..7 {
            let mut xs = x.clone();
            for (j, kj) in kx.iter().enumerate() {
                if A[s][j] != 0.0 {
                    xs += kj * (h * A[s][j]);
                }
            }
            let (dx, dc) = dy.rhs(&xs);
            kx.push(dx);
            kc[s] = dc;
        }
        let mut x5 = x.clone();
        let mut err = Vector::zeros(n);
        let mut c5 = cost;
        let mut c4 = cost;
        for s in 0..7 {
            x5 += &kx[s] * (h * B5[s]);
            err += &kx[s] * (h * (B5[s] - B4[s]));
            c5 += h * B5[s] * kc[s];
            c4 += h * B4[s] * kc[s];
        }
        let mut ratio = 0.0_f64;
        for i in 0..n {
            let sc = atol + rtol * x[i].abs().max(x5[i].abs());
            ratio = ratio.max(err[i].abs() / sc);
        }
        if quad == Quadrature::Embedded {
            let sc = atol + rtol * cost.abs().max(c5.abs());
            ratio = ratio.max((c5 - c4).abs() / sc);
        }
        if !ratio.is_finite() {
            return Err(LqrError::RolloutOverflow { time: t });
        }
        if ratio <= 1.0 {
            t += h;
            x = x5;
            match quad {
                Quadrature::Embedded => cost = c5,
                Quadrature::Trapezoid => {
                    let g_next = dy.running_cost(&x);
                    cost += 0.5 * h * (g + g_next);
                    g = g_next;
                }
            }
            if overflowed(&x) || !cost.is_finite() {
                return Err(LqrError::RolloutOverflow { time: t });
            }
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        steps += 1;
        if h < 1e-14 * tau.max(1.0) || steps > 50_000_000 {
            return Err(LqrError::Integrator(format!("step size collapsed at t = {t:e}")));
        }
    }
    Ok(cost)
}

/// Finite-horizon cost `∫₀^τ xᵀ(Q + KᵀRK)x dt` along `ẋ = (A − BK) x`, `x(0) = x0`.
///
/// Stability of `K` is not required; a blow-up is reported with its time.
pub fn rollout_cost(plant: &Plant, k: &Mat, x0: &Vector, config: &RolloutConfig) -> Result<f64> {
    config.validate()?;
    check_shape("K", k, plant.m(), plant.n())?;
    if x0.len() != plant.n() || !x0.iter().all(|v| v.is_finite()) {
        return Err(LqrError::InvalidArgument(format!("x0 must be a finite {}-vector", plant.n())));
    }
    let dy = Dynamics { f: plant.closed_loop(k), s: plant.stage_weight(k) };
    match config.integrator {
        Integrator::Exact => exact_rollout_cost(plant, k, x0, config.tau),
        Integrator::Rk4 { dt } => rk4_rollout(&dy, x0, config.tau, dt, config.quadrature),
        Integrator::Rk45 { atol, rtol } => rk45_rollout(&dy, x0, config.tau, atol, rtol, config.quadrature),
    }
}

/// `xᵀ M x` for symmetric `M`.
pub fn quadratic(m: &Mat, x: &Vector) -> f64 {
    inner(m, &(x * x.transpose()))
}
