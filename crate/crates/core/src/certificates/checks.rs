use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{resolve_shift, sample_sublevel, PlantConstants, SublevelCertificate, SublevelBounds};
use crate::convex_param::ConvexModel;
use crate::error::{LqrError, Result};
use crate::lqr_core::{
    gradient, lqr_cost, solve_riccati_kleinman, stability_radius, Gain, OperatorKind, Plant, RiccatiSolution,
};
use crate::lyap_kernel::dense::spectral_norm;
use crate::lyap_kernel::{operator_two_norm, Mat, Vector};
use crate::parallel::map_indexed;
use crate::sim_engine::{sample_sphere_direction, truncated_cost_matrix, RngStream};

/// Outcome of a Monte-Carlo inequality check.
///
/// `worst_ratio` is the largest observed value of `observed / bound`
/// (rearranged so that the inequality reads `ratio ≤ 1`).
#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    pub worst_ratio: f64,
    pub pass: bool,
}

impl InequalityReport {
    fn from_ratios(name: &str, ratios: Vec<Result<f64>>) -> Result<Self> {
        let mut worst = 0.0_f64;
        let mut violations = 0;
        let samples = ratios.len();
        for r in ratios {
            let r = r?;
            if r.is_nan() || r > 1.0 {
                violations += 1;
            }
            worst = worst.max(if r.is_nan() { f64::INFINITY } else { r });
        }
        Ok(Self { name: name.into(), samples, violations, worst_ratio: worst, pass: violations == 0 })
    }
}

struct Setup {
    ric: RiccatiSolution,
    pc: PlantConstants,
    cert: SublevelCertificate,
    gains: Vec<Mat>,
}

fn setup(plant: &Plant, a: f64, samples: usize, seed: u64) -> Result<Setup> {
    let shift = resolve_shift(plant, None)?;
    let pc = PlantConstants::new(plant, shift.as_ref())?;
    let cert = SublevelCertificate::new(&pc, a)?;
    let ric = solve_riccati_kleinman(plant, None)?;
    let gains = sample_sublevel(plant, a, samples, seed, &ric.k_star, &[])?;
    Ok(Setup { ric, pc, cert, gains })
}

fn gaussian<R: Rng>(m: usize, n: usize, rng: &mut R) -> Mat {
    Mat::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Every threshold of [`super::sublevel_bounds`] at random `K ∈ S_K(a)`.
pub fn check_sublevel_bounds(plant: &Plant, a: f64, samples: usize, seed: u64) -> Result<InequalityReport> {
    let s = setup(plant, a, samples, seed)?;
    let b: SublevelBounds = super::sublevel_bounds_from(&s.pc, a);
    let ratios = map_indexed(s.gains.len(), |i| -> Result<f64> {
        let k = &s.gains[i];
        let g = Gain::new(plant, k.clone())?;
        let c = g.certificate()?;
        let inv = operator_two_norm(&plant.operator(OperatorKind::ClosedLoop(k))?.inverse()?);
        let r = [
            c.x.trace() / b.trace_x_max,
            (k * &c.x).norm() / b.norm_y_max,
            b.lambda_min_x_min / super::lambda_min(&c.x),
            k.norm() / b.norm_k_max,
            c.p.trace() / b.trace_p_max,
            inv / b.closed_loop_inverse_max,
        ];
        Ok(r.into_iter().fold(0.0, f64::max))
    });
    InequalityReport::from_ratios("sublevel-bounds", ratios)
}

/// `μ‖Ỹ‖² ≤ ⟨Ỹ, ∇²h(Y)Ỹ⟩ ≤ L‖Ỹ‖²` at `Y = Y(K)`, `K ∈ S_K(a)`.
pub fn check_hessian_sandwich(plant: &Plant, a: f64, samples: usize, seed: u64) -> Result<InequalityReport> {
    let s = setup(plant, a, samples, seed)?;
    let model = ConvexModel::new(plant, resolve_shift(plant, None)?.as_ref())?;
    let (m, n) = (plant.m(), plant.n());
    let ratios = map_indexed(s.gains.len(), |i| -> Result<f64> {
        let mut rng = RngStream::new(seed ^ 0x4e55, i as u64).rng();
        let yt = gaussian(m, n, &mut rng);
        let y = model.y_from_k(&s.gains[i])?.y;
        let hq = model.hessian_h(&y, &yt)?;
        let nrm = yt.norm_squared();
        Ok((s.cert.mu * nrm / hq).max(hq / (s.cert.l * nrm)))
    });
    InequalityReport::from_ratios("hessian-sandwich", ratios)
}

/// `‖∇f(K)‖_F ≥ c ‖∇h(Y(K))‖_F` on `S_K(a)`.
pub fn check_gradient_comparison(plant: &Plant, a: f64, samples: usize, seed: u64) -> Result<InequalityReport> {
    let s = setup(plant, a, samples, seed)?;
    let model = ConvexModel::new(plant, resolve_shift(plant, None)?.as_ref())?;
    let ratios = map_indexed(s.gains.len(), |i| -> Result<f64> {
        let k = &s.gains[i];
        let gf = gradient(plant, k)?.norm();
        let gh = model.grad_h(&model.y_from_k(k)?.y)?.norm();
        if gh == 0.0 {
            return Ok(0.0);
        }
        Ok(s.cert.c * gh / gf)
    });
    InequalityReport::from_ratios("gradient-comparison", ratios)
}

/// Gradient-dominance check `‖∇f(K)‖_F² ≥ 2 μ_f (f(K) − f⋆)`.
#[derive(Debug, Clone, Serialize)]
pub struct PlReport {
    pub a: f64,
    pub samples: usize,
    /// Samples with `f(K) − f⋆` at rounding level, satisfied trivially.
    pub trivial: usize,
    /// `min ‖∇f‖² / (f − f⋆)` over the nontrivial samples.
    pub min_ratio: f64,
    /// `2 μ_f`.
    pub threshold: f64,
    pub pass: bool,
}

pub fn pl_check(plant: &Plant, a: f64, samples: usize, seed: u64) -> Result<PlReport> {
    let s = setup(plant, a, samples, seed)?;
    let f_star = s.ric.f_star(plant);
    let vals = map_indexed(s.gains.len(), |i| -> Result<Option<f64>> {
        let k = &s.gains[i];
        let g = Gain::new(plant, k.clone())?;
        let gap = g.certificate()?.f - f_star;
        if gap <= 1e-12 * f_star.abs().max(1.0) {
            return Ok(None);
        }
        Ok(Some(gradient(plant, k)?.norm_squared() / gap))
    });
    let mut min_ratio = f64::INFINITY;
    let mut trivial = 0;
    for v in vals {
        match v? {
            Some(r) => min_ratio = min_ratio.min(r),
            None => trivial += 1,
        }
    }
    let threshold = 2.0 * s.cert.mu_f;
    Ok(PlReport { a, samples: s.gains.len(), trivial, min_ratio, threshold, pass: min_ratio >= threshold })
}

/// `‖∇f(K₁) − ∇f(K₂)‖_F ≤ L_f ‖K₁ − K₂‖_F` on segments inside `S_K(a)`.
pub fn check_gradient_lipschitz(plant: &Plant, a: f64, samples: usize, seed: u64) -> Result<InequalityReport> {
    let s = setup(plant, a, samples, seed)?;
    let (m, n) = (plant.m(), plant.n());
    let ratios = map_indexed(s.gains.len(), |i| -> Result<f64> {
        let k1 = &s.gains[i];
        let mut rng = RngStream::new(seed ^ 0x11f, i as u64).rng();
        let d = gaussian(m, n, &mut rng);
        let d = &d / d.norm();
        let mut t = stability_radius(plant, k1)?;
        let inside = |t: f64| (0..=8).all(|j| lqr_cost(plant, &(k1 + &d * (t * j as f64 / 8.0))).value() <= a);
        while !inside(t) {
            t *= 0.5;
            if t < 1e-12 {
                return Ok(0.0);
            }
        }
        let k2 = k1 + &d * t;
        let diff = (gradient(plant, k1)? - gradient(plant, &k2)?).norm();
        Ok(diff / t / s.cert.l_f)
    });
    InequalityReport::from_ratios("gradient-lipschitz", ratios)
}

/// `|f_v(K) − f_{v,τ}(K)| ≤ ‖v‖² κ₁ e^{−κ₂τ}` for random `v`, `K ∈ S_K(a)`.
pub fn check_truncation(plant: &Plant, a: f64, samples: usize, seed: u64, taus: &[f64]) -> Result<InequalityReport> {
    let s = setup(plant, a, samples, seed)?;
    let n = plant.n();
    let ratios = map_indexed(s.gains.len(), |i| -> Result<f64> {
        let k = &s.gains[i];
        let mut rng = RngStream::new(seed ^ 0x7a0, i as u64).rng();
        let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let p = Gain::new(plant, k.clone())?.certificate()?.p.clone();
        let full = v.dot(&(&p * &v));
        let mut worst = 0.0_f64;
        for &tau in taus {
            let pt = truncated_cost_matrix(plant, k, tau)?;
            let trunc = v.dot(&(&pt * &v));
            let gap = ((full - trunc).abs() - 1e-12 * full.abs()).max(0.0);
            let bound = v.norm_squared() * s.cert.kappa1 * (-s.cert.kappa2 * tau).exp();
            worst = worst.max(gap / bound);
        }
        Ok(worst)
    });
    InequalityReport::from_ratios("truncation", ratios)
}

/// `K + Δ` stays stabilizing for random `‖Δ‖₂ = 0.99 ζ(K)`.
pub fn check_stability_radius(plant: &Plant, k: &Mat, trials: usize, seed: u64) -> Result<InequalityReport> {
    let zeta = stability_radius(plant, k)?;
    let (m, n) = (plant.m(), plant.n());
    let ratios = map_indexed(trials, |i| -> Result<f64> {
        let mut rng = RngStream::new(seed, i as u64).rng();
        let d = gaussian(m, n, &mut rng);
        let d = &d * (0.99 * zeta / spectral_norm(&d));
        let g = Gain::new(plant, k + d)?;
        Ok(if g.stabilizing() { 0.99 } else { f64::INFINITY })
    });
    InequalityReport::from_ratios("stability-radius", ratios)
}

/// `f(K + r(a)U) ≤ 2a` for `K ∈ S_K(a)` and `U` on the `√(mn)` sphere.
pub fn check_r_of_a(plant: &Plant, a: f64, trials: usize, seed: u64) -> Result<InequalityReport> {
    let s = setup(plant, a, trials, seed)?;
    let r = s.cert.r_a;
    let (m, n) = (plant.m(), plant.n());
    let ratios = map_indexed(s.gains.len(), |i| -> Result<f64> {
        let mut rng = RngStream::new(seed ^ 0xa11, i as u64).rng();
        let u = sample_sphere_direction(m, n, &mut rng);
        Ok(lqr_cost(plant, &(&s.gains[i] + u * r)).value() / (2.0 * a))
    });
    InequalityReport::from_ratios("perturbation-budget", ratios)
}

/// `|f(K̂) − f(K)| ≤ ε₄ ‖K̂ − K‖₂` for random `‖K̂ − K‖₂ < δ`.
pub fn check_perturbation_lipschitz(plant: &Plant, k: &Mat, trials: usize, seed: u64) -> Result<InequalityReport> {
    let pc = super::perturbation_constants(plant, k)?;
    let f = lqr_cost(plant, k).value();
    if !f.is_finite() {
        return Err(LqrError::NotStabilizing { margin: f64::NAN });
    }
    let (m, n) = (plant.m(), plant.n());
    let ratios = map_indexed(trials, |i| -> Result<f64> {
        let mut rng = RngStream::new(seed, i as u64).rng();
        let d = gaussian(m, n, &mut rng);
        let dn = pc.delta * rng.gen_range(0.01..0.999);
        let d = &d * (dn / spectral_norm(&d));
        let fh = lqr_cost(plant, &(k + d)).value();
        Ok((fh - f).abs() / (pc.eps4 * dn))
    });
    InequalityReport::from_ratios("perturbation-lipschitz", ratios)
}
