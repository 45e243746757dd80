//! Explicit constants certified over sublevel sets `S_K(a) = {K : f(K) ≤ a}`
//! and Monte-Carlo checkers for the inequalities they certify.

mod checks;
mod sampling;

pub use checks::{
    check_gradient_comparison, check_gradient_lipschitz, check_hessian_sandwich,
    check_perturbation_lipschitz, check_r_of_a, check_stability_radius, check_sublevel_bounds,
    check_truncation, pl_check, InequalityReport,
};
pub use sampling::sample_sublevel;

use serde::Serialize;

use crate::convex_param::Shift;
use crate::error::{LqrError, Result};
use crate::lqr_core::{solve_riccati_kleinman, Gain, OperatorKind, Plant};
use crate::lyap_kernel::dense::{min_eig, spectral_norm};
use crate::lyap_kernel::{operator_spectral_induced_norm_estimate, operator_two_norm, Mat, SymOperatorRep};
use crate::parallel::map_indexed;
use crate::sim_engine::{sample_sphere_direction, RngStream};

/// Plant quantities entering the constants.
#[derive(Debug, Clone, Serialize)]
pub struct PlantConstants {
    pub lambda_min_q: f64,
    pub lambda_min_r: f64,
    pub lambda_min_omega: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    pub norm_b_fro: f64,
    pub norm_r: f64,
    pub norm_r_fro: f64,
    pub norm_q_fro: f64,
    pub norm_omega_fro: f64,
    /// `‖𝒜⁻¹ℬ‖₂`.
    pub ainv_b: f64,
    /// `‖ℬ‖₂`.
    pub b_op: f64,
    /// `‖𝒜⁻¹‖₂`.
    pub ainv: f64,
    /// `ν = λ_min(Ω)²/4 · (‖A‖₂/√λ_min(Q) + ‖B‖₂/√λ_min(R))⁻²`.
    pub nu: f64,
    pub f_star: f64,
    /// `trace(P⋆)`.
    pub trace_p_star: f64,
    /// Set when `𝒜` was singular and the operators were built on `A − BK⁰`.
    pub shifted: bool,
    pub m: usize,
    pub n: usize,
}

impl PlantConstants {
    pub fn new(plant: &Plant, shift: Option<&Shift>) -> Result<Self> {
        let lq = plant.lambda_min_q();
        let lr = plant.lambda_min_r();
        let lw = plant.lambda_min_omega();
        let norm_a = plant.norm_a();
        let norm_b = plant.norm_b();
        let a_eff = match shift {
            Some(s) => plant.closed_loop(&s.k0),
            None => plant.a.clone(),
        };
        let a_op = SymOperatorRep::lyapunov(&a_eff);
        if a_op.inverse_condition() <= 1e-10 {
            return Err(LqrError::SingularOperator);
        }
        let a_inv = a_op.inverse()?;
        let b_rep = plant.operator(OperatorKind::OpenB)?;
        let ainv_b = operator_two_norm(&a_inv.compose(&b_rep)?);
        let nu = lw * lw / 4.0 / (norm_a / lq.sqrt() + norm_b / lr.sqrt()).powi(2);
        let ric = solve_riccati_kleinman(plant, None)?;
        Ok(Self {
            lambda_min_q: lq,
            lambda_min_r: lr,
            lambda_min_omega: lw,
            norm_a,
            norm_b,
            norm_b_fro: plant.b.norm(),
            norm_r: spectral_norm(&plant.r),
            norm_r_fro: plant.r.norm(),
            norm_q_fro: plant.q.norm(),
            norm_omega_fro: plant.omega.norm(),
            ainv_b,
            b_op: operator_two_norm(&b_rep),
            ainv: operator_two_norm(&a_inv),
            nu,
            f_star: ric.f_star(plant),
            trace_p_star: ric.p_star.trace(),
            shifted: shift.is_some(),
            m: plant.m(),
            n: plant.n(),
        })
    }
}

/// Thresholds that every `K ∈ S_K(a)` satisfies.
#[derive(Debug, Clone, Serialize)]
pub struct SublevelBounds {
    pub a: f64,
    pub nu: f64,
    /// `trace(X) ≤ a/λ_min(Q)`.
    pub trace_x_max: f64,
    /// `‖Y‖_F ≤ a/√(λ_min(R)λ_min(Q))`.
    pub norm_y_max: f64,
    /// `λ_min(X) ≥ ν/a`.
    pub lambda_min_x_min: f64,
    /// `‖K‖_F ≤ a/√(νλ_min(R))`.
    pub norm_k_max: f64,
    /// `trace(P) ≤ a/λ_min(Ω)`.
    pub trace_p_max: f64,
    /// `‖𝒜_K⁻¹‖₂ ≤ a/(λ_min(Ω)λ_min(Q))`.
    pub closed_loop_inverse_max: f64,
}

pub fn sublevel_bounds_from(pc: &PlantConstants, a: f64) -> SublevelBounds {
    let (lq, lr, lw, nu) = (pc.lambda_min_q, pc.lambda_min_r, pc.lambda_min_omega, pc.nu);
    SublevelBounds {
        a,
        nu,
        trace_x_max: a / lq,
        norm_y_max: a / (lr * lq).sqrt(),
        lambda_min_x_min: nu / a,
        norm_k_max: a / (nu * lr).sqrt(),
        trace_p_max: a / lw,
        closed_loop_inverse_max: a / (lw * lq),
    }
}

pub fn sublevel_bounds(plant: &Plant, a: f64) -> Result<SublevelBounds> {
    if !(a > 0.0) {
        return Err(LqrError::InvalidArgument(format!("sublevel value must be positive, got {a}")));
    }
    let lq = plant.lambda_min_q();
    let lr = plant.lambda_min_r();
    let lw = plant.lambda_min_omega();
    let nu = lw * lw / 4.0 / (plant.norm_a() / lq.sqrt() + plant.norm_b() / lr.sqrt()).powi(2);
    Ok(SublevelBounds {
        a,
        nu,
        trace_x_max: a / lq,
        norm_y_max: a / (lr * lq).sqrt(),
        lambda_min_x_min: nu / a,
        norm_k_max: a / (nu * lr).sqrt(),
        trace_p_max: a / lw,
        closed_loop_inverse_max: a / (lw * lq),
    })
}

/// How a reported number was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Formula,
    Estimate,
    Empirical,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProvenanceNote {
    pub field: String,
    pub provenance: Provenance,
    pub note: String,
}

/// Every constant certified over `S_K(a)`.
#[derive(Debug, Clone, Serialize)]
pub struct SublevelCertificate {
    pub a: f64,
    pub nu: f64,
    pub eta: f64,
    /// Smoothness of `h` over `S_Y(a)`.
    #[serde(rename = "L")]
    pub l: f64,
    /// Strong convexity of `h` over `S_Y(a)`.
    pub mu: f64,
    /// Gradient comparison `‖∇f‖_F ≥ c ‖∇h‖_F`.
    pub c: f64,
    /// PL constant `μ c²`.
    pub mu_f: f64,
    /// Gradient-flow rate `2 μ c²`.
    pub rho: f64,
    /// Lipschitz constant of `∇f`.
    #[serde(rename = "L_f")]
    pub l_f: f64,
    /// Iterate-error constant.
    pub b: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Perturbation budget keeping `K + rU` in `S_K(2a)`.
    pub r_a: f64,
    pub zeta_formula: String,
    /// `(δ, ε₁, …, ε₄)` at the gain passed to [`SublevelCertificate::with_gain`].
    pub perturbation: Option<PerturbationConstants>,
    pub plant: PlantConstants,
    pub provenance: Vec<ProvenanceNote>,
    /// Constants known only up to unspecified universal factors.
    pub symbolic: Vec<SymbolicConstant>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymbolicConstant {
    pub name: String,
    pub expression: String,
}

fn symbolic_constants() -> Vec<SymbolicConstant> {
    [
        ("ell(a)", "c a^2 + c' a^4 with problem-data constants c, c'; see the empirical fit"),
        ("theta_1..theta_4", "polynomials in a, theta(a), r(a), ell(2a) with absolute constants C_1..C_7"),
        ("theta', theta''", "sample-size and horizon thresholds with absolute constant beta"),
        ("c, c', C_1..C_7, beta", "universal constants, not evaluated"),
    ]
    .into_iter()
    .map(|(n, e)| SymbolicConstant { name: n.into(), expression: e.into() })
    .collect()
}

impl SublevelCertificate {
    pub fn new(pc: &PlantConstants, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(LqrError::InvalidArgument(format!("sublevel value must be positive, got {a}")));
        }
        let (lq, lr, lw, nu) = (pc.lambda_min_q, pc.lambda_min_r, pc.lambda_min_omega, pc.nu);
        let snr = (nu * lr).sqrt();
        let eta = pc.b_op / (lq * lw * snr);
        let l = 2.0 * a * pc.norm_r / nu * (1.0 + a * pc.ainv_b / snr).powi(2);
        let mu = 2.0 * lr * lq / (a * (1.0 + a * a * eta).powi(2));
        let c = nu * snr / (2.0 * a * a * pc.ainv * pc.norm_b + a * snr);
        let l_f = 2.0 * a * pc.norm_r / lq
            + 8.0 * a.powi(3) * pc.norm_b / (lq * lq * lw) * (pc.norm_b / lw + pc.norm_r / snr);
        let b = a * a * pc.norm_r / (nu * lr * lq);
        let kappa1 = (pc.norm_q_fro + a * a * pc.norm_r / (nu * lr)) * a.powi(3) / (nu * lw * lq * lq);
        let kappa2 = lw * lq / a;
        let mut provenance = vec![ProvenanceNote {
            field: "all".into(),
            provenance: Provenance::Formula,
            note: "closed-form plug-in with exact operator 2-norms".into(),
        }];
        if pc.shifted {
            provenance.push(ProvenanceNote {
                field: "l, c, eta".into(),
                provenance: Provenance::Formula,
                note: "open-loop operator singular; norms taken on the shifted operator A - B K0".into(),
            });
        }
        Ok(Self {
            a,
            nu,
            eta,
            l,
            mu,
            c,
            mu_f: mu * c * c,
            rho: 2.0 * mu * c * c,
            l_f,
            b,
            kappa1,
            kappa2,
            r_a: r_of_a_from(pc, a).0,
            zeta_formula: "lambda_min(Omega) / (2 ||B||_2 ||X(K)||_2)".into(),
            perturbation: None,
            plant: pc.clone(),
            provenance,
            symbolic: symbolic_constants(),
        })
    }

    pub fn with_gain(mut self, plant: &Plant, k: &Mat) -> Result<Self> {
        self.perturbation = Some(perturbation_constants(plant, k)?);
        Ok(self)
    }
}

pub fn certificate(plant: &Plant, a: f64, shift: Option<&Shift>) -> Result<SublevelCertificate> {
    let resolved = match shift {
        Some(s) => Some(s.clone()),
        None => resolve_shift(plant, None)?,
    };
    let pc = PlantConstants::new(plant, resolved.as_ref())?;
    SublevelCertificate::new(&pc, a)
}

/// `shift` if given; otherwise no shift when `𝒜` is invertible and the
/// bootstrap stabilizing gain as `K⁰` when it is singular.
pub fn resolve_shift(plant: &Plant, shift: Option<&Shift>) -> Result<Option<Shift>> {
    if let Some(s) = shift {
        return Ok(Some(s.clone()));
    }
    if SymOperatorRep::lyapunov(&plant.a).inverse_condition() > 1e-10 {
        return Ok(None);
    }
    Ok(Some(Shift { k0: crate::lqr_core::initial_stabilizing_gain(plant)? }))
}

/// Components of the perturbation budget.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PerturbationBudget {
    pub r: f64,
    /// Lower bound `c₁/a` on `δ(K)` over `S_K(a)`.
    pub c1: f64,
    /// `ε₄(K) ≤ c₂ a²` over `S_K(a)`.
    pub c2: f64,
}

/// `r(a) = min{c₁, 1/c₂} / (a √(mn))`.
fn r_of_a_from(pc: &PlantConstants, a: f64) -> (f64, PerturbationBudget) {
    let (lq, lr, lw, nu) = (pc.lambda_min_q, pc.lambda_min_r, pc.lambda_min_omega, pc.nu);
    let c1 = lw * lq / (4.0 * pc.norm_b_fro);
    let delta_max = lq / (4.0 * pc.norm_b_fro * pc.trace_p_star);
    let c2 = 2.0 * pc.norm_omega_fro / (lw * lq)
        * (2.0 * pc.norm_b_fro / lw + 2.0 * pc.norm_r_fro / (nu * lr).sqrt() + delta_max * pc.norm_r_fro / pc.f_star);
    let r = c1.min(1.0 / c2) / (a * ((pc.m * pc.n) as f64).sqrt());
    (r, PerturbationBudget { r, c1, c2 })
}

pub fn r_of_a(plant: &Plant, a: f64) -> Result<PerturbationBudget> {
    let pc = PlantConstants::new(plant, resolve_shift(plant, None)?.as_ref())?;
    if !(a > pc.f_star) {
        return Err(LqrError::InvalidArgument(format!("a = {a} must exceed f* = {}", pc.f_star)));
    }
    Ok(r_of_a_from(&pc, a).1)
}

/// `(δ, ε₁, ε₂, ε₃, ε₄)` at a stabilizing gain.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PerturbationConstants {
    pub delta: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
}

pub fn perturbation_constants(plant: &Plant, k: &Mat) -> Result<PerturbationConstants> {
    let g = Gain::new(plant, k.clone())?;
    let cert = g.certificate()?;
    let (x, p) = (&cert.x, &cert.p);
    let lq = plant.lambda_min_q();
    let lw = plant.lambda_min_omega();
    let bf = plant.b.norm();
    let rf = plant.r.norm();
    let delta = (1.0 / (4.0 * bf)) * (lw / x.trace()).min(lq / p.trace());
    let xn = spectral_norm(x);
    let pn = spectral_norm(p);
    let kn = spectral_norm(k);
    let eps1 = xn / delta;
    let eps2 = 2.0 * p.trace() * (2.0 * pn * bf + (delta + 2.0 * kn) * rf) / lq;
    let eps3 = 2.0 * (eps1 * kn + 2.0 * xn) * rf + 2.0 * eps1 * (pn + 2.0 * eps2 * xn) * bf;
    let eps4 = eps2 * plant.omega.norm();
    Ok(PerturbationConstants { delta, eps1, eps2, eps3, eps4 })
}

/// Upper bounds on `(‖(𝒜_K*)⁻¹‖₂ + ‖(𝒜_K*)⁻¹‖_S) / λ_min(X)` over `S_K(a)`.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaBound {
    pub a: f64,
    /// Uses `‖·‖_S ≤ √n ‖·‖₂`; a certified value.
    pub theta: f64,
    /// Replaces `√n` by the largest sampled ratio `‖·‖_S / ‖·‖₂`.
    pub theta_estimate: f64,
    pub sampled_ratio: f64,
    pub samples: usize,
    pub provenance: Vec<ProvenanceNote>,
}

pub fn theta_bound(plant: &Plant, a: f64, samples: usize, seed: u64) -> Result<ThetaBound> {
    let bounds = sublevel_bounds(plant, a)?;
    let ric = solve_riccati_kleinman(plant, None)?;
    let f_star = ric.f_star(plant);
    if !(a > f_star) {
        return Err(LqrError::InvalidArgument(format!("a = {a} must exceed f* = {f_star}")));
    }
    let inv_norm = bounds.closed_loop_inverse_max;
    let inv_lambda = a / bounds.nu;
    let n = plant.n();
    let theta = (1.0 + (n as f64).sqrt()) * inv_norm * inv_lambda;
    let mut ratio = 1.0_f64;
    let mut used = 0;
    if n > 1 && samples > 0 {
        let gains = sample_sublevel(plant, a, samples, seed, &ric.k_star, &[])?;
        used = gains.len();
        let ratios = map_indexed(gains.len(), |i| -> Result<f64> {
            let op = plant.operator(OperatorKind::AdjointClosedLoop(&gains[i]))?.inverse()?;
            let two = operator_two_norm(&op);
            let s = operator_spectral_induced_norm_estimate(&op, 8, seed.wrapping_add(i as u64));
            Ok(s / two)
        });
        for r in ratios {
            ratio = ratio.max(r?);
        }
    }
    let theta_estimate = (1.0 + ratio) * inv_norm * inv_lambda;
    let provenance = vec![
        ProvenanceNote {
            field: "theta".into(),
            provenance: Provenance::Formula,
            note: "||.||_S <= sqrt(n) ||.||_2 with ||(A_K*)^-1||_2 <= a/(lambda_Q lambda_Omega) and lambda_min(X) >= nu/a".into(),
        },
        ProvenanceNote {
            field: "theta_estimate".into(),
            provenance: Provenance::Estimate,
            note: "spectral induced norm ratio from randomized lower estimates over sampled gains".into(),
        },
    ];
    Ok(ThetaBound { a, theta, theta_estimate, sampled_ratio: ratio, samples: used, provenance })
}

/// Empirical third-order coefficient `ℓ(a)` of the two-point remainder.
#[derive(Debug, Clone, Serialize)]
pub struct EllFit {
    pub a: f64,
    pub ell: f64,
    pub samples: usize,
    pub provenance: Provenance,
}

/// Largest observed coefficient `ℓ` with
/// `|(f_x(K+rU) − f_x(K−rU))/(2r) − ⟨∇f_x(K), U⟩| ‖U‖_F ≤ ((rmn)²/2) ℓ ‖x‖²`
/// over gains in `S_K(a)` (plus `extra` gains), sphere directions and unit `x`.
///
/// The third directional derivative is taken from a four-point stencil with a
/// step inside the stability radius, so the fit does not depend on `r`.
pub fn fit_ell(plant: &Plant, a: f64, samples: usize, seed: u64, extra: &[Mat]) -> Result<EllFit> {
    let ric = solve_riccati_kleinman(plant, None)?;
    let mut gains = sample_sublevel(plant, a, samples, seed, &ric.k_star, &[])?;
    gains.extend(extra.iter().cloned());
    let (m, n) = (plant.m(), plant.n());
    let mn = (m * n) as f64;
    let coeffs = map_indexed(gains.len(), |i| -> Result<f64> {
        let k = &gains[i];
        let mut rng = RngStream::new(seed ^ 0x5eed_e11, i as u64).rng();
        let u = sample_sphere_direction(m, n, &mut rng);
        let zeta = crate::lqr_core::stability_radius(plant, k)?;
        let h = 0.2 * zeta / spectral_norm(&u);
        let p = |t: f64| -> Result<Mat> { crate::lqr_core::cost_to_go(plant, &(k + &u * t)) };
        let (p2, p1, m1, m2) = (p(2.0 * h)?, p(h)?, p(-h)?, p(-2.0 * h)?);
        let d3 = (p2 - p1 * 2.0 + m1 * 2.0 - m2) / (2.0 * h.powi(3));
        // Worst unit initial condition: largest |eigenvalue| of the symmetric D³ matrix.
        let worst = spectral_norm(&crate::lyap_kernel::dense::symmetrize(&d3));
        Ok(worst * mn.sqrt() / (3.0 * mn * mn))
    });
    let mut ell = 0.0_f64;
    for c in coeffs {
        ell = ell.max(c?);
    }
    Ok(EllFit { a, ell, samples: gains.len(), provenance: Provenance::Empirical })
}

/// Smallest eigenvalue helper re-exported for checkers.
pub(crate) fn lambda_min(m: &Mat) -> f64 {
    min_eig(m)
}
