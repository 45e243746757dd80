//! The LQR objective over feedback gains.
//!
//! For a stabilizing `K` the closed loop `A − BK` defines the state
//! covariance `X(K)`, the cost-to-go `P(K)` and `f(K) = trace((Q + KᵀRK) X)`.
//! Non-stabilizing gains map to [`Cost::Infinite`].

mod plant;
mod riccati;

pub use plant::{OperatorKind, Plant};
pub use riccati::{
    are_residual, care_hamiltonian, initial_stabilizing_gain, kleinman_step, solve_riccati_kleinman,
    RiccatiSolution, KLEINMAN_MAX_ITERS,
};

use serde::Serialize;

use crate::error::{LqrError, Result};
use crate::lyap_kernel::dense::{check_shape, inner, min_eig, spectral_norm, symmetrize};
use crate::lyap_kernel::{LyapunovSolver, Mat, SchurForm, HURWITZ_TOL};

/// Extended-real LQR cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Cost {
    Finite(f64),
    /// Not stabilizing; carries the closed-loop spectral abscissa.
    Infinite { margin: f64 },
}

impl Cost {
    pub fn value(&self) -> f64 {
        match *self {
            Cost::Finite(v) => v,
            Cost::Infinite { .. } => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Cost::Finite(_))
    }
}

/// Quantities attached to a stabilizing gain.
#[derive(Debug, Clone)]
pub struct GainCertificate {
    pub x: Mat,
    pub p: Mat,
    pub f: f64,
}

/// A feedback gain together with its stability verdict and certificate.
///
/// The certificate is computed once at construction and never mutated.
#[derive(Debug, Clone)]
pub struct Gain {
    pub k: Mat,
    /// Spectral abscissa of `A − BK`.
    pub margin: f64,
    certificate: Option<GainCertificate>,
}

impl Gain {
    pub fn new(plant: &Plant, k: Mat) -> Result<Self> {
        check_shape("K", &k, plant.m(), plant.n())?;
        let f = plant.closed_loop(&k);
        let schur = SchurForm::new(&f)?;
        let margin = schur.spectral_abscissa();
        if margin >= -HURWITZ_TOL {
            return Ok(Self { k, margin, certificate: None });
        }
        let solver = LyapunovSolver::from_schur(schur)?;
        let x = solver.solve(&plant.omega)?;
        let p = solver.solve_adjoint(&plant.stage_weight(&k))?;
        let cost = inner(&plant.stage_weight(&k), &x);
        Ok(Self { k, margin, certificate: Some(GainCertificate { x, p, f: cost }) })
    }

    pub fn stabilizing(&self) -> bool {
        self.certificate.is_some()
    }

    pub fn certificate(&self) -> Result<&GainCertificate> {
        self.certificate.as_ref().ok_or(LqrError::NotStabilizing { margin: self.margin })
    }

    pub fn cost(&self) -> Cost {
        match &self.certificate {
            Some(c) => Cost::Finite(c.f),
            None => Cost::Infinite { margin: self.margin },
        }
    }
}

fn stabilizing_solver(plant: &Plant, k: &Mat) -> Result<LyapunovSolver> {
    check_shape("K", k, plant.m(), plant.n())?;
    let schur = SchurForm::new(&plant.closed_loop(k))?;
    let margin = schur.spectral_abscissa();
    if margin >= -HURWITZ_TOL {
        return Err(LqrError::NotStabilizing { margin });
    }
    LyapunovSolver::from_schur(schur)
}

/// `X(K)` solving `(A − BK) X + X (A − BK)ᵀ + Ω = 0`.
pub fn state_covariance(plant: &Plant, k: &Mat) -> Result<Mat> {
    stabilizing_solver(plant, k)?.solve(&plant.omega)
}

/// `P(K)` solving `(A − BK)ᵀ P + P (A − BK) + Q + KᵀRK = 0`.
pub fn cost_to_go(plant: &Plant, k: &Mat) -> Result<Mat> {
    stabilizing_solver(plant, k)?.solve_adjoint(&plant.stage_weight(k))
}

/// `f(K) = trace((Q + KᵀRK) X(K))`, or infinity when `K` is not stabilizing.
pub fn lqr_cost(plant: &Plant, k: &Mat) -> Cost {
    match Gain::new(plant, k.clone()) {
        Ok(g) => g.cost(),
        Err(_) => Cost::Infinite { margin: f64::NAN },
    }
}

/// `trace(P(K) Ω)`; the cost computed through the cost-to-go.
pub fn lqr_cost_via_p(plant: &Plant, k: &Mat) -> Cost {
    match cost_to_go(plant, k) {
        Ok(p) => Cost::Finite(inner(&p, &plant.omega)),
        Err(LqrError::NotStabilizing { margin }) => Cost::Infinite { margin },
        Err(_) => Cost::Infinite { margin: f64::NAN },
    }
}

/// `2 (R K − Bᵀ P) X` from a certificate.
pub fn gradient_from(plant: &Plant, k: &Mat, cert: &GainCertificate) -> Mat {
    (&plant.r * k - plant.b.transpose() * &cert.p) * &cert.x * 2.0
}

/// `∇f(K) = 2 (R K − Bᵀ P(K)) X(K)`.
pub fn gradient(plant: &Plant, k: &Mat) -> Result<Mat> {
    let g = Gain::new(plant, k.clone())?;
    Ok(gradient_from(plant, k, g.certificate()?))
}

/// Second directional derivative `⟨K̃, ∇²f(K; K̃)⟩`.
///
/// `covariance` replaces Ω (for instance by `x₀x₀ᵀ` to obtain the
/// per-initial-condition form).
pub fn hessian_quadratic_form(plant: &Plant, k: &Mat, kt: &Mat, covariance: Option<&Mat>) -> Result<f64> {
    check_shape("K~", kt, plant.m(), plant.n())?;
    let solver = stabilizing_solver(plant, k)?;
    let x = match covariance {
        Some(c) => {
            check_shape("covariance", c, plant.n(), plant.n())?;
            solver.solve(&symmetrize(c))?
        }
        None => solver.solve(&plant.omega)?,
    };
    let p = solver.solve_adjoint(&plant.stage_weight(k))?;
    let e = plant.b.transpose() * &p - &plant.r * k;
    let c = kt.transpose() * &e + e.transpose() * kt;
    let pt = solver.solve_adjoint(&-c)?;
    let first = inner(&(&plant.r * kt), &(kt * &x));
    let second = inner(&(plant.b.transpose() * &pt * &x), kt);
    Ok(2.0 * (first - 2.0 * second))
}

/// `(f(K) − f(K⋆), trace((K − K⋆)ᵀ R (K − K⋆) X(K)))`.
pub fn suboptimality_identity(plant: &Plant, k: &Mat, riccati: &RiccatiSolution) -> Result<(f64, f64)> {
    let g = Gain::new(plant, k.clone())?;
    let cert = g.certificate()?;
    let f_star = inner(&riccati.p_star, &plant.omega);
    let d = k - &riccati.k_star;
    let rhs = inner(&(d.transpose() * &plant.r * &d), &cert.x);
    Ok((cert.f - f_star, rhs))
}

/// `ζ = λ_min(Ω) / (2 ‖B‖₂ ‖X(K)‖₂)`.
pub fn stability_radius(plant: &Plant, k: &Mat) -> Result<f64> {
    let x = state_covariance(plant, k)?;
    Ok(min_eig(&plant.omega) / (2.0 * spectral_norm(&plant.b) * spectral_norm(&x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar() -> Plant {
        Plant::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn decoupled() -> Plant {
        let i = Mat::identity(2, 2);
        Plant::new(Mat::zeros(2, 2), i.clone(), i.clone(), i.clone(), i).unwrap()
    }

    #[test]
    fn scalar_covariances() {
        let p = scalar();
        assert!((state_covariance(&p, &s(2.0)).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((cost_to_go(&p, &s(2.0)).unwrap()[(0, 0)] - 2.5).abs() < 1e-15);
        assert!(matches!(state_covariance(&p, &s(1.0)), Err(LqrError::NotStabilizing { .. })));
    }

    #[test]
    fn decoupled_covariances() {
        let p = decoupled();
        let i = Mat::identity(2, 2);
        assert!((state_covariance(&p, &i).unwrap() - &i * 0.5).norm() < 1e-14);
        assert!((cost_to_go(&p, &i).unwrap() - &i).norm() < 1e-14);
        assert!((lqr_cost(&p, &i).value() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_cost_and_gradient() {
        let p = scalar();
        assert!((lqr_cost(&p, &s(2.0)).value() - 2.5).abs() < 1e-15);
        assert!(lqr_cost(&p, &s(1.0)).value().is_infinite());
        assert!((gradient(&p, &s(2.0)).unwrap()[(0, 0)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn scalar_hessian() {
        let p = scalar();
        let h = hessian_quadratic_form(&p, &s(2.0), &s(1.0), None).unwrap();
        assert!((h - 2.0).abs() < 1e-14);
        let kstar = 1.0 + 2f64.sqrt();
        let h = hessian_quadratic_form(&p, &s(kstar), &s(1.0), None).unwrap();
        assert!((h - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scalar_suboptimality_and_radius() {
        let p = scalar();
        let ric = solve_riccati_kleinman(&p, None).unwrap();
        let (lhs, rhs) = suboptimality_identity(&p, &s(2.0), &ric).unwrap();
        let want = 2.5 - (1.0 + 2f64.sqrt());
        assert!((lhs - want).abs() < 1e-12 && (rhs - want).abs() < 1e-12);
        let (lhs, rhs) = suboptimality_identity(&p, &ric.k_star, &ric).unwrap();
        assert!(lhs.abs() < 1e-12 && rhs.abs() < 1e-12);
        assert!((stability_radius(&p, &s(2.0)).unwrap() - 1.0).abs() < 1e-14);
        assert!((stability_radius(&decoupled(), &Mat::identity(2, 2)).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cost_forms_agree() {
        let p = scalar();
        for k in [1.5, 2.0, 3.0, 10.0] {
            let a = lqr_cost(&p, &s(k)).value();
            let b = lqr_cost_via_p(&p, &s(k)).value();
            assert!((a - b).abs() <= 1e-12 * a);
        }
    }
}
