//! Convex parameterization `Y = K X`.
//!
//! With `𝒜(X) = A X + X Aᵀ` and `ℬ(Y) = B Y + Yᵀ Bᵀ`, the state covariance is
//! affine in `Y`: `X(Y) = 𝒜⁻¹(ℬ(Y) − Ω)`, and
//! `h(Y) = trace(Q X + X⁻¹ Yᵀ R Y)` is convex on `S_Y = {Y : X(Y) ≻ 0}`.
//!
//! When `𝒜` is singular a shift gain `K⁰` must be supplied. All formulas then
//! run on `Â = A − B K⁰`, `Q⁰ = Q + K⁰ᵀ R K⁰` and `Ŷ = (K − K⁰) X`, with the
//! extra linear term `2 trace(Ŷᵀ R K⁰)` in the cost. Without a shift `K⁰ = 0`
//! and the two descriptions coincide.

use crate::error::{LqrError, Result};
use crate::lqr_core::{gradient_from, Gain, Plant};
use crate::lyap_kernel::dense::{check_shape, inner, min_eig, spd_inverse, sym_inv_sqrt, symmetrize};
use crate::lyap_kernel::{LyapunovSolver, Mat, SymOperatorRep};

const SINGULAR_TOL: f64 = 1e-10;
const FEASIBILITY_TOL: f64 = 1e-12;

/// Change of variables `K̂ = K − K⁰`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shift {
    pub k0: Mat,
}

/// Reusable data for evaluating `X(Y)`, `h`, `∇h` on one plant and shift.
#[derive(Debug, Clone)]
pub struct ConvexModel {
    pub plant: Plant,
    pub shift: Option<Shift>,
    /// `A − B K⁰`.
    pub a_hat: Mat,
    /// `Q + K⁰ᵀ R K⁰`.
    pub q0: Mat,
    k0: Mat,
    solver: LyapunovSolver,
}

impl ConvexModel {
    pub fn new(plant: &Plant, shift: Option<&Shift>) -> Result<Self> {
        let (n, m) = (plant.n(), plant.m());
        let k0 = match shift {
            Some(s) => {
                check_shape("K0", &s.k0, m, n)?;
                s.k0.clone()
            }
            None => Mat::zeros(m, n),
        };
        let a_hat = plant.closed_loop(&k0);
        if SymOperatorRep::lyapunov(&a_hat).inverse_condition() <= SINGULAR_TOL {
            return Err(match shift {
                None => LqrError::SingularOperator,
                Some(_) => LqrError::Singular("shifted Lyapunov operator is singular; pick another K0".into()),
            });
        }
        let solver = LyapunovSolver::new(&a_hat)?;
        let q0 = plant.stage_weight(&k0);
        Ok(Self { plant: plant.clone(), shift: shift.cloned(), a_hat, q0, k0, solver })
    }

    pub fn k0(&self) -> &Mat {
        &self.k0
    }

    fn input_map(&self, y: &Mat) -> Mat {
        let by = &self.plant.b * y;
        &by + by.transpose()
    }

    /// `𝒜⁻¹(Z)` for the (shifted) open-loop operator.
    pub fn a_inv(&self, z: &Mat) -> Result<Mat> {
        self.solver.solve(&-symmetrize(z))
    }

    /// `X(Y) = 𝒜⁻¹(ℬ(Y) − Ω)`.
    pub fn x_of_y(&self, y: &Mat) -> Result<Mat> {
        check_shape("Y", y, self.plant.m(), self.plant.n())?;
        self.a_inv(&(self.input_map(y) - &self.plant.omega))
    }

    pub fn point(&self, y: &Mat) -> Result<YPoint> {
        let x = self.x_of_y(y)?;
        let feasible = is_feasible(&x);
        Ok(YPoint { y: y.clone(), x, feasible, shift: self.shift.clone() })
    }

    fn require_feasible(&self, y: &Mat) -> Result<(Mat, Mat)> {
        let x = self.x_of_y(y)?;
        if !is_feasible(&x) {
            return Err(LqrError::Infeasible(format!("X(Y) has smallest eigenvalue {:e}", min_eig(&x))));
        }
        let xinv = spd_inverse("X(Y)", &x)?;
        Ok((x, xinv))
    }

    /// `h(Y)`, infinite outside `S_Y`.
    pub fn h(&self, y: &Mat) -> f64 {
        match self.require_feasible(y) {
            Ok((x, xinv)) => {
                let r = &self.plant.r;
                inner(&self.q0, &x) + inner(&xinv, &(y.transpose() * r * y)) + 2.0 * inner(y, &(r * &self.k0))
            }
            Err(_) => f64::INFINITY,
        }
    }

    /// `∇h(Y) = 2 R Y X⁻¹ + 2 R K⁰ − 2 Bᵀ W` with `ÂᵀW + WÂ = X⁻¹YᵀRYX⁻¹ − Q⁰`.
    pub fn grad_h(&self, y: &Mat) -> Result<Mat> {
        let (_, xinv) = self.require_feasible(y)?;
        let r = &self.plant.r;
        let ryx = r * y * &xinv;
        let rhs = symmetrize(&(&xinv * y.transpose() * &ryx)) - &self.q0;
        let w = self.solver.solve_adjoint(&-rhs)?;
        Ok(&ryx * 2.0 + r * &self.k0 * 2.0 - self.plant.b.transpose() * w * 2.0)
    }

    /// `2 ‖R^{1/2} (Ỹ − K̂ X̃) X^{−1/2}‖_F²` with `𝒜(X̃) = ℬ(Ỹ)`.
    pub fn hessian_h(&self, y: &Mat, yt: &Mat) -> Result<f64> {
        check_shape("Y~", yt, self.plant.m(), self.plant.n())?;
        let (x, xinv) = self.require_feasible(y)?;
        let xt = self.a_inv(&self.input_map(yt))?;
        let k_hat = y * &xinv;
        let rs = crate::lyap_kernel::dense::sym_sqrt(&self.plant.r);
        let d = rs * (yt - k_hat * xt) * sym_inv_sqrt(&x)?;
        Ok(2.0 * d.norm_squared())
    }

    /// `Y = (K − K⁰) X(K)`.
    pub fn y_from_k(&self, k: &Mat) -> Result<YPoint> {
        let g = Gain::new(&self.plant, k.clone())?;
        let x = g.certificate()?.x.clone();
        let y = (k - &self.k0) * &x;
        Ok(YPoint { y, x, feasible: true, shift: self.shift.clone() })
    }

    /// `K = K⁰ + Y X(Y)⁻¹`.
    pub fn k_from_y(&self, y: &Mat) -> Result<Gain> {
        let (_, xinv) = self.require_feasible(y)?;
        Gain::new(&self.plant, &self.k0 + y * xinv)
    }

    /// `g(K) = (K̂ 𝒜⁻¹(ℬ(∇h)) − ∇h) X⁻¹`, the gain-space image of the `Y`-gradient flow.
    pub fn induced_vector_field(&self, k: &Mat) -> Result<Mat> {
        let pt = self.y_from_k(k)?;
        let gh = self.grad_h(&pt.y)?;
        let xinv = spd_inverse("X(K)", &pt.x)?;
        let k_hat = k - &self.k0;
        let dx = self.a_inv(&self.input_map(&gh))?;
        Ok((k_hat * dx - gh) * xinv)
    }
}

fn is_feasible(x: &Mat) -> bool {
    let tr = x.trace();
    tr > 0.0 && min_eig(x) > FEASIBILITY_TOL * tr
}

/// A point of the convex parameterization with its covariance.
#[derive(Debug, Clone)]
pub struct YPoint {
    pub y: Mat,
    pub x: Mat,
    pub feasible: bool,
    pub shift: Option<Shift>,
}

pub fn x_of_y(plant: &Plant, y: &Mat, shift: Option<&Shift>) -> Result<YPoint> {
    ConvexModel::new(plant, shift)?.point(y)
}

pub fn h_cost(plant: &Plant, y: &Mat, shift: Option<&Shift>) -> Result<f64> {
    Ok(ConvexModel::new(plant, shift)?.h(y))
}

pub fn grad_h(plant: &Plant, y: &Mat, shift: Option<&Shift>) -> Result<Mat> {
    ConvexModel::new(plant, shift)?.grad_h(y)
}

pub fn hessian_h_quadratic_form(plant: &Plant, y: &Mat, yt: &Mat, shift: Option<&Shift>) -> Result<f64> {
    ConvexModel::new(plant, shift)?.hessian_h(y, yt)
}

pub fn y_from_k(plant: &Plant, k: &Mat, shift: Option<&Shift>) -> Result<YPoint> {
    ConvexModel::new(plant, shift)?.y_from_k(k)
}

pub fn k_from_y(plant: &Plant, y: &Mat, shift: Option<&Shift>) -> Result<Gain> {
    ConvexModel::new(plant, shift)?.k_from_y(y)
}

pub fn induced_vector_field(plant: &Plant, k: &Mat, shift: Option<&Shift>) -> Result<Mat> {
    ConvexModel::new(plant, shift)?.induced_vector_field(k)
}

/// `(‖∇h(Y(K))‖_F², ⟨−∇f(K), g(K)⟩)`; equal up to rounding.
pub fn geometric_identity(plant: &Plant, k: &Mat, shift: Option<&Shift>) -> Result<(f64, f64)> {
    let model = ConvexModel::new(plant, shift)?;
    let pt = model.y_from_k(k)?;
    let gh = model.grad_h(&pt.y)?;
    let g = model.induced_vector_field(k)?;
    let gain = Gain::new(plant, k.clone())?;
    let gf = gradient_from(plant, k, gain.certificate()?);
    Ok((gh.norm_squared(), -inner(&gf, &g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr_core::{lqr_cost, solve_riccati_kleinman};

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn scalar() -> Plant {
        Plant::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn scalar_affine_map() {
        let p = scalar();
        let pt = x_of_y(&p, &s(1.0), None).unwrap();
        assert!((pt.x[(0, 0)] - 0.5).abs() < 1e-15 && pt.feasible);
        let pt = x_of_y(&p, &s(0.25), None).unwrap();
        assert!((pt.x[(0, 0)] + 0.25).abs() < 1e-15 && !pt.feasible);
        let zero = Plant::scalar(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(x_of_y(&zero, &s(1.0), None).unwrap_err(), LqrError::SingularOperator);
    }

    #[test]
    fn scalar_cost_gradient_hessian() {
        let p = scalar();
        assert!((h_cost(&p, &s(1.0), None).unwrap() - 2.5).abs() < 1e-14);
        assert!(h_cost(&p, &s(0.25), None).unwrap().is_infinite());
        assert!((grad_h(&p, &s(1.0), None).unwrap()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((hessian_h_quadratic_form(&p, &s(1.0), &s(1.0), None).unwrap() - 4.0).abs() < 1e-13);
        assert_eq!(hessian_h_quadratic_form(&p, &s(1.0), &s(0.0), None).unwrap(), 0.0);
    }

    #[test]
    fn scalar_round_trip_and_field() {
        let p = scalar();
        let pt = y_from_k(&p, &s(2.0), None).unwrap();
        assert!((pt.y[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((k_from_y(&p, &pt.y, None).unwrap().k[(0, 0)] - 2.0).abs() < 1e-14);
        let g = induced_vector_field(&p, &s(2.0), None).unwrap();
        assert!((g[(0, 0)] - 2.0).abs() < 1e-14);
        let (lhs, rhs) = geometric_identity(&p, &s(2.0), None).unwrap();
        assert!((lhs - 1.0).abs() < 1e-14 && (rhs - 1.0).abs() < 1e-14);
    }

    #[test]
    fn optimum_is_stationary() {
        let p = scalar();
        let ric = solve_riccati_kleinman(&p, None).unwrap();
        let pt = y_from_k(&p, &ric.k_star, None).unwrap();
        assert!(grad_h(&p, &pt.y, None).unwrap().norm() < 1e-12);
        assert!(induced_vector_field(&p, &ric.k_star, None).unwrap().norm() < 1e-12);
    }

    #[test]
    fn shifted_identity_plant() {
        let i = Mat::identity(2, 2);
        let b = -&i;
        let p = Plant::new(Mat::zeros(2, 2), b, i.clone(), i.clone(), i.clone()).unwrap();
        assert_eq!(ConvexModel::new(&p, None).unwrap_err(), LqrError::SingularOperator);
        let shift = Shift { k0: -&i };
        let model = ConvexModel::new(&p, Some(&shift)).unwrap();
        let k = &i * -2.0;
        let pt = model.y_from_k(&k).unwrap();
        let want = lqr_cost(&p, &k).value();
        assert!((model.h(&pt.y) - want).abs() < 1e-12 * want);
        let back = model.k_from_y(&pt.y).unwrap();
        assert!((back.k - k).norm() < 1e-12);
    }
}
