//! Benchmark plants.

use serde::Serialize;

use crate::error::{LqrError, Result};
use crate::lqr_core::{hessian_quadratic_form, lqr_cost, Plant};
use crate::lyap_kernel::Mat;

/// Mass-spring-damper chain with `s` unit masses.
#[derive(Debug, Clone)]
pub struct MassSpringSpec {
    pub masses: usize,
    pub q: Mat,
    pub r: Mat,
    pub omega: Mat,
}

impl MassSpringSpec {
    /// `Q = R = Ω = I`.
    pub fn identity(masses: usize) -> Self {
        let n = 2 * masses;
        Self { masses, q: Mat::identity(n, n), r: Mat::identity(masses, masses), omega: Mat::identity(n, n) }
    }

    /// `Q = I + 100 e₁e₁ᵀ`, `R = I + 1000 e₄e₄ᵀ`, `Ω = I`.
    pub fn weighted(masses: usize) -> Self {
        let mut spec = Self::identity(masses);
        spec.q[(0, 0)] += 100.0;
        if masses >= 4 {
            spec.r[(3, 3)] += 1000.0;
        }
        spec
    }
}

/// `T` tridiagonal Toeplitz with 2 on the diagonal and −1 beside it.
pub fn toeplitz_chain(s: usize) -> Mat {
    Mat::from_fn(s, s, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    })
}

/// `A = [[0, I], [−T, −T]]`, `B = [0; I]`.
pub fn mass_spring_dynamics(s: usize) -> (Mat, Mat) {
    let t = toeplitz_chain(s);
    let mut a = Mat::zeros(2 * s, 2 * s);
    a.view_mut((0, s), (s, s)).fill_with_identity();
    a.view_mut((s, 0), (s, s)).copy_from(&-&t);
    a.view_mut((s, s), (s, s)).copy_from(&-&t);
    let mut b = Mat::zeros(2 * s, s);
    b.view_mut((s, 0), (s, s)).fill_with_identity();
    (a, b)
}

pub fn make_mass_spring(spec: &MassSpringSpec) -> Result<Plant> {
    if spec.masses == 0 {
        return Err(LqrError::InvalidArgument("mass-spring chain needs at least one mass".into()));
    }
    let (a, b) = mass_spring_dynamics(spec.masses);
    let plant = Plant::new(a, b, spec.q.clone(), spec.r.clone(), spec.omega.clone())?;
    if !plant.open_loop_hurwitz()? {
        return Err(LqrError::Unstable { margin: f64::NAN });
    }
    Ok(plant)
}

/// `A = 0`, `B = −I`, `Q = R = Ω = I` in two dimensions.
pub fn nonconvex_plant() -> Plant {
    let i = Mat::identity(2, 2);
    Plant::new(Mat::zeros(2, 2), -&i, i.clone(), i.clone(), i).expect("valid plant")
}

/// Endpoints `K₁`, `K₂` and midpoint `K₃` of the segment along which `f` is not convex.
pub fn nonconvex_gains(eps: f64) -> (Mat, Mat, Mat) {
    let c = 2.0 - 2.0 * eps;
    let k1 = Mat::from_row_slice(2, 2, &[-1.0, c, 0.0, -1.0]);
    let k2 = Mat::from_row_slice(2, 2, &[-1.0, 0.0, c, -1.0]);
    let k3 = (&k1 + &k2) * 0.5;
    (k1, k2, k3)
}

#[derive(Debug, Clone, Serialize)]
pub struct NonconvexDemo {
    pub eps: f64,
    /// `(γ, f(γK₁ + (1 − γ)K₂))`.
    pub curve: Vec<(f64, f64)>,
    pub cost_k1: f64,
    pub cost_k2: f64,
    pub cost_k3: f64,
    /// `⟨J, ∇²f(K₃; J)⟩` with `J = (K₁ − K₂)/‖K₁ − K₂‖_F`.
    pub hessian_k3: f64,
    /// Second difference of `γ ↦ f(K(γ))` at `γ = 1/2`, rescaled to unit `J`.
    pub second_difference_k3: f64,
}

pub fn nonconvex_demo(eps: f64, grid: usize) -> Result<NonconvexDemo> {
    if grid < 2 {
        return Err(LqrError::InvalidArgument("grid needs at least two points".into()));
    }
    let plant = nonconvex_plant();
    let (k1, k2, k3) = nonconvex_gains(eps);
    let along = |g: f64| &k1 * g + &k2 * (1.0 - g);
    let curve = (0..grid)
        .map(|i| {
            let g = i as f64 / (grid - 1) as f64;
            (g, lqr_cost(&plant, &along(g)).value())
        })
        .collect();
    let d = &k1 - &k2;
    let j = &d / d.norm();
    let hessian_k3 = hessian_quadratic_form(&plant, &k3, &j, None)?;
    let dg = 1e-3;
    let f = |g: f64| lqr_cost(&plant, &along(g)).value();
    let second = (f(0.5 + dg) - 2.0 * f(0.5) + f(0.5 - dg)) / (dg * dg) / d.norm_squared();
    Ok(NonconvexDemo {
        eps,
        curve,
        cost_k1: f(1.0),
        cost_k2: f(0.0),
        cost_k3: f(0.5),
        hessian_k3,
        second_difference_k3: second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mass_structure() {
        let p = make_mass_spring(&MassSpringSpec::identity(1)).unwrap();
        assert_eq!(p.a, Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -2.0]));
        assert_eq!(p.b, Mat::from_row_slice(2, 1, &[0.0, 1.0]));
    }

    #[test]
    fn chains_are_hurwitz() {
        for s in 1..=20 {
            assert!(make_mass_spring(&MassSpringSpec::identity(s)).is_ok(), "s = {s}");
        }
    }

    #[test]
    fn weighted_entries() {
        let spec = MassSpringSpec::weighted(10);
        assert_eq!(spec.q[(0, 0)], 101.0);
        assert_eq!(spec.r[(3, 3)], 1001.0);
        assert_eq!(spec.q.trace(), 120.0);
    }

    #[test]
    fn nonconvex_segment() {
        let demo = nonconvex_demo(0.1, 11).unwrap();
        assert!(demo.cost_k1.is_finite() && demo.cost_k2.is_finite());
        assert!((demo.cost_k3 - 6.263_157_894_736_837).abs() < 1e-9);
        assert!(demo.hessian_k3 < 0.0);
        assert!((demo.hessian_k3 - demo.second_difference_k3).abs() < 1e-3 * demo.hessian_k3.abs());
        let near = nonconvex_demo(0.01, 3).unwrap();
        assert!(near.cost_k3 > 10.0 * near.cost_k1.max(near.cost_k2));
    }
}
