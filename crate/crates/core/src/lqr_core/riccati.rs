use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{Gain, Plant};
use crate::error::{LqrError, Result};
use crate::lyap_kernel::dense::{inner, spd_inverse, symmetrize};
use crate::lyap_kernel::{Mat, SchurForm};

pub const KLEINMAN_MAX_ITERS: usize = 200;
const KLEINMAN_STEP_TOL: f64 = 1e-12;

/// Stabilizing solution of the algebraic Riccati equation.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p_star: Mat,
    pub k_star: Mat,
    /// `‖AᵀP + PA + Q − P B R⁻¹ Bᵀ P‖_F`.
    pub residual: f64,
    pub iterations: usize,
    /// Gains visited, starting with the initial one.
    pub gains: Vec<Mat>,
    /// Costs along `gains`.
    pub costs: Vec<f64>,
    /// Whether every iterate lowered (or kept) the cost.
    pub monotone: bool,
}

impl RiccatiSolution {
    pub fn f_star(&self, plant: &Plant) -> f64 {
        inner(&self.p_star, &plant.omega)
    }
}

pub fn are_residual(plant: &Plant, p: &Mat) -> Result<f64> {
    let rinv = spd_inverse("R", &plant.r)?;
    let res = plant.a.transpose() * p + p * &plant.a + &plant.q
        - p * &plant.b * rinv * plant.b.transpose() * p;
    Ok(res.norm())
}

/// `R⁻¹ Bᵀ P(K)`.
pub fn kleinman_step(plant: &Plant, k: &Mat) -> Result<Mat> {
    let g = Gain::new(plant, k.clone())?;
    let p = &g.certificate()?.p;
    solve_r(plant, &(plant.b.transpose() * p))
}

fn solve_r(plant: &Plant, rhs: &Mat) -> Result<Mat> {
    let chol = plant
        .r
        .clone()
        .cholesky()
        .ok_or_else(|| LqrError::NotPositiveDefinite("R".into()))?;
    Ok(chol.solve(rhs))
}

/// Kleinman iteration `K ← R⁻¹ Bᵀ P(K)` from `k0`, or from a synthesized
/// stabilizing gain when none is given.
pub fn solve_riccati_kleinman(plant: &Plant, k0: Option<&Mat>) -> Result<RiccatiSolution> {
    let mut k = match k0 {
        Some(k) => k.clone(),
        None => initial_stabilizing_gain(plant)?,
    };
    let mut gain = Gain::new(plant, k.clone())?;
    gain.certificate()?;
    let mut gains = vec![k.clone()];
    let mut costs = vec![gain.certificate()?.f];
    let mut monotone = true;
    let mut last_step = f64::INFINITY;
    for it in 1..=KLEINMAN_MAX_ITERS {
        let next = solve_r(plant, &(plant.b.transpose() * &gain.certificate()?.p))?;
        let next_gain = Gain::new(plant, next.clone())?;
        let f_next = next_gain.certificate()?.f;
        let f_prev = *costs.last().expect("nonempty");
        if f_next > f_prev + 1e-12 * f_prev.abs().max(1.0) {
            monotone = false;
        }
        last_step = (&next - &k).norm();
        let converged = last_step <= KLEINMAN_STEP_TOL * (1.0 + k.norm());
        k = next;
        gain = next_gain;
        gains.push(k.clone());
        costs.push(f_next);
        if converged {
            let p_star = gain.certificate()?.p.clone();
            let residual = are_residual(plant, &p_star)?;
            return Ok(RiccatiSolution {
                p_star,
                k_star: k,
                residual,
                iterations: it,
                gains,
                costs,
                monotone,
            });
        }
    }
    Err(LqrError::NoConvergence { iterations: KLEINMAN_MAX_ITERS, last_step })
}

/// Swaps the adjacent diagonal entries `k`, `k+1` of an upper-triangular `T`,
/// updating the unitary factor so that `U T Uᴴ` is unchanged.
fn swap_adjacent(u: &mut DMatrix<Complex64>, t: &mut DMatrix<Complex64>, k: usize) {
    let n = t.nrows();
    let (a, b, t12) = (t[(k, k)], t[(k + 1, k + 1)], t[(k, k + 1)]);
    let (x1, x2) = (t12, b - a);
    let norm = (x1.norm_sqr() + x2.norm_sqr()).sqrt();
    if norm == 0.0 {
        return;
    }
    let (c1, c2) = (x1 / norm, x2 / norm);
    // G = [[c1, −c̄2], [c2, c̄1]] has the b-eigenvector as its first column.
    let g = [[c1, -c2.conj()], [c2, c1.conj()]];
    for j in 0..n {
        let (r0, r1) = (t[(k, j)], t[(k + 1, j)]);
        t[(k, j)] = g[0][0].conj() * r0 + g[1][0].conj() * r1;
        t[(k + 1, j)] = g[0][1].conj() * r0 + g[1][1].conj() * r1;
    }
    for i in 0..n {
        let (c0, c1_) = (t[(i, k)], t[(i, k + 1)]);
        t[(i, k)] = c0 * g[0][0] + c1_ * g[1][0];
        t[(i, k + 1)] = c0 * g[0][1] + c1_ * g[1][1];
        let (u0, u1) = (u[(i, k)], u[(i, k + 1)]);
        u[(i, k)] = u0 * g[0][0] + u1 * g[1][0];
        u[(i, k + 1)] = u0 * g[0][1] + u1 * g[1][1];
    }
    t[(k + 1, k)] = Complex64::new(0.0, 0.0);
}

/// Stabilizing ARE solution by the ordered Schur form of the Hamiltonian
/// `[[A, −B R⁻¹ Bᵀ], [−Q, −Aᵀ]]`.
pub fn care_hamiltonian(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let rinv = spd_inverse("R", r)?;
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&-(b * rinv * b.transpose()));
    h.view_mut((n, 0), (n, n)).copy_from(&-q);
    h.view_mut((n, n), (n, n)).copy_from(&-a.transpose());
    let (mut u, mut t) = SchurForm::new(&h)?.into_parts();
    let scale = h.norm().max(1.0);
    let stable = |z: Complex64| z.re < -1e-12 * scale;
    let count = (0..2 * n).filter(|&i| stable(t[(i, i)])).count();
    if count != n {
        return Err(LqrError::Synthesis(format!(
            "Hamiltonian has {count} stable eigenvalues, expected {n} (imaginary-axis eigenvalues)"
        )));
    }
    let mut placed = 0;
    for i in 0..2 * n {
        if stable(t[(i, i)]) {
            for k in (placed..i).rev() {
                swap_adjacent(&mut u, &mut t, k);
            }
            placed += 1;
        }
    }
    let u11 = u.view((0, 0), (n, n)).into_owned();
    let u21 = u.view((n, 0), (n, n)).into_owned();
    let inv = u11
        .try_inverse()
        .ok_or_else(|| LqrError::Synthesis("stable invariant subspace is not a graph".into()))?;
    let p = (u21 * inv).map(|z| z.re);
    Ok(symmetrize(&p))
}

/// `K = 0` when `A` is Hurwitz; otherwise the optimal gain of the auxiliary
/// problem with `Q = I`, `R = I`.
pub fn initial_stabilizing_gain(plant: &Plant) -> Result<Mat> {
    let (n, m) = (plant.n(), plant.m());
    if plant.open_loop_hurwitz()? {
        return Ok(Mat::zeros(m, n));
    }
    let p = care_hamiltonian(&plant.a, &plant.b, &Mat::identity(n, n), &Mat::identity(m, m))?;
    let k = plant.b.transpose() * p;
    let g = Gain::new(plant, k.clone())?;
    if !g.stabilizing() {
        return Err(LqrError::Synthesis(format!(
            "auxiliary Riccati gain leaves closed-loop abscissa {:e}",
            g.margin
        )));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn scalar_optimum() {
        let p = Plant::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let sol = solve_riccati_kleinman(&p, None).unwrap();
        let want = 1.0 + 2f64.sqrt();
        assert!((sol.k_star[(0, 0)] - want).abs() < 1e-12);
        assert!((sol.p_star[(0, 0)] - want).abs() < 1e-12);
        assert!(sol.residual <= 1e-9);
        assert!(sol.monotone);
    }

    #[test]
    fn scalar_iterates_from_two() {
        let p = Plant::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let sol = solve_riccati_kleinman(&p, Some(&s(2.0))).unwrap();
        assert!((sol.gains[1][(0, 0)] - 2.5).abs() < 1e-14);
        assert!((sol.gains[2][(0, 0)] - 2.416_666_666_666_667).abs() < 1e-12);
        assert!((kleinman_step(&p, &s(2.0)).unwrap()[(0, 0)] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn identity_plant_optimum() {
        let i = Mat::identity(2, 2);
        let p = Plant::new(Mat::zeros(2, 2), i.clone(), i.clone(), i.clone(), i.clone()).unwrap();
        let sol = solve_riccati_kleinman(&p, None).unwrap();
        assert!((&sol.p_star - &i).norm() < 1e-12);
        assert!((&sol.k_star - &i).norm() < 1e-12);
    }

    #[test]
    fn hamiltonian_matches_closed_form() {
        let p = care_hamiltonian(&s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((p[(0, 0)] - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 3.0, 1.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = Mat::identity(2, 2);
        let r = Mat::identity(1, 1);
        let pm = care_hamiltonian(&a, &b, &q, &r).unwrap();
        let res = a.transpose() * &pm + &pm * &a + &q - &pm * &b * b.transpose() * &pm;
        assert!(res.norm() < 1e-10);
    }

    #[test]
    fn unstable_open_loop_bootstrap() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 0.5]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let p = Plant::new(a, b, Mat::identity(2, 2), Mat::identity(1, 1), Mat::identity(2, 2)).unwrap();
        let k0 = initial_stabilizing_gain(&p).unwrap();
        assert!(Gain::new(&p, k0).unwrap().stabilizing());
        let sol = solve_riccati_kleinman(&p, None).unwrap();
        assert!(sol.residual <= 1e-9 * p.q.norm());
    }
}
