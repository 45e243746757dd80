//! Continuous Lyapunov and Sylvester solves on the complex Schur form.
//!
//! `F = U T Uᴴ` with `T` upper triangular. The equation `F X + X Fᵀ + W = 0`
//! becomes `T Y + Y Tᴴ = −Uᴴ W U` for `Y = Uᴴ X U`, which is solved one
//! column at a time by triangular substitution. The adjoint equation and the
//! general Sylvester equation follow the same pattern.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use super::dense::{check_finite, check_shape, check_square, symmetrize, Mat};
use crate::error::{LqrError, Result};

type CMat = DMatrix<Complex64>;

/// Real parts of all eigenvalues must be below `-HURWITZ_TOL` to count as stable.
pub const HURWITZ_TOL: f64 = 1e-10;

/// Relative residual demanded of every Lyapunov solve.
pub const LYAPUNOV_RTOL: f64 = 1e-10;

const SEPARATION_WARN: f64 = 1e-8;
const SEPARATION_FAIL: f64 = 1e-14;

fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

fn real_part(m: &CMat) -> Mat {
    m.map(|z| z.re)
}

/// Complex Schur factorization `F = U T Uᴴ`.
#[derive(Debug, Clone)]
pub struct SchurForm {
    u: CMat,
    t: CMat,
}

impl SchurForm {
    pub fn new(f: &Mat) -> Result<Self> {
        let n = check_square("F", f)?;
        check_finite("F", f)?;
        if n == 1 {
            return Ok(Self { u: CMat::identity(1, 1), t: to_complex(f) });
        }
        let schur = Schur::try_new(to_complex(f), f64::EPSILON, 10_000 * n)
            .ok_or(LqrError::EigenFailure)?;
        let (u, mut t) = schur.unpack();
        for j in 0..n {
            for i in (j + 1)..n {
                t[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        if t.iter().chain(u.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LqrError::EigenFailure);
        }
        Ok(Self { u, t })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    /// Unitary factor `U` and triangular factor `T`.
    pub fn into_parts(self) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        (self.u, self.t)
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.dim()).map(|i| self.t[(i, i)]).collect()
    }

    /// Largest real part over the spectrum.
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Outcome of a Hurwitz test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurwitzReport {
    pub stable: bool,
    /// Largest real part among the eigenvalues.
    pub margin: f64,
}

pub fn hurwitz(f: &Mat) -> Result<HurwitzReport> {
    let margin = SchurForm::new(f)?.spectral_abscissa();
    Ok(HurwitzReport { stable: margin < -HURWITZ_TOL, margin })
}

pub fn is_hurwitz(f: &Mat) -> Result<bool> {
    Ok(hurwitz(f)?.stable)
}

/// A solved Lyapunov equation together with its quality indicators.
#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub x: Mat,
    pub relative_residual: f64,
    /// Set when two eigenvalues nearly satisfy `λᵢ + λ̄ⱼ = 0`.
    pub ill_conditioned: bool,
}

/// Reusable factorization for `F X + X Fᵀ + W = 0` and `Fᵀ P + P F + W = 0`.
///
/// No stability requirement: any `F` without eigenvalue pairs summing to
/// zero is accepted.
#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    schur: SchurForm,
    separation: f64,
    scale: f64,
}

impl LyapunovSolver {
    pub fn new(f: &Mat) -> Result<Self> {
        Self::from_schur(SchurForm::new(f)?)
    }

    pub fn from_schur(schur: SchurForm) -> Result<Self> {
        let eig = schur.eigenvalues();
        let scale = schur.t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut separation = f64::INFINITY;
        for a in &eig {
            for b in &eig {
                separation = separation.min((a + b.conj()).norm());
            }
        }
        if separation <= SEPARATION_FAIL * scale {
            return Err(LqrError::Singular(format!(
                "Lyapunov operator is singular (eigenvalue separation {separation:e})"
            )));
        }
        Ok(Self { schur, separation, scale })
    }

    pub fn schur(&self) -> &SchurForm {
        &self.schur
    }

    pub fn ill_conditioned(&self) -> bool {
        self.separation < SEPARATION_WARN * self.scale
    }

    /// Solves `F X + X Fᵀ + W = 0`.
    pub fn solve(&self, w: &Mat) -> Result<Mat> {
        let n = self.schur.dim();
        check_shape("W", w, n, n)?;
        let (u, t) = (&self.schur.u, &self.schur.t);
        let c = -(u.adjoint() * to_complex(w) * u);
        let mut y = CMat::zeros(n, n);
        for j in (0..n).rev() {
            let mut rhs = c.column(j).into_owned();
            for k in (j + 1)..n {
                let coef = t[(j, k)].conj();
                for i in 0..n {
                    rhs[i] -= coef * y[(i, k)];
                }
            }
            let shift = t[(j, j)].conj();
            for i in (0..n).rev() {
                let mut acc = rhs[i];
                for l in (i + 1)..n {
                    acc -= t[(i, l)] * y[(l, j)];
                }
                y[(i, j)] = acc / (t[(i, i)] + shift);
            }
        }
        Ok(symmetrize(&real_part(&(u * y * u.adjoint()))))
    }

    /// Solves `Fᵀ P + P F + W = 0`.
    pub fn solve_adjoint(&self, w: &Mat) -> Result<Mat> {
        let n = self.schur.dim();
        check_shape("W", w, n, n)?;
        let (u, t) = (&self.schur.u, &self.schur.t);
        let c = -(u.adjoint() * to_complex(w) * u);
        let mut z = CMat::zeros(n, n);
        for j in 0..n {
            let mut rhs = c.column(j).into_owned();
            for k in 0..j {
                let coef = t[(k, j)];
                for i in 0..n {
                    rhs[i] -= coef * z[(i, k)];
                }
            }
            let shift = t[(j, j)];
            for i in 0..n {
                let mut acc = rhs[i];
                for l in 0..i {
                    acc -= t[(l, i)].conj() * z[(l, j)];
                }
                z[(i, j)] = acc / (t[(i, i)].conj() + shift);
            }
        }
        Ok(symmetrize(&real_part(&(u * z * u.adjoint()))))
    }
}

/// `‖F X + X Fᵀ + W‖_F`.
pub fn lyapunov_residual(f: &Mat, x: &Mat, w: &Mat) -> f64 {
    (f * x + x * f.transpose() + w).norm()
}

fn relative(residual: f64, w: &Mat) -> f64 {
    let s = w.norm();
    if s == 0.0 {
        residual
    } else {
        residual / s
    }
}

fn require_hurwitz(f: &Mat, schur: &SchurForm) -> Result<()> {
    check_finite("F", f)?;
    let margin = schur.spectral_abscissa();
    if margin < -HURWITZ_TOL {
        Ok(())
    } else {
        Err(LqrError::Unstable { margin })
    }
}

fn check_symmetric(w: &Mat) -> Result<()> {
    check_finite("W", w)?;
    let asym = (w - w.transpose()).norm();
    if asym > 1e-10 * w.norm().max(1.0) {
        return Err(LqrError::InvalidArgument(format!("W is not symmetric (asymmetry {asym:e})")));
    }
    Ok(())
}

/// Solves `F X + X Fᵀ + W = 0` for Hurwitz `F`, reporting residual and conditioning.
pub fn solve_lyapunov_detailed(f: &Mat, w: &Mat) -> Result<LyapunovSolution> {
    let n = check_square("F", f)?;
    check_shape("W", w, n, n)?;
    check_symmetric(w)?;
    if n == 1 {
        let a = f[(0, 0)];
        if !(a < -HURWITZ_TOL) {
            return Err(LqrError::Unstable { margin: a });
        }
        let x = Mat::from_element(1, 1, -w[(0, 0)] / (2.0 * a));
        let r = relative(lyapunov_residual(f, &x, w), w);
        return Ok(LyapunovSolution { x, relative_residual: r, ill_conditioned: false });
    }
    let schur = SchurForm::new(f)?;
    require_hurwitz(f, &schur)?;
    let solver = LyapunovSolver::from_schur(schur)?;
    let x = solver.solve(w)?;
    let r = relative(lyapunov_residual(f, &x, w), w);
    Ok(LyapunovSolution { x, relative_residual: r, ill_conditioned: solver.ill_conditioned() })
}

/// Solves `F X + X Fᵀ + W = 0` for Hurwitz `F`.
pub fn solve_lyapunov(f: &Mat, w: &Mat) -> Result<Mat> {
    Ok(solve_lyapunov_detailed(f, w)?.x)
}

/// Solves `Fᵀ P + P F + W = 0` for Hurwitz `F`.
pub fn solve_adjoint_lyapunov(f: &Mat, w: &Mat) -> Result<Mat> {
    let n = check_square("F", f)?;
    check_shape("W", w, n, n)?;
    check_symmetric(w)?;
    if n == 1 {
        let a = f[(0, 0)];
        if !(a < -HURWITZ_TOL) {
            return Err(LqrError::Unstable { margin: a });
        }
        return Ok(Mat::from_element(1, 1, -w[(0, 0)] / (2.0 * a)));
    }
    let schur = SchurForm::new(f)?;
    require_hurwitz(f, &schur)?;
    LyapunovSolver::from_schur(schur)?.solve_adjoint(w)
}

/// Solves the general Sylvester equation `A X + X B = C`.
pub fn solve_sylvester(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    let p = check_square("A", a)?;
    let q = check_square("B", b)?;
    check_shape("C", c, p, q)?;
    check_finite("C", c)?;
    let sa = SchurForm::new(a)?;
    let sb = SchurForm::new(b)?;
    let (u, t) = (&sa.u, &sa.t);
    let (v, s) = (&sb.u, &sb.t);
    let scale = t.iter().chain(s.iter()).map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let rhs_all = u.adjoint() * to_complex(c) * v;
    let mut y = CMat::zeros(p, q);
    for j in 0..q {
        let mut rhs = rhs_all.column(j).into_owned();
        for k in 0..j {
            let coef = s[(k, j)];
            for i in 0..p {
                rhs[i] -= coef * y[(i, k)];
            }
        }
        let shift = s[(j, j)];
        for i in (0..p).rev() {
            let mut acc = rhs[i];
            for l in (i + 1)..p {
                acc -= t[(i, l)] * y[(l, j)];
            }
            let d = t[(i, i)] + shift;
            if d.norm() <= SEPARATION_FAIL * scale {
                return Err(LqrError::Singular("Sylvester operator is singular".into()));
            }
            y[(i, j)] = acc / d;
        }
    }
    Ok(real_part(&(u * y * v.adjoint())))
}

/// Kronecker-vectorized solve of `F X + X Fᵀ + W = 0`; an independent oracle for `n ≤ 30`.
pub fn solve_lyapunov_kronecker(f: &Mat, w: &Mat) -> Result<Mat> {
    let n = check_square("F", f)?;
    check_shape("W", w, n, n)?;
    if n > 30 {
        return Err(LqrError::InvalidArgument("Kronecker oracle limited to n <= 30".into()));
    }
    let eye = Mat::identity(n, n);
    let op = eye.kronecker(f) + f.kronecker(&eye);
    let rhs = -nalgebra::DVector::from_column_slice(w.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LqrError::Singular("Kronecker Lyapunov operator".into()))?;
    Ok(symmetrize(&Mat::from_column_slice(n, n, sol.as_slice())))
}
