use crate::error::{LqrError, Result};
use crate::lyap_kernel::dense::{check_finite, check_shape, check_square, min_eig, spectral_norm};
use crate::lyap_kernel::{hurwitz, Mat, SymOperatorRep};

const PD_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;

/// Problem data `(A, B, Q, R, Ω)` of the infinite-horizon LQR problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
    pub omega: Mat,
    /// Rank of `[B, AB, …, Aⁿ⁻¹B]`.
    pub controllability_rank: usize,
    pub warnings: Vec<String>,
}

fn check_pd(name: &str, m: &Mat) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-12 * m.norm().max(1.0) {
        return Err(LqrError::InvalidArgument(format!("{name} is not symmetric")));
    }
    let lo = min_eig(m);
    if !(lo > PD_TOL) {
        return Err(LqrError::NotPositiveDefinite(format!("{name} (smallest eigenvalue {lo:e})")));
    }
    Ok(())
}

fn controllability_rank(a: &Mat, b: &Mat) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = Mat::zeros(n, n * m);
    let mut block = b.clone();
    for i in 0..n {
        ctrb.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    let sv = ctrb.singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

impl Plant {
    pub fn new(a: Mat, b: Mat, q: Mat, r: Mat, omega: Mat) -> Result<Self> {
        let n = check_square("A", &a)?;
        if b.nrows() != n || b.ncols() == 0 {
            return Err(LqrError::Dimension(format!("B must be {n}xm with m >= 1")));
        }
        let m = b.ncols();
        check_shape("Q", &q, n, n)?;
        check_shape("R", &r, m, m)?;
        check_shape("Omega", &omega, n, n)?;
        for (name, mat) in [("A", &a), ("B", &b), ("Q", &q), ("R", &r), ("Omega", &omega)] {
            check_finite(name, mat)?;
        }
        check_pd("Q", &q)?;
        check_pd("R", &r)?;
        check_pd("Omega", &omega)?;
        let rank = controllability_rank(&a, &b);
        let mut warnings = Vec::new();
        if rank < n {
            warnings.push(format!("(A, B) is not controllable: rank {rank} < {n}"));
        }
        Ok(Self { a, b, q, r, omega, controllability_rank: rank, warnings })
    }

    /// One-state plant with `ẋ = a x + b u`.
    pub fn scalar(a: f64, b: f64, q: f64, r: f64, omega: f64) -> Result<Self> {
        let s = |v| Mat::from_element(1, 1, v);
        Self::new(s(a), s(b), s(q), s(r), s(omega))
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn controllable(&self) -> bool {
        self.controllability_rank == self.n()
    }

    /// `A − B K`.
    pub fn closed_loop(&self, k: &Mat) -> Mat {
        &self.a - &self.b * k
    }

    /// `Q + Kᵀ R K`.
    pub fn stage_weight(&self, k: &Mat) -> Mat {
        &self.q + k.transpose() * &self.r * k
    }

    pub fn open_loop_hurwitz(&self) -> Result<bool> {
        Ok(hurwitz(&self.a)?.stable)
    }

    pub fn lambda_min_q(&self) -> f64 {
        min_eig(&self.q)
    }

    pub fn lambda_min_r(&self) -> f64 {
        min_eig(&self.r)
    }

    pub fn lambda_min_omega(&self) -> f64 {
        min_eig(&self.omega)
    }

    pub fn norm_a(&self) -> f64 {
        spectral_norm(&self.a)
    }

    pub fn norm_b(&self) -> f64 {
        spectral_norm(&self.b)
    }

    /// Explicit representation of one of the plant's Lyapunov-type operators.
    pub fn operator(&self, kind: OperatorKind<'_>) -> Result<SymOperatorRep> {
        match kind {
            OperatorKind::ClosedLoop(k) | OperatorKind::AdjointClosedLoop(k) => {
                check_shape("K", k, self.m(), self.n())?;
                let f = self.closed_loop(k);
                let report = hurwitz(&f)?;
                if !report.stable {
                    return Err(LqrError::NotStabilizing { margin: report.margin });
                }
                Ok(match kind {
                    OperatorKind::ClosedLoop(_) => SymOperatorRep::lyapunov(&f),
                    _ => SymOperatorRep::adjoint_lyapunov(&f),
                })
            }
            OperatorKind::OpenA => Ok(SymOperatorRep::lyapunov(&self.a)),
            OperatorKind::OpenB => Ok(SymOperatorRep::input_map(&self.b)),
            OperatorKind::AinvB => {
                let a = SymOperatorRep::lyapunov(&self.a);
                if a.inverse_condition() <= RANK_TOL {
                    return Err(LqrError::SingularOperator);
                }
                a.inverse()?.compose(&SymOperatorRep::input_map(&self.b))
            }
        }
    }
}

/// Operators `𝒜_K`, `𝒜_K*`, `𝒜`, `ℬ` and `𝒜⁻¹ℬ`.
#[derive(Debug, Clone, Copy)]
pub enum OperatorKind<'a> {
    ClosedLoop(&'a Mat),
    AdjointClosedLoop(&'a Mat),
    OpenA,
    OpenB,
    AinvB,
}
