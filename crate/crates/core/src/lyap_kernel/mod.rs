//! Dense kernels: Lyapunov/Sylvester solves, Hurwitz tests, matrix
//! exponentials and explicit representations of operators on 𝕊ⁿ.

pub mod dense;
mod expm;
mod lyapunov;
mod operator;

pub use dense::{Mat, Vector};
pub use expm::matrix_exponential;
pub use lyapunov::{
    hurwitz, is_hurwitz, lyapunov_residual, solve_adjoint_lyapunov, solve_lyapunov,
    solve_lyapunov_detailed, solve_lyapunov_kronecker, solve_sylvester, HurwitzReport,
    LyapunovSolution, LyapunovSolver, SchurForm, HURWITZ_TOL, LYAPUNOV_RTOL,
};
pub use operator::{
    operator_spectral_induced_norm_estimate, operator_two_norm, smat, svec, sym_dim, Domain,
    SymOperatorRep,
};
