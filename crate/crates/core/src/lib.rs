//! Continuous-time LQR optimization laboratory.
//!
//! Exact model-based solvers (Kleinman/Riccati, gradient flow and descent on
//! gains, descent on the convex `Y = K X` parameterization), a model-free
//! random-search pipeline built on two-point zeroth-order gradient
//! estimates, and evaluators for the constants that certify convergence.

pub mod bench;
pub mod certificates;
pub mod convex_param;
pub mod error;
pub mod lqr_core;
pub mod lyap_kernel;
pub mod optimizers;
pub mod parallel;
pub mod sim_engine;
pub mod zeroth_order;

pub use error::{LqrError, Result};
pub use lyap_kernel::Mat;
