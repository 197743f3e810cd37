//! Diffusion limit: the variable-coefficient heat equation
//! `∂t u - ∇·(κ ∇u) = 0`, `κ = 1/(d a)`, its inverse elliptic operator, and a
//! dense Dirichlet eigensolver.

mod eigen;
mod elliptic;
mod heat;

pub use eigen::{eigendecompose, EigenBasis, DENSE_LIMIT};
pub use elliptic::{
    h_minus1_norm, h_minus1_norm_sq, solve_elliptic, solve_elliptic_with_stats, solve_shifted, CgStats,
    EllipticOperator, CG_TOLERANCE,
};
pub use heat::{heat_step, heat_step_with_stats, run_heat, HeatRun, HeatScheme};
