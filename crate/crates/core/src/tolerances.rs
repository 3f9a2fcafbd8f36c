//! Numerical thresholds shared by the solvers, certifiers and test suites.

/// KKT residual required of the optimization oracle.
pub const ORACLE_KKT: f64 = 1e-9;
/// KKT residual required of a converged closed-loop equilibrium.
pub const TRAJECTORY_KKT: f64 = 1e-6;
/// Inter-area export mismatch accepted at a trajectory equilibrium.
pub const AREA_EXPORT: f64 = 1e-5;
/// Thermal bound overshoot accepted at a trajectory equilibrium.
pub const THERMAL: f64 = 1e-6;
/// Per-step slack allowed when checking that the Lyapunov function decreases.
pub const LYAPUNOV_STEP_SLACK: f64 = 1e-7;
/// Relative step used by central finite differences.
pub const FD_STEP: f64 = 1e-6;
/// Accepted relative error for gradients against finite differences.
pub const FD_GRADIENT: f64 = 1e-6;
/// Accepted relative error for Jacobians and Hessians against finite differences.
pub const FD_SECOND_ORDER: f64 = 1e-5;
/// Accepted relative error between the closed loop and the primal-dual field.
pub const FIELD_EQUIVALENCE: f64 = 1e-9;
/// Largest eigenvalue tolerated when a matrix is claimed negative semidefinite.
pub const SEMIDEFINITE: f64 = 1e-9;
/// Residual of the scalar load-frequency equation.
pub const ROOT_RESIDUAL: f64 = 1e-12;
/// Kron reduction edge filter: smaller off-diagonal entries are treated as zero.
pub const KRON_FILL: f64 = 1e-12;
/// Equilibrium detection threshold on the closed-loop field.
pub const EQUILIBRIUM: f64 = 1e-8;
/// Relative step used when computing finite-difference steps.
pub fn fd_step(value: f64) -> f64 {
    FD_STEP * value.abs().max(1.0)
}
