//! Fisher-information dynamics, Euler-Lagrange rate solvers, optimal schedule
//! synthesis and the error-bound evaluators.

mod bounds;
mod euler;
mod fisher;
mod hparams;
mod lambda;
mod optimal;

pub use bounds::{
    girsanov_bound_gaussian, girsanov_bound_on_times, kl_upper_bound, legacy_bound, stepsize_sufficient, BoundReport,
    LegacySchedule,
};
pub use euler::{euler_lagrange_audit, AuditConfig, AuditReport, PerturbationResult};
pub use fisher::{fisher_ode_solve, FisherTrajectory};
pub use hparams::{adaptive_params, hparam_solve, AcsHparams};
pub use lambda::{lambda_adaptive, lambda_from_boundary, lambda_from_drift_integral, LambdaSolve, Provenance, NO_NOISE_NEEDED};
pub use optimal::{euler_lagrange_residual, optimal_g_gaussian, OPTIMAL_G_NODES};
