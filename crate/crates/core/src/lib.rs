//! Optimal-control noise schedules for diffusion models.
//!
//! Layers, bottom up: [`numerics`] kernels, [`schedules`] for `(f, g)` pairs and
//! their marginals, [`targets`] with analytic scores and Fisher information,
//! [`control`] for the Fisher ODE, λ solvers and error bounds, [`sampler`] for
//! the exponential-integrator reverse chain, and [`evaluation`] for exact KL
//! and the experiment harness.
//!
//! The numerics and schedule layers are generic over [`Real`] (`f32`/`f64`);
//! everything from [`targets`] up works in `f64`, and the aliases below fix
//! the scalar for that use.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod evaluation;
pub mod numerics;
pub mod real;
pub mod sampler;
pub mod schedules;
pub mod targets;

pub use error::{Error, Result, Violation};
pub use real::{Extended, Real};

/// Double-precision schedule used by the linear-algebra layers.
pub type Schedule = schedules::NoiseSchedule<f64>;
pub type Marginals = schedules::MarginalCoeffs<f64>;
pub type Acs = schedules::AcsParams<f64>;
pub type Catalog = schedules::CatalogParams<f64>;
pub type Quadrature = numerics::QuadratureSpec<f64>;
pub type Grid = numerics::OdeGrid<f64>;
