//! Special functions and generic numerical kernels.

mod lambert;
mod ode;
mod quadrature;

pub use lambert::lambert_w0;
pub use ode::{rk4_fixed, rk4_refined, solve_ode, OdeGrid};
pub use quadrature::{integrate, integrate_panels, parallel_sum, QuadratureSpec};

use crate::real::Real;

/// `m` logarithmically spaced points between `lo` and `hi` inclusive.
pub fn logspace<R: Real>(lo: R, hi: R, m: usize) -> Vec<R> {
    if m == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / R::from_usize_lossy(m - 1);
    (0..m)
        .map(|i| {
            if i + 1 == m {
                hi
            } else {
                (a + step * R::from_usize_lossy(i)).exp()
            }
        })
        .collect()
}

/// Ordinary least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
