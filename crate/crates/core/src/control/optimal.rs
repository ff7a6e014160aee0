use crate::error::{Error, Result};
use crate::numerics::{solve_ode, OdeGrid, QuadratureSpec};
use crate::schedules::{Curve, NoiseSchedule, Tabulated};
use crate::targets::GaussianTarget;

/// Nodes of the tabulated `g*`.
pub const OPTIMAL_G_NODES: usize = 2001;

/// `(Σ a_i, Σ a_i², Σ a_i³)` for `a_i = 1/(α² λ_i + σ²)`.
fn spectral_sums(target: &GaussianTarget, alpha: f64, sigma2: f64) -> Result<(f64, f64, f64)> {
    let spec = target.precision_spectrum(alpha, sigma2)?;
    Ok(spec
        .iter()
        .fold((0.0, 0.0, 0.0), |(j, h, c), a| (j + a, h + a * a, c + a * a * a)))
}

/// The Euler-Lagrange optimal diffusion rate for a Gaussian target and fixed drift.
///
/// Solves `σ²' = −2fσ² + λ TrA/TrA²` with `A = (α²Σ + σ²I)^{-1}` and returns the
/// tabulated pair `(f, g*)`, `g* = λ TrA/TrA²`, whose Fisher trajectory has
/// constant `2f − J'/J = λ`. Slopes of `g*` are analytic.
pub fn optimal_g_gaussian(target: &GaussianTarget, f: Curve<f64>, lambda: f64, horizon: f64) -> Result<NoiseSchedule<f64>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::validation("lambda", "must be positive and finite"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::validation("T", "must be positive and finite"));
    }
    let grid = OdeGrid::uniform(0.0, horizon, OPTIMAL_G_NODES)?;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let (j, h, _) = spectral_sums(target, (-y[0]).exp(), y[1])?;
        let ft = f(t);
        dy[0] = ft;
        dy[1] = -2.0 * ft * y[1] + lambda * j / h;
        Ok(())
    };
    let rows = solve_ode(rhs, &[0.0, 0.0], &grid, &QuadratureSpec::default())?;

    let delta = horizon * 1e-6;
    let mut table = Tabulated {
        t: grid.points().to_vec(),
        f: Vec::with_capacity(OPTIMAL_G_NODES),
        df: Vec::with_capacity(OPTIMAL_G_NODES),
        g: Vec::with_capacity(OPTIMAL_G_NODES),
        dg: Vec::with_capacity(OPTIMAL_G_NODES),
    };
    for (&t, y) in grid.points().iter().zip(&rows) {
        let (j, h, c) = spectral_sums(target, (-y[0]).exp(), y[1])?;
        let ft = f(t);
        let g = lambda * j / h;
        let dj = 2.0 * ft * j - g * h;
        let dh = 4.0 * ft * h - 2.0 * g * c;
        let (lo, hi) = ((t - delta).max(0.0), (t + delta).min(horizon));
        table.f.push(ft);
        table.df.push((f(hi) - f(lo)) / (hi - lo));
        table.g.push(g);
        table.dg.push(lambda * (dj * h - j * dh) / (h * h));
    }
    if let Some(i) = table.g.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric("optimal_g_gaussian", table.t[i], "g* is not finite"));
    }
    NoiseSchedule::tabulated(table, horizon)
}

/// `2f − J'/J − λ` along a schedule, with `J'/J = 2f − gH/J` from the Fisher
/// ODE and `(J, H)` at the schedule's own marginal coefficients.
pub fn euler_lagrange_residual(
    schedule: &NoiseSchedule<f64>,
    target: &GaussianTarget,
    lambda: f64,
    grid: &OdeGrid<f64>,
) -> Result<Vec<f64>> {
    grid.points()
        .iter()
        .map(|&t| {
            let m = schedule.marginal_coeffs(t)?;
            let (j, h, _) = spectral_sums(target, m.alpha, m.sigma2)?;
            Ok(schedule.g(t) * h / j - lambda)
        })
        .collect()
}
