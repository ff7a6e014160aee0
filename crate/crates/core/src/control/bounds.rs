use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fisher::FisherTrajectory;
use crate::error::{Error, Result};
use crate::numerics::{integrate, OdeGrid, QuadratureSpec};
use crate::real::Extended;
use crate::schedules::NoiseSchedule;
use crate::targets::{GaussianTarget, Target};

/// Adjacent Fisher values differing by more than this fraction make `J'/J` unreliable.
const MAX_RELATIVE_JUMP: f64 = 0.5;
/// Grid for extrema and minima in the step-size criterion.
const STEPSIZE_GRID: usize = 1000;

/// Named additive terms of an error bound.
///
/// Bounds that hold up to an absolute constant report that constant as 1
/// (`constants_policy = "unit"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub terms: BTreeMap<String, f64>,
    pub total: f64,
    pub constants_policy: String,
}

impl BoundReport {
    fn new(name: &str, terms: &[(&str, f64)]) -> Self {
        Self {
            bound_name: name.to_string(),
            terms: terms.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            total: terms.iter().map(|(_, v)| v).sum(),
            constants_policy: "unit".to_string(),
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.get(name).copied()
    }
}

/// Derivative of samples `u` at every node, second order on nonuniform grids.
pub(crate) fn log_derivative(t: &[f64], u: &[f64]) -> Vec<f64> {
    let m = t.len();
    if m == 2 {
        let s = (u[1] - u[0]) / (t[1] - t[0]);
        return vec![s, s];
    }
    let mut out = Vec::with_capacity(m);
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    out.push(-(2.0 * h1 + h2) / (h1 * (h1 + h2)) * u[0] + (h1 + h2) / (h1 * h2) * u[1] - h1 / (h2 * (h1 + h2)) * u[2]);
    for i in 1..m - 1 {
        let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        out.push(-h2 / (h1 * (h1 + h2)) * u[i - 1] + (h2 - h1) / (h1 * h2) * u[i] + h1 / (h2 * (h1 + h2)) * u[i + 1]);
    }
    let (h1, h2) = (t[m - 2] - t[m - 3], t[m - 1] - t[m - 2]);
    out.push(h2 / (h1 * (h1 + h2)) * u[m - 3] - (h1 + h2) / (h1 * h2) * u[m - 2] + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * u[m - 1]);
    out
}

/// The variational upper bound with unit constant: `init = (α_T²/σ_T²)·x_norm_sq`,
/// `disc = h d ∫₀ᵀ (2f − J'/J)²`, `h = T/n`.
///
/// `J'/J` comes from finite differences of `log J` on the trajectory's own grid,
/// so externally supplied trajectories work too; the integral is trapezoidal.
pub fn kl_upper_bound(
    schedule: &NoiseSchedule<f64>,
    traj: &FisherTrajectory,
    n: usize,
    d: usize,
    x_norm_sq: f64,
) -> Result<BoundReport> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    if !traj.schedule().same_as(schedule) {
        return Err(Error::validation("traj", "trajectory was computed under a different schedule"));
    }
    let t = traj.grid().points();
    if t.len() < 2 {
        return Err(Error::validation("traj", "needs at least two grid points"));
    }
    let j = traj.j();
    for (i, w) in j.windows(2).enumerate() {
        let jump = (w[1] / w[0] - 1.0).abs();
        if jump > MAX_RELATIVE_JUMP {
            return Err(Error::Resolution { at: t[i], jump });
        }
    }
    let u: Vec<f64> = j.iter().map(|v| v.ln()).collect();
    let du = log_derivative(t, &u);
    let integrand: Vec<f64> = t.iter().zip(&du).map(|(&ti, d)| (2.0 * schedule.f(ti) - d).powi(2)).collect();
    let integral: f64 = t
        .windows(2)
        .zip(integrand.windows(2))
        .map(|(tw, iw)| 0.5 * (tw[1] - tw[0]) * (iw[0] + iw[1]))
        .sum();
    let horizon = schedule.horizon();
    let step = horizon / n as f64;
    let init = match schedule.snr(horizon)? {
        Extended::Finite(snr) => snr * x_norm_sq,
        Extended::Unbounded => f64::INFINITY,
    };
    Ok(BoundReport::new("variational", &[("init", init), ("disc", step * d as f64 * integral)]))
}

/// Exact initialization-plus-discretization decomposition for a Gaussian target on
/// `n` uniform steps. See [`girsanov_bound_on_times`].
pub fn girsanov_bound_gaussian(schedule: &NoiseSchedule<f64>, target: &GaussianTarget, n: usize) -> Result<BoundReport> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    let horizon = schedule.horizon();
    let times: Vec<f64> = (0..=n)
        .map(|k| if k == n { horizon } else { horizon * k as f64 / n as f64 })
        .collect();
    girsanov_bound_on_times(schedule, target, &times)
}

/// `init = α_T²/(2σ_T²) E‖X*‖²` plus `disc = ½ Σ_k ∫ g(t) E‖s_t(X_t) − s_u(X_u)‖² dt`.
///
/// `times` are forward times `0 = t_0 < … < t_n = T`. On `[t_{k}, t_{k+1}]`
/// the reverse chain freezes the score at `u = t_{k+1}`, its start in reverse
/// time. Per eigen-direction of `Σ`, with `r = α_u/α_t`,
/// `q = σ_u² − r²σ_t²` and `a_t = 1/(α_t²λ_i + σ_t²)`, the expectation is
/// `(r a_u − a_t)²/a_t + q a_u²`; it does not depend on the mean.
pub fn girsanov_bound_on_times(schedule: &NoiseSchedule<f64>, target: &GaussianTarget, times: &[f64]) -> Result<BoundReport> {
    let horizon = schedule.horizon();
    if times.len() < 2 {
        return Err(Error::validation("times", "needs at least two points"));
    }
    if times[0] != 0.0 || times[times.len() - 1] != horizon {
        return Err(Error::validation("times", format!("must start at 0 and end at T = {horizon}")));
    }
    if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::validation("times", format!("must be strictly increasing, violated at index {}", k + 1)));
    }
    let eig: Vec<f64> = target.eigenvalues().iter().copied().collect();
    let spec = QuadratureSpec::default();
    let mut disc = 0.0;
    for w in times.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let big_fu = schedule.drift_integral(tb)?;
        let mu = schedule.marginal_coeffs(tb)?;
        let integrand = |t: f64| -> f64 {
            let (big_ft, mt) = match (schedule.drift_integral(t), schedule.marginal_coeffs(t)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return f64::NAN,
            };
            let r = (big_ft - big_fu).exp();
            let q = (mu.sigma2 - r * r * mt.sigma2).max(0.0);
            let a2t = mt.alpha * mt.alpha;
            let a2u = mu.alpha * mu.alpha;
            let sum: f64 = eig
                .iter()
                .map(|&l| {
                    let at = 1.0 / (a2t * l + mt.sigma2);
                    let au = 1.0 / (a2u * l + mu.sigma2);
                    (r * au - at).powi(2) / at + q * au * au
                })
                .sum();
            schedule.g(t) * sum
        };
        let piece = integrate(integrand, ta, tb, &spec)?;
        if !piece.is_finite() {
            return Err(Error::numeric("girsanov_bound", ta, "discretization integrand is not finite"));
        }
        disc += 0.5 * piece;
    }
    let init = match schedule.snr(horizon)? {
        Extended::Finite(snr) => 0.5 * snr * target.second_moment(),
        Extended::Unbounded => f64::INFINITY,
    };
    Ok(BoundReport::new("girsanov", &[("init", init), ("disc", disc)]))
}

/// Largest step size for which the sufficient condition holds:
/// `h_max = (g_min/f_max²) min_t d/E‖X_t‖²` over a 1000-point grid.
///
/// Unbounded when the drift vanishes.
pub fn stepsize_sufficient(schedule: &NoiseSchedule<f64>, target: &Target) -> Result<Extended<f64>> {
    let grid = OdeGrid::uniform(0.0, schedule.horizon(), STEPSIZE_GRID)?;
    let d = target.dim() as f64;
    let (mut g_min, mut f_max, mut ratio) = (f64::INFINITY, 0.0f64, f64::INFINITY);
    for &t in grid.points() {
        g_min = g_min.min(schedule.g(t));
        f_max = f_max.max(schedule.f(t));
        let m = schedule.marginal_coeffs(t)?;
        ratio = ratio.min(d / target.smoothed_second_moment(m.alpha, m.sigma2));
    }
    if f_max == 0.0 {
        return Ok(Extended::Unbounded);
    }
    Ok(Extended::Finite(g_min / (f_max * f_max) * ratio))
}

/// Schedules covered by the closed-form legacy bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LegacySchedule {
    VpLinear { g_min: f64, g_max: f64 },
    VpConstant { g_const: f64 },
}

/// Discretization bound for VP-linear and VP-constant schedules, unit constant.
///
/// VP-linear: `h d κ⁴ g_max (T g_max + 1) max{1, J*/d}`.
/// VP-constant: `h d κ⁴ g (J*/d + log(1 + (J*/d)(e^{gT} − 1)))`.
pub fn legacy_bound(kind: &LegacySchedule, j_star: f64, d: usize, kappa: f64, horizon: f64, step: f64) -> Result<f64> {
    for (field, v) in [("j_star", j_star), ("kappa", kappa), ("T", horizon), ("h", step)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::validation(field, "must be positive and finite"));
        }
    }
    if d == 0 {
        return Err(Error::validation("d", "must be at least 1"));
    }
    let d = d as f64;
    let lead = step * d * kappa.powi(4);
    let ratio = j_star / d;
    match *kind {
        LegacySchedule::VpLinear { g_min, g_max } => {
            if !(g_min > 0.0 && g_max >= g_min && g_max.is_finite()) {
                return Err(Error::validation("g_max", "need 0 < g_min <= g_max < inf"));
            }
            Ok(lead * g_max * (horizon * g_max + 1.0) * ratio.max(1.0))
        }
        LegacySchedule::VpConstant { g_const } => {
            if !(g_const >= 0.0) || !g_const.is_finite() {
                return Err(Error::validation("g_const", "must be nonnegative and finite"));
            }
            Ok(lead * g_const * (ratio + (ratio * (g_const * horizon).exp_m1()).ln_1p()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::CatalogParams;

    #[test]
    fn log_derivative_is_exact_on_quadratics() {
        let t = [0.0, 0.1, 0.35, 0.5, 0.9, 1.0];
        let u: Vec<f64> = t.iter().map(|x| 3.0 * x * x - x + 2.0).collect();
        let du = log_derivative(&t, &u);
        for (x, d) in t.iter().zip(du) {
            assert!((d - (6.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn stepsize_examples() {
        let ve = NoiseSchedule::make_catalog(CatalogParams::VeExponential { g0: 1.0, lambda: 1.0 }, 1.0).unwrap();
        let unit: Target = GaussianTarget::isotropic(3, 1.0).unwrap().into();
        assert!(stepsize_sufficient(&ve, &unit).unwrap().is_unbounded());
        let ou = NoiseSchedule::ou(2.0).unwrap();
        let h = stepsize_sufficient(&ou, &unit).unwrap().to_float();
        assert!((h - 2.0).abs() < 1e-9);
    }

    #[test]
    fn anisotropic_stepsize_matches_brute_force() {
        let target: Target = GaussianTarget::diagonal(vec![1.0, 0.0], vec![0.01, 4.0]).unwrap().into();
        let lin = NoiseSchedule::make_catalog(CatalogParams::linear_default(1.0), 1.0).unwrap();
        let got = stepsize_sufficient(&lin, &target).unwrap().to_float();
        let ts: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        let g_min = ts.iter().map(|&t| 0.1 + 19.9 * t).fold(f64::INFINITY, f64::min);
        let f_max = ts.iter().map(|&t| 0.5 * (0.1 + 19.9 * t)).fold(0.0, f64::max);
        let worst = ts
            .iter()
            .map(|&t| {
                let big_f = 0.5 * (0.1 * t + 9.95 * t * t);
                let a2 = (-2.0 * big_f).exp();
                2.0 / (a2 * 5.01 + (1.0 - a2) * 2.0)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((got / (g_min / (f_max * f_max) * worst) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn legacy_examples() {
        let c = |g| legacy_bound(&LegacySchedule::VpConstant { g_const: g }, 200.0, 2, 1.0, 1.0, 0.01).unwrap();
        assert_eq!(c(0.0), 0.0);
        assert!(c(1e-8) < 1e-7);
        let lin = legacy_bound(&LegacySchedule::VpLinear { g_min: 2.0, g_max: 2.0 }, 200.0, 2, 1.0, 1.0, 0.01).unwrap();
        let lead = 0.01 * 2.0 * 2.0 * 100.0;
        assert!(lin / lead > 1.0 && lin / lead < 5.0);
        assert!(legacy_bound(&LegacySchedule::VpLinear { g_min: 2.0, g_max: 1.0 }, 1.0, 1, 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn girsanov_rejects_bad_times() {
        let ou = NoiseSchedule::ou(1.0).unwrap();
        let t = GaussianTarget::isotropic(1, 1.0).unwrap();
        assert!(girsanov_bound_on_times(&ou, &t, &[0.0, 0.6, 0.4, 1.0]).is_err());
        assert!(girsanov_bound_on_times(&ou, &t, &[0.1, 1.0]).is_err());
    }

    #[test]
    fn girsanov_decreases_with_n() {
        let ou = NoiseSchedule::ou(1.0).unwrap();
        let t = GaussianTarget::diagonal(vec![0.0, 0.0], vec![0.01, 1.0]).unwrap();
        let a = girsanov_bound_gaussian(&ou, &t, 20).unwrap();
        let b = girsanov_bound_gaussian(&ou, &t, 40).unwrap();
        assert!(b.term("disc").unwrap() < a.term("disc").unwrap());
        assert_eq!(a.term("init"), b.term("init"));
    }
}
