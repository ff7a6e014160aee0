use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate, QuadratureSpec};

/// Settings for [`euler_lagrange_audit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub perturbations: usize,
    /// Intervals of the piecewise-linear trajectory space.
    pub intervals: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            perturbations: 100,
            intervals: 400,
            seed: 0,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationResult {
    /// `‖p'‖²` in `L²`, the exact excess action of this perturbation.
    pub norm_sq: f64,
    pub action: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub lambda: f64,
    pub baseline: f64,
    pub perturbations: Vec<PerturbationResult>,
    /// Baseline never exceeds a perturbed action by more than the tolerance.
    pub minimal: bool,
    /// Every perturbation with `‖p'‖ > 1e-6` has a strictly larger action.
    pub strict: bool,
}

/// Action `∫ (2f − u')²` of a continuous piecewise-linear `u` given by its node values.
fn action(nodes: &[f64], u: &[f64], int_f: &[f64], int_f2: &[f64]) -> f64 {
    (0..nodes.len() - 1)
        .map(|i| {
            let dt = nodes[i + 1] - nodes[i];
            let s = (u[i + 1] - u[i]) / dt;
            4.0 * int_f2[i] - 4.0 * s * int_f[i] + s * s * dt
        })
        .sum()
}

/// Checks that the constant-rate log-Fisher trajectory minimizes `∫₀ᵀ (2f − u')²`
/// among same-endpoint trajectories.
///
/// The candidate space is continuous piecewise-linear `u` on a uniform mesh; the
/// baseline has slope `2f̄_i − λ` on interval `i` (`f̄_i` the interval mean of
/// `f`), the discrete Euler-Lagrange solution. Each perturbation is a random
/// piecewise-linear bump vanishing at both ends, drawn from its own seeded
/// stream, and evaluated in parallel.
pub fn euler_lagrange_audit<F>(f: F, horizon: f64, u_start: f64, u_end: f64, cfg: &AuditConfig) -> Result<AuditReport>
where
    F: Fn(f64) -> f64 + Sync,
{
    if cfg.intervals < 2 {
        return Err(Error::validation("intervals", "must be at least 2"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::validation("T", "must be positive and finite"));
    }
    let m = cfg.intervals;
    let nodes: Vec<f64> = (0..=m).map(|i| if i == m { horizon } else { horizon * i as f64 / m as f64 }).collect();
    let spec = QuadratureSpec::default();
    let mut int_f = Vec::with_capacity(m);
    let mut int_f2 = Vec::with_capacity(m);
    for w in nodes.windows(2) {
        int_f.push(integrate(&f, w[0], w[1], &spec)?);
        int_f2.push(integrate(|t| f(t) * f(t), w[0], w[1], &spec)?);
    }
    let drift: f64 = int_f.iter().sum();
    let lambda = (2.0 * drift - (u_end - u_start)) / horizon;
    let mut base = Vec::with_capacity(m + 1);
    base.push(u_start);
    for (i, w) in nodes.windows(2).enumerate() {
        let prev = base[i];
        base.push(prev + 2.0 * int_f[i] - lambda * (w[1] - w[0]));
    }
    base[m] = u_end;
    let baseline = action(&nodes, &base, &int_f, &int_f2);

    let perturbations: Vec<PerturbationResult> = (0..cfg.perturbations)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let knots = rng.random_range(1..=12usize).min(m - 1);
            let scale = 10f64.powf(rng.random_range(-7.0..1.0));
            let mut p = vec![0.0; m + 1];
            let mut idx: Vec<usize> = (0..knots).map(|_| rng.random_range(1..m)).collect();
            idx.sort_unstable();
            idx.dedup();
            let mut anchors = vec![(0usize, 0.0)];
            anchors.extend(idx.iter().map(|&i| (i, scale * rng.random_range(-1.0..1.0))));
            anchors.push((m, 0.0));
            for w in anchors.windows(2) {
                let ((i0, v0), (i1, v1)) = (w[0], w[1]);
                for (i, pi) in p.iter_mut().enumerate().take(i1 + 1).skip(i0) {
                    let s = (i - i0) as f64 / (i1 - i0) as f64;
                    *pi = v0 + s * (v1 - v0);
                }
            }
            let norm_sq: f64 = nodes
                .windows(2)
                .zip(p.windows(2))
                .map(|(t, q)| (q[1] - q[0]).powi(2) / (t[1] - t[0]))
                .sum();
            let u: Vec<f64> = base.iter().zip(&p).map(|(b, q)| b + q).collect();
            PerturbationResult {
                norm_sq,
                action: action(&nodes, &u, &int_f, &int_f2),
            }
        })
        .collect();

    let tol = cfg.tolerance * baseline.abs().max(1.0);
    let minimal = perturbations.iter().all(|p| p.action >= baseline - tol);
    let strict = perturbations
        .iter()
        .filter(|p| p.norm_sq.sqrt() > 1e-6)
        .all(|p| p.action > baseline);
    Ok(AuditReport {
        lambda,
        baseline,
        perturbations,
        minimal,
        strict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_drift_baseline_is_lambda_squared() {
        let r = euler_lagrange_audit(|_| 1.0, 1.0, 0.0, -1.0, &AuditConfig::default()).unwrap();
        assert!((r.lambda - 3.0).abs() < 1e-12);
        assert!((r.baseline - 9.0).abs() < 1e-9);
        assert!(r.minimal && r.strict);
        assert_eq!(r.perturbations.len(), 100);
    }

    #[test]
    fn excess_action_equals_perturbation_energy() {
        let r = euler_lagrange_audit(|t| 1.0 + t * t, 2.0, 1.0, 0.5, &AuditConfig { seed: 9, ..Default::default() }).unwrap();
        for p in &r.perturbations {
            assert!((p.action - r.baseline - p.norm_sq).abs() < 1e-8 * (1.0 + p.norm_sq + r.baseline));
        }
    }

    #[test]
    fn independent_of_thread_count() {
        let cfg = AuditConfig { seed: 4, ..Default::default() };
        let a = euler_lagrange_audit(|_| 1.0, 1.0, 0.0, 0.3, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| euler_lagrange_audit(|_| 1.0, 1.0, 0.0, 0.3, &cfg).unwrap());
        let key = |r: &AuditReport| r.perturbations.iter().map(|p| p.action.to_bits()).collect::<Vec<_>>();
        assert_eq!(key(&a), key(&b));
    }
}
