use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate, lambert_w0, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Boundary,
    Lambert,
}

/// Warning attached when boundary data yields `λ ≤ 0`.
pub const NO_NOISE_NEEDED: &str = "no-noise-needed";

/// The Euler-Lagrange rate `λ` with the quantity it was derived from.
///
/// `z` satisfies `λT = W(z)`; for Lambert solves it is `K n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSolve {
    pub lambda: f64,
    pub z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub horizon: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// `λ = (2∫₀ᵀ f + log(J*/J_T)) / T`.
///
/// A nonpositive result is returned with the [`NO_NOISE_NEEDED`] warning:
/// the drift alone already contracts the Fisher information enough.
pub fn lambda_from_boundary<F: Fn(f64) -> f64>(f: F, horizon: f64, j_star: f64, j_t: f64) -> Result<LambdaSolve> {
    let drift = integrate(f, 0.0, horizon, &QuadratureSpec::default())?;
    lambda_from_drift_integral(drift, horizon, j_star, j_t)
}

/// As [`lambda_from_boundary`] with `∫₀ᵀ f` already known.
pub fn lambda_from_drift_integral(drift: f64, horizon: f64, j_star: f64, j_t: f64) -> Result<LambdaSolve> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::validation("T", "must be positive and finite"));
    }
    if !(j_star > 0.0) || !j_star.is_finite() {
        return Err(Error::validation("j_star", "must be positive and finite"));
    }
    if !(j_t > 0.0) || !j_t.is_finite() {
        return Err(Error::validation("j_t", "must be positive and finite"));
    }
    if !drift.is_finite() {
        return Err(Error::numeric("lambda_from_boundary", horizon, "drift integral is not finite"));
    }
    let lambda = (2.0 * drift + (j_star / j_t).ln()) / horizon;
    let lt = lambda * horizon;
    Ok(LambdaSolve {
        lambda,
        z: lt * lt.exp(),
        k: None,
        n: None,
        horizon,
        provenance: Provenance::Boundary,
        warning: (lambda <= 0.0).then(|| NO_NOISE_NEEDED.to_string()),
    })
}

/// `λ_n = W(K n) / T`, the budget-dependent rate.
pub fn lambda_adaptive(k: f64, n: usize, horizon: f64) -> Result<LambdaSolve> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::validation("K", "must be positive and finite"));
    }
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::validation("T", "must be positive and finite"));
    }
    let z = k * n as f64;
    Ok(LambdaSolve {
        lambda: lambert_w0(z)? / horizon,
        z,
        k: Some(k),
        n: Some(n),
        horizon,
        provenance: Provenance::Lambert,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_examples() {
        let s = lambda_from_boundary(|_| 0.0, 1.0, 2.0, 2.0).unwrap();
        assert_eq!(s.lambda, 0.0);
        assert_eq!(s.warning.as_deref(), Some(NO_NOISE_NEEDED));
        let s = lambda_from_boundary(|_| 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((s.lambda - 2.0).abs() < 1e-12 && s.warning.is_none());
        let e2 = 2f64.exp();
        let s = lambda_from_boundary(|_| 1.0, 1.0, e2, 1.0).unwrap();
        assert!((s.lambda - 4.0).abs() < 1e-12);
    }

    #[test]
    fn lambert_examples() {
        let s = lambda_adaptive(std::f64::consts::E, 1, 1.0).unwrap();
        assert!((s.lambda - 1.0).abs() < 1e-14);
        let s = lambda_adaptive(37.323, 50, 1.0).unwrap();
        assert!((s.z - 1866.15).abs() < 1e-9);
        assert!((s.lambda * s.lambda.exp() - s.z).abs() < 1e-9 * s.z);
        assert!(lambda_adaptive(0.0, 5, 1.0).is_err());
        assert!(lambda_adaptive(1.0, 0, 1.0).is_err());
    }

    #[test]
    fn lambert_round_trips_through_boundary() {
        for &(k, n, horizon) in &[(37.323, 50, 1.0), (0.5, 3, 2.0), (24.359, 1000, 0.3)] {
            let lam = lambda_adaptive(k, n, horizon).unwrap();
            let drift = 0.7 * horizon;
            let j_t = (2.0 * drift - lam.lambda * horizon).exp();
            let b = lambda_from_drift_integral(drift, horizon, 1.0, j_t).unwrap();
            assert!((b.lambda - lam.lambda).abs() < 1e-10 * lam.lambda.max(1.0));
            assert!((b.z - lam.z).abs() < 1e-10 * lam.z);
        }
    }
}
