use serde::{Deserialize, Serialize};

use super::lambda::lambda_adaptive;
use crate::error::{Error, Result, Violation};
use crate::schedules::{AcsParams, NoiseSchedule, BRANCH_TOL};

/// A feasible ACS hyperparameter point and the schedule constants it implies.
///
/// Rates (`omega`, `lambda_n`, `c_n`, `g0`) are in units of `1/horizon`;
/// `e_n = ∫₀ᵀ f` is dimensionless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcsHparams {
    pub theta: f64,
    pub omega: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub lambda_n: f64,
    pub e_n: f64,
    pub c_n: f64,
    pub g0: f64,
    pub horizon: f64,
}

impl AcsHparams {
    pub fn acs_params(&self) -> AcsParams<f64> {
        AcsParams {
            theta: self.theta,
            omega: self.omega,
            lambda: self.c_n,
            g0: self.g0,
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule<f64>> {
        NoiseSchedule::make_acs(self.acs_params(), self.horizon)
    }

    fn rescaled(mut self, horizon: f64) -> Self {
        self.omega /= horizon;
        self.lambda_n /= horizon;
        self.c_n /= horizon;
        self.g0 /= horizon;
        self.horizon = horizon;
        self
    }
}

fn violation(constraint: &str, detail: String) -> Violation {
    Violation {
        constraint: constraint.to_string(),
        detail,
    }
}

/// Solves for `g0` on `[0, 1]` so that the ACS schedule with `c = γλ*` has `∫₀¹ f = E`.
///
/// Feasibility requires `θ > 0`, `0 ≤ ω < E` and `γ ≥ 2E/λ*`; every violated
/// constraint is reported. Then
/// `g0 = (x/(2θ)) (e^{2(E−ω)} − 1)/(1 − e^{−x})` with `x = 2ω − c`, and `g` is
/// increasing.
pub fn hparam_solve(theta: f64, omega: f64, gamma: f64, lambda_star: f64, energy: f64) -> Result<AcsHparams> {
    for (field, v) in [("theta", theta), ("omega", omega), ("gamma", gamma)] {
        if !v.is_finite() {
            return Err(Error::validation(field, "must be finite"));
        }
    }
    if !(lambda_star > 0.0) || !lambda_star.is_finite() {
        return Err(Error::validation("lambda_star", "must be positive and finite"));
    }
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::validation("E", "must be positive and finite"));
    }
    let mut violations = Vec::new();
    if !(theta > 0.0) {
        violations.push(violation("theta > 0", format!("theta = {theta}")));
    }
    if !(omega >= 0.0 && omega < energy) {
        violations.push(violation("0 <= omega < E", format!("omega = {omega}, E = {energy}")));
    }
    let gamma_min = 2.0 * energy / lambda_star;
    if gamma < gamma_min {
        violations.push(violation("gamma >= 2E/lambda_star", format!("gamma = {gamma}, 2E/lambda_star = {gamma_min}")));
    }
    if !violations.is_empty() {
        return Err(Error::Infeasible(violations));
    }

    let c = gamma * lambda_star;
    let x = 2.0 * omega - c;
    let ratio = if x.abs() <= BRANCH_TOL { 1.0 } else { x / -(-x).exp_m1() };
    let g0 = ratio * (2.0 * (energy - omega)).exp_m1() / (2.0 * theta);
    if !(g0 > 0.0) || !g0.is_finite() {
        return Err(Error::numeric("hparam_solve", 0.0, format!("g0 = {g0} is not a positive finite rate")));
    }
    Ok(AcsHparams {
        theta,
        omega,
        gamma,
        k: None,
        n: None,
        lambda_n: lambda_star,
        e_n: energy,
        c_n: c,
        g0,
        horizon: 1.0,
    })
}

/// Budget-adaptive ACS hyperparameters.
///
/// On `[0, 1]`: `λ_n = W(Kn)`, `E_n = λ_n/2`, `c_n = γλ_n`, `ω = ρE_n`, then
/// [`hparam_solve`]; the result is rescaled to `[0, T]`. Feasibility needs
/// `γ ≥ 1`.
pub fn adaptive_params(k: f64, gamma: f64, theta: f64, rho: f64, n: usize, horizon: f64) -> Result<AcsHparams> {
    if !(0.0..=0.99).contains(&rho) {
        return Err(Error::validation("rho", format!("must lie in [0, 0.99], got {rho}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::validation("T", "must be positive and finite"));
    }
    let lambda_one = lambda_adaptive(k, n, 1.0)?.lambda;
    let energy = lambda_one / 2.0;
    let mut hp = hparam_solve(theta, rho * energy, gamma, lambda_one, energy)?;
    hp.k = Some(k);
    hp.n = Some(n);
    Ok(hp.rescaled(horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate, QuadratureSpec};

    fn energy_of(hp: &AcsHparams) -> f64 {
        let s = hp.schedule().unwrap();
        integrate(|t| s.f(t), 0.0, hp.horizon, &QuadratureSpec::default()).unwrap()
    }

    #[test]
    fn reference_point() {
        let hp = hparam_solve(0.5, 0.0, 2.5, 2.0, 2.0).unwrap();
        assert!((hp.c_n - 5.0).abs() < 1e-15);
        assert!((energy_of(&hp) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn infeasible_branches_are_named() {
        let names = |r: Result<AcsHparams>| match r {
            Err(Error::Infeasible(v)) => v.into_iter().map(|x| x.constraint).collect::<Vec<_>>(),
            other => panic!("{other:?}"),
        };
        assert_eq!(names(hparam_solve(0.5, 2.0, 3.0, 2.0, 2.0)), ["0 <= omega < E"]);
        assert_eq!(names(hparam_solve(0.0, 0.0, 3.0, 2.0, 2.0)), ["theta > 0"]);
        assert_eq!(names(hparam_solve(0.5, 0.0, 1.5, 2.0, 2.0)), ["gamma >= 2E/lambda_star"]);
        assert_eq!(names(hparam_solve(-1.0, 3.0, 0.1, 2.0, 2.0)).len(), 3);
    }

    #[test]
    fn cifar_point_is_feasible() {
        let hp = adaptive_params(37.323, 1.997, 0.564, 0.178, 50, 1.0).unwrap();
        assert!(hp.g0 > 0.0 && hp.omega < hp.e_n);
        assert!((energy_of(&hp) - hp.e_n).abs() < 1e-8);
    }

    #[test]
    fn horizon_rescaling_preserves_energy() {
        let hp = adaptive_params(5.0, 2.0, 0.3, 0.5, 20, 4.0).unwrap();
        assert!((energy_of(&hp) - hp.e_n).abs() < 1e-8);
        let one = adaptive_params(5.0, 2.0, 0.3, 0.5, 20, 1.0).unwrap();
        let (s4, s1) = (hp.schedule().unwrap(), one.schedule().unwrap());
        assert!((s4.g(2.0) - s1.g(0.5) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_budget_is_nearly_constant() {
        let hp = adaptive_params(1e-4, 2.0, 0.5, 0.0, 1, 1.0).unwrap();
        assert!((hp.lambda_n - 1e-4).abs() < 1e-8);
        let s = hp.schedule().unwrap();
        assert!((s.g(1.0) / s.g(0.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn energy_grows_with_budget() {
        let a = adaptive_params(37.323, 1.997, 0.564, 0.178, 50, 1.0).unwrap();
        let b = adaptive_params(37.323, 1.997, 0.564, 0.178, 100, 1.0).unwrap();
        assert!(b.e_n > a.e_n);
    }
}
