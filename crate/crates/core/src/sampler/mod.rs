//! Exponential-integrator reverse chain: exact per-step coefficients, seeded
//! path simulation and exact law propagation for Gaussian targets.
//!
//! The chain runs in reverse time `τ = T − t`. Step `k` covers
//! `[τ_k, τ_{k+1}]` with the score frozen at `X̂_{τ_k}`, i.e. at forward time
//! `T − τ_k`.

mod export;
mod gaussian;
mod paths;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use export::{read_binary, Samples, BINARY_MAGIC, BINARY_VERSION};
pub use gaussian::{propagate_gaussian, propagate_gaussian_mapped, GaussianChainState};
pub use paths::{sample_paths, sample_paths_with_mapped_score};

use crate::error::{Error, Result};
use crate::numerics::{integrate, QuadratureSpec};
use crate::schedules::NoiseSchedule;
use crate::targets::Target;

/// Everything that determines a sampler run.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub n: usize,
    pub paths: usize,
    pub seed: u64,
    /// Early-stopping offset: the chain stops at forward time `δ` instead of 0.
    pub delta: f64,
    pub schedule: NoiseSchedule<f64>,
    pub target: Target,
}

impl SamplerConfig {
    pub fn new(schedule: NoiseSchedule<f64>, target: Target, n: usize) -> Self {
        Self {
            n,
            paths: 1,
            seed: 0,
            delta: 0.0,
            schedule,
            target,
        }
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.paths = paths;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_early_stop(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.schedule.horizon()
    }

    /// `h = (T − δ)/n`.
    pub fn step(&self) -> f64 {
        (self.horizon() - self.delta) / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::validation("n", "must be at least 1"));
        }
        if self.paths == 0 {
            return Err(Error::validation("paths", "must be at least 1"));
        }
        if !(self.delta >= 0.0 && self.delta < self.horizon()) {
            return Err(Error::validation("delta", format!("must lie in [0, T), got {}", self.delta)));
        }
        Ok(())
    }

    /// Reverse times `τ_0 = 0 < … < τ_n = T − δ`.
    pub fn reverse_times(&self) -> Vec<f64> {
        let end = self.horizon() - self.delta;
        (0..=self.n)
            .map(|k| if k == self.n { end } else { k as f64 * self.step() })
            .collect()
    }

    /// Forward times at which step `k` freezes the score, `T − τ_k`.
    pub fn score_times(&self) -> Vec<f64> {
        let horizon = self.horizon();
        self.reverse_times()[..self.n].iter().map(|tau| horizon - tau).collect()
    }
}

/// One reverse step `X ← A X + B s + √V ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EiStepCoeffs {
    pub a: f64,
    pub b: f64,
    pub v: f64,
}

impl EiStepCoeffs {
    /// Two consecutive steps sharing one frozen score.
    pub fn compose(self, next: EiStepCoeffs) -> EiStepCoeffs {
        EiStepCoeffs {
            a: self.a * next.a,
            b: next.a * self.b + next.b,
            v: next.a * next.a * self.v + next.v,
        }
    }
}

/// Exact coefficients of the frozen-score reverse SDE over `[τ_k, τ_next]`.
///
/// With `Φ(u) = exp(∫_u^{τ_next} f(T − v) dv) = α_{T−τ_next}/α_{T−u}`:
/// `A = Φ(τ_k)`, `B = ∫ Φ g(T − u) du`, `V = ∫ Φ² g(T − u) du`.
pub fn ei_step_coeffs(schedule: &NoiseSchedule<f64>, tau_k: f64, tau_next: f64) -> Result<EiStepCoeffs> {
    let horizon = schedule.horizon();
    if !(tau_k >= 0.0 && tau_k < tau_next && tau_next <= horizon) {
        return Err(Error::validation("tau", format!("need 0 <= tau_k < tau_next <= T, got [{tau_k}, {tau_next}]")));
    }
    let end = schedule.drift_integral(horizon - tau_next)?;
    let phi = |u: f64| match schedule.drift_integral(horizon - u) {
        Ok(fu) => (fu - end).exp(),
        Err(_) => f64::NAN,
    };
    let spec = QuadratureSpec::default();
    let a = phi(tau_k);
    let b = integrate(|u| phi(u) * schedule.g(horizon - u), tau_k, tau_next, &spec)?;
    let v = integrate(|u| phi(u).powi(2) * schedule.g(horizon - u), tau_k, tau_next, &spec)?;
    if ![a, b, v].iter().all(|x| x.is_finite()) {
        return Err(Error::numeric("ei_step_coeffs", tau_k, "coefficient is not finite"));
    }
    Ok(EiStepCoeffs { a, b, v })
}

/// Per-step data shared by every path.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepPlan {
    pub t_score: f64,
    pub alpha: f64,
    pub sigma2: f64,
    pub coeffs: EiStepCoeffs,
}

pub(crate) fn plan(config: &SamplerConfig) -> Result<Vec<StepPlan>> {
    config.validate()?;
    let taus = config.reverse_times();
    let horizon = config.horizon();
    (0..config.n)
        .into_par_iter()
        .map(|k| {
            let t_score = horizon - taus[k];
            let m = config.schedule.marginal_coeffs(t_score)?;
            Ok(StepPlan {
                t_score,
                alpha: m.alpha,
                sigma2: m.sigma2,
                coeffs: ei_step_coeffs(&config.schedule, taus[k], taus[k + 1])?,
            })
        })
        .collect()
}

/// `σ_T²`, the variance of the initial law `N(0, σ_T² I)`.
pub(crate) fn initial_variance(config: &SamplerConfig) -> Result<f64> {
    Ok(config.schedule.marginal_coeffs(config.horizon())?.sigma2)
}
