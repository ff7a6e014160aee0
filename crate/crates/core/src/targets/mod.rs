//! Analytic target distributions: exact scores, Fisher information and the
//! smoothing inequalities they satisfy.

mod gaussian;
mod gmm;
mod suite;

use serde::{Deserialize, Serialize};

pub use gaussian::GaussianTarget;
pub use gmm::{GmmEval, GmmTarget};
pub use suite::{inequality_suite, CheckResult, CheckStatus, SuiteReport};

use crate::error::{Error, Result};
use crate::numerics::parallel_sum;
use crate::real::Extended;

/// `J = E‖∇log p_t‖²` and `H = E‖∇²log p_t‖_F²` of a smoothed target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedMoments {
    pub j: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_stderr: Option<f64>,
}

impl SmoothedMoments {
    pub fn exact(j: f64, h: f64) -> Self {
        Self {
            j,
            h,
            j_stderr: None,
            h_stderr: None,
        }
    }

    pub fn is_estimated(&self) -> bool {
        self.j_stderr.is_some() || self.h_stderr.is_some()
    }
}

/// How mixture moments are computed. Gaussians ignore this and are exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MomentMethod {
    #[default]
    Quadrature1d,
    MonteCarlo { nsamples: usize, seed: u64 },
}

/// A target distribution `p*`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Target {
    Gaussian(GaussianTarget),
    Gmm(GmmTarget),
}

/// Both κ values of a target: the sharp constant and, for mixtures, the coarser `R_μ` bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_upper: Option<f64>,
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Gaussian(g) => g.dim(),
            Target::Gmm(g) => g.dim(),
        }
    }

    pub fn kind_tag(&self) -> &'static str {
        match self {
            Target::Gaussian(_) => "gaussian",
            Target::Gmm(_) => "gmm",
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianTarget> {
        match self {
            Target::Gaussian(g) => Some(g),
            Target::Gmm(_) => None,
        }
    }

    /// Score of the smoothed law at `x`.
    pub fn score(&self, alpha: f64, sigma2: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Target::Gaussian(g) => g.score(alpha, sigma2, x),
            Target::Gmm(g) => g.score(alpha, sigma2, x),
        }
    }

    pub fn moments(&self, alpha: f64, sigma2: f64, method: &MomentMethod) -> Result<SmoothedMoments> {
        match self {
            Target::Gaussian(g) => g.moments(alpha, sigma2),
            Target::Gmm(g) => g.moments(alpha, sigma2, method),
        }
    }

    /// `E‖X*‖²`, uncentered.
    pub fn second_moment(&self) -> f64 {
        match self {
            Target::Gaussian(g) => g.second_moment(),
            Target::Gmm(g) => g.second_moment(),
        }
    }

    /// `E‖X_t‖² = α² E‖X*‖² + σ² d`.
    pub fn smoothed_second_moment(&self, alpha: f64, sigma2: f64) -> f64 {
        alpha * alpha * self.second_moment() + sigma2 * self.dim() as f64
    }

    pub fn kappa(&self) -> KappaReport {
        match self {
            Target::Gaussian(g) => KappaReport {
                kappa: g.kappa(),
                kappa_upper: None,
            },
            Target::Gmm(g) => KappaReport {
                kappa: g.kappa(),
                kappa_upper: Some(g.kappa_upper()),
            },
        }
    }

    /// `J*`, the Fisher information of the unsmoothed target.
    pub fn fisher_star(&self, method: &MomentMethod) -> Result<SmoothedMoments> {
        self.moments(1.0, 0.0, method)
    }

    /// Parses `{"kind": "gaussian" | "gmm", ...}`.
    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            detail: e.inner().to_string(),
        })
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("target serializes")
    }
}

impl From<GaussianTarget> for Target {
    fn from(g: GaussianTarget) -> Self {
        Target::Gaussian(g)
    }
}

impl From<GmmTarget> for Target {
    fn from(g: GmmTarget) -> Self {
        Target::Gmm(g)
    }
}

/// Log-concavity bounds of the smoothed law: `m_t = PS(m*/α², 1/σ²)`, `M_t = PS(M*/α², 1/σ²)`.
pub fn pl_bounds(m_star: f64, big_m_star: f64, alpha: f64, sigma2: f64) -> Result<(f64, f64)> {
    if !(m_star > 0.0 && m_star <= big_m_star && big_m_star.is_finite()) {
        return Err(Error::validation("m_star", "need 0 < m_star <= M_star < inf"));
    }
    if !(alpha > 0.0) {
        return Err(Error::validation("alpha", "must be positive"));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::validation("sigma2", "must be nonnegative"));
    }
    let noise = Extended::recip_of(sigma2);
    let a2 = alpha * alpha;
    let lo = parallel_sum(Extended::Finite(m_star / a2), noise)?;
    let hi = parallel_sum(Extended::Finite(big_m_star / a2), noise)?;
    Ok((lo.to_float(), hi.to_float()))
}
