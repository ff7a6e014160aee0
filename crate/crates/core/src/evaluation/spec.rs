use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::control::{adaptive_params, lambda_adaptive, optimal_g_gaussian};
use crate::error::{Error, Result};
use crate::numerics::logspace;
use crate::schedules::NoiseSchedule;
use crate::targets::{GaussianTarget, GmmTarget};

/// Smallest path budget accepted by the mixture sanity run.
pub const MIN_GMM_PATHS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    UCurve,
    NScaling,
    BoundAudit,
    GmmSanity,
}

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::UCurve => "u-curve",
            ExperimentKind::NScaling => "n-scaling",
            ExperimentKind::BoundAudit => "bound-audit",
            ExperimentKind::GmmSanity => "gmm-sanity",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        [Self::UCurve, Self::NScaling, Self::BoundAudit, Self::GmmSanity]
            .into_iter()
            .find(|k| k.tag() == tag)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A declarative experiment, tagged by `kind` on the wire.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    UCurve(UCurveSpec),
    NScaling(NScalingSpec),
    BoundAudit(BoundAuditSpec),
    GmmSanity(GmmSanitySpec),
}

fn default_u_curve_target() -> GaussianTarget {
    GaussianTarget::diagonal(vec![0.0, 0.0], vec![0.01, 1.0]).expect("valid default target")
}

fn default_energies() -> Vec<f64> {
    logspace(0.5, 50.0, 20)
}

fn default_u_curve_n() -> usize {
    100
}

fn default_gmm_n() -> usize {
    200
}

fn default_gmm_paths() -> usize {
    100_000
}

fn unit() -> f64 {
    1.0
}

/// Constant VP schedules `f = E, g = 2E` swept over the energy `E = ∫₀ᵀ f`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UCurveSpec {
    #[serde(default = "default_u_curve_target")]
    pub target: GaussianTarget,
    #[serde(default = "default_energies")]
    pub energies: Vec<f64>,
    #[serde(default = "default_u_curve_n")]
    pub n: usize,
    #[serde(default = "unit", rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub assert: UCurveAssert,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UCurveAssert {
    /// The interior minimum must lie below both endpoints by this factor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior_min_factor: Option<f64>,
    /// At the smallest energy, `|kl − init_error| ≤ rel · init_error`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_dominated_rel: Option<f64>,
    /// Flanks monotone toward the minimum, up to one violating point.
    #[serde(default)]
    pub monotone_flanks: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NScalingSpec {
    pub target: GaussianTarget,
    /// Step counts, strictly increasing.
    pub n: Vec<usize>,
    pub family: ScheduleFamily,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub assert: NScalingAssert,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NScalingAssert {
    /// Inclusive window for the fitted log-log slope of KL against n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_range: Option<[f64; 2]>,
}

/// How a schedule is obtained for a step budget `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleFamily {
    /// ACS with `λ_n = W(Kn)/T` and `ω = ρ E_n`.
    AdaptiveAcs {
        #[serde(rename = "K")]
        k: f64,
        gamma: f64,
        theta: f64,
        rho: f64,
        #[serde(default = "unit", rename = "T")]
        horizon: f64,
    },
    /// Fisher-optimal `g*` for a constant drift and `λ_n = W(Kn)/T`.
    OptimalGaussian {
        #[serde(rename = "K")]
        k: f64,
        #[serde(default = "unit")]
        drift: f64,
        #[serde(default = "unit", rename = "T")]
        horizon: f64,
    },
    /// The same schedule for every `n`.
    Fixed { schedule: NoiseSchedule<f64> },
}

impl ScheduleFamily {
    pub fn build(&self, n: usize, target: &GaussianTarget) -> Result<NoiseSchedule<f64>> {
        match self {
            ScheduleFamily::AdaptiveAcs {
                k,
                gamma,
                theta,
                rho,
                horizon,
            } => adaptive_params(*k, *gamma, *theta, *rho, n, *horizon)?.schedule(),
            ScheduleFamily::OptimalGaussian { k, drift, horizon } => {
                let lambda = lambda_adaptive(*k, n, *horizon)?.lambda;
                let f = *drift;
                optimal_g_gaussian(target, Arc::new(move |_| f), lambda, *horizon)
            }
            ScheduleFamily::Fixed { schedule } => Ok(schedule.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditCase {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub family: ScheduleFamily,
    pub n: usize,
}

/// Random adaptive-ACS draws added to the audit battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcsDraws {
    pub count: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundAuditSpec {
    pub target: GaussianTarget,
    #[serde(default)]
    pub cases: Vec<AuditCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acs_draws: Option<AcsDraws>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmSanitySpec {
    pub target: GmmTarget,
    pub schedule: NoiseSchedule<f64>,
    #[serde(default = "default_gmm_n")]
    pub n: usize,
    #[serde(default = "default_gmm_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub assert: GmmAssert,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmAssert {
    /// Maximum absolute error of each recovered mode weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_tol: Option<f64>,
    /// Maximum error of each recovered mode mean, in standard errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_sigmas: Option<f64>,
}

fn parse_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    Error::Parse {
        path: e.path().to_string(),
        detail: e.inner().to_string(),
    }
}

fn strictly_increasing<T: PartialOrd>(field: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::validation(field, "must not be empty"));
    }
    if v.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::validation(field, "must be sorted in strictly increasing order"));
    }
    Ok(())
}

fn positive_count(field: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::validation(field, "must be at least 1"));
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentSpec::UCurve(_) => ExperimentKind::UCurve,
            ExperimentSpec::NScaling(_) => ExperimentKind::NScaling,
            ExperimentSpec::BoundAudit(_) => ExperimentKind::BoundAudit,
            ExperimentSpec::GmmSanity(_) => ExperimentKind::GmmSanity,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentSpec::UCurve(s) => s.seed,
            ExperimentSpec::NScaling(s) => s.seed,
            ExperimentSpec::BoundAudit(s) => s.seed,
            ExperimentSpec::GmmSanity(s) => s.seed,
        }
    }

    pub fn output(&self) -> Option<&str> {
        match self {
            ExperimentSpec::UCurve(s) => s.output.as_deref(),
            ExperimentSpec::NScaling(s) => s.output.as_deref(),
            ExperimentSpec::BoundAudit(s) => s.output.as_deref(),
            ExperimentSpec::GmmSanity(s) => s.output.as_deref(),
        }
    }

    /// Parses and validates a spec; failures name the offending field path.
    pub fn from_value(mut value: Value) -> Result<Self> {
        let obj = value.as_object_mut().ok_or_else(|| Error::Parse {
            path: ".".into(),
            detail: "experiment spec must be an object".into(),
        })?;
        let kind = match obj.remove("kind") {
            Some(Value::String(s)) => s,
            Some(_) => {
                return Err(Error::Parse {
                    path: "kind".into(),
                    detail: "must be a string".into(),
                })
            }
            None => {
                return Err(Error::Parse {
                    path: "kind".into(),
                    detail: "missing experiment kind".into(),
                })
            }
        };
        let kind = ExperimentKind::from_tag(&kind).ok_or_else(|| Error::Parse {
            path: "kind".into(),
            detail: format!("unknown experiment kind `{kind}`; expected u-curve, n-scaling, bound-audit or gmm-sanity"),
        })?;
        let spec = match kind {
            ExperimentKind::UCurve => ExperimentSpec::UCurve(serde_path_to_error::deserialize(value).map_err(parse_error)?),
            ExperimentKind::NScaling => ExperimentSpec::NScaling(serde_path_to_error::deserialize(value).map_err(parse_error)?),
            ExperimentKind::BoundAudit => ExperimentSpec::BoundAudit(serde_path_to_error::deserialize(value).map_err(parse_error)?),
            ExperimentKind::GmmSanity => ExperimentSpec::GmmSanity(serde_path_to_error::deserialize(value).map_err(parse_error)?),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: format!("line {}, column {}", e.line(), e.column()),
            detail: e.to_string(),
        })?;
        Self::from_value(value)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse {
            path: ".".into(),
            detail: e.to_string(),
        })?;
        let value = serde_json::to_value(table).map_err(|e| Error::Parse {
            path: ".".into(),
            detail: e.to_string(),
        })?;
        Self::from_value(value)
    }

    /// Reads a `.toml` file as TOML and anything else as JSON.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            _ => Self::from_json(&text),
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentSpec::UCurve(s) => {
                strictly_increasing("energies", &s.energies)?;
                if s.energies.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                    return Err(Error::validation("energies", "every energy must be positive and finite"));
                }
                positive_count("n", s.n)?;
                if !(s.horizon > 0.0 && s.horizon.is_finite()) {
                    return Err(Error::validation("T", "must be positive and finite"));
                }
            }
            ExperimentSpec::NScaling(s) => {
                strictly_increasing("n", &s.n)?;
                positive_count("n[0]", s.n[0])?;
                if let Some([lo, hi]) = s.assert.slope_range {
                    if !(lo <= hi) {
                        return Err(Error::validation("assert.slope_range", "lower end exceeds upper end"));
                    }
                }
            }
            ExperimentSpec::BoundAudit(s) => {
                if s.cases.is_empty() && s.acs_draws.is_none_or(|d| d.count == 0) {
                    return Err(Error::validation("cases", "the audit needs at least one case or ACS draw"));
                }
                for (i, c) in s.cases.iter().enumerate() {
                    positive_count(&format!("cases[{i}].n"), c.n)?;
                }
                if let Some(d) = s.acs_draws {
                    positive_count("acs_draws.n", d.n)?;
                }
            }
            ExperimentSpec::GmmSanity(s) => {
                if s.target.dim() > 2 {
                    return Err(Error::validation("target", "mixture sanity runs support d = 1 or 2"));
                }
                positive_count("n", s.n)?;
                if s.paths < MIN_GMM_PATHS {
                    return Err(Error::validation("paths", format!("must be at least {MIN_GMM_PATHS}")));
                }
                if let Some(tol) = s.assert.weight_tol {
                    if !(tol > 0.0) {
                        return Err(Error::validation("assert.weight_tol", "must be positive"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u_curve_defaults() {
        let spec = ExperimentSpec::from_json(r#"{"kind": "u-curve"}"#).unwrap();
        let ExperimentSpec::UCurve(s) = spec else { panic!() };
        assert_eq!(s.energies.len(), 20);
        assert_eq!((s.energies[0], s.energies[19]), (0.5, 50.0));
        assert_eq!(s.n, 100);
        assert_eq!(s.target.dim(), 2);
    }

    #[test]
    fn errors_carry_field_paths() {
        let e = ExperimentSpec::from_json(r#"{"kind": "u-curve", "assert": {"bogus": 1}}"#).unwrap_err();
        match e {
            Error::Parse { path, .. } => assert!(path.starts_with("assert"), "{path}"),
            e => panic!("{e:?}"),
        }
        let e = ExperimentSpec::from_json(r#"{"kind": "u-curve", "energies": [2.0, 1.0]}"#).unwrap_err();
        assert!(matches!(e, Error::Validation { ref field, .. } if field == "energies"), "{e:?}");
        let e = ExperimentSpec::from_json(r#"{"kind": "v-curve"}"#).unwrap_err();
        assert!(matches!(e, Error::Parse { ref path, .. } if path == "kind"));
        let e = ExperimentSpec::from_json(r#"{"kind": "n-scaling", "target": {"mean": [0], "cov_diag": [1]}, "n": [8, 16], "family": {"kind": "adaptive-acs", "K": 1, "gamma": 2, "theta": 0.5, "rho": 0.1}, "extra": 0}"#)
            .unwrap_err();
        assert!(matches!(e, Error::Parse { .. }), "{e:?}");
    }

    #[test]
    fn toml_and_json_agree() {
        let toml = r#"
kind = "n-scaling"
n = [16, 32, 64]
seed = 3
[target]
mean = [0.0, 0.0]
cov_diag = [1.0, 1.0]
[family]
kind = "adaptive-acs"
K = 37.323
gamma = 1.997
theta = 0.564
rho = 0.178
"#;
        let a = ExperimentSpec::from_toml(toml).unwrap();
        let b = ExperimentSpec::from_value(a.to_value()).unwrap();
        assert_eq!(a.to_value(), b.to_value());
        assert_eq!(a.kind(), ExperimentKind::NScaling);
        assert_eq!(a.seed(), 3);
    }

    #[test]
    fn gmm_path_budget_enforced() {
        let text = r#"{"kind": "gmm-sanity", "target": {"weights": [1.0], "means": [[0.0]], "nu": 1.0},
            "schedule": {"kind": "ou", "T": 4.0}, "paths": 100}"#;
        assert!(matches!(ExperimentSpec::from_json(text), Err(Error::Validation { .. })));
    }
}
