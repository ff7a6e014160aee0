use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Parameters of the standard schedules used by diffusion-model codebases.
///
/// All rates are in the schedule's own time units; `T` is supplied separately.
/// Cosine and the exact sigmoid have a drift that diverges at `t = T`; it is
/// clipped at `f_cap` (default `50 / T`) so the pair stays in the admissible
/// class of bounded-slope schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CatalogParams<R> {
    /// VP-linear: `f(t) = (beta_min + (beta_max - beta_min) t / T) / 2`, `g = 2f`.
    Linear { beta_min: R, beta_max: R },
    /// VP-cosine with offset `s`.
    Cosine {
        s: R,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f_cap: Option<R>,
    },
    /// VP-sigmoid, exact form derived from the sigmoid `ᾱ_t`.
    Sigmoid {
        theta_min: R,
        theta_max: R,
        tau: R,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f_cap: Option<R>,
    },
    /// VP-sigmoid with the `σ(h(1)) ≈ 1` simplification.
    SigmoidApprox { theta_min: R, theta_max: R, tau: R },
    /// VE-exponential: `f ≡ 0`, `g(t) = g0 · exp(lambda · t)`.
    VeExponential { g0: R, lambda: R },
    /// Constant pair; `(1, 2)` is the Ornstein-Uhlenbeck process.
    Constant { f: R, g: R },
}

fn positive<R: Real>(field: &str, v: R) -> Result<()> {
    if v > R::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be positive and finite, got {v}")))
    }
}

fn finite<R: Real>(field: &str, v: R) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, "must be finite"))
    }
}

impl<R: Real> CatalogParams<R> {
    /// The standard linear schedule, `beta_min = 0.1 / T`, `beta_max = 20 / T`.
    pub fn linear_default(horizon: R) -> Self {
        CatalogParams::Linear {
            beta_min: R::lit(0.1) / horizon,
            beta_max: R::lit(20.0) / horizon,
        }
    }

    pub fn cosine_default() -> Self {
        CatalogParams::Cosine {
            s: R::lit(0.008),
            f_cap: None,
        }
    }

    pub fn ou() -> Self {
        CatalogParams::Constant {
            f: R::one(),
            g: R::lit(2.0),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            CatalogParams::Linear { .. } => "linear",
            CatalogParams::Cosine { .. } => "cosine",
            CatalogParams::Sigmoid { .. } => "sigmoid",
            CatalogParams::SigmoidApprox { .. } => "sigmoid-approx",
            CatalogParams::VeExponential { .. } => "ve-exponential",
            CatalogParams::Constant { .. } => "constant",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CatalogParams::Linear { beta_min, beta_max } => {
                positive("beta_min", beta_min)?;
                finite("beta_max", beta_max)?;
                if !(beta_max > beta_min) {
                    return Err(Error::validation("beta_max", "must exceed beta_min"));
                }
            }
            CatalogParams::Cosine { s, f_cap } => {
                positive("s", s)?;
                if let Some(c) = f_cap {
                    positive("f_cap", c)?;
                }
            }
            CatalogParams::Sigmoid {
                theta_min,
                theta_max,
                tau,
                f_cap,
            } => {
                finite("theta_min", theta_min)?;
                finite("theta_max", theta_max)?;
                if !(theta_max > theta_min) {
                    return Err(Error::validation("theta_max", "must exceed theta_min"));
                }
                positive("tau", tau)?;
                if let Some(c) = f_cap {
                    positive("f_cap", c)?;
                }
            }
            CatalogParams::SigmoidApprox {
                theta_min,
                theta_max,
                tau,
            } => {
                finite("theta_min", theta_min)?;
                finite("theta_max", theta_max)?;
                if !(theta_max > theta_min) {
                    return Err(Error::validation("theta_max", "must exceed theta_min"));
                }
                positive("tau", tau)?;
            }
            CatalogParams::VeExponential { g0, lambda } => {
                positive("g0", g0)?;
                finite("lambda", lambda)?;
                if lambda < R::zero() {
                    return Err(Error::validation("lambda", "must be nonnegative"));
                }
            }
            CatalogParams::Constant { f, g } => {
                finite("f", f)?;
                if f < R::zero() {
                    return Err(Error::validation("f", "must be nonnegative"));
                }
                positive("g", g)?;
            }
        }
        Ok(())
    }

    fn default_cap(horizon: R) -> R {
        R::lit(50.0) / horizon
    }

    pub(crate) fn drift(&self, t: R, horizon: R) -> R {
        let half = R::lit(0.5);
        match *self {
            CatalogParams::Linear { beta_min, beta_max } => {
                half * (beta_min + (beta_max - beta_min) * t / horizon)
            }
            CatalogParams::Cosine { s, f_cap } => {
                let cap = f_cap.unwrap_or_else(|| Self::default_cap(horizon));
                let one = R::one();
                let angle = (t / horizon + s) / (one + s) * R::FRAC_PI_2();
                let raw = R::PI() / (R::lit(2.0) * horizon * (one + s)) * angle.tan();
                // Past pi/2 the tangent changes sign; the drift has already diverged there.
                if raw < R::zero() || !raw.is_finite() {
                    cap
                } else {
                    raw.min(cap)
                }
            }
            CatalogParams::Sigmoid {
                theta_min,
                theta_max,
                tau,
                f_cap,
            } => {
                let cap = f_cap.unwrap_or_else(|| Self::default_cap(horizon));
                let h = |u: R| (u * (theta_max - theta_min) + theta_min) / tau;
                let sig_t = sigmoid(h(t / horizon));
                let sig_1 = sigmoid(h(R::one()));
                let denom = sig_1 - sig_t;
                let scale = (theta_max - theta_min) / (R::lit(2.0) * tau * horizon);
                if denom <= R::zero() {
                    cap
                } else {
                    (scale * sig_t * (R::one() - sig_t) / denom).min(cap)
                }
            }
            CatalogParams::SigmoidApprox {
                theta_min,
                theta_max,
                tau,
            } => {
                let h = (t / horizon * (theta_max - theta_min) + theta_min) / tau;
                (theta_max - theta_min) / (R::lit(2.0) * tau * horizon) * sigmoid(h)
            }
            CatalogParams::VeExponential { .. } => R::zero(),
            CatalogParams::Constant { f, .. } => f,
        }
    }

    pub(crate) fn diffusion(&self, t: R, horizon: R) -> R {
        match *self {
            CatalogParams::VeExponential { g0, lambda } => g0 * (lambda * t).exp(),
            CatalogParams::Constant { g, .. } => g,
            _ => R::lit(2.0) * self.drift(t, horizon),
        }
    }

    /// Variance-preserving members of the catalog (`g = 2f`).
    pub fn is_variance_preserving(&self) -> bool {
        !matches!(
            self,
            CatalogParams::VeExponential { .. } | CatalogParams::Constant { .. }
        )
    }
}

fn sigmoid<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}
