use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Below this `|2ω − λ|` the rational branch is used.
pub const BRANCH_TOL: f64 = 1e-9;

/// Affine-coupled schedule parameters: `f = θ g + ω` with `g` solving
/// `g' = −(2θ g + 2ω − λ) g`, `g(0) = g0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcsParams<R> {
    pub theta: R,
    pub omega: R,
    /// Decay rate `λ*` (or its tuned replacement `c = γ λ*`).
    pub lambda: R,
    pub g0: R,
}

impl<R: Real> AcsParams<R> {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("theta", self.theta >= R::zero()),
            ("omega", self.omega >= R::zero()),
            ("lambda", self.lambda > R::zero()),
            ("g0", self.g0 > R::zero()),
        ];
        for (name, ok) in checks {
            let v = match name {
                "theta" => self.theta,
                "omega" => self.omega,
                "lambda" => self.lambda,
                _ => self.g0,
            };
            if !ok || !v.is_finite() {
                let rule = if matches!(name, "theta" | "omega") {
                    "must be nonnegative"
                } else {
                    "must be positive"
                };
                return Err(Error::validation(name, format!("{rule}, got {v}")));
            }
        }
        Ok(())
    }

    fn exponent(&self) -> R {
        R::lit(2.0) * self.omega - self.lambda
    }

    pub fn uses_rational_branch(&self) -> bool {
        self.exponent().abs() <= R::lit(BRANCH_TOL)
    }

    /// `g(t) · denominator(t) = g0`; positive on the whole horizon iff the schedule is regular.
    pub(crate) fn denominator(&self, t: R) -> R {
        let two_theta_g0 = R::lit(2.0) * self.theta * self.g0;
        if self.uses_rational_branch() {
            return R::one() + two_theta_g0 * t;
        }
        let x = self.exponent();
        // (2θg0 + x) e^{xt} − 2θg0, divided by x and written with expm1 for small |x t|.
        let xt = x * t;
        (xt).exp() + two_theta_g0 * (xt).exp_m1() / x
    }

    pub(crate) fn diffusion(&self, t: R) -> R {
        self.g0 / self.denominator(t)
    }

    pub(crate) fn drift(&self, t: R) -> R {
        self.theta * self.diffusion(t) + self.omega
    }

    /// Finds the first zero of the denominator in `[0, T]`, if any.
    ///
    /// The denominator is monotone in `t` and equals 1 at `t = 0`, so a sign
    /// change at `T` brackets the root.
    pub(crate) fn singularity(&self, horizon: R) -> Option<R> {
        if self.denominator(horizon) > R::zero() {
            return None;
        }
        let (mut lo, mut hi) = (R::zero(), horizon);
        for _ in 0..200 {
            let mid = R::lit(0.5) * (lo + hi);
            if self.denominator(mid) > R::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }
}
