use crate::error::{Error, Result};
use crate::real::Real;

/// Intervals in the cached marginal table.
const NODES: usize = 1024;
/// RK4 substeps per table interval.
const SUBSTEPS: usize = 8;

/// `(∫₀ᵗ f, σ_t²)` tabulated on a uniform grid over `[0, T]`.
///
/// Queries between nodes restart the joint ODE from the nearest node below,
/// so every lookup costs a bounded number of `(f, g)` evaluations.
#[derive(Debug, Clone)]
pub(crate) struct MarginalTable<R> {
    step: R,
    drift_integral: Vec<R>,
    sigma2: Vec<R>,
}

#[inline]
fn rk4_pair<R: Real>(f: &dyn Fn(R) -> R, g: &dyn Fn(R) -> R, y: [R; 2], t0: R, t1: R, steps: usize) -> [R; 2] {
    let h = (t1 - t0) / R::from_usize_lossy(steps);
    let half = R::lit(0.5);
    let two = R::lit(2.0);
    let rhs = |t: R, y: [R; 2]| {
        let ft = f(t);
        [ft, -two * ft * y[1] + g(t)]
    };
    let mut y = y;
    let mut t = t0;
    for s in 0..steps {
        let k1 = rhs(t, y);
        let k2 = rhs(t + half * h, [y[0] + half * h * k1[0], y[1] + half * h * k1[1]]);
        let k3 = rhs(t + half * h, [y[0] + half * h * k2[0], y[1] + half * h * k2[1]]);
        let t_next = if s + 1 == steps { t1 } else { t + h };
        let k4 = rhs(t_next, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        let sixth = h / R::lit(6.0);
        y = [
            y[0] + sixth * (k1[0] + two * k2[0] + two * k3[0] + k4[0]),
            y[1] + sixth * (k1[1] + two * k2[1] + two * k3[1] + k4[1]),
        ];
        t = t_next;
    }
    y
}

impl<R: Real> MarginalTable<R> {
    pub(crate) fn build(f: &dyn Fn(R) -> R, g: &dyn Fn(R) -> R, horizon: R) -> Result<Self> {
        let step = horizon / R::from_usize_lossy(NODES);
        let mut drift_integral = Vec::with_capacity(NODES + 1);
        let mut sigma2 = Vec::with_capacity(NODES + 1);
        let mut y = [R::zero(), R::zero()];
        drift_integral.push(y[0]);
        sigma2.push(y[1]);
        for i in 0..NODES {
            let t0 = step * R::from_usize_lossy(i);
            let t1 = if i + 1 == NODES {
                horizon
            } else {
                step * R::from_usize_lossy(i + 1)
            };
            y = rk4_pair(f, g, y, t0, t1, SUBSTEPS);
            if !(y[0].is_finite() && y[1].is_finite()) {
                return Err(Error::numeric(
                    "marginal_coeffs",
                    t1.as_f64(),
                    "marginal ODE produced a non-finite value",
                ));
            }
            drift_integral.push(y[0]);
            sigma2.push(y[1]);
        }
        Ok(Self {
            step,
            drift_integral,
            sigma2,
        })
    }

    /// `(∫₀ᵗ f, σ_t²)` for `t` in `[0, T]`.
    pub(crate) fn query(&self, f: &dyn Fn(R) -> R, g: &dyn Fn(R) -> R, t: R) -> (R, R) {
        let pos = (t / self.step).floor();
        let idx = pos.to_usize().unwrap_or(0).min(NODES);
        let node_t = self.step * R::from_usize_lossy(idx);
        let base = [self.drift_integral[idx], self.sigma2[idx]];
        if t == node_t || idx == NODES {
            return (base[0], base[1]);
        }
        let y = rk4_pair(f, g, base, node_t, t, SUBSTEPS);
        (y[0], y[1].max(R::zero()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ou_closed_form() {
        let f = |_: f64| 1.0;
        let g = |_: f64| 2.0;
        let table = MarginalTable::build(&f, &g, 3.0).unwrap();
        for &t in &[0.0, 0.123, 1.0, 2.999, 3.0] {
            let (big_f, s2) = table.query(&f, &g, t);
            assert!((big_f - t).abs() < 1e-13);
            let want = 1.0 - (-2.0 * t).exp();
            assert!((s2 - want).abs() < 1e-13 * want.max(1e-300) + 1e-300, "t={t}");
        }
    }

    #[test]
    fn time_varying_variance_exploding() {
        let f = |_: f64| 0.0;
        let g = |t: f64| t.exp();
        let table = MarginalTable::build(&f, &g, 1.0).unwrap();
        let (_, s2) = table.query(&f, &g, 1.0);
        assert!((s2 - (std::f64::consts::E - 1.0)).abs() < 1e-13);
        let (_, s2) = table.query(&f, &g, 0.3);
        assert!((s2 - (0.3f64.exp() - 1.0)).abs() < 1e-14);
    }
}
