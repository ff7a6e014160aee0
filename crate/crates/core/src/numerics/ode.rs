use serde::{Deserialize, Serialize};

use super::QuadratureSpec;
use crate::error::{Error, Result};
use crate::real::Real;

/// Strictly increasing, nonnegative time points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeGrid<R>(Vec<R>);

impl<'de, R: Real> Deserialize<'de> for OdeGrid<R> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pts = Vec::<R>::deserialize(d)?;
        OdeGrid::new(pts).map_err(serde::de::Error::custom)
    }
}

impl<R: Real> OdeGrid<R> {
    pub fn new(points: Vec<R>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("grid", "must contain at least one point"));
        }
        if !(points[0] >= R::zero()) {
            return Err(Error::validation("grid", "first point must be nonnegative"));
        }
        if let Some(i) = points.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::validation(
                "grid",
                format!("points must be strictly increasing (index {})", i + 1),
            ));
        }
        Ok(Self(points))
    }

    /// `m` equally spaced points covering `[a, b]` inclusive.
    pub fn uniform(a: R, b: R, m: usize) -> Result<Self> {
        if m == 1 {
            return Self::new(vec![a]);
        }
        if m == 0 || !(b > a) {
            return Err(Error::validation("grid", "need m >= 1 points and b > a"));
        }
        let step = (b - a) / R::from_usize_lossy(m - 1);
        let mut pts: Vec<R> = (0..m).map(|i| a + step * R::from_usize_lossy(i)).collect();
        pts[m - 1] = b;
        Self::new(pts)
    }

    /// `m` points `a + (b − a)(i/(m−1))²`, dense near `a`.
    pub fn quadratic(a: R, b: R, m: usize) -> Result<Self> {
        let uniform = Self::uniform(R::zero(), R::one(), m)?;
        let mut pts: Vec<R> = uniform.0.iter().map(|&u| a + (b - a) * u * u).collect();
        if let Some(last) = pts.last_mut() {
            *last = if m == 1 { a } else { b };
        }
        Self::new(pts)
    }

    pub fn points(&self) -> &[R] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> R {
        self.0[0]
    }

    pub fn last(&self) -> R {
        self.0[self.0.len() - 1]
    }
}

/// Classical fourth-order Runge-Kutta with `steps` equal steps from `t0` to `t1`.
/// `y` is advanced in place.
pub fn rk4_fixed<R, F>(rhs: &F, y: &mut [R], t0: R, t1: R, steps: usize) -> Result<()>
where
    R: Real,
    F: Fn(R, &[R], &mut [R]) -> Result<()>,
{
    let n = y.len();
    let h = (t1 - t0) / R::from_usize_lossy(steps.max(1));
    let half = R::lit(0.5);
    let sixth = R::one() / R::lit(6.0);
    let two = R::lit(2.0);
    let guard = R::max_value().sqrt();
    let mut k1 = vec![R::zero(); n];
    let mut k2 = vec![R::zero(); n];
    let mut k3 = vec![R::zero(); n];
    let mut k4 = vec![R::zero(); n];
    let mut tmp = vec![R::zero(); n];
    let mut t = t0;
    for s in 0..steps.max(1) {
        rhs(t, y, &mut k1)?;
        for i in 0..n {
            tmp[i] = y[i] + half * h * k1[i];
        }
        rhs(t + half * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + half * h * k2[i];
        }
        rhs(t + half * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        let t_next = if s + 1 == steps.max(1) { t1 } else { t + h };
        rhs(t_next, &tmp, &mut k4)?;
        for i in 0..n {
            let yi = y[i] + h * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
            if !yi.is_finite() || yi.abs() > guard {
                return Err(Error::Divergence {
                    last_valid_time: t.as_f64(),
                });
            }
            y[i] = yi;
        }
        t = t_next;
    }
    Ok(())
}

/// Number of RK4 substeps used across an interval of length `dt`.
///
/// At least 8 per grid interval; more when the interval is long relative to
/// `rel_tol^(1/4)`, the step at which the fourth-order global error meets the
/// tolerance for O(1) derivative scales.
pub(crate) fn substeps_for<R: Real>(dt: R, spec: &QuadratureSpec<R>) -> usize {
    let h_max = spec.effective_tol().powf(R::lit(0.25));
    let by_tol = (dt / h_max).ceil().to_usize().unwrap_or(usize::MAX / 2);
    by_tol.max(8)
}

/// Largest number of step doublings tried per grid interval.
const MAX_REFINEMENTS: usize = 14;

/// RK4 across `[t0, t1]`, doubling the step count from `start` until two
/// successive results agree to `rel_tol` componentwise.
pub fn rk4_refined<R, F>(rhs: &F, y: &mut [R], t0: R, t1: R, start: usize, rel_tol: R) -> Result<()>
where
    R: Real,
    F: Fn(R, &[R], &mut [R]) -> Result<()>,
{
    let mut steps = start.max(1);
    let mut coarse = y.to_vec();
    rk4_fixed(rhs, &mut coarse, t0, t1, steps)?;
    for _ in 0..MAX_REFINEMENTS {
        steps *= 2;
        let mut fine = y.to_vec();
        rk4_fixed(rhs, &mut fine, t0, t1, steps)?;
        let agreed = coarse.iter().zip(&fine).all(|(&c, &f)| {
            let scale = f.abs().max(R::min_positive_value().sqrt());
            (c - f).abs() <= rel_tol * scale
        });
        coarse = fine;
        if agreed {
            break;
        }
    }
    y.copy_from_slice(&coarse);
    Ok(())
}

/// Integrates `y' = rhs(t, y)` from `grid.first()` and reports `y` at every grid point.
///
/// Each interval is refined until successive step doublings agree to
/// `spec.rel_tol`. The first row is `y0`. Deterministic for fixed inputs.
pub fn solve_ode<R, F>(rhs: F, y0: &[R], grid: &OdeGrid<R>, spec: &QuadratureSpec<R>) -> Result<Vec<Vec<R>>>
where
    R: Real,
    F: Fn(R, &[R], &mut [R]) -> Result<()>,
{
    let pts = grid.points();
    let mut out = Vec::with_capacity(pts.len());
    let mut y = y0.to_vec();
    out.push(y.clone());
    for w in pts.windows(2) {
        let start = substeps_for(w[1] - w[0], spec);
        rk4_refined(&rhs, &mut y, w[0], w[1], start, spec.effective_tol())?;
        out.push(y.clone());
    }
    Ok(out)
}
