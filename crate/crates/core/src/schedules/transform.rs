use std::sync::Arc;

use super::{Curve, NoiseSchedule};
use crate::error::{Error, Result};
use crate::numerics::{integrate, QuadratureSpec};
use crate::real::Real;

/// Grid used to confirm that a time map is strictly increasing.
const MONOTONE_CHECK_POINTS: usize = 1000;

/// `g°(t) = g0 · exp(−∫₀ᵗ (2f − λ))`, paired with the supplied drift.
///
/// Every evaluation of `g` runs an adaptive quadrature of `f`; if it fails the
/// evaluation yields NaN, which the class check or marginal table reports.
pub fn make_g_circle<R: Real>(
    f: Curve<R>,
    lambda: R,
    g0: R,
    horizon: R,
    spec: QuadratureSpec<R>,
) -> Result<NoiseSchedule<R>> {
    if !(lambda > R::zero()) {
        return Err(Error::validation("lambda", "must be positive"));
    }
    if !(g0 > R::zero()) {
        return Err(Error::validation("g0", "must be positive"));
    }
    // Surface quadrature failures eagerly rather than as NaN later.
    let f_check = f.clone();
    integrate(|u| f_check(u), R::zero(), horizon, &spec)?;
    let f_inner = f.clone();
    let g: Curve<R> = Arc::new(move |t: R| {
        let fi = f_inner.clone();
        match integrate(move |u| fi(u), R::zero(), t, &spec) {
            Ok(big_f) => g0 * (lambda * t - R::lit(2.0) * big_f).exp(),
            Err(_) => R::nan(),
        }
    });
    NoiseSchedule::custom("g-circle", f, g, horizon)
}

/// Monotone map `φ` from reverse time of a new schedule on `[0, T₂]` into
/// reverse time of an existing one on `[0, T₁]`.
#[derive(Clone)]
pub struct TimeMap<R> {
    pub phi: Curve<R>,
    pub dphi: Curve<R>,
    /// `T₂`, the horizon of the reparameterized schedule.
    pub horizon: R,
}

impl<R: Real> TimeMap<R> {
    pub fn identity(horizon: R) -> Self {
        Self {
            phi: Arc::new(|u| u),
            dphi: Arc::new(|_| R::one()),
            horizon,
        }
    }

    /// `φ(u) = (T₁ / T₂) u`.
    pub fn linear(source_horizon: R, horizon: R) -> Self {
        let k = source_horizon / horizon;
        Self {
            phi: Arc::new(move |u| k * u),
            dphi: Arc::new(move |_| k),
            horizon,
        }
    }
}

/// Reparameterizes `schedule` by `φ`: `f₂(t) = f₁(T₁ − φ(T₂ − t)) φ'(T₂ − t)`, same for `g`.
///
/// Marginals transform as `α₂(t) = α₁(T₁ − φ(T₂ − t))`, so SNR values are
/// carried to the mapped times unchanged.
pub fn reparameterize<R: Real>(schedule: &NoiseSchedule<R>, map: &TimeMap<R>) -> Result<NoiseSchedule<R>> {
    let t1 = schedule.horizon();
    let t2 = map.horizon;
    if !(t2 > R::zero()) {
        return Err(Error::validation("horizon", "must be positive"));
    }
    let tol = R::lit(1e-12) * t1.max(R::one());
    if ((map.phi)(R::zero())).abs() > tol {
        return Err(Error::validation("phi", "must satisfy phi(0) = 0"));
    }
    if ((map.phi)(t2) - t1).abs() > tol {
        return Err(Error::validation("phi", format!("must satisfy phi(T2) = T1 = {t1}")));
    }
    for i in 0..=MONOTONE_CHECK_POINTS {
        let u = t2 * R::from_usize_lossy(i) / R::from_usize_lossy(MONOTONE_CHECK_POINTS);
        let d = (map.dphi)(u);
        if !(d > R::zero()) || !d.is_finite() {
            return Err(Error::validation(
                "phi",
                format!("derivative must be positive, phi'({u}) = {d}"),
            ));
        }
    }
    let source_time = {
        let phi = map.phi.clone();
        move |t: R| (t1 - phi(t2 - t)).max(R::zero()).min(t1)
    };
    let (sf, sg) = (schedule.clone(), schedule.clone());
    let (st_f, st_g) = (source_time.clone(), source_time);
    let (dphi_f, dphi_g) = (map.dphi.clone(), map.dphi.clone());
    let f: Curve<R> = Arc::new(move |t| sf.f(st_f(t)) * dphi_f(t2 - t));
    let g: Curve<R> = Arc::new(move |t| sg.g(st_g(t)) * dphi_g(t2 - t));
    NoiseSchedule::custom(format!("reparameterized-{}", schedule.tag()), f, g, t2)
}

/// Time `τ` at which schedule `a` has the SNR that `b` has at `t`.
///
/// Bisection on the monotone log-SNR curve of `a` down to adjacent floats.
pub fn snr_time_map<R: Real>(a: &NoiseSchedule<R>, b: &NoiseSchedule<R>, t: R) -> Result<R> {
    if a.same_as(b) {
        b.check_time(t)?;
        return Ok(t);
    }
    let target = b.log_snr(t)?;
    if target == R::infinity() {
        return Ok(R::zero());
    }
    let ta = a.horizon();
    let floor = a.log_snr(ta)?;
    if floor > target {
        return Err(Error::Coverage {
            requested: target.exp().as_f64(),
            achievable_min: floor.exp().as_f64(),
            achievable_max: f64::INFINITY,
            steps: Vec::new(),
        });
    }
    let (mut lo, mut hi) = (R::zero(), ta);
    for _ in 0..200 {
        let mid = R::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if a.log_snr(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Return whichever bracket end is closer in log SNR.
    let dl = (a.log_snr(lo)? - target).abs();
    let dh = (a.log_snr(hi)? - target).abs();
    Ok(if dl < dh { lo } else { hi })
}

/// Score of `b` at `(t, x)` assembled from a score of `a`:
/// `r · s_a(τ, r x)` with `r = σ^a_τ / σ^b_t` and `τ` the equal-SNR time.
pub fn map_score<R, S>(score_a: S, a: &NoiseSchedule<R>, b: &NoiseSchedule<R>, t: R, x: &[R]) -> Result<Vec<R>>
where
    R: Real,
    S: Fn(R, &[R]) -> Vec<R>,
{
    let tau = snr_time_map(a, b, t)?;
    let sa = a.marginal_coeffs(tau)?.sigma2;
    let sb = b.marginal_coeffs(t)?.sigma2;
    if sb == R::zero() {
        return Ok(score_a(tau, x));
    }
    let r = (sa / sb).sqrt();
    let y: Vec<R> = x.iter().map(|&v| r * v).collect();
    Ok(score_a(tau, &y).into_iter().map(|v| r * v).collect())
}

/// Converts a noise prediction `S` at noise level `σ` into a score, `s = −S/σ`.
pub fn score_from_noise_prediction<R: Real>(noise: &[R], sigma: R) -> Vec<R> {
    noise.iter().map(|&e| -e / sigma).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::{AcsParams, CatalogParams};

    #[test]
    fn g_circle_reductions() {
        let spec = QuadratureSpec::default();
        let ve = make_g_circle(Arc::new(|_| 0.0), 1.5, 0.4, 1.0, spec).unwrap();
        assert!((ve.g(0.8) - 0.4 * (1.2f64).exp()).abs() < 1e-12);
        let flat = make_g_circle(Arc::new(|_| 0.75), 1.5, 0.4, 1.0, spec).unwrap();
        assert!((flat.g(0.6) - 0.4).abs() < 1e-13);
    }

    #[test]
    fn g_circle_matches_acs() {
        let p = AcsParams { theta: 0.4, omega: 0.3, lambda: 2.5, g0: 0.9 };
        let acs = NoiseSchedule::make_acs(p, 1.0).unwrap();
        let gc = make_g_circle(acs.f_curve(), p.lambda, p.g0, 1.0, QuadratureSpec::default()).unwrap();
        for i in 0..100 {
            let t = i as f64 / 99.0;
            let (a, b) = (acs.g(t), gc.g(t));
            assert!(((a - b) / a).abs() < 1e-8, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn identity_and_halving_maps() {
        let lin = NoiseSchedule::<f64>::make_catalog(CatalogParams::linear_default(2.0), 2.0).unwrap();
        let same = reparameterize(&lin, &TimeMap::identity(2.0)).unwrap();
        for &t in &[0.0, 0.7, 2.0] {
            assert!((same.f(t) - lin.f(t)).abs() < 1e-15);
        }
        let half = reparameterize(&lin, &TimeMap::linear(2.0, 1.0)).unwrap();
        for &t in &[0.0, 0.25, 1.0] {
            assert!((half.f(t) - 2.0 * lin.f(2.0 * t)).abs() < 1e-13);
            let (a, b) = (half.log_snr(t).unwrap(), lin.log_snr(2.0 * t).unwrap());
            if t > 0.0 {
                assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn decreasing_map_rejected() {
        let ou = NoiseSchedule::<f64>::ou(1.0).unwrap();
        let bad = TimeMap {
            phi: Arc::new(|u: f64| u + 0.3 * (std::f64::consts::TAU * u).sin()),
            dphi: Arc::new(|u: f64| 1.0 + 0.3 * std::f64::consts::TAU * (std::f64::consts::TAU * u).cos()),
            horizon: 1.0,
        };
        assert!(reparameterize(&ou, &bad).is_err());
    }

    #[test]
    fn snr_map_between_ou_horizons() {
        let a = NoiseSchedule::<f64>::ou(2.0).unwrap();
        let b = NoiseSchedule::<f64>::ou(1.0).unwrap();
        let tau = snr_time_map(&a, &b, 0.5).unwrap();
        assert!((tau - 0.5).abs() < 1e-12);
        assert_eq!(snr_time_map(&b, &b, 0.3).unwrap(), 0.3);
    }

    #[test]
    fn snr_map_ve_against_ou() {
        let ve = NoiseSchedule::make_catalog(CatalogParams::VeExponential { g0: 1.0, lambda: 2.0 }, 1.0).unwrap();
        let ou = NoiseSchedule::<f64>::ou(1.0).unwrap();
        let tau = snr_time_map(&ve, &ou, 0.5).unwrap();
        // SNR_ve(τ) = 1 / ((e^{2τ} − 1)/2); SNR_ou(0.5) = e^{-1}/(1 − e^{-1}).
        let target = (-1.0f64).exp() / (1.0 - (-1.0f64).exp());
        let got = 2.0 / ((2.0 * tau).exp() - 1.0);
        assert!(((got - target) / target).abs() < 1e-10);
    }

    #[test]
    fn coverage_gap_reported() {
        let short = NoiseSchedule::<f64>::ou(0.1).unwrap();
        let long = NoiseSchedule::<f64>::ou(1.0).unwrap();
        match snr_time_map(&short, &long, 0.9) {
            Err(Error::Coverage { achievable_min, requested, .. }) => assert!(achievable_min > requested),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn noise_prediction_conversion() {
        assert_eq!(score_from_noise_prediction(&[0.5, -1.0], 2.0), vec![-0.25, 0.5]);
    }
}
