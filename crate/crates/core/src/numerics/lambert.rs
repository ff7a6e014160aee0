use crate::error::{Error, Result};
use crate::real::Real;

const MAX_ITER: usize = 50;

/// Principal branch of the Lambert W function on the nonnegative axis.
///
/// Solves `w * exp(w) = z` by Halley iteration. The seed is `ln(1 + z)` for
/// moderate arguments and the two-term asymptotic `L1 - L2 + L2/L1` for large
/// ones. Arguments close to overflow are handled in log space
/// (`w + ln w = ln z`) so `exp(w)` is never formed.
pub fn lambert_w0<R: Real>(z: R) -> Result<R> {
    if z.is_nan() || z < R::zero() {
        return Err(Error::domain(
            "lambert_w0",
            format!("argument must be a nonnegative number, got {}", z),
        ));
    }
    if z == R::zero() {
        return Ok(R::zero());
    }
    if z.is_infinite() {
        return Ok(R::infinity());
    }

    let one = R::one();
    let two = R::lit(2.0);
    let tol = R::epsilon() * R::lit(4.0);

    if z > R::max_value().sqrt() {
        // Newton on w + ln w - ln z; converges quadratically from the asymptotic seed.
        let lz = z.ln();
        let mut w = lz - lz.ln();
        for _ in 0..MAX_ITER {
            let step = (w + w.ln() - lz) * w / (w + one);
            w = w - step;
            if step.abs() <= tol * w {
                break;
            }
        }
        return Ok(w);
    }

    let mut w = if z < R::lit(3.0) {
        (one + z).ln()
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let resid = w * ew - z;
        let wp1 = w + one;
        let denom = ew * wp1 - (w + two) * resid / (two * wp1);
        let step = resid / denom;
        w = w - step;
        if step.abs() <= tol * (one + w.abs()) {
            break;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(z: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, z.max(1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() > z {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn zero_and_e() {
        assert_eq!(lambert_w0(0.0_f64).unwrap(), 0.0);
        assert!((lambert_w0(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn omega_constant_matches_bisection() {
        let w = lambert_w0(1.0_f64).unwrap();
        assert!((w - bisect(1.0)).abs() < 1e-14);
        assert!((w - 0.567_143_290_409_783_8).abs() < 1e-15);
    }

    #[test]
    fn negative_is_domain_error() {
        assert!(matches!(lambert_w0(-0.1_f64), Err(Error::Domain { .. })));
        assert!(lambert_w0(f64::NAN).is_err());
    }

    #[test]
    fn small_argument_behaves_like_identity() {
        let z = 1e-9_f64;
        let w = lambert_w0(z).unwrap();
        assert!((w - z).abs() < 1e-17);
    }

    #[test]
    fn huge_arguments_take_log_path() {
        for z in [1e160_f64, 1e250, 1e300, f64::MAX] {
            let w = lambert_w0(z).unwrap();
            let lhs = w + w.ln();
            assert!((lhs - z.ln()).abs() < 1e-12 * z.ln(), "z = {z}");
        }
    }

    #[test]
    fn single_precision() {
        let w = lambert_w0(std::f32::consts::E).unwrap();
        assert!((w - 1.0).abs() < 1e-6);
        let w = lambert_w0(1e6_f32).unwrap();
        assert!(((w * w.exp() - 1e6) / 1e6).abs() < 1e-5);
    }
}
