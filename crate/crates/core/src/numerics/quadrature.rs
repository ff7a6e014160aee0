use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{Extended, Real};

/// Accuracy request for adaptive quadrature and ODE integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec<R> {
    pub rel_tol: R,
    pub max_subdivisions: usize,
}

impl<R: Real> Default for QuadratureSpec<R> {
    fn default() -> Self {
        Self {
            rel_tol: R::lit(1e-10),
            max_subdivisions: 200,
        }
    }
}

impl<R: Real> QuadratureSpec<R> {
    pub fn new(rel_tol: R, max_subdivisions: usize) -> Result<Self> {
        if !(rel_tol > R::zero()) {
            return Err(Error::validation("rel_tol", "must be positive"));
        }
        if max_subdivisions < 1 {
            return Err(Error::validation("max_subdivisions", "must be at least 1"));
        }
        Ok(Self {
            rel_tol,
            max_subdivisions,
        })
    }

    /// Tolerance actually used: the request floored at a few ulps of the scalar type.
    pub(crate) fn effective_tol(&self) -> R {
        self.rel_tol.max(R::epsilon() * R::lit(50.0))
    }
}

/// `(1/a + 1/b)^{-1}`, with `Unbounded` acting as the identity.
pub fn parallel_sum<R: Real>(a: Extended<R>, b: Extended<R>) -> Result<Extended<R>> {
    for v in [a, b] {
        if let Extended::Finite(x) = v {
            if !(x > R::zero()) {
                return Err(Error::domain(
                    "parallel_sum",
                    format!("arguments must be positive, got {x}"),
                ));
            }
        }
    }
    Ok(match (a, b) {
        (Extended::Unbounded, other) | (other, Extended::Unbounded) => other,
        (Extended::Finite(x), Extended::Finite(y)) => Extended::Finite(x * y / (x + y)),
    })
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1], as tabulated.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Segment<R> {
    a: R,
    b: R,
    value: R,
    err: R,
}

impl<R: Real> PartialEq for Segment<R> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<R: Real> Eq for Segment<R> {}
impl<R: Real> PartialOrd for Segment<R> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<R: Real> Ord for Segment<R> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

fn eval<R: Real, F: Fn(R) -> R>(f: &F, x: R) -> Result<R> {
    let y = f(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::numeric(
            "integrate",
            x.as_f64(),
            format!("integrand evaluated to {y}"),
        ))
    }
}

/// One GK15 panel: (kronrod estimate, error estimate, integral of |f|).
fn gk15<R: Real, F: Fn(R) -> R>(f: &F, a: R, b: R) -> Result<(R, R, R)> {
    let half = R::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = eval(f, center)?;
    let mut kronrod = fc * R::lit(WGK[7]);
    let mut gauss = fc * R::lit(WG[3]);
    let mut abs_sum = fc.abs() * R::lit(WGK[7]);
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half_len * R::lit(x);
        let f1 = eval(f, center - dx)?;
        let f2 = eval(f, center + dx)?;
        kronrod = kronrod + R::lit(w) * (f1 + f2);
        abs_sum = abs_sum + R::lit(w) * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss = gauss + R::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let value = kronrod * half_len;
    let err = ((kronrod - gauss) * half_len).abs();
    Ok((value, err, abs_sum * half_len.abs()))
}

/// Adaptive Gauss-Kronrod quadrature of `f` over `[a, b]`.
///
/// The interval with the largest error estimate is bisected until the summed
/// error drops below `rel_tol * |I|` (floored by a multiple of machine epsilon
/// times `∫|f|`, so integrals that cancel to zero still terminate).
pub fn integrate<R: Real, F: Fn(R) -> R>(f: F, a: R, b: R, spec: &QuadratureSpec<R>) -> Result<R> {
    if !(a <= b) {
        return Err(Error::domain(
            "integrate",
            format!("lower limit {a} exceeds upper limit {b}"),
        ));
    }
    if a == b {
        return Ok(R::zero());
    }
    integrate_panels(f, &[a, b], spec)
}

/// As [`integrate`], over the span of increasing `breaks` with one initial
/// panel per gap. Error control is global, so panels that contribute little
/// are not refined to their own relative tolerance.
pub fn integrate_panels<R: Real, F: Fn(R) -> R>(f: F, breaks: &[R], spec: &QuadratureSpec<R>) -> Result<R> {
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("integrate", "breakpoints must be strictly increasing, at least two"));
    }
    let (a, b) = (breaks[0], breaks[breaks.len() - 1]);
    let tol = spec.effective_tol();
    let floor_factor = R::epsilon() * R::lit(100.0);

    let mut total = R::zero();
    let mut total_err = R::zero();
    let mut total_abs = R::zero();
    let mut heap = BinaryHeap::with_capacity(breaks.len() + 2 * spec.max_subdivisions);
    for w in breaks.windows(2) {
        let (v, e, abs) = gk15(&f, w[0], w[1])?;
        total = total + v;
        total_err = total_err + e;
        total_abs = total_abs + abs;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value: v,
            err: e,
        });
    }

    let mut splits = 0;
    while total_err > (tol * total.abs()).max(floor_factor * total_abs) {
        if splits >= spec.max_subdivisions {
            // Accept a near miss; anything worse is reported.
            if total_err > R::lit(1e3) * (tol * total.abs()).max(floor_factor * total_abs) {
                return Err(Error::numeric(
                    "integrate",
                    a.as_f64(),
                    format!(
                        "no convergence after {} subdivisions on [{a}, {b}] (error estimate {total_err})",
                        spec.max_subdivisions
                    ),
                ));
            }
            break;
        }
        let seg = heap.pop().expect("heap never empty");
        let mid = R::lit(0.5) * (seg.a + seg.b);
        let (v1, e1, a1) = gk15(&f, seg.a, mid)?;
        let (v2, e2, a2) = gk15(&f, mid, seg.b)?;
        total = total - seg.value + v1 + v2;
        total_err = total_err - seg.err + e1 + e2;
        total_abs = total_abs + a1 + a2;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            err: e2,
        });
        splits += 1;
        // Re-sum to keep the running totals free of cancellation drift.
        if splits % 32 == 0 {
            total = heap.iter().fold(R::zero(), |s, x| s + x.value);
            total_err = heap.iter().fold(R::zero(), |s, x| s + x.err);
        }
    }
    Ok(heap.iter().fold(R::zero(), |s, x| s + x.value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadratureSpec<f64> {
        QuadratureSpec::default()
    }

    #[test]
    fn elementary_integrals() {
        assert!((integrate(|_| 1.0, 0.0, 1.0, &spec()).unwrap() - 1.0).abs() < 1e-15);
        assert!((integrate(|t| t, 0.0, 1.0, &spec()).unwrap() - 0.5).abs() < 1e-15);
        let e = integrate(f64::exp, 0.0, 1.0, &spec()).unwrap();
        assert!((e - (std::f64::consts::E - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn empty_interval_is_zero() {
        assert_eq!(integrate(|t: f64| t.exp(), 2.0, 2.0, &spec()).unwrap(), 0.0);
    }

    #[test]
    fn reversed_limits_rejected() {
        assert!(integrate(|t: f64| t, 1.0, 0.0, &spec()).is_err());
    }

    #[test]
    fn non_finite_reports_abscissa() {
        let err = integrate(|t: f64| 1.0 / (t - 0.5), 0.0, 1.0, &spec()).unwrap_err();
        match err {
            Error::Numeric { at, .. } => assert_eq!(at, 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cancelling_integral_terminates() {
        let v = integrate(|t: f64| (2.0 * std::f64::consts::PI * t).sin(), 0.0, 1.0, &spec()).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn peaked_integrand() {
        let s = 0.02_f64;
        let v = integrate(
            |x: f64| (-(x - 0.3) * (x - 0.3) / (2.0 * s * s)).exp(),
            -1.0,
            1.0,
            &spec(),
        )
        .unwrap();
        let exact = s * (2.0 * std::f64::consts::PI).sqrt();
        assert!(((v - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn panels_match_single_interval() {
        let f = |x: f64| (-(x - 3.0).powi(2) * 50.0).exp() + (-(x + 3.0).powi(2) * 50.0).exp();
        let breaks: Vec<f64> = (0..=24).map(|i| -6.0 + 0.5 * i as f64).collect();
        let v = integrate_panels(f, &breaks, &spec()).unwrap();
        let exact = 2.0 * (std::f64::consts::PI / 50.0).sqrt();
        assert!((v - exact).abs() < 1e-12 * exact);
        assert!(integrate_panels(f, &[1.0, 1.0], &spec()).is_err());
    }

    #[test]
    fn parallel_sum_cases() {
        let f = Extended::Finite;
        assert_eq!(parallel_sum(f(1.0), f(1.0)).unwrap(), f(0.5));
        assert_eq!(parallel_sum(f(3.5), Extended::Unbounded).unwrap(), f(3.5));
        let v = parallel_sum(f(2.0_f64), f(3.0)).unwrap().finite().unwrap();
        assert!((v - 1.0 / (0.5 + 1.0 / 3.0)).abs() < 1e-15);
        assert!((v - 1.2).abs() < 1e-15);
        assert!(parallel_sum(f(0.0), f(1.0)).is_err());
        assert!(parallel_sum(f(-1.0), f(1.0)).is_err());
        assert!(parallel_sum::<f64>(Extended::Unbounded, Extended::Unbounded)
            .unwrap()
            .is_unbounded());
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::new(0.0_f64, 10).is_err());
        assert!(QuadratureSpec::new(1e-8_f64, 0).is_err());
        assert!(QuadratureSpec::new(1e-8_f64, 1).is_ok());
    }
}
