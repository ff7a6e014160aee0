//! Noise schedules `(f, g)` on `[0, T]` and their marginal coefficients.
//!
//! All schedules use forward time `t`; only the sampler works in reverse time.

mod acs;
mod catalog;
mod marginal;
mod transform;

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

pub use acs::{AcsParams, BRANCH_TOL};
pub use catalog::CatalogParams;
pub use transform::{make_g_circle, map_score, reparameterize, score_from_noise_prediction, snr_time_map, TimeMap};

use crate::error::{Error, Result};
use crate::real::{Extended, Real};
use marginal::MarginalTable;

/// Shared scalar function of time.
pub type Curve<R> = Arc<dyn Fn(R) -> R + Send + Sync>;

/// Points used to spot-check class membership of user-supplied pairs.
const CLASS_CHECK_POINTS: usize = 200;

/// `α_t` and `σ_t²` of the forward marginal `X_t = α_t X_0 + σ_t Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalCoeffs<R> {
    pub alpha: R,
    pub sigma2: R,
}

/// Piecewise cubic Hermite representation of `(f, g)` on explicit nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tabulated<R> {
    pub t: Vec<R>,
    pub f: Vec<R>,
    pub df: Vec<R>,
    pub g: Vec<R>,
    pub dg: Vec<R>,
}

impl<R: Real> Tabulated<R> {
    fn validate(&self, horizon: R) -> Result<()> {
        let n = self.t.len();
        if n < 2 {
            return Err(Error::validation("params.t", "needs at least two nodes"));
        }
        for (name, v) in [("params.f", &self.f), ("params.df", &self.df), ("params.g", &self.g), ("params.dg", &self.dg)] {
            if v.len() != n {
                return Err(Error::validation(name, format!("length {} differs from t ({n})", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(name, "entries must be finite"));
            }
        }
        if self.t[0] != R::zero() || self.t[n - 1] != horizon {
            return Err(Error::validation("params.t", "nodes must span exactly [0, T]"));
        }
        if self.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("params.t", "nodes must be strictly increasing"));
        }
        Ok(())
    }

    fn hermite(&self, values: &[R], slopes: &[R], t: R) -> R {
        let n = self.t.len();
        let k = self.t.partition_point(|&x| x <= t).clamp(1, n - 1) - 1;
        let (t0, t1) = (self.t[k], self.t[k + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).max(R::zero()).min(R::one());
        let s2 = s * s;
        let s3 = s2 * s;
        let two = R::lit(2.0);
        let three = R::lit(3.0);
        let h00 = two * s3 - three * s2 + R::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        h00 * values[k] + h10 * h * slopes[k] + h01 * values[k + 1] + h11 * h * slopes[k + 1]
    }
}

/// The family a schedule was built from.
#[derive(Clone)]
pub enum ScheduleKind<R> {
    Catalog(CatalogParams<R>),
    Acs(AcsParams<R>),
    Tabulated(Tabulated<R>),
    /// Arbitrary evaluators; usable everywhere but not serializable.
    Custom { label: String, f: Curve<R>, g: Curve<R> },
}

impl<R: Real> fmt::Debug for ScheduleKind<R> {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::Catalog(p) => fm.debug_tuple("Catalog").field(p).finish(),
            ScheduleKind::Acs(p) => fm.debug_tuple("Acs").field(p).finish(),
            ScheduleKind::Tabulated(p) => fm.debug_struct("Tabulated").field("nodes", &p.t.len()).finish(),
            ScheduleKind::Custom { label, .. } => fm.debug_struct("Custom").field("label", label).finish(),
        }
    }
}

struct Inner<R> {
    kind: ScheduleKind<R>,
    horizon: R,
    table: OnceLock<std::result::Result<MarginalTable<R>, (f64, String)>>,
}

/// A validated noise schedule. Cloning is cheap and clones share the marginal cache.
#[derive(Clone)]
pub struct NoiseSchedule<R> {
    inner: Arc<Inner<R>>,
}

impl<R: Real> fmt::Debug for NoiseSchedule<R> {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("NoiseSchedule")
            .field("kind", &self.inner.kind)
            .field("T", &self.inner.horizon)
            .finish()
    }
}

fn check_horizon<R: Real>(horizon: R) -> Result<()> {
    if horizon > R::zero() && horizon.is_finite() {
        Ok(())
    } else {
        Err(Error::validation("T", format!("must be positive and finite, got {horizon}")))
    }
}

impl<R: Real> NoiseSchedule<R> {
    fn from_kind(kind: ScheduleKind<R>, horizon: R) -> Self {
        Self {
            inner: Arc::new(Inner {
                kind,
                horizon,
                table: OnceLock::new(),
            }),
        }
    }

    /// One of the standard schedules.
    pub fn make_catalog(params: CatalogParams<R>, horizon: R) -> Result<Self> {
        check_horizon(horizon)?;
        params.validate()?;
        Ok(Self::from_kind(ScheduleKind::Catalog(params), horizon))
    }

    /// Affine-coupled schedule in closed form.
    pub fn make_acs(params: AcsParams<R>, horizon: R) -> Result<Self> {
        check_horizon(horizon)?;
        params.validate()?;
        if let Some(at) = params.singularity(horizon) {
            return Err(Error::SingularSchedule { at: at.as_f64() });
        }
        Ok(Self::from_kind(ScheduleKind::Acs(params), horizon))
    }

    /// Schedule from arbitrary evaluators, spot-checked for class membership.
    pub fn custom(label: impl Into<String>, f: Curve<R>, g: Curve<R>, horizon: R) -> Result<Self> {
        check_horizon(horizon)?;
        let s = Self::from_kind(
            ScheduleKind::Custom {
                label: label.into(),
                f,
                g,
            },
            horizon,
        );
        s.check_class()?;
        Ok(s)
    }

    pub fn tabulated(table: Tabulated<R>, horizon: R) -> Result<Self> {
        check_horizon(horizon)?;
        table.validate(horizon)?;
        let s = Self::from_kind(ScheduleKind::Tabulated(table), horizon);
        s.check_class()?;
        Ok(s)
    }

    /// Ornstein-Uhlenbeck schedule `(1, 2)` on `[0, T]`.
    pub fn ou(horizon: R) -> Result<Self> {
        Self::make_catalog(CatalogParams::ou(), horizon)
    }

    pub fn horizon(&self) -> R {
        self.inner.horizon
    }

    pub fn kind(&self) -> &ScheduleKind<R> {
        &self.inner.kind
    }

    pub fn tag(&self) -> String {
        match &self.inner.kind {
            ScheduleKind::Catalog(p) => p.tag().to_string(),
            ScheduleKind::Acs(_) => "acs".into(),
            ScheduleKind::Tabulated(_) => "tabulated".into(),
            ScheduleKind::Custom { label, .. } => label.clone(),
        }
    }

    /// Drift rate `f(t)`.
    pub fn f(&self, t: R) -> R {
        let horizon = self.inner.horizon;
        match &self.inner.kind {
            ScheduleKind::Catalog(p) => p.drift(t, horizon),
            ScheduleKind::Acs(p) => p.drift(t),
            ScheduleKind::Tabulated(tab) => tab.hermite(&tab.f, &tab.df, t),
            ScheduleKind::Custom { f, .. } => f(t),
        }
    }

    /// Diffusion rate `g(t)`.
    pub fn g(&self, t: R) -> R {
        let horizon = self.inner.horizon;
        match &self.inner.kind {
            ScheduleKind::Catalog(p) => p.diffusion(t, horizon),
            ScheduleKind::Acs(p) => p.diffusion(t),
            ScheduleKind::Tabulated(tab) => tab.hermite(&tab.g, &tab.dg, t),
            ScheduleKind::Custom { g, .. } => g(t),
        }
    }

    /// Drift and diffusion as shareable closures.
    pub fn f_curve(&self) -> Curve<R> {
        let s = self.clone();
        Arc::new(move |t| s.f(t))
    }

    pub fn g_curve(&self) -> Curve<R> {
        let s = self.clone();
        Arc::new(move |t| s.g(t))
    }

    /// Evaluates class membership on a uniform grid: `f ≥ 0`, `g > 0`, finite slope of `g`.
    fn check_class(&self) -> Result<()> {
        let horizon = self.horizon();
        let delta = horizon * R::lit(1e-6);
        for i in 0..CLASS_CHECK_POINTS {
            let t = horizon * R::from_usize_lossy(i) / R::from_usize_lossy(CLASS_CHECK_POINTS - 1);
            let (f, g) = (self.f(t), self.g(t));
            if !f.is_finite() || f < R::zero() {
                return Err(Error::validation("f", format!("must be finite and nonnegative, f({t}) = {f}")));
            }
            if !g.is_finite() || !(g > R::zero()) {
                return Err(Error::validation("g", format!("must be finite and positive, g({t}) = {g}")));
            }
            let t2 = if t + delta <= horizon { t + delta } else { t - delta };
            let slope = (self.g(t2) - g) / delta;
            if !slope.is_finite() {
                return Err(Error::validation("g", format!("slope is not finite near t = {t}")));
            }
        }
        Ok(())
    }

    fn table(&self) -> Result<&MarginalTable<R>> {
        let cell = self.inner.table.get_or_init(|| {
            let f = |t: R| self.f(t);
            let g = |t: R| self.g(t);
            MarginalTable::build(&f, &g, self.horizon()).map_err(|e| match e {
                Error::Numeric { at, detail, .. } => (at, detail),
                other => (f64::NAN, other.to_string()),
            })
        });
        cell.as_ref()
            .map_err(|(at, detail)| Error::numeric("marginal_coeffs", *at, detail.clone()))
    }

    /// Clamps round-off excursions just outside `[0, T]` and rejects real ones.
    fn check_time(&self, t: R) -> Result<R> {
        let horizon = self.horizon();
        let slack = horizon * R::epsilon() * R::lit(64.0);
        if !(t >= -slack && t <= horizon + slack) {
            return Err(Error::domain(
                "marginal_coeffs",
                format!("t = {t} outside [0, {horizon}]"),
            ));
        }
        Ok(t.max(R::zero()).min(horizon))
    }

    /// `(∫₀ᵗ f, σ_t²)`.
    fn integrals(&self, t: R) -> Result<(R, R)> {
        let t = self.check_time(t)?;
        let table = self.table()?;
        let f = |u: R| self.f(u);
        let g = |u: R| self.g(u);
        Ok(table.query(&f, &g, t))
    }

    pub fn marginal_coeffs(&self, t: R) -> Result<MarginalCoeffs<R>> {
        let (big_f, sigma2) = self.integrals(t)?;
        Ok(MarginalCoeffs {
            alpha: (-big_f).exp(),
            sigma2,
        })
    }

    /// `∫₀ᵗ f`, i.e. `−log α_t`.
    pub fn drift_integral(&self, t: R) -> Result<R> {
        Ok(self.integrals(t)?.0)
    }

    /// `α_t² / σ_t²`; unbounded at `t = 0`.
    pub fn snr(&self, t: R) -> Result<Extended<R>> {
        let (big_f, sigma2) = self.integrals(t)?;
        if sigma2 == R::zero() {
            return Ok(Extended::Unbounded);
        }
        Ok(Extended::Finite((R::lit(-2.0) * big_f).exp() / sigma2))
    }

    /// `log(α_t² / σ_t²)`, `+∞` at `t = 0`. Avoids underflow of `α_t²` for long horizons.
    pub fn log_snr(&self, t: R) -> Result<R> {
        let (big_f, sigma2) = self.integrals(t)?;
        if sigma2 == R::zero() {
            return Ok(R::infinity());
        }
        Ok(R::lit(-2.0) * big_f - sigma2.ln())
    }

    /// True for catalog schedules with `g = 2f`.
    pub fn is_variance_preserving(&self) -> bool {
        matches!(&self.inner.kind, ScheduleKind::Catalog(p) if p.is_variance_preserving())
    }

    /// Same object, or the same serializable definition.
    pub fn same_as(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.inner, &other.inner) {
            return true;
        }
        if self.horizon() != other.horizon() {
            return false;
        }
        match (&self.inner.kind, &other.inner.kind) {
            (ScheduleKind::Catalog(a), ScheduleKind::Catalog(b)) => a == b,
            (ScheduleKind::Acs(a), ScheduleKind::Acs(b)) => a == b,
            (ScheduleKind::Tabulated(a), ScheduleKind::Tabulated(b)) => a == b,
            _ => false,
        }
    }

    /// Hermite tabulation on `m` uniform nodes, with slopes by central differences.
    ///
    /// Lets custom schedules (g°, reparameterized pairs) be exported.
    pub fn tabulate(&self, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::validation("m", "tabulation needs at least two nodes"));
        }
        let horizon = self.horizon();
        let t: Vec<R> = (0..m)
            .map(|i| {
                if i + 1 == m {
                    horizon
                } else {
                    horizon * R::from_usize_lossy(i) / R::from_usize_lossy(m - 1)
                }
            })
            .collect();
        let delta = horizon * R::lit(1e-5);
        let slope = |h: &dyn Fn(R) -> R, x: R| {
            let lo = (x - delta).max(R::zero());
            let hi = (x + delta).min(horizon);
            (h(hi) - h(lo)) / (hi - lo)
        };
        let fv = |x: R| self.f(x);
        let gv = |x: R| self.g(x);
        let table = Tabulated {
            f: t.iter().map(|&x| self.f(x)).collect(),
            df: t.iter().map(|&x| slope(&fv, x)).collect(),
            g: t.iter().map(|&x| self.g(x)).collect(),
            dg: t.iter().map(|&x| slope(&gv, x)).collect(),
            t,
        };
        Self::tabulated(table, horizon)
    }

    pub fn to_value(&self) -> Result<Value> {
        let horizon = serde_json::to_value(self.horizon()).map_err(|e| Error::NotSerializable(e.to_string()))?;
        let ser = |v: std::result::Result<Value, serde_json::Error>| v.map_err(|e| Error::NotSerializable(e.to_string()));
        let (kind, params) = match &self.inner.kind {
            ScheduleKind::Catalog(p) => {
                let mut v = ser(serde_json::to_value(p))?;
                let params = v.get_mut("params").map(Value::take).unwrap_or(Value::Null);
                (p.tag().to_string(), params)
            }
            ScheduleKind::Acs(p) => ("acs".to_string(), ser(serde_json::to_value(p))?),
            ScheduleKind::Tabulated(p) => ("tabulated".to_string(), ser(serde_json::to_value(p))?),
            ScheduleKind::Custom { label, .. } => return Err(Error::NotSerializable(label.clone())),
        };
        Ok(json!({ "kind": kind, "T": horizon, "params": params }))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_value()?).expect("value serializes"))
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let wire: Wire<R> = serde_path_to_error::deserialize(value).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            detail: e.inner().to_string(),
        })?;
        wire.build()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let wire: Wire<R> = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            detail: e.inner().to_string(),
        })?;
        wire.build()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire<R> {
    kind: String,
    #[serde(rename = "T")]
    horizon: R,
    #[serde(default)]
    params: Value,
}

fn params_from<T: serde::de::DeserializeOwned>(v: Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| Error::Parse {
        path: format!("params.{}", e.path()),
        detail: e.inner().to_string(),
    })
}

impl<R: Real> Wire<R> {
    fn build(self) -> Result<NoiseSchedule<R>> {
        let Wire { kind, horizon, params } = self;
        match kind.as_str() {
            "acs" => NoiseSchedule::make_acs(params_from(params)?, horizon),
            "tabulated" => NoiseSchedule::tabulated(params_from(params)?, horizon),
            "ou" => NoiseSchedule::ou(horizon),
            "linear" | "cosine" | "sigmoid" | "sigmoid-approx" | "ve-exponential" | "constant" => {
                let p: CatalogParams<R> = serde_json::from_value(json!({ "kind": kind, "params": params }))
                    .map_err(|e| Error::Parse {
                        path: "params".into(),
                        detail: e.to_string(),
                    })?;
                NoiseSchedule::make_catalog(p, horizon)
            }
            other => Err(Error::Parse {
                path: "kind".into(),
                detail: format!("unknown schedule kind `{other}`"),
            }),
        }
    }
}

impl<R: Real> Serialize for NoiseSchedule<R> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_value().map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de, R: Real> Deserialize<'de> for NoiseSchedule<R> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = Wire::<R>::deserialize(d)?;
        wire.build().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ou_marginals() {
        let s = NoiseSchedule::<f64>::ou(1.0).unwrap();
        let m = s.marginal_coeffs(1.0).unwrap();
        assert!((m.alpha - (-1.0f64).exp()).abs() < 1e-14);
        assert!((m.sigma2 - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
        let m0 = s.marginal_coeffs(0.0).unwrap();
        assert_eq!((m0.alpha, m0.sigma2), (1.0, 0.0));
        let snr = s.snr(1.0).unwrap().finite().unwrap();
        assert!((snr - 0.156_518_3).abs() < 1e-6);
        assert!(s.snr(0.0).unwrap().is_unbounded());
        assert!(s.marginal_coeffs(1.5).is_err());
        assert!(s.marginal_coeffs(-0.1).is_err());
    }

    #[test]
    fn ve_exponential_variance() {
        let s = NoiseSchedule::make_catalog(CatalogParams::VeExponential { g0: 1.0, lambda: 1.0 }, 1.0).unwrap();
        let m = s.marginal_coeffs(1.0).unwrap();
        assert_eq!(m.alpha, 1.0);
        assert!((m.sigma2 - (std::f64::consts::E - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn acs_special_cases() {
        let exp = NoiseSchedule::make_acs(
            AcsParams { theta: 0.0, omega: 0.0, lambda: 2.0, g0: 0.5 },
            1.0,
        )
        .unwrap();
        for &t in &[0.0_f64, 0.3, 1.0] {
            let want = 0.5 * (2.0 * t).exp();
            assert!((exp.g(t) - want).abs() < 1e-14 * want);
            assert_eq!(exp.f(t), 0.0);
        }
        let rational = AcsParams { theta: 0.7_f64, omega: 1.5, lambda: 3.0, g0: 2.0 };
        let s = NoiseSchedule::make_acs(rational, 1.0).unwrap();
        for &t in &[0.0, 0.5, 1.0] {
            let g = 2.0 / (1.0 + 2.0 * 0.7 * 2.0 * t);
            assert!((s.g(t) - g).abs() < 1e-14);
            assert!((s.f(t) - (0.7 * g + 1.5)).abs() < 1e-14);
        }
        let sig = NoiseSchedule::make_acs(AcsParams { theta: 0.5_f64, omega: 0.0, lambda: 4.0, g0: 0.3 }, 1.0).unwrap();
        assert_eq!(sig.g(0.0), 0.3);
        for &t in &[0.2_f64, 0.9] {
            let want = 0.3 * 4.0 / (0.3 + (4.0 - 0.3) * (-4.0 * t).exp());
            assert!((sig.g(t) - want).abs() < 1e-13 * want);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let cases = vec![
            NoiseSchedule::make_catalog(CatalogParams::linear_default(1.7), 1.7).unwrap(),
            NoiseSchedule::make_catalog(CatalogParams::Cosine { s: 0.008, f_cap: Some(0.1 + 0.2) }, 1.0).unwrap(),
            NoiseSchedule::make_acs(
                AcsParams { theta: 0.564, omega: 0.1 / 3.0, lambda: std::f64::consts::PI, g0: 1e-7 },
                1.0,
            )
            .unwrap(),
        ];
        for s in cases {
            let text = s.to_json().unwrap();
            let back = NoiseSchedule::<f64>::from_json(&text).unwrap();
            assert!(s.same_as(&back), "{text}");
            assert_eq!(back.to_json().unwrap(), text);
        }
    }

    #[test]
    fn parse_errors_carry_paths() {
        let err = NoiseSchedule::<f64>::from_json(r#"{"kind":"acs","T":1,"params":{"theta":0.5,"omega":0,"lambda":2,"g0":"x"}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("params.g0"), "{err}");
        let err = NoiseSchedule::<f64>::from_json(r#"{"kind":"nope","T":1}"#).unwrap_err();
        assert!(err.to_string().contains("kind"));
        let err = NoiseSchedule::<f64>::from_json(r#"{"kind":"linear","T":1,"params":{"beta_min":2,"beta_max":1}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("beta_max"));
    }

    #[test]
    fn custom_schedules_refuse_export_until_tabulated() {
        let s = NoiseSchedule::<f64>::custom("bump", Arc::new(|t| 1.0 + t), Arc::new(|t| 2.0 + t * t), 1.0).unwrap();
        assert!(matches!(s.to_json(), Err(Error::NotSerializable(_))));
        let tab = s.tabulate(401).unwrap();
        assert!((tab.g(0.37) - s.g(0.37)).abs() < 1e-9);
        let back = NoiseSchedule::<f64>::from_json(&tab.to_json().unwrap()).unwrap();
        assert!(back.same_as(&tab));
    }

    #[test]
    fn degenerate_diffusion_rejected() {
        let err = NoiseSchedule::<f64>::custom("zero", Arc::new(|_| 1.0), Arc::new(|_| 0.0), 1.0).unwrap_err();
        assert!(err.to_string().contains("`g`"));
        assert!(NoiseSchedule::<f64>::custom("neg", Arc::new(|_| -1.0), Arc::new(|_| 1.0), 1.0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let s = NoiseSchedule::<f32>::ou(1.0).unwrap();
        let m = s.marginal_coeffs(1.0).unwrap();
        assert!((m.alpha - (-1.0f32).exp()).abs() < 1e-6);
    }
}
