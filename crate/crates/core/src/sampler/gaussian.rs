use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::paths::{affine_scores, check_coverage};
use super::{initial_variance, plan, SamplerConfig};
use crate::error::{Error, Result};
use crate::schedules::{map_score, NoiseSchedule};
use crate::targets::GaussianTarget;

/// Eigenvalues below this flag a covariance that is not positive-semidefinite.
const PSD_FLOOR: f64 = -1e-12;

/// Exact law `N(mean, cov)` of the chain state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainWire", into = "ChainWire")]
pub struct GaussianChainState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainWire {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl From<GaussianChainState> for ChainWire {
    fn from(s: GaussianChainState) -> Self {
        let d = s.mean.len();
        ChainWire {
            mean: s.mean.iter().copied().collect(),
            cov: (0..d).map(|i| s.cov.row(i).iter().copied().collect()).collect(),
        }
    }
}

impl TryFrom<ChainWire> for GaussianChainState {
    type Error = Error;

    fn try_from(w: ChainWire) -> Result<Self> {
        let d = w.mean.len();
        if w.cov.len() != d || w.cov.iter().any(|r| r.len() != d) {
            return Err(Error::validation("cov", format!("must be {d}x{d}")));
        }
        let flat: Vec<f64> = w.cov.into_iter().flatten().collect();
        Self::new(DVector::from_vec(w.mean), DMatrix::from_row_slice(d, d, &flat))
    }
}

impl GaussianChainState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let state = Self { mean, cov };
        state.check_psd(f64::NAN)?;
        Ok(state)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn check_psd(&self, at: f64) -> Result<()> {
        let min = SymmetricEigen::new(self.cov.clone()).eigenvalues.min();
        if !(min >= PSD_FLOOR) {
            return Err(Error::numeric("propagate_gaussian", at, format!("covariance eigenvalue {min:e} below floor")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("chain state serializes")
    }
}

fn require_gaussian(config: &SamplerConfig) -> Result<&GaussianTarget> {
    config
        .target
        .as_gaussian()
        .ok_or_else(|| Error::validation("target", "exact law propagation is available for Gaussian targets only"))
}

fn propagate(config: &SamplerConfig, scores: &[(DMatrix<f64>, DVector<f64>)]) -> Result<GaussianChainState> {
    let steps = plan(config)?;
    let d = config.target.dim();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut mean = DVector::zeros(d);
    let mut cov = &eye * initial_variance(config)?;
    for (i, (step, (c, off))) in steps.iter().zip(scores).enumerate() {
        let k = step.coeffs;
        let m = &eye * k.a + c * k.b;
        mean = &m * mean + off * k.b;
        cov = &m * cov * m.transpose() + &eye * k.v;
        cov = (&cov + cov.transpose()) * 0.5;
        if !mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
            return Err(Error::numeric(
                "propagate_gaussian",
                step.t_score,
                format!("chain law overflowed at step {i}"),
            ));
        }
    }
    let state = GaussianChainState { mean, cov };
    state.check_psd(config.delta)?;
    Ok(state)
}

/// Exact `(mean, covariance)` of the terminal chain state for a Gaussian target.
///
/// Each frozen score is affine, `s = C_k x + c_k`, so every step is an affine
/// map plus isotropic noise and the law stays Gaussian. No randomness.
pub fn propagate_gaussian(config: &SamplerConfig) -> Result<GaussianChainState> {
    require_gaussian(config)?;
    let steps = plan(config)?;
    let scores = affine_scores(&config.target, &steps)
        .ok_or_else(|| Error::numeric("propagate_gaussian", config.horizon(), "smoothed covariance is singular"))?;
    propagate(config, &scores)
}

/// As [`propagate_gaussian`], but each step's affine score is recovered by
/// probing the score mapped from `source` at `0` and the unit vectors.
pub fn propagate_gaussian_mapped(config: &SamplerConfig, source: &NoiseSchedule<f64>) -> Result<GaussianChainState> {
    let target = require_gaussian(config)?;
    let steps = plan(config)?;
    check_coverage(source, config, &steps)?;
    let d = target.dim();
    let source_score = |t: f64, x: &[f64]| -> Vec<f64> {
        match source.marginal_coeffs(t).and_then(|m| target.score(m.alpha, m.sigma2, x)) {
            Ok(s) => s,
            Err(_) => vec![f64::NAN; x.len()],
        }
    };
    let mut scores = Vec::with_capacity(steps.len());
    for s in &steps {
        let zero = vec![0.0; d];
        let off = DVector::from_vec(map_score(source_score, source, &config.schedule, s.t_score, &zero)?);
        let mut c = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = zero.clone();
            e[j] = 1.0;
            let col = map_score(source_score, source, &config.schedule, s.t_score, &e)?;
            for i in 0..d {
                c[(i, j)] = col[i] - off[i];
            }
        }
        scores.push((c, off));
    }
    propagate(config, &scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::CatalogParams;
    use crate::targets::{GmmTarget, Target};

    #[test]
    fn single_step_by_hand() {
        let g = GaussianTarget::diagonal(vec![0.4, -0.2], vec![0.5, 2.0]).unwrap();
        let ou = NoiseSchedule::ou(1.5).unwrap();
        let cfg = SamplerConfig::new(ou.clone(), g.clone().into(), 1);
        let st = propagate_gaussian(&cfg).unwrap();
        let (h, sig2) = (1.5f64, 1.0 - (-3.0f64).exp());
        let alpha = (-1.5f64).exp();
        let (a, b, v) = (h.exp(), 2.0 * h.exp_m1(), (2.0 * h).exp_m1());
        for (i, (&mu, &var)) in [0.4, -0.2].iter().zip(&[0.5, 2.0]).enumerate() {
            let p = 1.0 / (alpha * alpha * var + sig2);
            let m = a - b * p;
            assert!((st.mean()[i] - b * p * alpha * mu).abs() < 1e-12);
            assert!((st.cov()[(i, i)] - (m * m * sig2 + v)).abs() < 1e-12);
        }
        assert!(st.cov()[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn converges_to_unit_target() {
        let g: Target = GaussianTarget::isotropic(2, 1.0).unwrap().into();
        let dist = |n| {
            let cfg = SamplerConfig::new(NoiseSchedule::ou(6.0).unwrap(), g.clone(), n);
            let st = propagate_gaussian(&cfg).unwrap();
            (st.cov() - DMatrix::<f64>::identity(2, 2)).norm() / 2f64.sqrt()
        };
        // The frozen-score chain is first order: the stationary variance is 1 + h + O(h²).
        let (coarse, fine) = (dist(400), dist(800));
        assert!(coarse < 6.0 / 400.0 * 1.05, "{coarse}");
        assert!((coarse / fine - 2.0).abs() < 0.05, "{}", coarse / fine);
    }

    #[test]
    fn mean_approaches_target_mean() {
        let g: Target = GaussianTarget::diagonal(vec![2.0], vec![0.5]).unwrap().into();
        let err = |n| {
            let cfg = SamplerConfig::new(NoiseSchedule::ou(12.0).unwrap(), g.clone(), n);
            (propagate_gaussian(&cfg).unwrap().mean()[0] - 2.0).abs()
        };
        // At T = 12 the initialization bias is ~1e-10; what remains is step-size error.
        assert!(err(8) > 1e-3);
        assert!(err(32) < 1e-9 && err(128) < 1e-9);
    }

    #[test]
    fn mapped_matches_native() {
        let g: Target = GaussianTarget::diagonal(vec![0.3, -0.5], vec![0.05, 1.5]).unwrap().into();
        let lin = NoiseSchedule::make_catalog(CatalogParams::linear_default(1.0), 1.0).unwrap();
        let cos = NoiseSchedule::make_catalog(CatalogParams::cosine_default(), 1.0).unwrap();
        let cfg = SamplerConfig::new(cos, g, 20);
        let native = propagate_gaussian(&cfg).unwrap();
        let mapped = propagate_gaussian_mapped(&cfg, &lin).unwrap();
        assert!((native.mean() - mapped.mean()).amax() < 1e-10);
        assert!((native.cov() - mapped.cov()).amax() < 1e-10);
    }

    #[test]
    fn mixture_is_rejected_and_json_round_trips() {
        let t: Target = GmmTarget::new(vec![1.0], vec![vec![0.0]], 1.0).unwrap().into();
        let cfg = SamplerConfig::new(NoiseSchedule::ou(1.0).unwrap(), t, 3);
        assert!(propagate_gaussian(&cfg).is_err());
        let g: Target = GaussianTarget::isotropic(2, 1.0).unwrap().into();
        let st = propagate_gaussian(&SamplerConfig::new(NoiseSchedule::ou(1.0).unwrap(), g, 3)).unwrap();
        let back: GaussianChainState = serde_json::from_str(&st.to_json()).unwrap();
        assert_eq!(back, st);
    }
}
