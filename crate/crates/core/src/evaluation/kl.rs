use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{propagate_gaussian, SamplerConfig};
use crate::schedules::NoiseSchedule;
use crate::targets::GaussianTarget;

/// `KL(N(μ1, Σ1) ‖ N(μ2, Σ2))`.
pub fn kl_gaussians(mu1: &DVector<f64>, cov1: &DMatrix<f64>, mu2: &DVector<f64>, cov2: &DMatrix<f64>) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || cov1.shape() != (d, d) || cov2.shape() != (d, d) {
        return Err(Error::validation("cov", "dimensions of the two Gaussians differ"));
    }
    if mu1 == mu2 && cov1 == cov2 {
        return Ok(0.0);
    }
    let chol2 = Cholesky::new(cov2.clone())
        .ok_or_else(|| Error::numeric("kl_gaussians", f64::NAN, "second covariance is not positive-definite"))?;
    let chol1 = Cholesky::new(cov1.clone())
        .ok_or_else(|| Error::validation("cov1", "first covariance is not positive-definite"))?;
    let log_det = |c: &Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = chol2.solve(cov1).trace();
    let diff = mu2 - mu1;
    let maha = diff.dot(&chol2.solve(&diff));
    let kl = 0.5 * (trace + maha - d as f64 + log_det(&chol2) - log_det(&chol1));
    Ok(kl.max(0.0))
}

/// Exact sampling error of the reverse chain on a Gaussian target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingKl {
    /// `KL(p* ‖ p̂*)`.
    pub kl: f64,
    /// `KL(p_T ‖ N(0, σ_T² I))`.
    pub init_error: f64,
}

pub fn exact_sampling_kl(schedule: &NoiseSchedule<f64>, target: &GaussianTarget, n: usize) -> Result<SamplingKl> {
    let cfg = SamplerConfig::new(schedule.clone(), target.clone().into(), n);
    let law = propagate_gaussian(&cfg)?;
    let kl = kl_gaussians(target.mean(), target.cov(), law.mean(), law.cov())?;
    let m = schedule.marginal_coeffs(schedule.horizon())?;
    let d = target.dim();
    let init_error = kl_gaussians(
        &(target.mean() * m.alpha),
        &target.smoothed_cov(m.alpha, m.sigma2),
        &DVector::zeros(d),
        &(DMatrix::identity(d, d) * m.sigma2),
    )?;
    Ok(SamplingKl { kl, init_error })
}
