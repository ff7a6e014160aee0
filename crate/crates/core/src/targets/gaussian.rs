use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::SmoothedMoments;
use crate::error::{Error, Result};

/// `N(μ, Σ)` with a cached eigendecomposition of `Σ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GaussianWire", into = "GaussianWire")]
pub struct GaussianTarget {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    diagonal: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianWire {
    mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cov_diag: Option<Vec<f64>>,
}

impl TryFrom<GaussianWire> for GaussianTarget {
    type Error = Error;

    fn try_from(w: GaussianWire) -> Result<Self> {
        match (w.cov, w.cov_diag) {
            (Some(rows), None) => {
                let d = rows.len();
                if rows.iter().any(|r| r.len() != d) {
                    return Err(Error::validation("cov", "must be a square matrix"));
                }
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                GaussianTarget::new(w.mean, DMatrix::from_row_slice(d, d, &flat))
            }
            (None, Some(diag)) => GaussianTarget::diagonal(w.mean, diag),
            _ => Err(Error::validation("cov", "exactly one of `cov` and `cov_diag` is required")),
        }
    }
}

impl From<GaussianTarget> for GaussianWire {
    fn from(g: GaussianTarget) -> Self {
        let mean = g.mean.iter().copied().collect();
        if g.diagonal {
            GaussianWire {
                mean,
                cov: None,
                cov_diag: Some(g.cov.diagonal().iter().copied().collect()),
            }
        } else {
            let d = g.cov.nrows();
            GaussianWire {
                mean,
                cov: Some((0..d).map(|i| g.cov.row(i).iter().copied().collect()).collect()),
                cov_diag: None,
            }
        }
    }
}

impl GaussianTarget {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::validation("mean", "dimension must be at least 1"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::validation("cov", format!("must be {d}x{d}")));
        }
        if cov.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("cov", "entries must be finite"));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::validation("cov", "must be symmetric"));
                }
            }
        }
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || cov[(i, j)] == 0.0));
        let (eigenvalues, eigenvectors) = if diagonal {
            (cov.diagonal(), DMatrix::identity(d, d))
        } else {
            let eig = SymmetricEigen::new(cov.clone());
            (eig.eigenvalues, eig.eigenvectors)
        };
        if eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::validation("cov", "must be positive-definite"));
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov,
            eigenvalues,
            eigenvectors,
            diagonal,
        })
    }

    pub fn diagonal(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if mean.len() != variances.len() {
            return Err(Error::validation("cov_diag", "length must match mean"));
        }
        let cov = DMatrix::from_diagonal(&DVector::from_vec(variances));
        Self::new(mean, cov)
    }

    /// `N(0, s² I_d)`.
    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        Self::diagonal(vec![0.0; d], vec![variance; d])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn is_isotropic(&self) -> bool {
        let (lo, hi) = self.eigen_range();
        self.diagonal && lo == hi
    }

    fn eigen_range(&self) -> (f64, f64) {
        let lo = self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.eigenvalues.iter().copied().fold(0.0, f64::max);
        (lo, hi)
    }

    /// SLC constants `(m*, M*) = (1/λ_max(Σ), 1/λ_min(Σ))`.
    pub fn slc_constants(&self) -> (f64, f64) {
        let (lo, hi) = self.eigen_range();
        (1.0 / hi, 1.0 / lo)
    }

    pub fn kappa(&self) -> f64 {
        let (lo, hi) = self.eigen_range();
        hi / lo
    }

    /// `E‖X*‖² = ‖μ‖² + Tr Σ`.
    pub fn second_moment(&self) -> f64 {
        self.mean.norm_squared() + self.eigenvalues.sum()
    }

    /// Eigenvalues of `A = (α²Σ + σ²I)^{-1}` in the eigenbasis of `Σ`.
    pub(crate) fn precision_spectrum(&self, alpha: f64, sigma2: f64) -> Result<DVector<f64>> {
        let a2 = alpha * alpha;
        let mut out = self.eigenvalues.clone();
        for v in out.iter_mut() {
            let s = a2 * *v + sigma2;
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::numeric("gaussian_score", sigma2, "smoothed covariance is singular"));
            }
            *v = 1.0 / s;
        }
        Ok(out)
    }

    /// `A = (α²Σ + σ²I)^{-1}`.
    pub fn precision(&self, alpha: f64, sigma2: f64) -> Result<DMatrix<f64>> {
        let spec = self.precision_spectrum(alpha, sigma2)?;
        if self.diagonal {
            return Ok(DMatrix::from_diagonal(&spec));
        }
        let q = &self.eigenvectors;
        Ok(q * DMatrix::from_diagonal(&spec) * q.transpose())
    }

    /// `α²Σ + σ²I`, the covariance of `X_t`.
    pub fn smoothed_cov(&self, alpha: f64, sigma2: f64) -> DMatrix<f64> {
        let d = self.dim();
        &self.cov * (alpha * alpha) + DMatrix::identity(d, d) * sigma2
    }

    /// `−(α²Σ + σ²I)^{-1}(x − αμ)`.
    pub fn score(&self, alpha: f64, sigma2: f64, x: &[f64]) -> Result<Vec<f64>> {
        let centered = DVector::from_column_slice(x) - &self.mean * alpha;
        if self.diagonal {
            let spec = self.precision_spectrum(alpha, sigma2)?;
            return Ok(centered.iter().zip(spec.iter()).map(|(c, a)| -c * a).collect());
        }
        let a = self.precision(alpha, sigma2)?;
        Ok((-(a * centered)).iter().copied().collect())
    }

    pub fn log_density(&self, alpha: f64, sigma2: f64, x: &[f64]) -> Result<f64> {
        let spec = self.precision_spectrum(alpha, sigma2)?;
        let centered = DVector::from_column_slice(x) - &self.mean * alpha;
        let rotated = self.eigenvectors.transpose() * centered;
        let quad: f64 = rotated.iter().zip(spec.iter()).map(|(r, a)| r * r * a).sum();
        let log_det: f64 = spec.iter().map(|a| -a.ln()).sum();
        let d = self.dim() as f64;
        Ok(-0.5 * (quad + log_det + d * (2.0 * std::f64::consts::PI).ln()))
    }

    /// `J = Tr A`, `H = Tr A²`; exact.
    pub fn moments(&self, alpha: f64, sigma2: f64) -> Result<SmoothedMoments> {
        let spec = self.precision_spectrum(alpha, sigma2)?;
        Ok(SmoothedMoments::exact(spec.sum(), spec.iter().map(|a| a * a).sum()))
    }
}
