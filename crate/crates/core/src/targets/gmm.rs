use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MomentMethod, SmoothedMoments};
use crate::error::{Error, Result};
use crate::numerics::{integrate_panels, QuadratureSpec};

/// Monte Carlo samples per independently seeded block.
const MC_BLOCK: usize = 1024;
/// Half-width of the quadrature support in effective standard deviations.
const SUPPORT_WIDTH: f64 = 12.0;

/// `Σ π_i N(μ_i, ν² I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmWire", into = "GmmWire")]
pub struct GmmTarget {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    nu: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GmmWire {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    nu: f64,
}

impl TryFrom<GmmWire> for GmmTarget {
    type Error = Error;
    fn try_from(w: GmmWire) -> Result<Self> {
        GmmTarget::new(w.weights, w.means, w.nu)
    }
}

impl From<GmmTarget> for GmmWire {
    fn from(g: GmmTarget) -> Self {
        GmmWire {
            weights: g.weights,
            means: g.means.iter().map(|m| m.iter().copied().collect()).collect(),
            nu: g.nu,
        }
    }
}

/// Log density, score and Hessian of a smoothed mixture at one point.
#[derive(Debug, Clone)]
pub struct GmmEval {
    pub log_density: f64,
    pub score: DVector<f64>,
    pub hessian: DMatrix<f64>,
    /// Some posterior weight fell below `1e-300`.
    pub weight_underflow: bool,
}

impl GmmTarget {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, nu: f64) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(Error::validation("weights", "need one positive weight per mean"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::validation("weights", "must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation("weights", format!("must sum to 1, got {total}")));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::validation("nu", "must be positive"));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(Error::validation("means", "all means need the same positive dimension"));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("means", "entries must be finite"));
        }
        Ok(Self {
            weights,
            means: means.into_iter().map(DVector::from_vec).collect(),
            nu,
        })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `Σ π_i μ_i`.
    pub fn mean(&self) -> DVector<f64> {
        self.means
            .iter()
            .zip(&self.weights)
            .fold(DVector::zeros(self.dim()), |acc, (m, &w)| acc + m * w)
    }

    /// `E‖X*‖² = Σ π_i ‖μ_i‖² + d ν²`.
    pub fn second_moment(&self) -> f64 {
        let spread: f64 = self.means.iter().zip(&self.weights).map(|(m, w)| w * m.norm_squared()).sum();
        spread + self.dim() as f64 * self.nu * self.nu
    }

    /// Largest pairwise distance between means.
    pub fn delta_mu(&self) -> f64 {
        let mut best = 0.0_f64;
        for (i, a) in self.means.iter().enumerate() {
            for b in &self.means[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        best
    }

    /// Largest distance of a mean from the origin.
    pub fn r_mu(&self) -> f64 {
        self.means.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    /// `(1 + Δ²/(4ν²))^{1/2} · (1 + (1/ν²)(1/d) Σ π_i ‖μ_i − μ̄‖²)`.
    pub fn kappa(&self) -> f64 {
        let nu2 = self.nu * self.nu;
        let delta = self.delta_mu();
        let bar = self.mean();
        let spread: f64 = self
            .means
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| w * (m - &bar).norm_squared())
            .sum();
        (1.0 + delta * delta / (4.0 * nu2)).sqrt() * (1.0 + spread / (nu2 * self.dim() as f64))
    }

    /// Coarser bound `(1 + R²/ν²)(1 + R²/(d ν²))` in terms of `R = max ‖μ_i‖`.
    pub fn kappa_upper(&self) -> f64 {
        let nu2 = self.nu * self.nu;
        let r2 = self.r_mu().powi(2);
        (1.0 + r2 / nu2) * (1.0 + r2 / (self.dim() as f64 * nu2))
    }

    fn smoothed_var(&self, alpha: f64, sigma2: f64) -> Result<f64> {
        let v2 = alpha * alpha * self.nu * self.nu + sigma2;
        if !(v2 > 0.0) || !v2.is_finite() {
            return Err(Error::domain("gmm", format!("smoothed variance {v2} must be positive")));
        }
        Ok(v2)
    }

    /// Posterior log weights `log π_i − ‖x − αμ_i‖²/(2v²)` and their log-sum-exp.
    fn log_posterior(&self, alpha: f64, v2: f64, x: &[f64], out: &mut Vec<f64>) -> f64 {
        out.clear();
        let mut top = f64::NEG_INFINITY;
        for (m, &w) in self.means.iter().zip(&self.weights) {
            let dist2: f64 = x.iter().zip(m.iter()).map(|(xi, mi)| (xi - alpha * mi).powi(2)).sum();
            let lw = w.ln() - dist2 / (2.0 * v2);
            top = top.max(lw);
            out.push(lw);
        }
        let sum: f64 = out.iter().map(|l| (l - top).exp()).sum();
        top + sum.ln()
    }

    pub fn evaluate(&self, alpha: f64, sigma2: f64, x: &[f64]) -> Result<GmmEval> {
        let v2 = self.smoothed_var(alpha, sigma2)?;
        let d = self.dim();
        let mut logw = Vec::with_capacity(self.components());
        let lse = self.log_posterior(alpha, v2, x, &mut logw);
        let mut post_mean = DVector::zeros(d);
        let mut second = DMatrix::zeros(d, d);
        let mut underflow = false;
        for (m, lw) in self.means.iter().zip(&logw) {
            let w = (lw - lse).exp();
            if w < 1e-300 {
                underflow = true;
            }
            post_mean += m * w;
            second += m * m.transpose() * w;
        }
        let cov = second - &post_mean * post_mean.transpose();
        let xv = DVector::from_column_slice(x);
        let score = (&post_mean * alpha - xv) / v2;
        let hessian = DMatrix::identity(d, d) * (-1.0 / v2) + cov * (alpha * alpha / (v2 * v2));
        let log_density = lse - 0.5 * d as f64 * (2.0 * std::f64::consts::PI * v2).ln();
        Ok(GmmEval {
            log_density,
            score,
            hessian,
            weight_underflow: underflow,
        })
    }

    /// Score only; the sampler's inner loop.
    pub fn score(&self, alpha: f64, sigma2: f64, x: &[f64]) -> Result<Vec<f64>> {
        let v2 = self.smoothed_var(alpha, sigma2)?;
        let mut logw = Vec::with_capacity(self.components());
        let lse = self.log_posterior(alpha, v2, x, &mut logw);
        let mut out: Vec<f64> = x.iter().map(|xi| -xi / v2).collect();
        for (m, lw) in self.means.iter().zip(&logw) {
            let c = (lw - lse).exp() * alpha / v2;
            for (o, mi) in out.iter_mut().zip(m.iter()) {
                *o += c * mi;
            }
        }
        Ok(out)
    }

    /// `(‖s‖², ‖∇s‖_F²)` at one point.
    fn pointwise(&self, alpha: f64, sigma2: f64, x: &[f64]) -> Result<(f64, f64)> {
        let e = self.evaluate(alpha, sigma2, x)?;
        Ok((e.score.norm_squared(), e.hessian.norm_squared()))
    }

    pub fn moments(&self, alpha: f64, sigma2: f64, method: &MomentMethod) -> Result<SmoothedMoments> {
        match *method {
            MomentMethod::Quadrature1d => self.moments_quadrature(alpha, sigma2),
            MomentMethod::MonteCarlo { nsamples, seed } => self.moments_mc(alpha, sigma2, nsamples, seed),
        }
    }

    /// Density, score and Hessian of the smoothed law at scalar `x` (d = 1),
    /// without allocating.
    fn eval_scalar(&self, alpha: f64, v2: f64, x: f64) -> (f64, f64, f64) {
        let mut top = f64::NEG_INFINITY;
        for (m, &w) in self.means.iter().zip(&self.weights) {
            top = top.max(w.ln() - (x - alpha * m[0]).powi(2) / (2.0 * v2));
        }
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (m, &w) in self.means.iter().zip(&self.weights) {
            let e = (w.ln() - (x - alpha * m[0]).powi(2) / (2.0 * v2) - top).exp();
            z += e;
            m1 += e * m[0];
            m2 += e * m[0] * m[0];
        }
        let (mean, second) = (m1 / z, m2 / z);
        let p = (top + z.ln()).exp() / (2.0 * std::f64::consts::PI * v2).sqrt();
        let score = (alpha * mean - x) / v2;
        let hess = -1.0 / v2 + (second - mean * mean) * alpha * alpha / (v2 * v2);
        (p, score, hess)
    }

    fn moments_quadrature(&self, alpha: f64, sigma2: f64) -> Result<SmoothedMoments> {
        if self.dim() != 1 {
            return Err(Error::validation("method", "quadrature moments need d = 1"));
        }
        let v2 = self.smoothed_var(alpha, sigma2)?;
        let v = v2.sqrt();
        let lo = self.means.iter().map(|m| alpha * m[0]).fold(f64::INFINITY, f64::min) - SUPPORT_WIDTH * v;
        let hi = self.means.iter().map(|m| alpha * m[0]).fold(f64::NEG_INFINITY, f64::max) + SUPPORT_WIDTH * v;
        // Panels about one standard deviation wide so no mode falls between nodes.
        let panels = ((hi - lo) / v).ceil().max(1.0) as usize;
        let width = (hi - lo) / panels as f64;
        let mut breaks: Vec<f64> = (0..panels).map(|k| lo + width * k as f64).collect();
        breaks.push(hi);
        let spec = QuadratureSpec::new(1e-12, 400)?;
        let j = integrate_panels(
            |x| {
                let (p, s, _) = self.eval_scalar(alpha, v2, x);
                p * s * s
            },
            &breaks,
            &spec,
        )?;
        let h = integrate_panels(
            |x| {
                let (p, _, hs) = self.eval_scalar(alpha, v2, x);
                p * hs * hs
            },
            &breaks,
            &spec,
        )?;
        Ok(SmoothedMoments::exact(j, h))
    }

    fn moments_mc(&self, alpha: f64, sigma2: f64, nsamples: usize, seed: u64) -> Result<SmoothedMoments> {
        if nsamples < 100 {
            return Err(Error::validation("nsamples", format!("must be at least 100, got {nsamples}")));
        }
        let v = self.smoothed_var(alpha, sigma2)?.sqrt();
        let d = self.dim();
        let cumulative: Vec<f64> = self
            .weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let blocks = nsamples.div_ceil(MC_BLOCK);
        let partial: Vec<Result<[f64; 4]>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b as u64);
                let count = MC_BLOCK.min(nsamples - b * MC_BLOCK);
                let unit = Uniform::new(0.0, 1.0).expect("valid range");
                let mut x = vec![0.0; d];
                let mut acc = [0.0; 4];
                for _ in 0..count {
                    let u: f64 = unit.sample(&mut rng);
                    let comp = cumulative.partition_point(|&c| c <= u).min(self.components() - 1);
                    for (xi, mi) in x.iter_mut().zip(self.means[comp].iter()) {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *xi = alpha * mi + v * z;
                    }
                    let (sj, sh) = self.pointwise(alpha, sigma2, &x)?;
                    acc[0] += sj;
                    acc[1] += sj * sj;
                    acc[2] += sh;
                    acc[3] += sh * sh;
                }
                Ok(acc)
            })
            .collect();
        let mut tot = [0.0; 4];
        for p in partial {
            let p = p?;
            for k in 0..4 {
                tot[k] += p[k];
            }
        }
        let n = nsamples as f64;
        let j = tot[0] / n;
        let h = tot[2] / n;
        let se = |sum_sq: f64, mean: f64| ((sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0) / n).sqrt();
        Ok(SmoothedMoments {
            j,
            h,
            j_stderr: Some(se(tot[1], j)),
            h_stderr: Some(se(tot[3], h)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_modes() -> GmmTarget {
        GmmTarget::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], 1.0).unwrap()
    }

    #[test]
    fn kappa_of_symmetric_pair() {
        assert!((two_modes().kappa() - 2.0 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn single_component_is_gaussian() {
        let g = GmmTarget::new(vec![1.0], vec![vec![0.5, -1.0]], 0.8).unwrap();
        let (alpha, s2) = (0.6, 0.3);
        let v2 = alpha * alpha * 0.64 + s2;
        let x = [0.2, 0.9];
        let s = g.score(alpha, s2, &x).unwrap();
        assert!((s[0] + (0.2 - alpha * 0.5) / v2).abs() < 1e-14);
        assert!((s[1] + (0.9 + alpha) / v2).abs() < 1e-14);
        let e = g.evaluate(alpha, s2, &x).unwrap();
        assert!((e.hessian[(0, 0)] + 1.0 / v2).abs() < 1e-14);
        assert!(e.hessian[(0, 1)].abs() < 1e-14);
        let m = g.moments(alpha, s2, &MomentMethod::MonteCarlo { nsamples: 2000, seed: 3 }).unwrap();
        assert!((m.h - 2.0 / (v2 * v2)).abs() < 1e-12);
    }

    #[test]
    fn symmetric_score_vanishes_at_origin() {
        let s = two_modes().score(0.8, 0.2, &[0.0]).unwrap();
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn score_matches_finite_differences() {
        let g = GmmTarget::new(vec![0.3, 0.7], vec![vec![-2.0], vec![1.0]], 0.5).unwrap();
        let x = 0.5;
        let h = 1e-5;
        let lp = |y: f64| g.evaluate(1.0, 0.0, &[y]).unwrap().log_density;
        let fd = (lp(x + h) - lp(x - h)) / (2.0 * h);
        let s = g.score(1.0, 0.0, &[x]).unwrap()[0];
        assert!((fd - s).abs() < 1e-6 * s.abs().max(1.0));
    }

    #[test]
    fn quadrature_single_component() {
        let g = GmmTarget::new(vec![1.0], vec![vec![0.3]], 0.5).unwrap();
        let m = g.moments(0.9, 0.1, &MomentMethod::Quadrature1d).unwrap();
        let v2 = 0.81 * 0.25 + 0.1;
        assert!((m.j - 1.0 / v2).abs() < 1e-9 / v2);
        assert!((m.h - 1.0 / (v2 * v2)).abs() < 1e-9 / (v2 * v2));
    }

    #[test]
    fn far_modes_collapse() {
        let g = GmmTarget::new(vec![0.4, 0.6], vec![vec![-10.0], vec![10.0]], 0.5).unwrap();
        let m = g.moments(1.0, 0.0, &MomentMethod::Quadrature1d).unwrap();
        assert!((m.j * 0.25 - 1.0).abs() < 0.01);
    }

    #[test]
    fn mc_rejects_small_budgets() {
        assert!(two_modes()
            .moments(1.0, 0.0, &MomentMethod::MonteCarlo { nsamples: 99, seed: 0 })
            .is_err());
    }

    #[test]
    fn mc_is_seed_deterministic_and_close_to_quadrature() {
        let g = two_modes();
        let mc = MomentMethod::MonteCarlo { nsamples: 20_000, seed: 11 };
        let a = g.moments(0.7, 0.5, &mc).unwrap();
        let b = g.moments(0.7, 0.5, &mc).unwrap();
        assert_eq!(a.j.to_bits(), b.j.to_bits());
        let q = g.moments(0.7, 0.5, &MomentMethod::Quadrature1d).unwrap();
        assert!((a.j - q.j).abs() < 4.0 * a.j_stderr.unwrap());
        assert!((a.h - q.h).abs() < 4.0 * a.h_stderr.unwrap());
    }
}
