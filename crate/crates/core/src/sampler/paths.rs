use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{initial_variance, plan, SamplerConfig, Samples, StepPlan};
use crate::error::{Error, Result};
use crate::schedules::{map_score, snr_time_map, NoiseSchedule};
use crate::targets::Target;

/// Paths simulated per parallel task. Results do not depend on it.
const CHUNK: usize = 256;

/// Score evaluator for step `k`: writes `s(x)` into the output slice.
type StepScore<'a> = dyn Fn(usize, &[f64], &mut [f64]) -> Result<()> + Sync + 'a;

/// Frozen Gaussian score `s(x) = C x + c` of every step.
pub(crate) fn affine_scores(target: &Target, steps: &[StepPlan]) -> Option<Vec<(DMatrix<f64>, DVector<f64>)>> {
    let g = target.as_gaussian()?;
    steps
        .iter()
        .map(|s| {
            let prec = g.precision(s.alpha, s.sigma2).ok()?;
            let offset = &prec * g.mean() * s.alpha;
            Some((-prec, offset))
        })
        .collect()
}

fn run(config: &SamplerConfig, steps: &[StepPlan], score: &StepScore<'_>) -> Result<Samples> {
    let d = config.target.dim();
    let sd0 = initial_variance(config)?.sqrt();
    let mut data = vec![0.0; config.paths * d];
    data.par_chunks_mut(CHUNK * d)
        .enumerate()
        .try_for_each(|(chunk, block)| -> Result<()> {
            let mut s = vec![0.0; d];
            for (offset, x) in block.chunks_mut(d).enumerate() {
                let path = chunk * CHUNK + offset;
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(path as u64);
                for xi in x.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *xi = sd0 * z;
                }
                for (k, step) in steps.iter().enumerate() {
                    score(k, x, &mut s)?;
                    let c = step.coeffs;
                    let sv = c.v.sqrt();
                    for (xi, si) in x.iter_mut().zip(&s) {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *xi = c.a * *xi + c.b * si + sv * z;
                    }
                    if x.iter().any(|v| !v.is_finite()) {
                        return Err(Error::SamplerDivergence { step: k });
                    }
                }
            }
            Ok(())
        })?;
    Ok(Samples::new(config.paths, d, data))
}

/// Simulates `config.paths` independent reverse chains and returns their terminal states.
///
/// Path `i` draws from the ChaCha8 stream `i` of `config.seed`, so the output
/// is bit-identical for any worker count.
pub fn sample_paths(config: &SamplerConfig) -> Result<Samples> {
    let steps = plan(config)?;
    if let Some(affine) = affine_scores(&config.target, &steps) {
        let score = |k: usize, x: &[f64], out: &mut [f64]| -> Result<()> {
            let (c, off) = &affine[k];
            for (i, o) in out.iter_mut().enumerate() {
                *o = off[i] + c.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            Ok(())
        };
        return run(config, &steps, &score);
    }
    let target = &config.target;
    let score = |k: usize, x: &[f64], out: &mut [f64]| -> Result<()> {
        let s = target.score(steps[k].alpha, steps[k].sigma2, x)?;
        out.copy_from_slice(&s);
        Ok(())
    };
    run(config, &steps, &score)
}

/// Reports every step whose score time has no equal-SNR time under `source`.
pub(crate) fn check_coverage(source: &NoiseSchedule<f64>, config: &SamplerConfig, steps: &[StepPlan]) -> Result<()> {
    let mut missing = Vec::new();
    let mut first: Option<Error> = None;
    for (k, s) in steps.iter().enumerate() {
        match snr_time_map(source, &config.schedule, s.t_score) {
            Ok(_) => {}
            Err(e @ Error::Coverage { .. }) => {
                missing.push(k);
                first.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    match first {
        Some(Error::Coverage {
            requested,
            achievable_min,
            achievable_max,
            ..
        }) => Err(Error::Coverage {
            requested,
            achievable_min,
            achievable_max,
            steps: missing,
        }),
        _ => Ok(()),
    }
}

/// As [`sample_paths`], with every score query translated from `source_score`,
/// a score of the same data under `source`, through the equal-SNR time map.
pub fn sample_paths_with_mapped_score<S>(config: &SamplerConfig, source: &NoiseSchedule<f64>, source_score: S) -> Result<Samples>
where
    S: Fn(f64, &[f64]) -> Vec<f64> + Sync,
{
    let steps = plan(config)?;
    check_coverage(source, config, &steps)?;
    let score = |k: usize, x: &[f64], out: &mut [f64]| -> Result<()> {
        let s = map_score(&source_score, source, &config.schedule, steps[k].t_score, x)?;
        out.copy_from_slice(&s);
        Ok(())
    };
    run(config, &steps, &score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{GaussianTarget, GmmTarget};

    fn gaussian_config() -> SamplerConfig {
        let t: Target = GaussianTarget::diagonal(vec![0.5, -1.0], vec![0.3, 2.0]).unwrap().into();
        SamplerConfig::new(NoiseSchedule::ou(2.0).unwrap(), t, 10).with_paths(600).with_seed(17)
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = gaussian_config();
        let a = sample_paths(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_paths(&cfg).unwrap());
        assert_eq!(a, b);
        let c = sample_paths(&cfg.clone().with_seed(18)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn affine_fast_path_matches_generic_score() {
        let cfg = gaussian_config();
        let fast = sample_paths(&cfg).unwrap();
        let target = cfg.target.clone();
        let ou = cfg.schedule.clone();
        let generic = sample_paths_with_mapped_score(&cfg, &ou, |t, x| {
            let m = ou.marginal_coeffs(t).unwrap();
            target.score(m.alpha, m.sigma2, x).unwrap()
        })
        .unwrap();
        for (a, b) in fast.data().iter().zip(generic.data()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn coverage_failure_lists_steps() {
        let t: Target = GaussianTarget::isotropic(1, 1.0).unwrap().into();
        let cfg = SamplerConfig::new(NoiseSchedule::ou(3.0).unwrap(), t.clone(), 5);
        let short = NoiseSchedule::ou(1.0).unwrap();
        let err = sample_paths_with_mapped_score(&cfg, &short, |_, x| x.to_vec()).unwrap_err();
        match err {
            Error::Coverage { steps, .. } => assert_eq!(steps, vec![0, 1, 2, 3]),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn mixture_paths_are_finite() {
        let t: Target = GmmTarget::new(vec![0.5, 0.5], vec![vec![-2.0], vec![2.0]], 0.3).unwrap().into();
        let cfg = SamplerConfig::new(NoiseSchedule::ou(4.0).unwrap(), t, 50).with_paths(100).with_seed(2);
        let s = sample_paths(&cfg).unwrap();
        assert!(s.data().iter().all(|v| v.is_finite()));
    }
}
