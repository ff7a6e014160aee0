use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;

use super::kl::exact_sampling_kl;
use super::result::{ExperimentResult, Metadata, PropertyCheck, Record, RESULT_FORMAT_VERSION, TOOL_NAME, TOOL_VERSION};
use super::spec::{
    AuditCase, BoundAuditSpec, ExperimentKind, ExperimentSpec, GmmSanitySpec, NScalingSpec, ScheduleFamily, UCurveSpec,
};
use crate::control::{adaptive_params, fisher_ode_solve, girsanov_bound_gaussian, kl_upper_bound};
use crate::error::{Error, Result};
use crate::numerics::{linear_fit, OdeGrid};
use crate::sampler::{propagate_gaussian, sample_paths, SamplerConfig, Samples};
use crate::schedules::{CatalogParams, NoiseSchedule};
use crate::targets::{GaussianTarget, MomentMethod, Target};

/// Grid points of the Fisher trajectory behind the variational bound,
/// spaced quadratically so the fast decay of `J` near `t = 0` is resolved.
const TRAJECTORY_POINTS: usize = 401;
/// Attempts per ACS draw before the audit gives up on finding a feasible point.
const MAX_DRAW_ATTEMPTS: usize = 100;

pub const FLAG_MULTIMODALITY_UNDETECTED: &str = "multimodality-undetected";

/// Runs any experiment kind.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    match spec {
        ExperimentSpec::UCurve(_) => run_u_curve(spec),
        ExperimentSpec::NScaling(_) => run_n_scaling(spec),
        ExperimentSpec::BoundAudit(_) => run_bound_audit(spec),
        ExperimentSpec::GmmSanity(_) => run_gmm_sanity(spec),
    }
}

fn wrong_kind(spec: &ExperimentSpec, want: ExperimentKind) -> Error {
    Error::validation("kind", format!("expected a {want} spec, got {}", spec.kind()))
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn schedule_value(s: &NoiseSchedule<f64>) -> Value {
    s.to_value().unwrap_or(Value::Null)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializes")
}

struct Draft {
    record: Record,
    schedule: Value,
}

fn finish(
    spec: &ExperimentSpec,
    target: Value,
    drafts: Vec<Draft>,
    summary: BTreeMap<String, f64>,
    checks: Vec<PropertyCheck>,
    flags: Vec<String>,
    notes: Vec<String>,
) -> Result<ExperimentResult> {
    let (records, schedules): (Vec<_>, Vec<_>) = drafts.into_iter().map(|d| (d.record, d.schedule)).unzip();
    let result = ExperimentResult {
        metadata: Metadata {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            format_version: RESULT_FORMAT_VERSION,
            kind: spec.kind(),
            seed: spec.seed(),
            grid: records.iter().map(|r: &Record| r.value).collect(),
            target,
            schedules,
            spec: spec.to_value(),
            constants_policy: "unit: bounds hold up to absolute constants".into(),
            notes,
        },
        records,
        summary,
        checks,
        flags,
    };
    result.validate()?;
    Ok(result)
}

/// Exact KL and both sides of the Girsanov decomposition for one schedule.
fn gaussian_point(schedule: &NoiseSchedule<f64>, target: &GaussianTarget, n: usize) -> Result<Record> {
    let exact = exact_sampling_kl(schedule, target, n)?;
    let girsanov = girsanov_bound_gaussian(schedule, target, n)?;
    Ok(Record {
        init_error: Some(exact.init_error),
        disc_proxy: girsanov.term("disc"),
        kl: Some(exact.kl),
        bound: Some(girsanov.total),
        margin: Some(girsanov.total - exact.kl),
        ..Default::default()
    })
}

/// Interior argmin of `kl`, if the grid has an interior.
fn interior_min(kl: &[f64]) -> Option<usize> {
    if kl.len() < 3 {
        return None;
    }
    let (i, _) = kl
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    (i > 0 && i + 1 < kl.len()).then_some(i)
}

/// Points breaking monotonicity toward `argmin` on either flank.
fn flank_violations(kl: &[f64], argmin: usize) -> usize {
    let left = kl[..=argmin].windows(2).filter(|w| w[1] > w[0]).count();
    let right = kl[argmin..].windows(2).filter(|w| w[1] < w[0]).count();
    left + right
}

/// Constant VP schedules `f = E, g = 2E` against the exact sampling KL.
///
/// Each record carries the exact KL, the exact initialization error and the
/// Girsanov discretization term as `disc_proxy`.
pub fn run_u_curve(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let ExperimentSpec::UCurve(s) = spec else {
        return Err(wrong_kind(spec, ExperimentKind::UCurve));
    };
    let UCurveSpec {
        target,
        energies,
        n,
        horizon,
        assert,
        ..
    } = s;
    let drafts = energies
        .par_iter()
        .map(|&e| {
            let schedule = NoiseSchedule::make_catalog(CatalogParams::Constant { f: e / horizon, g: 2.0 * e / horizon }, *horizon)?;
            let (mut record, secs) = timed(|| gaussian_point(&schedule, target, *n))?;
            record.value = e;
            record.wall_time = secs;
            Ok(Draft {
                record,
                schedule: schedule_value(&schedule),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let kl: Vec<f64> = drafts.iter().map(|d| d.record.kl.expect("set")).collect();
    let mut summary = BTreeMap::new();
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let (global, _) = kl.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty grid");
    summary.insert("argmin_energy".into(), energies[global]);
    summary.insert("min_kl".into(), kl[global]);
    let first = &drafts[0].record;
    let init_rel = (first.kl.expect("set") - first.init_error.expect("set")).abs() / first.init_error.expect("set");
    if init_rel.is_finite() {
        summary.insert("smallest_energy_init_rel_gap".into(), init_rel);
    }

    if kl.len() < 3 {
        notes.push("grid has fewer than three points; no minimum is claimed".into());
    } else {
        let (lo, hi) = (kl[0], kl[kl.len() - 1]);
        summary.insert("endpoint_ratio_left".into(), lo / kl[global]);
        summary.insert("endpoint_ratio_right".into(), hi / kl[global]);
        let inner = interior_min(&kl);
        if let Some(factor) = assert.interior_min_factor {
            let detail = match inner {
                Some(i) => format!(
                    "minimum {:.4e} at E = {:.4}; endpoints {:.4e} and {:.4e} are {:.2}x and {:.2}x above it (need {factor}x)",
                    kl[i],
                    energies[i],
                    lo,
                    hi,
                    lo / kl[i],
                    hi / kl[i]
                ),
                None => format!(
                    "minimum {:.4e} sits at the grid endpoint E = {:.4}; no interior minimum",
                    kl[global], energies[global]
                ),
            };
            let passed = inner.is_some_and(|i| lo >= factor * kl[i] && hi >= factor * kl[i]);
            checks.push(PropertyCheck {
                name: "interior-minimum".into(),
                passed,
                detail,
            });
        }
        if assert.monotone_flanks {
            let v = flank_violations(&kl, global);
            checks.push(PropertyCheck {
                name: "monotone-flanks".into(),
                passed: v <= 1,
                detail: format!("{v} grid points break monotonicity toward the minimum (one allowed)"),
            });
        }
    }
    if let Some(rel) = assert.init_dominated_rel {
        checks.push(PropertyCheck {
            name: "init-dominated".into(),
            passed: init_rel <= rel,
            detail: format!(
                "at E = {:.4}: kl {:.4e}, init_error {:.4e}, relative gap {:.4} (limit {rel})",
                energies[0],
                first.kl.expect("set"),
                first.init_error.expect("set"),
                init_rel
            ),
        });
    }
    finish(spec, to_value(target), drafts, summary, checks, vec![], notes)
}

/// Exact KL across step budgets with a least-squares fit of `log kl` on `log n`.
pub fn run_n_scaling(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let ExperimentSpec::NScaling(s) = spec else {
        return Err(wrong_kind(spec, ExperimentKind::NScaling));
    };
    let NScalingSpec {
        target, n, family, assert, ..
    } = s;
    if n.len() < 3 {
        return Err(Error::validation("n", "a slope fit needs at least three step counts"));
    }
    let drafts = n
        .par_iter()
        .map(|&steps| {
            let (point, secs) = timed(|| {
                let schedule = family.build(steps, target)?;
                let record = gaussian_point(&schedule, target, steps)?;
                Ok((record, schedule_value(&schedule)))
            })?;
            let (mut record, schedule) = point;
            record.value = steps as f64;
            record.wall_time = secs;
            Ok(Draft { record, schedule })
        })
        .collect::<Result<Vec<_>>>()?;

    let kl: Vec<f64> = drafts.iter().map(|d| d.record.kl.expect("set")).collect();
    if let Some(i) = kl.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::numeric("run_n_scaling", n[i] as f64, "exact KL is zero; log-log fit undefined"));
    }
    let xs: Vec<f64> = n.iter().map(|&v| (v as f64).ln()).collect();
    let ys: Vec<f64> = kl.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = linear_fit(&xs, &ys);
    let mut summary = BTreeMap::new();
    summary.insert("slope".into(), slope);
    summary.insert("intercept".into(), intercept);
    let mut checks = Vec::new();
    if let Some([lo, hi]) = assert.slope_range {
        checks.push(PropertyCheck {
            name: "slope-range".into(),
            passed: (lo..=hi).contains(&slope),
            detail: format!("fitted slope {slope:.4} against window [{lo}, {hi}]"),
        });
    }
    let notes = vec![format!("family: {}", to_value(family))];
    finish(spec, to_value(target), drafts, summary, checks, vec![], notes)
}

/// Random adaptive-ACS points, reproducible from `seed`.
fn acs_draws(count: usize, n: usize, seed: u64) -> Result<Vec<AuditCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut found = None;
        for _ in 0..MAX_DRAW_ATTEMPTS {
            let family = ScheduleFamily::AdaptiveAcs {
                k: rng.random_range(1.0..50.0),
                gamma: rng.random_range(1.0..3.0),
                theta: rng.random_range(0.2..1.0),
                rho: rng.random_range(0.0..0.9),
                horizon: 1.0,
            };
            if let ScheduleFamily::AdaptiveAcs {
                k,
                gamma,
                theta,
                rho,
                horizon,
            } = family
            {
                if adaptive_params(k, gamma, theta, rho, n, horizon).and_then(|h| h.schedule()).is_ok() {
                    found = Some(family);
                    break;
                }
            }
        }
        let family = found.ok_or_else(|| Error::validation("acs_draws", "no feasible ACS point found"))?;
        out.push(AuditCase {
            label: Some(format!("acs-draw-{i}")),
            family,
            n,
        });
    }
    Ok(out)
}

/// Checks `exact kl ≤ Girsanov total` for every case and records the variational
/// bound alongside without asserting it.
pub fn run_bound_audit(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let ExperimentSpec::BoundAudit(s) = spec else {
        return Err(wrong_kind(spec, ExperimentKind::BoundAudit));
    };
    let BoundAuditSpec {
        target,
        cases,
        acs_draws: draws,
        seed,
        ..
    } = s;
    let mut all = cases.clone();
    if let Some(d) = draws {
        all.extend(acs_draws(d.count, d.n, *seed)?);
    }
    let as_target: Target = target.clone().into();
    let x_norm_sq = target.second_moment();
    let outcomes = all
        .par_iter()
        .enumerate()
        .map(|(i, case)| {
            let start = Instant::now();
            let schedule = case.family.build(case.n, target)?;
            let mut record = gaussian_point(&schedule, target, case.n)?;
            let grid = OdeGrid::quadratic(0.0, schedule.horizon(), TRAJECTORY_POINTS)?;
            let variational = fisher_ode_solve(&schedule, &as_target, &grid, &MomentMethod::default())
                .and_then(|traj| kl_upper_bound(&schedule, &traj, case.n, target.dim(), x_norm_sq));
            let note = match variational {
                Ok(b) => {
                    record.variational_bound = Some(b.total).filter(|v| v.is_finite());
                    None
                }
                Err(e) => Some(format!("case {i}: variational bound unavailable: {e}")),
            };
            record.value = case.n as f64;
            record.label = Some(case.label.clone().unwrap_or_else(|| format!("case-{i}")));
            record.wall_time = start.elapsed().as_secs_f64();
            Ok((
                Draft {
                    record,
                    schedule: schedule_value(&schedule),
                },
                note,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (drafts, notes): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let notes: Vec<String> = notes.into_iter().flatten().collect();

    let mut checks = Vec::new();
    let mut min_margin = f64::INFINITY;
    for d in &drafts {
        let r = &d.record;
        let (kl, bound) = (r.kl.expect("set"), r.bound.expect("set"));
        // Slack for round-off when the bound is tight.
        let passed = kl <= bound + 1e-12 * bound.abs().max(1.0);
        min_margin = min_margin.min(bound - kl);
        checks.push(PropertyCheck {
            name: format!("girsanov[{}]", r.label.as_deref().unwrap_or("")),
            passed,
            detail: format!("kl {kl:.6e} <= bound {bound:.6e} (n = {})", r.value),
        });
    }
    let mut summary = BTreeMap::new();
    summary.insert("min_margin".into(), min_margin);
    finish(spec, to_value(target), drafts, summary, checks, vec![], notes)
}

/// Groups component indices whose means lie closer than `nu`.
fn merge_modes(means: &[Vec<f64>], nu: f64) -> Vec<Vec<usize>> {
    let k = means.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn root(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..k {
        for j in i + 1..k {
            let dist = means[i].iter().zip(&means[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dist < nu {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; k];
    for i in 0..k {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

struct ModeStats {
    count: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
}

fn mode_stats(samples: &Samples, centers: &[Vec<f64>]) -> Vec<ModeStats> {
    let d = samples.dim();
    let mut sums = vec![(0usize, vec![0.0; d], vec![0.0; d]); centers.len()];
    let nearest = |x: &[f64]| {
        centers
            .iter()
            .map(|c| c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("at least one mode")
    };
    for x in samples.rows() {
        let (count, s1, _) = &mut sums[nearest(x)];
        *count += 1;
        for (s, v) in s1.iter_mut().zip(x) {
            *s += v;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .map(|(c, s1, _)| s1.iter().map(|v| v / (*c).max(1) as f64).collect())
        .collect();
    for x in samples.rows() {
        let m = nearest(x);
        let (_, _, s2) = &mut sums[m];
        for ((s, v), mu) in s2.iter_mut().zip(x).zip(&means[m]) {
            *s += (v - mu).powi(2);
        }
    }
    sums.into_iter()
        .zip(means)
        .map(|((count, _, s2), mean)| ModeStats {
            count,
            var: s2.iter().map(|v| v / (count.max(2) - 1) as f64).collect(),
            mean,
        })
        .collect()
}

/// Samples the reverse chain on a mixture and recovers per-mode weights,
/// means and variances by nearest-mean assignment, with CLT standard errors.
///
/// Components closer than `ν` are merged into one effective mode and the run is
/// flagged `multimodality-undetected`. A single Gaussian component is compared
/// against the exact law of the chain instead of the target.
pub fn run_gmm_sanity(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let ExperimentSpec::GmmSanity(s) = spec else {
        return Err(wrong_kind(spec, ExperimentKind::GmmSanity));
    };
    let GmmSanitySpec {
        target,
        schedule,
        n,
        paths,
        seed,
        assert,
        ..
    } = s;
    let d = target.dim();
    let nu2 = target.nu() * target.nu();
    let means: Vec<Vec<f64>> = target.means().iter().map(|m| m.iter().copied().collect()).collect();
    let groups = merge_modes(&means, target.nu());
    let mut flags = Vec::new();
    let mut notes = Vec::new();
    if groups.len() < means.len() {
        flags.push(FLAG_MULTIMODALITY_UNDETECTED.to_string());
        notes.push(format!(
            "{} components collapse to {} effective modes at separation below nu = {}",
            means.len(),
            groups.len(),
            target.nu()
        ));
    }

    // Effective mode weights, means and per-coordinate variances of the target.
    let mut ref_weight = Vec::new();
    let mut ref_mean = Vec::new();
    let mut ref_var = Vec::new();
    for g in &groups {
        let w: f64 = g.iter().map(|&i| target.weights()[i]).sum();
        let mu: Vec<f64> = (0..d)
            .map(|j| g.iter().map(|&i| target.weights()[i] * means[i][j]).sum::<f64>() / w)
            .collect();
        let var: Vec<f64> = (0..d)
            .map(|j| nu2 + g.iter().map(|&i| target.weights()[i] * (means[i][j] - mu[j]).powi(2)).sum::<f64>() / w)
            .collect();
        ref_weight.push(w);
        ref_mean.push(mu);
        ref_var.push(var);
    }
    let config = SamplerConfig::new(schedule.clone(), target.clone().into(), *n)
        .with_paths(*paths)
        .with_seed(*seed);
    if means.len() == 1 {
        let gauss = GaussianTarget::diagonal(means[0].clone(), vec![nu2; d])?;
        let law = propagate_gaussian(&SamplerConfig::new(schedule.clone(), gauss.into(), *n))?;
        ref_mean[0] = law.mean().iter().copied().collect();
        ref_var[0] = law.cov().diagonal().iter().copied().collect();
        notes.push("single component: references are the exact law of the chain".into());
    }

    let start = Instant::now();
    let samples = sample_paths(&config)?;
    let stats = mode_stats(&samples, &ref_mean);
    let secs = start.elapsed().as_secs_f64();

    let total = *paths as f64;
    let mut drafts = Vec::new();
    let mut checks = Vec::new();
    let sched = schedule_value(schedule);
    let push = |drafts: &mut Vec<Draft>, value: usize, label: String, est: f64, se: f64, reference: f64| {
        drafts.push(Draft {
            record: Record {
                value: value as f64,
                label: Some(label),
                estimate: Some(est),
                stderr: Some(se),
                reference: Some(reference),
                wall_time: secs,
                ..Default::default()
            },
            schedule: sched.clone(),
        });
    };
    for (k, st) in stats.iter().enumerate() {
        let w = st.count as f64 / total;
        let w_se = (w * (1.0 - w) / total).sqrt();
        push(&mut drafts, k, format!("weight[{k}]"), w, w_se, ref_weight[k]);
        if let Some(tol) = assert.weight_tol {
            let err = (w - ref_weight[k]).abs();
            checks.push(PropertyCheck {
                name: format!("weight[{k}]"),
                passed: err <= tol,
                detail: format!("weight {w:.5} vs {:.5}: error {err:.5} (limit {tol})", ref_weight[k]),
            });
        }
        for j in 0..d {
            let m_se = (st.var[j] / st.count.max(1) as f64).sqrt();
            push(&mut drafts, k, format!("mean[{k}][{j}]"), st.mean[j], m_se, ref_mean[k][j]);
            if let Some(sig) = assert.mean_sigmas {
                let z = (st.mean[j] - ref_mean[k][j]).abs() / m_se;
                checks.push(PropertyCheck {
                    name: format!("mean[{k}][{j}]"),
                    passed: z <= sig,
                    detail: format!("mean {:.5} vs {:.5}: {z:.2} standard errors (limit {sig})", st.mean[j], ref_mean[k][j]),
                });
            }
            let v_se = st.var[j] * (2.0 / (st.count.max(2) - 1) as f64).sqrt();
            push(&mut drafts, k, format!("var[{k}][{j}]"), st.var[j], v_se, ref_var[k][j]);
        }
    }
    let mut summary = BTreeMap::new();
    summary.insert("effective_modes".into(), groups.len() as f64);
    summary.insert("paths".into(), total);
    let target_value = to_value(&Target::from(target.clone()));
    finish(spec, target_value, drafts, summary, checks, flags, notes)
}
