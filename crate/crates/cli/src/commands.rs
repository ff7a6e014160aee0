use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use noise_sched::control::{
    adaptive_params, fisher_ode_solve, girsanov_bound_gaussian, kl_upper_bound, lambda_adaptive, legacy_bound, LegacySchedule,
};
use noise_sched::evaluation::{self, ExperimentSpec, ExportFormat};
use noise_sched::numerics::OdeGrid;
use noise_sched::sampler::{propagate_gaussian, sample_paths, SamplerConfig};
use noise_sched::schedules::NoiseSchedule;
use noise_sched::targets::{inequality_suite, MomentMethod, Target};
use noise_sched::{Extended, Schedule};

use crate::output::{Cell, Format, Report, Table};
use crate::{Failure, Outcome, OUT_DIR_ENV};

fn done(report: Report, format: Format) -> Result<Outcome, Failure> {
    Ok(Outcome {
        stdout: report.render(format),
        passed: true,
    })
}

fn load_value(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if path.extension().and_then(|e| e.to_str()) == Some("toml") {
        toml::from_str::<toml::Table>(&text)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::to_value(t).map_err(|e| e.to_string()))
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn with_path(path: &Path) -> impl Fn(noise_sched::Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

fn load_schedule(path: &Path) -> Result<Schedule, Failure> {
    NoiseSchedule::from_value(load_value(path)?).map_err(with_path(path))
}

fn load_target(path: &Path) -> Result<Target, Failure> {
    Target::from_value(load_value(path)?).map_err(with_path(path))
}

/// Exact for Gaussians and 1D mixtures, Monte Carlo for mixtures in d > 1.
fn moment_method(target: &Target, samples: usize, seed: u64) -> MomentMethod {
    match target {
        Target::Gmm(g) if g.dim() > 1 => MomentMethod::MonteCarlo { nsamples: samples, seed },
        _ => MomentMethod::Quadrature1d,
    }
}

fn out_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))
}

fn schedule_table(schedule: &Schedule, m: usize) -> Result<Table, Failure> {
    if m == 0 {
        return Err(Failure::usage("--grid must be at least 1"));
    }
    let grid = OdeGrid::uniform(0.0, schedule.horizon(), m)?;
    let mut table = Table::new(&["t", "f", "g", "alpha", "sigma2", "snr"]);
    for &t in grid.points() {
        let m = schedule.marginal_coeffs(t)?;
        let snr = match schedule.snr(t)? {
            Extended::Finite(v) => Cell::Num(v),
            Extended::Unbounded => Cell::Unbounded,
        };
        table.push(vec![
            Cell::Num(t),
            Cell::Num(schedule.f(t)),
            Cell::Num(schedule.g(t)),
            Cell::Num(m.alpha),
            Cell::Num(m.sigma2),
            snr,
        ]);
    }
    Ok(table)
}

pub fn schedule_show(config: &Path, grid: usize, format: Format) -> Result<Outcome, Failure> {
    let schedule = load_schedule(config)?;
    let table = schedule_table(&schedule, grid)?;
    let json = json!({ "schedule": schedule.to_value()?, "rows": table.to_json() });
    done(Report { json, table: Some(table) }, format)
}

#[allow(clippy::too_many_arguments)]
pub fn schedule_acs(
    theta: f64,
    rho: f64,
    gamma: f64,
    k: f64,
    n: usize,
    horizon: f64,
    grid: usize,
    format: Format,
) -> Result<Outcome, Failure> {
    let hp = adaptive_params(k, gamma, theta, rho, n, horizon)?;
    let schedule = hp.schedule()?;
    let table = schedule_table(&schedule, grid)?;
    let json = json!({
        "hparams": hp,
        "schedule": schedule.to_value()?,
        "rows": table.to_json(),
    });
    done(Report { json, table: Some(table) }, format)
}

pub fn lambda(k: f64, n: i64, horizon: f64, format: Format) -> Result<Outcome, Failure> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Failure::usage("--K must be positive and finite"));
    }
    if n <= 0 {
        return Err(Failure::usage("--n must be a positive integer"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Failure::usage("--T must be positive and finite"));
    }
    let solve = lambda_adaptive(k, n as usize, horizon)?;
    let json = json!({
        "K": k,
        "n": n,
        "T": horizon,
        "z": solve.z,
        "lambda_n": solve.lambda,
        "e_n": solve.lambda * horizon / 2.0,
    });
    done(Report::json(json), format)
}

pub struct SimulateRequest {
    pub schedule: PathBuf,
    pub target: PathBuf,
    pub n: usize,
    pub paths: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub exact_law: bool,
    pub binary: bool,
}

pub fn simulate(req: &SimulateRequest, format: Format) -> Result<Outcome, Failure> {
    let schedule = load_schedule(&req.schedule)?;
    let target = load_target(&req.target)?;
    if req.exact_law && target.as_gaussian().is_none() {
        return Err(Failure::input(
            "--exact-law: the exact terminal law is available for Gaussian targets only; this target is a mixture",
        ));
    }
    let config = SamplerConfig::new(schedule, target, req.n).with_paths(req.paths).with_seed(req.seed);
    let law = match config.target.as_gaussian() {
        Some(_) => Some(propagate_gaussian(&config)?),
        None => None,
    };
    let samples = sample_paths(&config)?;

    let dir = out_dir(req.out.clone());
    create_dir(&dir)?;
    let (file, kind) = if req.binary {
        (dir.join("samples.bin"), "binary")
    } else {
        (dir.join("samples.csv"), "csv")
    };
    if req.binary {
        samples.write_binary(&file)?;
    } else {
        samples.write_csv(&file)?;
    }
    let law_file = match &law {
        Some(state) => {
            let p = dir.join("exact_law.json");
            fs::write(&p, state.to_json() + "\n").map_err(|e| Failure::input(format!("cannot write {}: {e}", p.display())))?;
            Some(p)
        }
        None => None,
    };
    let json = json!({
        "samples": file.display().to_string(),
        "samples_format": kind,
        "exact_law": law_file.map(|p| p.display().to_string()),
        "paths": req.paths,
        "d": samples.dim(),
        "n": req.n,
        "seed": req.seed,
    });
    done(Report::json(json), format)
}

pub fn experiment(spec_path: &Path, out: Option<PathBuf>, format: Format) -> Result<Outcome, Failure> {
    let spec = ExperimentSpec::from_path(spec_path).map_err(with_path(spec_path))?;
    let result = evaluation::run(&spec)?;
    let stem = spec
        .output()
        .and_then(|o| Path::new(o).file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| spec.kind().tag().to_string());
    let dir = out_dir(out);
    create_dir(&dir)?;
    let (csv, meta) = (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json")));
    evaluation::export(&result, ExportFormat::Csv, &csv)?;
    evaluation::export(&result, ExportFormat::Json, &meta)?;

    let mut table = Table::new(&["check", "passed", "detail"]);
    for c in &result.checks {
        table.push(vec![Cell::Text(c.name.clone()), Cell::Text(c.passed.to_string()), Cell::Text(c.detail.clone())]);
    }
    let json = json!({
        "kind": spec.kind(),
        "passed": result.passed(),
        "checks": result.checks,
        "summary": result.summary,
        "flags": result.flags,
        "csv": csv.display().to_string(),
        "metadata": meta.display().to_string(),
    });
    let stdout = match format {
        Format::Csv => result.to_csv(),
        _ => Report { json, table: Some(table) }.render(format),
    };
    Ok(Outcome {
        stdout,
        passed: result.passed(),
    })
}

fn bound_report(report: &noise_sched::control::BoundReport, format: Format) -> Result<Outcome, Failure> {
    let mut table = Table::new(&["term", "value"]);
    for (k, v) in &report.terms {
        table.push(vec![Cell::Text(k.clone()), Cell::Num(*v)]);
    }
    table.push(vec![Cell::Text("total".into()), Cell::Num(report.total)]);
    let mut json = serde_json::to_value(report).expect("report serializes");
    json["note"] = json!("bounds hold up to absolute constants, reported as 1");
    done(Report { json, table: Some(table) }, format)
}

pub fn bounds_girsanov(schedule: &Path, target: &Path, n: usize, format: Format) -> Result<Outcome, Failure> {
    let schedule = load_schedule(schedule)?;
    let target = load_target(target)?;
    let gauss = target
        .as_gaussian()
        .ok_or_else(|| Failure::input("the Girsanov decomposition is exact for Gaussian targets only"))?;
    bound_report(&girsanov_bound_gaussian(&schedule, gauss, n)?, format)
}

pub fn bounds_thm1(
    schedule: &Path,
    target: &Path,
    n: usize,
    grid: usize,
    mc_samples: usize,
    mc_seed: u64,
    format: Format,
) -> Result<Outcome, Failure> {
    let schedule = load_schedule(schedule)?;
    let target = load_target(target)?;
    if grid < 2 {
        return Err(Failure::usage("--grid must be at least 2"));
    }
    let points = OdeGrid::quadratic(0.0, schedule.horizon(), grid)?;
    let traj = fisher_ode_solve(&schedule, &target, &points, &moment_method(&target, mc_samples, mc_seed))?;
    let report = kl_upper_bound(&schedule, &traj, n, target.dim(), target.second_moment())?;
    bound_report(&report, format)
}

#[allow(clippy::too_many_arguments)]
pub fn bounds_legacy(
    kind: &str,
    g_min: Option<f64>,
    g_max: Option<f64>,
    g_const: Option<f64>,
    j_star: f64,
    d: usize,
    kappa: f64,
    horizon: f64,
    h: f64,
    format: Format,
) -> Result<Outcome, Failure> {
    let schedule = match (kind, g_min, g_max, g_const) {
        ("vp-linear", Some(g_min), Some(g_max), None) => LegacySchedule::VpLinear { g_min, g_max },
        ("vp-constant", None, None, Some(g_const)) => LegacySchedule::VpConstant { g_const },
        ("vp-linear", ..) => return Err(Failure::usage("vp-linear takes --g-min and --g-max")),
        _ => return Err(Failure::usage("vp-constant takes --g-const")),
    };
    let value = legacy_bound(&schedule, j_star, d, kappa, horizon, h)?;
    let json = json!({
        "bound_name": format!("legacy-{kind}"),
        "schedule": schedule,
        "value": value,
        "constants_policy": "unit",
    });
    done(Report::json(json), format)
}

pub fn check(
    schedule: &Path,
    target: &Path,
    grid: usize,
    mc_samples: usize,
    mc_seed: u64,
    format: Format,
) -> Result<Outcome, Failure> {
    let schedule = load_schedule(schedule)?;
    let target = load_target(target)?;
    if grid == 0 {
        return Err(Failure::usage("--grid must be at least 1"));
    }
    let points = OdeGrid::uniform(0.0, schedule.horizon(), grid)?;
    let report = inequality_suite(&target, &schedule, &points, &moment_method(&target, mc_samples, mc_seed))?;
    let mut table = Table::new(&["check", "t", "lhs", "rhs", "margin", "status"]);
    for c in &report.checks {
        table.push(vec![
            Cell::Text(c.name.clone()),
            Cell::Num(c.time),
            Cell::Num(c.lhs),
            Cell::Num(c.rhs),
            Cell::Num(c.margin),
            Cell::Text(serde_json::to_value(c.status).expect("status").as_str().unwrap_or("").to_string()),
        ]);
    }
    let passed = report.all_passed();
    let json = serde_json::to_value(&report).expect("report serializes");
    Ok(Outcome {
        stdout: Report { json, table: Some(table) }.render(format),
        passed,
    })
}
