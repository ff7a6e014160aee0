use std::cell::RefCell;
use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{solve_ode, OdeGrid, QuadratureSpec};
use crate::schedules::NoiseSchedule;
use crate::targets::{MomentMethod, Target};

/// Monte-Carlo `H` estimates noisier than this fraction are refused.
const MC_LIMIT: f64 = 0.05;

/// `J_t` and `H_t` on a time grid, tied to the schedule that produced them.
#[derive(Debug, Clone, Serialize)]
pub struct FisherTrajectory {
    grid: OdeGrid<f64>,
    j: Vec<f64>,
    h: Vec<f64>,
    #[serde(skip)]
    schedule: NoiseSchedule<f64>,
}

impl FisherTrajectory {
    /// Wraps an externally computed trajectory.
    pub fn from_parts(grid: OdeGrid<f64>, j: Vec<f64>, h: Vec<f64>, schedule: NoiseSchedule<f64>) -> Result<Self> {
        if j.len() != grid.len() || h.len() != grid.len() {
            return Err(Error::validation("j", "J and H must have one value per grid point"));
        }
        if let Some(bad) = j.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::validation("j", format!("must be positive and finite, J[{bad}] = {}", j[bad])));
        }
        if grid.first() < 0.0 || grid.last() > schedule.horizon() {
            return Err(Error::validation("grid", "must lie within [0, T]"));
        }
        Ok(Self { grid, j, h, schedule })
    }

    pub fn grid(&self) -> &OdeGrid<f64> {
        &self.grid
    }

    pub fn j(&self) -> &[f64] {
        &self.j
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn schedule(&self) -> &NoiseSchedule<f64> {
        &self.schedule
    }

    /// `J²/H` at every grid point; lies in `[d/κ², d]` for supported targets.
    pub fn equivalence_ratio(&self) -> Vec<f64> {
        self.j.iter().zip(&self.h).map(|(j, h)| j * j / h).collect()
    }
}

fn smoothed_h(target: &Target, schedule: &NoiseSchedule<f64>, t: f64, method: &MomentMethod) -> Result<f64> {
    let m = schedule.marginal_coeffs(t)?;
    let mom = target.moments(m.alpha, m.sigma2, method)?;
    if let Some(se) = mom.h_stderr {
        if se > MC_LIMIT * mom.h.abs() {
            return Err(Error::Imprecise {
                quantity: "H",
                value: mom.h,
                stderr: se,
                limit_pct: MC_LIMIT * 100.0,
            });
        }
    }
    Ok(mom.h)
}

/// Integrates `J' = 2fJ − gH` along `schedule`, with `H` from the target at the
/// schedule's `(α_t, σ_t²)`.
///
/// The initial value is the target's `J` at `grid.first()` (`J*` when the grid
/// starts at 0).
pub fn fisher_ode_solve(
    schedule: &NoiseSchedule<f64>,
    target: &Target,
    grid: &OdeGrid<f64>,
    method: &MomentMethod,
) -> Result<FisherTrajectory> {
    if grid.first() < 0.0 || grid.last() > schedule.horizon() {
        return Err(Error::validation("grid", format!("must lie within [0, {}]", schedule.horizon())));
    }
    let m0 = schedule.marginal_coeffs(grid.first())?;
    let j0 = target.moments(m0.alpha, m0.sigma2, method)?.j;
    // H depends on t alone; RK4 stages and step doublings revisit the same times.
    let cache: RefCell<HashMap<u64, f64>> = RefCell::default();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let cached = cache.borrow().get(&t.to_bits()).copied();
        let h = match cached {
            Some(h) => h,
            None => {
                let h = smoothed_h(target, schedule, t, method)?;
                cache.borrow_mut().insert(t.to_bits(), h);
                h
            }
        };
        dy[0] = 2.0 * schedule.f(t) * y[0] - schedule.g(t) * h;
        Ok(())
    };
    let rows = solve_ode(rhs, &[j0], grid, &QuadratureSpec::default())?;
    let j: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let h = grid
        .points()
        .iter()
        .map(|&t| match cache.borrow().get(&t.to_bits()) {
            Some(&h) => Ok(h),
            None => smoothed_h(target, schedule, t, method),
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = j.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::numeric("fisher_ode_solve", grid.points()[i], "Fisher information left the positive axis"));
    }
    FisherTrajectory::from_parts(grid.clone(), j, h, schedule.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::CatalogParams;
    use crate::targets::GaussianTarget;

    #[test]
    fn isotropic_unit_target_is_stationary_under_ou() {
        let target: Target = GaussianTarget::isotropic(3, 1.0).unwrap().into();
        let ou = NoiseSchedule::ou(2.0).unwrap();
        let grid = OdeGrid::uniform(0.0, 2.0, 21).unwrap();
        let tr = fisher_ode_solve(&ou, &target, &grid, &MomentMethod::Quadrature1d).unwrap();
        assert!(tr.j().iter().all(|j| (j - 3.0).abs() < 1e-9));
    }

    #[test]
    fn ve_schedule_decreases_fisher() {
        let target: Target = GaussianTarget::diagonal(vec![0.0, 0.0], vec![0.01, 1.0]).unwrap().into();
        let ve = NoiseSchedule::make_catalog(CatalogParams::VeExponential { g0: 0.1, lambda: 2.0 }, 1.0).unwrap();
        let grid = OdeGrid::uniform(0.0, 1.0, 30).unwrap();
        let tr = fisher_ode_solve(&ve, &target, &grid, &MomentMethod::Quadrature1d).unwrap();
        assert!(tr.j().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn refuses_noisy_monte_carlo() {
        let target: Target = crate::targets::GmmTarget::new(vec![0.5, 0.5], vec![vec![-3.0], vec![3.0]], 0.2)
            .unwrap()
            .into();
        let ou = NoiseSchedule::ou(1.0).unwrap();
        let grid = OdeGrid::uniform(0.0, 1.0, 3).unwrap();
        let mc = MomentMethod::MonteCarlo { nsamples: 100, seed: 3 };
        let err = fisher_ode_solve(&ou, &target, &grid, &mc).unwrap_err();
        assert!(matches!(err, Error::Imprecise { .. }), "{err:?}");
    }
}
