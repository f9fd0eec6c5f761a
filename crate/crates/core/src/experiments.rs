//! Single trajectories, the λ(T)-vs-N ensemble sweep, and the Monte Carlo
//! trials behind the acceptance checks.
//!
//! Ensemble member `k` at group size `N` is seeded with
//! `derive_seed(master, [N, k])`, and results are gathered in index order,
//! so outputs do not depend on how rayon schedules the work.

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{
    growth_rate_check, separated_by, separation_report, GrowthCheck, SeparationReport,
};
use crate::error::{Error, Result};
use crate::integrator::{propagate, PropagationPlan};
use crate::model::AgentConfiguration;
use crate::sampling::{
    build_schedule, derive_seed, sample_initial_positions, CommunicationSchedule, ScenarioConfig,
};
use crate::spectral::{
    check_conditions, concentration_trial, row_column_stats, ConcentrationResult, ConditionReport,
};

pub const DEFAULT_SAMPLE_COUNT: usize = 401;

#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    /// Normalized to stacked ℓ²-norm √(N₁+N₂); `log_scale` keeps the physical size.
    pub state: AgentConfiguration,
    /// `None` when the group means coincide.
    pub report: Option<SeparationReport>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub schedule: CommunicationSchedule,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn states(&self) -> Vec<AgentConfiguration> {
        self.points.iter().map(|p| p.state.clone()).collect()
    }

    pub fn reports(&self) -> Vec<SeparationReport> {
        self.points
            .iter()
            .filter_map(|p| p.report.clone())
            .collect()
    }

    pub fn first_report(&self) -> Option<&SeparationReport> {
        self.points.first().and_then(|p| p.report.as_ref())
    }

    pub fn last_report(&self) -> Option<&SeparationReport> {
        self.points.last().and_then(|p| p.report.as_ref())
    }

    /// Ψ̄⁻ averaged over the schedule entries.
    pub fn mean_cross_rate(&self) -> f64 {
        mean_cross_rate(&self.schedule)
    }

    /// Whether the hyperplane found at the first separated sample keeps
    /// separating the groups at every later sample.
    pub fn separation_persists(&self) -> Option<bool> {
        let start = self
            .points
            .iter()
            .position(|p| p.report.as_ref().is_some_and(|r| r.hyperplane_separated))?;
        let r = self.points[start].report.as_ref()?;
        Some(self.points[start..].iter().all(|p| {
            separated_by(
                &p.state,
                &r.hyperplane_vector,
                r.separating_constant
                    * (-(p.state.log_scale - self.points[start].state.log_scale)).exp(),
            )
        }))
    }
}

pub fn mean_cross_rate(schedule: &CommunicationSchedule) -> f64 {
    let entries = schedule.entries();
    entries
        .iter()
        .map(|c| row_column_stats(&c.psi_minus).overall_mean)
        .sum::<f64>()
        / entries.len() as f64
}

/// Propagates `initial` under `schedule` and reports at `sample_count`
/// uniformly spaced times on `[0, t_final]`.
pub fn run_trajectory_from(
    initial: &AgentConfiguration,
    schedule: CommunicationSchedule,
    t_final: f64,
    sample_count: usize,
) -> Result<Trajectory> {
    if sample_count < 2 {
        return Err(Error::config("sample_count", "must be at least 2"));
    }
    let plan = PropagationPlan::uniform(schedule, t_final, sample_count).with_renormalize(true);
    let states = propagate(initial, &plan)?;
    let points = states
        .into_iter()
        .map(|state| {
            let report = separation_report(&state).ok();
            TrajectoryPoint { state, report }
        })
        .collect();
    Ok(Trajectory {
        schedule: plan.schedule,
        points,
    })
}

/// One run with i.i.d. uniform initial positions on `[0, 1]^dim`.
pub fn run_trajectory(
    cfg: &ScenarioConfig,
    t_final: f64,
    dim: usize,
    sample_count: usize,
) -> Result<Trajectory> {
    if dim == 0 {
        return Err(Error::config("dim", "must be at least 1"));
    }
    let initial = sample_initial_positions(cfg.seed, cfg.n1, cfg.n2, dim)?;
    let schedule = build_schedule(cfg, t_final)?;
    run_trajectory_from(&initial, schedule, t_final, sample_count)
}

/// λ(T) of one random sample, or `None` if the group means coincide.
pub fn sample_final_lambda(cfg: &ScenarioConfig, t_final: f64, dim: usize) -> Result<Option<f64>> {
    let initial = sample_initial_positions(cfg.seed, cfg.n1, cfg.n2, dim)?;
    let schedule = build_schedule(cfg, t_final)?;
    let plan = PropagationPlan::new(schedule, t_final, vec![t_final]);
    let last = propagate(&initial, &plan)?.pop().expect("one sample time");
    match separation_report(&last) {
        Ok(r) => Ok(Some(r.lambda)),
        Err(Error::DegenerateGap { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub n_test: usize,
    /// Number of largest λ(T) samples dropped from each ensemble.
    pub n_discard: usize,
    pub t_final: f64,
    /// Template for p, q, scenario and τ; group sizes and seed are overridden.
    pub base: ScenarioConfig,
    pub master_seed: u64,
    pub dim: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::config("n_values", "must not be empty"));
        }
        if self.n_values.iter().any(|&n| n < 2) {
            return Err(Error::config("n_values", "every N must be at least 2"));
        }
        let mut sorted = self.n_values.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.n_values.len() {
            return Err(Error::config("n_values", "values must be distinct"));
        }
        if self.n_test == 0 {
            return Err(Error::config("n_test", "must be at least 1"));
        }
        if self.n_discard >= self.n_test {
            return Err(Error::config("n_discard", "must be smaller than n_test"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", "must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        let n = self.n_values[0];
        ScenarioConfig {
            n1: n,
            n2: n,
            ..self.base.clone()
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub n: usize,
    /// Mean of λ(T) after dropping the largest `n_discard` samples.
    pub mean_lambda_t: f64,
    pub untrimmed_mean: f64,
    pub n_used: usize,
    pub n_degenerate: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub fitted_slope: f64,
    pub fitted_intercept: f64,
    pub r_squared: f64,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize_ensemble(
    n: usize,
    samples: &[Option<f64>],
    n_discard: usize,
) -> Result<SweepRecord> {
    let mut valid: Vec<f64> = samples.iter().flatten().copied().collect();
    let n_degenerate = samples.len() - valid.len();
    if valid.len() <= n_discard {
        return Err(Error::Sweep(format!(
            "N = {n}: {n_degenerate} of {} samples degenerate, nothing left after discarding {n_discard}",
            samples.len()
        )));
    }
    valid.sort_by(f64::total_cmp);
    let kept = &valid[..valid.len() - n_discard];
    Ok(SweepRecord {
        n,
        mean_lambda_t: kept.iter().sum::<f64>() / kept.len() as f64,
        untrimmed_mean: valid.iter().sum::<f64>() / valid.len() as f64,
        n_used: kept.len(),
        n_degenerate,
        min: valid[0],
        q25: quantile(&valid, 0.25),
        median: quantile(&valid, 0.5),
        q75: quantile(&valid, 0.75),
        max: valid[valid.len() - 1],
    })
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let samples = (0..cfg.n_test as u64)
            .into_par_iter()
            .map(|k| {
                let sample_cfg = ScenarioConfig {
                    n1: n,
                    n2: n,
                    seed: derive_seed(cfg.master_seed, &[n as u64, k]),
                    ..cfg.base.clone()
                };
                sample_final_lambda(&sample_cfg, cfg.t_final, cfg.dim)
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(summarize_ensemble(n, &samples, cfg.n_discard)?);
    }
    let points: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.n as f64, r.mean_lambda_t))
        .collect();
    let fit = if points.len() >= 2 {
        fit_slope(&points)?
    } else {
        SlopeFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            r_squared: f64::NAN,
        }
    };
    Ok(SweepResult {
        records,
        fitted_slope: fit.slope,
        fitted_intercept: fit.intercept,
        r_squared: fit.r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of ln(value) against ln(N).
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(
            "slope fit needs at least 2 points".into(),
        ));
    }
    if let Some(&(n, v)) = points.iter().find(|(n, v)| !(*n > 0.0 && *v > 0.0)) {
        return Err(Error::Contract(format!(
            "log-log fit needs positive data, got ({n}, {v})"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Contract(
            "slope fit needs at least two distinct N".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Concentration frequencies for each group size in `n_values`.
pub fn concentration_sweep(
    base: &ScenarioConfig,
    n_values: &[usize],
    alpha: f64,
    delta: f64,
    n_samples: usize,
) -> Result<Vec<ConcentrationResult>> {
    n_values
        .iter()
        .map(|&n| {
            let cfg = ScenarioConfig {
                n1: n,
                n2: n,
                seed: derive_seed(base.seed, &[n as u64]),
                ..base.clone()
            };
            concentration_trial(&cfg, alpha, delta, n_samples)
        })
        .collect()
}

/// Mean-gap growth measured on one static run, with the coupling conditions
/// of its sampled couplings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthTrial {
    pub seed: u64,
    pub conditions: ConditionReport,
    pub mean_cross_rate: f64,
    pub growth: GrowthCheck,
}

pub fn growth_trial(
    cfg: &ScenarioConfig,
    t_final: f64,
    sample_count: usize,
    alpha: f64,
    burn_in: f64,
    tolerance: f64,
) -> Result<GrowthTrial> {
    let traj = run_trajectory(cfg, t_final, 1, sample_count)?;
    let conditions = check_conditions(&traj.schedule.entries()[0], cfg.p, cfg.q, alpha)?;
    let q_bar = traj.mean_cross_rate();
    let growth = growth_rate_check(&traj.reports(), q_bar, burn_in, tolerance)?;
    Ok(GrowthTrial {
        seed: cfg.seed,
        conditions,
        mean_cross_rate: q_bar,
        growth,
    })
}
