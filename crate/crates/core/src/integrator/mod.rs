//! Time propagation of the linear system over a communication schedule.
//!
//! Couplings are constant between consecutive events (sample times and
//! resampling boundaries `kτ`), so each leg is advanced exactly by
//! `exp(M_k · dt)`. [`propagate_rk`] runs the same legs with classical RK4
//! and exists to cross-check the exponential route.

mod expm;

use std::collections::HashMap;

use nalgebra::DMatrix;

pub use expm::expm;

use crate::error::{Error, Result};
use crate::model::{system_matrix, AgentConfiguration};
use crate::sampling::{CommunicationSchedule, Scenario};

pub const DEFAULT_RESCALE_THRESHOLD: f64 = 1e100;

#[derive(Debug, Clone)]
pub struct PropagationPlan {
    pub schedule: CommunicationSchedule,
    pub t_end: f64,
    /// Sorted times in `[0, t_end]` at which states are reported.
    pub sample_times: Vec<f64>,
    /// Scale every reported state to stacked ℓ²-norm √(N₁+N₂).
    pub renormalize: bool,
    /// Max-norm above which the running state is rescaled into `log_scale`.
    pub rescale_threshold: f64,
}

impl PropagationPlan {
    pub fn new(schedule: CommunicationSchedule, t_end: f64, sample_times: Vec<f64>) -> Self {
        PropagationPlan {
            schedule,
            t_end,
            sample_times,
            renormalize: false,
            rescale_threshold: DEFAULT_RESCALE_THRESHOLD,
        }
    }

    /// `count` uniformly spaced samples on `[0, t_end]`, both ends included.
    pub fn uniform(schedule: CommunicationSchedule, t_end: f64, count: usize) -> Self {
        Self::new(schedule, t_end, uniform_grid(t_end, count))
    }

    pub fn with_renormalize(mut self, renormalize: bool) -> Self {
        self.renormalize = renormalize;
        self
    }

    fn validate(&self, initial: &AgentConfiguration) -> Result<()> {
        initial.validate()?;
        if initial.t != 0.0 {
            return Err(Error::Contract(format!(
                "initial time must be 0, got {}",
                initial.t
            )));
        }
        if initial.n1() != self.schedule.n1() || initial.n2() != self.schedule.n2() {
            return Err(Error::Dimension(format!(
                "state has groups ({}, {}), schedule is for ({}, {})",
                initial.n1(),
                initial.n2(),
                self.schedule.n1(),
                self.schedule.n2()
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config(
                "t_end",
                format!("{} must be positive", self.t_end),
            ));
        }
        if !(self.rescale_threshold > 1.0) {
            return Err(Error::config("rescale_threshold", "must exceed 1"));
        }
        if self.sample_times.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::config("sample_times", "must be sorted"));
        }
        if self
            .sample_times
            .iter()
            .any(|&s| !(0.0..=self.t_end).contains(&s))
        {
            return Err(Error::config("sample_times", "must lie in [0, t_end]"));
        }
        let horizon = self.schedule.horizon();
        if self.t_end > horizon * (1.0 + 1e-12) {
            return Err(Error::Schedule(format!(
                "schedule covers [0, {horizon}] but t_end = {}",
                self.t_end
            )));
        }
        Ok(())
    }
}

pub fn uniform_grid(t_end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![t_end],
        _ => (0..count)
            .map(|k| {
                if k == count - 1 {
                    t_end
                } else {
                    t_end * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// Walks the event grid; `advance(k, dt, z)` moves the stacked state across
/// a leg of length `dt` governed by schedule entry `k`.
fn drive<F>(
    initial: &AgentConfiguration,
    plan: &PropagationPlan,
    mut advance: F,
) -> Result<Vec<AgentConfiguration>>
where
    F: FnMut(usize, f64, &DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    plan.validate(initial)?;
    let n1 = initial.n1();
    let target_norm = ((initial.n1() + initial.n2()) as f64).sqrt();
    let schedule = &plan.schedule;
    let last = schedule.len() - 1;
    let boundary = |k: usize| match schedule.kind() {
        Scenario::Resampled if k < last => (k + 1) as f64 * schedule.tau(),
        _ => f64::INFINITY,
    };

    let mut z = initial.stacked();
    let mut log_scale = initial.log_scale;
    let mut t = 0.0;
    let mut k = 0usize;
    let mut out = Vec::with_capacity(plan.sample_times.len());
    for &s in &plan.sample_times {
        while t < s {
            if schedule.get(k).is_none() {
                return Err(Error::Schedule(format!("no couplings for interval {k}")));
            }
            let b = boundary(k);
            let target = if b < s { b } else { s };
            z = advance(k, target - t, &z)?;
            t = target;
            if t == b {
                k += 1;
            }
            let big = z.amax();
            if big > plan.rescale_threshold {
                z /= big;
                log_scale += big.ln();
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::Contract(format!(
                    "state became non-finite at t = {t}"
                )));
            }
        }
        let mut state = AgentConfiguration::from_stacked(&z, n1, s, log_scale);
        if plan.renormalize {
            let norm = z.norm();
            if norm > 0.0 {
                state = AgentConfiguration::from_stacked(
                    &(&z * (target_norm / norm)),
                    n1,
                    s,
                    log_scale + (norm / target_norm).ln(),
                );
            }
        }
        out.push(state);
    }
    Ok(out)
}

fn system_matrices(schedule: &CommunicationSchedule) -> Result<Vec<DMatrix<f64>>> {
    schedule.entries().iter().map(system_matrix).collect()
}

/// Exact propagation by matrix exponentials of each constant leg.
///
/// Exponentials are cached per `(entry, dt)`, so a uniform sample grid on a
/// static schedule costs one exponential plus one product per sample.
pub fn propagate(
    initial: &AgentConfiguration,
    plan: &PropagationPlan,
) -> Result<Vec<AgentConfiguration>> {
    let matrices = system_matrices(&plan.schedule)?;
    let mut cache: HashMap<(usize, u64), DMatrix<f64>> = HashMap::new();
    drive(initial, plan, |k, dt, z| {
        let e = cache
            .entry((k, dt.to_bits()))
            .or_insert_with(|| expm(&(&matrices[k] * dt)));
        Ok(&*e * z)
    })
}

/// Classical RK4 over the same legs; each leg is split into equal substeps
/// no longer than `step`.
pub fn propagate_rk(
    initial: &AgentConfiguration,
    plan: &PropagationPlan,
    step: f64,
) -> Result<Vec<AgentConfiguration>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::config("step", format!("{step} must be positive")));
    }
    if plan.schedule.kind() == Scenario::Resampled && step > plan.schedule.tau() {
        return Err(Error::config(
            "step",
            format!(
                "{step} exceeds the resampling interval {}",
                plan.schedule.tau()
            ),
        ));
    }
    let matrices = system_matrices(&plan.schedule)?;
    drive(initial, plan, |k, dt, z| {
        let m = &matrices[k];
        let n = ((dt / step) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = dt / n as f64;
        let mut z = z.clone();
        for _ in 0..n {
            let k1 = m * &z;
            let k2 = m * (&z + &k1 * (h / 2.0));
            let k3 = m * (&z + &k2 * (h / 2.0));
            let k4 = m * (&z + &k3 * h);
            z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        Ok(z)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{decompose, CouplingSet};
    use crate::sampling::{build_schedule, sample_initial_positions, ScenarioConfig};
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn pair_schedule() -> CommunicationSchedule {
        CommunicationSchedule::fixed(
            CouplingSet::new(dmatrix![0.0], dmatrix![0.0], dmatrix![1.0]).unwrap(),
        )
    }

    fn rel_err(a: &AgentConfiguration, b: &AgentConfiguration) -> f64 {
        let (ax, ay) = a.physical();
        let (bx, by) = b.physical();
        let num = ((&ax - &bx).norm_squared() + (&ay - &by).norm_squared()).sqrt();
        let den = (bx.norm_squared() + by.norm_squared()).sqrt();
        num / den
    }

    #[test]
    fn anti_aligned_pair_closed_form() {
        let init = AgentConfiguration::from_1d(&[0.0], &[1.0]).unwrap();
        let plan = PropagationPlan::new(pair_schedule(), 1.0, vec![0.0, 1.0]);
        let out = propagate(&init, &plan).unwrap();
        let e2 = 1f64.exp().powi(2);
        assert_abs_diff_eq!(out[1].x[(0, 0)], (1.0 - e2) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1].y[(0, 0)], (1.0 + e2) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1].x[(0, 0)], -3.194_528_049_465_325, epsilon = 1e-12);
        let rk = propagate_rk(&init, &plan, 1e-3).unwrap();
        assert_abs_diff_eq!(rk[1].x[(0, 0)], (1.0 - e2) / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rk[1].y[(0, 0)], (1.0 + e2) / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_time_is_bitwise_identity() {
        let init = sample_initial_positions(3, 4, 5, 2).unwrap();
        let cfg = ScenarioConfig::new(4, 5, 0.3, 0.2, Scenario::Static, 3);
        let plan = PropagationPlan::new(build_schedule(&cfg, 1.0).unwrap(), 1.0, vec![0.0]);
        assert_eq!(propagate(&init, &plan).unwrap()[0], init);
        assert_eq!(propagate_rk(&init, &plan, 0.1).unwrap()[0], init);
    }

    #[test]
    fn renormalized_output_has_target_norm() {
        let init = AgentConfiguration::from_1d(&[0.0], &[1.0]).unwrap();
        let plan = PropagationPlan::uniform(pair_schedule(), 3.0, 4).with_renormalize(true);
        for s in propagate(&init, &plan).unwrap() {
            assert_abs_diff_eq!(s.stacked().norm(), 2f64.sqrt(), epsilon = 1e-12);
            let (x, _) = s.physical();
            let e = (2.0 * s.t).exp();
            assert_abs_diff_eq!(x[(0, 0)], (1.0 - e) / 2.0, epsilon = 1e-9 * e);
        }
    }

    #[test]
    fn overflow_guard_preserves_physical_state() {
        let init = AgentConfiguration::from_1d(&[0.0], &[1.0]).unwrap();
        let mut plan = PropagationPlan::uniform(pair_schedule(), 10.0, 11);
        let exact = propagate(&init, &plan).unwrap();
        plan.rescale_threshold = 10.0;
        let guarded = propagate(&init, &plan).unwrap();
        assert!(guarded.last().unwrap().log_scale > 0.0);
        for (a, b) in guarded.iter().zip(&exact) {
            assert!(a.max_abs() <= 10.0 * 8.0);
            assert!(rel_err(a, b) < 1e-12);
        }
    }

    #[test]
    fn resampled_boundaries_are_respected() {
        // alternate between pure repulsion and no interaction on τ = 0.5
        let on = CouplingSet::new(dmatrix![0.0], dmatrix![0.0], dmatrix![1.0]).unwrap();
        let off = CouplingSet::new(dmatrix![0.0], dmatrix![0.0], dmatrix![0.0]).unwrap();
        let schedule =
            CommunicationSchedule::resampled(0.5, vec![on.clone(), off.clone(), on, off]).unwrap();
        let init = AgentConfiguration::from_1d(&[0.0], &[1.0]).unwrap();
        let plan = PropagationPlan::new(schedule, 2.0, vec![0.3, 2.0]);
        let out = propagate(&init, &plan).unwrap();
        // gap y - x doubles its exponent only while couplings are on: total on-time 1.0
        let gap = out[1].y[(0, 0)] - out[1].x[(0, 0)];
        assert_abs_diff_eq!(gap, 2f64.exp(), epsilon = 1e-12);
        let gap = out[0].y[(0, 0)] - out[0].x[(0, 0)];
        assert_abs_diff_eq!(gap, 0.6f64.exp(), epsilon = 1e-12);
        let rk = propagate_rk(&init, &plan, 1e-3).unwrap();
        assert!(rel_err(&rk[1], &out[1]) < 1e-10);
    }

    #[test]
    fn schedule_must_cover_horizon() {
        let cfg = ScenarioConfig::new(3, 3, 0.3, 0.2, Scenario::Resampled, 1);
        let schedule = build_schedule(&cfg, 5.0).unwrap();
        let init = sample_initial_positions(1, 3, 3, 1).unwrap();
        let plan = PropagationPlan::uniform(schedule.clone(), 6.0, 3);
        assert!(matches!(propagate(&init, &plan), Err(Error::Schedule(_))));
        let plan = PropagationPlan::uniform(schedule, 5.0, 3);
        assert!(matches!(
            propagate_rk(&init, &plan, 2.0),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn rejects_unsorted_samples() {
        let init = AgentConfiguration::from_1d(&[0.0], &[1.0]).unwrap();
        let plan = PropagationPlan::new(pair_schedule(), 1.0, vec![0.5, 0.2]);
        assert!(matches!(propagate(&init, &plan), Err(Error::Config { .. })));
        let plan = PropagationPlan::new(pair_schedule(), 1.0, vec![1.5]);
        assert!(propagate(&init, &plan).is_err());
    }

    #[test]
    fn pure_alignment_pair_decays_to_mean() {
        let c = CouplingSet::new(
            dmatrix![0.0, 1.0; 1.0, 0.0],
            dmatrix![0.0],
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let init = AgentConfiguration::from_1d(&[0.0, 1.0], &[0.25]).unwrap();
        let plan = PropagationPlan::new(CommunicationSchedule::fixed(c), 1.0, vec![1.0]);
        let out = propagate(&init, &plan).unwrap();
        assert_abs_diff_eq!(out[0].x[(0, 0)], 0.5 - 0.5 * (-1f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(decompose(&out[0]).mean_x[0], 0.5, epsilon = 1e-15);
    }

    fn random_static(seed: u64, n: usize) -> (AgentConfiguration, CommunicationSchedule) {
        let cfg = ScenarioConfig::new(n, n, 0.5, 0.5, Scenario::Static, seed);
        (
            sample_initial_positions(seed, n, n, 2).unwrap(),
            build_schedule(&cfg, 1.0).unwrap(),
        )
    }

    #[test]
    fn rk_converges_at_fourth_order() {
        let (init, schedule) = random_static(8, 4);
        let plan = PropagationPlan::new(schedule, 5.0, vec![5.0]);
        let exact = propagate(&init, &plan).unwrap();
        let coarse = rel_err(&propagate_rk(&init, &plan, 1e-2).unwrap()[0], &exact[0]);
        let fine = rel_err(&propagate_rk(&init, &plan, 5e-3).unwrap()[0], &exact[0]);
        let ratio = coarse / fine;
        assert!((13.0..19.0).contains(&ratio), "ratio {ratio}");
        assert!(rel_err(&propagate_rk(&init, &plan, 1e-3).unwrap()[0], &exact[0]) < 1e-8);
    }

    #[test]
    fn semigroup_and_conservation() {
        let (init, schedule) = random_static(9, 5);
        let direct = propagate(
            &init,
            &PropagationPlan::new(schedule.clone(), 4.0, vec![1.5, 4.0]),
        )
        .unwrap();
        let mid =
            AgentConfiguration::from_stacked(&direct[0].stacked(), 5, 0.0, direct[0].log_scale);
        let rest = propagate(
            &mid,
            &PropagationPlan::new(schedule.clone(), 2.5, vec![2.5]),
        )
        .unwrap();
        assert!(rel_err(&rest[0], &direct[1]) < 1e-10);

        let c = &schedule.entries()[0];
        let aligned = CouplingSet::new(
            c.psi_plus_x.clone(),
            c.psi_plus_y.clone(),
            DMatrix::zeros(5, 5),
        )
        .unwrap();
        let plan = PropagationPlan::uniform(CommunicationSchedule::fixed(aligned), 4.0, 5);
        let s0 = decompose(&init);
        for s in propagate(&init, &plan).unwrap() {
            let st = decompose(&s);
            assert!((&st.mean_x - &s0.mean_x).norm() <= 1e-10 * s0.mean_x.norm());
            assert!((&st.mean_y - &s0.mean_y).norm() <= 1e-10 * s0.mean_y.norm());
        }
    }

    proptest::proptest! {
        #[test]
        fn scale_equivariance(seed in 0u64..1000, gamma in 1e-3f64..1e3) {
            let (init, schedule) = random_static(seed, 3);
            let plan = PropagationPlan::uniform(schedule, 2.0, 3);
            let base = propagate(&init, &plan).unwrap();
            let scaled = propagate(&init.scaled(gamma), &plan).unwrap();
            for (a, b) in scaled.iter().zip(&base) {
                proptest::prop_assert!(rel_err(a, &b.scaled(gamma)) < 1e-12);
            }
        }
    }
}
