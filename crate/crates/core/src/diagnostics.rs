//! Separation indicators and the bi-stable ratio bounds.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{decompose, AgentConfiguration};

/// Relative size of |x̄ − ȳ| (against the largest stored entry) below which
/// the mean gap is treated as zero.
const DEGENERATE_GAP_REL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub t: f64,
    /// (var(x) + var(y)) / |x̄ − ȳ|².
    pub lambda: f64,
    /// (maxᵢ|x̂ᵢ|² + maxⱼ|ŷⱼ|²) / |x̄ − ȳ|².
    pub lambda_tilde: f64,
    /// |x̄ − ȳ|² of the stored (possibly rescaled) state.
    pub mean_gap_sq: f64,
    /// ln |x̄ − ȳ|² of the physical state, `log_scale` included.
    pub log_mean_gap_sq: f64,
    /// v = (ȳ − x̄) / |ȳ − x̄|.
    pub hyperplane_vector: Vec<f64>,
    pub hyperplane_separated: bool,
    /// minⱼ yⱼ·v − maxᵢ xᵢ·v.
    pub margin: f64,
    /// Midpoint between maxᵢ xᵢ·v and minⱼ yⱼ·v.
    pub separating_constant: f64,
}

pub fn separation_report(config: &AgentConfiguration) -> Result<SeparationReport> {
    let stats = decompose(config);
    let diff: DVector<f64> = &stats.mean_y - &stats.mean_x;
    let gap = diff.norm();
    let scale = config.max_abs();
    if !(gap > DEGENERATE_GAP_REL * scale) || gap == 0.0 {
        return Err(Error::DegenerateGap { gap, scale });
    }
    let v = diff / gap;
    let gap_sq = gap * gap;
    let x_top = config
        .x
        .row_iter()
        .map(|r| r.transpose().dot(&v))
        .fold(f64::NEG_INFINITY, f64::max);
    let y_bottom = config
        .y
        .row_iter()
        .map(|r| r.transpose().dot(&v))
        .fold(f64::INFINITY, f64::min);
    let margin = y_bottom - x_top;
    Ok(SeparationReport {
        t: config.t,
        lambda: (stats.var_x + stats.var_y) / gap_sq,
        lambda_tilde: (stats.max_dev_x.powi(2) + stats.max_dev_y.powi(2)) / gap_sq,
        mean_gap_sq: gap_sq,
        log_mean_gap_sq: gap_sq.ln() + 2.0 * config.log_scale,
        hyperplane_vector: v.iter().copied().collect(),
        hyperplane_separated: margin > 0.0,
        margin,
        separating_constant: 0.5 * (x_top + y_bottom),
    })
}

/// Whether every xᵢ·v lies strictly below `c` and every yⱼ·v strictly above.
pub fn separated_by(config: &AgentConfiguration, v: &[f64], c: f64) -> bool {
    let v = DVector::from_column_slice(v);
    config.x.row_iter().all(|r| r.transpose().dot(&v) < c)
        && config.y.row_iter().all(|r| r.transpose().dot(&v) > c)
}

/// Coefficients of the differential inequalities
/// `ḟ ≥ a11 f − a12 g`, `ġ ≤ a21 f − a22 g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeBoundParams {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl OdeBoundParams {
    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Result<Self> {
        if !(a12 > 0.0 && a21 > 0.0) {
            return Err(Error::Contract(format!(
                "a12 = {a12} and a21 = {a21} must be positive"
            )));
        }
        if ![a11, a12, a21, a22].iter().all(|v| v.is_finite()) {
            return Err(Error::Contract("coefficients must be finite".into()));
        }
        Ok(OdeBoundParams { a11, a12, a21, a22 })
    }

    /// Δ = (a11 + a22)² − 4·a21·a12.
    pub fn delta(&self) -> f64 {
        (self.a11 + self.a22).powi(2) - 4.0 * self.a21 * self.a12
    }

    /// Upper root of `a12 λ² − (a11 + a22) λ + a21`.
    pub fn lambda_plus(&self) -> Option<f64> {
        let delta = self.delta();
        (delta > 0.0).then(|| ((self.a11 + self.a22) + delta.sqrt()) / (2.0 * self.a12))
    }

    /// Lower root, written to avoid cancellation when a21 is tiny.
    pub fn lambda_minus(&self) -> Option<f64> {
        let delta = self.delta();
        (delta > 0.0).then(|| 2.0 * self.a21 / ((self.a11 + self.a22) + delta.sqrt()))
    }

    fn riccati_rhs(&self, lambda: f64) -> f64 {
        self.a12 * lambda * lambda - (self.a11 + self.a22) * lambda + self.a21
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeBounds {
    pub delta: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// Decay rate a12·(λ₊ − initial ratio).
    pub mu: f64,
}

impl OdeBounds {
    /// λ₋ + λ(0)·e^(−μt).
    pub fn ratio_bound(&self, initial_ratio: f64, t: f64) -> f64 {
        self.lambda_minus + initial_ratio * (-self.mu * t).exp()
    }
}

pub fn ode_bounds(params: &OdeBoundParams, initial_ratio: f64) -> Result<OdeBounds> {
    let delta = params.delta();
    let (Some(lambda_plus), Some(lambda_minus)) = (params.lambda_plus(), params.lambda_minus())
    else {
        return Err(Error::NoSeparationGap { delta });
    };
    if !(initial_ratio < lambda_plus) {
        return Err(Error::AboveStableBasin {
            ratio: initial_ratio,
            lambda_plus,
        });
    }
    Ok(OdeBounds {
        delta,
        lambda_plus,
        lambda_minus,
        mu: params.a12 * (lambda_plus - initial_ratio),
    })
}

pub const RICCATI_STEP: f64 = 1e-4;

/// Integrates `λ̇ = a12 λ² − (a11 + a22) λ + a21` from `lambda0` with RK4 and
/// returns the smallest `λ₋ + λ₀e^(−μt) − λ(t)` on the step grid over
/// `[0, t_end]`.
pub fn riccati_oracle(params: &OdeBoundParams, lambda0: f64, t_end: f64) -> Result<f64> {
    if !(lambda0 > 0.0) {
        return Err(Error::Contract(format!(
            "lambda0 = {lambda0} must be positive"
        )));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::config(
            "t_end",
            format!("{t_end} must be nonnegative"),
        ));
    }
    let bounds = ode_bounds(params, lambda0)?;
    let steps = (t_end / RICCATI_STEP).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut lambda = lambda0;
    let mut slack = bounds.ratio_bound(lambda0, 0.0) - lambda;
    for n in 1..=steps {
        let k1 = params.riccati_rhs(lambda);
        let k2 = params.riccati_rhs(lambda + 0.5 * h * k1);
        let k3 = params.riccati_rhs(lambda + 0.5 * h * k2);
        let k4 = params.riccati_rhs(lambda + h * k3);
        lambda += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        slack = slack.min(bounds.ratio_bound(lambda0, n as f64 * h) - lambda);
    }
    Ok(slack)
}

/// Burn-in time and relative tolerance for the mean-gap growth check.
pub const GROWTH_BURN_IN: f64 = 5.0;
pub const GROWTH_TOLERANCE: f64 = 0.2;
/// Absolute slack on the rate comparison, absorbing roundoff when the
/// threshold is zero.
const GROWTH_RATE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthCheck {
    /// Smallest rate d/dt ln|x̄ − ȳ|² between consecutive samples after burn-in.
    pub min_rate: f64,
    /// Rate over the whole post-burn-in window.
    pub mean_rate: f64,
    pub threshold: f64,
    pub pairs: usize,
    pub pass: bool,
}

/// Checks that |x̄ − ȳ|² grows at least at rate `2·q_bar·(1 − tolerance)`
/// between every pair of consecutive samples with `t ≥ burn_in`.
pub fn growth_rate_check(
    trajectory: &[SeparationReport],
    q_bar: f64,
    burn_in: f64,
    tolerance: f64,
) -> Result<GrowthCheck> {
    let tail: Vec<&SeparationReport> = trajectory.iter().filter(|r| r.t >= burn_in).collect();
    if tail.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} samples after burn-in t >= {burn_in}, need 3",
            tail.len()
        )));
    }
    let rates: Vec<f64> = tail
        .windows(2)
        .map(|w| (w[1].log_mean_gap_sq - w[0].log_mean_gap_sq) / (w[1].t - w[0].t))
        .collect();
    let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let (first, last) = (tail[0], tail[tail.len() - 1]);
    let mean_rate = (last.log_mean_gap_sq - first.log_mean_gap_sq) / (last.t - first.t);
    let threshold = 2.0 * q_bar * (1.0 - tolerance);
    Ok(GrowthCheck {
        min_rate,
        mean_rate,
        threshold,
        pairs: rates.len(),
        pass: min_rate >= threshold - GROWTH_RATE_SLACK,
    })
}
