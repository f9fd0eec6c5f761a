//! Probabilistic descriptors of sampled coupling matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_symmetric_zero_diagonal, scaled_laplacian, CouplingSet};
use crate::sampling::{derive_seed, sample_coupling_set, ScenarioConfig};

/// Default radius δ for the empirical Fiedler concentration test.
pub const DEFAULT_FIEDLER_RADIUS: f64 = 0.1;

/// Second smallest eigenvalue of the scaled Laplacian of `psi_plus`.
pub fn fiedler_number(psi_plus: &DMatrix<f64>) -> Result<f64> {
    check_symmetric_zero_diagonal("psi_plus", psi_plus)?;
    if psi_plus.nrows() < 2 {
        return Err(Error::Contract(
            "Fiedler number needs at least 2 agents".into(),
        ));
    }
    let eig = SymmetricEigen::new(scaled_laplacian(psi_plus)).eigenvalues;
    let mut values: Vec<f64> = eig.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values[1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowColumnStats {
    pub row_means: DVector<f64>,
    pub col_means: DVector<f64>,
    pub overall_mean: f64,
    /// Largest |row or column mean − overall mean|.
    pub max_deviation: f64,
}

impl RowColumnStats {
    /// Largest row deviation only; for ψ⁺ matrices this is D(Ψ⁺).
    pub fn max_row_deviation(&self) -> f64 {
        self.row_means
            .iter()
            .fold(0.0_f64, |m, r| m.max((r - self.overall_mean).abs()))
    }
}

pub fn row_column_stats(m: &DMatrix<f64>) -> RowColumnStats {
    let (rows, cols) = m.shape();
    let row_means: DVector<f64> = m.column_sum() / cols as f64;
    let col_means: DVector<f64> = m.row_sum().transpose() / rows as f64;
    let overall_mean = m.sum() / (rows * cols) as f64;
    let max_deviation = row_means
        .iter()
        .chain(col_means.iter())
        .fold(0.0_f64, |acc, v| acc.max((v - overall_mean).abs()));
    RowColumnStats {
        row_means,
        col_means,
        overall_mean,
        max_deviation,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub name: &'static str,
    pub threshold: f64,
    pub observed: f64,
    pub pass: bool,
}

impl Condition {
    fn at_least(name: &'static str, observed: f64, threshold: f64) -> Self {
        Condition {
            name,
            threshold,
            observed,
            pass: observed >= threshold,
        }
    }

    fn at_most(name: &'static str, observed: f64, threshold: f64) -> Self {
        Condition {
            name,
            threshold,
            observed,
            pass: observed <= threshold,
        }
    }
}

/// Outcome of checking the coupling condition bundle on one coupling set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub fiedler_x: f64,
    pub fiedler_y: f64,
    pub fiedler_min: f64,
    pub alpha: f64,
    pub conditions: Vec<Condition>,
    pub overall_pass: bool,
}

impl ConditionReport {
    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Evaluates, with N = min(N₁, N₂) and r = N^-(1-α)/2:
///
/// ```text
/// F(ψ⁺) ≥ p − p/12
/// |Ψ̄⁻ − q| ≤ min(q/24, p/24)      D(Ψ⁻) ≤ min(r, p/24)
/// |Ψ̄⁺ − p| ≤ p/24                 D(Ψ⁺) ≤ min(r, p/24)
/// ```
///
/// The ψ⁺ quantities are taken as the worse of the two groups.
pub fn check_conditions(
    couplings: &CouplingSet,
    p: f64,
    q: f64,
    alpha: f64,
) -> Result<ConditionReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha", format!("{alpha} is outside (0, 1)")));
    }
    couplings.validate()?;
    let fiedler_x = fiedler_number(&couplings.psi_plus_x)?;
    let fiedler_y = fiedler_number(&couplings.psi_plus_y)?;
    let fiedler_min = fiedler_x.min(fiedler_y);

    let n = couplings.n1().min(couplings.n2()) as f64;
    let radius = n.powf(-(1.0 - alpha) / 2.0);
    let minus = row_column_stats(&couplings.psi_minus);
    let plus_x = row_column_stats(&couplings.psi_plus_x);
    let plus_y = row_column_stats(&couplings.psi_plus_y);
    let plus_mean_gap = (plus_x.overall_mean - p)
        .abs()
        .max((plus_y.overall_mean - p).abs());
    let plus_dev = plus_x.max_row_deviation().max(plus_y.max_row_deviation());

    let conditions = vec![
        Condition::at_least("fiedler", fiedler_min, p - p / 12.0),
        Condition::at_most(
            "minus_mean",
            (minus.overall_mean - q).abs(),
            (q / 24.0).min(p / 24.0),
        ),
        Condition::at_most("minus_deviation", minus.max_deviation, radius.min(p / 24.0)),
        Condition::at_most("plus_mean", plus_mean_gap, p / 24.0),
        Condition::at_most("plus_deviation", plus_dev, radius.min(p / 24.0)),
    ];
    let overall_pass = conditions.iter().all(|c| c.pass);
    Ok(ConditionReport {
        fiedler_x,
        fiedler_y,
        fiedler_min,
        alpha,
        conditions,
        overall_pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBound {
    /// P(Bin(n, q) ≥ z·n).
    pub exact: f64,
    /// Analytic upper bound; defined only for `q ≤ z ≤ 1`.
    pub bound: Option<f64>,
}

/// `x · ln(y)` with the convention `0 · ln(0) = 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Upper binomial tail together with the bound
/// `n(n+1)/e · exp[n(z(ln q − ln z) + (1−z)(ln(1−q) − ln(1−z)))]`.
pub fn binomial_tail(n: u64, q: f64, z: f64) -> Result<TailBound> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::config("q", format!("{q} is outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::config("z", format!("{z} is outside [0, 1]")));
    }
    let zn = z * n as f64;
    let k0 = zn.round();
    if (zn - k0).abs() > 1e-9 * (1.0 + zn) {
        return Err(Error::Contract(format!("z*n = {zn} is not an integer")));
    }
    let k0 = k0 as u64;

    // ln k! for k = 0..=n
    let mut ln_fact = Vec::with_capacity(n as usize + 1);
    ln_fact.push(0.0);
    for k in 1..=n {
        ln_fact.push(ln_fact[k as usize - 1] + (k as f64).ln());
    }
    let nf = n as f64;
    let terms: Vec<f64> = (k0..=n)
        .map(|k| {
            let kf = k as f64;
            ln_fact[n as usize] - ln_fact[k as usize] - ln_fact[(n - k) as usize]
                + xlogy(kf, q)
                + xlogy(nf - kf, 1.0 - q)
        })
        .collect();
    let exact = log_sum_exp(&terms).exp().min(1.0);

    let bound = (z >= q).then(|| {
        let rate = xlogy(z, q) - xlogy(z, z) + xlogy(1.0 - z, 1.0 - q) - xlogy(1.0 - z, 1.0 - z);
        nf * (nf + 1.0) / std::f64::consts::E * (nf * rate).exp()
    });
    Ok(TailBound { exact, bound })
}

/// Empirical frequencies of a Fiedler number more than `delta` away from
/// `p`, and of a row mean of ψ⁻ at least N^-(1-α)/2 away from `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationResult {
    pub n: usize,
    pub n_samples: usize,
    pub delta: f64,
    pub radius: f64,
    pub freq_fiedler_far: f64,
    pub freq_rowmean_far: f64,
}

pub fn concentration_trial(
    cfg: &ScenarioConfig,
    alpha: f64,
    delta: f64,
    n_samples: usize,
) -> Result<ConcentrationResult> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::config("n_samples", "must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha", format!("{alpha} is outside (0, 1)")));
    }
    let radius = (cfg.n_min() as f64).powf(-(1.0 - alpha) / 2.0);
    let static_cfg = ScenarioConfig {
        scenario: crate::sampling::Scenario::Static,
        ..cfg.clone()
    };
    let flags = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| -> Result<(bool, bool)> {
            let sample_cfg = static_cfg.with_seed(derive_seed(cfg.seed, &[k]));
            let c = sample_coupling_set(&sample_cfg, 0)?;
            let f1 = fiedler_number(&c.psi_plus_x)?;
            let f2 = fiedler_number(&c.psi_plus_y)?;
            let fiedler_far = (f1 - cfg.p).abs() > delta || (f2 - cfg.p).abs() > delta;
            let rows = row_column_stats(&c.psi_minus).row_means;
            let row_far = rows.iter().any(|r| (r - cfg.q).abs() >= radius);
            Ok((fiedler_far, row_far))
        })
        .collect::<Result<Vec<_>>>()?;
    let count = |pick: fn(&(bool, bool)) -> bool| flags.iter().filter(|f| pick(f)).count();
    Ok(ConcentrationResult {
        n: cfg.n_min(),
        n_samples,
        delta,
        radius,
        freq_fiedler_far: count(|f| f.0) as f64 / n_samples as f64,
        freq_rowmean_far: count(|f| f.1) as f64 / n_samples as f64,
    })
}
