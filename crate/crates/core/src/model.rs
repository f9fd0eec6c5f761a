//! State and coupling data model for the two-group system.
//!
//! Group 1 positions are the rows of `x` (N₁ × d), group 2 the rows of `y`
//! (N₂ × d). The dynamics are
//!
//! ```text
//! ẋᵢ = (1/N₁) Σ_{i'≠i} ψ⁺ᵢᵢ' (xᵢ' − xᵢ) − (1/N₂) Σⱼ ψ⁻ᵢⱼ (yⱼ − xᵢ)
//! ẏⱼ = (1/N₂) Σ_{j'≠j} ψ⁺ⱼⱼ' (yⱼ' − yⱼ) − (1/N₁) Σᵢ ψ⁻ᵢⱼ (xᵢ − yⱼ)
//! ```
//!
//! Couplings never depend on positions, so the system is linear and acts on
//! every spatial coordinate independently through one (N₁+N₂)² matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Positions of both groups at one instant.
///
/// The physical state is `exp(log_scale) * (x, y)`; the integrator folds
/// overflow rescalings and output normalization into `log_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfiguration {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub t: f64,
    pub log_scale: f64,
}

impl AgentConfiguration {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        let config = AgentConfiguration {
            x,
            y,
            t: 0.0,
            log_scale: 0.0,
        };
        config.validate()?;
        Ok(config)
    }

    /// One-dimensional configuration from plain slices.
    pub fn from_1d(x: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_column_slice(x.len(), 1, x),
            DMatrix::from_column_slice(y.len(), 1, y),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() == 0 || self.y.nrows() == 0 {
            return Err(Error::Dimension(
                "both groups need at least one agent".into(),
            ));
        }
        if self.x.ncols() == 0 || self.x.ncols() != self.y.ncols() {
            return Err(Error::Dimension(format!(
                "spatial dimensions differ or are zero: x has {}, y has {}",
                self.x.ncols(),
                self.y.ncols()
            )));
        }
        if !self.x.iter().chain(self.y.iter()).all(|v| v.is_finite()) {
            return Err(Error::Contract("positions must be finite".into()));
        }
        if !self.t.is_finite() || !self.log_scale.is_finite() {
            return Err(Error::Contract("time and log_scale must be finite".into()));
        }
        Ok(())
    }

    pub fn n1(&self) -> usize {
        self.x.nrows()
    }

    pub fn n2(&self) -> usize {
        self.y.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Group-major stacking `[x; y]`, one column per spatial coordinate.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n1, n2, d) = (self.n1(), self.n2(), self.dim());
        let mut z = DMatrix::zeros(n1 + n2, d);
        z.rows_mut(0, n1).copy_from(&self.x);
        z.rows_mut(n1, n2).copy_from(&self.y);
        z
    }

    pub fn from_stacked(z: &DMatrix<f64>, n1: usize, t: f64, log_scale: f64) -> Self {
        let n2 = z.nrows() - n1;
        AgentConfiguration {
            x: z.rows(0, n1).into_owned(),
            y: z.rows(n1, n2).into_owned(),
            t,
            log_scale,
        }
    }

    /// Multiplies the stored positions by `gamma`, leaving `log_scale` alone.
    pub fn scaled(&self, gamma: f64) -> Self {
        AgentConfiguration {
            x: &self.x * gamma,
            y: &self.y * gamma,
            ..self.clone()
        }
    }

    /// Largest absolute stored entry.
    pub fn max_abs(&self) -> f64 {
        self.x
            .iter()
            .chain(self.y.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Positions with `log_scale` folded back in.
    pub fn physical(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let s = self.log_scale.exp();
        (&self.x * s, &self.y * s)
    }
}

/// The three coupling matrices ψ⁺ (group 1), ψ⁺ (group 2) and ψ⁻ (cross).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    pub psi_plus_x: DMatrix<f64>,
    pub psi_plus_y: DMatrix<f64>,
    pub psi_minus: DMatrix<f64>,
}

impl CouplingSet {
    pub fn new(
        psi_plus_x: DMatrix<f64>,
        psi_plus_y: DMatrix<f64>,
        psi_minus: DMatrix<f64>,
    ) -> Result<Self> {
        let set = CouplingSet {
            psi_plus_x,
            psi_plus_y,
            psi_minus,
        };
        set.validate()?;
        Ok(set)
    }

    /// Deterministic weights: ψ⁺ ≡ `p` off the diagonal, ψ⁻ ≡ `q`.
    pub fn constant(n1: usize, n2: usize, p: f64, q: f64) -> Result<Self> {
        let plus = |n: usize| DMatrix::from_fn(n, n, |i, k| if i == k { 0.0 } else { p });
        Self::new(plus(n1), plus(n2), DMatrix::from_element(n1, n2, q))
    }

    pub fn n1(&self) -> usize {
        self.psi_plus_x.nrows()
    }

    pub fn n2(&self) -> usize {
        self.psi_plus_y.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n1, n2) = (self.n1(), self.n2());
        if n1 == 0 || n2 == 0 {
            return Err(Error::Dimension(
                "coupling matrices must be nonempty".into(),
            ));
        }
        if !self.psi_plus_x.is_square() || !self.psi_plus_y.is_square() {
            return Err(Error::Dimension("psi_plus matrices must be square".into()));
        }
        if self.psi_minus.shape() != (n1, n2) {
            return Err(Error::Dimension(format!(
                "psi_minus is {:?}, expected ({n1}, {n2})",
                self.psi_minus.shape()
            )));
        }
        for (name, m) in [
            ("psi_plus_x", &self.psi_plus_x),
            ("psi_plus_y", &self.psi_plus_y),
        ] {
            check_symmetric_zero_diagonal(name, m)?;
        }
        let all = self
            .psi_plus_x
            .iter()
            .chain(self.psi_plus_y.iter())
            .chain(self.psi_minus.iter());
        for &v in all {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Contract(format!(
                    "coupling weight {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_symmetric_zero_diagonal(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension(format!("{name} must be square")));
    }
    for i in 0..n {
        if m[(i, i)] != 0.0 {
            return Err(Error::Contract(format!(
                "{name} has nonzero diagonal at {i}"
            )));
        }
        for k in (i + 1)..n {
            if (m[(i, k)] - m[(k, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::Contract(format!(
                    "{name} is not symmetric at ({i}, {k})"
                )));
            }
        }
    }
    Ok(())
}

/// Means, variances and maximal deviations of both groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStatistics {
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
    pub var_x: f64,
    pub var_y: f64,
    pub max_dev_x: f64,
    pub max_dev_y: f64,
}

impl GroupStatistics {
    pub fn mean_gap_sq(&self) -> f64 {
        (&self.mean_x - &self.mean_y).norm_squared()
    }
}

fn group_moments(m: &DMatrix<f64>) -> (DVector<f64>, f64, f64) {
    let n = m.nrows() as f64;
    let mean: DVector<f64> = m.row_sum().transpose() / n;
    let mut var = 0.0;
    let mut max_dev_sq = 0.0_f64;
    for row in m.row_iter() {
        let dev_sq = (row.transpose() - &mean).norm_squared();
        var += dev_sq;
        max_dev_sq = max_dev_sq.max(dev_sq);
    }
    (mean, var / n, max_dev_sq.sqrt())
}

/// Mean/deviation decomposition of a configuration.
pub fn decompose(config: &AgentConfiguration) -> GroupStatistics {
    let (mean_x, var_x, max_dev_x) = group_moments(&config.x);
    let (mean_y, var_y, max_dev_y) = group_moments(&config.y);
    GroupStatistics {
        mean_x,
        mean_y,
        var_x,
        var_y,
        max_dev_x,
        max_dev_y,
    }
}

/// Time derivative of both groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

fn check_shapes(config: &AgentConfiguration, couplings: &CouplingSet) -> Result<()> {
    if config.n1() != couplings.n1() || config.n2() != couplings.n2() {
        return Err(Error::Dimension(format!(
            "state has groups ({}, {}), couplings are for ({}, {})",
            config.n1(),
            config.n2(),
            couplings.n1(),
            couplings.n2()
        )));
    }
    Ok(())
}

/// Right-hand side evaluated term by term.
pub fn rhs(config: &AgentConfiguration, couplings: &CouplingSet) -> Result<Derivative> {
    check_shapes(config, couplings)?;
    let (n1, n2, d) = (config.n1(), config.n2(), config.dim());
    let (x, y) = (&config.x, &config.y);
    let (inv1, inv2) = (1.0 / n1 as f64, 1.0 / n2 as f64);
    let mut dx = DMatrix::zeros(n1, d);
    let mut dy = DMatrix::zeros(n2, d);
    for c in 0..d {
        for i in 0..n1 {
            let mut align = 0.0;
            for k in (0..n1).filter(|&k| k != i) {
                align += couplings.psi_plus_x[(i, k)] * (x[(k, c)] - x[(i, c)]);
            }
            let mut repel = 0.0;
            for j in 0..n2 {
                repel += couplings.psi_minus[(i, j)] * (y[(j, c)] - x[(i, c)]);
            }
            dx[(i, c)] = inv1 * align - inv2 * repel;
        }
        for j in 0..n2 {
            let mut align = 0.0;
            for k in (0..n2).filter(|&k| k != j) {
                align += couplings.psi_plus_y[(j, k)] * (y[(k, c)] - y[(j, c)]);
            }
            let mut repel = 0.0;
            for i in 0..n1 {
                repel += couplings.psi_minus[(i, j)] * (x[(i, c)] - y[(j, c)]);
            }
            dy[(j, c)] = inv2 * align - inv1 * repel;
        }
    }
    Ok(Derivative { x: dx, y: dy })
}

/// Laplacian-style matrix with `-ψᵢₖ/n` off the diagonal and row sums
/// cancelled on the diagonal. The diagonal of `psi` is ignored.
pub fn scaled_laplacian(psi: &DMatrix<f64>) -> DMatrix<f64> {
    let n = psi.nrows();
    let inv = 1.0 / n as f64;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut degree = 0.0;
        for k in (0..n).filter(|&k| k != i) {
            a[(i, k)] = -psi[(i, k)] * inv;
            degree += psi[(i, k)];
        }
        a[(i, i)] = degree * inv;
    }
    a
}

/// The matrix M with `ż = M z` for the group-major stacking `z = [x; y]`.
pub fn system_matrix(couplings: &CouplingSet) -> Result<DMatrix<f64>> {
    couplings.validate()?;
    let (n1, n2) = (couplings.n1(), couplings.n2());
    let (inv1, inv2) = (1.0 / n1 as f64, 1.0 / n2 as f64);
    let psi_minus = &couplings.psi_minus;

    let mut m = DMatrix::zeros(n1 + n2, n1 + n2);
    let mut xx = -scaled_laplacian(&couplings.psi_plus_x);
    for i in 0..n1 {
        xx[(i, i)] += psi_minus.row(i).sum() * inv2;
    }
    let mut yy = -scaled_laplacian(&couplings.psi_plus_y);
    for j in 0..n2 {
        yy[(j, j)] += psi_minus.column(j).sum() * inv1;
    }
    m.view_mut((0, 0), (n1, n1)).copy_from(&xx);
    m.view_mut((n1, n1), (n2, n2)).copy_from(&yy);
    m.view_mut((0, n1), (n1, n2))
        .copy_from(&(psi_minus * -inv2));
    m.view_mut((n1, 0), (n2, n1))
        .copy_from(&(psi_minus.transpose() * -inv1));
    Ok(m)
}
