//! Bernoulli coupling generation.
//!
//! Every matrix is drawn from its own ChaCha8 stream keyed by
//! `(seed, interval, matrix id)`, and entries are consumed in a fixed order,
//! so any coupling set can be regenerated in isolation and in any order.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AgentConfiguration, CouplingSet};

const PSI_PLUS_X: u64 = 0;
const PSI_PLUS_Y: u64 = 1;
const PSI_MINUS: u64 = 2;
const INITIAL_POSITIONS: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Couplings drawn once and kept for all time.
    Static,
    /// Couplings redrawn on every interval `[kτ, (k+1)τ)`.
    Resampled,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Scenario::Static),
            "resampled" => Ok(Scenario::Resampled),
            other => Err(Error::config(
                "scenario",
                format!("expected \"static\" or \"resampled\", got {other:?}"),
            )),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Static => "static",
            Scenario::Resampled => "resampled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n1: usize,
    pub n2: usize,
    /// Intra-group communication rate.
    pub p: f64,
    /// Cross-group communication rate.
    pub q: f64,
    pub scenario: Scenario,
    /// Resampling step; ignored for [`Scenario::Static`].
    pub tau: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(n1: usize, n2: usize, p: f64, q: f64, scenario: Scenario, seed: u64) -> Self {
        ScenarioConfig {
            n1,
            n2,
            p,
            q,
            scenario,
            tau: 1.0,
            seed,
        }
    }

    /// Accepts the closed unit interval for `p` and `q` so degenerate
    /// all-ones / all-zeros couplings can be generated; the config loader
    /// enforces the open interval for user input.
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 {
            return Err(Error::config("n1", "must be at least 1"));
        }
        if self.n2 == 0 {
            return Err(Error::config("n2", "must be at least 1"));
        }
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, format!("{v} is outside [0, 1]")));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(
                "tau",
                format!("{} must be positive", self.tau),
            ));
        }
        Ok(())
    }

    /// Group size ratio max(N₁, N₂) / min(N₁, N₂).
    pub fn kappa(&self) -> f64 {
        self.n1.max(self.n2) as f64 / self.n1.min(self.n2) as f64
    }

    /// N = min(N₁, N₂).
    pub fn n_min(&self) -> usize {
        self.n1.min(self.n2)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioConfig {
            seed,
            ..self.clone()
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `master ⊕ hash(parts)`, used to seed ensemble members.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let h = parts
        .iter()
        .fold(0x6a09_e667_f3bc_c908_u64, |h, &p| splitmix64(h ^ p));
    master ^ h
}

fn stream_rng(seed: u64, interval: u64, matrix_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((interval << 2) | matrix_id);
    rng
}

fn bernoulli(rng: &mut ChaCha8Rng, prob: f64) -> f64 {
    if rng.random::<f64>() < prob {
        1.0
    } else {
        0.0
    }
}

fn symmetric_bernoulli(n: usize, prob: f64, mut rng: ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in (i + 1)..n {
            let v = bernoulli(&mut rng, prob);
            m[(i, k)] = v;
            m[(k, i)] = v;
        }
    }
    m
}

/// Draws the coupling set governing interval `interval_index`.
pub fn sample_coupling_set(cfg: &ScenarioConfig, interval_index: u64) -> Result<CouplingSet> {
    cfg.validate()?;
    if cfg.scenario == Scenario::Static && interval_index != 0 {
        return Err(Error::Contract(format!(
            "static scenario has a single interval, got index {interval_index}"
        )));
    }
    if interval_index >= 1 << 62 {
        return Err(Error::Contract(format!(
            "interval index {interval_index} too large"
        )));
    }
    let psi_plus_x = symmetric_bernoulli(
        cfg.n1,
        cfg.p,
        stream_rng(cfg.seed, interval_index, PSI_PLUS_X),
    );
    let psi_plus_y = symmetric_bernoulli(
        cfg.n2,
        cfg.p,
        stream_rng(cfg.seed, interval_index, PSI_PLUS_Y),
    );
    let mut rng = stream_rng(cfg.seed, interval_index, PSI_MINUS);
    let mut psi_minus = DMatrix::zeros(cfg.n1, cfg.n2);
    for i in 0..cfg.n1 {
        for j in 0..cfg.n2 {
            psi_minus[(i, j)] = bernoulli(&mut rng, cfg.q);
        }
    }
    Ok(CouplingSet {
        psi_plus_x,
        psi_plus_y,
        psi_minus,
    })
}

/// Initial positions i.i.d. uniform on `[0, 1)^dim`, from a stream disjoint
/// from every coupling stream of the same seed.
pub fn sample_initial_positions(
    seed: u64,
    n1: usize,
    n2: usize,
    dim: usize,
) -> Result<AgentConfiguration> {
    let mut rng = stream_rng(seed, 0, INITIAL_POSITIONS);
    let mut x = DMatrix::zeros(n1, dim);
    let mut y = DMatrix::zeros(n2, dim);
    for i in 0..n1 {
        for c in 0..dim {
            x[(i, c)] = rng.random();
        }
    }
    for j in 0..n2 {
        for c in 0..dim {
            y[(j, c)] = rng.random();
        }
    }
    AgentConfiguration::new(x, y)
}

/// Time-indexed coupling sets. Entry `k` of a resampled schedule governs
/// `[kτ, (k+1)τ)`; the last entry also governs a trailing partial interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunicationSchedule {
    kind: Scenario,
    tau: f64,
    entries: Vec<CouplingSet>,
}

impl CommunicationSchedule {
    pub fn fixed(couplings: CouplingSet) -> Self {
        CommunicationSchedule {
            kind: Scenario::Static,
            tau: f64::INFINITY,
            entries: vec![couplings],
        }
    }

    pub fn resampled(tau: f64, entries: Vec<CouplingSet>) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::config("tau", format!("{tau} must be positive")));
        }
        if entries.is_empty() {
            return Err(Error::Schedule(
                "resampled schedule needs at least one entry".into(),
            ));
        }
        let (n1, n2) = (entries[0].n1(), entries[0].n2());
        if entries.iter().any(|e| e.n1() != n1 || e.n2() != n2) {
            return Err(Error::Dimension(
                "schedule entries differ in group sizes".into(),
            ));
        }
        Ok(CommunicationSchedule {
            kind: Scenario::Resampled,
            tau,
            entries,
        })
    }

    pub fn kind(&self) -> Scenario {
        self.kind
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CouplingSet] {
        &self.entries
    }

    pub fn n1(&self) -> usize {
        self.entries[0].n1()
    }

    pub fn n2(&self) -> usize {
        self.entries[0].n2()
    }

    /// Coupling set for interval `k`; a static schedule answers every `k`.
    pub fn get(&self, k: usize) -> Option<&CouplingSet> {
        match self.kind {
            Scenario::Static => self.entries.first(),
            Scenario::Resampled => self.entries.get(k),
        }
    }

    /// Time up to which the schedule defines couplings.
    pub fn horizon(&self) -> f64 {
        match self.kind {
            Scenario::Static => f64::INFINITY,
            Scenario::Resampled => self.entries.len() as f64 * self.tau,
        }
    }
}

pub fn build_schedule(cfg: &ScenarioConfig, t_end: f64) -> Result<CommunicationSchedule> {
    cfg.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::config("t_end", format!("{t_end} must be positive")));
    }
    match cfg.scenario {
        Scenario::Static => Ok(CommunicationSchedule::fixed(sample_coupling_set(cfg, 0)?)),
        Scenario::Resampled => {
            let count = ((t_end / cfg.tau).ceil() as u64).max(1);
            let entries = (0..count)
                .map(|k| sample_coupling_set(cfg, k))
                .collect::<Result<Vec<_>>>()?;
            CommunicationSchedule::resampled(cfg.tau, entries)
        }
    }
}
