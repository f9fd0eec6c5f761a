//! Configuration files, run manifests and the CSV/JSON writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::experiments::{SweepConfig, SweepResult, DEFAULT_SAMPLE_COUNT};
use crate::model::{AgentConfiguration, CouplingSet};
use crate::sampling::{CommunicationSchedule, Scenario, ScenarioConfig};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBlock {
    pub n_values: Vec<usize>,
    pub n_test: usize,
    pub n_discard: usize,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            n_values: vec![10, 20, 40, 80, 160],
            n_test: 10_000,
            n_discard: 100,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n1: usize,
    pub n2: usize,
    pub p: f64,
    pub q: f64,
    pub scenario: Scenario,
    pub tau: f64,
    pub t_final: f64,
    pub dim: usize,
    pub seed: u64,
    pub sample_count: usize,
    pub sweep: SweepBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n1: 40,
            n2: 40,
            p: 0.3,
            q: 0.2,
            scenario: Scenario::Static,
            tau: 1.0,
            t_final: 20.0,
            dim: 1,
            seed: 0,
            sample_count: DEFAULT_SAMPLE_COUNT,
            sweep: SweepBlock::default(),
        }
    }
}

fn open_unit(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in (0, 1), got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 < 2 {
            return Err(Error::config("n1", "must be at least 2"));
        }
        if self.n2 < 2 {
            return Err(Error::config("n2", "must be at least 2"));
        }
        open_unit("p", self.p)?;
        open_unit("q", self.q)?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", "must be positive"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", "must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if self.sample_count < 2 {
            return Err(Error::config("sample_count", "must be at least 2"));
        }
        self.sweep_config().validate().map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field: format!("sweep.{field}"),
                message,
            },
            other => other,
        })
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            tau: self.tau,
            ..ScenarioConfig::new(self.n1, self.n2, self.p, self.q, self.scenario, self.seed)
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            n_values: self.sweep.n_values.clone(),
            n_test: self.sweep.n_test,
            n_discard: self.sweep.n_discard,
            t_final: self.t_final,
            base: self.scenario_config(),
            master_seed: self.seed,
            dim: self.dim,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn take<T: DeserializeOwned>(field: &str, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::config(field, e.to_string()))
}

fn as_object<'a>(field: &str, v: &'a Value) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::config(field, "expected a JSON object"))
}

fn apply_config(obj: &Map<String, Value>, cfg: &mut RunConfig) -> Result<()> {
    for (key, v) in obj {
        match key.as_str() {
            "n1" => cfg.n1 = take(key, v)?,
            "n2" => cfg.n2 = take(key, v)?,
            "p" => cfg.p = take(key, v)?,
            "q" => cfg.q = take(key, v)?,
            "scenario" => {
                let s: String = take(key, v)?;
                cfg.scenario = s.parse()?;
            }
            "tau" => cfg.tau = take(key, v)?,
            "t_final" => cfg.t_final = take(key, v)?,
            "dim" => cfg.dim = take(key, v)?,
            "seed" => cfg.seed = take(key, v)?,
            "sample_count" => cfg.sample_count = take(key, v)?,
            "sweep" => {
                for (k, sv) in as_object("sweep", v)? {
                    let field = format!("sweep.{k}");
                    match k.as_str() {
                        "n_values" => cfg.sweep.n_values = take(&field, sv)?,
                        "n_test" => cfg.sweep.n_test = take(&field, sv)?,
                        "n_discard" => cfg.sweep.n_discard = take(&field, sv)?,
                        _ => return Err(Error::config(&field, "unknown key")),
                    }
                }
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
    }
    Ok(())
}

/// Parses either a bare configuration object or a [`RunManifest`].
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
    let obj = as_object("<root>", &value)?;
    let mut cfg = RunConfig::default();
    if obj.contains_key("artifact_version") {
        for (key, v) in obj {
            match key.as_str() {
                "artifact_version" | "command" | "timestamp" => {}
                "master_seed" => {
                    let _: u64 = take(key, v)?;
                }
                "config" => apply_config(as_object(key, v)?, &mut cfg)?,
                _ => return Err(Error::config(key, "unknown manifest key")),
            }
        }
    } else {
        apply_config(obj, &mut cfg)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    /// Seconds since the Unix epoch; the only field allowed to differ between reruns.
    pub timestamp: u64,
    pub master_seed: u64,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(command: &str, config: RunConfig) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            artifact_version: ARTIFACT_VERSION.to_string(),
            command: command.to_string(),
            timestamp,
            master_seed: config.seed,
            config,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// 17 significant digits, enough to round-trip any double.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Long-format trajectory CSV, rows ordered by (t, group, index, coord).
pub fn write_trajectory_csv<W: Write>(out: &mut W, series: &[AgentConfiguration]) -> Result<()> {
    if series.is_empty() {
        return Err(Error::InsufficientData("empty trajectory series".into()));
    }
    let mut buf = String::from("t,group,index,coord,value\n");
    for state in series {
        let t = fmt_float(state.t);
        for (group, m) in [("x", &state.x), ("y", &state.y)] {
            for i in 0..m.nrows() {
                for c in 0..m.ncols() {
                    buf.push_str(&format!("{t},{group},{i},{c},{}\n", fmt_float(m[(i, c)])));
                }
            }
        }
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: &mut W, result: &SweepResult) -> Result<()> {
    let mut buf =
        String::from("n,mean_lambda_t,untrimmed_mean,n_used,n_degenerate,min,q25,median,q75,max\n");
    for r in &result.records {
        buf.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.n,
            fmt_float(r.mean_lambda_t),
            fmt_float(r.untrimmed_mean),
            r.n_used,
            r.n_degenerate,
            fmt_float(r.min),
            fmt_float(r.q25),
            fmt_float(r.median),
            fmt_float(r.q75),
            fmt_float(r.max)
        ));
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CouplingFile {
    psi_plus_x: Vec<Vec<f64>>,
    psi_plus_y: Vec<Vec<f64>>,
    psi_minus: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn matrix_from_rows(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::config(field, "rows have unequal length"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn couplings_to_json(c: &CouplingSet) -> String {
    serde_json::to_string_pretty(&CouplingFile {
        psi_plus_x: rows_of(&c.psi_plus_x),
        psi_plus_y: rows_of(&c.psi_plus_y),
        psi_minus: rows_of(&c.psi_minus),
    })
    .expect("couplings serialize")
}

/// Reads `{"psi_plus_x": [[..]], "psi_plus_y": [[..]], "psi_minus": [[..]]}`.
pub fn couplings_from_json(text: &str) -> Result<CouplingSet> {
    let f: CouplingFile =
        serde_json::from_str(text).map_err(|e| Error::config("couplings", e.to_string()))?;
    CouplingSet::new(
        matrix_from_rows("psi_plus_x", &f.psi_plus_x)?,
        matrix_from_rows("psi_plus_y", &f.psi_plus_y)?,
        matrix_from_rows("psi_minus", &f.psi_minus)?,
    )
}

pub fn load_couplings(path: &Path) -> Result<CouplingSet> {
    couplings_from_json(&fs::read_to_string(path)?)
}

/// Debug dump of every schedule entry.
pub fn schedule_to_json(s: &CommunicationSchedule) -> String {
    let entries: Vec<CouplingFile> = s
        .entries()
        .iter()
        .map(|c| CouplingFile {
            psi_plus_x: rows_of(&c.psi_plus_x),
            psi_plus_y: rows_of(&c.psi_plus_y),
            psi_minus: rows_of(&c.psi_minus),
        })
        .collect();
    let tau = if s.tau().is_finite() {
        Value::from(s.tau())
    } else {
        Value::Null
    };
    serde_json::to_string_pretty(&serde_json::json!({
        "kind": s.kind(),
        "tau": tau,
        "entries": entries,
    }))
    .expect("schedule serializes")
}
