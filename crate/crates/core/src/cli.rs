//! `twogroup` command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::diagnostics::{
    growth_rate_check, ode_bounds, riccati_oracle, OdeBoundParams, GROWTH_BURN_IN, GROWTH_TOLERANCE,
};
use crate::error::Result;
use crate::experiments::{concentration_sweep, run_sweep, run_trajectory};
use crate::io::{
    load_config, load_couplings, schedule_to_json, write_sweep_csv, write_trajectory_csv,
    RunConfig, RunManifest,
};
use crate::sampling::{sample_coupling_set, Scenario};
use crate::spectral::{check_conditions, fiedler_number, row_column_stats};

#[derive(Parser, Debug)]
#[command(
    name = "twogroup",
    version,
    about = "Two-group opinion dynamics with random communication"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trajectory and write it as CSV
    Simulate(SimulateArgs),
    /// Ensemble sweep of λ(T) over group sizes
    Sweep(SweepArgs),
    /// Ratio bounds for the comparison Riccati equation
    LemmaOde(LemmaOdeArgs),
    /// Fiedler numbers, row statistics and coupling conditions
    Spectral(SpectralArgs),
    /// Monte Carlo concentration frequencies
    Concentration(ConcentrationArgs),
}

#[derive(Args, Debug, Clone)]
struct ScenarioArgs {
    /// JSON configuration or manifest; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sets both group sizes
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sample_count: Option<usize>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(n) = self.n {
            cfg.n1 = n;
            cfg.n2 = n;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(
            n1,
            n2,
            p,
            q,
            scenario,
            tau,
            t_final,
            dim,
            seed,
            sample_count
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Trajectory CSV destination
    #[arg(long)]
    out: PathBuf,
    /// Report JSON destination (stdout if omitted)
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Dump every sampled coupling set as JSON
    #[arg(long)]
    dump_schedule: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    n_discard: Option<usize>,
    /// Per-N CSV destination
    #[arg(long)]
    out: PathBuf,
    /// Slope summary JSON destination (stdout if omitted)
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LemmaOdeArgs {
    #[arg(long, allow_negative_numbers = true)]
    a11: f64,
    #[arg(long, allow_negative_numbers = true)]
    a12: f64,
    #[arg(long, allow_negative_numbers = true)]
    a21: f64,
    #[arg(long, allow_negative_numbers = true)]
    a22: f64,
    /// Initial ratio λ(0)
    #[arg(long)]
    lambda0: f64,
    /// Horizon for the Riccati comparison
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
}

#[derive(Args, Debug)]
struct SpectralArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Coupling set JSON; sampled from the scenario if omitted
    #[arg(long)]
    couplings: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct ConcentrationArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [50, 100, 200])]
    n_values: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

fn emit(out: &mut dyn Write, path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.scenario.resolve()?;
    let traj = run_trajectory(
        &cfg.scenario_config(),
        cfg.t_final,
        cfg.dim,
        cfg.sample_count,
    )?;
    let mut csv = Vec::new();
    write_trajectory_csv(&mut csv, &traj.states())?;
    write_file(&args.out, &csv)?;
    if let Some(p) = &args.dump_schedule {
        write_file(p, schedule_to_json(&traj.schedule).as_bytes())?;
    }
    if let Some(p) = &args.manifest {
        write_file(
            p,
            RunManifest::new("simulate", cfg.clone())
                .to_json()
                .as_bytes(),
        )?;
    }
    let q_bar = traj.mean_cross_rate();
    let growth = growth_rate_check(&traj.reports(), q_bar, GROWTH_BURN_IN, GROWTH_TOLERANCE).ok();
    let last = traj.last_report();
    let report = json!({
        "config": cfg,
        "kappa": cfg.scenario_config().kappa(),
        "initial": traj.first_report(),
        "final": last,
        "hyperplane_separated": last.is_some_and(|r| r.hyperplane_separated),
        "separation_persists": traj.separation_persists(),
        "mean_cross_rate": q_bar,
        "growth": growth,
    });
    emit(out, args.report.as_deref(), &report)
}

fn sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = args.scenario.resolve()?;
    if let Some(v) = &args.n_values {
        cfg.sweep.n_values = v.clone();
    }
    if let Some(v) = args.n_test {
        cfg.sweep.n_test = v;
    }
    if let Some(v) = args.n_discard {
        cfg.sweep.n_discard = v;
    }
    cfg.validate()?;
    let result = run_sweep(&cfg.sweep_config())?;
    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, &result)?;
    write_file(&args.out, &csv)?;
    if let Some(p) = &args.manifest {
        write_file(
            p,
            RunManifest::new("sweep", cfg.clone()).to_json().as_bytes(),
        )?;
    }
    let summary = json!({
        "config": cfg,
        "fitted_slope": result.fitted_slope,
        "fitted_intercept": result.fitted_intercept,
        "r_squared": result.r_squared,
        "records": result.records,
    });
    emit(out, args.summary.as_deref(), &summary)
}

fn lemma_ode(args: &LemmaOdeArgs, out: &mut dyn Write) -> Result<()> {
    let params = OdeBoundParams::new(args.a11, args.a12, args.a21, args.a22)?;
    let bounds = ode_bounds(&params, args.lambda0)?;
    let slack = riccati_oracle(&params, args.lambda0, args.t_end)?;
    let report = json!({
        "delta": bounds.delta,
        "lambda_plus": bounds.lambda_plus,
        "lambda_minus": bounds.lambda_minus,
        "mu": bounds.mu,
        "vieta_product": bounds.lambda_plus * bounds.lambda_minus,
        "vieta_expected": args.a21 / args.a12,
        "ratio_bound_at_t_end": bounds.ratio_bound(args.lambda0, args.t_end),
        "t_end": args.t_end,
        "riccati_slack": slack,
    });
    emit(out, None, &report)
}

fn spectral(args: &SpectralArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.scenario.resolve()?;
    let couplings = match &args.couplings {
        Some(p) => load_couplings(p)?,
        None => sample_coupling_set(&cfg.scenario_config(), 0)?,
    };
    let conditions = check_conditions(&couplings, cfg.p, cfg.q, args.alpha)?;
    let stats = |m| {
        let s = row_column_stats(m);
        json!({
            "overall_mean": s.overall_mean,
            "max_row_deviation": s.max_row_deviation(),
            "max_deviation": s.max_deviation,
        })
    };
    let report = json!({
        "n1": couplings.n1(),
        "n2": couplings.n2(),
        "fiedler_x": fiedler_number(&couplings.psi_plus_x)?,
        "fiedler_y": fiedler_number(&couplings.psi_plus_y)?,
        "psi_plus_x": stats(&couplings.psi_plus_x),
        "psi_plus_y": stats(&couplings.psi_plus_y),
        "psi_minus": stats(&couplings.psi_minus),
        "conditions": conditions,
    });
    emit(out, None, &report)
}

fn concentration(args: &ConcentrationArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.scenario.resolve()?;
    let results = concentration_sweep(
        &cfg.scenario_config(),
        &args.n_values,
        args.alpha,
        args.delta,
        args.samples,
    )?;
    emit(
        out,
        None,
        &json!({ "p": cfg.p, "q": cfg.q, "alpha": args.alpha, "results": results }),
    )
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Sweep(a) => sweep(a, out),
        Command::LemmaOde(a) => lemma_ode(a, out),
        Command::Spectral(a) => spectral(a, out),
        Command::Concentration(a) => concentration(a, out),
    }
}

/// Runs the CLI with JSON output going to `out`; returns the exit code.
pub fn cli_main_with<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    cli_main_with(argv, &mut std::io::stdout().lock())
}
