//! Scenario runner behind the `windvic` binary: loads scenario files,
//! runs them and writes CSV, SVG and JSON artifacts.

pub mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;
use windvic::analysis::{compute_metrics, MetricValue, MetricsOptions};
use windvic::gains::{brunovsky_chain, hurwitz_check, lqr_solve, LqrWeights, OhftGains};
use windvic::scenario::Scenario;
use windvic::{run_scenario, ControllerKind, RunMetrics};

use report::{metrics_json, plots, time_series_csv, write_atomic, OutputBundle};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] windvic::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{failed} of {total} sweep runs failed")]
    Sweep {
        failed: usize,
        total: usize,
        code: i32,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(windvic::Error::Domain(_) | windvic::Error::Config(_)) => 2,
            CliError::Core(windvic::Error::Synthesis(_)) => 3,
            CliError::Core(windvic::Error::SimulationFault { .. }) => 4,
            CliError::Io { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Sweep { code, .. } => *code,
        }
    }
}

/// Flags shared by `run` and `sweep`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub dt: Option<f64>,
    pub controller: Option<ControllerKind>,
    pub no_plots: bool,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(Scenario::from_toml_str(&src)?)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

/// Run one scenario and write its artifacts into `dir`.
pub fn run_to_bundle(scenario: &Scenario, opts: &RunOptions, dir: &Path) -> RunResult {
    let scenario = match opts.dt {
        Some(dt) => scenario.clone().with_dt(dt)?,
        None => scenario.clone(),
    };
    let kind = opts.controller.unwrap_or(scenario.controller.kind);
    let ts = run_scenario(&scenario.to_config_with(kind)?)?;
    let metrics = compute_metrics(&ts, &MetricsOptions::default())?;

    create_dir(dir)?;
    let out = &scenario.output;
    let file = |suffix: &str| dir.join(format!("{}{suffix}", out.prefix));
    let mut bundle = OutputBundle::default();
    if out.csv {
        let path = file(".csv");
        write_atomic(&path, time_series_csv(&ts).as_bytes())?;
        bundle.csv = Some(path);
    }
    if out.plots && !opts.no_plots {
        for (name, svg) in plots(&ts) {
            let path = file(&format!("_{name}.svg"));
            write_atomic(&path, svg.as_bytes())?;
            bundle.plots.push(path);
        }
    }
    if out.metrics {
        let path = file("_metrics.json");
        let json = serde_json::to_string_pretty(&metrics_json(&metrics.to_flat())).expect("json");
        write_atomic(&path, (json + "\n").as_bytes())?;
        bundle.metrics = Some(path);
    }
    Ok((bundle, metrics))
}

pub fn cmd_run(scenario: &Path, opts: &RunOptions) -> RunResult {
    run_to_bundle(&load_scenario(scenario)?, opts, &opts.out)
}

/// Artifacts and metrics of one run, or why it failed.
pub type RunResult = Result<(OutputBundle, RunMetrics), CliError>;

pub struct SweepOutcome {
    pub runs: Vec<(f64, RunResult)>,
    pub table: PathBuf,
}

fn wind_dir(out: &Path, v: f64) -> PathBuf {
    out.join(format!("wind_{v}"))
}

/// Run the scenario once per wind speed, concurrently, each into its own
/// subdirectory, then write a comparison table of all metrics.
pub fn cmd_sweep(
    scenario: &Path,
    winds: &[f64],
    opts: &RunOptions,
) -> Result<SweepOutcome, CliError> {
    if winds.is_empty() {
        return Err(CliError::Usage("--wind needs at least one value".into()));
    }
    if let Some(v) = winds.iter().find(|v| !v.is_finite()) {
        return Err(CliError::Usage(format!("invalid wind speed {v}")));
    }
    let base = load_scenario(scenario)?;
    create_dir(&opts.out)?;
    let runs: Vec<_> = winds
        .par_iter()
        .map(|&v| {
            let sc = base.clone().with_wind(v);
            (v, run_to_bundle(&sc, opts, &wind_dir(&opts.out, v)))
        })
        .collect();
    let table = opts.out.join(format!("{}_sweep.csv", base.output.prefix));
    write_atomic(&table, comparison_table(&runs).as_bytes())?;
    Ok(SweepOutcome { runs, table })
}

fn comparison_table(runs: &[(f64, RunResult)]) -> String {
    let keys: Vec<String> = runs
        .iter()
        .find_map(|(_, r)| r.as_ref().ok())
        .map(|(_, m)| m.to_flat().into_iter().map(|(k, _)| k).collect())
        .unwrap_or_default();
    let mut out = String::from("wind_speed_mps,status");
    for k in &keys {
        write!(out, ",{k}").unwrap();
    }
    out.push('\n');
    for (v, r) in runs {
        match r {
            Ok((_, m)) => {
                write!(out, "{v},ok").unwrap();
                for (_, value) in m.to_flat() {
                    match value {
                        MetricValue::Number(x) => write!(out, ",{x}").unwrap(),
                        MetricValue::Text(s) => write!(out, ",{s}").unwrap(),
                        MetricValue::Missing => out.push(','),
                    }
                }
            }
            Err(_) => {
                write!(out, "{v},failed").unwrap();
                out.push_str(&",".repeat(keys.len()));
            }
        }
        out.push('\n');
    }
    out
}

/// LQR gains for an order-`n` chain, printed to six decimals.
pub fn cmd_gains(n: usize, q: Option<&[f64]>, alpha: f64) -> Result<String, CliError> {
    let weights = match q {
        Some(q) => LqrWeights::diagonal(q, alpha),
        None => LqrWeights {
            alpha,
            ..LqrWeights::default_for(n)
        },
    };
    let sol = lqr_solve(&brunovsky_chain(n)?, &weights)?;
    let k: Vec<String> = sol.gains.k.iter().map(|k| format!("{k:.6}")).collect();
    Ok(k.join(" "))
}

/// Hurwitz verdict on the first line, then one eigenvalue per line.
pub fn cmd_check(k: &[f64]) -> String {
    let report = hurwitz_check(&OhftGains::new(k.to_vec()));
    let mut out = String::from(if report.stable { "stable" } else { "unstable" });
    for z in &report.eigenvalues {
        write!(out, "\n{:.6} {:+.6}i", z.re, z.im).unwrap();
    }
    out
}
