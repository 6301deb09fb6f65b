//! JSON experiment configuration. Every section is optional and falls back to
//! the reference scenario; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::baselines::SchemeId;
use crate::channel::{dbm_to_watt, dbw_to_watt, Exponents, Position, SystemConfig};
use crate::error::{Error, Result};
use crate::harness::{CsiSpec, ExperimentSpec, OutputFormat, Sweep, SweepAxis};
use crate::solver::SolverParams;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    system: Option<SystemSection>,
    solver: Option<SolverParams>,
    experiment: Option<ExperimentSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    nt: Option<usize>,
    nb: Option<usize>,
    ne: Option<usize>,
    ns: Option<usize>,
    m: Option<usize>,
    g: Option<usize>,
    power_w: Option<f64>,
    power_dbw: Option<f64>,
    sigma_b2_w: Option<f64>,
    sigma_b2_dbm: Option<f64>,
    sigma_e2_w: Option<f64>,
    sigma_e2_dbm: Option<f64>,
    alice: Option<Position>,
    ris: Option<Position>,
    bob: Option<Position>,
    eve: Option<Position>,
    zeta: Option<Exponents>,
    c0: Option<f64>,
    c0_db: Option<f64>,
    d0: Option<f64>,
    kappa: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    name: String,
    values: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    schemes: Option<Vec<String>>,
    trials: Option<usize>,
    seed: Option<u64>,
    csi: Option<String>,
    delta: Option<Vec<f64>>,
    multistart: Option<usize>,
    jobs: Option<usize>,
    sweep: Option<SweepSection>,
    output: Option<PathBuf>,
    format: Option<String>,
}

/// Picks the linear or the log-scale key, rejecting both at once.
fn either(
    section: &str,
    linear: (&str, Option<f64>),
    log: (&str, Option<f64>),
    convert: fn(f64) -> f64,
    default: f64,
) -> Result<f64> {
    match (linear.1, log.1) {
        (Some(_), Some(_)) => Err(Error::config(
            format!("{section}.{}", log.0),
            format!("conflicts with `{}`", linear.0),
        )),
        (Some(v), None) => Ok(v),
        (None, Some(v)) => Ok(convert(v)),
        (None, None) => Ok(default),
    }
}

fn build_system(s: SystemSection) -> Result<SystemConfig> {
    let d = SystemConfig::default();
    let cfg = SystemConfig {
        nt: s.nt.unwrap_or(d.nt),
        nb: s.nb.unwrap_or(d.nb),
        ne: s.ne.unwrap_or(d.ne),
        ns: s.ns.unwrap_or(d.ns),
        m: s.m.unwrap_or(d.m),
        g: s.g.unwrap_or(d.g),
        power_w: either(
            "system",
            ("power_w", s.power_w),
            ("power_dbw", s.power_dbw),
            dbw_to_watt,
            d.power_w,
        )?,
        sigma_b2: either(
            "system",
            ("sigma_b2_w", s.sigma_b2_w),
            ("sigma_b2_dbm", s.sigma_b2_dbm),
            dbm_to_watt,
            d.sigma_b2,
        )?,
        sigma_e2: either(
            "system",
            ("sigma_e2_w", s.sigma_e2_w),
            ("sigma_e2_dbm", s.sigma_e2_dbm),
            dbm_to_watt,
            d.sigma_e2,
        )?,
        alice: s.alice.unwrap_or(d.alice),
        ris: s.ris.unwrap_or(d.ris),
        bob: s.bob.unwrap_or(d.bob),
        eve: s.eve.unwrap_or(d.eve),
        zeta: s.zeta.unwrap_or(d.zeta),
        c0: either(
            "system",
            ("c0", s.c0),
            ("c0_db", s.c0_db),
            dbw_to_watt,
            d.c0,
        )?,
        d0: s.d0.unwrap_or(d.d0),
        kappa: s.kappa.unwrap_or(d.kappa),
    };
    Ok(cfg)
}

pub fn parse_schemes(items: &[String]) -> Result<Vec<SchemeId>> {
    if items.is_empty() {
        return Err(Error::config("experiment.schemes", "must not be empty"));
    }
    items.iter().map(|s| s.parse()).collect()
}

pub fn parse_format(s: &str) -> Result<OutputFormat> {
    match s.to_ascii_lowercase().as_str() {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        _ => Err(Error::config(
            "experiment.format",
            format!("unknown format {s:?}"),
        )),
    }
}

/// Builds a CSI mode from its name and an optional uncertainty list.
pub fn parse_csi(mode: &str, delta: Option<Vec<f64>>) -> Result<CsiSpec> {
    match mode.to_ascii_lowercase().as_str() {
        "perfect" => Ok(CsiSpec::Perfect),
        "imperfect" => Ok(CsiSpec::Imperfect(
            delta.unwrap_or_else(|| vec![0.0, 0.05, 0.1]),
        )),
        _ => Err(Error::config(
            "experiment.csi",
            format!("unknown CSI mode {mode:?}"),
        )),
    }
}

pub fn parse_sweep(name: &str, values: Vec<f64>) -> Result<Sweep> {
    let axis: SweepAxis = name.parse()?;
    Ok(Sweep { axis, values })
}

/// Parses a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| {
        Error::config(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let system = build_system(file.system.unwrap_or_default())?;
    let solver = file.solver.unwrap_or_default();
    let e = file.experiment.unwrap_or_default();
    let defaults = ExperimentSpec::new(system.clone());
    let csi = match e.csi.as_deref() {
        Some(mode) => parse_csi(mode, e.delta)?,
        None if e.delta.is_some() => parse_csi("imperfect", e.delta)?,
        None => CsiSpec::Perfect,
    };
    let spec = ExperimentSpec {
        system,
        solver,
        schemes: match e.schemes {
            Some(s) => parse_schemes(&s)?,
            None => defaults.schemes,
        },
        sweep: e
            .sweep
            .map(|s| parse_sweep(&s.name, s.values))
            .transpose()?,
        trials: e.trials.unwrap_or(defaults.trials),
        seed: e.seed.unwrap_or(defaults.seed),
        csi,
        multistart: e.multistart.unwrap_or(defaults.multistart),
        jobs: e.jobs.unwrap_or(defaults.jobs),
        output: e.output,
        format: e
            .format
            .as_deref()
            .map(parse_format)
            .transpose()?
            .unwrap_or(defaults.format),
    };
    Ok(spec)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
