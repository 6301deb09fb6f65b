//! Experiment engine: seeded Monte-Carlo trials over a parameter sweep with
//! paired channels across schemes, and result serialization.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_scheme, SchemeId, SchemeOutcome};
use crate::channel::{cee_variances, dbw_to_watt, draw_channels, ChannelSet, SystemConfig};
use crate::error::{Error, Result};
use crate::solver::{SolverParams, Termination};

/// Swept parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    /// Transmit power in dBW.
    PowerDbw,
    Nt,
    Ne,
    Nb,
    M,
    /// Bob's x coordinate in meters.
    Xb,
    /// Channel-uncertainty level.
    Delta,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::PowerDbw => "p_dbw",
            SweepAxis::Nt => "nt",
            SweepAxis::Ne => "ne",
            SweepAxis::Nb => "nb",
            SweepAxis::M => "m",
            SweepAxis::Xb => "xb",
            SweepAxis::Delta => "delta",
        }
    }

    fn is_count(&self) -> bool {
        matches!(
            self,
            SweepAxis::Nt | SweepAxis::Ne | SweepAxis::Nb | SweepAxis::M
        )
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "p" | "p_dbw" | "power_dbw" => SweepAxis::PowerDbw,
            "nt" => SweepAxis::Nt,
            "ne" => SweepAxis::Ne,
            "nb" => SweepAxis::Nb,
            "m" => SweepAxis::M,
            "xb" => SweepAxis::Xb,
            "delta" => SweepAxis::Delta,
            _ => {
                return Err(Error::config(
                    "experiment.sweep.name",
                    format!("unknown axis {s:?}"),
                ))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Channel knowledge available to the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub enum CsiSpec {
    Perfect,
    /// Estimated channels with the given uncertainty levels.
    Imperfect(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// A full experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub system: SystemConfig,
    pub solver: SolverParams,
    pub schemes: Vec<SchemeId>,
    pub sweep: Option<Sweep>,
    pub trials: usize,
    pub seed: u64,
    pub csi: CsiSpec,
    pub multistart: usize,
    pub jobs: usize,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentSpec {
    pub fn new(system: SystemConfig) -> Self {
        Self {
            system,
            solver: SolverParams::default(),
            schemes: vec![
                SchemeId::UpperFc,
                SchemeId::Fc,
                SchemeId::Gc(4),
                SchemeId::Dris,
                SchemeId::RandomFc,
                SchemeId::WoRis,
            ],
            sweep: None,
            trials: 50,
            seed: 1,
            csi: CsiSpec::Perfect,
            multistart: 1,
            jobs: 1,
            output: None,
            format: OutputFormat::Csv,
        }
    }

    /// The sweep actually run: the explicit one, or the uncertainty levels
    /// under imperfect CSI.
    fn effective_sweep(&self) -> Result<Option<Sweep>> {
        match (&self.sweep, &self.csi) {
            (Some(s), CsiSpec::Imperfect(d)) if s.axis != SweepAxis::Delta && d.len() > 1 => {
                Err(Error::config(
                    "experiment.sweep",
                    "cannot combine a sweep with several delta values",
                ))
            }
            (Some(s), CsiSpec::Perfect) if s.axis == SweepAxis::Delta => Err(Error::config(
                "experiment.sweep",
                "a delta sweep needs imperfect CSI",
            )),
            (Some(s), _) => Ok(Some(s.clone())),
            (None, CsiSpec::Imperfect(d)) => Ok(Some(Sweep {
                axis: SweepAxis::Delta,
                values: d.clone(),
            })),
            (None, CsiSpec::Perfect) => Ok(None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("experiment.trials", "must be at least 1"));
        }
        if self.multistart == 0 {
            return Err(Error::config("experiment.multistart", "must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(Error::config("experiment.jobs", "must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("experiment.schemes", "must not be empty"));
        }
        self.solver.validate()?;
        if let CsiSpec::Imperfect(d) = &self.csi {
            if d.is_empty() {
                return Err(Error::config("experiment.delta", "must not be empty"));
            }
        }
        let sweep = self.effective_sweep()?;
        if let Some(s) = &sweep {
            if s.values.is_empty() {
                return Err(Error::config(
                    "experiment.sweep.values",
                    "must not be empty",
                ));
            }
        }
        for cell in self.cells()? {
            cell.system.validate()?;
            let sys = &cell.system;
            for (name, a, b) in [
                ("alice/ris", &sys.alice, &sys.ris),
                ("ris/bob", &sys.ris, &sys.bob),
                ("ris/eve", &sys.ris, &sys.eve),
                ("alice/bob", &sys.alice, &sys.bob),
                ("alice/eve", &sys.alice, &sys.eve),
            ] {
                if !(a.distance(b) > 0.0) {
                    return Err(Error::config(
                        format!("system.{name}"),
                        "positions must be distinct",
                    ));
                }
            }
            for scheme in &self.schemes {
                scheme.validate(cell.system.m)?;
            }
            if let Some(d) = cell.delta {
                if !(d >= 0.0) || !d.is_finite() {
                    return Err(Error::config("experiment.delta", "must be finite and ≥ 0"));
                }
            }
        }
        Ok(())
    }

    fn cells(&self) -> Result<Vec<Cell>> {
        let base_delta = match &self.csi {
            CsiSpec::Perfect => None,
            CsiSpec::Imperfect(d) => d.first().copied(),
        };
        let Some(sweep) = self.effective_sweep()? else {
            return Ok(vec![Cell {
                sweep_name: "none".into(),
                sweep_value: 0.0,
                system: self.system.clone(),
                delta: base_delta,
            }]);
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut system = self.system.clone();
                let mut delta = base_delta;
                if sweep.axis.is_count() && (v < 0.0 || v.fract() != 0.0) {
                    return Err(Error::config(
                        "experiment.sweep.values",
                        format!("{} needs whole numbers, got {v}", sweep.axis.name()),
                    ));
                }
                match sweep.axis {
                    SweepAxis::PowerDbw => system.power_w = dbw_to_watt(v),
                    SweepAxis::Nt => system.nt = v as usize,
                    SweepAxis::Ne => system.ne = v as usize,
                    SweepAxis::Nb => system.nb = v as usize,
                    SweepAxis::M => system.m = v as usize,
                    SweepAxis::Xb => system.bob.x = v,
                    SweepAxis::Delta => delta = Some(v),
                }
                Ok(Cell {
                    sweep_name: sweep.axis.name().into(),
                    sweep_value: v,
                    system,
                    delta,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
struct Cell {
    sweep_name: String,
    sweep_value: f64,
    system: SystemConfig,
    delta: Option<f64>,
}

/// One row of the result table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub scheme: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub sr_bps_hz: f64,
    pub rb_bps_hz: f64,
    pub re_bps_hz: f64,
    pub wall_s: f64,
    pub outer_iters: usize,
    pub final_eta: f64,
    pub unitarity_residual: f64,
    pub termination: String,
}

impl TrialResult {
    pub fn budget_exhausted(&self) -> bool {
        self.termination == Termination::Budget.as_str()
    }
}

/// Stream carrying the channel draws of `trial`.
pub fn channel_rng(seed: u64, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Stream carrying the random initialization of start `start` of `trial`.
pub fn start_rng(seed: u64, trial: usize, start: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((1u64 << 63) | ((trial as u64) << 20) | start as u64);
    rng
}

/// Channels of `trial` for `system`. Identical for every scheme; changing
/// only positions or power keeps the underlying fading draws.
pub fn trial_channels(system: &SystemConfig, seed: u64, trial: usize) -> Result<ChannelSet> {
    draw_channels(system, &mut channel_rng(seed, trial))
}

/// Best of `starts` random starts of `scheme`, by secrecy rate.
pub fn best_of_starts(
    scheme: SchemeId,
    cs: &ChannelSet,
    system: &SystemConfig,
    params: &SolverParams,
    delta: Option<f64>,
    seed: u64,
    trial: usize,
    starts: usize,
) -> Result<SchemeOutcome> {
    let cee = delta.map(|d| cee_variances(cs, d)).transpose()?;
    let mut best: Option<SchemeOutcome> = None;
    for s in 0..starts {
        let out = run_scheme(
            scheme,
            cs,
            system,
            params,
            cee,
            &mut start_rng(seed, trial, s),
        )?;
        if best
            .as_ref()
            .is_none_or(|b| out.secrecy_rate() > b.secrecy_rate())
        {
            best = Some(out);
        }
    }
    best.ok_or_else(|| Error::Domain("no starts requested".into()))
}

fn run_cell(spec: &ExperimentSpec, cell: &Cell, trial: usize) -> Result<Vec<TrialResult>> {
    let cs = trial_channels(&cell.system, spec.seed, trial)?;
    spec.schemes
        .iter()
        .map(|&scheme| {
            let t = Instant::now();
            let out = best_of_starts(
                scheme,
                &cs,
                &cell.system,
                &spec.solver,
                cell.delta,
                spec.seed,
                trial,
                spec.multistart,
            )?;
            Ok(TrialResult {
                scheme: scheme.to_string(),
                sweep_name: cell.sweep_name.clone(),
                sweep_value: cell.sweep_value,
                trial,
                seed: spec.seed,
                sr_bps_hz: out.secrecy_rate(),
                rb_bps_hz: out.rb,
                re_bps_hz: out.re,
                wall_s: t.elapsed().as_secs_f64(),
                outer_iters: out.outer_iters,
                final_eta: out.final_eta,
                unitarity_residual: out.unitarity_residual,
                termination: out.termination.as_str().into(),
            })
        })
        .collect()
}

/// Runs every (sweep value, trial) cell on a pool of `spec.jobs` workers and
/// returns rows ordered by sweep value, trial, then scheme.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TrialResult>> {
    spec.validate()?;
    let cells = spec.cells()?;
    let work: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials).map(move |t| (c, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::config("experiment.jobs", e.to_string()))?;
    let chunks: Vec<Result<Vec<TrialResult>>> = pool.install(|| {
        work.par_iter()
            .map(|&(c, t)| run_cell(spec, &cells[c], t))
            .collect()
    });
    let mut rows = Vec::new();
    for chunk in chunks {
        rows.extend(chunk?);
    }
    Ok(rows)
}

/// Population RMSE about the sample mean.
pub fn compute_rmse(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Domain(format!(
            "RMSE needs at least two values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, e: impl fmt::Display) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Serializes the table as CSV (header plus one line per row) or as a JSON
/// array.
pub fn write_table<W: Write>(rows: &[TrialResult], out: W, format: OutputFormat) -> Result<()> {
    let fail = |e: &dyn fmt::Display| Error::Format {
        path: PathBuf::from("<table>"),
        msg: e.to_string(),
    };
    if rows.is_empty() {
        return Err(Error::Domain("refusing to write an empty table".into()));
    }
    let mut out = BufWriter::new(out);
    match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut out);
            for r in rows {
                w.serialize(r).map_err(|e| fail(&e))?;
            }
            w.flush().map_err(|e| fail(&e))?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows).map_err(|e| fail(&e))?;
            out.write_all(b"\n").map_err(|e| fail(&e))?;
        }
    }
    out.flush().map_err(|e| fail(&e))
}

/// Writes the table to `path`.
pub fn write_results(rows: &[TrialResult], path: &Path, format: OutputFormat) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Domain("refusing to write an empty table".into()));
    }
    let file = File::create(path).map_err(io_err(path))?;
    write_table(rows, file, format).map_err(|e| match e {
        Error::Format { msg, .. } => Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(msg),
        },
        e => e,
    })
}

/// Reads a table written by [`write_results`].
pub fn read_results(path: &Path, format: OutputFormat) -> Result<Vec<TrialResult>> {
    let file = File::open(path).map_err(io_err(path))?;
    match format {
        OutputFormat::Csv => csv::Reader::from_reader(BufReader::new(file))
            .deserialize()
            .map(|r| r.map_err(|e| format_err(path, e)))
            .collect(),
        OutputFormat::Json => {
            serde_json::from_reader(BufReader::new(file)).map_err(|e| format_err(path, e))
        }
    }
}
