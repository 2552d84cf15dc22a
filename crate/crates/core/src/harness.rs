//! Batch entry points: estimation on user CSVs, simulation of a model, and
//! Monte Carlo rejection-rate tables.
//!
//! All machine-readable output goes to files. Progress goes to standard
//! error. Wall-clock timings live in their own sidecar so that the main
//! reports depend only on the configuration and seed.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{sequential_test, BootstrapConfig, ProjectionMode, SequentialResult};
use crate::error::{Error, Result};
use crate::polyspectra::{frequency_grid, TargetOrder};
use crate::rng;
use crate::series::TimeSeriesMatrix;
use crate::shocks::ShockDistribution;
use crate::varma::{simulate_svarma, ModelDescriptor, StructuralModel};

const TAG_MC_DATA: u64 = 10;
const TAG_MC_BOOT: u64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Estimate,
    Simulate,
    Montecarlo,
}

/// A single frequency or an evenly spaced grid on `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    Single(f64),
    Points(usize),
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match *self {
            GridSpec::Single(l) => vec![l],
            GridSpec::Points(0) => {
                return Err(Error::Validation("grid needs at least one point".into()))
            }
            GridSpec::Points(n) => frequency_grid(n)?,
        };
        if let Some(l) = pts.iter().find(|l| !(0.0..=std::f64::consts::PI).contains(*l)) {
            return Err(Error::Validation(format!("frequency {l} outside [0, pi]")));
        }
        Ok(pts)
    }
}

/// A named data-generating process for simulation studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub model: ModelDescriptor,
}

impl Scenario {
    /// Built-in designs on the default causal SVAR(1) of dimension `d`:
    /// `gaussian` (all shocks Gaussian), `mixed` (first shock exponential),
    /// `mixed-mn1` (first shock from the skewed mixture), `full` (all
    /// exponential) and `noncausal` (the non-causal SVAR(1), first shock
    /// exponential).
    pub fn preset(name: &str, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Validation(format!("preset dimension must be at least 2, got {d}")));
        }
        let gauss = || vec![ShockDistribution::Gaussian; d];
        let with_first = |s: ShockDistribution| {
            let mut v = gauss();
            v[0] = s;
            v
        };
        let model = match name {
            "gaussian" => StructuralModel::causal_svar1(gauss())?,
            "mixed" => StructuralModel::causal_svar1(with_first(ShockDistribution::Exponential))?,
            "mixed-mn1" => StructuralModel::causal_svar1(with_first(ShockDistribution::mn1()))?,
            "full" => StructuralModel::causal_svar1(vec![ShockDistribution::Exponential; d])?,
            "noncausal" => {
                StructuralModel::noncausal_svar1(with_first(ShockDistribution::Exponential))?
            }
            other => {
                return Err(Error::Validation(format!(
                    "unknown scenario {other:?}; expected gaussian, mixed, mixed-mn1, full or noncausal"
                )))
            }
        };
        Ok(Self {
            name: name.to_string(),
            model: model.to_descriptor(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub order: TargetOrder,
    pub grid: GridSpec,
    /// Sample size for simulation and Monte Carlo.
    pub sample_size: usize,
    /// Monte Carlo replications (`m`).
    pub mc_reps: usize,
    pub scenarios: Vec<Scenario>,
    /// Projection modes compared in Monte Carlo runs; estimation uses the
    /// mode inside `bootstrap`.
    pub modes: Vec<ProjectionMode>,
    pub bootstrap: BootstrapConfig,
    /// Worker threads; `None` uses every logical core.
    pub workers: Option<usize>,
    #[serde(skip)]
    pub progress: bool,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            input: None,
            output: None,
            order: TargetOrder::Three,
            grid: GridSpec::Single(0.0),
            sample_size: 250,
            mc_reps: 100,
            scenarios: Vec::new(),
            modes: vec![ProjectionMode::Gaussian],
            bootstrap: BootstrapConfig {
                exhaustive: command == Command::Montecarlo,
                ..BootstrapConfig::default()
            },
            workers: None,
            progress: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.points()?;
        self.bootstrap.validate()?;
        if self.sample_size == 0 || self.mc_reps == 0 {
            return Err(Error::Validation(
                "sample size and Monte Carlo replications must be positive".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::Validation("worker count must be positive".into()));
        }
        match self.command {
            Command::Estimate if self.input.is_none() => {
                Err(Error::Validation("estimate needs an input CSV".into()))
            }
            Command::Simulate if self.scenarios.len() != 1 => Err(Error::Validation(
                "simulate needs exactly one model".into(),
            )),
            Command::Montecarlo if self.scenarios.is_empty() => {
                Err(Error::Validation("montecarlo needs at least one scenario".into()))
            }
            Command::Montecarlo if self.modes.is_empty() => {
                Err(Error::Validation("montecarlo needs at least one projection mode".into()))
            }
            _ => Ok(()),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Config(format!("worker pool: {e}")))
    }
}

/// Reads a header-first, comma-separated numeric CSV.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, TimeSeriesMatrix)> {
    let file = File::open(path).map_err(|e| Error::Ingestion {
        line: 0,
        reason: format!("{}: {e}", path.display()),
    })?;
    read_csv_from(file)
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<(Vec<String>, TimeSeriesMatrix)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let line_of = |e: &csv::Error| e.position().map_or(0, |p| p.line() as usize);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Ingestion {
            line: line_of(&e).max(1),
            reason: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Ingestion {
            line: 1,
            reason: "missing header row".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Ingestion {
            line: line_of(&e),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.trim().parse::<f64>().map_err(|_| Error::Ingestion {
                    line,
                    reason: format!("column {:?}: cannot parse {field:?} as a number", headers[j]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Ingestion {
                line,
                reason: format!("column {:?} is not finite", headers[j]),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Ingestion {
            line: 2,
            reason: "no data rows".into(),
        });
    }
    Ok((headers, TimeSeriesMatrix::from_rows(&rows)?))
}

pub fn write_csv<W: Write>(writer: W, headers: &[String], data: &TimeSeriesMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(headers).map_err(io)?;
    for t in 0..data.len() {
        w.write_record((0..data.dim()).map(|j| data.get(t, j).to_string()))
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// `dir/stem.<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub input: String,
    pub series: Vec<String>,
    pub config: BootstrapConfig,
    pub result: SequentialResult,
}

impl EstimateReport {
    pub fn to_text(&self) -> String {
        let r = &self.result;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "non-Gaussian dimension: {}   (order {}, T = {}, d = {}, VAR({}), B = {}, alpha = {})",
            r.estimated_rank, r.order, r.sample_size, r.dim, r.var_order, r.replications, r.alpha
        );
        let _ = writeln!(
            s,
            "{:>6} {:>14} {:>9} {:>9} {:>5} {:>9}",
            "H0: r", "KP", "p-value", "decision", "dof", "lambda"
        );
        for st in &r.steps {
            let _ = writeln!(
                s,
                "{:>6} {:>14.4} {:>9.4} {:>9} {:>5} {:>9.4}",
                st.null_rank,
                st.statistic,
                st.p_value,
                if st.rejected { "reject" } else { "accept" },
                st.dof,
                st.frequency
            );
        }
        s
    }
}

/// Loads the CSV, demeans it and runs the sequential test. Writes
/// `output` (JSON) and a text table next to it when an output path is set.
pub fn cmd_estimate(config: &RunConfig) -> Result<EstimateReport> {
    config.validate()?;
    let input = config.input.as_ref().expect("validated");
    let (series, data) = read_csv(input)?;
    let data = data.demeaned();
    let grid = config.grid.points()?;
    let result = config
        .pool()?
        .install(|| sequential_test(&data, config.order, &grid, &config.bootstrap))?;
    let report = EstimateReport {
        input: input.display().to_string(),
        series,
        config: config.bootstrap.clone(),
        result,
    };
    if let Some(out) = &config.output {
        write_json(out, &report)?;
        write_text(&sibling(out, "txt"), &report.to_text())?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub scenario: String,
    pub model: ModelDescriptor,
    pub seed: u64,
    pub sample_size: usize,
}

/// Simulates the single configured scenario. Writes the CSV to `output`
/// and the model plus seed to a sidecar JSON; nothing is written on error.
pub fn cmd_simulate(config: &RunConfig) -> Result<TimeSeriesMatrix> {
    config.validate()?;
    let sc = &config.scenarios[0];
    let model = StructuralModel::from_descriptor(&sc.model)?;
    let data = simulate_svarma(&model, config.sample_size, config.bootstrap.seed)?;
    if let Some(out) = &config.output {
        let headers: Vec<String> = (1..=data.dim()).map(|j| format!("y{j}")).collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &headers, &data)?;
        std::fs::write(out, buf)?;
        write_json(
            &sibling(out, "json"),
            &SimulationRecord {
                scenario: sc.name.clone(),
                model: sc.model.clone(),
                seed: config.bootstrap.seed,
                sample_size: config.sample_size,
            },
        )?;
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub mode: ProjectionMode,
    pub dim: usize,
    /// Rejection count of each null `r = 0..d-1`.
    pub rejections: Vec<usize>,
    /// `rejections / completed`.
    pub rejection_rates: Vec<f64>,
    /// Count of estimated ranks `0..=d`.
    pub rank_counts: Vec<usize>,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub sample_size: usize,
    pub mc_reps: usize,
    pub replications: usize,
    pub order: TargetOrder,
    pub grid: Vec<f64>,
    pub alpha: f64,
    pub seed: u64,
    pub block_prob: Option<f64>,
    pub exhaustive: bool,
    pub bootstrap: BootstrapConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloTable {
    pub rows: Vec<ScenarioRow>,
    pub metadata: TableMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub scenario: String,
    pub mode: ProjectionMode,
    pub replication: usize,
    pub error: String,
}

impl MonteCarloTable {
    pub fn row(&self, scenario: &str, mode: ProjectionMode) -> Option<&ScenarioRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.mode == mode)
    }

    fn max_dim(&self) -> usize {
        self.rows.iter().map(|r| r.dim).max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let d = self.max_dim();
        let mut s = String::from("scenario,mode,completed,failed");
        for r in 0..d {
            let _ = write!(s, ",reject_r{r}");
        }
        for r in 0..=d {
            let _ = write!(s, ",rank_{r}");
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{},{},{},{}", row.scenario, row.mode, row.completed, row.failed);
            for r in 0..d {
                match row.rejection_rates.get(r) {
                    Some(v) => {
                        let _ = write!(s, ",{v}");
                    }
                    None => s.push(','),
                }
            }
            for r in 0..=d {
                match row.rank_counts.get(r) {
                    Some(v) => {
                        let _ = write!(s, ",{v}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let m = &self.metadata;
        let d = self.max_dim();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "rejection rates: T = {}, m = {}, B = {}, order {}, alpha = {}, seed = {}",
            m.sample_size, m.mc_reps, m.replications, m.order, m.alpha, m.seed
        );
        let _ = write!(s, "{:<12} {:<9}", "scenario", "mode");
        for r in 0..d {
            let _ = write!(s, " {:>8}", format!("H0:r={r}"));
        }
        let _ = writeln!(s, " {:>6}", "failed");
        for row in &self.rows {
            let _ = write!(s, "{:<12} {:<9}", row.scenario, row.mode.to_string());
            for r in 0..d {
                match row.rejection_rates.get(r) {
                    Some(v) => {
                        let _ = write!(s, " {:>8.3}", v);
                    }
                    None => {
                        let _ = write!(s, " {:>8}", "");
                    }
                }
            }
            let _ = writeln!(s, " {:>6}", row.failed);
        }
        s
    }
}

/// Wall-clock record kept apart from the table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}

/// Runs `m` simulate-then-test replications for every scenario and mode.
/// Replication `i` uses the same data seed in every scenario and mode, so
/// rows are comparable at matched seeds. Writes the table as CSV to
/// `output` plus JSON, text and timing sidecars; failures are listed in a
/// manifest and turn the call into an error after the partial table is
/// written.
pub fn cmd_montecarlo(config: &RunConfig) -> Result<MonteCarloTable> {
    config.validate()?;
    let start = Instant::now();
    let grid = config.grid.points()?;
    let models = config
        .scenarios
        .iter()
        .map(|s| StructuralModel::from_descriptor(&s.model))
        .collect::<Result<Vec<_>>>()?;
    let total = config.scenarios.len() * config.modes.len() * config.mc_reps;
    let done = AtomicUsize::new(0);
    let pool = config.pool()?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (sc, model) in config.scenarios.iter().zip(&models) {
        let d = model.dim();
        for &mode in &config.modes {
            let outcomes: Vec<Result<SequentialResult>> = pool.install(|| {
                (0..config.mc_reps)
                    .into_par_iter()
                    .map(|i| {
                        let data_seed = rng::derive_seed(config.bootstrap.seed, &[TAG_MC_DATA, i as u64]);
                        let boot = BootstrapConfig {
                            mode,
                            seed: rng::derive_seed(config.bootstrap.seed, &[TAG_MC_BOOT, i as u64]),
                            ..config.bootstrap.clone()
                        };
                        let out = simulate_svarma(model, config.sample_size, data_seed)
                            .and_then(|y| sequential_test(&y, config.order, &grid, &boot));
                        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                        if config.progress {
                            eprintln!("[{n}/{total}] {} {mode} replication {i}", sc.name);
                        }
                        out
                    })
                    .collect()
            });
            let mut rejections = vec![0; d];
            let mut rank_counts = vec![0; d + 1];
            let mut completed = 0;
            let mut failed = 0;
            for (i, out) in outcomes.into_iter().enumerate() {
                match out {
                    Ok(res) => {
                        completed += 1;
                        rank_counts[res.estimated_rank.min(d)] += 1;
                        for st in &res.steps {
                            if st.rejected && st.null_rank < d {
                                rejections[st.null_rank] += 1;
                            }
                        }
                    }
                    Err(e) => {
                        failed += 1;
                        failures.push(ReplicationFailure {
                            scenario: sc.name.clone(),
                            mode,
                            replication: i,
                            error: e.to_string(),
                        });
                    }
                }
            }
            let rejection_rates = rejections
                .iter()
                .map(|&c| if completed == 0 { 0.0 } else { c as f64 / completed as f64 })
                .collect();
            rows.push(ScenarioRow {
                scenario: sc.name.clone(),
                mode,
                dim: d,
                rejections,
                rejection_rates,
                rank_counts,
                completed,
                failed,
            });
        }
    }
    let table = MonteCarloTable {
        rows,
        metadata: TableMetadata {
            sample_size: config.sample_size,
            mc_reps: config.mc_reps,
            replications: config.bootstrap.replications,
            order: config.order,
            grid,
            alpha: config.bootstrap.alpha,
            seed: config.bootstrap.seed,
            block_prob: config.bootstrap.block_prob,
            exhaustive: config.bootstrap.exhaustive,
            bootstrap: config.bootstrap.clone(),
        },
    };
    if let Some(out) = &config.output {
        write_text(out, &table.to_csv())?;
        write_json(&sibling(out, "json"), &table)?;
        write_text(&sibling(out, "txt"), &table.to_text())?;
        write_json(
            &sibling(out, "timing.json"),
            &Timing {
                elapsed_seconds: start.elapsed().as_secs_f64(),
            },
        )?;
        if !failures.is_empty() {
            write_json(&sibling(out, "failures.json"), &failures)?;
        }
    }
    if let Some(f) = failures.first() {
        return Err(Error::ReplicateFailure {
            attempts: failures.len(),
            reason: format!(
                "{} replications failed; first: {} {} #{}: {}",
                failures.len(),
                f.scenario,
                f.mode,
                f.replication,
                f.error
            ),
        });
    }
    Ok(table)
}
