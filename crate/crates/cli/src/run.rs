//! Dispatch of one configured experiment to the estimators, and emission of
//! its CSV, summary and manifest files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use percolab_core::estimators::{
    derive_seed, estimate_lambda_c, estimate_theta, fkg_sanity, giant_statistics, mecke_check_ns,
    mecke_check_second, CovarianceReport, GraphEvent, LambdaCBracket, MeckeReport, SecondMeckeReport,
};
use percolab_core::events::{
    block_field_sample, dependence_check, estimate_event_f, estimate_event_u, site_homogeneity, BlockParams,
    DependenceReport, EventSpecF, EventSpecU, GridExtent, HomogeneityReport,
};
use percolab_core::graph::build_edges;
use percolab_core::growth::{grow_origin_in_plane, GrowthOptions, StoppingRule};
use percolab_core::model::{sample_points, BoxSpec};
use percolab_core::rng::{hash_words, StreamKey};
use percolab_core::stats::EstimateWithCI;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Command, ExperimentConfig};
use crate::error::{config_error, CliError};
use crate::manifest::RunManifest;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const WORKERS_ENV: &str = "PERCOLAB_WORKERS";

/// One replicate in the shared CSV schema. Columns a command does not
/// produce are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub replicate: u64,
    pub lambda: f64,
    pub s: Option<f64>,
    #[serde(rename = "L1_frac")]
    pub l1_frac: Option<f64>,
    #[serde(rename = "L2_frac")]
    pub l2_frac: Option<f64>,
    pub status: Option<String>,
    pub cluster_size: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub command: Command,
    pub cells: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleCell {
    pub lambda: f64,
    pub s: f64,
    pub seed: u64,
    pub expected_count: f64,
    pub count: Option<EstimateWithCI>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GiantCell {
    pub lambda: f64,
    pub s: f64,
    pub seed: u64,
    pub replicates: usize,
    pub l1_mean: f64,
    pub l2_mean: f64,
    /// Absent with fewer than two replicates.
    pub l1: Option<EstimateWithCI>,
    pub l2: Option<EstimateWithCI>,
    pub median_l1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaCell {
    pub lambda: f64,
    pub seed: u64,
    pub rule: StoppingRule,
    pub theta_hat: EstimateWithCI,
    pub escaped_frequency: f64,
    pub capped_frequency: f64,
    /// Frequency of exhausted clusters of each order up to `PI_REPORT`.
    pub pi_hat: BTreeMap<usize, f64>,
}

pub const PI_REPORT: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaCCell {
    pub seed: u64,
    pub bracket: LambdaCBracket,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventsCell {
    pub lambda: f64,
    pub seed: u64,
    pub u: Vec<(EventSpecU, EstimateWithCI)>,
    pub f: Vec<(EventSpecF, EstimateWithCI)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockFieldCell {
    pub lambda: f64,
    pub seed: u64,
    pub params: BlockParams,
    pub densities: Vec<f64>,
    pub dependence: DependenceReport,
    pub adjacent: Option<DependenceReport>,
    pub homogeneity: Option<HomogeneityReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeckeCell {
    pub lambda: f64,
    pub s: f64,
    pub seed: u64,
    pub first: MeckeReport,
    pub second: Option<SecondMeckeReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkgCell {
    pub lambda: f64,
    pub s: f64,
    pub seed: u64,
    pub theta_hat: f64,
    pub largest_threshold: usize,
    pub reports: Vec<CovarianceReport>,
}

/// Files produced by a finished run, relative to its output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub files: Vec<String>,
    pub manifest: RunManifest,
}

/// Worker count: the environment variable overrides the flag, which
/// overrides available parallelism.
pub fn resolve_workers(flag: Option<usize>) -> Result<usize, CliError> {
    if let Ok(text) = std::env::var(WORKERS_ENV) {
        return match text.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(config_error(WORKERS_ENV, format!("expected a positive integer, got {text:?}"))),
        };
    }
    Ok(flag.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)))
}

/// Seed of one grid cell of a command.
pub fn cell_seed(task_seed: u64, lambda: Option<f64>, s: Option<f64>) -> u64 {
    let bits = |v: Option<f64>| v.map_or(u64::MAX, f64::to_bits);
    hash_words(&[task_seed, bits(lambda), bits(s)])
}

fn cell_label(lambda: Option<f64>, s: Option<f64>) -> String {
    match (lambda, s) {
        (Some(l), Some(s)) => format!("lambda={l},s={s}"),
        (Some(l), None) => format!("lambda={l}"),
        (None, Some(s)) => format!("s={s}"),
        (None, None) => "all".into(),
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, data).map_err(CliError::io(&path))?;
        self.files.push(name.to_owned());
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, header: &[&str], rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(header).map_err(runtime)?;
        for row in rows {
            w.serialize(row).map_err(runtime)?;
        }
        let data = w.into_inner().map_err(runtime)?;
        self.bytes(name, &data)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    fn summary<T: Serialize>(&mut self, command: Command, cells: Vec<T>) -> Result<(), CliError> {
        self.json(SUMMARY_FILE, &Summary { command, cells })
    }
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub const RESULT_HEADER: [&str; 8] = ["replicate", "lambda", "s", "L1_frac", "L2_frac", "status", "cluster_size", "seed"];

/// Runs `config` and writes its outputs; the manifest is written first and
/// sealed with checksums at the end.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let workers = resolve_workers(config.workers)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(runtime)?;
    fs::create_dir_all(&config.out).map_err(CliError::io(&config.out))?;

    let task_seed = derive_seed(config.seed, config.command.name());
    let mut manifest = RunManifest::new(config, workers, task_seed);
    manifest.cell_seeds = cell_seeds(config, task_seed);
    manifest.write(&config.out)?;

    let started = Instant::now();
    let mut out = Outputs {
        dir: config.out.clone(),
        files: Vec::new(),
    };
    pool.install(|| dispatch(config, task_seed, &mut out))?;
    manifest.seal(&config.out, &out.files, started.elapsed().as_secs_f64())?;
    manifest.write(&config.out)?;
    Ok(RunOutcome {
        out: config.out.clone(),
        files: out.files,
        manifest,
    })
}

fn cells(config: &ExperimentConfig) -> Vec<(Option<f64>, Option<f64>)> {
    let lambdas: Vec<Option<f64>> = match config.command {
        Command::LambdaC => vec![None],
        _ => config.lambda.iter().copied().map(Some).collect(),
    };
    let sides: Vec<Option<f64>> = match config.command {
        Command::Theta | Command::Events | Command::BlockField | Command::LambdaC => vec![None],
        _ => config.s.iter().copied().map(Some).collect(),
    };
    lambdas
        .iter()
        .flat_map(|&l| sides.iter().map(move |&s| (l, s)))
        .collect()
}

fn cell_seeds(config: &ExperimentConfig, task_seed: u64) -> BTreeMap<String, u64> {
    cells(config)
        .into_iter()
        .map(|(l, s)| (cell_label(l, s), cell_seed(task_seed, l, s)))
        .collect()
}

fn dispatch(config: &ExperimentConfig, task_seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    match config.command {
        Command::Sample => run_sample(config, task_seed, out),
        Command::Giant => run_giant(config, task_seed, out),
        Command::Theta => run_theta(config, task_seed, out),
        Command::LambdaC => run_lambda_c(config, task_seed, out),
        Command::Events => run_events(config, task_seed, out),
        Command::BlockField => run_block_field(config, task_seed, out),
        Command::Mecke => run_mecke(config, task_seed, out),
        Command::Fkg => run_fkg(config, task_seed, out),
    }
}

#[derive(Serialize)]
struct PointRow {
    replicate: u64,
    lambda: f64,
    s: f64,
    x: f64,
    y: f64,
}

fn edge_dump_name(lambda: f64, s: f64) -> String {
    format!("edges_lambda{lambda}_s{s}.txt")
}

fn dump_edges(config: &ExperimentConfig, lambda: f64, s: f64, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let pts = sample_points(lambda, BoxSpec::new(s)?, seed, 0)?;
    let mut buf = Vec::new();
    build_edges(&pts, &config.phi).write_edge_list(&mut buf).map_err(runtime)?;
    out.bytes(&edge_dump_name(lambda, s), &buf)
}

fn run_sample(config: &ExperimentConfig, task_seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (l, s) in cells(config) {
        let (lambda, side) = (l.unwrap_or(0.0), s.unwrap_or(0.0));
        let seed = cell_seed(task_seed, l, s);
        let bounds = BoxSpec::new(side)?;
        let sets = (0..config.replicates as u64)
            .into_par_iter()
            .map(|r| sample_points(lambda, bounds, seed, r))
            .collect::<Result<Vec<_>, _>>()?;
        let counts: Vec<f64> = sets.iter().map(|p| p.len() as f64).collect();
        for pts in &sets {
            rows.extend(pts.points.iter().map(|p| PointRow {
                replicate: pts.replicate,
                lambda,
                s: side,
                x: p[0],
                y: p[1],
            }));
        }
        summary.push(SampleCell {
            lambda,
            s: side,
            seed,
            expected_count: lambda * bounds.area(),
            count: EstimateWithCI::from_samples(&counts, seed).ok(),
        });
        if config.debug.dump_edges {
            dump_edges(config, lambda, side, seed, out)?;
        }
    }
    out.csv("points.csv", &["replicate", "lambda", "s", "x", "y"], &rows)?;
    out.summary(Command::Sample, summary)
}

fn run_giant(config: &ExperimentConfig, task_seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (l, s) in cells(config) {
        let (lambda, side) = (l.unwrap_or(0.0), s.unwrap_or(0.0));
        let seed = cell_seed(task_seed, l, s);
        let stats = giant_statistics(&config.phi, lambda, side, config.replicates, seed)?;
        rows.extend(stats.rows.iter().map(|r| ResultRow {
            replicate: r.replicate,
            lambda,
            s: Some(side),
            l1_frac: Some(r.l1_frac),
            l2_frac: Some(r.l2_frac),
            status: None,
            cluster_size: None,
            seed,
        }));
        summary.push(GiantCell {
            lambda,
            s: side,
            seed,
            replicates: stats.rows.len(),
            l1_mean: mean(stats.rows.iter().map(|r| r.l1_frac)),
            l2_mean: mean(stats.rows.iter().map(|r| r.l2_frac)),
            l1: stats.l1,
            l2: stats.l2,
            median_l1: stats.median_l1,
        });
        if config.debug.dump_edges {
            dump_edges(config, lambda, side, seed, out)?;
        }
    }
    out.csv(RESULTS_FILE, &RESULT_HEADER, &rows)?;
    out.summary(Command::Giant, summary)
}

fn run_theta(config: &ExperimentConfig, task_seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (l, _) in cells(config) {
        let lambda = l.unwrap_or(0.0);
        let seed = cell_seed(task_seed, l, None);
        let th = estimate_theta(&config.phi, lambda, &config.rule, config.replicates, seed)?;
        rows.extend(th.outcomes.iter().map(|o| ResultRow {
            replicate: o.replicate,
            lambda,
            s: None,
            l1_frac: None,
            l2_frac: None,
            status: Some(o.status.as_str().to_owned()),
            cluster_size: Some(o.cluster_size),
            seed,
        }));
        summary.push(ThetaCell {
            lambda,
            seed,
            rule: config.rule,
            theta_hat: th.theta_hat,
            escaped_frequency: th.escaped_frequency,
            capped_frequency: th.capped_frequency,
            pi_hat: th.pi_up_to(PI_REPORT),
        });
        if config.debug.trace {
            let options = GrowthOptions {
                trace: true,
                ..GrowthOptions::default()
            };
            let res = grow_origin_in_plane(lambda, &config.phi, &config.rule, StreamKey::new(seed, 0), &options)?;
            let mut buf = Vec::new();
            res.write_trace(&mut buf).map_err(runtime)?;
            out.bytes(&format!("trace_lambda{lambda}.txt"), &buf)?;
        }
    }
    out.csv(RESULTS_FILE, &RESULT_HEADER, &rows)?;
    out.summary(Command::Theta, summary)
}

#[derive(Serialize)]
struct CrossingRow {
    s: f64,
    lambda: f64,
    value: f64,
    std_error: f64,
}

fn run_lambda_c(config: &ExperimentConfig, task_seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let seed = cell_seed(task_seed, None, None);
    let bracket = estimate_lambda_c(&config.phi, &config.s, &config.lambda_c.criterion, seed, &config.bisection())?;
    let rows: Vec<CrossingRow> = bracket
        .per_size
        .iter()
        .flat_map(|c| {
            c.evaluations.iter().map(move |p| CrossingRow {
                s: c.side,
                lambda: p.intensity,
                value: p.value,
                std_error: p.std_error,
            })
        })
        .collect();
    out.csv("crossings.csv", &["s", "lambda", "value", "std_error"], &rows)?;
    out.summary(Command::LambdaC, vec![LambdaCCell { seed, bracket }])
}

#[derive(Serialize)]
struct EventRow {
    event: &'static str,
    k: f64,
    radius: f64,
    lambda: f64,
    value: f64,
    half_width: f64,
    replicates: usize,
    seed: u64,
}

fn run_events(config: &ExperimentConfig, task_seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let ev = &config.events;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (l, _) in cells(config) {
        let lambda = l.unwrap_or(0.0);
        let seed = cell_seed(task_seed, l, None);
        let mut cell = EventsCell {
            lambda,
            seed,
            u: Vec::new(),
            f: Vec::new(),
        };
        for &radius in &ev.l {
            let spec = EventSpecU::new(ev.k, radius, lambda)?;
            let est = estimate_event_u(&spec, &config.phi, config.replicates, seed)?;
            rows.push(EventRow {
                event: "U",
                k: ev.k,
                radius,
                lambda,
                value: est.value,
                half_width: est.half_width,
                replicates: est.replicates,
                seed,
            });
            cell.u.push((spec, est));
        }
        for &m in &ev.m {
            let spec = EventSpecF::new(ev.k, m, lambda)?;
            let est = estimate_event_f(&spec, &config.phi, config.replicates, seed)?;
            rows.push(EventRow {
                event: "F",
                k: ev.k,
                radius: m,
                lambda,
                value: est.value,
                half_width: est.half_width,
                replicates: est.replicates,
                seed,
            });
            cell.f.push((spec, est));
        }
        summary.push(cell);
    }
    out.csv(
        "events.csv",
        &["event", "k", "radius", "lambda", "value", "half_width", "replicates", "seed"],
        &rows,
    )?;
    out.summary(Command::Events, summary)
}

fn run_block_field(config: &ExperimentConfig, task_seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let ev = &config.events;
    let grid = GridExtent::square(ev.grid);
    let mut summary = Vec::new();
    for (l, _) in cells(config) {
        let lambda = l.unwrap_or(0.0);
        let seed = cell_seed(task_seed, l, None);
        let params = BlockParams::new(ev.k, ev.m[0], lambda)?;
        let mut samples = Vec::with_capacity(config.replicates);
        for i in 0..config.replicates as u64 {
            let sample = block_field_sample(&params, &config.phi, &grid, hash_words(&[seed, i]))?;
            let mut buf = Vec::new();
            sample.write_grid(&mut buf).map_err(runtime)?;
            out.bytes(&format!("block_field_lambda{lambda}_{i}.txt"), &buf)?;
            samples.push(sample);
        }
        summary.push(BlockFieldCell {
            lambda,
            seed,
            params,
            densities: samples.iter().map(|s| s.density()).collect(),
            dependence: dependence_check(&samples, ev.distance)?,
            adjacent: dependence_check(&samples, 1).ok(),
            homogeneity: site_homogeneity(&samples).ok(),
        });
    }
    out.summary(Command::BlockField, summary)
}

#[derive(Serialize)]
struct MeckeRow {
    check: &'static str,
    lambda: f64,
    s: f64,
    lhs: f64,
    lhs_half_width: f64,
    rhs: f64,
    rhs_half_width: f64,
    sigma: f64,
    compatible: bool,
}

impl MeckeRow {
    fn new(check: &'static str, lambda: f64, s: f64, r: &MeckeReport) -> Self {
        Self {
            check,
            lambda,
            s,
            lhs: r.lhs.value,
            lhs_half_width: r.lhs.half_width,
            rhs: r.rhs.value,
            rhs_half_width: r.rhs.half_width,
            sigma: r.sigma,
            compatible: r.compatible,
        }
    }
}

fn run_mecke(config: &ExperimentConfig, task_seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (l, s) in cells(config) {
        let (lambda, side) = (l.unwrap_or(0.0), s.unwrap_or(0.0));
        let seed = cell_seed(task_seed, l, s);
        let first = mecke_check_ns(&config.phi, lambda, config.mecke.k, side, config.replicates, seed)?;
        rows.push(MeckeRow::new("first-order", lambda, side, &first));
        let second = if config.mecke.second_order {
            let r = mecke_check_second(&config.phi, lambda, side, config.replicates, seed)?;
            rows.push(MeckeRow::new("second-order", lambda, side, &r.identity));
            Some(r)
        } else {
            None
        };
        summary.push(MeckeCell {
            lambda,
            s: side,
            seed,
            first,
            second,
        });
    }
    out.csv(
        "mecke.csv",
        &["check", "lambda", "s", "lhs", "lhs_half_width", "rhs", "rhs_half_width", "sigma", "compatible"],
        &rows,
    )?;
    out.summary(Command::Mecke, summary)
}

#[derive(Serialize)]
struct FkgRow {
    lambda: f64,
    s: f64,
    first: String,
    second: String,
    p_first: f64,
    p_second: f64,
    covariance: f64,
    std_error: f64,
    nonnegative: bool,
}

fn describe_event(e: &GraphEvent) -> String {
    match *e {
        GraphEvent::LargestAtLeast { min_order } => format!("L1>={min_order}"),
        GraphEvent::DiskToBoundary { radius } => format!("D{radius}<->boundary"),
    }
}

fn run_fkg(config: &ExperimentConfig, task_seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (l, s) in cells(config) {
        let (lambda, side) = (l.unwrap_or(0.0), s.unwrap_or(0.0));
        let seed = cell_seed(task_seed, l, s);
        let theta = estimate_theta(
            &config.phi,
            lambda,
            &config.rule,
            config.fkg.theta_replicates,
            derive_seed(seed, "theta-reference"),
        )?
        .theta_hat
        .value;
        let threshold = ((config.fkg.largest_fraction * lambda * theta * side * side).ceil() as usize).max(1);
        let pairs = [
            (
                GraphEvent::LargestAtLeast { min_order: 1 },
                GraphEvent::LargestAtLeast { min_order: 1 },
            ),
            (
                GraphEvent::LargestAtLeast { min_order: threshold },
                GraphEvent::DiskToBoundary {
                    radius: config.fkg.disk_radius,
                },
            ),
        ];
        let reports = fkg_sanity(&config.phi, lambda, side, &pairs, config.replicates, seed)?;
        rows.extend(reports.iter().map(|r| FkgRow {
            lambda,
            s: side,
            first: describe_event(&r.first),
            second: describe_event(&r.second),
            p_first: r.p_first,
            p_second: r.p_second,
            covariance: r.covariance,
            std_error: r.std_error,
            nonnegative: r.nonnegative,
        }));
        summary.push(FkgCell {
            lambda,
            s: side,
            seed,
            theta_hat: theta,
            largest_threshold: threshold,
            reports,
        });
    }
    out.csv(
        "fkg.csv",
        &["lambda", "s", "first", "second", "p_first", "p_second", "covariance", "std_error", "nonnegative"],
        &rows,
    )?;
    out.summary(Command::Fkg, summary)
}

/// Reads a summary file written by a run.
pub fn read_summary<T: for<'de> Deserialize<'de>>(dir: &Path) -> Result<Summary<T>, CliError> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Corrupt {
        path,
        reason: e.to_string(),
    })
}

/// Writes `text` to stdout, ignoring a closed pipe.
pub fn print(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}
