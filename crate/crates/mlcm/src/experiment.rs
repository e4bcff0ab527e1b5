//! Replication engine: sample, fit every configured method, score, and emit
//! one record per (parameter value, replication, method).
//!
//! Each replication owns a seed derived from the master seed, and every
//! random stream inside it (partition, item parameters, responses, and one
//! k-means stream per method) is derived from that seed. Records are sorted
//! before they are returned, so the output does not depend on how many
//! workers ran or in which order they finished.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use log::{info, warn};
use mlcm_core::aggregate::{build_aggregates, AggregationBundle};
use mlcm_core::metrics::score;
use mlcm_core::model::{simulate, SyntheticDataset};
use mlcm_core::modularity::select_k_with;
use mlcm_core::{FitResult, Fitter, KMeansConfig, Method, MetricReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, KRange, Point};
use crate::seeds::{child_seed, stream};

pub const RESULTS_HEADER: [&str; 15] = [
    "experiment",
    "param_name",
    "param_value",
    "replication",
    "seed",
    "method",
    "clustering_error",
    "hamming_error",
    "nmi",
    "ari",
    "rel_l2_error",
    "k_selected",
    "k_correct",
    "status",
    "wall_ms",
];

pub const STATUS_OK: &str = "ok";

/// One row of the results CSV. Metric fields are empty on failed rows;
/// `k_selected` and `k_correct` are empty when K selection is off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub experiment: String,
    pub param_name: String,
    pub param_value: f64,
    pub replication: u32,
    pub seed: u64,
    pub method: String,
    pub clustering_error: Option<f64>,
    pub hamming_error: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub rel_l2_error: Option<f64>,
    pub k_selected: Option<usize>,
    pub k_correct: Option<bool>,
    pub status: String,
    pub wall_ms: Option<u64>,
}

impl Record {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub workers: usize,
    /// Fill `wall_ms`. Off by default so that reruns are byte-identical.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1, timing: false }
    }
}

/// Seed of one replication; all of its streams derive from it.
pub fn replication_seed(cfg: &ExperimentConfig, value: f64, replication: u32) -> u64 {
    child_seed(cfg.master_seed, &cfg.id, value, replication, "replication")
}

fn sub_seed(cfg: &ExperimentConfig, seed: u64, value: f64, replication: u32, purpose: &str) -> u64 {
    child_seed(seed, &cfg.id, value, replication, purpose)
}

/// The dataset of one replication, reproducible from the config alone.
pub fn replication_data(cfg: &ExperimentConfig, point: &Point, replication: u32) -> mlcm_core::Result<SyntheticDataset> {
    let seed = replication_seed(cfg, point.value, replication);
    let mut part = stream(sub_seed(cfg, seed, point.value, replication, "partition"));
    let mut items = stream(sub_seed(cfg, seed, point.value, replication, "items"));
    let mut resp = stream(sub_seed(cfg, seed, point.value, replication, "responses"));
    simulate(&point.params, &mut part, &mut items, &mut resp)
}

struct Job<'a> {
    cfg: &'a ExperimentConfig,
    point: Point,
    replication: u32,
    methods: &'a [Method],
    kmeans: KMeansConfig,
    timing: bool,
}

struct Outcome {
    report: MetricReport,
    k_selected: Option<usize>,
    select_error: Option<String>,
}

impl Job<'_> {
    fn fit_and_score(
        &self,
        data: &SyntheticDataset,
        agg: &AggregationBundle,
        method: Method,
        seed: u64,
    ) -> mlcm_core::Result<Outcome> {
        let (cfg, value, rep) = (self.cfg, self.point.value, self.replication);
        let fitter = Fitter::with_aggregates(&data.responses, method, agg)?;
        let mut rng = stream(sub_seed(cfg, seed, value, rep, &format!("fit/{}", method.name())));
        let fit: FitResult = fitter.fit(cfg.k, &self.kmeans, &mut rng)?;
        let report = score(&data.partition, &fit.z_hat, Some((data.thetas.layers(), &fit.theta_hats)))?;
        let (mut k_selected, mut select_error) = (None, None);
        if let Some(KRange { min, max }) = cfg.select_k {
            let mut rng = stream(sub_seed(cfg, seed, value, rep, &format!("select-k/{}", method.name())));
            match select_k_with(&fitter, &data.responses, min, max, &self.kmeans, &mut rng) {
                Ok(curve) => k_selected = Some(curve.k_star),
                Err(e) => select_error = Some(e.to_string()),
            }
        }
        Ok(Outcome { report, k_selected, select_error })
    }

    fn run(&self) -> Vec<Record> {
        let (cfg, value, rep) = (self.cfg, self.point.value, self.replication);
        let seed = replication_seed(cfg, value, rep);
        let blank = |method: Method, status: String| Record {
            experiment: cfg.id.clone(),
            param_name: cfg.sweep.param.name().into(),
            param_value: value,
            replication: rep,
            seed,
            method: method.name().into(),
            clustering_error: None,
            hamming_error: None,
            nmi: None,
            ari: None,
            rel_l2_error: None,
            k_selected: None,
            k_correct: None,
            status,
            wall_ms: None,
        };
        let data = match replication_data(cfg, &self.point, rep) {
            Ok(d) => d,
            Err(e) => {
                warn!("{} = {value}, replication {rep}: sampling failed: {e}", cfg.sweep.param.name());
                return self.methods.iter().map(|&m| blank(m, format!("error: {e}"))).collect();
            }
        };
        // shared by every method; its cost is not part of any row's wall time
        let agg = build_aggregates(&data.responses);
        self.methods
            .iter()
            .map(|&method| {
                let start = Instant::now();
                let outcome = self.fit_and_score(&data, &agg, method, seed);
                let mut rec = blank(method, STATUS_OK.into());
                match outcome {
                    Ok(o) => {
                        rec.clustering_error = Some(o.report.clustering_error);
                        rec.hamming_error = Some(o.report.hamming_error);
                        rec.nmi = Some(o.report.nmi);
                        rec.ari = Some(o.report.ari);
                        rec.rel_l2_error = o.report.relative_l2_error;
                        rec.k_selected = o.k_selected;
                        rec.k_correct = o.k_selected.map(|k| k == cfg.k);
                        if let Some(e) = o.select_error {
                            rec.status = format!("error: select-k: {e}");
                        }
                    }
                    Err(e) => rec.status = format!("error: {e}"),
                }
                if !rec.is_ok() {
                    warn!("{method}, {} = {value}, replication {rep}: {}", cfg.sweep.param.name(), rec.status);
                }
                if self.timing {
                    rec.wall_ms = Some(start.elapsed().as_millis() as u64);
                }
                rec
            })
            .collect()
    }
}

/// Runs every (point, replication) and returns the sorted records.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<Record>> {
    cfg.validate()?;
    let points = cfg.points()?;
    let methods = cfg.methods()?;
    let kmeans = cfg.kmeans_config();
    let jobs: Vec<Job<'_>> = points
        .iter()
        .flat_map(|&point| (0..cfg.replications).map(move |replication| (point, replication)))
        .map(|(point, replication)| Job { cfg, point, replication, methods: &methods, kmeans, timing: opts.timing })
        .collect();
    info!("{}: {} points x {} replications x {} methods", cfg.id, points.len(), cfg.replications, methods.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .context("starting worker pool")?;
    let mut records: Vec<Record> = pool.install(|| jobs.par_iter().flat_map_iter(Job::run).collect());
    let method_rank = |name: &str| methods.iter().position(|m| m.name() == name);
    records.sort_by(|a, b| {
        a.param_value
            .total_cmp(&b.param_value)
            .then(a.replication.cmp(&b.replication))
            .then(method_rank(&a.method).cmp(&method_rank(&b.method)))
    });
    let expected = points.len() * cfg.replications as usize * methods.len();
    ensure!(records.len() == expected, "emitted {} records, expected {expected}", records.len());
    Ok(records)
}

pub fn write_results<W: Write>(out: W, records: &[Record]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_file(path: &Path, records: &[Record]) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_results(std::io::BufWriter::new(file), records)
}

/// Reads a results CSV, checking the header against the fixed schema.
pub fn read_results(path: &Path) -> Result<Vec<Record>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    ensure!(header == RESULTS_HEADER, "{}: unexpected header {header:?}", path.display());
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("{}: record {}", path.display(), i + 1)))
        .collect()
}
