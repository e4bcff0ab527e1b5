use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use mlcm_core::aggregate::build_aggregates;
use mlcm_core::estimators::check_sparsity_regime;
use mlcm_core::metrics::score;
use mlcm_core::model::simulate;
use mlcm_core::modularity::select_k_with;
use mlcm_core::{Fitter, KMeansConfig, Method, ModelParams};

use crate::config::{preset, ExperimentConfig, PRESETS};
use crate::experiment::{run_experiment, write_results_file, RunOptions};
use crate::io::{self, DatasetMeta};
use crate::seeds::{child_seed, stream};
use crate::summary::{summarize, write_summary_file};

#[derive(Debug, Parser)]
#[command(name = "mlcm", version, about = "Multi-layer latent class model: simulate, fit, score and run experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a dataset directory with its true labels and item parameters.
    Simulate(SimulateArgs),
    /// Estimate classes and item parameters of a dataset.
    Fit(FitArgs),
    /// Compare estimated labels (and optionally item parameters) with the truth.
    Score(ScoreArgs),
    /// Pick the class count by maximizing averaged modularity.
    SelectK(SelectKArgs),
    /// Run a replication sweep and write one row per replication and method.
    Experiment(ExperimentArgs),
    /// Reduce a results CSV to per-point means and standard deviations.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    /// Items; defaults to N/5.
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub l: usize,
    #[arg(long, default_value_t = 5)]
    pub m: u32,
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub method: Method,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write r_sum.csv, s_sum.csv and s_sum_debiased.csv.
    #[arg(long)]
    pub dump_aggregates: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// True labels, one 1-based class per line.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub est: PathBuf,
    /// Directory with the true theta_NNN.csv files.
    #[arg(long, requires = "theta_est")]
    pub theta_truth: Option<PathBuf>,
    #[arg(long, requires = "theta_truth")]
    pub theta_est: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectKArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub method: Method,
    #[arg(long, default_value_t = 1)]
    pub k_min: usize,
    #[arg(long)]
    pub k_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// One of exp1-desk, exp2-desk, exp3-desk, ksel-desk, exp1-full, exp2-full, exp3-full.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the per-point summary here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub replications: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record per-row wall time (makes the output nondeterministic).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Score(a) => score_cmd(a, &mut std::io::stdout().lock()),
        Command::SelectK(a) => select_k_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
        Command::Summarize(a) => {
            let rows = summarize(&crate::experiment::read_results(&a.input)?)?;
            write_summary_file(&a.out, &rows)
        }
    }
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let j = match a.j {
        Some(j) => j,
        None if a.n % 5 == 0 => a.n / 5,
        None => bail!("N = {} is not divisible by 5; pass --j", a.n),
    };
    let params = ModelParams::new(a.n, j, a.k, a.l, a.m, a.rho)?;
    let report = check_sparsity_regime(&params);
    if report.response_below || report.gram_below {
        log::warn!("parameters fall outside the sparsity regime where recovery is expected: {report:?}");
    }
    let seed_for = |purpose| stream(child_seed(a.seed, "simulate", 0.0, 0, purpose));
    let data = simulate(&params, &mut seed_for("partition"), &mut seed_for("items"), &mut seed_for("responses"))?;
    let meta = DatasetMeta { n: a.n, j, l: a.l, m: a.m, k: Some(a.k), seed: Some(a.seed) };
    io::write_dataset(&a.out, &meta, &data.responses)?;
    io::write_labels(&a.out.join(io::LABELS_FILE), &data.partition)?;
    io::write_thetas(&a.out, data.thetas.layers())
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let (_, r) = io::read_dataset(&a.input)?;
    let fitter = Fitter::new(&r, a.method)?;
    let fit = fitter.fit(a.k, &KMeansConfig::default(), &mut stream(a.seed))?;
    log::info!("{}: {:?}", a.method, fit.diagnostics);
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    io::write_labels(&a.out.join(io::LABELS_FILE), &fit.z_hat)?;
    io::write_thetas(&a.out, &fit.theta_hats)?;
    if a.dump_aggregates {
        io::write_aggregates(&a.out, &build_aggregates(&r))?;
    }
    Ok(())
}

pub fn score_cmd(a: ScoreArgs, out: &mut dyn Write) -> Result<()> {
    let truth = io::read_labels(&a.truth)?;
    let est = io::read_labels(&a.est)?;
    ensure!(truth.len() == est.len(), "{} true labels against {} estimated", truth.len(), est.len());
    let k = truth.iter().chain(&est).copied().max().unwrap_or(1);
    let truth = io::labels_to_partition(&truth, k)?;
    let est = io::labels_to_partition(&est, k)?;
    let thetas = match (&a.theta_truth, &a.theta_est) {
        (Some(t), Some(h)) => Some((io::read_thetas(t)?, io::read_thetas(h)?)),
        _ => None,
    };
    let report = score(&truth, &est, thetas.as_ref().map(|(t, h)| (t.as_slice(), h.as_slice())))?;
    let l2 = report.relative_l2_error.map(|x| x.to_string()).unwrap_or_default();
    writeln!(out, "clustering_error,hamming_error,nmi,ari,rel_l2_error")?;
    writeln!(out, "{},{},{},{},{l2}", report.clustering_error, report.hamming_error, report.nmi, report.ari)?;
    Ok(())
}

fn select_k_cmd(a: SelectKArgs) -> Result<()> {
    let (_, r) = io::read_dataset(&a.input)?;
    let fitter = Fitter::new(&r, a.method)?;
    let curve = select_k_with(&fitter, &r, a.k_min, a.k_max, &KMeansConfig::default(), &mut stream(a.seed))?;
    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    w.write_record(["k", "Q", "selected"])?;
    for (&k, q) in curve.k_values.iter().zip(&curve.q_values) {
        let q = q.map(|q| q.to_string()).unwrap_or_default();
        w.write_record([k.to_string(), q, u8::from(k == curve.k_star).to_string()])?;
    }
    w.flush()?;
    println!("{}", curve.k_star);
    Ok(())
}

fn experiment_cmd(a: ExperimentArgs) -> Result<()> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => {
            preset(name).with_context(|| format!("unknown preset {name:?}; known: {}", PRESETS.join(", ")))?
        }
        (None, None) => bail!("pass --config or --preset"),
    };
    if let Some(n) = a.replications {
        cfg.replications = n;
    }
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    let workers = a.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let records = run_experiment(&cfg, &RunOptions { workers, timing: a.timing })?;
    write_results_file(&a.out, &records)?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        log::warn!("{failed} of {} rows failed", records.len());
    }
    if let Some(path) = &a.summary {
        write_summary_file(path, &summarize(&records)?)?;
    }
    Ok(())
}
