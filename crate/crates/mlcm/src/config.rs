//! Experiment configuration (JSON) and the shipped presets.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use mlcm_core::{KMeansConfig, Method, ModelParams};
use serde::{Deserialize, Serialize};

/// The model parameter an experiment varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    N,
    L,
    #[serde(rename = "rho")]
    Rho,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::N => "N",
            SweepParam::L => "L",
            SweepParam::Rho => "rho",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansSettings {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for KMeansSettings {
    fn default() -> Self {
        let d = KMeansConfig::default();
        Self { restarts: d.restarts, max_iters: d.max_iters, tol: d.tol }
    }
}

impl From<KMeansSettings> for KMeansConfig {
    fn from(s: KMeansSettings) -> Self {
        KMeansConfig { restarts: s.restarts, max_iters: s.max_iters, tol: s.tol }
    }
}

/// Fixed parameters apply at every point except where the sweep overrides
/// them. `j` defaults to `N/5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub sweep: Sweep,
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default)]
    pub j: Option<usize>,
    #[serde(default = "defaults::k")]
    pub k: usize,
    #[serde(default = "defaults::l")]
    pub l: usize,
    #[serde(default = "defaults::m")]
    pub m: u32,
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    #[serde(default = "defaults::replications")]
    pub replications: u32,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "defaults::methods")]
    pub methods: Vec<String>,
    /// Also pick the class count by maximizing averaged modularity.
    #[serde(default)]
    pub select_k: Option<KRange>,
    #[serde(default)]
    pub kmeans: KMeansSettings,
}

mod defaults {
    use mlcm_core::Method;

    pub fn n() -> usize {
        500
    }
    pub fn k() -> usize {
        3
    }
    pub fn l() -> usize {
        10
    }
    pub fn m() -> u32 {
        5
    }
    pub fn rho() -> f64 {
        0.1
    }
    pub fn replications() -> u32 {
        50
    }
    pub fn methods() -> Vec<String> {
        Method::ALL.iter().map(|m| m.name().to_string()).collect()
    }
}

/// One parameter point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub value: f64,
    pub params: ModelParams,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| m.parse::<Method>().map_err(anyhow::Error::from)).collect()
    }

    pub fn kmeans_config(&self) -> KMeansConfig {
        self.kmeans.into()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.id.is_empty(), "experiment id is empty");
        ensure!(self.replications >= 1, "replications must be at least 1");
        ensure!(!self.sweep.values.is_empty(), "sweep has no values");
        let methods = self.methods()?;
        ensure!(!methods.is_empty(), "no methods configured");
        for (i, m) in methods.iter().enumerate() {
            ensure!(!methods[..i].contains(m), "method {m} listed twice");
        }
        if let Some(r) = self.select_k {
            ensure!(r.min >= 1 && r.min <= r.max, "select_k range {}..={} is empty", r.min, r.max);
            ensure!((r.min..=r.max).contains(&self.k), "select_k range {}..={} excludes K = {}", r.min, r.max, self.k);
        }
        ensure!(self.kmeans.restarts >= 1 && self.kmeans.max_iters >= 1, "k-means needs restarts and iterations");
        self.points().map(|_| ())
    }

    /// Model parameters at each sweep value, in configuration order.
    pub fn points(&self) -> Result<Vec<Point>> {
        let mut points = Vec::with_capacity(self.sweep.values.len());
        for (i, &value) in self.sweep.values.iter().enumerate() {
            ensure!(
                !self.sweep.values[..i].contains(&value),
                "sweep value {value} listed twice"
            );
            let (mut n, mut l, mut rho) = (self.n, self.l, self.rho);
            match self.sweep.param {
                SweepParam::N => n = as_count(value, "N")?,
                SweepParam::L => l = as_count(value, "L")?,
                SweepParam::Rho => rho = value,
            }
            let j = match self.j {
                Some(j) => j,
                None if n % 5 == 0 => n / 5,
                None => bail!("N = {n} is not divisible by 5; set j explicitly"),
            };
            let params = ModelParams::new(n, j, self.k, l, self.m, rho).with_context(|| format!("sweep value {value}"))?;
            if let Some(r) = self.select_k {
                ensure!(r.max <= n.min(j), "select_k max {} exceeds min(N, J) = {}", r.max, n.min(j));
            }
            points.push(Point { value, params });
        }
        Ok(points)
    }
}

fn as_count(value: f64, name: &str) -> Result<usize> {
    ensure!(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64, "{name} = {value} is not a positive integer");
    Ok(value as usize)
}

pub const PRESETS: [&str; 7] = ["exp1-desk", "exp2-desk", "exp3-desk", "ksel-desk", "exp1-full", "exp2-full", "exp3-full"];

/// Built-in configurations. Desk presets run in minutes; full presets use
/// the full grids with 50 replications and modularity-based K selection.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let base = |id: &str, param, values: Vec<f64>, replications| ExperimentConfig {
        id: id.into(),
        sweep: Sweep { param, values },
        n: 500,
        j: None,
        k: 3,
        l: 10,
        m: 5,
        rho: 0.1,
        replications,
        master_seed: 20240601,
        methods: defaults::methods(),
        select_k: None,
        kmeans: KMeansSettings::default(),
    };
    let grid = |start: f64, step: f64, count: usize| (0..count).map(|i| start + step * i as f64).collect::<Vec<_>>();
    let full_select = Some(KRange { min: 1, max: 6 });
    let cfg = match name {
        "exp1-desk" => base("exp1", SweepParam::N, vec![100.0, 300.0, 500.0], 10),
        "exp2-desk" => base("exp2", SweepParam::L, vec![2.0, 10.0, 20.0], 10),
        "exp3-desk" => base("exp3", SweepParam::Rho, vec![0.02, 0.1, 0.2], 10),
        "ksel-desk" => ExperimentConfig {
            n: 1000,
            j: Some(200),
            rho: 0.2,
            methods: vec![Method::Dsog.name().into()],
            select_k: Some(KRange { min: 1, max: 6 }),
            ..base("ksel", SweepParam::N, vec![1000.0], 20)
        },
        "exp1-full" => ExperimentConfig {
            select_k: full_select,
            ..base("exp1", SweepParam::N, grid(100.0, 100.0, 10), 50)
        },
        "exp2-full" => ExperimentConfig { select_k: full_select, ..base("exp2", SweepParam::L, grid(2.0, 2.0, 10), 50) },
        "exp3-full" => ExperimentConfig {
            select_k: full_select,
            // 0.02 steps written out so the values print exactly
            ..base("exp3", SweepParam::Rho, vec![0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2], 50)
        },
        _ => return None,
    };
    Some(cfg)
}
