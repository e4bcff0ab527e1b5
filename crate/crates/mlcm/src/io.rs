//! On-disk formats.
//!
//! A dataset is a directory holding `meta.json` and one headerless integer
//! CSV per layer (`layer_001.csv`, ...). Labels are one 1-based class per
//! line. Item parameters are one `J×K` CSV per layer (`theta_001.csv`, ...).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use mlcm_core::aggregate::AggregationBundle;
use mlcm_core::{Matrix, Partition, ResponseTensor};
use serde::{Deserialize, Serialize};

pub const META_FILE: &str = "meta.json";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: u32,
    /// Class count, when the data were simulated.
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub seed: Option<u64>,
}

pub fn layer_path(dir: &Path, l: usize) -> PathBuf {
    dir.join(format!("layer_{:03}.csv", l + 1))
}

pub fn theta_path(dir: &Path, l: usize) -> PathBuf {
    dir.join(format!("theta_{:03}.csv", l + 1))
}

/// `x` with at most 12 significant digits and no trailing zeros.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=14).contains(&exp) {
        return format!("{x:.11e}");
    }
    let s = format!("{:.*}", (11 - exp).max(0) as usize, x);
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
    if s == "-0" { "0".into() } else { s.into() }
}

fn write_rows(path: &Path, m: &Matrix, fmt: impl Fn(f64) -> String) -> Result<()> {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 4);
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&x| fmt(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Writes an integer-valued matrix.
pub fn write_int_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_rows(path, m, |x| format!("{}", x as i64))
}

/// Writes a real matrix with 12 significant digits.
pub fn write_real_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_rows(path, m, format_sig12)
}

/// Reads a headerless numeric CSV; every row must have the same width.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        ensure!(
            ncols.is_none_or(|c| c == record.len()),
            "{}: row {} has {} fields, expected {}",
            path.display(),
            i + 1,
            record.len(),
            ncols.unwrap_or(0)
        );
        ncols = Some(record.len());
        for field in &record {
            let x: f64 = field
                .trim()
                .parse()
                .with_context(|| format!("{}: row {}: not a number: {field:?}", path.display(), i + 1))?;
            data.push(x);
        }
        nrows += 1;
    }
    ensure!(nrows > 0, "{} is empty", path.display());
    Ok(Matrix::from_row_slice(nrows, ncols.unwrap_or(0), &data))
}

pub fn write_labels(path: &Path, z: &Partition) -> Result<()> {
    let mut out = String::with_capacity(z.n() * 2);
    for c in z.one_based_labels() {
        out.push_str(&c.to_string());
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Raw 1-based labels, one per nonblank line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let c: usize = line.parse().with_context(|| format!("{}: line {}: bad label {line:?}", path.display(), i + 1))?;
        ensure!(c >= 1, "{}: line {}: labels are 1-based", path.display(), i + 1);
        labels.push(c);
    }
    ensure!(!labels.is_empty(), "{} holds no labels", path.display());
    Ok(labels)
}

/// Partition with an explicit class count, which may exceed the largest label.
pub fn labels_to_partition(labels: &[usize], k: usize) -> Result<Partition> {
    Ok(Partition::new(labels.iter().map(|&c| c - 1).collect(), k)?)
}

pub fn write_thetas(dir: &Path, thetas: &[Matrix]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (l, t) in thetas.iter().enumerate() {
        write_real_matrix(&theta_path(dir, l), t)?;
    }
    Ok(())
}

/// Reads `theta_001.csv`, `theta_002.csv`, ... until the first missing file.
pub fn read_thetas(dir: &Path) -> Result<Vec<Matrix>> {
    let mut thetas = Vec::new();
    while theta_path(dir, thetas.len()).exists() {
        thetas.push(read_matrix(&theta_path(dir, thetas.len()))?);
    }
    ensure!(!thetas.is_empty(), "no theta_001.csv in {}", dir.display());
    Ok(thetas)
}

pub fn write_dataset(dir: &Path, meta: &DatasetMeta, r: &ResponseTensor) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut f = fs::File::create(dir.join(META_FILE))?;
    serde_json::to_writer_pretty(&mut f, meta)?;
    writeln!(f)?;
    for (l, layer) in r.layers().iter().enumerate() {
        write_int_matrix(&layer_path(dir, l), layer)?;
    }
    Ok(())
}

/// Reads a dataset and checks every layer against `meta.json`.
pub fn read_dataset(dir: &Path) -> Result<(DatasetMeta, ResponseTensor)> {
    let meta_path = dir.join(META_FILE);
    let meta: DatasetMeta = serde_json::from_reader(
        fs::File::open(&meta_path).with_context(|| format!("opening {}", meta_path.display()))?,
    )
    .with_context(|| format!("parsing {}", meta_path.display()))?;
    ensure!(meta.l > 0, "{}: L must be positive", meta_path.display());
    let mut layers = Vec::with_capacity(meta.l);
    for l in 0..meta.l {
        let path = layer_path(dir, l);
        let layer = read_matrix(&path)?;
        if layer.shape() != (meta.n, meta.j) {
            bail!("{} is {}x{}, meta.json says {}x{}", path.display(), layer.nrows(), layer.ncols(), meta.n, meta.j);
        }
        layers.push(layer);
    }
    let r = ResponseTensor::new(layers, meta.m).with_context(|| format!("responses in {}", dir.display()))?;
    Ok((meta, r))
}

pub fn write_aggregates(dir: &Path, agg: &AggregationBundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_real_matrix(&dir.join("r_sum.csv"), &agg.r_sum)?;
    write_real_matrix(&dir.join("s_sum.csv"), &agg.s_sum)?;
    write_real_matrix(&dir.join("s_sum_debiased.csv"), &agg.s_sum_debiased)
}
