//! Per (parameter value, method) means and sample standard deviations.

use std::io::Write;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::Serialize;

use crate::experiment::Record;

/// Mean and sample standard deviation (`n − 1`; 0 for a single value).
pub fn mean_sd(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

/// Failed rows are counted but excluded from every mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub param_name: String,
    pub param_value: f64,
    pub method: String,
    pub replications: usize,
    pub failures: usize,
    pub clustering_error_mean: Option<f64>,
    pub clustering_error_sd: Option<f64>,
    pub hamming_error_mean: Option<f64>,
    pub hamming_error_sd: Option<f64>,
    pub nmi_mean: Option<f64>,
    pub nmi_sd: Option<f64>,
    pub ari_mean: Option<f64>,
    pub ari_sd: Option<f64>,
    pub rel_l2_error_mean: Option<f64>,
    pub rel_l2_error_sd: Option<f64>,
    /// Share of replications whose selected K was correct.
    pub accuracy_rate: Option<f64>,
}

/// Groups in order of first appearance.
pub fn summarize(records: &[Record]) -> Result<Vec<SummaryRow>> {
    ensure!(!records.is_empty(), "no records to summarize");
    let mut groups: Vec<(&Record, Vec<&Record>)> = Vec::new();
    for r in records {
        let key = |x: &Record| {
            x.experiment == r.experiment
                && x.param_name == r.param_name
                && x.param_value.to_bits() == r.param_value.to_bits()
                && x.method == r.method
        };
        match groups.iter_mut().find(|(first, _)| key(first)) {
            Some((_, members)) => members.push(r),
            None => groups.push((r, vec![r])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(first, members)| {
            let ok: Vec<&Record> = members.iter().copied().filter(|r| r.is_ok()).collect();
            let stat = |f: fn(&Record) -> Option<f64>| {
                let xs: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                mean_sd(&xs)
            };
            let ce = stat(|r| r.clustering_error);
            let ham = stat(|r| r.hamming_error);
            let nmi = stat(|r| r.nmi);
            let ari = stat(|r| r.ari);
            let l2 = stat(|r| r.rel_l2_error);
            let picks: Vec<bool> = ok.iter().filter_map(|r| r.k_correct).collect();
            let accuracy_rate =
                (!picks.is_empty()).then(|| picks.iter().filter(|&&c| c).count() as f64 / picks.len() as f64);
            SummaryRow {
                experiment: first.experiment.clone(),
                param_name: first.param_name.clone(),
                param_value: first.param_value,
                method: first.method.clone(),
                replications: members.len(),
                failures: members.len() - ok.len(),
                clustering_error_mean: ce.map(|s| s.0),
                clustering_error_sd: ce.map(|s| s.1),
                hamming_error_mean: ham.map(|s| s.0),
                hamming_error_sd: ham.map(|s| s.1),
                nmi_mean: nmi.map(|s| s.0),
                nmi_sd: nmi.map(|s| s.1),
                ari_mean: ari.map(|s| s.0),
                ari_sd: ari.map(|s| s.1),
                rel_l2_error_mean: l2.map(|s| s.0),
                rel_l2_error_sd: l2.map(|s| s.1),
                accuracy_rate,
            }
        })
        .collect())
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_file(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_summary(std::io::BufWriter::new(file), rows)
}
