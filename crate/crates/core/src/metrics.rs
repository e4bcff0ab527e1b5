//! Agreement between estimated and true structure.
//!
//! The permutation-minimized metrics search all `K!` label matchings, so they
//! refuse `K > 8`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, mismatch, Error, Result};
use crate::model::Partition;
use crate::Matrix;

/// Largest class count for which permutation search is attempted.
pub const MAX_PERMUTATION_K: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub clustering_error: f64,
    pub hamming_error: f64,
    pub nmi: f64,
    pub ari: f64,
    /// Only available when the true item parameters are known.
    pub relative_l2_error: Option<f64>,
}

/// `table[t][e]` = subjects in true class `t` and estimated class `e`.
fn contingency(truth: &Partition, est: &Partition) -> Vec<Vec<u64>> {
    let mut table = vec![vec![0u64; est.k()]; truth.k()];
    for (&t, &e) in truth.labels().iter().zip(est.labels()) {
        table[t][e] += 1;
    }
    table
}

fn check_same_n(truth: &Partition, est: &Partition) -> Result<()> {
    if truth.n() != est.n() {
        return Err(mismatch!("partitions cover {} and {} subjects", truth.n(), est.n()));
    }
    if truth.n() == 0 {
        return Err(invalid!("partitions are empty"));
    }
    Ok(())
}

fn check_permutable(truth: &Partition, est: &Partition) -> Result<()> {
    check_same_n(truth, est)?;
    if truth.k() != est.k() {
        return Err(mismatch!("partitions have {} and {} classes", truth.k(), est.k()));
    }
    if truth.k() > MAX_PERMUTATION_K {
        return Err(Error::UnsupportedSize(alloc::format!(
            "permutation search limited to K <= {MAX_PERMUTATION_K}, got {}",
            truth.k()
        )));
    }
    Ok(())
}

/// Steps `perm` to the next permutation in lexicographic order.
fn next_permutation(perm: &mut [usize]) -> bool {
    let Some(pivot) = perm.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let swap = perm.iter().rposition(|&x| x > perm[pivot]).expect("successor exists");
    perm.swap(pivot, swap);
    perm[pivot + 1..].reverse();
    true
}

/// Calls `visit` with every permutation of `0..k`, identity first.
fn for_each_permutation(k: usize, mut visit: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        visit(&perm);
        if !next_permutation(&mut perm) {
            break;
        }
    }
}

/// Clustering error together with the minimizing matching: `perm[t]` is the
/// estimated class paired with true class `t`. Among equally good matchings
/// the lexicographically first wins.
pub fn clustering_error_with_permutation(truth: &Partition, est: &Partition) -> Result<(f64, Vec<usize>)> {
    check_permutable(truth, est)?;
    let sizes = truth.class_sizes();
    if let Some(t) = sizes.iter().position(|&s| s == 0) {
        return Err(invalid!("true class {} is empty", t + 1));
    }
    let est_sizes = est.class_sizes();
    let table = contingency(truth, est);
    let mut best = (f64::INFINITY, Vec::new());
    for_each_permutation(truth.k(), |perm| {
        let worst = perm
            .iter()
            .enumerate()
            .map(|(t, &e)| {
                let shared = table[t][e];
                let missed = sizes[t] as u64 - shared;
                let extra = est_sizes[e] as u64 - shared;
                (missed + extra) as f64 / sizes[t] as f64
            })
            .fold(0.0, f64::max);
        if worst < best.0 {
            best = (worst, perm.to_vec());
        }
    });
    Ok(best)
}

/// Permutation-minimized worst-class misassignment rate, each class
/// normalized by its true size.
pub fn clustering_error(truth: &Partition, est: &Partition) -> Result<f64> {
    clustering_error_with_permutation(truth, est).map(|(e, _)| e)
}

/// Smallest fraction of misclassified subjects over all label matchings.
pub fn hamming_error(truth: &Partition, est: &Partition) -> Result<f64> {
    check_permutable(truth, est)?;
    let table = contingency(truth, est);
    let mut best_matched = 0;
    for_each_permutation(truth.k(), |perm| {
        let matched: u64 = perm.iter().enumerate().map(|(t, &e)| table[t][e]).sum();
        best_matched = best_matched.max(matched);
    });
    let n = truth.n() as u64;
    Ok((n - best_matched) as f64 / n as f64)
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 / n * libm::log(n / c as f64))
        .sum()
}

/// `2·I(truth; est) / (H(truth) + H(est))` with natural logarithms.
///
/// Two single-class partitions have zero entropies and score 1.
pub fn nmi(truth: &Partition, est: &Partition) -> Result<f64> {
    check_same_n(truth, est)?;
    let n = truth.n() as f64;
    let table = contingency(truth, est);
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..est.k()).map(|e| table.iter().map(|r| r[e]).sum()).collect();
    let h_truth = entropy(&rows, n);
    let h_est = entropy(&cols, n);
    if h_truth + h_est == 0.0 {
        return Ok(1.0);
    }
    let mut mutual = 0.0;
    for (t, row) in table.iter().enumerate() {
        for (e, &c) in row.iter().enumerate() {
            if c > 0 {
                let ratio = (n * c as f64) / (rows[t] as f64 * cols[e] as f64);
                mutual += c as f64 / n * libm::log(ratio);
            }
        }
    }
    Ok((2.0 * mutual / (h_truth + h_est)).clamp(0.0, 1.0))
}

fn pairs(x: u64) -> i128 {
    i128::from(x) * i128::from(x.saturating_sub(1)) / 2
}

/// Hubert–Arabie adjusted Rand index.
///
/// Evaluated as one division of exact integer pair counts. When both
/// partitions are all one class (or all singletons) the index is undefined;
/// they then agree perfectly and score 1.
pub fn ari(truth: &Partition, est: &Partition) -> Result<f64> {
    check_same_n(truth, est)?;
    let table = contingency(truth, est);
    let index: i128 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_rows: i128 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let sum_cols: i128 = (0..est.k()).map(|e| pairs(table.iter().map(|r| r[e]).sum())).sum();
    let total = pairs(truth.n() as u64);
    // (index − rows·cols/total) / (½(rows + cols) − rows·cols/total), scaled by 2·total.
    let numer = 2 * (index * total - sum_rows * sum_cols);
    let denom = (sum_rows + sum_cols) * total - 2 * sum_rows * sum_cols;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(numer as f64 / denom as f64)
}

/// `‖Σ_l (Θ̂_l − Θ_l)‖_F / ‖Σ_l Θ_l‖_F` after moving column `perm[k]` of every
/// `Θ̂_l` to position `k`.
pub fn relative_l2_error(theta_true: &[Matrix], theta_hat: &[Matrix], perm: &[usize]) -> Result<f64> {
    if theta_true.is_empty() || theta_true.len() != theta_hat.len() {
        return Err(mismatch!("{} true layers against {} estimated", theta_true.len(), theta_hat.len()));
    }
    let shape = theta_true[0].shape();
    if theta_true.iter().chain(theta_hat).any(|t| t.shape() != shape) {
        return Err(mismatch!("item parameter matrices must all be {}x{}", shape.0, shape.1));
    }
    let mut sorted = perm.to_vec();
    sorted.sort_unstable();
    if sorted != (0..shape.1).collect::<Vec<_>>() {
        return Err(invalid!("{perm:?} is not a permutation of 0..{}", shape.1));
    }
    let mut diff = Matrix::zeros(shape.0, shape.1);
    let mut truth = Matrix::zeros(shape.0, shape.1);
    for (t, h) in theta_true.iter().zip(theta_hat) {
        truth += t;
        for (k, &src) in perm.iter().enumerate() {
            let mut col = diff.column_mut(k);
            col += h.column(src);
            col -= t.column(k);
        }
    }
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::Degenerate("true item parameters sum to zero".into()));
    }
    Ok(diff.norm() / denom)
}

/// Fraction of selected class counts equal to the truth.
pub fn accuracy_rate(k_hats: &[usize], k_true: usize) -> Result<f64> {
    if k_hats.is_empty() {
        return Err(invalid!("no selections to score"));
    }
    Ok(k_hats.iter().filter(|&&k| k == k_true).count() as f64 / k_hats.len() as f64)
}

/// Every partition metric, plus the relative l2 error when `thetas` holds
/// `(true, estimated)` item parameters.
pub fn score(truth: &Partition, est: &Partition, thetas: Option<(&[Matrix], &[Matrix])>) -> Result<MetricReport> {
    let (clustering_error, perm) = clustering_error_with_permutation(truth, est)?;
    let relative_l2_error = match thetas {
        Some((t, h)) => Some(relative_l2_error(t, h, &perm)?),
        None => None,
    };
    Ok(MetricReport {
        clustering_error,
        hamming_error: hamming_error(truth, est)?,
        nmi: nmi(truth, est)?,
        ari: ari(truth, est)?,
        relative_l2_error,
    })
}
