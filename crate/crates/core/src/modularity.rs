//! Averaged modularity of a partition over the layer graphs `A_l = R_l R_l'`,
//! and selection of the class count by maximizing it.
//!
//! The double sum runs over all ordered subject pairs, self-pairs included.
//! Layers without any nonzero response have `ω_l = 0` and are left out of the
//! average.

use alloc::vec::Vec;

use log::warn;
use rand::Rng;

use crate::aggregate::ModularityIngredients;
use crate::error::{invalid, mismatch, Error, Result};
use crate::estimators::{Fitter, Method};
use crate::kmeans::KMeansConfig;
use crate::model::{Partition, ResponseTensor};
use crate::{Matrix, Vector};

/// Per-class sums of one layer's within-class edge weight and degree.
/// Returns `(Σ_c Σ_{i,ī∈c} A(i,ī) − Σ_c D_c²/(2ω)) / (2ω)`.
fn layer_modularity(within: f64, class_degrees: &[f64], two_omega: f64) -> f64 {
    let null: f64 = class_degrees.iter().map(|&d| d * (d / two_omega)).sum();
    (within - null) / two_omega
}

/// Averaged modularity from explicit layer graphs.
pub fn averaged_modularity(ing: &ModularityIngredients, z_hat: &Partition) -> Result<f64> {
    let members = z_hat.members();
    let mut total = 0.0;
    let mut used = 0usize;
    for (l, (a, d)) in ing.a.iter().zip(&ing.degrees).enumerate() {
        if a.nrows() != z_hat.n() {
            return Err(mismatch!("layer {l} has {} subjects, partition {}", a.nrows(), z_hat.n()));
        }
        let omega = ing.omegas[l];
        if omega == 0.0 {
            continue;
        }
        let mut within = 0.0;
        let mut class_degrees = Vec::with_capacity(members.len());
        for class in &members {
            for &i in class {
                for &j in class {
                    within += a[(i, j)];
                }
            }
            class_degrees.push(class.iter().map(|&i| d[i]).sum());
        }
        total += layer_modularity(within, &class_degrees, 2.0 * omega);
        used += 1;
    }
    if used == 0 {
        return Err(Error::Degenerate("every layer has zero total weight".into()));
    }
    if used < ing.num_layers() {
        warn!("{} zero-weight layer(s) left out of the modularity average", ing.num_layers() - used);
    }
    Ok(total / used as f64)
}

/// Averaged modularity evaluated from the responses without forming the
/// `N×N` layer graphs: within-class weight is `‖Σ_{i∈c} R_l(i,:)‖²` and
/// `d_l(i) = R_l(i,:) · Σ_ī R_l(ī,:)`.
pub struct FactoredModularity<'a> {
    layers: Vec<FactoredLayer<'a>>,
    n: usize,
    skipped: usize,
}

struct FactoredLayer<'a> {
    responses: &'a Matrix,
    degrees: Vector,
    two_omega: f64,
}

impl<'a> FactoredModularity<'a> {
    pub fn new(r: &'a ResponseTensor) -> Result<Self> {
        let mut layers = Vec::new();
        let mut skipped = 0;
        for (l, layer) in r.layers().iter().enumerate() {
            let col_sums = layer.row_sum_tr();
            let degrees = layer * &col_sums;
            let two_omega = degrees.sum();
            if two_omega == 0.0 {
                warn!("layer {l} has no nonzero responses and is left out of the modularity average");
                skipped += 1;
                continue;
            }
            layers.push(FactoredLayer { responses: layer, degrees, two_omega });
        }
        if layers.is_empty() {
            return Err(Error::Degenerate("every layer has zero total weight".into()));
        }
        Ok(Self { layers, n: r.n(), skipped })
    }

    /// Layers dropped for having zero weight.
    pub fn skipped_layers(&self) -> usize {
        self.skipped
    }

    pub fn evaluate(&self, z_hat: &Partition) -> Result<f64> {
        if z_hat.n() != self.n {
            return Err(mismatch!("responses have {} subjects, partition {}", self.n, z_hat.n()));
        }
        let labels = z_hat.labels();
        let mut total = 0.0;
        for layer in &self.layers {
            let j = layer.responses.ncols();
            let mut class_rows = Matrix::zeros(z_hat.k(), j);
            let mut class_degrees = alloc::vec![0.0; z_hat.k()];
            for (i, &c) in labels.iter().enumerate() {
                class_degrees[c] += layer.degrees[i];
            }
            for col in 0..j {
                for (i, &c) in labels.iter().enumerate() {
                    class_rows[(c, col)] += layer.responses[(i, col)];
                }
            }
            let within: f64 = class_rows.row_iter().map(|row| row.norm_squared()).sum();
            total += layer_modularity(within, &class_degrees, layer.two_omega);
        }
        Ok(total / self.layers.len() as f64)
    }
}

/// Averaged modularity of the estimated partitions for a range of class counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ModularityCurve {
    pub method: Method,
    pub k_values: Vec<usize>,
    /// `None` where the estimator failed at that `k`.
    pub q_values: Vec<Option<f64>>,
    /// The maximizing `k`, smallest on ties.
    pub k_star: usize,
}

impl ModularityCurve {
    pub fn q_star(&self) -> f64 {
        let idx = self.k_values.iter().position(|&k| k == self.k_star).expect("k_star is on the curve");
        self.q_values[idx].expect("k_star has a value")
    }
}

/// Fits `method` for every `k` in `k_min..=k_max` and scores each estimate.
pub fn select_k<R: Rng + ?Sized>(
    r: &ResponseTensor,
    method: Method,
    k_min: usize,
    k_max: usize,
    cfg: &KMeansConfig,
    rng: &mut R,
) -> Result<ModularityCurve> {
    let fitter = Fitter::new(r, method)?;
    select_k_with(&fitter, r, k_min, k_max, cfg, rng)
}

/// [`select_k`] on an already prepared decomposition.
pub fn select_k_with<R: Rng + ?Sized>(
    fitter: &Fitter<'_>,
    r: &ResponseTensor,
    k_min: usize,
    k_max: usize,
    cfg: &KMeansConfig,
    rng: &mut R,
) -> Result<ModularityCurve> {
    if k_min == 0 || k_min > k_max || k_max > fitter.max_k() {
        return Err(invalid!("k range {k_min}..={k_max} outside 1..={}", fitter.max_k()));
    }
    let scorer = FactoredModularity::new(r)?;
    let k_values: Vec<usize> = (k_min..=k_max).collect();
    let mut q_values = Vec::with_capacity(k_values.len());
    for &k in &k_values {
        match fitter.fit(k, cfg, rng).and_then(|fit| scorer.evaluate(&fit.z_hat)) {
            Ok(q) => q_values.push(Some(q)),
            Err(e) => {
                warn!("{} failed at k = {k}: {e}", fitter.method());
                q_values.push(None);
            }
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (&k, q) in k_values.iter().zip(&q_values) {
        if let Some(q) = *q {
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((k, q));
            }
        }
    }
    let (k_star, _) = best.ok_or_else(|| {
        Error::EstimationFailure(alloc::format!("{} failed for every k in {k_min}..={k_max}", fitter.method()))
    })?;
    Ok(ModularityCurve { method: fitter.method(), k_values, q_values, k_star })
}
