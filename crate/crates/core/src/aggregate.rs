//! Aggregation of the `L` response layers.
//!
//! All products are accumulated in layer order so results are bit-stable.

use alloc::vec::Vec;

use log::warn;

use crate::model::ResponseTensor;
use crate::{Matrix, Vector};

/// The three aggregation matrices the estimators work on.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationBundle {
    /// `Σ_l R_l`, `N×J`.
    pub r_sum: Matrix,
    /// `Σ_l R_l R_l'`, `N×N`.
    pub s_sum: Matrix,
    /// `Σ_l (R_l R_l' − D_l)` with `D_l(i, i) = Σ_j R_l(i, j)²`, `N×N`.
    pub s_sum_debiased: Matrix,
}

pub fn build_aggregates(r: &ResponseTensor) -> AggregationBundle {
    let r_sum = sum_of_responses(r);
    let s_sum = sum_of_grams(r);
    let s_sum_debiased = debias(&s_sum, &gram_diagonal_bias(r));
    AggregationBundle { r_sum, s_sum, s_sum_debiased }
}

pub fn sum_of_responses(r: &ResponseTensor) -> Matrix {
    let mut acc = Matrix::zeros(r.n(), r.j());
    for layer in r.layers() {
        acc += layer;
    }
    acc
}

pub fn sum_of_grams(r: &ResponseTensor) -> Matrix {
    let n = r.n();
    let mut acc = Matrix::zeros(n, n);
    for layer in r.layers() {
        acc.gemm(1.0, layer, &layer.transpose(), 1.0);
    }
    acc
}

/// `Σ_l diag(D_l)`: per subject, the sum of squared responses over layers and items.
pub fn gram_diagonal_bias(r: &ResponseTensor) -> Vector {
    let mut acc = Vector::zeros(r.n());
    for layer in r.layers() {
        for (i, row) in layer.row_iter().enumerate() {
            acc[i] += row.iter().map(|x| x * x).sum::<f64>();
        }
    }
    acc
}

pub fn debiased_sum_of_grams(r: &ResponseTensor) -> Matrix {
    debias(&sum_of_grams(r), &gram_diagonal_bias(r))
}

fn debias(s_sum: &Matrix, bias: &Vector) -> Matrix {
    let mut out = s_sum.clone();
    for (i, b) in bias.iter().enumerate() {
        out[(i, i)] -= b;
    }
    out
}

/// Per-layer weighted graphs `A_l = R_l R_l'` with their degrees and total weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModularityIngredients {
    pub a: Vec<Matrix>,
    /// `d_l(i) = Σ_ī A_l(i, ī)`.
    pub degrees: Vec<Vector>,
    /// `ω_l = ½ Σ_i d_l(i)`.
    pub omegas: Vec<f64>,
    /// Layers with `ω_l = 0`, which carry no edges.
    pub zero_layers: Vec<usize>,
}

impl ModularityIngredients {
    pub fn num_layers(&self) -> usize {
        self.a.len()
    }
}

pub fn build_modularity_ingredients(r: &ResponseTensor) -> ModularityIngredients {
    let mut a = Vec::with_capacity(r.num_layers());
    let mut degrees = Vec::with_capacity(r.num_layers());
    let mut omegas = Vec::with_capacity(r.num_layers());
    let mut zero_layers = Vec::new();
    for (l, layer) in r.layers().iter().enumerate() {
        let gram = layer * layer.transpose();
        let d = Vector::from_iterator(gram.nrows(), gram.row_iter().map(|row| row.sum()));
        let omega = 0.5 * d.sum();
        if omega == 0.0 {
            warn!("layer {l} has no nonzero responses and carries no modularity weight");
            zero_layers.push(l);
        }
        a.push(gram);
        degrees.push(d);
        omegas.push(omega);
    }
    ModularityIngredients { a, degrees, omegas, zero_layers }
}
