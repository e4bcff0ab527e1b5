//! Spectral estimators of the latent classes and item parameters.
//!
//! Three spectral methods cluster the rows of a low-rank embedding:
//!
//! * `LCA-SoR`: left singular vectors of `Σ_l R_l`,
//! * `LCA-SoG`: leading eigenvectors of `Σ_l R_l R_l'`,
//! * `LCA-DSoG`: leading eigenvectors of `Σ_l (R_l R_l' − D_l)`.
//!
//! The baselines `LCA-SoRK`, `LCA-SoGK` and `LCA-DSoGK` run k-means on the
//! rows of the same aggregation matrices directly. All six recover the item
//! parameters as per-class column means of each layer.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::aggregate::{debiased_sum_of_grams, sum_of_grams, sum_of_responses, AggregationBundle};
use crate::error::{invalid, mismatch, Error, Result};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::model::{ModelParams, Partition, ResponseTensor};
use crate::spectral::{EigenBasis, SvdBasis};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Sum of response matrices.
    Sor,
    /// Debiased sum of Gram matrices.
    Dsog,
    /// Sum of Gram matrices.
    Sog,
    /// k-means on the rows of the sum of response matrices.
    SorK,
    /// k-means on the rows of the sum of Gram matrices.
    SogK,
    /// k-means on the rows of the debiased sum of Gram matrices.
    DsogK,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Sor, Method::Dsog, Method::Sog, Method::SorK, Method::SogK, Method::DsogK];

    pub const fn name(self) -> &'static str {
        match self {
            Method::Sor => "LCA-SoR",
            Method::Dsog => "LCA-DSoG",
            Method::Sog => "LCA-SoG",
            Method::SorK => "LCA-SoRK",
            Method::SogK => "LCA-SoGK",
            Method::DsogK => "LCA-DSoGK",
        }
    }

    pub const fn is_baseline(self) -> bool {
        matches!(self, Method::SorK | Method::SogK | Method::DsogK)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the display names case-insensitively, with or without the `LCA-` prefix.
    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        let bare = trimmed
            .get(..4)
            .filter(|p| p.eq_ignore_ascii_case("lca-"))
            .map_or(trimmed, |_| &trimmed[4..]);
        Method::ALL
            .into_iter()
            .find(|m| m.name()[4..].eq_ignore_ascii_case(bare))
            .ok_or_else(|| invalid!("unknown method {s:?}"))
    }
}

/// Which raw aggregation matrix a baseline clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    SorK,
    SogK,
    DsogK,
}

impl From<Baseline> for Method {
    fn from(b: Baseline) -> Self {
        match b {
            Baseline::SorK => Method::SorK,
            Baseline::SogK => Method::SogK,
            Baseline::DsogK => Method::DsogK,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    /// `σ_K / σ_{K+1}` (or `|λ_K| / |λ_{K+1}|`); `None` for baselines or when `K` is the full rank.
    pub spectral_gap: Option<f64>,
    pub degenerate_spectrum: bool,
    pub inertia: f64,
    pub kmeans_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub z_hat: Partition,
    /// `Θ̂_l`, one `J×K` matrix per layer.
    pub theta_hats: Vec<Matrix>,
    pub method: Method,
    pub diagnostics: FitDiagnostics,
}

enum Embedding {
    Svd(SvdBasis),
    Eigen(EigenBasis),
    Raw(Matrix),
}

/// An aggregation matrix and its decomposition, prepared once and reusable
/// for any number of classes.
pub struct Fitter<'a> {
    responses: &'a ResponseTensor,
    method: Method,
    embedding: Embedding,
}

impl<'a> Fitter<'a> {
    pub fn new(responses: &'a ResponseTensor, method: Method) -> Result<Self> {
        let embedding = match method {
            Method::Sor => Embedding::Svd(SvdBasis::new(&sum_of_responses(responses))?),
            Method::Sog => Embedding::Eigen(EigenBasis::new(&sum_of_grams(responses))?),
            Method::Dsog => Embedding::Eigen(EigenBasis::new(&debiased_sum_of_grams(responses))?),
            Method::SorK => Embedding::Raw(sum_of_responses(responses)),
            Method::SogK => Embedding::Raw(sum_of_grams(responses)),
            Method::DsogK => Embedding::Raw(debiased_sum_of_grams(responses)),
        };
        Ok(Self { responses, method, embedding })
    }

    /// Like [`Fitter::new`], reusing aggregates already built from `responses`.
    pub fn with_aggregates(responses: &'a ResponseTensor, method: Method, agg: &AggregationBundle) -> Result<Self> {
        let (n, j) = (responses.n(), responses.j());
        if agg.r_sum.shape() != (n, j) || agg.s_sum.shape() != (n, n) || agg.s_sum_debiased.shape() != (n, n) {
            return Err(mismatch!("aggregates do not match {n}x{j} responses"));
        }
        let embedding = match method {
            Method::Sor => Embedding::Svd(SvdBasis::new(&agg.r_sum)?),
            Method::Sog => Embedding::Eigen(EigenBasis::new(&agg.s_sum)?),
            Method::Dsog => Embedding::Eigen(EigenBasis::new(&agg.s_sum_debiased)?),
            Method::SorK => Embedding::Raw(agg.r_sum.clone()),
            Method::SogK => Embedding::Raw(agg.s_sum.clone()),
            Method::DsogK => Embedding::Raw(agg.s_sum_debiased.clone()),
        };
        Ok(Self { responses, method, embedding })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Largest admissible class count, `min(N, J)`.
    pub fn max_k(&self) -> usize {
        self.responses.n().min(self.responses.j())
    }

    pub fn fit<R: Rng + ?Sized>(&self, k: usize, cfg: &KMeansConfig, rng: &mut R) -> Result<FitResult> {
        if k == 0 || k > self.max_k() {
            return Err(invalid!("K = {k} outside 1..={}", self.max_k()));
        }
        let (clustered, gap, degenerate) = match &self.embedding {
            Embedding::Svd(basis) => {
                let t = basis.truncate(k)?;
                (kmeans(&t.u, k, cfg, rng)?, basis.gap(k), t.degenerate)
            }
            Embedding::Eigen(basis) => {
                let t = basis.truncate(k)?;
                (kmeans(&t.v, k, cfg, rng)?, basis.gap(k), t.degenerate)
            }
            Embedding::Raw(m) => (kmeans(m, k, cfg, rng)?, None, false),
        };
        if !clustered.labels.is_covering() {
            return Err(Error::EstimationFailure(alloc::format!(
                "{}: k-means returned fewer than {k} nonempty classes",
                self.method
            )));
        }
        let theta_hats = estimate_theta(self.responses, &clustered.labels)?;
        Ok(FitResult {
            z_hat: clustered.labels,
            theta_hats,
            method: self.method,
            diagnostics: FitDiagnostics {
                spectral_gap: gap,
                degenerate_spectrum: degenerate,
                inertia: clustered.inertia,
                kmeans_iterations: clustered.iterations,
            },
        })
    }
}

/// Fits any of the six methods.
pub fn fit<R: Rng + ?Sized>(
    r: &ResponseTensor,
    k: usize,
    method: Method,
    cfg: &KMeansConfig,
    rng: &mut R,
) -> Result<FitResult> {
    if k == 0 || k > r.n().min(r.j()) {
        return Err(invalid!("K = {k} outside 1..={}", r.n().min(r.j())));
    }
    Fitter::new(r, method)?.fit(k, cfg, rng)
}

pub fn fit_lca_sor<R: Rng + ?Sized>(r: &ResponseTensor, k: usize, cfg: &KMeansConfig, rng: &mut R) -> Result<FitResult> {
    fit(r, k, Method::Sor, cfg, rng)
}

pub fn fit_lca_dsog<R: Rng + ?Sized>(r: &ResponseTensor, k: usize, cfg: &KMeansConfig, rng: &mut R) -> Result<FitResult> {
    fit(r, k, Method::Dsog, cfg, rng)
}

pub fn fit_lca_sog<R: Rng + ?Sized>(r: &ResponseTensor, k: usize, cfg: &KMeansConfig, rng: &mut R) -> Result<FitResult> {
    fit(r, k, Method::Sog, cfg, rng)
}

pub fn fit_baseline<R: Rng + ?Sized>(
    r: &ResponseTensor,
    k: usize,
    which: Baseline,
    cfg: &KMeansConfig,
    rng: &mut R,
) -> Result<FitResult> {
    fit(r, k, which.into(), cfg, rng)
}

/// `Θ̂_l = R_l' Ẑ (Ẑ'Ẑ)^{-1}`, evaluated as per-class column means of `R_l`.
pub fn estimate_theta(r: &ResponseTensor, z_hat: &Partition) -> Result<Vec<Matrix>> {
    if z_hat.n() != r.n() {
        return Err(mismatch!("partition covers {} subjects, responses {}", z_hat.n(), r.n()));
    }
    let sizes = z_hat.class_sizes();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EstimationFailure(alloc::format!("estimated class {} is empty", empty + 1)));
    }
    let labels = z_hat.labels();
    Ok(r
        .layers()
        .iter()
        .map(|layer| {
            let mut theta = Matrix::zeros(layer.ncols(), z_hat.k());
            for j in 0..layer.ncols() {
                for (i, &c) in labels.iter().enumerate() {
                    theta[(j, c)] += layer[(i, j)];
                }
            }
            for (c, &size) in sizes.iter().enumerate() {
                theta.column_mut(c).unscale_mut(size as f64);
            }
            theta
        })
        .collect())
}

/// Where a parameter point sits relative to the sparsity requirements of the
/// estimators. Ratios below one are flagged; the flags are advisory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityReport {
    /// `ρ·L·max(N, J) / (M²·ln(N + J + L))`, the `LCA-SoR` requirement.
    pub response_ratio: f64,
    /// `ρ²·N·J·L / (M⁴·ln(N + J + L))`, the Gram-based requirement.
    pub gram_ratio: f64,
    pub response_below: bool,
    pub gram_below: bool,
}

pub fn check_sparsity_regime(params: &ModelParams) -> SparsityReport {
    let (n, j, l) = (params.n as f64, params.j as f64, params.l as f64);
    let m = f64::from(params.m);
    let log = libm::log(n + j + l);
    let response_ratio = params.rho * l * n.max(j) / (m * m * log);
    let gram_ratio = params.rho * params.rho * n * j * l / (m * m * m * m * log);
    SparsityReport {
        response_ratio,
        gram_ratio,
        response_below: response_ratio < 1.0,
        gram_below: gram_ratio < 1.0,
    }
}
