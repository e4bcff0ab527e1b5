//! Multi-layer latent class model for polytomous categorical responses.
//!
//! The crate covers the full pipeline for `L` response matrices that share
//! subjects, items and a latent class structure:
//!
//! * [`model`]: domain types and the binomial generative sampler,
//! * [`aggregate`]: sum of responses, sum of Gram matrices and its debiased
//!   variant, plus the per-layer graphs used for modularity,
//! * [`spectral`]: truncated SVD and magnitude-ordered eigendecomposition,
//! * [`kmeans`]: Lloyd's algorithm with k-means++ seeding,
//! * [`estimators`]: the three spectral estimators and three raw-matrix
//!   baselines,
//! * [`modularity`]: averaged modularity and selection of the class count,
//! * [`metrics`]: clustering error, Hamming error, NMI, ARI and relative
//!   l2 error.
//!
//! Everything here is `no_std` (with `alloc`) and pure given an explicit
//! random source. File formats, the replication harness and the CLI live in
//! the `mlcm` crate.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;

pub mod aggregate;
pub mod error;
pub mod estimators;
pub mod kmeans;
pub mod metrics;
pub mod model;
pub mod modularity;
pub mod spectral;

pub use error::{Error, Result};
pub use estimators::{FitResult, Fitter, Method};
pub use kmeans::{KMeansConfig, KMeansResult};
pub use metrics::MetricReport;
pub use model::{ItemParameterSet, ModelParams, Partition, PopulationResponse, ResponseTensor};
pub use modularity::ModularityCurve;

/// Dense column-major real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
