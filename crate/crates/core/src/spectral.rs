//! Truncated SVD and magnitude-ordered symmetric eigendecomposition.
//!
//! Both are computed as a full dense decomposition that is sorted and then
//! truncated. [`SvdBasis`] and [`EigenBasis`] keep the sorted full
//! decomposition around so several ranks can be read off one factorization.
//!
//! Every returned vector is sign-normalized: its entry of largest absolute
//! value is positive, ties going to the lowest index.

use alloc::vec::Vec;
use core::cmp::Ordering;

use log::warn;
use nalgebra::linalg::{SymmetricEigen, SVD};
use nalgebra::Dyn;

use crate::error::{invalid, Error, Result};
use crate::{Matrix, Vector};

/// Relative tolerance under which two consecutive spectrum values are treated as tied.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Relative tolerance for the symmetry check of [`top_k_eigen_by_magnitude`].
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Relative residual above which a factorization is rejected.
const RESIDUAL_TOL: f64 = 1e-11;
/// Convergence thresholds tried in turn. At the tightest one nalgebra's
/// iterations occasionally stop with factors that do not reproduce the
/// input; a slightly looser threshold then converges properly.
const CONVERGENCE_EPS: [f64; 3] = [f64::EPSILON, 1e-14, 1e-13];
const MAX_SWEEPS: usize = 100_000;

/// Two fixed, well-spread probe vectors of length `n`.
fn probes(n: usize) -> [Vector; 2] {
    [
        Vector::from_fn(n, |i, _| 1.0 + libm::sin(i as f64 * 0.7548776662)),
        Vector::from_fn(n, |i, _| libm::cos(i as f64 * 1.3247179572 + 0.5)),
    ]
}

/// Largest `‖m·x − f(x)‖ / (‖m‖_F ‖x‖)` over the probes, where `f` applies
/// the factorization. O(size²), unlike a full reconstruction.
fn probe_residual(m: &Matrix, apply: impl Fn(&Vector) -> Vector) -> f64 {
    let scale = m.norm();
    probes(m.ncols())
        .iter()
        .map(|x| (m * x - apply(x)).norm() / (scale * x.norm()))
        .fold(0.0, f64::max)
}

/// SVD of `m` scaled to unit max-norm, checked against probe products.
fn verified_svd(m: &Matrix) -> Result<SVD<f64, Dyn, Dyn>> {
    let scale = max_abs(m);
    if scale == 0.0 {
        return Ok(SVD::new(m.clone(), true, true));
    }
    let a = m / scale;
    let mut worst = 0.0;
    for eps in CONVERGENCE_EPS {
        let Some(mut svd) = SVD::try_new(a.clone(), true, true, eps, MAX_SWEEPS) else {
            continue;
        };
        let (Some(u), Some(v_t)) = (&svd.u, &svd.v_t) else {
            return Err(Error::Degenerate("SVD returned no singular vectors".into()));
        };
        let sigma = &svd.singular_values;
        let residual = probe_residual(&a, |x| u * (v_t * x).component_mul(sigma));
        if residual <= RESIDUAL_TOL {
            svd.singular_values *= scale;
            return Ok(svd);
        }
        worst = residual;
    }
    Err(Error::Degenerate(alloc::format!("SVD did not converge (relative residual {worst:e})")))
}

/// Eigendecomposition of `m` scaled to unit max-norm, checked against probe products.
fn verified_eigen(m: &Matrix) -> Result<SymmetricEigen<f64, Dyn>> {
    let scale = max_abs(m);
    if scale == 0.0 {
        return Ok(SymmetricEigen::new(m.clone()));
    }
    let a = m / scale;
    let mut worst = 0.0;
    for eps in CONVERGENCE_EPS {
        let Some(mut eig) = SymmetricEigen::try_new(a.clone(), eps, MAX_SWEEPS) else {
            continue;
        };
        let (v, lambda) = (&eig.eigenvectors, &eig.eigenvalues);
        let residual = probe_residual(&a, |x| v * v.tr_mul(x).component_mul(lambda));
        if residual <= RESIDUAL_TOL {
            eig.eigenvalues *= scale;
            return Ok(eig);
        }
        worst = residual;
    }
    Err(Error::Degenerate(alloc::format!("eigendecomposition did not converge (relative residual {worst:e})")))
}

/// Leading `k` singular triplets, `m ≈ u · diag(sigma) · b'`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub u: Matrix,
    pub sigma: Vector,
    pub b: Matrix,
    /// `σ_k` and `σ_{k+1}` coincide, so the basis is not unique.
    pub degenerate: bool,
}

/// The `k` eigenpairs of largest magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedEigen {
    pub v: Matrix,
    pub lambda: Vector,
    /// `|λ_k|` and `|λ_{k+1}|` coincide, so the basis is not unique.
    pub degenerate: bool,
}

fn check_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Flips `col` so its largest-magnitude entry is positive. Returns whether it flipped.
fn normalize_sign(mut col: nalgebra::DVectorViewMut<'_, f64>) -> bool {
    let mut best = 0;
    let mut best_abs = f64::NEG_INFINITY;
    for (i, x) in col.iter().enumerate() {
        if x.abs() > best_abs {
            best = i;
            best_abs = x.abs();
        }
    }
    if col.len() > 0 && col[best] < 0.0 {
        col.neg_mut();
        true
    } else {
        false
    }
}

fn ties(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= DEGENERACY_TOL * scale.max(1.0)
}

/// Full SVD with singular values sorted in nonincreasing order.
#[derive(Debug, Clone)]
pub struct SvdBasis {
    u: Matrix,
    sigma: Vector,
    b: Matrix,
}

impl SvdBasis {
    pub fn new(m: &Matrix) -> Result<Self> {
        if m.is_empty() {
            return Err(invalid!("cannot decompose an empty matrix"));
        }
        check_finite(m, "matrix passed to SVD")?;
        let svd = verified_svd(m)?;
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::Degenerate("SVD returned no singular vectors".into())),
        };
        let values = svd.singular_values;
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));

        let mut su = Matrix::zeros(u.nrows(), order.len());
        let mut sb = Matrix::zeros(v_t.ncols(), order.len());
        let mut sigma = Vector::zeros(order.len());
        for (dst, &src) in order.iter().enumerate() {
            su.set_column(dst, &u.column(src));
            sb.set_column(dst, &v_t.row(src).transpose());
            sigma[dst] = values[src];
            if normalize_sign(su.column_mut(dst)) {
                sb.column_mut(dst).neg_mut();
            }
        }
        Ok(Self { u: su, sigma, b: sb })
    }

    /// Number of singular values, `min(N, J)`.
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn singular_values(&self) -> &Vector {
        &self.sigma
    }

    pub fn is_degenerate(&self, k: usize) -> bool {
        k < self.len() && ties(self.sigma[k - 1], self.sigma[k], self.sigma[0])
    }

    /// `σ_k / σ_{k+1}`, or `None` when there is no `(k+1)`-th value.
    pub fn gap(&self, k: usize) -> Option<f64> {
        (k >= 1 && k < self.len()).then(|| self.sigma[k - 1] / self.sigma[k])
    }

    pub fn truncate(&self, k: usize) -> Result<TruncatedSvd> {
        if k == 0 || k > self.len() {
            return Err(invalid!("rank {k} outside 1..={}", self.len()));
        }
        let degenerate = self.is_degenerate(k);
        if degenerate {
            warn!("singular values {k} and {} coincide; truncated basis is arbitrary", k + 1);
        }
        Ok(TruncatedSvd {
            u: self.u.columns(0, k).into_owned(),
            sigma: self.sigma.rows(0, k).into_owned(),
            b: self.b.columns(0, k).into_owned(),
            degenerate,
        })
    }
}

/// Full symmetric eigendecomposition sorted by decreasing `|λ|`.
///
/// Ties in magnitude put the positive eigenvalue first.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    v: Matrix,
    lambda: Vector,
}

impl EigenBasis {
    pub fn new(m: &Matrix) -> Result<Self> {
        if m.is_empty() || !m.is_square() {
            return Err(invalid!("eigendecomposition needs a nonempty square matrix, got {:?}", m.shape()));
        }
        check_finite(m, "matrix passed to eigendecomposition")?;
        let asym = m
            .row_iter()
            .enumerate()
            .flat_map(|(i, row)| (0..i).map(move |j| (row[j] - m[(j, i)]).abs()))
            .fold(0.0, f64::max);
        if asym > SYMMETRY_TOL * max_abs(m).max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        let eig = verified_eigen(m)?;
        let values = eig.eigenvalues;
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| {
            values[b]
                .abs()
                .partial_cmp(&values[a].abs())
                .unwrap_or(Ordering::Equal)
                .then(values[b].partial_cmp(&values[a]).unwrap_or(Ordering::Equal))
                .then(a.cmp(&b))
        });
        let mut v = Matrix::zeros(m.nrows(), order.len());
        let mut lambda = Vector::zeros(order.len());
        for (dst, &src) in order.iter().enumerate() {
            v.set_column(dst, &eig.eigenvectors.column(src));
            lambda[dst] = values[src];
            normalize_sign(v.column_mut(dst));
        }
        Ok(Self { v, lambda })
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn eigenvalues(&self) -> &Vector {
        &self.lambda
    }

    pub fn is_degenerate(&self, k: usize) -> bool {
        k < self.len() && ties(self.lambda[k - 1].abs(), self.lambda[k].abs(), self.lambda[0].abs())
    }

    /// `|λ_k| / |λ_{k+1}|`, or `None` when there is no `(k+1)`-th value.
    pub fn gap(&self, k: usize) -> Option<f64> {
        (k >= 1 && k < self.len()).then(|| self.lambda[k - 1].abs() / self.lambda[k].abs())
    }

    pub fn truncate(&self, k: usize) -> Result<TruncatedEigen> {
        if k == 0 || k > self.len() {
            return Err(invalid!("rank {k} outside 1..={}", self.len()));
        }
        let degenerate = self.is_degenerate(k);
        if degenerate {
            warn!("eigenvalues {k} and {} tie in magnitude; truncated basis is arbitrary", k + 1);
        }
        Ok(TruncatedEigen {
            v: self.v.columns(0, k).into_owned(),
            lambda: self.lambda.rows(0, k).into_owned(),
            degenerate,
        })
    }
}

/// The `k` leading singular triplets of `m`.
pub fn top_k_svd(m: &Matrix, k: usize) -> Result<TruncatedSvd> {
    let limit = m.nrows().min(m.ncols());
    if k == 0 || k > limit {
        return Err(invalid!("rank {k} outside 1..={limit}"));
    }
    SvdBasis::new(m)?.truncate(k)
}

/// The `k` eigenpairs of the symmetric matrix `m` with largest `|λ|`.
pub fn top_k_eigen_by_magnitude(m: &Matrix, k: usize) -> Result<TruncatedEigen> {
    if k == 0 || k > m.nrows() {
        return Err(invalid!("rank {k} outside 1..={}", m.nrows()));
    }
    EigenBasis::new(m)?.truncate(k)
}
