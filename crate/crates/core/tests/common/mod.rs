#![allow(dead_code)]

use mlcm_core::model::{population_response, sample_item_params, sample_partition};
use mlcm_core::{ItemParameterSet, Matrix, Partition, ResponseTensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cyclic Jacobi eigenvalue iteration. Returns eigenvalues and the matrix of
/// eigenvectors (columns), unsorted.
pub fn jacobi_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = Matrix::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-26 * (1.0 + a.norm_squared()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Singular values from the Jacobi eigenvalues of `m' m`, descending.
pub fn jacobi_singular_values(m: &Matrix) -> Vec<f64> {
    let gram = if m.nrows() >= m.ncols() { m.transpose() * m } else { m * m.transpose() };
    let (vals, _) = jacobi_eigen(&gram);
    let mut s: Vec<f64> = vals.into_iter().map(|x| x.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// A noiseless instance: population matrices used directly as responses.
pub struct Noiseless {
    pub partition: Partition,
    pub thetas: ItemParameterSet,
    pub responses: ResponseTensor,
}

pub fn noiseless(n: usize, j: usize, k: usize, l: usize, seed: u64) -> Noiseless {
    let mut r = rng(seed);
    let partition = sample_partition(n, k, &mut r).unwrap();
    let thetas = sample_item_params(j, k, l, 5.0, 5, &mut r).unwrap();
    let pop = population_response(&partition, &thetas).unwrap();
    let responses = pop.as_responses(5).unwrap();
    Noiseless { partition, thetas, responses }
}

/// Smallest singular value relative to the largest.
pub fn relative_sigma_min(m: &Matrix) -> f64 {
    let s = jacobi_singular_values(m);
    s[s.len() - 1] / s[0]
}

/// Lemma-1 rank conditions: rank(Σ Θ_l) = K and rank(Σ Θ_l'Θ_l) = K.
pub fn rank_conditions_hold(thetas: &ItemParameterSet) -> bool {
    let k = thetas.k();
    let mut gram = Matrix::zeros(k, k);
    for t in thetas.layers() {
        gram += t.transpose() * t;
    }
    relative_sigma_min(&thetas.sum()) > 1e-6 && relative_sigma_min(&gram) > 1e-6
}
