//! Lloyd's k-means with k-means++ seeding and restarts.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::model::Partition;
use crate::Matrix;

/// Settings shared by every k-means call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    /// Independent seeded runs; the one with the lowest inertia wins.
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once no center moves farther than this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { restarts: 10, max_iters: 300, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Partition,
    /// `k × dim`, one center per row.
    pub centers: Matrix,
    /// Sum of squared distances from points to their assigned centers.
    pub inertia: f64,
    /// Lloyd iterations of the winning run.
    pub iterations: usize,
    pub restarts_used: usize,
}

/// Row-major copy of the points, so distance loops walk contiguous memory.
struct Points {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Points {
    fn from_rows(m: &Matrix) -> Self {
        let (n, dim) = m.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Self { data, n, dim }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Run {
    labels: Vec<usize>,
    centers: Vec<f64>,
    inertia: f64,
    iterations: usize,
    /// Inertia after each assignment step.
    #[cfg_attr(not(test), allow(dead_code))]
    trace: Vec<f64>,
}

/// Index of the nearest center; ties go to the lowest index.
fn nearest(point: &[f64], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus<R: Rng + ?Sized>(pts: &Points, k: usize, rng: &mut R) -> Vec<f64> {
    let dim = pts.dim;
    let mut centers = Vec::with_capacity(k * dim);
    centers.extend_from_slice(pts.row(rng.random_range(0..pts.n)));
    let mut d2: Vec<f64> = (0..pts.n).map(|i| sq_dist(pts.row(i), &centers[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = pts.n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..pts.n)
        };
        let start = centers.len();
        centers.extend_from_slice(pts.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(pts.row(i), &centers[start..]));
        }
    }
    centers
}

/// Moves the farthest points into empty clusters until none is empty.
fn refill_empty(pts: &Points, labels: &mut [usize], dists: &mut [f64], counts: &mut [usize]) {
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let mut far = None;
        for i in 0..pts.n {
            if counts[labels[i]] > 1 && far.is_none_or(|f: usize| dists[i] > dists[f]) {
                far = Some(i);
            }
        }
        let Some(i) = far else { return };
        counts[labels[i]] -= 1;
        labels[i] = empty;
        counts[empty] = 1;
        dists[i] = 0.0;
    }
}

fn update_centers(pts: &Points, labels: &[usize], counts: &[usize], k: usize) -> Vec<f64> {
    let dim = pts.dim;
    let mut centers = vec![0.0; k * dim];
    for (i, &c) in labels.iter().enumerate() {
        for (acc, x) in centers[c * dim..(c + 1) * dim].iter_mut().zip(pts.row(i)) {
            *acc += x;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        let inv = 1.0 / count as f64;
        centers[c * dim..(c + 1) * dim].iter_mut().for_each(|x| *x *= inv);
    }
    centers
}

fn lloyd<R: Rng + ?Sized>(pts: &Points, k: usize, cfg: &KMeansConfig, rng: &mut R) -> Run {
    let dim = pts.dim;
    let mut centers = seed_plus_plus(pts, k, rng);
    let mut labels = vec![0; pts.n];
    let mut dists = vec![0.0; pts.n];
    let mut counts = vec![0; k];
    let mut iterations = 0;
    let mut trace = Vec::new();
    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        for i in 0..pts.n {
            let (c, d) = nearest(pts.row(i), &centers, dim);
            labels[i] = c;
            dists[i] = d;
            counts[c] += 1;
        }
        refill_empty(pts, &mut labels, &mut dists, &mut counts);
        trace.push(dists.iter().sum());
        let next = update_centers(pts, &labels, &counts, k);
        iterations += 1;
        let shift = centers
            .chunks_exact(dim)
            .zip(next.chunks_exact(dim))
            .map(|(a, b)| sq_dist(a, b))
            .fold(0.0, f64::max);
        centers = next;
        if libm::sqrt(shift) < cfg.tol || iterations >= cfg.max_iters {
            break;
        }
    }
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(pts.row(i), &centers[c * dim..(c + 1) * dim]))
        .sum();
    Run { labels, centers, inertia, iterations, trace }
}

/// Clusters the rows of `points` into `k` groups.
///
/// Every restart consumes `rng` in turn; the lowest inertia wins, ties going
/// to the earlier restart. Output clusters are never empty.
pub fn kmeans<R: Rng + ?Sized>(points: &Matrix, k: usize, cfg: &KMeansConfig, rng: &mut R) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(invalid!("cannot form {k} clusters from {n} points"));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("k-means points"));
    }
    if cfg.restarts == 0 || cfg.max_iters == 0 {
        return Err(invalid!("k-means needs at least one restart and one iteration"));
    }
    let pts = Points::from_rows(points);
    let mut best: Option<Run> = None;
    for _ in 0..cfg.restarts {
        let run = lloyd(&pts, k, cfg, rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(KMeansResult {
        labels: Partition::new(best.labels, k)?,
        centers: Matrix::from_row_slice(k, pts.dim, &best.centers),
        inertia: best.inertia,
        iterations: best.iterations,
        restarts_used: cfg.restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn scatter(points: &Matrix, labels: &[usize], k: usize) -> f64 {
        let mut total = 0.0;
        for c in 0..k {
            let rows: Vec<usize> = (0..points.nrows()).filter(|&i| labels[i] == c).collect();
            if rows.is_empty() {
                return f64::INFINITY;
            }
            for d in 0..points.ncols() {
                let mean = rows.iter().map(|&i| points[(i, d)]).sum::<f64>() / rows.len() as f64;
                total += rows.iter().map(|&i| (points[(i, d)] - mean).powi(2)).sum::<f64>();
            }
        }
        total
    }

    #[test]
    fn separated_clouds() {
        let mut pts = Matrix::zeros(10, 2);
        for i in 0..5 {
            pts[(i, 0)] = 0.1 * i as f64;
            pts[(i + 5, 0)] = 100.0 + 0.1 * i as f64;
            pts[(i + 5, 1)] = 0.05 * i as f64;
        }
        let res = kmeans(&pts, 2, &KMeansConfig::default(), &mut rng(1)).unwrap();
        let l = res.labels.labels();
        assert!(l[..5].iter().all(|&c| c == l[0]) && l[5..].iter().all(|&c| c == l[5]));
        assert_ne!(l[0], l[5]);
        assert!((res.inertia - scatter(&pts, l, 2)).abs() < 1e-9);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = Matrix::from_row_slice(4, 2, &[0., 0., 2., 0., 2., 2., 0., 2.]);
        let res = kmeans(&pts, 1, &KMeansConfig::default(), &mut rng(2)).unwrap();
        assert_eq!(res.centers, Matrix::from_row_slice(1, 2, &[1.0, 1.0]));
        assert!((res.inertia - 8.0).abs() < 1e-12);
    }

    #[test]
    fn matches_exhaustive_two_way_split() {
        let pts = Matrix::from_row_slice(6, 2, &[0.0, 0.0, 1.0, 0.2, 0.4, 1.1, 3.0, 3.5, 3.6, 2.9, 2.2, 1.9]);
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << 6) - 1 {
            let labels: Vec<usize> = (0..6).map(|i| ((mask >> i) & 1) as usize).collect();
            best = best.min(scatter(&pts, &labels, 2));
        }
        let res = kmeans(&pts, 2, &KMeansConfig::default(), &mut rng(3)).unwrap();
        assert!((res.inertia - best).abs() < 1e-12, "{} vs {best}", res.inertia);
    }

    #[test]
    fn duplicate_points_fill_every_cluster() {
        let pts = Matrix::zeros(5, 3);
        let res = kmeans(&pts, 3, &KMeansConfig::default(), &mut rng(4)).unwrap();
        assert!(res.labels.is_covering());
        assert_eq!(res.inertia, 0.0);
    }

    #[test]
    fn errors() {
        let pts = Matrix::zeros(2, 2);
        assert!(kmeans(&pts, 3, &KMeansConfig::default(), &mut rng(0)).is_err());
        let mut bad = Matrix::zeros(3, 2);
        bad[(1, 1)] = f64::INFINITY;
        assert!(matches!(kmeans(&bad, 2, &KMeansConfig::default(), &mut rng(0)), Err(Error::NonFinite(_))));
    }

    #[test]
    fn inertia_never_increases() {
        let pts = Matrix::from_fn(60, 2, |i, j| libm::sin((i * 31 + j * 17) as f64) * (1 + i % 3) as f64);
        let pts = Points::from_rows(&pts);
        let cfg = KMeansConfig::default();
        let mut r = rng(5);
        for _ in 0..10 {
            let run = lloyd(&pts, 4, &cfg, &mut r);
            for w in run.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", run.trace);
            }
            assert!(run.inertia <= *run.trace.last().unwrap() + 1e-12);
        }
    }

    #[test]
    fn converged_points_sit_at_nearest_center() {
        let pts = Matrix::from_fn(50, 3, |i, j| libm::cos((i * 7 + j * 3) as f64) + (i % 4) as f64);
        let res = kmeans(&pts, 4, &KMeansConfig::default(), &mut rng(6)).unwrap();
        for i in 0..50 {
            let own = (pts.row(i) - res.centers.row(res.labels.labels()[i])).norm_squared();
            for c in 0..4 {
                assert!(own <= (pts.row(i) - res.centers.row(c)).norm_squared() + 1e-12);
            }
        }
    }

    #[test]
    fn seeded_determinism() {
        let pts = Matrix::from_fn(40, 3, |i, j| ((i * 7 + j * 13) % 11) as f64);
        let cfg = KMeansConfig::default();
        let a = kmeans(&pts, 4, &cfg, &mut rng(9)).unwrap();
        let b = kmeans(&pts, 4, &cfg, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }
}
