//! Domain types of the multi-layer latent class model and its sampler.
//!
//! A model is a partition of `N` subjects into `K` classes together with `L`
//! item parameter matrices `Θ_l ∈ [0, M]^{J×K}`. Subject `i` in class `k`
//! answers item `j` on layer `l` with a `Binomial(M, Θ_l(j, k) / M)` draw.
//!
//! Class indices are 0-based everywhere in this crate; the 1-based form only
//! appears in the file formats of the `mlcm` crate.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::Open01;
use rand::Rng;

use crate::error::{invalid, mismatch, Error, Result};
use crate::Matrix;

/// Size parameters of a multi-layer latent class model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Subjects.
    pub n: usize,
    /// Items.
    pub j: usize,
    /// Latent classes.
    pub k: usize,
    /// Layers.
    pub l: usize,
    /// Maximum response level.
    pub m: u32,
    /// Sparsity parameter, the largest admissible item parameter.
    pub rho: f64,
}

impl ModelParams {
    pub fn new(n: usize, j: usize, k: usize, l: usize, m: u32, rho: f64) -> Result<Self> {
        let params = Self { n, j, k, l, m, rho };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.j == 0 || self.k == 0 || self.l == 0 || self.m == 0 {
            return Err(invalid!("N, J, K, L and M must all be positive: {self:?}"));
        }
        if self.k > self.n.min(self.j) {
            return Err(invalid!("K = {} exceeds min(N, J) = {}", self.k, self.n.min(self.j)));
        }
        check_rho(self.rho, self.m)
    }
}

fn check_rho(rho: f64, m: u32) -> Result<()> {
    if !(rho > 0.0 && rho <= f64::from(m)) {
        return Err(invalid!("rho = {rho} must lie in (0, {m}]"));
    }
    Ok(())
}

/// Assignment of subjects to latent classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Builds a partition from 0-based labels, each of which must be `< k`.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid!("a partition needs at least one class"));
        }
        if let Some((i, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= k) {
            return Err(invalid!("label {c} of subject {i} is outside 0..{k}"));
        }
        Ok(Self { labels, k })
    }

    /// Builds a partition from 1-based labels; the class count is the largest label.
    pub fn from_one_based(labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return Err(invalid!("1-based labels must be positive"));
        }
        let k = labels.iter().copied().max().unwrap_or(0);
        Self::new(labels.iter().map(|&c| c - 1).collect(), k)
    }

    /// Recovers a partition from a one-hot classification matrix `Z`.
    pub fn from_one_hot(z: &Matrix) -> Result<Self> {
        let mut labels = Vec::with_capacity(z.nrows());
        for (i, row) in z.row_iter().enumerate() {
            let ones: Vec<usize> = (0..row.len()).filter(|&c| row[c] == 1.0).collect();
            let zeros = row.iter().filter(|&&x| x == 0.0).count();
            if ones.len() != 1 || zeros + 1 != row.len() {
                return Err(invalid!("row {i} of Z is not one-hot"));
            }
            labels.push(ones[0]);
        }
        Self::new(labels, z.ncols())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_based_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|&c| c + 1).collect()
    }

    /// Number of subjects.
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Number of classes, including empty ones.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }

    /// True when every class has at least one member.
    pub fn is_covering(&self) -> bool {
        self.class_sizes().iter().all(|&s| s > 0)
    }

    /// Members of each class, in increasing subject order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// The `N×K` classification matrix.
    pub fn to_one_hot(&self) -> Matrix {
        let mut z = Matrix::zeros(self.n(), self.k);
        for (i, &c) in self.labels.iter().enumerate() {
            z[(i, c)] = 1.0;
        }
        z
    }

    /// Applies `perm` to the labels: subject in class `c` moves to `perm[c]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k {
            return Err(mismatch!("permutation of length {} for {} classes", perm.len(), self.k));
        }
        Self::new(self.labels.iter().map(|&c| perm[c]).collect(), self.k)
    }
}

/// The `L` item parameter matrices, each `J×K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemParameterSet {
    thetas: Vec<Matrix>,
}

impl ItemParameterSet {
    /// Validates that there is at least one layer, all layers share a shape and
    /// every entry is a finite nonnegative number.
    pub fn new(thetas: Vec<Matrix>) -> Result<Self> {
        let first = thetas.first().ok_or_else(|| invalid!("need at least one layer"))?;
        let shape = first.shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(invalid!("empty item parameter matrix"));
        }
        for (l, t) in thetas.iter().enumerate() {
            if t.shape() != shape {
                return Err(mismatch!("layer {l} has shape {:?}, expected {shape:?}", t.shape()));
            }
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("item parameters"));
            }
            if t.iter().any(|&x| x < 0.0) {
                return Err(invalid!("negative item parameter in layer {l}"));
            }
        }
        Ok(Self { thetas })
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.thetas
    }

    pub fn into_layers(self) -> Vec<Matrix> {
        self.thetas
    }

    pub fn j(&self) -> usize {
        self.thetas[0].nrows()
    }

    pub fn k(&self) -> usize {
        self.thetas[0].ncols()
    }

    pub fn num_layers(&self) -> usize {
        self.thetas.len()
    }

    /// Largest entry over all layers, the empirical sparsity parameter.
    pub fn max_entry(&self) -> f64 {
        self.thetas.iter().flat_map(|t| t.iter().copied()).fold(0.0, f64::max)
    }

    /// `Σ_l Θ_l`.
    pub fn sum(&self) -> Matrix {
        let mut acc = Matrix::zeros(self.j(), self.k());
        for t in &self.thetas {
            acc += t;
        }
        acc
    }
}

/// The observed responses: `L` matrices of shape `N×J` with entries in `{0, …, M}`.
///
/// [`ResponseTensor::from_real_layers`] admits real entries in `[0, M]` so that
/// population matrices can be fed to the estimators directly.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTensor {
    layers: Vec<Matrix>,
    m: u32,
}

impl ResponseTensor {
    /// Integer responses in `{0, …, M}`.
    pub fn new(layers: Vec<Matrix>, m: u32) -> Result<Self> {
        let tensor = Self::from_real_layers(layers, m)?;
        for (l, layer) in tensor.layers.iter().enumerate() {
            if layer.iter().any(|&x| libm::trunc(x) != x) {
                return Err(invalid!("layer {l} contains a non-integer response"));
            }
        }
        Ok(tensor)
    }

    /// Real-valued responses in `[0, M]`.
    pub fn from_real_layers(layers: Vec<Matrix>, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(invalid!("M must be positive"));
        }
        let first = layers.first().ok_or_else(|| invalid!("need at least one layer"))?;
        let shape = first.shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(invalid!("empty response matrix"));
        }
        let ceiling = f64::from(m);
        for (l, layer) in layers.iter().enumerate() {
            if layer.shape() != shape {
                return Err(mismatch!("layer {l} has shape {:?}, expected {shape:?}", layer.shape()));
            }
            if layer.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("responses"));
            }
            if layer.iter().any(|&x| !(0.0..=ceiling).contains(&x)) {
                return Err(invalid!("layer {l} has a response outside [0, {m}]"));
            }
        }
        Ok(Self { layers, m })
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn j(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

/// Expected responses `𝓡_l = Z Θ_l'`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationResponse {
    layers: Vec<Matrix>,
}

impl PopulationResponse {
    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Matrix> {
        self.layers
    }

    /// Wraps the population matrices as a real-valued response tensor.
    pub fn as_responses(&self, m: u32) -> Result<ResponseTensor> {
        ResponseTensor::from_real_layers(self.layers.clone(), m)
    }
}

/// Draws a partition with every subject uniform over `k` classes, redrawing
/// the whole assignment until no class is empty.
pub fn sample_partition<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Partition> {
    if k == 0 || n < k {
        return Err(invalid!("cannot split {n} subjects into {k} nonempty classes"));
    }
    let mut labels = vec![0; n];
    let mut sizes = vec![0usize; k];
    loop {
        sizes.iter_mut().for_each(|s| *s = 0);
        for label in labels.iter_mut() {
            *label = rng.random_range(0..k);
            sizes[*label] += 1;
        }
        if sizes.iter().all(|&s| s > 0) {
            return Partition::new(labels, k);
        }
    }
}

/// Draws `Θ_l(j, k) = rho · u` with `u ~ Uniform(0, 1)` independently.
pub fn sample_item_params<R: Rng + ?Sized>(
    j: usize,
    k: usize,
    l: usize,
    rho: f64,
    m: u32,
    rng: &mut R,
) -> Result<ItemParameterSet> {
    check_rho(rho, m)?;
    if j == 0 || k == 0 || l == 0 {
        return Err(invalid!("J, K and L must be positive"));
    }
    let thetas = (0..l)
        .map(|_| {
            Matrix::from_fn(j, k, |_, _| {
                let u: f64 = rng.sample(Open01);
                rho * u
            })
        })
        .collect();
    ItemParameterSet::new(thetas)
}

/// `𝓡_l(i, j) = Θ_l(j, ℓ(i))` for every layer.
pub fn population_response(z: &Partition, thetas: &ItemParameterSet) -> Result<PopulationResponse> {
    if z.k() != thetas.k() {
        return Err(mismatch!("partition has {} classes, item parameters {}", z.k(), thetas.k()));
    }
    let labels = z.labels();
    let layers = thetas
        .layers()
        .iter()
        .map(|theta| Matrix::from_fn(labels.len(), theta.nrows(), |i, j| theta[(j, labels[i])]))
        .collect();
    Ok(PopulationResponse { layers })
}

/// One `Binomial(m, p)` draw as a sum of `m` Bernoulli trials.
fn binomial<R: Rng + ?Sized>(m: u32, p: f64, rng: &mut R) -> u32 {
    (0..m).filter(|_| rng.random::<f64>() < p).count() as u32
}

/// Draws `R_l(i, j) ~ Binomial(M, 𝓡_l(i, j) / M)` independently.
///
/// Entries are visited layer by layer, row-major within a layer.
pub fn sample_responses<R: Rng + ?Sized>(
    pop: &PopulationResponse,
    m: u32,
    rng: &mut R,
) -> Result<ResponseTensor> {
    if m == 0 {
        return Err(invalid!("M must be positive"));
    }
    let ceiling = f64::from(m);
    for layer in pop.layers() {
        if layer.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("population responses"));
        }
        if layer.iter().any(|&x| !(0.0..=ceiling).contains(&x)) {
            return Err(invalid!("population response outside [0, {m}]"));
        }
    }
    let layers = pop
        .layers()
        .iter()
        .map(|expected| {
            let (n, j) = expected.shape();
            let mut out = Matrix::zeros(n, j);
            for i in 0..n {
                for c in 0..j {
                    out[(i, c)] = f64::from(binomial(m, expected[(i, c)] / ceiling, rng));
                }
            }
            out
        })
        .collect();
    ResponseTensor::new(layers, m)
}

/// A complete synthetic draw: truth plus observed responses.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub params: ModelParams,
    pub partition: Partition,
    pub thetas: ItemParameterSet,
    pub responses: ResponseTensor,
}

/// Samples partition, item parameters and responses, each from its own stream.
pub fn simulate<R: Rng + ?Sized>(
    params: &ModelParams,
    partition_rng: &mut R,
    item_rng: &mut R,
    response_rng: &mut R,
) -> Result<SyntheticDataset> {
    params.validate()?;
    let partition = sample_partition(params.n, params.k, partition_rng)?;
    let thetas = sample_item_params(params.j, params.k, params.l, params.rho, params.m, item_rng)?;
    let pop = population_response(&partition, &thetas)?;
    let responses = sample_responses(&pop, params.m, response_rng)?;
    Ok(SyntheticDataset { params: *params, partition, thetas, responses })
}
