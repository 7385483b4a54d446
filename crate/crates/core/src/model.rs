//! Data and configuration types, the softmax link, and forward simulation of
//! the generative model: latent inputs, per-(variable, category) GP weight
//! functions, softmax probabilities and sampled categories.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram, KernelParams};
use crate::linalg::{jittered_cholesky, Matrix};
use crate::scalar::Scalar;

/// N observations of D categorical variables; `None` marks a missing value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalDataset {
    n_obs: usize,
    cardinalities: Vec<usize>,
    values: Vec<Option<usize>>,
}

impl CategoricalDataset {
    /// `values` is row-major, `n_obs × cardinalities.len()`.
    pub fn new(cardinalities: Vec<usize>, values: Vec<Option<usize>>) -> Result<Self> {
        let d = cardinalities.len();
        if d == 0 {
            return Err(Error::InvalidDataset("dataset has no variables".into()));
        }
        if let Some((i, k)) = cardinalities.iter().enumerate().find(|(_, k)| **k < 2) {
            return Err(Error::InvalidDataset(format!(
                "variable {i} has cardinality {k}, need at least 2"
            )));
        }
        if values.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                expected: d * (values.len() / d + 1),
                found: values.len(),
            });
        }
        for (idx, v) in values.iter().enumerate() {
            if let Some(v) = v {
                let k = cardinalities[idx % d];
                if *v >= k {
                    return Err(Error::InvalidDataset(format!(
                        "value {v} at row {}, variable {} exceeds cardinality {k}",
                        idx / d,
                        idx % d
                    )));
                }
            }
        }
        Ok(Self {
            n_obs: values.len() / d,
            cardinalities,
            values,
        })
    }

    pub fn from_rows(cardinalities: Vec<usize>, rows: &[Vec<Option<usize>>]) -> Result<Self> {
        let d = cardinalities.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
        Self::new(cardinalities, rows.iter().flatten().copied().collect())
    }

    #[inline]
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    #[inline]
    pub fn n_vars(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    #[inline]
    pub fn get(&self, n: usize, d: usize) -> Option<usize> {
        self.values[n * self.n_vars() + d]
    }

    pub fn row(&self, n: usize) -> &[Option<usize>] {
        let d = self.n_vars();
        &self.values[n * d..(n + 1) * d]
    }

    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Checks that every observation has at least one non-missing value.
    pub fn require_observed_rows(&self) -> Result<()> {
        match (0..self.n_obs).find(|&n| self.row(n).iter().all(Option::is_none)) {
            Some(n) => Err(Error::InvalidDataset(format!("observation {n} has no observed values"))),
            None => Ok(()),
        }
    }

    /// Copy of the dataset with rows permuted so that row `i` is old row `order[i]`.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        let values = order.iter().flat_map(|&n| self.row(n).iter().copied()).collect();
        Self {
            n_obs: order.len(),
            cardinalities: self.cardinalities.clone(),
            values,
        }
    }
}

/// Model and optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig<T> {
    /// Latent dimension Q.
    pub latent_dim: usize,
    /// Number of inducing inputs M.
    pub n_inducing: usize,
    /// Prior variance of every latent coordinate.
    pub prior_var_x: T,
    pub mc_samples_train: usize,
    pub mc_samples_eval: usize,
    pub step_size: T,
    pub max_iters: usize,
    /// Relative change of the smoothed ELBO below which fitting stops; zero disables.
    pub convergence_tol: T,
    /// Window of the moving average used by the convergence test.
    pub smoothing_window: usize,
    /// Keep the inducing inputs at their initial locations.
    pub freeze_inducing: bool,
    /// Relative jitter used when a kernel matrix fails to factorize.
    pub base_jitter: T,
    /// Constant added to the inducing-point covariance diagonal.
    pub kmm_nugget: T,
    pub rng_seed: u64,
}

impl<T: Scalar> Default for ModelConfig<T> {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            n_inducing: 10,
            prior_var_x: T::one(),
            mc_samples_train: 10,
            mc_samples_eval: 500,
            step_size: T::lit(1e-2),
            max_iters: 2000,
            convergence_tol: T::lit(1e-4),
            smoothing_window: 50,
            freeze_inducing: false,
            base_jitter: T::lit(1e-8),
            kmm_nugget: T::lit(1e-6),
            rng_seed: 0,
        }
    }
}

impl<T: Scalar> ModelConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.latent_dim == 0 {
            return bad("latent dimension must be at least 1");
        }
        if self.n_inducing == 0 {
            return bad("inducing count must be at least 1");
        }
        if !(self.prior_var_x > T::zero()) {
            return bad("prior variance of latents must be positive");
        }
        if self.mc_samples_train == 0 || self.mc_samples_eval == 0 {
            return bad("Monte Carlo sample counts must be at least 1");
        }
        if !(self.step_size > T::zero()) {
            return bad("step size must be positive");
        }
        if self.smoothing_window == 0 {
            return bad("smoothing window must be at least 1");
        }
        if !(self.base_jitter > T::zero()) || self.kmm_nugget < T::zero() {
            return bad("jitter must be positive and nugget non-negative");
        }
        Ok(())
    }
}

/// Latent class weights `f_ndk`, one K_d-vector per (n, d).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentWeights<T> {
    n_obs: usize,
    n_vars: usize,
    f: Vec<Vec<T>>,
}

impl<T: Scalar> LatentWeights<T> {
    pub fn get(&self, n: usize, d: usize) -> &[T] {
        &self.f[n * self.n_vars + d]
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn is_finite(&self) -> bool {
        self.f.iter().flatten().all(|v| v.is_finite())
    }
}

pub fn logsumexp<T: Scalar>(f: &[T]) -> T {
    let max = f.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + f.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

/// Softmax with max-subtraction. For two categories the pair is adjusted so
/// that `p[0] == 1 - p[1]` and `p[1] == 1 - p[0]` hold in floating point.
pub fn softmax<T: Scalar>(f: &[T]) -> Result<Vec<T>> {
    if f.is_empty() {
        return Err(Error::EmptyVector);
    }
    let max = f.iter().copied().fold(T::neg_infinity(), T::max);
    let mut p: Vec<T> = f.iter().map(|&v| (v - max).exp()).collect();
    let total: T = p.iter().copied().sum();
    p.iter_mut().for_each(|v| *v /= total);
    if p.len() == 2 {
        let (small, big) = if p[0] <= p[1] { (0, 1) } else { (1, 0) };
        p[big] = T::one() - p[small];
        p[small] = T::one() - p[big];
    }
    Ok(p)
}

/// `f_k - logsumexp(f)`
pub fn log_softmax_at<T: Scalar>(f: &[T], k: usize) -> Result<T> {
    if k >= f.len() {
        return Err(Error::IndexOutOfRange { index: k, len: f.len() });
    }
    Ok((f[k] - logsumexp(f)).min(T::zero()))
}

#[inline]
pub(crate) fn std_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Draws a category index from `probs` by inverse CDF.
pub fn sample_category<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u = T::lit(rng.random::<f64>());
    let mut acc = T::zero();
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// i.i.d. `N(0, σ_x²)` latent inputs, `n × config.latent_dim`.
pub fn sample_prior_latents<T: Scalar, R: Rng + ?Sized>(n: usize, config: &ModelConfig<T>, rng: &mut R) -> Matrix<T> {
    let sd = config.prior_var_x.max(T::zero()).sqrt();
    Matrix::from_fn(n, config.latent_dim, |_, _| sd * std_normal::<T, R>(rng))
}

/// Draws every weight function `F_dk` jointly at the rows of `x` from its GP
/// prior, then samples each `y_nd` from `softmax(f_nd)`.
pub fn forward_simulate<T: Scalar, R: Rng + ?Sized>(
    x: &Matrix<T>,
    kernels: &[KernelParams<T>],
    cardinalities: &[usize],
    rng: &mut R,
) -> Result<(LatentWeights<T>, CategoricalDataset)> {
    if kernels.len() != cardinalities.len() {
        return Err(Error::DimensionMismatch {
            expected: cardinalities.len(),
            found: kernels.len(),
        });
    }
    let n = x.rows();
    let n_vars = cardinalities.len();
    let mut f = vec![Vec::new(); n * n_vars];
    for (d, (p, &k_d)) in kernels.iter().zip(cardinalities).enumerate() {
        let chol = jittered_cholesky(&gram(x, p)?, T::lit(1e-8))?;
        let l = chol.factor();
        for _ in 0..k_d {
            let eps: Vec<T> = (0..n).map(|_| std_normal::<T, R>(rng)).collect();
            for i in 0..n {
                let row = l.row(i);
                let v = (0..=i).fold(T::zero(), |acc, j| acc + row[j] * eps[j]);
                f[i * n_vars + d].push(v);
            }
        }
    }
    let mut values = Vec::with_capacity(n * n_vars);
    for weights in &f {
        values.push(Some(sample_category(&softmax(weights)?, rng)));
    }
    let data = CategoricalDataset::new(cardinalities.to_vec(), values)?;
    Ok((LatentWeights { n_obs: n, n_vars, f }, data))
}

/// Means of the two mixture components used for clustered synthetic inputs.
pub const TWO_CLUSTER_MEANS: [f64; 2] = [-2.5, 2.5];
/// Standard deviation of each mixture component.
pub const TWO_CLUSTER_SD: f64 = 1.0;

/// One-dimensional inputs from a balanced two-component Gaussian mixture,
/// with the component label of every row.
#[derive(Clone, Debug)]
pub struct ClusteredInputs<T> {
    pub x: Matrix<T>,
    pub labels: Vec<usize>,
}

/// Exactly `⌈n/2⌉` rows come from the first component, in shuffled order.
pub fn make_two_cluster_inputs<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> ClusteredInputs<T> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    labels.shuffle(rng);
    let x = Matrix::from_fn(n, 1, |i, _| {
        T::lit(TWO_CLUSTER_MEANS[labels[i]] + TWO_CLUSTER_SD * rng.sample::<f64, _>(StandardNormal))
    });
    ClusteredInputs { x, labels }
}
