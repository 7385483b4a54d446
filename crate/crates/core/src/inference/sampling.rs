//! Reparameterized draws from the variational factors. The standard-normal
//! noise is returned with each draw so gradients can flow through the
//! variational parameters.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;
use crate::model::std_normal;
use crate::scalar::Scalar;

use super::posterior::VariationalPosterior;

/// `x = m_n + s_n ⊙ ε`
#[derive(Clone, Debug, PartialEq)]
pub struct QxDraw<T> {
    pub x: Vec<T>,
    pub noise: Vec<T>,
}

/// `u_dk = μ_dk + L_d ε_k` for every category `k` (one row each).
#[derive(Clone, Debug, PartialEq)]
pub struct QuDraw<T> {
    pub u: Matrix<T>,
    pub noise: Matrix<T>,
}

pub fn sample_qx<T: Scalar, R: Rng + ?Sized>(post: &VariationalPosterior<T>, n: usize, rng: &mut R) -> QxDraw<T> {
    let q = post.latent_dim();
    let noise: Vec<T> = (0..q).map(|_| std_normal::<T, R>(rng)).collect();
    let x = (0..q)
        .map(|j| post.x_means[(n, j)] + (post.x_log_vars[(n, j)] * T::lit(0.5)).exp() * noise[j])
        .collect();
    QxDraw { x, noise }
}

pub fn sample_qu<T: Scalar, R: Rng + ?Sized>(post: &VariationalPosterior<T>, d: usize, rng: &mut R) -> QuDraw<T> {
    let l = post.u_cov_factor(d);
    let mu = &post.u_means[d];
    let m = post.n_inducing();
    let noise = Matrix::from_fn(mu.rows(), m, |_, _| std_normal::<T, R>(rng));
    let u = Matrix::from_fn(mu.rows(), m, |k, i| {
        let row = l.row(i);
        mu[(k, i)] + (0..=i).fold(T::zero(), |acc, j| acc + row[j] * noise[(k, j)])
    });
    QuDraw { u, noise }
}

/// Independent RNG substream `stream` of the evaluation keyed by `seed`.
pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
