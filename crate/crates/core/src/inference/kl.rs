//! Closed-form KL divergences between the variational factors and their priors.

use crate::error::{Error, Result};
use crate::kernel::{KernelParamGrad, KernelParams};
use crate::linalg::Matrix;
use crate::model::ModelConfig;
use crate::scalar::Scalar;

use super::conditional::{dot, InducingPrior};
use super::posterior::{packed_index, PosteriorGrad, VariationalPosterior};

/// `KL(q(X) ‖ p(X))` for the mean-field Gaussian against `N(0, σ_x² I)`.
pub fn kl_latents<T: Scalar>(post: &VariationalPosterior<T>, prior_var: T) -> Result<T> {
    if !(prior_var > T::zero()) {
        return Err(Error::NonPositiveVariance(prior_var.as_f64()));
    }
    let half = T::lit(0.5);
    let mut total = T::zero();
    for (m, lv) in post.x_means.as_slice().iter().zip(post.x_log_vars.as_slice()) {
        let s2 = lv.exp();
        if !(s2 > T::zero()) {
            return Err(Error::NonPositiveVariance(s2.as_f64()));
        }
        let ratio = s2 / prior_var;
        total += half * (ratio + *m * *m / prior_var - T::one() - ratio.ln());
    }
    Ok(total)
}

/// Adds `scale · ∂KL(q(X) ‖ p(X))` to the latent-mean and log-variance slots of `grad`.
pub fn kl_latents_grad<T: Scalar>(post: &VariationalPosterior<T>, prior_var: T, scale: T, grad: &mut PosteriorGrad<T>) {
    let half = T::lit(0.5);
    let dm = grad.x_means.as_mut_slice();
    let dl = grad.x_log_vars.as_mut_slice();
    for (i, (m, lv)) in post
        .x_means
        .as_slice()
        .iter()
        .zip(post.x_log_vars.as_slice())
        .enumerate()
    {
        dm[i] += scale * *m / prior_var;
        dl[i] += scale * half * (lv.exp() / prior_var - T::one());
    }
}

/// KL of all `K` inducing factors of one variable against `N(0, K_MM)`;
/// when `grads` is given, adds `scale · ∂KL` to the mean, packed-factor and
/// `K_MM` adjoints.
pub(crate) fn kl_inducing_var<T: Scalar>(
    prior: &InducingPrior<T>,
    u_means: &Matrix<T>,
    cov_raw: &[T],
    cov_factor: &Matrix<T>,
    grads: Option<(T, &mut Matrix<T>, &mut [T], &mut Matrix<T>)>,
) -> T {
    let m = prior.n_inducing();
    let n_cat = T::from_usize_lossy(u_means.rows());
    let chol = prior.chol();
    let half = T::lit(0.5);
    let kinv = chol.inverse();
    let l = cov_factor;

    // K⁻¹ L, used for tr(K⁻¹ Σ) = ‖ L_K⁻¹ L ‖² and for the factor gradient
    let kinv_l = kinv.matmul(l).expect("square factors");
    let mut trace = T::zero();
    for i in 0..m {
        for j in 0..=i {
            trace += l[(i, j)] * kinv_l[(i, j)];
        }
    }
    let logdet_sigma = (0..m).fold(T::zero(), |acc, i| {
        acc + cov_raw[packed_index(i, i)] + cov_raw[packed_index(i, i)]
    });
    let logdet_k = chol.logdet();
    let mm = T::from_usize_lossy(m);

    let betas: Vec<Vec<T>> = (0..u_means.rows()).map(|k| chol.solve_vec(u_means.row(k))).collect();
    let mut kl = T::zero();
    for (k, beta) in betas.iter().enumerate() {
        kl += half * (trace + dot(u_means.row(k), beta) - mm + logdet_k - logdet_sigma);
    }

    if let Some((scale, d_mu, d_raw, d_kmm)) = grads {
        for (k, beta) in betas.iter().enumerate() {
            for j in 0..m {
                d_mu[(k, j)] += scale * beta[j];
            }
        }
        for i in 0..m {
            for j in 0..i {
                d_raw[packed_index(i, j)] += scale * n_cat * kinv_l[(i, j)];
            }
            let lii = l[(i, i)];
            d_raw[packed_index(i, i)] += scale * n_cat * (kinv_l[(i, i)] * lii - T::one());
        }
        // ∂KL/∂K = ½ [K·(K⁻¹ - K⁻¹ Σ K⁻¹) - Σ_k β_k β_kᵀ]
        let kinv_sigma_kinv = kinv_l.matmul(&kinv_l.transpose()).expect("square factors");
        for r in 0..m {
            for c in 0..m {
                let beta_outer = betas.iter().fold(T::zero(), |acc, b| acc + b[r] * b[c]);
                d_kmm[(r, c)] += scale * half * (n_cat * (kinv[(r, c)] - kinv_sigma_kinv[(r, c)]) - beta_outer);
            }
        }
    }
    kl
}

/// `KL(q(U) ‖ p(U))` summed over variables and categories.
pub fn kl_inducing<T: Scalar>(
    post: &VariationalPosterior<T>,
    kernels: &[KernelParams<T>],
    config: &ModelConfig<T>,
) -> Result<T> {
    if kernels.len() != post.n_vars() {
        return Err(Error::DimensionMismatch {
            expected: post.n_vars(),
            found: kernels.len(),
        });
    }
    let mut total = T::zero();
    for (d, p) in kernels.iter().enumerate() {
        let prior = InducingPrior::new(&post.inducing_inputs, p, config.base_jitter, config.kmm_nugget)?;
        total += kl_inducing_var(
            &prior,
            &post.u_means[d],
            &post.u_cov_raw[d],
            &post.u_cov_factor(d),
            None,
        );
    }
    Ok(total)
}

/// Adds `scale · ∂KL(q(U) ‖ p(U))` to the inducing-related slots of `grad`
/// and to the kernel gradients.
pub fn kl_inducing_grad<T: Scalar>(
    post: &VariationalPosterior<T>,
    kernels: &[KernelParams<T>],
    config: &ModelConfig<T>,
    scale: T,
    grad: &mut PosteriorGrad<T>,
    kernel_grads: &mut [KernelParamGrad<T>],
) -> Result<()> {
    let m = post.n_inducing();
    for (d, p) in kernels.iter().enumerate() {
        let prior = InducingPrior::new(&post.inducing_inputs, p, config.base_jitter, config.kmm_nugget)?;
        let mut d_kmm = Matrix::zeros(m, m);
        kl_inducing_var(
            &prior,
            &post.u_means[d],
            &post.u_cov_raw[d],
            &post.u_cov_factor(d),
            Some((scale, &mut grad.u_means[d], &mut grad.u_cov_raw[d], &mut d_kmm)),
        );
        prior.backprop_kmm(&d_kmm, &mut grad.inducing_inputs, &mut kernel_grads[d]);
    }
    Ok(())
}
