//! Monte Carlo evidence lower bound and its pathwise gradients.
//!
//! One evaluation draws `S` joint samples. Sample `s` consists of
//! `x_n ~ q(x_n)` for every observation, `U_d ~ q(U_d)` for every variable and
//! `f_nd ~ p(f_nd | x_n, U_d)` for every observed entry, all reparameterized
//! from standard-normal noise. The noise comes from per-observation,
//! per-variable and per-entry RNG substreams of a single [`NoiseSeed`], so the
//! estimate is a deterministic, differentiable function of the parameters for
//! a fixed seed and does not depend on how the work is scheduled.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{backprop_entry, KernelParamGrad, KernelParams};
use crate::linalg::Matrix;
use crate::model::{std_normal, CategoricalDataset, ModelConfig};
use crate::scalar::Scalar;

use super::conditional::{dot, InducingPrior};
use super::kl::{kl_inducing_var, kl_latents, kl_latents_grad};
use super::posterior::{packed_index, ElboGradients, PosteriorGrad, VariationalPosterior};
use super::sampling::substream;

/// Seed of the common random numbers used by one ELBO evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseSeed(pub u64);

impl NoiseSeed {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self(rng.random())
    }
}

/// ELBO value with its decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate<T> {
    /// `exp_loglik - kl_x - kl_u`
    pub value: T,
    pub kl_x: T,
    pub kl_u: T,
    pub exp_loglik: T,
    /// Standard error of `exp_loglik` from the spread of per-sample totals.
    pub mc_std_error: T,
    pub n_samples: usize,
}

/// Result of one evaluation with common random numbers.
#[derive(Clone, Debug)]
pub struct ElboEvaluation<T> {
    pub estimate: ElboEstimate<T>,
    pub gradients: Option<ElboGradients<T>>,
    /// Smallest conditional variance after clamping (never negative).
    pub min_conditional_variance: T,
    /// Number of conditional variances that were clamped to zero.
    pub clamped_variances: usize,
}

/// Contribution of one categorical variable.
struct VarTerm<T> {
    sample_loglik: Vec<T>,
    kl: T,
    min_var: T,
    clamped: usize,
    grads: Option<VarGrads<T>>,
}

struct VarGrads<T> {
    /// Adjoint of every drawn latent point, `N × S × Q`.
    d_xs: Vec<T>,
    d_z: Matrix<T>,
    d_mu: Matrix<T>,
    d_raw: Vec<T>,
    d_hyp: KernelParamGrad<T>,
}

/// Draws of every latent point, laid out `N × S × Q`.
pub(crate) struct LatentDraws<T> {
    pub(crate) xs: Vec<T>,
    pub(crate) noise: Vec<T>,
}

fn check_inputs<T: Scalar>(
    data: &CategoricalDataset,
    post: &VariationalPosterior<T>,
    kernels: &[KernelParams<T>],
) -> Result<()> {
    if post.n_obs() != data.n_obs() {
        return Err(Error::DimensionMismatch {
            expected: data.n_obs(),
            found: post.n_obs(),
        });
    }
    post.check_shapes(data.cardinalities())?;
    if kernels.len() != data.n_vars() {
        return Err(Error::DimensionMismatch {
            expected: data.n_vars(),
            found: kernels.len(),
        });
    }
    if let Some(p) = kernels.iter().find(|p| p.latent_dim() != post.latent_dim()) {
        return Err(Error::DimensionMismatch {
            expected: post.latent_dim(),
            found: p.latent_dim(),
        });
    }
    Ok(())
}

pub(crate) fn draw_latents<T: Scalar>(
    post: &VariationalPosterior<T>,
    seed: NoiseSeed,
    n_samples: usize,
) -> LatentDraws<T> {
    let (n, q) = (post.n_obs(), post.latent_dim());
    let mut xs = vec![T::zero(); n * n_samples * q];
    let mut noise = vec![T::zero(); n * n_samples * q];
    let half = T::lit(0.5);
    for i in 0..n {
        let mut rng = substream(seed.0, i as u64);
        for s in 0..n_samples {
            for j in 0..q {
                let e: T = std_normal(&mut rng);
                let idx = (i * n_samples + s) * q + j;
                noise[idx] = e;
                xs[idx] = post.x_means[(i, j)] + (post.x_log_vars[(i, j)] * half).exp() * e;
            }
        }
    }
    LatentDraws { xs, noise }
}

#[allow(clippy::too_many_arguments)]
fn variable_term<T: Scalar>(
    d: usize,
    data: &CategoricalDataset,
    post: &VariationalPosterior<T>,
    kernel: &KernelParams<T>,
    config: &ModelConfig<T>,
    latents: &LatentDraws<T>,
    seed: NoiseSeed,
    n_samples: usize,
    with_grads: bool,
) -> Result<VarTerm<T>> {
    let (n, n_vars, q, m) = (data.n_obs(), data.n_vars(), post.latent_dim(), post.n_inducing());
    let n_cat = data.cardinalities()[d];
    let prior = InducingPrior::new(&post.inducing_inputs, kernel, config.base_jitter, config.kmm_nugget)?;
    let chol = prior.chol();
    let sf2 = prior.signal_variance();
    let alpha = prior.alpha();
    let z = prior.z();
    let l_cov = post.u_cov_factor(d);
    let mu = &post.u_means[d];

    // inducing draws and K_MM⁻¹ u for each (sample, category)
    let mut u_rng = substream(seed.0, (n + d) as u64);
    let mut u_noise = vec![T::zero(); n_samples * n_cat * m];
    let mut b = vec![T::zero(); n_samples * n_cat * m];
    for s in 0..n_samples {
        for k in 0..n_cat {
            let off = (s * n_cat + k) * m;
            for i in 0..m {
                u_noise[off + i] = std_normal(&mut u_rng);
            }
            for i in 0..m {
                let row = l_cov.row(i);
                let lu = (0..=i).fold(T::zero(), |acc, j| acc + row[j] * u_noise[off + j]);
                b[off + i] = mu[(k, i)] + lu;
            }
            chol.solve_in_place(&mut b[off..off + m]);
        }
    }

    let inv_s = T::one() / T::from_usize_lossy(n_samples);
    let two = T::lit(2.0);
    let mut sample_loglik = vec![T::zero(); n_samples];
    let mut min_var = T::infinity();
    let mut clamped = 0usize;
    let mut grads = with_grads.then(|| VarGrads {
        d_xs: vec![T::zero(); n * n_samples * q],
        d_z: Matrix::zeros(m, q),
        d_mu: Matrix::zeros(n_cat, m),
        d_raw: vec![T::zero(); post.u_cov_raw[d].len()],
        d_hyp: KernelParamGrad::zeros(q),
    });
    let mut d_kmm = Matrix::zeros(m, m);
    let mut d_u = vec![T::zero(); n_samples * n_cat * m];

    let mut kv = vec![T::zero(); m];
    let mut a = vec![T::zero(); m];
    let mut w = vec![T::zero(); m];
    let mut dkv = vec![T::zero(); m];
    let mut f = vec![T::zero(); n_cat];
    let mut eps = vec![T::zero(); n_cat];

    for i in 0..n {
        let Some(y) = data.get(i, d) else { continue };
        let mut f_rng = substream(seed.0, (n + n_vars + i * n_vars + d) as u64);
        for s in 0..n_samples {
            let x_off = (i * n_samples + s) * q;
            let x = &latents.xs[x_off..x_off + q];
            prior.cross_into(x, &mut kv);
            a.copy_from_slice(&kv);
            chol.solve_in_place(&mut a);
            let raw_var = sf2 - dot(&kv, &a);
            let var = if raw_var > T::zero() {
                raw_var
            } else {
                clamped += 1;
                T::zero()
            };
            min_var = min_var.min(var);
            let sd = var.sqrt();
            for k in 0..n_cat {
                let off = (s * n_cat + k) * m;
                eps[k] = std_normal(&mut f_rng);
                f[k] = dot(&kv, &b[off..off + m]) + sd * eps[k];
            }
            let fmax = f.iter().copied().fold(T::neg_infinity(), T::max);
            let sum_exp = f.iter().map(|&v| (v - fmax).exp()).sum::<T>();
            let lse = fmax + sum_exp.ln();
            sample_loglik[s] += f[y] - lse;

            let Some(g) = grads.as_mut() else { continue };
            // ∂ log softmax_y / ∂f_k = δ_ky - p_k, scaled by the 1/S average
            let mut dstd = T::zero();
            w.iter_mut().for_each(|v| *v = T::zero());
            for k in 0..n_cat {
                let p = (f[k] - lse).exp();
                let gk = inv_s * (if k == y { T::one() - p } else { -p });
                dstd += gk * eps[k];
                let off = (s * n_cat + k) * m;
                for j in 0..m {
                    w[j] += gk * b[off + j];
                    d_u[off + j] += gk * a[j];
                }
            }
            let dvar = if var > T::zero() { dstd / (two * sd) } else { T::zero() };
            for j in 0..m {
                dkv[j] = w[j] - two * dvar * a[j];
            }
            // ∂/∂K_MM of k K⁻¹ u_k and of -k K⁻¹ k
            for r in 0..m {
                let ar = a[r];
                let row = d_kmm.row_mut(r);
                for c in 0..m {
                    row[c] += ar * (dvar * a[c] - w[c]);
                }
            }
            g.d_hyp.d_log_signal_variance += dvar * sf2;
            let dx = &mut g.d_xs[x_off..x_off + q];
            for j in 0..m {
                backprop_entry(
                    x,
                    z.row(j),
                    kv[j],
                    dkv[j],
                    alpha,
                    Some(&mut *dx),
                    Some(g.d_z.row_mut(j)),
                    &mut g.d_hyp,
                );
            }
        }
    }
    let kl = if let Some(g) = grads.as_mut() {
        // u_k = μ_k + L ε_k
        for s in 0..n_samples {
            for k in 0..n_cat {
                let off = (s * n_cat + k) * m;
                for i in 0..m {
                    let du = d_u[off + i];
                    g.d_mu[(k, i)] += du;
                    for j in 0..=i {
                        g.d_raw[packed_index(i, j)] += du * u_noise[off + j];
                    }
                }
            }
        }
        for i in 0..m {
            // chain through L_ii = exp(raw_ii)
            g.d_raw[packed_index(i, i)] *= l_cov[(i, i)];
        }
        let kl = kl_inducing_var(
            &prior,
            mu,
            &post.u_cov_raw[d],
            &l_cov,
            Some((-T::one(), &mut g.d_mu, &mut g.d_raw, &mut d_kmm)),
        );
        prior.backprop_kmm(&d_kmm, &mut g.d_z, &mut g.d_hyp);
        kl
    } else {
        kl_inducing_var(&prior, mu, &post.u_cov_raw[d], &l_cov, None)
    };

    Ok(VarTerm {
        sample_loglik,
        kl,
        min_var,
        clamped,
        grads,
    })
}

/// Evaluates the ELBO with `n_samples` joint draws keyed by `seed`, and its
/// gradient with respect to every free parameter when `with_gradients` is set.
pub fn evaluate_elbo<T: Scalar>(
    data: &CategoricalDataset,
    post: &VariationalPosterior<T>,
    kernels: &[KernelParams<T>],
    config: &ModelConfig<T>,
    seed: NoiseSeed,
    n_samples: usize,
    with_gradients: bool,
) -> Result<ElboEvaluation<T>> {
    check_inputs(data, post, kernels)?;
    if n_samples == 0 {
        return Err(Error::InvalidParameter(
            "at least one Monte Carlo sample is required".into(),
        ));
    }
    let (n, q) = (data.n_obs(), post.latent_dim());
    let latents = draw_latents(post, seed, n_samples);
    let terms: Vec<VarTerm<T>> = (0..data.n_vars())
        .into_par_iter()
        .map(|d| {
            variable_term(
                d,
                data,
                post,
                &kernels[d],
                config,
                &latents,
                seed,
                n_samples,
                with_gradients,
            )
        })
        .collect::<Result<_>>()?;

    let mut totals = vec![T::zero(); n_samples];
    let mut kl_u = T::zero();
    let mut min_var = T::infinity();
    let mut clamped = 0;
    for t in &terms {
        for (acc, v) in totals.iter_mut().zip(&t.sample_loglik) {
            *acc += *v;
        }
        kl_u += t.kl;
        min_var = min_var.min(t.min_var);
        clamped += t.clamped;
    }
    let s_count = T::from_usize_lossy(n_samples);
    let exp_loglik = totals.iter().copied().sum::<T>() / s_count;
    let mc_std_error = if n_samples > 1 {
        let ss = totals.iter().map(|&v| (v - exp_loglik) * (v - exp_loglik)).sum::<T>();
        (ss / (s_count - T::one()) / s_count).sqrt()
    } else {
        T::zero()
    };
    let kl_x = kl_latents(post, config.prior_var_x)?;
    let estimate = ElboEstimate {
        value: exp_loglik - kl_x - kl_u,
        kl_x,
        kl_u,
        exp_loglik,
        mc_std_error,
        n_samples,
    };

    let gradients = if with_gradients {
        let mut pg = PosteriorGrad::zeros_like(post);
        let mut kernel_grads = Vec::with_capacity(terms.len());
        let mut d_xs = vec![T::zero(); n * n_samples * q];
        for (d, t) in terms.into_iter().enumerate() {
            let g = t.grads.expect("gradients requested");
            for (acc, v) in d_xs.iter_mut().zip(&g.d_xs) {
                *acc += *v;
            }
            for (acc, v) in pg.inducing_inputs.as_mut_slice().iter_mut().zip(g.d_z.as_slice()) {
                *acc += *v;
            }
            pg.u_means[d] = g.d_mu;
            pg.u_cov_raw[d] = g.d_raw;
            kernel_grads.push(g.d_hyp);
        }
        let half = T::lit(0.5);
        for i in 0..n {
            for j in 0..q {
                let sd_half = (post.x_log_vars[(i, j)] * half).exp() * half;
                for s in 0..n_samples {
                    let idx = (i * n_samples + s) * q + j;
                    pg.x_means[(i, j)] += d_xs[idx];
                    pg.x_log_vars[(i, j)] += d_xs[idx] * latents.noise[idx] * sd_half;
                }
            }
        }
        kl_latents_grad(post, config.prior_var_x, -T::one(), &mut pg);
        if config.freeze_inducing {
            pg.inducing_inputs
                .as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = T::zero());
        }
        Some(ElboGradients {
            posterior: pg,
            kernels: kernel_grads,
        })
    } else {
        None
    };

    Ok(ElboEvaluation {
        estimate,
        gradients,
        min_conditional_variance: if min_var.is_finite() { min_var } else { T::zero() },
        clamped_variances: clamped,
    })
}

/// ELBO estimate with `config.mc_samples_eval` samples; the noise seed is drawn from `rng`.
pub fn elbo<T: Scalar, R: Rng + ?Sized>(
    data: &CategoricalDataset,
    post: &VariationalPosterior<T>,
    kernels: &[KernelParams<T>],
    config: &ModelConfig<T>,
    rng: &mut R,
) -> Result<ElboEstimate<T>> {
    let seed = NoiseSeed::draw(rng);
    Ok(evaluate_elbo(data, post, kernels, config, seed, config.mc_samples_eval, false)?.estimate)
}

/// ELBO estimate and its gradient on the same `config.mc_samples_train` draws.
pub fn elbo_gradients<T: Scalar, R: Rng + ?Sized>(
    data: &CategoricalDataset,
    post: &VariationalPosterior<T>,
    kernels: &[KernelParams<T>],
    config: &ModelConfig<T>,
    rng: &mut R,
) -> Result<(ElboEstimate<T>, ElboGradients<T>)> {
    let seed = NoiseSeed::draw(rng);
    let eval = evaluate_elbo(data, post, kernels, config, seed, config.mc_samples_train, true)?;
    Ok((eval.estimate, eval.gradients.expect("gradients requested")))
}
