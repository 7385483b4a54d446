//! Sparse variational inference: closed-form KL terms, the sparse-GP
//! conditional, reparameterized sampling and the Monte Carlo ELBO with
//! pathwise gradients.

mod conditional;
mod elbo;
mod kl;
mod params;
mod posterior;
mod sampling;

pub use conditional::{conditional_f, ConditionalF, InducingPrior};
pub use elbo::{elbo, elbo_gradients, evaluate_elbo, ElboEstimate, ElboEvaluation, NoiseSeed};
pub use kl::{kl_inducing, kl_inducing_grad, kl_latents, kl_latents_grad};
pub use params::{ParamGroup, Parameters};
pub use posterior::{ElboGradients, PosteriorGrad, VariationalPosterior};
pub use sampling::{sample_qu, sample_qx, QuDraw, QxDraw};

pub(crate) use conditional::dot;
pub(crate) use elbo::draw_latents;
pub(crate) use sampling::substream;
