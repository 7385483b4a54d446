//! Categorical latent Gaussian process.
//!
//! Multivariate categorical observations are modelled as draws from a softmax
//! over per-(variable, category) weight functions, each a GP over a shared
//! low-dimensional latent space. Inference is sparse variational: a mean-field
//! Gaussian over the latent points, Gaussian inducing variables per weight
//! function, and a Monte Carlo estimate of the evidence lower bound optimized
//! with reparameterized gradients.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod data_io;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type used by the concrete aliases below and by the command-line tool.
pub type Real = f64;
pub type RealMatrix = linalg::Matrix<Real>;
pub type Kernel = kernel::KernelParams<Real>;
pub type Config = model::ModelConfig<Real>;
pub type Posterior = inference::VariationalPosterior<Real>;
pub type Estimate = inference::ElboEstimate<Real>;
pub type Model = training::FittedModel<Real>;
pub type Trace = training::TrainTrace<Real>;
