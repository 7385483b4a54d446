//! Fitting: initialization, the Adam ascent loop on the ELBO, ARD-based
//! dimension reporting, latent-dimension selection and predictive error.

mod adam;
mod fit;
mod init;
mod predict;
mod select;

pub use adam::Adam;
pub use fit::{
    dimension_relevance, effective_dims, fit, fit_with_restarts, top_dimension, FittedModel, IterRecord, StepReport,
    TrainTrace, Trainer, DEFAULT_RELEVANCE_RATIO,
};
pub use init::{initialize, pca_latents};
pub use predict::{
    classification_error, majority_baseline_error, predictive_probs, threshold_accuracy, train_error, PredictiveProbs,
};
pub use select::{select_latent_dim, DimCandidate, DimSelection};
