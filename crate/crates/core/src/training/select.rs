use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{ElboEstimate, NoiseSeed};
use crate::model::{CategoricalDataset, ModelConfig};
use crate::scalar::Scalar;

use super::fit::{effective_dims, fit, FittedModel};

/// Outcome of fitting one candidate latent dimension.
#[derive(Clone, Debug)]
pub struct DimCandidate<T> {
    pub latent_dim: usize,
    pub result: std::result::Result<(FittedModel<T>, ElboEstimate<T>), String>,
}

impl<T: Scalar> DimCandidate<T> {
    pub fn estimate(&self) -> Option<&ElboEstimate<T>> {
        self.result.as_ref().ok().map(|(_, e)| e)
    }

    pub fn model(&self) -> Option<&FittedModel<T>> {
        self.result.as_ref().ok().map(|(m, _)| m)
    }

    pub fn effective_dims(&self, threshold_ratio: T) -> Option<Vec<usize>> {
        self.model().map(|m| effective_dims(m, threshold_ratio))
    }
}

#[derive(Clone, Debug)]
pub struct DimSelection<T> {
    pub candidates: Vec<DimCandidate<T>>,
    /// Position in `candidates` of the selected entry.
    pub best_index: usize,
}

impl<T: Scalar> DimSelection<T> {
    pub fn best_latent_dim(&self) -> usize {
        self.candidates[self.best_index].latent_dim
    }

    pub fn best(&self) -> &DimCandidate<T> {
        &self.candidates[self.best_index]
    }
}

/// Fits one model per candidate `Q` and picks the one with the largest ELBO
/// evaluated with `config.mc_samples_eval` samples; the earliest candidate
/// wins ties. Each candidate uses the RNG substream numbered by its `Q`, so a
/// repeated candidate reproduces the same fit. Failed candidates are kept in
/// the table with their error message.
pub fn select_latent_dim<T: Scalar, R: Rng + ?Sized>(
    data: &CategoricalDataset,
    q_candidates: &[usize],
    config: &ModelConfig<T>,
    rng: &mut R,
) -> Result<DimSelection<T>> {
    if q_candidates.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one latent dimension candidate is required".into(),
        ));
    }
    let base: u64 = rng.random();
    let candidates: Vec<DimCandidate<T>> = q_candidates
        .par_iter()
        .map(|&q| {
            let cfg = ModelConfig {
                latent_dim: q,
                ..config.clone()
            };
            let mut sub = ChaCha8Rng::seed_from_u64(base);
            sub.set_stream(q as u64);
            let result = fit(data, &cfg, &mut sub)
                .and_then(|model| {
                    let est = model.evaluate(data, NoiseSeed::draw(&mut sub))?;
                    Ok((model, est))
                })
                .map_err(|e| e.to_string());
            DimCandidate { latent_dim: q, result }
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(e) = c.estimate() else { continue };
        if best.is_none_or(|b| e.value > candidates[b].estimate().expect("scored").value) {
            best = Some(i);
        }
    }
    let best_index = best.ok_or(Error::AllCandidatesFailed(q_candidates.len()))?;
    Ok(DimSelection { candidates, best_index })
}
