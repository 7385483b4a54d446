use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{evaluate_elbo, ElboEstimate, NoiseSeed, Parameters, VariationalPosterior};
use crate::kernel::KernelParams;
use crate::model::{CategoricalDataset, ModelConfig};
use crate::scalar::Scalar;

use super::adam::Adam;
use super::init::initialize;

/// Default fraction of the largest ARD weight a dimension must reach to count
/// as effective.
pub const DEFAULT_RELEVANCE_RATIO: f64 = 0.05;

/// One optimizer iteration, evaluated at the parameters before the update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord<T> {
    pub iteration: usize,
    pub elbo: T,
    pub kl_x: T,
    pub kl_u: T,
    pub exp_loglik: T,
    pub grad_norm: T,
    /// Seconds since the trainer was created. Not serialized, so that saved
    /// traces are reproducible byte for byte.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace<T> {
    pub records: Vec<IterRecord<T>>,
    /// ARD weights `α_d` of every variable at the end of fitting.
    pub ard_summary: Vec<Vec<T>>,
}

impl<T: Scalar> TrainTrace<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn elbo_values(&self) -> Vec<T> {
        self.records.iter().map(|r| r.elbo).collect()
    }

    /// Mean ELBO over iterations `count - window .. count`, or `None` if fewer
    /// than `count` iterations were recorded or `window` is not in `1..=count`.
    pub fn smoothed_after(&self, count: usize, window: usize) -> Option<T> {
        if window == 0 || window > count || count > self.records.len() {
            return None;
        }
        let sum = self.records[count - window..count].iter().map(|r| r.elbo).sum::<T>();
        Some(sum / T::from_usize_lossy(window))
    }

    /// Whether the relative change between the last two disjoint windows of
    /// the ELBO moving average is below `tol`. A non-positive `tol` never
    /// converges.
    pub fn converged(&self, window: usize, tol: T) -> bool {
        let n = self.records.len();
        if !(tol > T::zero()) || window == 0 || n < 2 * window {
            return false;
        }
        let (Some(last), Some(prev)) = (self.smoothed_after(n, window), self.smoothed_after(n - window, window)) else {
            return false;
        };
        let denom = prev.abs().max(T::min_positive_value());
        (last - prev).abs() / denom < tol
    }
}

/// Parameters at the last iteration together with the settings and trace
/// that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel<T> {
    pub posterior: VariationalPosterior<T>,
    pub kernels: Vec<KernelParams<T>>,
    pub config: ModelConfig<T>,
    pub trace: TrainTrace<T>,
}

impl<T: Scalar> FittedModel<T> {
    pub fn latent_dim(&self) -> usize {
        self.posterior.latent_dim()
    }

    pub fn parameters(&self) -> Parameters<T> {
        Parameters {
            posterior: self.posterior.clone(),
            kernels: self.kernels.clone(),
        }
    }

    /// ELBO with `config.mc_samples_eval` samples.
    pub fn evaluate(&self, data: &CategoricalDataset, seed: NoiseSeed) -> Result<ElboEstimate<T>> {
        let s = self.config.mc_samples_eval;
        Ok(evaluate_elbo(data, &self.posterior, &self.kernels, &self.config, seed, s, false)?.estimate)
    }
}

/// Diagnostics of one [`Trainer::step`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport<T> {
    pub record: IterRecord<T>,
    pub min_conditional_variance: T,
    pub clamped_variances: usize,
}

/// Stochastic gradient ascent on the ELBO, one iteration at a time.
///
/// Each step first applies the update computed by the previous step, then
/// evaluates the ELBO and its gradient at the new parameters and records
/// them. The stored parameters therefore always match the last record.
pub struct Trainer<'a, T> {
    data: &'a CategoricalDataset,
    config: ModelConfig<T>,
    params: Parameters<T>,
    adam: Adam<T>,
    rng: ChaCha8Rng,
    pending: Option<Vec<T>>,
    trace: TrainTrace<T>,
    started: Instant,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    /// Initializes the parameters from `data` and seeds the per-iteration noise from `rng`.
    pub fn new<R: Rng + ?Sized>(data: &'a CategoricalDataset, config: ModelConfig<T>, rng: &mut R) -> Result<Self> {
        let params = initialize(data, &config, rng)?;
        let noise_seed = rng.random();
        Self::from_parameters(data, config, params, noise_seed)
    }

    pub fn from_parameters(
        data: &'a CategoricalDataset,
        config: ModelConfig<T>,
        params: Parameters<T>,
        noise_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        params.posterior.check_shapes(data.cardinalities())?;
        if params.posterior.n_obs() != data.n_obs() {
            return Err(Error::DimensionMismatch {
                expected: data.n_obs(),
                found: params.posterior.n_obs(),
            });
        }
        Ok(Self {
            data,
            adam: Adam::new(params.len(), config.step_size),
            config,
            params,
            rng: ChaCha8Rng::seed_from_u64(noise_seed),
            pending: None,
            trace: TrainTrace::default(),
            started: Instant::now(),
        })
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.params
    }

    pub fn trace(&self) -> &TrainTrace<T> {
        &self.trace
    }

    pub fn config(&self) -> &ModelConfig<T> {
        &self.config
    }

    pub fn step(&mut self) -> Result<StepReport<T>> {
        let iteration = self.trace.len();
        if let Some(grad) = self.pending.take() {
            let mut theta = self.params.to_flat();
            self.adam.ascend(&mut theta, &grad);
            self.params.set_flat(&theta)?;
        }
        if !self.params.is_finite() {
            return Err(Error::DivergenceDetected(iteration));
        }
        let seed = NoiseSeed::draw(&mut self.rng);
        let eval = evaluate_elbo(
            self.data,
            &self.params.posterior,
            &self.params.kernels,
            &self.config,
            seed,
            self.config.mc_samples_train,
            true,
        )?;
        let grad = eval.gradients.expect("gradients requested").to_flat();
        let grad_norm = grad.iter().map(|&g| g * g).sum::<T>().sqrt();
        let e = eval.estimate;
        if !e.value.is_finite() || !grad_norm.is_finite() {
            return Err(Error::DivergenceDetected(iteration));
        }
        let record = IterRecord {
            iteration,
            elbo: e.value,
            kl_x: e.kl_x,
            kl_u: e.kl_u,
            exp_loglik: e.exp_loglik,
            grad_norm,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        self.trace.records.push(record.clone());
        self.pending = Some(grad);
        Ok(StepReport {
            record,
            min_conditional_variance: eval.min_conditional_variance,
            clamped_variances: eval.clamped_variances,
        })
    }

    /// Drops any update not yet applied and packages the current parameters.
    pub fn finish(self) -> FittedModel<T> {
        let mut trace = self.trace;
        trace.ard_summary = self.params.kernels.iter().map(KernelParams::ard_weights).collect();
        FittedModel {
            posterior: self.params.posterior,
            kernels: self.params.kernels,
            config: self.config,
            trace,
        }
    }
}

/// Runs the optimizer for `config.max_iters` iterations or until the smoothed
/// ELBO stops changing.
pub fn fit<T: Scalar, R: Rng + ?Sized>(
    data: &CategoricalDataset,
    config: &ModelConfig<T>,
    rng: &mut R,
) -> Result<FittedModel<T>> {
    let mut trainer = Trainer::new(data, config.clone(), rng)?;
    for _ in 0..config.max_iters {
        trainer.step()?;
        if trainer
            .trace()
            .converged(config.smoothing_window, config.convergence_tol)
        {
            break;
        }
    }
    Ok(trainer.finish())
}

/// Fits `restarts` independently initialized models and keeps the one with
/// the largest evaluated ELBO (earliest on ties). Failed restarts are skipped.
pub fn fit_with_restarts<T: Scalar, R: Rng + ?Sized>(
    data: &CategoricalDataset,
    config: &ModelConfig<T>,
    restarts: usize,
    rng: &mut R,
) -> Result<FittedModel<T>> {
    if restarts <= 1 {
        return fit(data, config, rng);
    }
    let base: u64 = rng.random();
    let results: Vec<Result<(FittedModel<T>, T)>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut sub = ChaCha8Rng::seed_from_u64(base);
            sub.set_stream(r as u64);
            let model = fit(data, config, &mut sub)?;
            let score = model.evaluate(data, NoiseSeed::draw(&mut sub))?.value;
            Ok((model, score))
        })
        .collect();
    let mut best: Option<(FittedModel<T>, T)> = None;
    for (model, score) in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((model, score));
        }
    }
    best.map(|(m, _)| m).ok_or(Error::AllCandidatesFailed(restarts))
}

/// Relevance of every latent dimension: `max_d α_dq`.
pub fn dimension_relevance<T: Scalar>(kernels: &[KernelParams<T>]) -> Vec<T> {
    let q = kernels.first().map_or(0, KernelParams::latent_dim);
    (0..q)
        .map(|j| {
            kernels
                .iter()
                .map(|k| k.log_ard_weights()[j].exp())
                .fold(T::zero(), T::max)
        })
        .collect()
}

/// Dimensions whose relevance is at least `threshold_ratio` times the largest.
pub fn effective_dims<T: Scalar>(model: &FittedModel<T>, threshold_ratio: T) -> Vec<usize> {
    let rel = dimension_relevance(&model.kernels);
    let top = rel.iter().copied().fold(T::zero(), T::max);
    (0..rel.len()).filter(|&j| rel[j] >= threshold_ratio * top).collect()
}

/// Most relevant dimension, lowest index on ties.
pub fn top_dimension<T: Scalar>(model: &FittedModel<T>) -> usize {
    let rel = dimension_relevance(&model.kernels);
    (0..rel.len()).fold(0, |best, j| if rel[j] > rel[best] { j } else { best })
}
