use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::inference::{dot, draw_latents, substream, InducingPrior, NoiseSeed, VariationalPosterior};
use crate::kernel::KernelParams;
use crate::model::{softmax, std_normal, CategoricalDataset, ModelConfig};
use crate::scalar::Scalar;

use super::fit::FittedModel;

/// Monte Carlo predictive class probabilities for every (observation, variable).
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveProbs<T> {
    n_obs: usize,
    offsets: Vec<usize>,
    width: usize,
    probs: Vec<T>,
}

impl<T: Scalar> PredictiveProbs<T> {
    /// Wraps explicit per-(n, d) probability vectors, `rows[n][d]`.
    pub fn from_nested(rows: &[Vec<Vec<T>>]) -> Self {
        let cards: Vec<usize> = rows.first().map_or(Vec::new(), |r| r.iter().map(Vec::len).collect());
        let mut offsets = Vec::with_capacity(cards.len());
        let mut width = 0;
        for k in &cards {
            offsets.push(width);
            width += k;
        }
        let probs = rows.iter().flat_map(|r| r.iter().flatten().copied()).collect();
        Self {
            n_obs: rows.len(),
            offsets,
            width,
            probs,
        }
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_vars(&self) -> usize {
        self.offsets.len()
    }

    pub fn get(&self, n: usize, d: usize) -> &[T] {
        let start = n * self.width + self.offsets[d];
        let end = if d + 1 < self.offsets.len() {
            n * self.width + self.offsets[d + 1]
        } else {
            (n + 1) * self.width
        };
        &self.probs[start..end]
    }

    /// Most probable category, lowest index on ties.
    pub fn predicted(&self, n: usize, d: usize) -> usize {
        let p = self.get(n, d);
        (0..p.len()).fold(0, |best, k| if p[k] > p[best] { k } else { best })
    }
}

/// Averages `softmax(f_nd)` over `n_samples` joint draws of `x_n`, `U_d` and
/// `f_nd`, using the same noise substreams as the ELBO.
pub fn predictive_probs<T: Scalar>(
    post: &VariationalPosterior<T>,
    kernels: &[KernelParams<T>],
    config: &ModelConfig<T>,
    seed: NoiseSeed,
    n_samples: usize,
) -> Result<PredictiveProbs<T>> {
    let (n, n_vars, m) = (post.n_obs(), post.n_vars(), post.n_inducing());
    let q = post.latent_dim();
    let latents = draw_latents(post, seed, n_samples);
    let inv_s = T::one() / T::from_usize_lossy(n_samples.max(1));
    let per_var: Vec<Vec<T>> = (0..n_vars)
        .into_par_iter()
        .map(|d| -> Result<Vec<T>> {
            let prior = InducingPrior::new(
                &post.inducing_inputs,
                &kernels[d],
                config.base_jitter,
                config.kmm_nugget,
            )?;
            let n_cat = post.u_means[d].rows();
            let l = post.u_cov_factor(d);
            let mu = &post.u_means[d];
            let mut u_rng = substream(seed.0, (n + d) as u64);
            let mut b = vec![T::zero(); n_samples * n_cat * m];
            let mut eps = vec![T::zero(); m];
            for s in 0..n_samples {
                for k in 0..n_cat {
                    eps.iter_mut().for_each(|e| *e = std_normal(&mut u_rng));
                    let off = (s * n_cat + k) * m;
                    for i in 0..m {
                        b[off + i] = mu[(k, i)] + dot(&l.row(i)[..=i], &eps[..=i]);
                    }
                    prior.chol().solve_in_place(&mut b[off..off + m]);
                }
            }
            let mut out = vec![T::zero(); n * n_cat];
            let mut kv = vec![T::zero(); m];
            let mut f = vec![T::zero(); n_cat];
            for i in 0..n {
                let mut f_rng = substream(seed.0, (n + n_vars + i * n_vars + d) as u64);
                for s in 0..n_samples {
                    let x_off = (i * n_samples + s) * q;
                    prior.cross_into(&latents.xs[x_off..x_off + q], &mut kv);
                    let a = prior.chol().solve_vec(&kv);
                    let sd = (prior.signal_variance() - dot(&kv, &a)).max(T::zero()).sqrt();
                    for k in 0..n_cat {
                        let off = (s * n_cat + k) * m;
                        f[k] = dot(&kv, &b[off..off + m]) + sd * std_normal::<T, _>(&mut f_rng);
                    }
                    for (acc, p) in out[i * n_cat..(i + 1) * n_cat].iter_mut().zip(softmax(&f)?) {
                        *acc += p * inv_s;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let cards: Vec<usize> = post.u_means.iter().map(|m| m.rows()).collect();
    let rows: Vec<Vec<Vec<T>>> = (0..n)
        .map(|i| {
            (0..n_vars)
                .map(|d| per_var[d][i * cards[d]..(i + 1) * cards[d]].to_vec())
                .collect()
        })
        .collect();
    Ok(PredictiveProbs::from_nested(&rows))
}

/// Fraction of observed entries whose most probable category differs from
/// the observed one; `None` when nothing is observed.
pub fn classification_error<T: Scalar>(probs: &PredictiveProbs<T>, data: &CategoricalDataset) -> Option<f64> {
    let mut wrong = 0usize;
    let mut total = 0usize;
    for n in 0..data.n_obs() {
        for d in 0..data.n_vars() {
            if let Some(y) = data.get(n, d) {
                total += 1;
                if probs.predicted(n, d) != y {
                    wrong += 1;
                }
            }
        }
    }
    (total > 0).then(|| wrong as f64 / total as f64)
}

/// Misclassification rate of the predictive distribution on the training
/// data, with `config.mc_samples_eval` draws.
pub fn train_error<T: Scalar, R: Rng + ?Sized>(
    model: &FittedModel<T>,
    data: &CategoricalDataset,
    rng: &mut R,
) -> Result<Option<f64>> {
    let seed = NoiseSeed::draw(rng);
    let probs = predictive_probs(
        &model.posterior,
        &model.kernels,
        &model.config,
        seed,
        model.config.mc_samples_eval,
    )?;
    Ok(classification_error(&probs, data))
}

/// Error of predicting each variable's most frequent observed category
/// (lowest index on ties) for every entry.
pub fn majority_baseline_error(data: &CategoricalDataset) -> Option<f64> {
    let mut wrong = 0usize;
    let mut total = 0usize;
    for (d, &k) in data.cardinalities().iter().enumerate() {
        let mut counts = vec![0usize; k];
        for n in 0..data.n_obs() {
            if let Some(y) = data.get(n, d) {
                counts[y] += 1;
            }
        }
        let seen: usize = counts.iter().sum();
        let best = counts.iter().copied().max().unwrap_or(0);
        total += seen;
        wrong += seen - best;
    }
    (total > 0).then(|| wrong as f64 / total as f64)
}

/// Best accuracy of a single threshold on `values` separating two classes
/// (labels 0 and 1), over both orientations.
pub fn threshold_accuracy(values: &[f64], labels: &[usize]) -> f64 {
    assert_eq!(values.len(), labels.len());
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let ones: usize = labels.iter().filter(|&&l| l == 1).count();
    // predict 0 below the split and 1 above; split after position i
    let mut zeros_below = 0usize;
    let mut ones_below = 0usize;
    let mut best = ones.max(n - ones);
    for (pos, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            ones_below += 1;
        } else {
            zeros_below += 1;
        }
        let tied_next = pos + 1 < n && values[order[pos + 1]] == values[i];
        if tied_next {
            continue;
        }
        let correct = zeros_below + (ones - ones_below);
        best = best.max(correct).max(n - correct);
    }
    best as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_probabilities_give_zero_error() {
        let data = CategoricalDataset::from_rows(vec![2, 3], &[vec![Some(1), Some(2)], vec![Some(0), None]]).unwrap();
        let probs = PredictiveProbs::from_nested(&[
            vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0, 0.0]],
        ]);
        assert_eq!(classification_error(&probs, &data), Some(0.0));
        let flipped = PredictiveProbs::from_nested(&[
            vec![vec![1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.2, 0.3, 0.5]],
        ]);
        assert_eq!(classification_error(&flipped, &data), Some(1.0 / 3.0));
    }

    #[test]
    fn all_missing_has_no_error() {
        let data = CategoricalDataset::new(vec![2], vec![None, None]).unwrap();
        let probs = PredictiveProbs::from_nested(&[vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]]);
        assert_eq!(classification_error(&probs, &data), None);
        assert_eq!(majority_baseline_error(&data), None);
    }

    #[test]
    fn ties_predict_lowest_index() {
        let probs = PredictiveProbs::from_nested(&[vec![vec![0.4, 0.4, 0.2]]]);
        assert_eq!(probs.predicted(0, 0), 0);
    }

    #[test]
    fn majority_baseline() {
        let data = CategoricalDataset::from_rows(
            vec![2, 3],
            &[
                vec![Some(1), Some(0)],
                vec![Some(1), Some(2)],
                vec![Some(0), Some(2)],
                vec![Some(1), None],
            ],
        )
        .unwrap();
        // variable 0: 3 of 4 are category 1; variable 1: 2 of 3 are category 2
        assert_eq!(majority_baseline_error(&data), Some(2.0 / 7.0));
    }

    #[test]
    fn threshold_classifier() {
        assert_eq!(threshold_accuracy(&[-2.0, -1.0, 1.0, 2.0], &[0, 0, 1, 1]), 1.0);
        assert_eq!(threshold_accuracy(&[-2.0, -1.0, 1.0, 2.0], &[1, 1, 0, 0]), 1.0);
        assert_eq!(threshold_accuracy(&[-2.0, -1.0, 1.0, 2.0], &[0, 1, 0, 1]), 0.75);
        // tied values cannot be split apart
        assert_eq!(threshold_accuracy(&[0.0, 0.0], &[0, 1]), 0.5);
    }
}
