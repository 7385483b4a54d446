use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::inference::{Parameters, VariationalPosterior};
use crate::kernel::KernelParams;
use crate::linalg::Matrix;
use crate::model::{std_normal, CategoricalDataset, ModelConfig};
use crate::scalar::Scalar;

const INIT_X_VAR: f64 = 0.1;
const INIT_U_COV: f64 = 0.1;
const FALLBACK_SD: f64 = 0.1;
const PERTURB_SD: f64 = 0.1;

/// One-hot encoding with every column centered on its observed mean; missing
/// entries contribute zero after centering.
fn centered_one_hot(data: &CategoricalDataset) -> DMatrix<f64> {
    let n = data.n_obs();
    let width: usize = data.cardinalities().iter().sum();
    let mut out = DMatrix::zeros(n, width);
    let mut offset = 0;
    for (d, &k) in data.cardinalities().iter().enumerate() {
        let mut freq = vec![0.0; k];
        let mut seen = 0usize;
        for i in 0..n {
            if let Some(y) = data.get(i, d) {
                freq[y] += 1.0;
                seen += 1;
            }
        }
        if seen > 0 {
            freq.iter_mut().for_each(|f| *f /= seen as f64);
        }
        for i in 0..n {
            if let Some(y) = data.get(i, d) {
                for (c, f) in freq.iter().enumerate() {
                    out[(i, offset + c)] = if c == y { 1.0 } else { 0.0 } - f;
                }
            }
        }
        offset += k;
    }
    out
}

/// Principal-component scores of the rows of `data`, each column scaled to
/// unit sample variance. Directions with negligible variance are replaced by
/// small Gaussian noise.
pub fn pca_latents<T: Scalar, R: Rng + ?Sized>(data: &CategoricalDataset, q: usize, rng: &mut R) -> Result<Matrix<T>> {
    let n = data.n_obs();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, found: n });
    }
    let xc = centered_one_hot(data);
    let gram = &xc * xc.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let floor = 1e-10 * top.max(1.0);
    let scale = ((n - 1) as f64).sqrt();

    let mut x = Matrix::zeros(n, q);
    for j in 0..q {
        let usable = j < n && eig.eigenvalues[order[j]] > floor;
        if usable {
            let v = eig.eigenvectors.column(order[j]);
            let pivot = (0..n).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                x[(i, j)] = T::lit(sign * scale * v[i]);
            }
        } else {
            for i in 0..n {
                x[(i, j)] = T::lit(FALLBACK_SD) * std_normal::<T, R>(rng);
            }
        }
    }
    Ok(x)
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x - *y).as_f64().powi(2)).sum()
}

/// `m` inducing inputs drawn without replacement from the distinct rows of
/// `x`, each new row chosen with probability proportional to its squared
/// distance from the rows already taken so that near-duplicates are
/// unlikely. If there are fewer than `m` distinct rows the rest are perturbed
/// copies.
fn pick_inducing<T: Scalar, R: Rng + ?Sized>(x: &Matrix<T>, m: usize, rng: &mut R) -> Matrix<T> {
    let mut distinct: Vec<usize> = Vec::new();
    for i in 0..x.rows() {
        if !distinct.iter().any(|&j| x.row(j) == x.row(i)) {
            distinct.push(i);
        }
    }
    let take = m.min(distinct.len());
    let mut chosen: Vec<usize> = Vec::with_capacity(take);
    let mut nearest = vec![f64::INFINITY; distinct.len()];
    for _ in 0..take {
        let pick = if chosen.is_empty() {
            rng.random_range(0..distinct.len())
        } else {
            let total: f64 = nearest.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = nearest.iter().rposition(|&w| w > 0.0).expect("an unchosen row remains");
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        chosen.push(pick);
        let row = x.row(distinct[pick]);
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(sq_dist(row, x.row(distinct[i])));
        }
    }
    let mut rows: Vec<Vec<T>> = chosen.iter().map(|&i| x.row(distinct[i]).to_vec()).collect();
    for extra in 0..m - take {
        let base = x.row(distinct[extra % distinct.len()]);
        rows.push(
            base.iter()
                .map(|&v| v + T::lit(PERTURB_SD) * std_normal::<T, R>(rng))
                .collect(),
        );
    }
    Matrix::from_rows(&rows).expect("rows share the latent dimension")
}

/// Starting point of the optimization: PCA latent means with variance 0.1,
/// inducing inputs picked from those means, zero inducing means with
/// covariance 0.1·I, and unit kernel hyperparameters.
pub fn initialize<T: Scalar, R: Rng + ?Sized>(
    data: &CategoricalDataset,
    config: &ModelConfig<T>,
    rng: &mut R,
) -> Result<Parameters<T>> {
    config.validate()?;
    if config.n_inducing > data.n_obs() {
        log::warn!(
            "{} inducing inputs for {} observations; some will be perturbed copies",
            config.n_inducing,
            data.n_obs()
        );
    }
    let q = config.latent_dim;
    let x = pca_latents(data, q, rng)?;
    let z = pick_inducing(&x, config.n_inducing, rng);
    let posterior = VariationalPosterior::new(x, T::lit(INIT_X_VAR), z, data.cardinalities(), T::lit(INIT_U_COV))?;
    Ok(Parameters {
        posterior,
        kernels: vec![KernelParams::unit(q); data.n_vars()],
    })
}
