use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelParamGrad;
use crate::linalg::{Matrix, SymMatrix};
use crate::scalar::Scalar;

/// Index of entry `(i, j)`, `j <= i`, in a row-packed lower triangle.
#[inline]
pub(crate) fn packed_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

#[inline]
pub(crate) fn packed_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Variational posterior over latent points and inducing variables.
///
/// * `q(x_nq) = N(x_means[n, q], exp(x_log_vars[n, q]))`
/// * `q(u_dk) = N(u_means[d].row(k), Σ_d)` with `Σ_d = L_d L_dᵀ` shared across
///   the categories of variable `d`. `L_d` is stored row-packed in
///   `u_cov_raw[d]` with its diagonal on the log scale, so every `Σ_d` is SPD.
/// * `inducing_inputs` holds the M×Q inducing locations shared by all weight
///   functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalPosterior<T> {
    pub x_means: Matrix<T>,
    pub x_log_vars: Matrix<T>,
    pub inducing_inputs: Matrix<T>,
    pub u_means: Vec<Matrix<T>>,
    pub u_cov_raw: Vec<Vec<T>>,
}

impl<T: Scalar> VariationalPosterior<T> {
    /// Posterior with the given latent means, constant latent variance,
    /// zero inducing means and `Σ_d = u_cov_scale · I`.
    pub fn new(
        x_means: Matrix<T>,
        x_var: T,
        inducing_inputs: Matrix<T>,
        cardinalities: &[usize],
        u_cov_scale: T,
    ) -> Result<Self> {
        if !(x_var > T::zero()) || !(u_cov_scale > T::zero()) {
            return Err(Error::NonPositiveVariance(x_var.min(u_cov_scale).as_f64()));
        }
        if inducing_inputs.cols() != x_means.cols() {
            return Err(Error::DimensionMismatch {
                expected: x_means.cols(),
                found: inducing_inputs.cols(),
            });
        }
        let m = inducing_inputs.rows();
        let log_sd = u_cov_scale.sqrt().ln();
        let mut raw = vec![T::zero(); packed_len(m)];
        for i in 0..m {
            raw[packed_index(i, i)] = log_sd;
        }
        Ok(Self {
            x_log_vars: Matrix::from_fn(x_means.rows(), x_means.cols(), |_, _| x_var.ln()),
            x_means,
            inducing_inputs,
            u_means: cardinalities.iter().map(|&k| Matrix::zeros(k, m)).collect(),
            u_cov_raw: vec![raw; cardinalities.len()],
        })
    }

    #[inline]
    pub fn n_obs(&self) -> usize {
        self.x_means.rows()
    }

    #[inline]
    pub fn latent_dim(&self) -> usize {
        self.x_means.cols()
    }

    #[inline]
    pub fn n_inducing(&self) -> usize {
        self.inducing_inputs.rows()
    }

    #[inline]
    pub fn n_vars(&self) -> usize {
        self.u_means.len()
    }

    #[inline]
    pub fn x_var(&self, n: usize, q: usize) -> T {
        self.x_log_vars[(n, q)].exp()
    }

    /// Lower-triangular factor `L_d` of `Σ_d`.
    pub fn u_cov_factor(&self, d: usize) -> Matrix<T> {
        let m = self.n_inducing();
        let raw = &self.u_cov_raw[d];
        Matrix::from_fn(m, m, |i, j| match j.cmp(&i) {
            std::cmp::Ordering::Less => raw[packed_index(i, j)],
            std::cmp::Ordering::Equal => raw[packed_index(i, i)].exp(),
            std::cmp::Ordering::Greater => T::zero(),
        })
    }

    pub fn u_cov(&self, d: usize) -> SymMatrix<T> {
        let l = self.u_cov_factor(d);
        let m = l.rows();
        let mut s = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = (0..=j).fold(T::zero(), |acc, k| acc + l[(i, k)] * l[(j, k)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        SymMatrix::from_symmetric_unchecked(s)
    }

    /// Sets `Σ_d` from a lower-triangular factor with positive diagonal.
    pub fn set_u_cov_factor(&mut self, d: usize, l: &Matrix<T>) -> Result<()> {
        let m = self.n_inducing();
        if l.rows() != m || l.cols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: l.rows(),
            });
        }
        let raw = &mut self.u_cov_raw[d];
        for i in 0..m {
            for j in 0..i {
                raw[packed_index(i, j)] = l[(i, j)];
            }
            let diag = l[(i, i)];
            if !(diag > T::zero()) {
                return Err(Error::NonPositiveVariance(diag.as_f64()));
            }
            raw[packed_index(i, i)] = diag.ln();
        }
        Ok(())
    }

    /// Checks shapes against a dataset's cardinalities.
    pub fn check_shapes(&self, cardinalities: &[usize]) -> Result<()> {
        let mismatch = |expected, found| Err(Error::DimensionMismatch { expected, found });
        let (n, q, m) = (self.n_obs(), self.latent_dim(), self.n_inducing());
        if self.x_log_vars.rows() != n || self.x_log_vars.cols() != q {
            return mismatch(n * q, self.x_log_vars.rows() * self.x_log_vars.cols());
        }
        if self.inducing_inputs.cols() != q {
            return mismatch(q, self.inducing_inputs.cols());
        }
        if self.u_means.len() != cardinalities.len() || self.u_cov_raw.len() != cardinalities.len() {
            return mismatch(cardinalities.len(), self.u_means.len());
        }
        for (d, &k) in cardinalities.iter().enumerate() {
            if self.u_means[d].rows() != k || self.u_means[d].cols() != m {
                return mismatch(k * m, self.u_means[d].rows() * self.u_means[d].cols());
            }
            if self.u_cov_raw[d].len() != packed_len(m) {
                return mismatch(packed_len(m), self.u_cov_raw[d].len());
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.x_means.is_finite()
            && self.x_log_vars.is_finite()
            && self.inducing_inputs.is_finite()
            && self.u_means.iter().all(Matrix::is_finite)
            && self.u_cov_raw.iter().flatten().all(|v| v.is_finite())
    }
}

/// Gradient of a scalar with respect to every free parameter of a
/// [`VariationalPosterior`], in the same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorGrad<T> {
    pub x_means: Matrix<T>,
    pub x_log_vars: Matrix<T>,
    pub inducing_inputs: Matrix<T>,
    pub u_means: Vec<Matrix<T>>,
    pub u_cov_raw: Vec<Vec<T>>,
}

impl<T: Scalar> PosteriorGrad<T> {
    pub fn zeros_like(post: &VariationalPosterior<T>) -> Self {
        let z = |m: &Matrix<T>| Matrix::zeros(m.rows(), m.cols());
        Self {
            x_means: z(&post.x_means),
            x_log_vars: z(&post.x_log_vars),
            inducing_inputs: z(&post.inducing_inputs),
            u_means: post.u_means.iter().map(z).collect(),
            u_cov_raw: post.u_cov_raw.iter().map(|r| vec![T::zero(); r.len()]).collect(),
        }
    }
}

/// Gradient of the ELBO with respect to all free parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboGradients<T> {
    pub posterior: PosteriorGrad<T>,
    pub kernels: Vec<KernelParamGrad<T>>,
}
