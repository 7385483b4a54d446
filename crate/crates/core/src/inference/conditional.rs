use crate::error::{Error, Result};
use crate::kernel::{eval_with_alpha, gram, KernelParamGrad, KernelParams};
use crate::linalg::{jittered_cholesky, CholeskyFactor, Matrix};
use crate::scalar::Scalar;

/// Factorized inducing-point covariance `K_MM` of one variable's kernel,
/// with the pieces needed to evaluate the sparse conditional and to push
/// gradients with respect to `K_MM` back to `Z` and the hyperparameters.
#[derive(Clone, Debug)]
pub struct InducingPrior<T> {
    z: Matrix<T>,
    kmm: Matrix<T>,
    chol: CholeskyFactor<T>,
    signal_variance: T,
    alpha: Vec<T>,
}

/// Per-category conditional means and the shared conditional variance of
/// `f_nd` given `x_n` and `U_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalF<T> {
    pub means: Vec<T>,
    /// Clamped at zero.
    pub variance: T,
    /// Value before clamping.
    pub raw_variance: T,
}

impl<T: Scalar> InducingPrior<T> {
    /// Factorizes `gram(z) + nugget·I`, escalating jitter from `base_jitter`
    /// if needed.
    pub fn new(z: &Matrix<T>, p: &KernelParams<T>, base_jitter: T, nugget: T) -> Result<Self> {
        let k = gram(z, p)?;
        let mut shifted = k.clone();
        shifted.add_diag(nugget);
        let chol = jittered_cholesky(&shifted, base_jitter)?;
        Ok(Self {
            z: z.clone(),
            kmm: k.into_matrix(),
            chol,
            signal_variance: p.signal_variance(),
            alpha: p.ard_weights(),
        })
    }

    pub fn n_inducing(&self) -> usize {
        self.z.rows()
    }

    pub fn chol(&self) -> &CholeskyFactor<T> {
        &self.chol
    }

    pub fn signal_variance(&self) -> T {
        self.signal_variance
    }

    pub(crate) fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub(crate) fn z(&self) -> &Matrix<T> {
        &self.z
    }

    /// `k(x, z_m)` for every inducing input.
    #[inline]
    pub(crate) fn cross_into(&self, x: &[T], out: &mut [T]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = eval_with_alpha(x, self.z.row(m), self.signal_variance, &self.alpha);
        }
    }

    /// Mean `k_nM K_MM⁻¹ u_k` per row `u_k` of `u`, and variance
    /// `σ_f² - k_nM K_MM⁻¹ k_Mn`.
    pub fn conditional(&self, x: &[T], u: &Matrix<T>) -> Result<ConditionalF<T>> {
        let m = self.n_inducing();
        if x.len() != self.alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alpha.len(),
                found: x.len(),
            });
        }
        if u.cols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: u.cols(),
            });
        }
        let mut kv = vec![T::zero(); m];
        self.cross_into(x, &mut kv);
        let a = self.chol.solve_vec(&kv);
        let raw_variance = self.signal_variance - dot(&kv, &a);
        let means = (0..u.rows()).map(|k| dot(&a, u.row(k))).collect();
        Ok(ConditionalF {
            means,
            variance: raw_variance.max(T::zero()),
            raw_variance,
        })
    }

    /// Pushes an adjoint with respect to every entry of `K_MM` back to the
    /// inducing inputs and log-hyperparameters. The nugget and jitter are
    /// constants.
    pub(crate) fn backprop_kmm(&self, d_kmm: &Matrix<T>, d_z: &mut Matrix<T>, d_hyp: &mut KernelParamGrad<T>) {
        let m = self.n_inducing();
        let q_dim = self.alpha.len();
        let half = T::lit(0.5);
        for r in 0..m {
            d_hyp.d_log_signal_variance += d_kmm[(r, r)] * self.kmm[(r, r)];
            for c in 0..m {
                if c == r {
                    continue;
                }
                let ak = d_kmm[(r, c)] * self.kmm[(r, c)];
                if ak == T::zero() {
                    continue;
                }
                d_hyp.d_log_signal_variance += ak;
                for q in 0..q_dim {
                    let diff = self.z[(r, q)] - self.z[(c, q)];
                    let t = ak * self.alpha[q] * diff;
                    d_hyp.d_log_ard_weights[q] -= half * t * diff;
                    d_z[(r, q)] -= t;
                    d_z[(c, q)] += t;
                }
            }
        }
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Sparse-GP conditional of the class weights at `x` given the inducing values
/// `u_d` (one row per category) at inputs `z`.
pub fn conditional_f<T: Scalar>(
    x: &[T],
    u_d: &Matrix<T>,
    z: &Matrix<T>,
    p: &KernelParams<T>,
) -> Result<ConditionalF<T>> {
    InducingPrior::new(z, p, T::lit(1e-8), T::zero())?.conditional(x, u_d)
}
