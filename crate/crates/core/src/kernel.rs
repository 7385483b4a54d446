//! ARD squared-exponential kernel
//! `k(x, x') = σ_f² exp(-½ Σ_q α_q (x_q - x'_q)²)`, its Gram matrices and the
//! derivatives of kernel entries with respect to inputs and log-hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};
use crate::scalar::Scalar;

/// Hyperparameters of one ARD kernel, stored on the log scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams<T> {
    log_signal_variance: T,
    log_ard_weights: Vec<T>,
}

impl<T: Scalar> KernelParams<T> {
    /// `signal_variance` must be positive and every ARD weight non-negative.
    pub fn new(signal_variance: T, ard_weights: &[T]) -> Result<Self> {
        if !(signal_variance > T::zero()) || !signal_variance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "signal variance must be positive, got {signal_variance}"
            )));
        }
        if let Some(a) = ard_weights.iter().find(|a| !(**a >= T::zero()) || !a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ARD weights must be non-negative, got {a}"
            )));
        }
        Ok(Self {
            log_signal_variance: signal_variance.ln(),
            log_ard_weights: ard_weights.iter().map(|a| a.ln()).collect(),
        })
    }

    pub fn from_log(log_signal_variance: T, log_ard_weights: Vec<T>) -> Self {
        Self {
            log_signal_variance,
            log_ard_weights,
        }
    }

    /// Unit signal variance and unit ARD weights over `latent_dim` dimensions.
    pub fn unit(latent_dim: usize) -> Self {
        Self::from_log(T::zero(), vec![T::zero(); latent_dim])
    }

    #[inline]
    pub fn latent_dim(&self) -> usize {
        self.log_ard_weights.len()
    }

    #[inline]
    pub fn signal_variance(&self) -> T {
        self.log_signal_variance.exp()
    }

    pub fn ard_weights(&self) -> Vec<T> {
        self.log_ard_weights.iter().map(|v| v.exp()).collect()
    }

    pub fn log_signal_variance(&self) -> T {
        self.log_signal_variance
    }

    pub fn log_ard_weights(&self) -> &[T] {
        &self.log_ard_weights
    }

    pub fn log_signal_variance_mut(&mut self) -> &mut T {
        &mut self.log_signal_variance
    }

    pub fn log_ard_weights_mut(&mut self) -> &mut [T] {
        &mut self.log_ard_weights
    }
}

/// Gradient of a scalar with respect to `(log σ_f², log α_1..log α_Q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParamGrad<T> {
    pub d_log_signal_variance: T,
    pub d_log_ard_weights: Vec<T>,
}

impl<T: Scalar> KernelParamGrad<T> {
    pub fn zeros(latent_dim: usize) -> Self {
        Self {
            d_log_signal_variance: T::zero(),
            d_log_ard_weights: vec![T::zero(); latent_dim],
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.d_log_signal_variance += other.d_log_signal_variance;
        for (a, b) in self.d_log_ard_weights.iter_mut().zip(&other.d_log_ard_weights) {
            *a += *b;
        }
    }
}

/// Weighted squared distance in expanded form, clamped at zero.
#[inline]
pub(crate) fn weighted_sq_dist<T: Scalar>(x: &[T], y: &[T], alpha: &[T]) -> T {
    let mut xx = T::zero();
    let mut yy = T::zero();
    let mut xy = T::zero();
    for q in 0..alpha.len() {
        let a = alpha[q];
        xx += a * x[q] * x[q];
        yy += a * y[q] * y[q];
        xy += a * x[q] * y[q];
    }
    (xx + yy - (xy + xy)).max(T::zero())
}

#[inline]
pub(crate) fn eval_with_alpha<T: Scalar>(x: &[T], y: &[T], signal_variance: T, alpha: &[T]) -> T {
    signal_variance * (-T::lit(0.5) * weighted_sq_dist(x, y, alpha)).exp()
}

/// Accumulates the contribution of `adjoint · ∂k(x, z)` into the input and
/// hyperparameter gradients, given the already evaluated entry `k`.
#[inline]
pub(crate) fn backprop_entry<T: Scalar>(
    x: &[T],
    z: &[T],
    k: T,
    adjoint: T,
    alpha: &[T],
    dx: Option<&mut [T]>,
    dz: Option<&mut [T]>,
    dhyp: &mut KernelParamGrad<T>,
) {
    if adjoint == T::zero() {
        return;
    }
    let ak = adjoint * k;
    dhyp.d_log_signal_variance += ak;
    let half = T::lit(0.5);
    let mut dx = dx;
    let mut dz = dz;
    for q in 0..alpha.len() {
        let diff = x[q] - z[q];
        let t = ak * alpha[q] * diff;
        dhyp.d_log_ard_weights[q] -= half * t * diff;
        if let Some(dx) = dx.as_deref_mut() {
            dx[q] -= t;
        }
        if let Some(dz) = dz.as_deref_mut() {
            dz[q] += t;
        }
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub fn eval_kernel<T: Scalar>(x: &[T], x2: &[T], p: &KernelParams<T>) -> Result<T> {
    check_len(x.len(), x2.len())?;
    check_len(p.latent_dim(), x.len())?;
    Ok(eval_with_alpha(x, x2, p.signal_variance(), &p.ard_weights()))
}

/// Symmetric Gram matrix of the rows of `x`; the diagonal is exactly `σ_f²`.
pub fn gram<T: Scalar>(x: &Matrix<T>, p: &KernelParams<T>) -> Result<SymMatrix<T>> {
    check_len(p.latent_dim(), x.cols())?;
    let sf2 = p.signal_variance();
    let alpha = p.ard_weights();
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = sf2;
        for j in 0..i {
            let v = eval_with_alpha(x.row(i), x.row(j), sf2, &alpha);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(SymMatrix::from_symmetric_unchecked(k))
}

/// Cross-covariance between rows of `x` (A×Q) and rows of `z` (M×Q).
pub fn cross_gram<T: Scalar>(x: &Matrix<T>, z: &Matrix<T>, p: &KernelParams<T>) -> Result<Matrix<T>> {
    check_len(x.cols(), z.cols())?;
    check_len(p.latent_dim(), x.cols())?;
    let sf2 = p.signal_variance();
    let alpha = p.ard_weights();
    Ok(Matrix::from_fn(x.rows(), z.rows(), |a, m| {
        eval_with_alpha(x.row(a), z.row(m), sf2, &alpha)
    }))
}

/// Entrywise derivatives of `cross_gram(x, z, p)` with respect to the
/// log-hyperparameters.
#[derive(Clone, Debug)]
pub struct KernelGrads<T> {
    pub d_log_signal_variance: Matrix<T>,
    /// One A×M matrix per latent dimension.
    pub d_log_ard_weights: Vec<Matrix<T>>,
}

pub fn kernel_param_grads<T: Scalar>(x: &Matrix<T>, z: &Matrix<T>, p: &KernelParams<T>) -> Result<KernelGrads<T>> {
    let k = cross_gram(x, z, p)?;
    let alpha = p.ard_weights();
    let half = T::lit(0.5);
    let d_log_ard_weights = (0..p.latent_dim())
        .map(|q| {
            Matrix::from_fn(x.rows(), z.rows(), |a, m| {
                let diff = x[(a, q)] - z[(m, q)];
                -half * alpha[q] * diff * diff * k[(a, m)]
            })
        })
        .collect();
    Ok(KernelGrads {
        d_log_signal_variance: k,
        d_log_ard_weights,
    })
}
