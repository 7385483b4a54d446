//! Flat view of all free parameters, shared by the optimizer and by
//! finite-difference checks.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::scalar::Scalar;

use super::posterior::{ElboGradients, VariationalPosterior};

/// Variational posterior together with the per-variable kernels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters<T> {
    pub posterior: VariationalPosterior<T>,
    pub kernels: Vec<KernelParams<T>>,
}

/// Named contiguous block of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: &'static str,
    pub range: Range<usize>,
}

fn push_group(groups: &mut Vec<ParamGroup>, name: &'static str, len: usize) {
    let start = groups.last().map_or(0, |g| g.range.end);
    groups.push(ParamGroup {
        name,
        range: start..start + len,
    });
}

impl<T: Scalar> Parameters<T> {
    /// Layout: latent means, latent log-variances, inducing inputs, inducing
    /// means, packed covariance factors, kernel log-hyperparameters.
    pub fn groups(&self) -> Vec<ParamGroup> {
        let p = &self.posterior;
        let mut g = Vec::with_capacity(6);
        push_group(&mut g, "x_means", p.x_means.as_slice().len());
        push_group(&mut g, "x_log_vars", p.x_log_vars.as_slice().len());
        push_group(&mut g, "inducing_inputs", p.inducing_inputs.as_slice().len());
        push_group(&mut g, "u_means", p.u_means.iter().map(|m| m.as_slice().len()).sum());
        push_group(&mut g, "u_cov_factors", p.u_cov_raw.iter().map(Vec::len).sum());
        push_group(
            &mut g,
            "kernel_hyperparameters",
            self.kernels.iter().map(|k| 1 + k.latent_dim()).sum(),
        );
        g
    }

    pub fn len(&self) -> usize {
        self.groups().last().map_or(0, |g| g.range.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<T> {
        let p = &self.posterior;
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(p.x_means.as_slice());
        out.extend_from_slice(p.x_log_vars.as_slice());
        out.extend_from_slice(p.inducing_inputs.as_slice());
        for m in &p.u_means {
            out.extend_from_slice(m.as_slice());
        }
        for r in &p.u_cov_raw {
            out.extend_from_slice(r);
        }
        for k in &self.kernels {
            out.push(k.log_signal_variance());
            out.extend_from_slice(k.log_ard_weights());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        let mut fill = |dst: &mut [T]| dst.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
        let p = &mut self.posterior;
        fill(p.x_means.as_mut_slice());
        fill(p.x_log_vars.as_mut_slice());
        fill(p.inducing_inputs.as_mut_slice());
        for m in &mut p.u_means {
            fill(m.as_mut_slice());
        }
        for r in &mut p.u_cov_raw {
            fill(r);
        }
        for k in &mut self.kernels {
            fill(std::slice::from_mut(k.log_signal_variance_mut()));
            fill(k.log_ard_weights_mut());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.posterior.is_finite()
            && self
                .kernels
                .iter()
                .all(|k| k.log_signal_variance().is_finite() && k.log_ard_weights().iter().all(|v| v.is_finite()))
    }
}

impl<T: Scalar> ElboGradients<T> {
    /// Same layout as [`Parameters::to_flat`].
    pub fn to_flat(&self) -> Vec<T> {
        let p = &self.posterior;
        let mut out = Vec::new();
        out.extend_from_slice(p.x_means.as_slice());
        out.extend_from_slice(p.x_log_vars.as_slice());
        out.extend_from_slice(p.inducing_inputs.as_slice());
        for m in &p.u_means {
            out.extend_from_slice(m.as_slice());
        }
        for r in &p.u_cov_raw {
            out.extend_from_slice(r);
        }
        for k in &self.kernels {
            out.push(k.d_log_signal_variance);
            out.extend_from_slice(&k.d_log_ard_weights);
        }
        out
    }
}
