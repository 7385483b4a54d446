use crate::scalar::Scalar;

/// Twelve significant digits in scientific notation, rounded half to even.
pub fn fmt_real<T: Scalar>(v: T) -> String {
    format!("{:.11e}", v.as_f64())
}
