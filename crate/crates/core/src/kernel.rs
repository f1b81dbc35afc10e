//! Radial kernels `K(v) = H(|v|^m)` used by the local-averaging estimates.
//!
//! `m` is the dimension of the window being compared, so the profile `H` can
//! be chosen once for every window length.

use crate::error::{Error, Result};

/// The profile `H` of a radial kernel. Both profiles are nonincreasing and
/// continuous with `H(0) = 1` and `t H(t) -> 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelProfile {
    /// `H(t) = exp(-t^2)`.
    #[default]
    Gaussian,
    /// `H(t) = 1` on `[0, 1]`, `2 - t` on `[1, 2]`, `0` beyond.
    CompactUniform,
}

impl KernelProfile {
    /// `H(t)` for `t >= 0`, with results below the smallest normal `f64`
    /// flushed to zero.
    pub fn profile(self, t: f64) -> f64 {
        let h = match self {
            KernelProfile::Gaussian => (-t * t).exp(),
            KernelProfile::CompactUniform => (2.0 - t).clamp(0.0, 1.0),
        };
        flush(h)
    }

    /// Kernel weight from a squared Euclidean distance `sq_norm` and the
    /// exponent `m`: `H(sqrt(sq_norm)^m)`.
    #[inline]
    pub fn weight(self, sq_norm: f64, exponent: u32) -> f64 {
        let h = match self {
            // t^2 = (|v|^2)^m
            KernelProfile::Gaussian => (-sq_norm.powi(exponent as i32)).exp(),
            KernelProfile::CompactUniform => {
                let t = sq_norm.sqrt().powi(exponent as i32);
                (2.0 - t).clamp(0.0, 1.0)
            }
        };
        flush(h)
    }
}

#[inline]
fn flush(h: f64) -> f64 {
    if h < f64::MIN_POSITIVE {
        0.0
    } else {
        h
    }
}

/// `H(|v|_2^exponent)`.
pub fn kernel_eval(profile: KernelProfile, v: &[f64], exponent: u32) -> Result<f64> {
    if exponent == 0 {
        return Err(Error::Argument("kernel exponent must be positive".into()));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("kernel argument component {x} is not finite")));
    }
    let sq: f64 = v.iter().map(|x| x * x).sum();
    Ok(profile.weight(sq, exponent))
}
