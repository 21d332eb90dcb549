//! Key normalization and feature expansion.
//!
//! A raw key is first min-max normalized into `[0, theta]`, then split into
//! an integer part, `dims - 2` base-`theta` digits of the fraction, and the
//! residual fraction. The flow consumes these vectors; its outputs are merged
//! back into a scalar by summation.

use thiserror::Error;

/// Default scale factor: large enough that both the integer and fractional
/// components carry information for typical key ranges.
pub const DEFAULT_THETA: f64 = 1_048_576.0;
pub const DEFAULT_DIMS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("key range is degenerate (max == min)")]
    DegenerateRange,
    #[error("need at least two keys to fit a codec, got {0}")]
    TooFewKeys(usize),
    #[error("invalid codec parameter: {0}")]
    InvalidParam(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecParams {
    pub mu: f64,
    pub sigma: f64,
    pub theta: f64,
    pub dims: usize,
}

/// A `dims`-component expansion of one normalized key.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fits `mu = min`, `sigma = (max - min) / theta` over sorted keys.
pub fn fit_codec(keys: &[f64], theta: f64, dims: usize) -> Result<CodecParams, CodecError> {
    if keys.len() < 2 {
        return Err(CodecError::TooFewKeys(keys.len()));
    }
    if !(theta > 1.0) || !theta.is_finite() {
        return Err(CodecError::InvalidParam("theta must be finite and > 1"));
    }
    if dims < 2 {
        return Err(CodecError::InvalidParam("dims must be >= 2"));
    }
    let min = keys[0];
    let max = keys[keys.len() - 1];
    let sigma = (max - min) / theta;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(CodecError::DegenerateRange);
    }
    Ok(CodecParams {
        mu: min,
        sigma,
        theta,
        dims,
    })
}

impl CodecParams {
    #[inline]
    pub fn normalize(&self, key: f64) -> f64 {
        (key - self.mu) / self.sigma
    }

    pub fn expand(&self, x_norm: f64) -> FeatureVector {
        let mut out = vec![0.0; self.dims];
        self.expand_into(x_norm, &mut out);
        FeatureVector(out)
    }

    /// Writes the expansion of `x_norm` into `out` (length `dims`).
    #[inline]
    pub fn expand_into(&self, x_norm: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dims);
        let int = x_norm.floor();
        let mut frac = x_norm - int;
        out[0] = int;
        let last = self.dims - 1;
        for slot in out.iter_mut().take(last).skip(1) {
            frac *= self.theta;
            let digit = frac.floor();
            frac -= digit;
            *slot = digit;
        }
        out[last] = frac;
    }

    /// Inverse of [`expand`](Self::expand) up to rounding: the integer part
    /// plus each digit weighted by `theta^-k`, plus the residual weighted by
    /// `theta^-(dims-2)`.
    pub fn reconstruct(&self, features: &[f64]) -> f64 {
        let last = features.len() - 1;
        let mut acc = features[0];
        let mut scale = 1.0;
        for &digit in &features[1..last] {
            scale /= self.theta;
            acc += digit * scale;
        }
        acc + features[last] * scale
    }

    pub fn encode(&self, key: f64) -> FeatureVector {
        self.expand(self.normalize(key))
    }
}

/// Sums the flow outputs into a single transformed key.
#[inline]
pub fn merge(z: &[f64]) -> f64 {
    z.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(mu: f64, sigma: f64, theta: f64, dims: usize) -> CodecParams {
        CodecParams {
            mu,
            sigma,
            theta,
            dims,
        }
    }

    #[test]
    fn fit_examples() {
        let p = fit_codec(&[10.0, 20.0, 30.0], 2.0, 2).unwrap();
        assert_eq!(p, params(10.0, 10.0, 2.0, 2));
        let p = fit_codec(&[0.0, 100.0], 4.0, 2).unwrap();
        assert_eq!((p.mu, p.sigma), (0.0, 25.0));
        assert_eq!(fit_codec(&[5.0, 5.0], 2.0, 2), Err(CodecError::DegenerateRange));
        assert!(fit_codec(&[5.0], 2.0, 2).is_err());
        assert!(fit_codec(&[1.0, 2.0], 1.0, 2).is_err());
        assert!(fit_codec(&[1.0, 2.0], 2.0, 1).is_err());
    }

    #[test]
    fn normalize_examples() {
        let p = params(10.0, 10.0, 2.0, 2);
        assert_eq!(p.normalize(20.0), 1.0);
        assert_eq!(p.normalize(10.0), 0.0);
        assert_eq!(p.normalize(30.0), 2.0);
    }

    #[test]
    fn expand_two_dims() {
        let p = params(0.0, 1.0, 2.0, 2);
        assert_eq!(p.expand(3.25).0, vec![3.0, 0.25]);
        assert_eq!(p.expand(0.0).0, vec![0.0, 0.0]);
        assert_eq!(merge(&p.expand(3.25).0), 3.25);
    }

    /// Digit extraction by repeated multiply-by-theta on exact decimal
    /// arithmetic, independent of the float path.
    fn decimal_digits(int: i64, frac_millis: i64, theta: i64, dims: usize) -> Vec<f64> {
        let mut out = vec![int as f64];
        let mut num = frac_millis;
        let den = 1000;
        for _ in 0..dims - 2 {
            num *= theta;
            out.push((num / den) as f64);
            num %= den;
        }
        out.push(num as f64 / den as f64);
        out
    }

    #[test]
    fn expand_four_dims_base_ten() {
        let p = params(0.0, 1.0, 10.0, 4);
        let got = p.expand(5.271);
        let want = decimal_digits(5, 271, 10, 4);
        assert_eq!(want, vec![5.0, 2.0, 7.0, 0.1]);
        assert_eq!(&got.0[..3], &want[..3]);
        assert!((got.0[3] - want[3]).abs() < 1e-9);
        assert!((p.reconstruct(&got.0) - 5.271).abs() < 1e-12);
        assert_eq!(p.expand(0.0).0, vec![0.0; 4]);
    }

    proptest! {
        #[test]
        fn two_dim_roundtrip_is_exact(x in 0.0f64..1.0e7) {
            let p = params(0.0, 1.0, DEFAULT_THETA, 2);
            prop_assert_eq!(merge(&p.expand(x).0), x);
        }

        #[test]
        fn weighted_reconstruction(x in 0.0f64..1.0e6, dims in 3usize..6) {
            let p = params(0.0, 1.0, 1024.0, dims);
            let back = p.reconstruct(&p.expand(x).0);
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1e-300));
        }

        #[test]
        fn order_embedding(a in 0.0f64..1.0e5, b in 0.0f64..1.0e5, dims in 2usize..5) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let p = params(0.0, 1.0, 16.0, dims);
            let (u, v) = (p.expand(lo).0, p.expand(hi).0);
            prop_assert_eq!(u.partial_cmp(&v), Some(std::cmp::Ordering::Less));
        }
    }
}
