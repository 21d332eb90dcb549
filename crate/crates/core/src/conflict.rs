//! Linear position models, conflict degrees, and the flow switch.
//!
//! The conflict degree of a position is the number of keys a linear model
//! sends there. The tail conflict degree is the `gamma`-quantile of the
//! degrees over occupied positions, and it drives both the flow on/off
//! decision and the bucket/dense-node capacities of the index.

use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_GAMMA: f64 = 0.99;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConflictError {
    #[error("histogram has no occupied positions")]
    EmptyHistogram,
    #[error("original and transformed key sets differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
}

impl LinearModel {
    /// `round_half_up(slope * key + intercept)`.
    #[inline]
    pub fn predict(&self, key: f64) -> i64 {
        let p = (self.slope * key + self.intercept + 0.5).floor();
        // saturating float->int cast; NaN becomes 0
        p as i64
    }

    /// Prediction clamped into `[0, size)`.
    #[inline]
    pub fn predict_clamped(&self, key: f64, size: usize) -> usize {
        let p = self.predict(key);
        p.clamp(0, size as i64 - 1) as usize
    }
}

/// Ordinary least squares. A single point, or keys with no spread, yields a
/// flat model through the mean position.
pub fn fit_linear(keys: &[f64], positions: &[f64]) -> LinearModel {
    assert_eq!(keys.len(), positions.len());
    let n = keys.len();
    if n == 0 {
        return LinearModel {
            slope: 0.0,
            intercept: 0.0,
        };
    }
    let inv = 1.0 / n as f64;
    let mean_x = keys.iter().sum::<f64>() * inv;
    let mean_y = positions.iter().sum::<f64>() * inv;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in keys.iter().zip(positions) {
        let dx = x - mean_x;
        sxx += dx * dx;
        sxy += dx * (y - mean_y);
    }
    let slope = sxy / sxx;
    if n == 1 || !(sxx > 0.0) || !slope.is_finite() {
        return LinearModel {
            slope: 0.0,
            intercept: mean_y,
        };
    }
    LinearModel {
        slope,
        intercept: mean_y - slope * mean_x,
    }
}

/// Fits keys (sorted) against scaled ranks `i * alpha`.
pub fn fit_scaled_ranks(keys: &[f64], alpha: f64) -> LinearModel {
    let positions: Vec<f64> = (0..keys.len()).map(|i| i as f64 * alpha).collect();
    fit_linear(keys, &positions)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConflictHistogram {
    pub degrees: BTreeMap<i64, usize>,
}

impl ConflictHistogram {
    /// Number of occupied positions.
    pub fn occupied(&self) -> usize {
        self.degrees.len()
    }

    pub fn total(&self) -> usize {
        self.degrees.values().sum()
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.values().copied().max().unwrap_or(0)
    }

    /// `(degree, number of positions with that degree)`, ascending.
    pub fn degree_counts(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for &d in self.degrees.values() {
            *out.entry(d).or_insert(0) += 1;
        }
        out
    }
}

pub fn conflict_degrees(keys: &[f64], model: &LinearModel) -> ConflictHistogram {
    let mut degrees = BTreeMap::new();
    for &k in keys {
        *degrees.entry(model.predict(k)).or_insert(0) += 1;
    }
    ConflictHistogram { degrees }
}

/// The rank-`t` degree in ascending order, `t = clamp(floor(m * gamma), 1, m)`.
pub fn tail_conflict_degree(hist: &ConflictHistogram, gamma: f64) -> Result<usize, ConflictError> {
    let m = hist.occupied();
    if m == 0 {
        return Err(ConflictError::EmptyHistogram);
    }
    let t = ((m as f64 * gamma).floor() as usize).clamp(1, m);
    let mut sorted: Vec<usize> = hist.degrees.values().copied().collect();
    let (_, nth, _) = sorted.select_nth_unstable(t - 1);
    Ok(*nth)
}

/// Tail conflict degree of a key set under a single fit against `rank * alpha`.
/// Keys need not be sorted.
pub fn tail_conflict_of(keys: &[f64], alpha: f64, gamma: f64) -> Result<usize, ConflictError> {
    let mut sorted = keys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let model = fit_scaled_ranks(&sorted, alpha);
    tail_conflict_degree(&conflict_degrees(&sorted, &model), gamma)
}

/// The core rule: keep the flow unless it makes the tail strictly worse.
#[inline]
pub fn flow_improves(tail_before: usize, tail_after: usize) -> bool {
    tail_after <= tail_before
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchDecision {
    pub use_flow: bool,
    pub tail_before: usize,
    pub tail_after: usize,
    /// Transformed keys are pairwise distinct.
    pub injective: bool,
    /// Transformed keys are strictly increasing in the original order.
    pub order_preserving: bool,
}

/// Compares tail conflict degrees of the original and transformed key sets.
/// `original` must be sorted and `transformed[i]` must be the image of
/// `original[i]`. The flow is rejected when it worsens the tail or maps two
/// keys to the same value.
pub fn switch_decision(
    original: &[f64],
    transformed: &[f64],
    alpha: f64,
    gamma: f64,
) -> Result<SwitchDecision, ConflictError> {
    if original.len() != transformed.len() {
        return Err(ConflictError::LengthMismatch(original.len(), transformed.len()));
    }
    let tail_before = tail_conflict_degree(
        &conflict_degrees(original, &fit_scaled_ranks(original, alpha)),
        gamma,
    )?;
    let order_preserving = transformed.windows(2).all(|w| w[0] < w[1]);
    let mut sorted = transformed.to_vec();
    if !order_preserving {
        sorted.sort_by(f64::total_cmp);
    }
    let injective = sorted.windows(2).all(|w| w[0] < w[1]);
    let tail_after = tail_conflict_degree(&conflict_degrees(&sorted, &fit_scaled_ranks(&sorted, alpha)), gamma)?;
    Ok(SwitchDecision {
        use_flow: injective && flow_improves(tail_before, tail_after),
        tail_before,
        tail_after,
        injective,
        order_preserving,
    })
}
