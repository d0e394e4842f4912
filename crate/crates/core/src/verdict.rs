use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Outcome of comparing a dissimilarity score against a threshold.
/// `mispronounced` is always `score > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionVerdict<T = f64> {
    pub score: T,
    pub threshold: T,
    pub mispronounced: bool,
}

impl<T: Real> DetectionVerdict<T> {
    pub fn new(score: T, threshold: T) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::NonFinite("detection score".into()));
        }
        if !(threshold >= T::zero()) {
            return Err(Error::invalid("threshold must be non-negative"));
        }
        Ok(Self {
            score,
            threshold,
            mispronounced: score > threshold,
        })
    }
}
