//! Affine relation between node B's local clock and the reference clock of node A.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Skew and offset of node B relative to reference node A:
/// `t_reference = skew * t_local + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockParams {
    pub skew: f64,
    pub offset: f64,
}

impl ClockParams {
    pub fn new(skew: f64, offset: f64) -> Result<Self> {
        let params = ClockParams { skew, offset };
        params.validate()?;
        Ok(params)
    }

    pub const fn identity() -> Self {
        ClockParams {
            skew: 1.0,
            offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.skew.is_finite() || self.skew <= 0.0 {
            return Err(Error::InvalidClock(format!(
                "skew must be positive and finite, got {}",
                self.skew
            )));
        }
        if !self.offset.is_finite() {
            return Err(Error::InvalidClock(format!(
                "offset must be finite, got {}",
                self.offset
            )));
        }
        Ok(())
    }

    /// Maps a node-B reading onto the reference time base.
    pub fn to_reference(&self, t_local: f64) -> f64 {
        self.skew * t_local + self.offset
    }

    /// Maps a reference reading back onto node B's time base.
    pub fn to_local(&self, t_reference: f64) -> Result<f64> {
        if self.skew == 0.0 {
            return Err(Error::InvalidClock("skew of zero is not invertible".into()));
        }
        Ok((t_reference - self.offset) / self.skew)
    }
}

impl Default for ClockParams {
    fn default() -> Self {
        Self::identity()
    }
}
