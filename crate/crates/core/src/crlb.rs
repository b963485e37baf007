//! Cramer-Rao lower bounds for the joint skew/offset estimate.
//!
//! With `t1` on B's clock and `t3` on A's clock,
//!
//! ```text
//! U = sum[ a^2 (t1 + d)^2 + a^2 s2 + (t3 - b)^2 ] / a^4
//! V = sum[ a (t1 + d) + (t3 - b) ] / a^3
//! W = sum[ a (t1 + d) - (t3 - b) ] / a^2
//! D = 2N U - a^2 V^2 - W^2
//!
//! CRLB(skew)   = 2N s2 / D
//! CRLB(offset) = s2 a^2 (2N U - V^2) / (2N D)
//! ```
//!
//! `U` carries an `a^2 s2` term, so neither bound is linear in `s2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbInputs {
    pub alpha: f64,
    pub beta: f64,
    pub d: f64,
    pub sigma2: f64,
    pub t1: Vec<f64>,
    pub t3: Vec<f64>,
}

struct Moments {
    n: f64,
    u: f64,
    v: f64,
    w: f64,
}

impl Moments {
    fn denominator(&self, alpha: f64) -> f64 {
        2.0 * self.n * self.u - alpha * alpha * self.v * self.v - self.w * self.w
    }
}

impl CrlbInputs {
    fn validate(&self) -> Result<()> {
        if self.t1.len() != self.t3.len() {
            return Err(Error::InvalidConfig(format!(
                "t1 and t3 lengths differ: {} vs {}",
                self.t1.len(),
                self.t3.len()
            )));
        }
        if self.t1.len() < 2 {
            return Err(Error::TooFewRounds(self.t1.len()));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::InvalidVariance(self.sigma2));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidClock(format!("skew {}", self.alpha)));
        }
        Ok(())
    }

    fn moments(&self) -> Moments {
        let a = self.alpha;
        let (mut u, mut v, mut w) = (0.0, 0.0, 0.0);
        for (&t1, &t3) in self.t1.iter().zip(&self.t3) {
            let up = a * (t1 + self.d);
            let down = t3 - self.beta;
            u += up * up + a * a * self.sigma2 + down * down;
            v += up + down;
            w += up - down;
        }
        Moments {
            n: self.t1.len() as f64,
            u: u / a.powi(4),
            v: v / a.powi(3),
            w: w / (a * a),
        }
    }

    fn checked_moments(&self) -> Result<Option<Moments>> {
        self.validate()?;
        if self.sigma2 == 0.0 {
            return Ok(None);
        }
        let m = self.moments();
        let den = m.denominator(self.alpha);
        if den.is_nan() || den <= 0.0 {
            return Err(Error::DegenerateGeometry(den));
        }
        Ok(Some(m))
    }
}

/// Lower bound on the variance of an unbiased skew estimate.
pub fn crlb_skew(inputs: &CrlbInputs) -> Result<f64> {
    let Some(m) = inputs.checked_moments()? else {
        return Ok(0.0);
    };
    Ok(2.0 * m.n * inputs.sigma2 / m.denominator(inputs.alpha))
}

/// Lower bound on the variance of an unbiased offset estimate.
pub fn crlb_offset(inputs: &CrlbInputs) -> Result<f64> {
    let Some(m) = inputs.checked_moments()? else {
        return Ok(0.0);
    };
    let a2 = inputs.alpha * inputs.alpha;
    let two_n = 2.0 * m.n;
    Ok(inputs.sigma2 * a2 * (two_n * m.u - m.v * m.v) / (two_n * m.denominator(inputs.alpha)))
}
