//! Joint least-squares (Gaussian maximum-likelihood) estimation of skew,
//! offset and fixed delay from a stacked system.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_forms::{params_from_psi, ParamVector, StackedSystem};

/// Relative pivot size below which the design matrix is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MLE_RAW")]
    MleRaw,
    #[serde(rename = "MLE_SVD")]
    MleSvd,
    #[serde(rename = "MLE_LRMA")]
    MleLrma,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::MleRaw, Method::MleSvd, Method::MleLrma];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::MleRaw => "MLE_RAW",
            Method::MleSvd => "MLE_SVD",
            Method::MleLrma => "MLE_LRMA",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mle_raw" | "raw" => Ok(Method::MleRaw),
            "mle_svd" | "svd" => Ok(Method::MleSvd),
            "mle_lrma" | "lrma" => Ok(Method::MleLrma),
            _ => Err(format!("unknown method {s:?} (expected raw, svd or lrma)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub d_hat: f64,
    /// `||tb - ta * psi_hat||`
    pub residual_norm: f64,
}

impl EstimateReport {
    pub const CSV_HEADER: &'static str = "method,alpha_hat,beta_hat,d_hat,residual_norm";

    pub fn psi(&self) -> ParamVector {
        ParamVector {
            psi1: 1.0 / self.alpha_hat,
            psi2: self.beta_hat / self.alpha_hat,
            psi3: self.d_hat,
        }
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.method, self.alpha_hat, self.beta_hat, self.d_hat, self.residual_norm
        )
    }
}

/// Least-squares solution of the stacked system via Householder QR.
///
/// Timestamps are shifted by the first send time `t1_1` before factoring
/// (B-clock entries by `t1_1`, A-clock entries by the same amount), so that
/// large absolute times do not swamp the two intercept columns. The offset
/// is shifted back afterwards: `offset = offset' - (skew - 1) * t1_1`.
pub fn mle_estimate(system: &StackedSystem, method: Method) -> Result<EstimateReport> {
    let n = system.n_rounds;
    if n < 2 {
        return Err(Error::TooFewRounds(n));
    }
    let shift = system.tb[0];
    let mut ta = system.ta.clone();
    let mut tb = system.tb.clone();
    for i in 0..2 * n {
        // +1 on uplink rows, -1 on downlink rows
        let sign = -ta[(i, 1)];
        tb[i] -= shift * sign;
        ta[(i, 0)] -= shift * sign;
    }

    let psi_shifted = solve_least_squares(&ta, &tb)?;
    let residual_norm = (&tb - &ta * &psi_shifted).norm();
    let (clock, d_hat) = params_from_psi(&ParamVector {
        psi1: psi_shifted[0],
        psi2: psi_shifted[1],
        psi3: psi_shifted[2],
    })?;
    let alpha_hat = clock.skew;
    let beta_hat = clock.offset - (alpha_hat - 1.0) * shift;

    Ok(EstimateReport {
        method,
        alpha_hat,
        beta_hat,
        d_hat,
        residual_norm,
    })
}

fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let cols = a.ncols();
    let qr = a.clone().qr();
    let r = qr.r();
    let max_pivot = (0..cols).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let rank = (0..cols)
        .filter(|&j| r[(j, j)].abs() > RANK_TOL * max_pivot)
        .count();
    if rank < cols || !max_pivot.is_finite() || max_pivot == 0.0 {
        return Err(Error::SingularSystem { rank });
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or(Error::SingularSystem { rank })
}

/// Gaussian log-likelihood `N ln(1/(2 pi s2)) - ||tb - ta psi||^2 / (2 s2)`.
pub fn log_likelihood(system: &StackedSystem, psi: &ParamVector, sigma2: f64) -> Result<f64> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::InvalidVariance(sigma2));
    }
    let n = system.n_rounds as f64;
    let rss = system.residual(psi).norm_squared();
    Ok(n * (1.0 / (2.0 * PI * sigma2)).ln() - rss / (2.0 * sigma2))
}
