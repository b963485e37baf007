//! The two algebraic views of a synchronization cycle.
//!
//! [`TimestampMatrix`] holds one round per row, columns `(t1, t2, t3, t4)`.
//! Without random delays it is exactly rank two: every row is
//! `c + t1_i * [1, skew, skew, 1]` for a constant row `c`.
//!
//! [`StackedSystem`] is the linear model used for estimation,
//!
//! ```text
//! [ t1_i]   [ t2_i  -1  -1] [psi1]   [X_i]
//! [-t4_i] = [-t3_i  +1  -1] [psi2] - [Y_i]
//!                           [psi3]
//! ```
//!
//! with `psi1 = 1/skew`, `psi2 = offset/skew`, `psi3 = d`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clock_model::ClockParams;
use crate::error::{Error, Result};
use crate::exchange_sim::{read_timestamp_csv, write_timestamp_csv, ExchangeLog};

#[derive(Debug, Clone, PartialEq)]
pub struct TimestampMatrix {
    entries: DMatrix<f64>,
}

impl TimestampMatrix {
    pub const COLUMNS: usize = 4;

    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.ncols() != Self::COLUMNS {
            return Err(Error::BadColumnCount(entries.ncols()));
        }
        if entries.nrows() < 2 {
            return Err(Error::TooFewRounds(entries.nrows()));
        }
        Ok(TimestampMatrix { entries })
    }

    pub fn from_rows(rows: &[[f64; 4]]) -> Result<Self> {
        let entries = DMatrix::from_fn(rows.len(), Self::COLUMNS, |i, j| rows[i][j]);
        Self::new(entries)
    }

    /// One row per round, columns in chronological order `(t1, t2, t3, t4)`.
    pub fn from_log(log: &ExchangeLog) -> Result<Self> {
        let rows: Vec<[f64; 4]> = log.rows.iter().map(|r| r.as_array()).collect();
        Self::from_rows(&rows)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn n_rounds(&self) -> usize {
        self.entries.nrows()
    }

    pub fn row(&self, i: usize) -> [f64; 4] {
        [
            self.entries[(i, 0)],
            self.entries[(i, 1)],
            self.entries[(i, 2)],
            self.entries[(i, 3)],
        ]
    }

    pub fn rows(&self) -> impl Iterator<Item = [f64; 4]> + '_ {
        (0..self.n_rounds()).map(|i| self.row(i))
    }

    /// Singular values in nonincreasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        crate::denoise::SvdFactors::compute(&self.entries).sigma
    }

    /// Same `round,t1,t2,t3,t4` layout as an exchange log.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_timestamp_csv(path, self.rows())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let rows = read_timestamp_csv(path)?;
        Self::from_rows(&rows).map_err(|e| Error::Parse {
            path: path.into(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    /// `[t1_1 .. t1_N, -t4_1 .. -t4_N]`
    pub tb: DVector<f64>,
    /// `2N x 3` design matrix.
    pub ta: DMatrix<f64>,
    pub n_rounds: usize,
}

impl StackedSystem {
    fn from_round_iter(n: usize, rows: impl Iterator<Item = [f64; 4]>) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewRounds(n));
        }
        let mut tb = DVector::zeros(2 * n);
        let mut ta = DMatrix::zeros(2 * n, 3);
        for (i, [t1, t2, t3, t4]) in rows.enumerate() {
            tb[i] = t1;
            tb[n + i] = -t4;
            ta[(i, 0)] = t2;
            ta[(i, 1)] = -1.0;
            ta[(i, 2)] = -1.0;
            ta[(n + i, 0)] = -t3;
            ta[(n + i, 1)] = 1.0;
            ta[(n + i, 2)] = -1.0;
        }
        Ok(StackedSystem {
            tb,
            ta,
            n_rounds: n,
        })
    }

    pub fn from_log(log: &ExchangeLog) -> Result<Self> {
        Self::from_round_iter(log.rows.len(), log.rows.iter().map(|r| r.as_array()))
    }

    /// `tb - ta * psi`
    pub fn residual(&self, psi: &ParamVector) -> DVector<f64> {
        &self.tb - &self.ta * psi.as_vector()
    }
}

pub fn build_stacked(matrix: &TimestampMatrix) -> Result<StackedSystem> {
    StackedSystem::from_round_iter(matrix.n_rounds(), matrix.rows())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
}

impl ParamVector {
    pub fn from_params(clock: &ClockParams, fixed_delay: f64) -> Self {
        ParamVector {
            psi1: 1.0 / clock.skew,
            psi2: clock.offset / clock.skew,
            psi3: fixed_delay,
        }
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&[self.psi1, self.psi2, self.psi3])
    }
}

/// Recovers `(skew, offset)` and the fixed delay from a parameter vector.
///
/// A non-positive or non-finite `psi1` means the least-squares fit did not
/// produce a physical clock and is reported as degenerate.
pub fn params_from_psi(psi: &ParamVector) -> Result<(ClockParams, f64)> {
    if !(psi.psi1.is_finite() && psi.psi1 > 0.0) {
        return Err(Error::DegenerateParams(psi.psi1));
    }
    let clock = ClockParams::new(1.0 / psi.psi1, psi.psi2 / psi.psi1)
        .map_err(|_| Error::DegenerateParams(psi.psi1))?;
    Ok((clock, psi.psi3))
}
