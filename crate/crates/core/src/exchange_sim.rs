//! Simulation of the two-way message exchange between node B and reference node A.
//!
//! Round `i` runs as follows: B stamps `t1` on its own clock and sends a
//! request, A stamps its reception `t2` and its reply `t3` on the reference
//! clock, and B stamps the reply's arrival `t4`. Each direction sees the same
//! fixed delay `d` plus an independent zero-mean random delay, measured in
//! the sender's time base:
//!
//! ```text
//! t2 = skew * (t1 + d + X) + offset
//! t3 = t2 + b
//! t4 = (t3 - offset) / skew + d + Y
//! ```

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clock_model::ClockParams;
use crate::error::{Error, Result};

pub const TIMESTAMP_HEADER: [&str; 5] = ["round", "t1", "t2", "t3", "t4"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayDistribution {
    #[default]
    Gaussian,
    /// Exponential with rate `1/noise_std`, shifted to zero mean. Only for robustness probing.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    /// Symmetric one-way fixed delay `d`.
    pub fixed_delay: f64,
    /// Reply wait `b` at node A, on A's clock.
    pub processing_delay: f64,
    /// Standard deviation of each random delay.
    pub noise_std: f64,
    #[serde(default)]
    pub distribution: DelayDistribution,
}

impl DelayModel {
    pub fn gaussian(fixed_delay: f64, processing_delay: f64, noise_std: f64) -> Self {
        DelayModel {
            fixed_delay,
            processing_delay,
            noise_std,
            distribution: DelayDistribution::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fixed_delay", self.fixed_delay),
            ("processing_delay", self.processing_delay),
            ("noise_std", self.noise_std),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidDelayModel(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.distribution {
            DelayDistribution::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.noise_std * z
            }
            DelayDistribution::Exponential => {
                let e: f64 = rng.sample(Exp1);
                self.noise_std * (e - 1.0)
            }
        }
    }
}

/// When node B starts its rounds and how far apart they are, on B's clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub rounds: usize,
    pub start_time: f64,
    pub inter_round_interval: f64,
}

impl SchedulePlan {
    pub fn new(rounds: usize, start_time: f64, inter_round_interval: f64) -> Self {
        SchedulePlan {
            rounds,
            start_time,
            inter_round_interval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds < 2 {
            return Err(Error::TooFewRounds(self.rounds));
        }
        if !self.start_time.is_finite() {
            return Err(Error::InvalidSchedule("start_time must be finite".into()));
        }
        if !(self.inter_round_interval.is_finite() && self.inter_round_interval > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "inter_round_interval must be positive, got {}",
                self.inter_round_interval
            )));
        }
        Ok(())
    }

    /// Send time of round `i` (0-based) on B's clock.
    pub fn send_time(&self, i: usize) -> f64 {
        self.start_time + i as f64 * self.inter_round_interval
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRound {
    /// Request sent, B clock.
    pub t1: f64,
    /// Request received, A clock.
    pub t2: f64,
    /// Reply sent, A clock.
    pub t3: f64,
    /// Reply received, B clock.
    pub t4: f64,
}

impl ExchangeRound {
    pub fn as_array(&self) -> [f64; 4] {
        [self.t1, self.t2, self.t3, self.t4]
    }
}

/// Ground truth behind a simulated cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub clock: ClockParams,
    pub delays: DelayModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeLog {
    pub rows: Vec<ExchangeRound>,
    pub truth: Truth,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    truth: Truth,
    seed: u64,
    rounds: usize,
}

/// Runs one synchronization cycle of `plan.rounds` exchanges.
///
/// The random delays are drawn from a ChaCha8 stream seeded by `seed`, `X_i`
/// before `Y_i` for each round, so a seed fully determines the log.
pub fn simulate_cycle(
    clock: &ClockParams,
    delays: &DelayModel,
    plan: &SchedulePlan,
    seed: u64,
) -> Result<ExchangeLog> {
    clock.validate()?;
    delays.validate()?;
    plan.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = delays.fixed_delay;
    let rows = (0..plan.rounds)
        .map(|i| {
            let x = delays.sample(&mut rng);
            let y = delays.sample(&mut rng);
            let t1 = plan.send_time(i);
            let t2 = clock.skew * (t1 + d + x) + clock.offset;
            let t3 = t2 + delays.processing_delay;
            let t4 = (t3 - clock.offset) / clock.skew + d + y;
            ExchangeRound { t1, t2, t3, t4 }
        })
        .collect();

    Ok(ExchangeLog {
        rows,
        truth: Truth {
            clock: *clock,
            delays: *delays,
        },
        seed,
    })
}

/// Sample mean and variance of the realized random delays `{X_i, Y_i}`,
/// recovered by inverting the forward model with the true parameters.
pub fn empirical_delay_moments(log: &ExchangeLog) -> (f64, f64) {
    let clock = log.truth.clock;
    let d = log.truth.delays.fixed_delay;
    let realized: Vec<f64> = log
        .rows
        .iter()
        .flat_map(|r| {
            let x = (r.t2 - clock.offset) / clock.skew - r.t1 - d;
            let y = r.t4 - (r.t3 - clock.offset) / clock.skew - d;
            [x, y]
        })
        .collect();
    if realized.is_empty() {
        return (0.0, 0.0);
    }
    let n = realized.len() as f64;
    let mean = realized.iter().sum::<f64>() / n;
    let var = if realized.len() > 1 {
        realized.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

impl ExchangeLog {
    pub fn n_rounds(&self) -> usize {
        self.rows.len()
    }

    /// Writes `round,t1,t2,t3,t4` to `path` and the truth parameters to a
    /// JSON sidecar next to it (same stem, `.json` extension).
    pub fn write(&self, path: &Path) -> Result<()> {
        write_timestamp_csv(path, self.rows.iter().map(ExchangeRound::as_array))?;
        let sidecar = Sidecar {
            truth: self.truth,
            seed: self.seed,
            rounds: self.rows.len(),
        };
        let side_path = sidecar_path(path);
        let text =
            serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&side_path, e))?;
        std::fs::write(&side_path, text + "\n").map_err(|e| Error::io(&side_path, e))
    }

    /// Reads a log written by [`ExchangeLog::write`], sidecar included.
    pub fn read(path: &Path) -> Result<Self> {
        let rows = read_timestamp_csv(path)?
            .into_iter()
            .map(|[t1, t2, t3, t4]| ExchangeRound { t1, t2, t3, t4 })
            .collect();
        let side_path = sidecar_path(path);
        let text = std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let sidecar: Sidecar =
            serde_json::from_str(&text).map_err(|e| Error::json(&side_path, e))?;
        Ok(ExchangeLog {
            rows,
            truth: sidecar.truth,
            seed: sidecar.seed,
        })
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

// 17 significant digits, enough to round-trip any f64.
fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write_timestamp_csv(
    path: &Path,
    rows: impl IntoIterator<Item = [f64; 4]>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record(TIMESTAMP_HEADER)
        .map_err(|e| Error::csv(path, e))?;
    for (i, row) in rows.into_iter().enumerate() {
        let mut record = vec![(i + 1).to_string()];
        record.extend(row.iter().map(|&v| fmt_full(v)));
        wtr.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    let mut file = wtr
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    file.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_timestamp_csv(path: &Path) -> Result<Vec<[f64; 4]>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?;
    if header.iter().map(str::trim).ne(TIMESTAMP_HEADER) {
        return Err(Error::Parse {
            path: path.into(),
            reason: format!("expected header {:?}", TIMESTAMP_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        if record.len() != 5 {
            return Err(Error::Parse {
                path: path.into(),
                reason: format!("row {}: expected 5 fields, got {}", line + 1, record.len()),
            });
        }
        let mut row = [0.0; 4];
        for (slot, field) in row.iter_mut().zip(record.iter().skip(1)) {
            *slot = field.trim().parse().map_err(|_| Error::Parse {
                path: path.into(),
                reason: format!("row {}: not a number: {field:?}", line + 1),
            })?;
        }
        out.push(row);
    }
    Ok(out)
}
