//! Two-node clock synchronization over a two-way message exchange.
//!
//! The crate simulates timestamp exchanges between a reference node A and a
//! node B whose clock runs at `T_A = skew * T_B + offset`, corrects the
//! collected timestamp matrix by low-rank approximation, and estimates skew,
//! offset and fixed delay by least squares. Cramer-Rao bounds and a seeded
//! Monte Carlo harness are provided for comparing the estimators.
//!
//! ```
//! use clocksync::{ClockParams, DelayModel, SchedulePlan, simulate_cycle};
//! use clocksync::{TimestampMatrix, Denoiser, Method};
//!
//! let clock = ClockParams::new(1.004, -3.5).unwrap();
//! let delays = DelayModel::gaussian(4.0, 0.2, 1.0);
//! let plan = SchedulePlan::new(30, 0.0, 1.0);
//! let log = simulate_cycle(&clock, &delays, &plan, 7).unwrap();
//!
//! let gn = TimestampMatrix::from_log(&log).unwrap();
//! let report = Denoiser::svd(2).estimate(&gn).unwrap();
//! assert_eq!(report.method, Method::MleSvd);
//! assert!((report.alpha_hat - 1.004).abs() < 0.1);
//! ```

pub mod clock_model;
pub mod crlb;
pub mod denoise;
pub mod error;
pub mod estimator;
pub mod exchange_sim;
pub mod harness;
pub mod matrix_forms;
mod plot;

pub use clock_model::ClockParams;
pub use crlb::{crlb_offset, crlb_skew, CrlbInputs};
pub use denoise::{
    estimate_noise_std, lrma_denoise, soft_threshold, svd_truncate, DenoiseConfig, Denoiser,
    LrmaOutput, SvdFactors, ThresholdPolicy,
};
pub use error::{Error, Result};
pub use estimator::{log_likelihood, mle_estimate, EstimateReport, Method};
pub use exchange_sim::{
    empirical_delay_moments, simulate_cycle, DelayDistribution, DelayModel, ExchangeLog,
    ExchangeRound, SchedulePlan,
};
pub use harness::{
    emit_outputs, run_experiment, run_trial, ExperimentConfig, ResultRow, ResultTable,
    TrialOutcome,
};
pub use matrix_forms::{build_stacked, params_from_psi, ParamVector, StackedSystem, TimestampMatrix};
