//! Seeded Monte Carlo driver comparing the raw, truncated-SVD and
//! nuclear-norm estimators against the Cramer-Rao bounds.
//!
//! Every trial gets its own RNG seed derived from `(master_seed, N, trial)`,
//! so trials can run in parallel and adding trials never perturbs earlier
//! ones. Aggregation runs in trial order, which keeps the output bits
//! independent of thread scheduling.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock_model::ClockParams;
use crate::crlb::{crlb_offset, crlb_skew, CrlbInputs};
use crate::denoise::{estimate_noise_std, lrma_denoise, svd_truncate, DenoiseConfig, ThresholdPolicy};
use crate::error::{Error, Result};
use crate::estimator::{mle_estimate, Method};
use crate::exchange_sim::{simulate_cycle, DelayDistribution, DelayModel, SchedulePlan};
use crate::matrix_forms::{build_stacked, TimestampMatrix};
use crate::plot;

pub const RESULTS_HEADER: &str = "n,method,mse_alpha,mse_beta,crlb_alpha,crlb_beta,trials,wall_time_ms";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    /// Open interval.
    pub alpha: [f64; 2],
    /// Closed interval.
    pub beta: [f64; 2],
    /// Closed interval.
    pub d: [f64; 2],
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            alpha: [0.99, 1.01],
            beta: [-10.0, 10.0],
            d: [1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    pub alpha: f64,
    pub beta: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_rounds_grid: Vec<usize>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub param_ranges: ParamRanges,
    /// Skip the per-trial redraw and use these parameters for every trial.
    pub fixed_params: Option<FixedParams>,
    pub sigma2: f64,
    pub rank_k: usize,
    pub threshold: ThresholdPolicy,
    pub master_seed: u64,
    pub inter_round_interval: f64,
    pub processing_delay: f64,
    pub start_time: f64,
    pub distribution: DelayDistribution,
    /// Fill `wall_time_ms`. Off by default so that results are reproducible bit for bit.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_rounds_grid: vec![10, 20, 30, 40, 50],
            trials: 2000,
            methods: Method::ALL.to_vec(),
            param_ranges: ParamRanges::default(),
            fixed_params: None,
            sigma2: 1.0,
            rank_k: 2,
            threshold: ThresholdPolicy::Universal,
            master_seed: 0,
            inter_round_interval: 1.0,
            processing_delay: 0.2,
            start_time: 0.0,
            distribution: DelayDistribution::Gaussian,
            record_wall_time: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.n_rounds_grid.is_empty() {
            return bad("n_rounds_grid is empty".into());
        }
        if let Some(&n) = self.n_rounds_grid.iter().find(|&&n| n < 2) {
            return bad(format!("every N must be at least 2, got {n}"));
        }
        if self.methods.is_empty() {
            return bad("methods is empty".into());
        }
        let r = &self.param_ranges;
        if !(r.alpha[0] < r.alpha[1] && r.alpha[0] > 0.0) {
            return bad(format!("alpha range {:?} must be a nonempty positive interval", r.alpha));
        }
        for (name, [lo, hi]) in [("beta", r.beta), ("d", r.d)] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return bad(format!("{name} range [{lo}, {hi}] is empty"));
            }
        }
        if r.d[0] < 0.0 {
            return bad("fixed delay range must be non-negative".into());
        }
        if let Some(p) = self.fixed_params {
            ClockParams::new(p.alpha, p.beta)?;
            if !(p.d.is_finite() && p.d >= 0.0) {
                return bad(format!("fixed delay {} must be non-negative", p.d));
            }
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return bad(format!("sigma2 must be non-negative, got {}", self.sigma2));
        }
        let min_n = self.n_rounds_grid.iter().copied().min().unwrap_or(2);
        self.denoise_config().validate(min_n.min(TimestampMatrix::COLUMNS))?;
        self.delay_model(0.0).validate()?;
        SchedulePlan::new(min_n, self.start_time, self.inter_round_interval).validate()
    }

    pub fn denoise_config(&self) -> DenoiseConfig {
        DenoiseConfig {
            rank_k: self.rank_k,
            threshold: self.threshold,
            eta: None,
        }
    }

    fn delay_model(&self, fixed_delay: f64) -> DelayModel {
        DelayModel {
            fixed_delay,
            processing_delay: self.processing_delay,
            noise_std: self.sigma2.sqrt(),
            distribution: self.distribution,
        }
    }

    pub fn plan(&self, n: usize) -> SchedulePlan {
        SchedulePlan::new(n, self.start_time, self.inter_round_interval)
    }

    /// Ground truth and simulation seed for trial `trial_index` at `n` rounds.
    pub fn draw_trial(&self, n: usize, trial_index: usize) -> TrialSetup {
        let seed = trial_seed(self.master_seed, n, trial_index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (alpha, beta, d) = match self.fixed_params {
            Some(p) => (p.alpha, p.beta, p.d),
            None => {
                let r = &self.param_ranges;
                (
                    open_uniform(&mut rng, r.alpha[0], r.alpha[1]),
                    rng.random_range(r.beta[0]..=r.beta[1]),
                    rng.random_range(r.d[0]..=r.d[1]),
                )
            }
        };
        TrialSetup {
            clock: ClockParams {
                skew: alpha,
                offset: beta,
            },
            delays: self.delay_model(d),
            plan: self.plan(n),
            sim_seed: splitmix64(seed ^ 0x5EED_5EED_5EED_5EED),
        }
    }

    /// Bounds evaluated on the noise-free nominal timestamps of a trial.
    pub fn nominal_crlb(&self, setup: &TrialSetup, sigma2: f64) -> Result<(f64, f64)> {
        let clock = setup.clock;
        let d = setup.delays.fixed_delay;
        let t1: Vec<f64> = (0..setup.plan.rounds).map(|i| setup.plan.send_time(i)).collect();
        let t3 = t1
            .iter()
            .map(|&t| clock.skew * (t + d) + clock.offset + self.processing_delay)
            .collect();
        let inputs = CrlbInputs {
            alpha: clock.skew,
            beta: clock.offset,
            d,
            sigma2,
            t1,
            t3,
        };
        Ok((crlb_skew(&inputs)?, crlb_offset(&inputs)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSetup {
    pub clock: ClockParams,
    pub delays: DelayModel,
    pub plan: SchedulePlan,
    pub sim_seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn trial_seed(master: u64, n: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ n as u64) ^ trial as u64)
}

fn open_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    loop {
        let x = rng.random_range(lo..hi);
        if x > lo {
            return x;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquaredErrors {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    /// `None` when the estimator failed on this trial.
    pub squared_errors: Option<SquaredErrors>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub n: usize,
    pub trial_index: usize,
    pub setup: TrialSetup,
    pub methods: Vec<MethodOutcome>,
    /// Bounds with the true noise variance.
    pub crlb: Option<(f64, f64)>,
    /// Bounds with the noise variance estimated after nuclear-norm denoising.
    pub crlb_estimated: Option<(f64, f64)>,
    pub sigma2_hat: Option<f64>,
}

impl TrialOutcome {
    pub fn errors(&self, method: Method) -> Option<SquaredErrors> {
        self.methods
            .iter()
            .find(|m| m.method == method)
            .and_then(|m| m.squared_errors)
    }
}

/// One simulated cycle pushed through every configured estimator.
pub fn run_trial(config: &ExperimentConfig, n: usize, trial_index: usize) -> Result<TrialOutcome> {
    config.validate()?;
    trial_unchecked(config, n, trial_index)
}

fn trial_unchecked(config: &ExperimentConfig, n: usize, trial_index: usize) -> Result<TrialOutcome> {
    let setup = config.draw_trial(n, trial_index);
    let log = simulate_cycle(&setup.clock, &setup.delays, &setup.plan, setup.sim_seed)?;
    let gn = TimestampMatrix::from_log(&log)?;

    let lrma_start = Instant::now();
    let lrma = lrma_denoise(gn.entries(), &config.denoise_config()).ok();
    let lrma_elapsed = lrma_start.elapsed();
    let sigma2_hat = lrma
        .as_ref()
        .and_then(|out| estimate_noise_std(gn.entries(), &out.matrix).ok())
        .map(|s| s * s);

    let truth = setup.clock;
    let methods = config
        .methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let corrected = match method {
                Method::MleRaw => Some(gn.clone()),
                Method::MleSvd => svd_truncate(gn.entries(), config.rank_k)
                    .ok()
                    .and_then(|m| TimestampMatrix::new(m).ok()),
                Method::MleLrma => lrma
                    .as_ref()
                    .and_then(|out| TimestampMatrix::new(out.matrix.clone()).ok()),
            };
            let squared_errors = corrected
                .and_then(|g| build_stacked(&g).ok())
                .and_then(|sys| mle_estimate(&sys, method).ok())
                .map(|est| SquaredErrors {
                    alpha: (est.alpha_hat - truth.skew).powi(2),
                    beta: (est.beta_hat - truth.offset).powi(2),
                })
                .filter(|e| e.alpha.is_finite() && e.beta.is_finite());
            let mut elapsed = start.elapsed();
            if method == Method::MleLrma {
                elapsed += lrma_elapsed;
            }
            MethodOutcome {
                method,
                squared_errors,
                elapsed,
            }
        })
        .collect();

    Ok(TrialOutcome {
        n,
        trial_index,
        setup,
        methods,
        crlb: config.nominal_crlb(&setup, config.sigma2).ok(),
        crlb_estimated: sigma2_hat.and_then(|s2| config.nominal_crlb(&setup, s2).ok()),
        sigma2_hat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n: usize,
    pub method: Method,
    pub mse_alpha: f64,
    pub mse_beta: f64,
    pub crlb_alpha: f64,
    pub crlb_beta: f64,
    pub trials: usize,
    pub wall_time_ms: f64,
}

/// Trial-averaged bounds using the noise variance estimated after
/// nuclear-norm denoising.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedCrlb {
    pub n: usize,
    pub crlb_alpha: f64,
    pub crlb_beta: f64,
    pub sigma2_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCount {
    pub n: usize,
    pub method: Method,
    pub failed: usize,
}

/// One row per `(N, method)`; `crlb_*` columns use the true noise variance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    #[serde(default)]
    pub crlb_estimated: Vec<EstimatedCrlb>,
    #[serde(default)]
    pub failures: Vec<FailureCount>,
}

impl ResultTable {
    pub fn row(&self, n: usize, method: Method) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.n == n && r.method == method)
    }

    pub fn total_failures(&self) -> usize {
        self.failures.iter().map(|f| f.failed).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        wtr.write_record(RESULTS_HEADER.split(','))
            .map_err(|e| Error::csv(path, e))?;
        for row in &self.rows {
            wtr.serialize(row).map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads the rows of a `results.csv`; the sidecar fields are left empty.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let header = rdr.headers().map_err(|e| Error::csv(path, e))?;
        if header.iter().ne(RESULTS_HEADER.split(',')) {
            return Err(Error::Parse {
                path: path.into(),
                reason: format!("expected header {RESULTS_HEADER:?}"),
            });
        }
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ResultRow>, _>>()
            .map_err(|e| Error::csv(path, e))?;
        Ok(ResultTable {
            rows,
            ..Default::default()
        })
    }
}

/// Full grid sweep; MSE and CRLB columns are means over trials.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let mut table = ResultTable::default();
    for &n in &config.n_rounds_grid {
        let outcomes = (0..config.trials)
            .into_par_iter()
            .map(|trial| trial_unchecked(config, n, trial))
            .collect::<Result<Vec<_>>>()?;

        let crlb = mean_pair(outcomes.iter().filter_map(|o| o.crlb));
        for &method in &config.methods {
            let mut sum = (0.0, 0.0);
            let mut used = 0;
            let mut elapsed = Duration::ZERO;
            for m in outcomes.iter().flat_map(|o| &o.methods).filter(|m| m.method == method) {
                elapsed += m.elapsed;
                if let Some(e) = m.squared_errors {
                    sum.0 += e.alpha;
                    sum.1 += e.beta;
                    used += 1;
                }
            }
            let failed = config.trials - used;
            if failed > 0 {
                table.failures.push(FailureCount { n, method, failed });
            }
            let (mse_alpha, mse_beta) = if used > 0 {
                (sum.0 / used as f64, sum.1 / used as f64)
            } else {
                (f64::NAN, f64::NAN)
            };
            table.rows.push(ResultRow {
                n,
                method,
                mse_alpha,
                mse_beta,
                crlb_alpha: crlb.map_or(f64::NAN, |c| c.0),
                crlb_beta: crlb.map_or(f64::NAN, |c| c.1),
                trials: used,
                wall_time_ms: if config.record_wall_time {
                    elapsed.as_secs_f64() * 1e3
                } else {
                    0.0
                },
            });
        }

        let estimated = mean_pair(outcomes.iter().filter_map(|o| o.crlb_estimated));
        let sigma2_hat = mean_pair(outcomes.iter().filter_map(|o| o.sigma2_hat.map(|s| (s, s))));
        if let (Some((ca, cb)), Some((s2, _))) = (estimated, sigma2_hat) {
            table.crlb_estimated.push(EstimatedCrlb {
                n,
                crlb_alpha: ca,
                crlb_beta: cb,
                sigma2_hat: s2,
            });
        }
    }
    Ok(table)
}

fn mean_pair(values: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let (mut a, mut b, mut count) = (0.0, 0.0, 0usize);
    for (x, y) in values {
        a += x;
        b += y;
        count += 1;
    }
    (count > 0).then(|| (a / count as f64, b / count as f64))
}

/// Writes `results.csv`, `results.json` and `curves.svg` into `out_dir`.
pub fn emit_outputs(table: &ResultTable, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let csv_path = out_dir.join("results.csv");
    table.write_csv(&csv_path)?;

    let json_path = out_dir.join("results.json");
    let json = serde_json::to_string_pretty(table).map_err(|e| Error::json(&json_path, e))?;
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;

    let svg_path = out_dir.join("curves.svg");
    let svg = plot::render_curves(table).map_err(|reason| Error::Plot {
        path: svg_path.clone(),
        reason,
    })?;
    fs::write(&svg_path, svg).map_err(|e| Error::io(&svg_path, e))?;

    Ok(vec![csv_path, json_path, svg_path])
}
