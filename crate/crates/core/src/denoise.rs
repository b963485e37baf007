//! Low-rank correction of a noisy timestamp matrix.
//!
//! Two denoisers are provided. Hard truncation keeps the `k` largest singular
//! values (the best rank-`k` Frobenius approximation). The nuclear-norm
//! denoiser minimizes `tau * ||X||_* + 0.5 * ||X - G_n||_F^2`. For a fully
//! observed matrix this has the closed-form solution `U max(S - tau, 0) V^T`,
//! so no iterative solver is needed.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{mle_estimate, EstimateReport, Method};
use crate::matrix_forms::{build_stacked, TimestampMatrix};

/// Thin SVD with singular values sorted nonincreasing.
///
/// `u` is `N x p` and `v` is `L x p` with `p = min(N, L)`; the discarded
/// columns of a full factorization never contribute to a reconstruction.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn compute(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let p = rows.min(cols);
        if p == 0 {
            return SvdFactors {
                u: DMatrix::zeros(rows, 0),
                sigma: Vec::new(),
                v: DMatrix::zeros(cols, 0),
            };
        }
        let a = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
        let svd = a
            .thin_svd()
            .expect("SVD of a finite matrix converges");
        let (u, s, v) = (svd.U(), svd.S(), svd.V());

        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
        SvdFactors {
            u: DMatrix::from_fn(rows, p, |i, j| u[(i, order[j])]),
            sigma: order.iter().map(|&j| s[j]).collect(),
            v: DMatrix::from_fn(cols, p, |i, j| v[(i, order[j])]),
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// `U diag(values) V^T`
    pub fn reconstruct_with(&self, values: &[f64]) -> DMatrix<f64> {
        let mut scaled = self.u.clone();
        for (mut col, &s) in scaled.column_iter_mut().zip(values) {
            col *= s;
        }
        scaled * self.v.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(&self.sigma)
    }
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    SvdFactors::compute(m).sigma.iter().sum()
}

/// Best rank-`k` approximation: keeps the first `k` singular values.
pub fn svd_truncate(m: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let p = m.nrows().min(m.ncols());
    if k == 0 || k > p {
        return Err(Error::RankOutOfRange { k, max: p });
    }
    let f = SvdFactors::compute(m);
    let kept: Vec<f64> = f
        .sigma
        .iter()
        .enumerate()
        .map(|(i, &s)| if i < k { s } else { 0.0 })
        .collect();
    Ok(f.reconstruct_with(&kept))
}

/// Proximal operator of `tau * ||.||_*`: shrinks every singular value by `tau`.
pub fn soft_threshold(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidThreshold(format!(
            "tau must be finite and non-negative, got {tau}"
        )));
    }
    if tau == 0.0 {
        return Ok(m.clone());
    }
    let f = SvdFactors::compute(m);
    let shrunk: Vec<f64> = f.sigma.iter().map(|&s| (s - tau).max(0.0)).collect();
    Ok(f.reconstruct_with(&shrunk))
}

/// Per-variable delay noise implied by a denoising residual:
/// `sqrt(||gn - ghat||_F^2 / (2N))`, with `N` rows giving `2N` random delays.
pub fn estimate_noise_std(gn: &DMatrix<f64>, ghat: &DMatrix<f64>) -> Result<f64> {
    if gn.shape() != ghat.shape() {
        return Err(Error::ShapeMismatch(gn.shape(), ghat.shape()));
    }
    let n = gn.nrows() as f64;
    Ok(((gn - ghat).norm_squared() / (2.0 * n)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    FixedTau(f64),
    /// `tau = sigma_hat * (sqrt(N) + sqrt(L))`, with `sigma_hat` from the
    /// rank-`k` truncation residual.
    Universal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    pub rank_k: usize,
    pub threshold: ThresholdPolicy,
    /// Feasibility radius, only checked after the fact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            rank_k: 2,
            threshold: ThresholdPolicy::Universal,
            eta: None,
        }
    }
}

impl DenoiseConfig {
    pub fn fixed_tau(tau: f64) -> Self {
        DenoiseConfig {
            threshold: ThresholdPolicy::FixedTau(tau),
            ..Self::default()
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.rank_k == 0 || self.rank_k > p {
            return Err(Error::RankOutOfRange {
                k: self.rank_k,
                max: p,
            });
        }
        if let ThresholdPolicy::FixedTau(tau) = self.threshold {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(Error::InvalidThreshold(format!(
                    "tau must be finite and non-negative, got {tau}"
                )));
            }
        }
        if let Some(eta) = self.eta {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::InvalidThreshold(format!("eta must be positive, got {eta}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LrmaOutput {
    pub matrix: DMatrix<f64>,
    /// Threshold actually applied.
    pub tau: f64,
    /// Noise estimate used to set `tau` under [`ThresholdPolicy::Universal`].
    pub sigma_hat: Option<f64>,
    /// `||output - input||_F`
    pub residual_fro: f64,
    /// Whether `residual_fro < eta`, when `eta` was configured.
    pub eta_satisfied: Option<bool>,
}

/// Nuclear-norm denoising by singular-value soft-thresholding.
pub fn lrma_denoise(gn: &DMatrix<f64>, config: &DenoiseConfig) -> Result<LrmaOutput> {
    let (n, l) = gn.shape();
    config.validate(n.min(l))?;
    let (tau, sigma_hat) = match config.threshold {
        ThresholdPolicy::FixedTau(tau) => (tau, None),
        ThresholdPolicy::Universal => {
            let truncated = svd_truncate(gn, config.rank_k)?;
            let sigma_hat = estimate_noise_std(gn, &truncated)?;
            (sigma_hat * ((n as f64).sqrt() + (l as f64).sqrt()), Some(sigma_hat))
        }
    };
    let matrix = soft_threshold(gn, tau)?;
    let residual_fro = (&matrix - gn).norm();
    Ok(LrmaOutput {
        eta_satisfied: config.eta.map(|eta| residual_fro < eta),
        matrix,
        tau,
        sigma_hat,
        residual_fro,
    })
}

/// Timestamp correction applied before estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Denoiser {
    Raw,
    Svd { rank_k: usize },
    Lrma(DenoiseConfig),
}

impl Denoiser {
    pub fn svd(rank_k: usize) -> Self {
        Denoiser::Svd { rank_k }
    }

    pub fn lrma(config: DenoiseConfig) -> Self {
        Denoiser::Lrma(config)
    }

    pub fn method(&self) -> Method {
        match self {
            Denoiser::Raw => Method::MleRaw,
            Denoiser::Svd { .. } => Method::MleSvd,
            Denoiser::Lrma(_) => Method::MleLrma,
        }
    }

    pub fn apply(&self, gn: &TimestampMatrix) -> Result<TimestampMatrix> {
        let m = match self {
            Denoiser::Raw => return Ok(gn.clone()),
            Denoiser::Svd { rank_k } => svd_truncate(gn.entries(), *rank_k)?,
            Denoiser::Lrma(config) => lrma_denoise(gn.entries(), config)?.matrix,
        };
        TimestampMatrix::new(m)
    }

    /// Denoise, stack, and solve.
    pub fn estimate(&self, gn: &TimestampMatrix) -> Result<EstimateReport> {
        let corrected = self.apply(gn)?;
        mle_estimate(&build_stacked(&corrected)?, self.method())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock_model::ClockParams;
    use crate::exchange_sim::{simulate_cycle, DelayModel, SchedulePlan};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag2(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-5.0..5.0))
    }

    fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        random_matrix(rng, n, n).qr().q()
    }

    fn noise_free_matrix(n: usize) -> TimestampMatrix {
        let log = simulate_cycle(
            &ClockParams::new(1.006, -7.0).unwrap(),
            &DelayModel::gaussian(3.0, 0.2, 0.0),
            &SchedulePlan::new(n, 0.0, 1.0),
            0,
        )
        .unwrap();
        TimestampMatrix::from_log(&log).unwrap()
    }

    #[test]
    fn factors_reconstruct_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(6, 4), (2, 4), (3, 4), (50, 4), (2, 2)] {
            let m = random_matrix(&mut rng, r, c);
            let f = SvdFactors::compute(&m);
            assert_eq!(f.len(), r.min(c));
            assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
            assert!((f.reconstruct() - &m).norm() <= 1e-9 * f.sigma[0]);
        }
    }

    #[test]
    fn truncate_diagonal() {
        let out = svd_truncate(&diag2(3.0, 1.0), 1).unwrap();
        assert!(max_abs_diff(&out, &diag2(3.0, 0.0)) < 1e-12);
    }

    #[test]
    fn truncate_is_identity_on_rank_two() {
        let g = noise_free_matrix(20);
        let s1 = g.singular_values()[0];
        let out = svd_truncate(g.entries(), 2).unwrap();
        assert!((out - g.entries()).norm() <= 1e-9 * s1);
    }

    #[test]
    fn truncate_rank_out_of_range() {
        let m = DMatrix::from_element(6, 4, 1.0);
        assert!(matches!(svd_truncate(&m, 0), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(svd_truncate(&m, 5), Err(Error::RankOutOfRange { k: 5, max: 4 })));
        assert!(svd_truncate(&m, 4).is_ok());
    }

    #[test]
    fn truncation_error_is_tail_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_matrix(&mut rng, 6, 4);
        let s = SvdFactors::compute(&m).sigma;
        let err = (svd_truncate(&m, 2).unwrap() - &m).norm();
        let tail = (s[2] * s[2] + s[3] * s[3]).sqrt();
        assert!((err - tail).abs() <= 1e-9 * tail);
    }

    #[test]
    fn soft_threshold_examples() {
        let out = soft_threshold(&diag2(3.0, 1.0), 1.0).unwrap();
        assert!(max_abs_diff(&out, &diag2(2.0, 0.0)) < 1e-12);

        let out = soft_threshold(&diag2(2.0, 1.0), 0.5).unwrap();
        assert!(max_abs_diff(&out, &diag2(1.5, 0.5)) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(&mut rng, 7, 4);
        assert_eq!(soft_threshold(&m, 0.0).unwrap(), m);
        assert!(soft_threshold(&m, -0.1).is_err());
        assert!(soft_threshold(&m, f64::NAN).is_err());
    }

    // Singular values of a 2x2 matrix from the eigenvalues of M^T M, independent of any SVD routine.
    fn nuclear_norm_2x2(x: [f64; 4]) -> f64 {
        let [a, b, c, d] = x;
        let frob2 = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        // s1 + s2 = sqrt(s1^2 + s2^2 + 2 s1 s2) = sqrt(||X||_F^2 + 2 |det X|)
        (frob2 + 2.0 * det.abs()).sqrt()
    }

    fn prox_objective(x: [f64; 4], m: [f64; 4], tau: f64) -> f64 {
        let fit: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
        tau * nuclear_norm_2x2(x) + 0.5 * fit
    }

    #[test]
    fn grid_search_finds_soft_threshold_solution() {
        let m = [2.0, 0.0, 0.0, 1.0];
        let tau = 0.5;
        let step = 0.01;
        let mut best = (f64::INFINITY, [0.0; 4]);
        for i in 0..=40 {
            for j in -20..=20 {
                for k in -20..=20 {
                    for l in 0..=40 {
                        let x = [
                            1.3 + i as f64 * step,
                            j as f64 * step,
                            k as f64 * step,
                            0.3 + l as f64 * step,
                        ];
                        let obj = prox_objective(x, m, tau);
                        if obj < best.0 {
                            best = (obj, x);
                        }
                    }
                }
            }
        }
        let expected = [1.5, 0.0, 0.0, 0.5];
        for (a, b) in best.1.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "grid argmin {:?}", best.1);
        }
        let out = soft_threshold(&diag2(2.0, 1.0), tau).unwrap();
        let out = [out[(0, 0)], out[(0, 1)], out[(1, 0)], out[(1, 1)]];
        assert!(prox_objective(out, m, tau) <= best.0 + 1e-12);
    }

    #[test]
    fn universal_threshold_uses_truncation_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_matrix(&mut rng, 30, 4);
        let out = lrma_denoise(&m, &DenoiseConfig::default()).unwrap();
        let sigma_hat = estimate_noise_std(&m, &svd_truncate(&m, 2).unwrap()).unwrap();
        assert_eq!(out.sigma_hat, Some(sigma_hat));
        assert!((out.tau - sigma_hat * (30f64.sqrt() + 2.0)).abs() < 1e-12);
        assert!((out.residual_fro - (&out.matrix - &m).norm()).abs() < 1e-12);
        assert_eq!(out.eta_satisfied, None);
    }

    #[test]
    fn eta_reported_as_diagnostic() {
        let m = diag2(3.0, 1.0);
        let cfg = |eta| DenoiseConfig {
            rank_k: 1,
            threshold: ThresholdPolicy::FixedTau(1.0),
            eta: Some(eta),
        };
        // residual is sqrt(1 + 1)
        assert_eq!(lrma_denoise(&m, &cfg(1.5)).unwrap().eta_satisfied, Some(true));
        assert_eq!(lrma_denoise(&m, &cfg(1.4)).unwrap().eta_satisfied, Some(false));
        assert!(lrma_denoise(&m, &cfg(0.0)).is_err());
    }

    #[test]
    fn config_validation() {
        let m = DMatrix::from_element(5, 4, 1.0);
        let bad_rank = DenoiseConfig {
            rank_k: 5,
            ..DenoiseConfig::default()
        };
        assert!(lrma_denoise(&m, &bad_rank).is_err());
        assert!(lrma_denoise(&m, &DenoiseConfig::fixed_tau(-1.0)).is_err());
    }

    #[test]
    fn noise_std_examples() {
        let g = noise_free_matrix(16);
        assert_eq!(estimate_noise_std(g.entries(), g.entries()).unwrap(), 0.0);

        let s1 = g.singular_values()[0];
        let truncated = svd_truncate(g.entries(), 2).unwrap();
        let est = estimate_noise_std(g.entries(), &truncated).unwrap();
        assert!(est <= 1e-9 * s1 / 32f64.sqrt());

        assert!(matches!(
            estimate_noise_std(g.entries(), &DMatrix::zeros(3, 4)),
            Err(Error::ShapeMismatch(..))
        ));
    }

    #[test]
    fn noise_std_from_truncation_residual_calibrated() {
        let log = simulate_cycle(
            &ClockParams::new(1.004, 2.0).unwrap(),
            &DelayModel::gaussian(5.0, 0.2, 1.0),
            &SchedulePlan::new(1000, 0.0, 1.0),
            6,
        )
        .unwrap();
        let gn = TimestampMatrix::from_log(&log).unwrap();
        let ghat = svd_truncate(gn.entries(), 2).unwrap();
        let est = estimate_noise_std(gn.entries(), &ghat).unwrap();
        // the rank-2 residual only sees the noise in the 2-dim complement
        assert!((0.45..=0.60).contains(&est), "{est}");
    }

    #[test]
    fn denoiser_methods() {
        let g = noise_free_matrix(10);
        for (den, method) in [
            (Denoiser::Raw, Method::MleRaw),
            (Denoiser::svd(2), Method::MleSvd),
            (Denoiser::lrma(DenoiseConfig::default()), Method::MleLrma),
        ] {
            let r = den.estimate(&g).unwrap();
            assert_eq!(r.method, method);
            assert!((r.alpha_hat - 1.006).abs() < 1e-9);
        }
    }

    fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-10.0f64..10.0, rows * cols)
            .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
    }

    proptest! {
        #[test]
        fn truncation_idempotent(m in matrix_strategy(8, 4)) {
            let once = svd_truncate(&m, 2).unwrap();
            let twice = svd_truncate(&once, 2).unwrap();
            let s1 = SvdFactors::compute(&m).sigma[0];
            prop_assert!((&twice - &once).norm() <= 1e-9 * s1.max(1e-300));
        }

        #[test]
        fn soft_threshold_contracts_nuclear_norm(m in matrix_strategy(6, 4), tau in 0.0f64..20.0) {
            let before = nuclear_norm(&m);
            let after = nuclear_norm(&soft_threshold(&m, tau).unwrap());
            prop_assert!(after <= before + 1e-9);
            if tau > 0.0 && before > 0.0 {
                prop_assert!(after < before);
            }
        }

        #[test]
        fn larger_threshold_moves_further(m in matrix_strategy(6, 4), t1 in 0.0f64..10.0, dt in 0.0f64..10.0) {
            let near = (soft_threshold(&m, t1).unwrap() - &m).norm();
            let far = (soft_threshold(&m, t1 + dt).unwrap() - &m).norm();
            prop_assert!(near <= far + 1e-9);
        }

        #[test]
        fn orthogonal_invariance(m in matrix_strategy(6, 4), tau in 0.0f64..10.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_orthogonal(&mut rng, 6);
            let q = random_orthogonal(&mut rng, 4);
            let rotated = soft_threshold(&(&p * &m * &q), tau).unwrap();
            let expected = &p * soft_threshold(&m, tau).unwrap() * &q;
            let s1 = SvdFactors::compute(&m).sigma[0];
            prop_assert!((rotated - expected).norm() <= 1e-9 * s1);
        }
    }
}
