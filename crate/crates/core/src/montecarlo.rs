//! Replicated simulate-fit-standardize runs and their comparison with the
//! limiting normal law `N(0, L Sigma L^T)`.
//!
//! Replication `i` draws from stream `i` of the master seed and results are
//! aggregated in index order, so a report depends only on the configuration.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{estimator_cov, estimator_cov_from_phi, CovarianceReport, PhiConstants};
use crate::error::{Error, Result};
use crate::estimator::{lme_fit, ExcessSample};
use crate::linalg::Mat2;
use crate::process::{filter_innovations, CoefficientSequence, InnovationModel};
use crate::rng::StreamRng;
use crate::second_order::{
    choose_k, quantile_expansion, second_order_rates, tail_expansion, QuantileExpansion, SecondOrderRates,
};
use crate::stats::{chi2_2_cdf, ks_test, normal_cdf, KsResult};

/// Failure fraction above which a run is flagged unreliable.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;
/// Fewest successful replications for the normality diagnostics.
pub const MIN_DIAGNOSTIC_RECORDS: usize = 50;

const CHUNK: usize = 1 << 13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum KChoice {
    Fixed { k: usize },
    /// `k = floor(n^(2 theta / (2 + alpha)))`, or the `c2 = 0` variant.
    RuleIv { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Simulate the linear process and take the top `k` excesses.
    Process,
    /// Draw `k` iid GPD(gamma, 1) excesses directly; the target scale is 1 and
    /// the covariance is the independent one.
    ExactGpd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub coeffs: CoefficientSequence,
    pub model: InnovationModel,
    pub n: usize,
    pub k: KChoice,
    pub r: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub worker_count_hint: usize,
    pub sampling: SamplingMode,
}

/// A validated configuration with everything derived from it.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    k: usize,
    gamma: f64,
    sigma_nk: f64,
    expansion: Option<QuantileExpansion>,
    covariance: CovarianceReport,
    rates: Option<SecondOrderRates>,
}

/// `gamma b(n/k)` from the three-term quantile expansion.
pub fn sigma_nk(expansion: Option<&QuantileExpansion>, gamma: f64, n: usize, k: usize) -> Result<f64> {
    let q = expansion.ok_or_else(|| Error::SigmaUnavailable("supply quantile expansion".into()))?;
    if !(1 <= k && k < n) {
        return Err(Error::invalid(format!("need 1 <= k < n, got k = {k}, n = {n}")));
    }
    Ok(gamma * q.quantile(n as f64 / k as f64))
}

fn pareto_expansion(config: &ExperimentConfig) -> Result<QuantileExpansion> {
    match config.model {
        InnovationModel::OneSidedPareto { alpha } => quantile_expansion(&tail_expansion(alpha, &config.coeffs)?),
        InnovationModel::TwoSidedPareto { .. } => Err(Error::SigmaUnavailable(
            "the quantile expansion covers one-sided Pareto innovations only".into(),
        )),
    }
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.model.validate()?;
        if !(config.r < 0.0) {
            return Err(Error::RMustBeNegative(config.r));
        }
        if config.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if config.worker_count_hint == 0 {
            return Err(Error::invalid("worker count must be at least 1"));
        }
        let gamma = config.model.gamma();
        let expansion = pareto_expansion(&config);

        let k = match config.k {
            KChoice::Fixed { k } => k,
            KChoice::RuleIv { theta } => {
                let q = expansion.as_ref().map_err(Clone::clone)?;
                choose_k(config.n, q.alpha, theta, q.case_c2_zero)?
            }
        };
        if k < 2 {
            return Err(Error::invalid(format!("k must be at least 2, got {k}")));
        }
        if k + 1 > config.n {
            return Err(Error::KTooLarge { k, n: config.n });
        }

        let (sigma, covariance, expansion) = match config.sampling {
            SamplingMode::Process => {
                let q = expansion?;
                let cov = estimator_cov(gamma, config.r, &config.coeffs)?;
                (sigma_nk(Some(&q), gamma, config.n, k)?, cov, Some(q))
            }
            SamplingMode::ExactGpd => {
                let cov = estimator_cov_from_phi(gamma, config.r, &PhiConstants::independent(gamma, config.r))?;
                (1.0, cov, None)
            }
        };
        let rates = expansion.as_ref().map(|q| second_order_rates(config.n, k, q)).transpose()?;
        Ok(Self {
            config,
            k,
            gamma,
            sigma_nk: sigma,
            expansion,
            covariance,
            rates,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma_nk(&self) -> f64 {
        self.sigma_nk
    }

    pub fn expansion(&self) -> Option<&QuantileExpansion> {
        self.expansion.as_ref()
    }

    pub fn covariance(&self) -> &CovarianceReport {
        &self.covariance
    }

    pub fn rates(&self) -> Option<&SecondOrderRates> {
        self.rates.as_ref()
    }

    /// Top-`k` excesses of a fresh path, or `k` direct GPD draws.
    pub fn draw_excesses(&self, rng: &mut StreamRng) -> Result<ExcessSample> {
        match self.config.sampling {
            SamplingMode::Process => stream_top_k(&self.config.coeffs, &self.config.model, self.config.n, self.k, rng),
            SamplingMode::ExactGpd => {
                // Inverse transform on the survival scale: y = (u^-gamma - 1) / gamma.
                let g = self.gamma;
                let ys = (0..self.k).map(|_| (-g * rng.open_closed01().ln()).exp_m1() / g).collect();
                ExcessSample::from_excesses(ys)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Same draws and arithmetic as `simulate_with_rng` followed by
/// `top_k_excesses`, without materialising the path.
fn stream_top_k(
    coeffs: &CoefficientSequence,
    model: &InnovationModel,
    n: usize,
    k: usize,
    rng: &mut StreamRng,
) -> Result<ExcessSample> {
    if k + 1 > n {
        return Err(Error::KTooLarge { k, n });
    }
    let c = coeffs.coeffs();
    let order = coeffs.order();
    let mut heap: BinaryHeap<Reverse<OrdF64>> = BinaryHeap::with_capacity(k + 2);
    let mut buf: Vec<f64> = Vec::with_capacity(CHUNK + order);
    buf.extend((0..order).map(|_| model.draw(rng)));
    let mut remaining = n;
    while remaining > 0 {
        let m = remaining.min(CHUNK);
        buf.extend((0..m).map(|_| model.draw(rng)));
        for x in filter_innovations(c, &buf)? {
            let a = x.abs();
            if heap.len() <= k {
                heap.push(Reverse(OrdF64(a)));
            } else if let Some(mut min) = heap.peek_mut() {
                if a > min.0 .0 {
                    *min = Reverse(OrdF64(a));
                }
            }
        }
        buf.drain(..buf.len() - order);
        remaining -= m;
    }
    // Ascending in `Reverse` order, so descending in value.
    let top: Vec<f64> = heap.into_sorted_vec().into_iter().map(|Reverse(v)| v.0).collect();
    let threshold = top[k];
    let excesses = top[..k].iter().map(|x| x - threshold).collect();
    Ok(ExcessSample::from_sorted_parts(excesses, threshold, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicationStatus {
    Ok,
    NoSolution,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: u64,
    pub gamma_hat: f64,
    pub sigma_hat: f64,
    pub z1: f64,
    pub z2: f64,
    pub status: ReplicationStatus,
}

impl ReplicationRecord {
    pub fn pair(&self) -> [f64; 2] {
        [self.z1, self.z2]
    }
}

pub fn run_replication(experiment: &Experiment, index: u64) -> ReplicationRecord {
    let mut rng = StreamRng::new(experiment.config.master_seed, index);
    let failed = |status| ReplicationRecord {
        index,
        gamma_hat: f64::NAN,
        sigma_hat: f64::NAN,
        z1: f64::NAN,
        z2: f64::NAN,
        status,
    };
    let sample = match experiment.draw_excesses(&mut rng) {
        Ok(s) => s,
        Err(_) => return failed(ReplicationStatus::Error),
    };
    match lme_fit(&sample, experiment.config.r) {
        Ok(fit) => {
            let sk = (experiment.k as f64).sqrt();
            let z1 = sk * (fit.gamma_hat - experiment.gamma);
            let z2 = sk * (fit.sigma_hat / experiment.sigma_nk - 1.0);
            if z1.is_finite() && z2.is_finite() {
                ReplicationRecord {
                    index,
                    gamma_hat: fit.gamma_hat,
                    sigma_hat: fit.sigma_hat,
                    z1,
                    z2,
                    status: ReplicationStatus::Ok,
                }
            } else {
                failed(ReplicationStatus::Error)
            }
        }
        Err(Error::NoLmeSolution(_)) => failed(ReplicationStatus::NoSolution),
        Err(_) => failed(ReplicationStatus::Error),
    }
}

/// Unbiased sample covariance.
pub fn empirical_cov(pairs: &[[f64; 2]]) -> Result<Mat2> {
    let m = pairs.len();
    if m < 2 {
        return Err(Error::InsufficientRecords { needed: 2, got: m });
    }
    let mean = mean_pair(pairs);
    let mut s = [0.0f64; 3];
    for p in pairs {
        let d0 = p[0] - mean[0];
        let d1 = p[1] - mean[1];
        s[0] += d0 * d0;
        s[1] += d0 * d1;
        s[2] += d1 * d1;
    }
    let w = 1.0 / (m - 1) as f64;
    Ok(Mat2::symmetric(s[0] * w, s[1] * w, s[2] * w))
}

fn mean_pair(pairs: &[[f64; 2]]) -> [f64; 2] {
    let m = pairs.len() as f64;
    let (a, b) = pairs.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    [a / m, b / m]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityDiagnostics {
    /// KS against N(0, 1) for each whitened coordinate.
    pub ks: [KsResult; 2],
    /// KS of the squared Mahalanobis norms against chi-square with 2 degrees of freedom.
    pub mahalanobis: KsResult,
    /// Sample covariance of the whitened pairs; near the identity under the null.
    pub whitened_cov: Mat2,
}

/// Applies `theoretical^(-1/2)` to every pair.
pub fn whiten(pairs: &[[f64; 2]], theoretical: &Mat2) -> Result<Vec<[f64; 2]>> {
    if !(theoretical.get(0, 0) > 0.0 && theoretical.get(1, 1) > 0.0) {
        return Err(Error::SingularMatrix("theoretical covariance needs a positive diagonal".into()));
    }
    let w = theoretical.inv_sqrt_spd()?;
    Ok(pairs.iter().map(|&p| w.apply(p)).collect())
}

pub fn normality_diagnostics(pairs: &[[f64; 2]], theoretical: &Mat2) -> Result<NormalityDiagnostics> {
    if pairs.len() < MIN_DIAGNOSTIC_RECORDS {
        return Err(Error::InsufficientRecords {
            needed: MIN_DIAGNOSTIC_RECORDS,
            got: pairs.len(),
        });
    }
    let white = whiten(pairs, theoretical)?;
    let coord = |i: usize| white.iter().map(|p| p[i]).collect::<Vec<_>>();
    let norms: Vec<f64> = white.iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect();
    Ok(NormalityDiagnostics {
        ks: [ks_test(&coord(0), normal_cdf)?, ks_test(&coord(1), normal_cdf)?],
        mahalanobis: ks_test(&norms, chi2_2_cdf)?,
        whitened_cov: empirical_cov(&white)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub k: usize,
    pub r: f64,
    pub gamma: f64,
    pub sigma_nk: f64,
    pub sampling: SamplingMode,
    pub master_seed: u64,
    pub replications: usize,
    pub successes: usize,
    pub failure_count: usize,
    pub failure_fraction: f64,
    pub unreliable: bool,
    pub insufficient_replications: bool,
    pub empirical_mean: Option<[f64; 2]>,
    pub empirical_cov: Option<Mat2>,
    pub theoretical_cov: Mat2,
    /// `(empirical - theoretical) / |theoretical|` per entry.
    pub relative_deviation: Option<Mat2>,
    pub normality: Option<NormalityDiagnostics>,
    pub second_order_rates: Option<SecondOrderRates>,
    pub timing: Timing,
}

impl ValidationReport {
    /// The report with timing zeroed; a pure function of the configuration.
    pub fn deterministic_part(&self) -> ValidationReport {
        ValidationReport {
            timing: Timing {
                elapsed_seconds: 0.0,
                workers: 0,
            },
            ..self.clone()
        }
    }
}

/// Aggregates records in index order, whatever order they arrive in.
pub fn summarize(experiment: &Experiment, records: &[ReplicationRecord], timing: Timing) -> ValidationReport {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| r.index);
    let pairs: Vec<[f64; 2]> = sorted
        .iter()
        .filter(|r| r.status == ReplicationStatus::Ok)
        .map(ReplicationRecord::pair)
        .collect();
    let theo = experiment.covariance.estimator_cov;
    let failure_count = sorted.len() - pairs.len();
    let failure_fraction = if sorted.is_empty() { 0.0 } else { failure_count as f64 / sorted.len() as f64 };
    let emp = empirical_cov(&pairs).ok();
    let rel = emp.map(|e| {
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (e.get(i, j) - theo.get(i, j)) / theo.get(i, j).abs();
            }
        }
        Mat2(out)
    });
    ValidationReport {
        n: experiment.config.n,
        k: experiment.k,
        r: experiment.config.r,
        gamma: experiment.gamma,
        sigma_nk: experiment.sigma_nk,
        sampling: experiment.config.sampling,
        master_seed: experiment.config.master_seed,
        replications: sorted.len(),
        successes: pairs.len(),
        failure_count,
        failure_fraction,
        unreliable: failure_fraction > MAX_FAILURE_FRACTION,
        insufficient_replications: pairs.len() < 2,
        empirical_mean: (!pairs.is_empty()).then(|| mean_pair(&pairs)),
        empirical_cov: emp,
        theoretical_cov: theo,
        relative_deviation: rel,
        normality: normality_diagnostics(&pairs, &theo).ok(),
        second_order_rates: experiment.rates,
        timing,
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<ReplicationRecord>,
    pub report: ValidationReport,
}

pub fn run_experiment(experiment: &Experiment) -> Result<ExperimentOutput> {
    let workers = experiment.config.worker_count_hint;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let m = experiment.config.replications as u64;
    let records: Vec<ReplicationRecord> =
        pool.install(|| (0..m).into_par_iter().map(|i| run_replication(experiment, i)).collect());
    let timing = Timing {
        elapsed_seconds: start.elapsed().as_secs_f64(),
        workers,
    };
    let report = summarize(experiment, &records, timing);
    Ok(ExperimentOutput { records, report })
}

/// CSV with header `index,gamma_hat,sigma_hat,z1,z2,status`.
pub fn write_records_csv<W: Write>(writer: W, records: &[ReplicationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_json<W: Write>(mut writer: W, report: &ValidationReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, report)?;
    writeln!(writer)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::top_k_excesses;
    use crate::process::simulate_with_rng;
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn seq(c: &[f64]) -> CoefficientSequence {
        CoefficientSequence::explicit(c.to_vec()).unwrap()
    }

    fn config(c: &[f64], n: usize, k: KChoice, m: usize) -> ExperimentConfig {
        ExperimentConfig {
            coeffs: seq(c),
            model: InnovationModel::one_sided(3.0).unwrap(),
            n,
            k,
            r: -0.5,
            replications: m,
            master_seed: 7,
            worker_count_hint: 2,
            sampling: SamplingMode::Process,
        }
    }

    fn expansion(c: &[f64]) -> QuantileExpansion {
        quantile_expansion(&tail_expansion(3.0, &seq(c)).unwrap()).unwrap()
    }

    #[test]
    fn sigma_nk_examples() {
        let iid = expansion(&[1.0]);
        assert_relative_eq!(sigma_nk(Some(&iid), 1.0 / 3.0, 100_000, 100).unwrap(), 10.0 / 3.0, max_relative = 1e-14);
        let q = expansion(&[1.0, 0.5]);
        let s = sigma_nk(Some(&q), 1.0 / 3.0, 1_000_000, 100).unwrap();
        let t = 10f64.powf(4.0 / 3.0);
        let by_hand = (q.a[0] * t + 2.8125 / 3.375 + q.a[2] / t) / 3.0;
        assert_relative_eq!(s, by_hand, max_relative = 1e-14);
        assert_relative_eq!(s, (1.040042 * t + 0.833333 + 1.068333 / t) / 3.0, max_relative = 1e-6);
        let mut prev = 0.0;
        for k in [1000usize, 500, 100, 10] {
            let v = sigma_nk(Some(&q), 1.0 / 3.0, 100_000, k).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(matches!(sigma_nk(None, 0.5, 10, 2), Err(Error::SigmaUnavailable(_))));
    }

    #[test]
    fn streaming_matches_materialised_pipeline() {
        for c in [&[1.0][..], &[1.0, 0.5], &[0.3, -0.7, 0.2, 0.1]] {
            for (n, k) in [(5, 4), (20_000, 37), (3 * CHUNK + 11, 100)] {
                let coeffs = seq(c);
                let model = InnovationModel::symmetric(2.5).unwrap();
                let mut a = StreamRng::new(3, 9);
                let mut b = a.clone();
                let streamed = stream_top_k(&coeffs, &model, n, k, &mut a).unwrap();
                let path = simulate_with_rng(&coeffs, &model, n, &mut b).unwrap();
                assert_eq!(streamed, top_k_excesses(&path, k).unwrap());
            }
        }
    }

    #[test]
    fn replication_is_deterministic() {
        let e = Experiment::new(config(&[1.0, 0.5], 5000, KChoice::Fixed { k: 50 }, 4)).unwrap();
        assert_eq!(run_replication(&e, 3), run_replication(&e, 3));
        assert_ne!(run_replication(&e, 3), run_replication(&e, 4));
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad_k = config(&[1.0], 100, KChoice::Fixed { k: 100 }, 4);
        assert!(matches!(Experiment::new(bad_k), Err(Error::KTooLarge { .. })));
        let mut bad_r = config(&[1.0], 100, KChoice::Fixed { k: 10 }, 4);
        bad_r.r = 0.0;
        assert!(matches!(Experiment::new(bad_r), Err(Error::RMustBeNegative(_))));
        let mut two_sided = config(&[1.0], 100, KChoice::Fixed { k: 10 }, 4);
        two_sided.model = InnovationModel::symmetric(3.0).unwrap();
        assert!(matches!(Experiment::new(two_sided), Err(Error::SigmaUnavailable(_))));
    }

    #[test]
    fn rule_iv_resolves_k() {
        let e = Experiment::new(config(&[1.0, 0.5], 1_000_000, KChoice::RuleIv { theta: 0.9 }, 1)).unwrap();
        assert_eq!(e.k(), 144);
        let e = Experiment::new(config(&[1.0], 1_000_000, KChoice::RuleIv { theta: 0.9 }, 1)).unwrap();
        assert_eq!(e.k(), 1218);
    }

    #[test]
    fn empirical_cov_examples() {
        assert_eq!(empirical_cov(&[[0.0, 0.0], [2.0, 2.0]]).unwrap(), Mat2::symmetric(2.0, 2.0, 2.0));
        assert_eq!(empirical_cov(&[[1.5, -3.0]; 7]).unwrap(), Mat2::ZERO);
        assert!(empirical_cov(&[[1.0, 1.0]]).is_err());
        let pairs: Vec<[f64; 2]> = (0..100).map(|i| [(i as f64).sin(), (i as f64 * 0.3).cos()]).collect();
        assert!(empirical_cov(&pairs).unwrap().is_symmetric(0.0));
    }

    #[test]
    fn whitening_and_degenerate_diagnostics() {
        let pairs: Vec<[f64; 2]> = (0..60).map(|i| [i as f64, -(i as f64) * 0.5]).collect();
        assert_eq!(whiten(&pairs, &Mat2::IDENTITY).unwrap(), pairs);
        let d = normality_diagnostics(&[[0.0, 0.0]; 100], &Mat2::IDENTITY).unwrap();
        assert_eq!(d.ks[0].statistic, 0.5);
        assert_eq!(d.ks[1].statistic, 0.5);
        assert!(d.ks[0].p_value < 1e-10);
        assert!(normality_diagnostics(&pairs, &Mat2::symmetric(1.0, 1.0, 1.0)).is_err());
        assert!(normality_diagnostics(&pairs[..10], &Mat2::IDENTITY).is_err());
    }

    fn normal_pairs(v: &Mat2, m: usize, seed: u64) -> Vec<[f64; 2]> {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // Cholesky factor of v.
        let l00 = v.get(0, 0).sqrt();
        let l10 = v.get(1, 0) / l00;
        let l11 = (v.get(1, 1) - l10 * l10).sqrt();
        (0..m)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                [l00 * a, l10 * a + l11 * b]
            })
            .collect()
    }

    #[test]
    fn synthetic_normal_passes_diagnostics() {
        let v = Mat2::symmetric(1.79, -1.35, 2.79);
        let seeds = 200;
        let passes = (0..seeds)
            .filter(|&s| {
                let d = normality_diagnostics(&normal_pairs(&v, 5000, s), &v).unwrap();
                d.ks[0].p_value > 0.01 && d.ks[1].p_value > 0.01
            })
            .count();
        // Nominal rate is at least 0.98; 190 of 200 is three standard errors below.
        assert!(passes >= 190, "{passes} of {seeds}");

        let d = normality_diagnostics(&normal_pairs(&v, 10_000, 1), &v).unwrap();
        assert!(d.whitened_cov.max_abs_diff(&Mat2::IDENTITY) < 0.05, "{:?}", d.whitened_cov);
    }

    #[test]
    fn report_is_independent_of_workers_and_order() {
        let mut cfg = config(&[1.0, 0.5], 20_000, KChoice::Fixed { k: 200 }, 60);
        cfg.worker_count_hint = 1;
        let one = run_experiment(&Experiment::new(cfg.clone()).unwrap()).unwrap();
        cfg.worker_count_hint = 3;
        let e = Experiment::new(cfg).unwrap();
        let three = run_experiment(&e).unwrap();
        assert_eq!(one.records, three.records);
        assert_eq!(one.report.deterministic_part(), three.report.deterministic_part());

        let mut shuffled = three.records.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
        let again = summarize(&e, &shuffled, three.report.timing);
        assert_eq!(again, three.report);
        assert!(again.normality.is_some());
        assert!(!again.insufficient_replications);
    }

    #[test]
    fn single_replication_flags_insufficient() {
        let e = Experiment::new(config(&[1.0], 1000, KChoice::Fixed { k: 50 }, 1)).unwrap();
        let out = run_experiment(&e).unwrap();
        assert!(out.report.insufficient_replications);
        assert!(out.report.empirical_cov.is_none());
        assert!(out.report.empirical_mean.is_some());
    }

    #[test]
    fn failures_counted_and_flagged() {
        let e = Experiment::new(config(&[1.0], 1000, KChoice::Fixed { k: 50 }, 1)).unwrap();
        let mut records: Vec<ReplicationRecord> = (0..100).map(|i| run_replication(&e, i)).collect();
        let base = records.iter().filter(|r| r.status != ReplicationStatus::Ok).count();
        let mut flipped = 0;
        for r in records.iter_mut().filter(|r| r.status == ReplicationStatus::Ok).take(6) {
            r.status = ReplicationStatus::NoSolution;
            flipped += 1;
        }
        let rep = summarize(&e, &records, Timing { elapsed_seconds: 0.0, workers: 1 });
        assert_eq!(rep.failure_count, base + flipped);
        assert_eq!(rep.successes, 100 - base - flipped);
        assert!(rep.unreliable);
    }

    #[test]
    fn csv_header_and_json_keys() {
        let e = Experiment::new(config(&[1.0], 1000, KChoice::Fixed { k: 50 }, 2)).unwrap();
        let out = run_experiment(&e).unwrap();
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &out.records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "index,gamma_hat,sigma_hat,z1,z2,status");
        assert!(text.lines().nth(1).unwrap().ends_with(",ok"));
        let mut json = Vec::new();
        write_report_json(&mut json, &out.report).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        for key in ["empirical_mean", "theoretical_cov", "failure_count", "second_order_rates", "timing"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
