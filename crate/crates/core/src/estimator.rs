//! Generalized Pareto utilities and the likelihood moment estimator (LME).
//!
//! The LME solves the two moment equations
//!
//! ```text
//! (1/k) sum log(1 + b Y_j)                 = gamma
//! (1/k) sum (1 + b Y_j)^(r / gamma)        = 1 / (1 - r)
//! ```
//!
//! with `b = gamma / sigma`. Substituting the first equation into the second
//! leaves a scalar root problem in `b`, solved here by bracketing on a
//! geometric grid followed by bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping rule on `|g(b)|` at the returned root.
pub const LME_RESIDUAL_TOL: f64 = 1e-10;
/// Relative bracket width at which bisection stops.
pub const LME_BRACKET_REL_TOL: f64 = 1e-12;
/// Bracket search spans `b in [10^-MAX, 10^MAX] / mean excess`.
const BRACKET_DECADES: i32 = 12;
const MAX_BISECTIONS: usize = 200;

/// Generalized Pareto law `1 - (1 + gamma x / sigma)^(-1/gamma)`, `gamma > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub gamma: f64,
    pub sigma: f64,
}

impl GpdParams {
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!("GPD shape must be positive, got {gamma}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!("GPD scale must be positive, got {sigma}")));
        }
        Ok(Self { gamma, sigma })
    }
}

pub fn gpd_cdf(params: &GpdParams, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::invalid(format!("GPD cdf needs x >= 0, got {x}")));
    }
    let GpdParams { gamma, sigma } = *params;
    Ok(-(-(gamma * x / sigma).ln_1p() / gamma).exp_m1())
}

pub fn gpd_quantile(params: &GpdParams, p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("probability must lie in [0, 1), got {p}")));
    }
    let GpdParams { gamma, sigma } = *params;
    Ok(sigma * (-gamma * (-p).ln_1p()).exp_m1() / gamma)
}

/// Excesses of the `k` largest absolute values over the `(k+1)`-th largest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessSample {
    /// Non-increasing.
    excesses: Vec<f64>,
    threshold: f64,
    n: usize,
}

impl ExcessSample {
    /// Wraps excesses that were produced directly (for example by GPD sampling);
    /// threshold is recorded as zero and `n = k`.
    pub fn from_excesses(mut excesses: Vec<f64>) -> Result<Self> {
        if let Some(y) = excesses.iter().find(|y| !(y.is_finite() && **y >= 0.0)) {
            return Err(Error::InvalidSample(format!("excess {y} is not a finite non-negative value")));
        }
        excesses.sort_by(|a, b| b.total_cmp(a));
        let n = excesses.len();
        Ok(Self {
            excesses,
            threshold: 0.0,
            n,
        })
    }

    /// `excesses` must already be non-increasing and non-negative.
    pub(crate) fn from_sorted_parts(excesses: Vec<f64>, threshold: f64, n: usize) -> Self {
        debug_assert!(excesses.windows(2).all(|w| w[0] >= w[1]));
        Self {
            excesses,
            threshold,
            n,
        }
    }

    pub fn excesses(&self) -> &[f64] {
        &self.excesses
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn k(&self) -> usize {
        self.excesses.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            excesses: self.excesses.iter().map(|y| y * lambda).collect(),
            threshold: self.threshold * lambda,
            n: self.n,
        }
    }
}

/// Threshold at the `(k+1)`-th largest absolute value and the `k` excesses above it.
///
/// Only values are returned, so ties at the threshold need no index rule:
/// any tied observation that lands among the top `k` contributes a zero excess,
/// and the result is the same whichever tied index is picked.
pub fn top_k_excesses(series: &[f64], k: usize) -> Result<ExcessSample> {
    let n = series.len();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k + 1 > n {
        return Err(Error::KTooLarge { k, n });
    }
    if let Some(x) = series.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidSample(format!("series contains non-finite value {x}")));
    }
    let mut abs: Vec<f64> = series.iter().map(|x| x.abs()).collect();
    let cut = n - k - 1;
    let (_, &mut threshold, upper) = abs.select_nth_unstable_by(cut, f64::total_cmp);
    upper.sort_unstable_by(|a, b| b.total_cmp(a));
    let excesses = upper.iter().map(|x| x - threshold).collect();
    Ok(ExcessSample {
        excesses,
        threshold,
        n,
    })
}

/// Fitted GPD parameters with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmeEstimate {
    pub gamma_hat: f64,
    pub sigma_hat: f64,
    /// Root `gamma_hat / sigma_hat` of the reduced equation.
    pub b_hat: f64,
    /// `|g(b_hat)|` at the returned root.
    pub residual: f64,
    pub iterations: usize,
    pub r: f64,
}

/// Reduced moment equation `g(b)` over a fixed excess sample.
struct ReducedEquation<'a> {
    y: &'a [f64],
    r: f64,
    target: f64,
    logs: Vec<f64>,
}

impl<'a> ReducedEquation<'a> {
    fn new(y: &'a [f64], r: f64) -> Self {
        Self {
            y,
            r,
            target: 1.0 / (1.0 - r),
            logs: vec![0.0; y.len()],
        }
    }

    /// `gamma(b) = mean log(1 + b y)`; fills `self.logs`.
    fn gamma_at(&mut self, b: f64) -> f64 {
        for (l, y) in self.logs.iter_mut().zip(self.y) {
            *l = (b * y).ln_1p();
        }
        self.logs.iter().sum::<f64>() / self.y.len() as f64
    }

    fn eval(&mut self, b: f64) -> f64 {
        let gamma = self.gamma_at(b);
        let e = self.r / gamma;
        let mean_pow = self.logs.iter().map(|l| (e * l).exp()).sum::<f64>() / self.y.len() as f64;
        mean_pow - self.target
    }
}

/// Likelihood moment estimate of `(gamma, sigma)` from threshold excesses.
pub fn lme_fit(sample: &ExcessSample, r: f64) -> Result<LmeEstimate> {
    if !(r < 0.0) {
        return Err(Error::RMustBeNegative(r));
    }
    if !r.is_finite() {
        return Err(Error::invalid(format!("r must be finite, got {r}")));
    }
    let y = sample.excesses();
    let k = y.len();
    if k < 2 {
        return Err(Error::InvalidSample(format!("need k >= 2 excesses, got {k}")));
    }
    let mut positive = y.iter().copied().filter(|&v| v > 0.0);
    let first = positive.next();
    if !matches!(first, Some(f) if positive.any(|v| v != f)) {
        return Err(Error::NoLmeSolution(
            "degenerate sample: fewer than two distinct positive excesses".into(),
        ));
    }

    let mean = y.iter().sum::<f64>() / k as f64;
    let mut g = ReducedEquation::new(y, r);
    let mut evals = 0usize;

    let mut bracket = None;
    let mut prev = (10f64.powi(-BRACKET_DECADES) / mean, 0.0);
    prev.1 = g.eval(prev.0);
    evals += 1;
    for d in (-BRACKET_DECADES + 1)..=BRACKET_DECADES {
        if prev.1 == 0.0 {
            break;
        }
        let b = 10f64.powi(d) / mean;
        let v = g.eval(b);
        evals += 1;
        if v == 0.0 || v.signum() != prev.1.signum() {
            bracket = Some((prev, (b, v)));
            break;
        }
        prev = (b, v);
    }

    let (b_hat, residual, iterations) = if prev.1 == 0.0 {
        (prev.0, 0.0, evals)
    } else {
        let Some(((mut lo, mut g_lo), (mut hi, g_hi))) = bracket else {
            return Err(Error::NoLmeSolution(format!(
                "g(b) keeps the sign of {:+.3e} on [1e-{BRACKET_DECADES}, 1e{BRACKET_DECADES}] / mean excess",
                prev.1
            )));
        };
        if g_hi == 0.0 {
            lo = hi;
        }
        let mut steps = 0;
        while hi - lo > LME_BRACKET_REL_TOL * hi && steps < MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            let v = g.eval(mid);
            steps += 1;
            if v == 0.0 {
                lo = mid;
                hi = mid;
            } else if v.signum() == g_lo.signum() {
                lo = mid;
                g_lo = v;
            } else {
                hi = mid;
            }
        }
        let b = 0.5 * (lo + hi);
        let res = g.eval(b).abs();
        (b, res, evals + steps + 1)
    };

    if !(residual <= LME_RESIDUAL_TOL) {
        return Err(Error::NoLmeSolution(format!(
            "bisection stalled with |g| = {residual:.3e} at b = {b_hat:.6e}"
        )));
    }
    let gamma_hat = g.gamma_at(b_hat);
    Ok(LmeEstimate {
        gamma_hat,
        sigma_hat: gamma_hat / b_hat,
        b_hat,
        residual,
        iterations,
        r,
    })
}

/// The reduced LME equation `g(b)` for a sample, exposed for diagnostics.
pub fn lme_equation(sample: &ExcessSample, r: f64, b: f64) -> f64 {
    ReducedEquation::new(sample.excesses(), r).eval(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn quantile_grid(gamma: f64, sigma: f64, k: usize) -> ExcessSample {
        let p = GpdParams::new(gamma, sigma).unwrap();
        let y = (1..=k)
            .map(|i| gpd_quantile(&p, (i as f64 - 0.5) / k as f64).unwrap())
            .collect();
        ExcessSample::from_excesses(y).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let p = GpdParams::new(1.0, 1.0).unwrap();
        assert_relative_eq!(gpd_cdf(&p, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(gpd_cdf(&GpdParams::new(0.5, 2.0).unwrap(), 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            gpd_cdf(&GpdParams::new(0.5, 1.0).unwrap(), 6.0).unwrap(),
            0.9375,
            epsilon = 1e-15
        );
        assert!(gpd_cdf(&p, -0.1).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert_relative_eq!(
            gpd_quantile(&GpdParams::new(1.0, 1.0).unwrap(), 0.5).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            gpd_quantile(&GpdParams::new(0.5, 1.0).unwrap(), 0.9375).unwrap(),
            6.0,
            max_relative = 1e-14
        );
        let p = GpdParams::new(0.3, 2.0).unwrap();
        for i in 1..=9 {
            let q = i as f64 / 10.0;
            let back = gpd_cdf(&p, gpd_quantile(&p, q).unwrap()).unwrap();
            assert!((back - q).abs() < 1e-12);
        }
        assert!(gpd_quantile(&p, 1.0).is_err());
        assert!(gpd_quantile(&p, -0.01).is_err());
        assert!(GpdParams::new(0.0, 1.0).is_err());
        assert!(GpdParams::new(0.5, -1.0).is_err());
    }

    #[test]
    fn top_k_hand_orderings() {
        let s = top_k_excesses(&[5.0, -1.0, 4.0, 2.0, -3.0], 2).unwrap();
        assert_eq!(s.threshold(), 3.0);
        assert_eq!(s.excesses(), &[2.0, 1.0]);

        let s = top_k_excesses(&[1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(s.threshold(), 1.0);
        assert_eq!(s.excesses(), &[2.0, 1.0]);

        let series = [0.4, -7.0, 2.5, -0.1, 3.0];
        let s = top_k_excesses(&series, series.len() - 1).unwrap();
        assert_eq!(s.threshold(), 0.1);
        assert_eq!(s.n(), 5);

        assert!(matches!(top_k_excesses(&[1.0, 2.0], 2), Err(Error::KTooLarge { k: 2, n: 2 })));
    }

    #[test]
    fn ties_at_threshold_are_deterministic() {
        let s = top_k_excesses(&[2.0, -2.0, 5.0, 2.0, 1.0], 2).unwrap();
        assert_eq!(s.threshold(), 2.0);
        assert_eq!(s.excesses(), &[3.0, 0.0]);
    }

    #[test]
    fn constant_excesses_have_no_root() {
        let s = ExcessSample::from_excesses(vec![1.5; 50]).unwrap();
        assert!(matches!(lme_fit(&s, -1.0), Err(Error::NoLmeSolution(_))));

        // g for a constant sample is e^r - 1/(1-r) < 0 at every b: check on a grid.
        for r in [-0.25, -1.0, -3.0] {
            let y = [1.5, 1.5];
            let mut g = ReducedEquation::new(&y, r);
            for d in -12..=12 {
                let b = 10f64.powi(d);
                assert!(g.eval(b) < 0.0);
            }
        }
        // Two nearly equal values behave like the constant sample.
        let s = ExcessSample::from_excesses(vec![1.0, 1.0 + 1e-9]).unwrap();
        assert!(matches!(lme_fit(&s, -1.0), Err(Error::NoLmeSolution(_))));
    }

    #[test]
    fn parameter_validation() {
        let s = quantile_grid(0.5, 1.0, 100);
        assert!(matches!(lme_fit(&s, 0.0), Err(Error::RMustBeNegative(_))));
        assert!(matches!(lme_fit(&s, 0.5), Err(Error::RMustBeNegative(_))));
        let one = ExcessSample::from_excesses(vec![1.0]).unwrap();
        assert!(matches!(lme_fit(&one, -1.0), Err(Error::InvalidSample(_))));
    }

    /// Independent oracle: scan b on a fine log grid and keep the |g| minimiser.
    fn grid_oracle(sample: &ExcessSample, r: f64) -> (f64, f64) {
        let y = sample.excesses();
        let g = |b: f64| {
            let gamma = y.iter().map(|v| (1.0 + b * v).ln()).sum::<f64>() / y.len() as f64;
            let m = y.iter().map(|v| (1.0 + b * v).powf(r / gamma)).sum::<f64>() / y.len() as f64;
            (m - 1.0 / (1.0 - r), gamma)
        };
        let (mut best_b, mut best) = (0.0, f64::INFINITY);
        for i in 0..=4000 {
            let b = 10f64.powf(-3.0 + 6.0 * i as f64 / 4000.0);
            let (v, _) = g(b);
            if v.abs() < best {
                best = v.abs();
                best_b = b;
            }
        }
        let (_, gamma) = g(best_b);
        (gamma, gamma / best_b)
    }

    #[test]
    fn quantile_grid_recovers_parameters() {
        let s = quantile_grid(0.5, 1.0, 10_000);
        let est = lme_fit(&s, -1.0).unwrap();
        assert!((est.gamma_hat - 0.5).abs() <= 0.01, "{est:?}");
        assert!((est.sigma_hat - 1.0).abs() <= 0.02, "{est:?}");
        assert!(est.residual <= LME_RESIDUAL_TOL);

        let (g_oracle, s_oracle) = grid_oracle(&s, -1.0);
        assert!((est.gamma_hat - g_oracle).abs() < 5e-3);
        assert!((est.sigma_hat - s_oracle).abs() < 1e-2);

        // First moment equation holds at the returned values.
        let plug = s
            .excesses()
            .iter()
            .map(|y| (1.0 + est.gamma_hat / est.sigma_hat * y).ln())
            .sum::<f64>()
            / s.k() as f64;
        assert!((plug - est.gamma_hat).abs() < 1e-12);
        // Second one to the residual tolerance.
        assert!(lme_equation(&s, -1.0, est.b_hat).abs() <= LME_RESIDUAL_TOL);
    }

    #[test]
    fn scaling_is_exact_for_powers_of_two() {
        let s = quantile_grid(0.3, 1.7, 500);
        let base = lme_fit(&s, -0.5).unwrap();
        for lambda in [0.25, 2.0, 1024.0] {
            let e = lme_fit(&s.scaled(lambda), -0.5).unwrap();
            assert_eq!(e.gamma_hat, base.gamma_hat);
            assert_eq!(e.sigma_hat, base.sigma_hat * lambda);
            assert_eq!(e.b_hat, base.b_hat / lambda);
        }
    }

    proptest! {
        #[test]
        fn cdf_quantile_roundtrip(gamma in 0.05f64..3.0, sigma in 0.01f64..100.0, p in 0.0f64..0.999) {
            let params = GpdParams::new(gamma, sigma).unwrap();
            let q = gpd_quantile(&params, p).unwrap();
            prop_assert!((gpd_cdf(&params, q).unwrap() - p).abs() < 1e-12);
        }

        #[test]
        fn lme_is_scale_equivariant(
            y in prop::collection::vec(0.001f64..50.0, 20..200),
            lambda in 0.01f64..100.0,
            r in -3.0f64..-0.1,
        ) {
            let s = ExcessSample::from_excesses(y).unwrap();
            if let Ok(base) = lme_fit(&s, r) {
                let e = lme_fit(&s.scaled(lambda), r).unwrap();
                prop_assert!((e.gamma_hat - base.gamma_hat).abs() <= 1e-8 * base.gamma_hat.abs().max(1.0));
                prop_assert!((e.sigma_hat / (lambda * base.sigma_hat) - 1.0).abs() <= 1e-8);
            }
        }

        #[test]
        fn first_equation_holds_at_estimate(
            y in prop::collection::vec(0.001f64..50.0, 20..200),
            r in -3.0f64..-0.1,
        ) {
            let s = ExcessSample::from_excesses(y).unwrap();
            if let Ok(e) = lme_fit(&s, r) {
                let plug = s.excesses().iter().map(|v| (e.b_hat * v).ln_1p()).sum::<f64>() / s.k() as f64;
                prop_assert_eq!(plug, e.gamma_hat);
                prop_assert!(e.residual <= LME_RESIDUAL_TOL);
                prop_assert!(e.sigma_hat > 0.0);
            }
        }
    }
}
