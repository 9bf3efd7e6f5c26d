//! Linear processes `X_t = sum_j c_j Z_{t-j}` driven by Pareto-type innovations.
//!
//! Infinite moving averages are realised as finite truncations that carry a
//! certified bound on the discarded coefficient mass, so every downstream
//! series over the coefficients can report how much it may have lost.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Default tolerance on the discarded coefficient mass of an ARMA expansion.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-12;

/// Relative slack added to the decay constant so that `|c_j| < A u^{-j}` is strict.
const DECAY_SLACK: f64 = 1e-12;

/// Decay base reported for finitely supported sequences, where any `u > 1` works.
const FINITE_SUPPORT_DECAY: f64 = 2.0;

const MAX_EXPANSION_LEN: usize = 10_000_000;
const MAX_CONTRACTION_STEPS: usize = 1_000_000;

/// Innovation law with regularly varying tails of index `-alpha` and a
/// constant slowly varying factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnovationModel {
    /// `P(Z > z) = z^{-alpha}` on `[1, inf)`.
    OneSidedPareto { alpha: f64 },
    /// Sign `+1` with probability `pi1`, `-1` with probability `pi2`,
    /// magnitude one-sided Pareto(`alpha`).
    TwoSidedPareto { alpha: f64, pi1: f64, pi2: f64 },
}

impl InnovationModel {
    pub fn one_sided(alpha: f64) -> Result<Self> {
        let m = InnovationModel::OneSidedPareto { alpha };
        m.validate()?;
        Ok(m)
    }

    pub fn two_sided(alpha: f64, pi1: f64, pi2: f64) -> Result<Self> {
        let m = InnovationModel::TwoSidedPareto { alpha, pi1, pi2 };
        m.validate()?;
        Ok(m)
    }

    /// Symmetric two-sided model, `pi1 = pi2 = 1/2`.
    pub fn symmetric(alpha: f64) -> Result<Self> {
        Self::two_sided(alpha, 0.5, 0.5)
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            InnovationModel::OneSidedPareto { alpha } => alpha,
            InnovationModel::TwoSidedPareto { alpha, .. } => alpha,
        }
    }

    /// Tail index `gamma = 1 / alpha`.
    pub fn gamma(&self) -> f64 {
        1.0 / self.alpha()
    }

    pub fn validate(&self) -> Result<()> {
        let alpha = self.alpha();
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive and finite, got {alpha}")));
        }
        if let InnovationModel::TwoSidedPareto { pi1, pi2, .. } = *self {
            if !(pi1 >= 0.0 && pi2 >= 0.0) || (pi1 + pi2 - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "tail weights must be non-negative and sum to one, got pi1 = {pi1}, pi2 = {pi2}"
                )));
            }
        }
        Ok(())
    }

    /// One draw by inverse transform.
    #[inline]
    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            InnovationModel::OneSidedPareto { alpha } => rng.open_closed01().powf(-1.0 / alpha),
            InnovationModel::TwoSidedPareto { alpha, pi1, .. } => {
                let sign = if rng.unit() < pi1 { 1.0 } else { -1.0 };
                sign * rng.open_closed01().powf(-1.0 / alpha)
            }
        }
    }

    /// Inverse cdf of the one-sided law at uniform `u in (0, 1]`.
    pub fn one_sided_quantile(alpha: f64, u: f64) -> f64 {
        u.powf(-1.0 / alpha)
    }

    fn fingerprint_words(&self) -> [u64; 4] {
        match *self {
            InnovationModel::OneSidedPareto { alpha } => [1, alpha.to_bits(), 0, 0],
            InnovationModel::TwoSidedPareto { alpha, pi1, pi2 } => {
                [2, alpha.to_bits(), pi1.to_bits(), pi2.to_bits()]
            }
        }
    }
}

/// `count` iid innovations from stream 0 of `seed`.
pub fn innovation_sample(model: &InnovationModel, count: usize, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let mut rng = StreamRng::new(seed, 0);
    Ok((0..count).map(|_| model.draw(&mut rng)).collect())
}

/// Mean and variance of the one-sided Pareto innovation.
pub fn innovation_moments(model: &InnovationModel) -> Result<(f64, f64)> {
    match *model {
        InnovationModel::OneSidedPareto { alpha } => {
            model.validate()?;
            if alpha <= 2.0 {
                return Err(Error::MomentDoesNotExist(format!(
                    "the variance of a Pareto({alpha}) innovation needs alpha > 2"
                )));
            }
            let mu = alpha / (alpha - 1.0);
            let sigma2 = alpha / ((alpha - 1.0) * (alpha - 2.0));
            Ok((mu, sigma2))
        }
        InnovationModel::TwoSidedPareto { .. } => Err(Error::UnsupportedModel(
            "moments are defined for the one-sided Pareto law only".into(),
        )),
    }
}

/// How a coefficient sequence was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientOrigin {
    Explicit,
    Arma { ar: Vec<f64>, ma: Vec<f64> },
}

/// Geometric bound on the coefficients discarded by a truncation.
///
/// With companion matrix `F` and last stored state `s_J`, every discarded
/// coefficient obeys `|c_{J+h}| <= ||F^h|| ||s_J||`, and `||F^m|| = contraction < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCertificate {
    pub state_norm: f64,
    /// `||F^h||_inf` for `h = 1..=m`.
    pub power_norms: Vec<f64>,
    pub contraction: f64,
}

impl TailCertificate {
    /// Upper bound on `sum_{h>=1} |c_{J+h}|^p`.
    pub fn power_sum_bound(&self, p: f64) -> f64 {
        if self.state_norm == 0.0 {
            return 0.0;
        }
        let q = self.contraction.powf(p);
        let block: f64 = self.power_norms.iter().map(|h| h.powf(p)).sum();
        self.state_norm.powf(p) * block / (1.0 - q)
    }

    /// Upper bound on `sum_{h>=1} (offset + h) |c_{J+h}|^p`.
    pub fn weighted_power_sum_bound(&self, p: f64, offset: f64) -> f64 {
        if self.state_norm == 0.0 {
            return 0.0;
        }
        let q = self.contraction.powf(p);
        let m = self.power_norms.len() as f64;
        let s = self.state_norm.powf(p);
        self.power_norms
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let first = offset + (i + 1) as f64;
                h.powf(p) * (first / (1.0 - q) + m * q / ((1.0 - q) * (1.0 - q)))
            })
            .sum::<f64>()
            * s
    }
}

/// Finitely stored coefficients `c_0..c_J` of a linear process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSequence {
    coeffs: Vec<f64>,
    origin: CoefficientOrigin,
    truncation_error_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tail: Option<TailCertificate>,
    /// Base `u` of the geometric decay certificate.
    decay: f64,
}

impl CoefficientSequence {
    /// Exact, finitely supported sequence.
    pub fn explicit(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("coefficient sequence is empty"));
        }
        if let Some((i, c)) = coeffs.iter().enumerate().find(|(_, c)| !c.is_finite()) {
            return Err(Error::invalid(format!("coefficient c[{i}] = {c} is not finite")));
        }
        if coeffs.iter().all(|&c| c == 0.0) {
            return Err(Error::DegenerateCoefficients);
        }
        Ok(Self {
            coeffs,
            origin: CoefficientOrigin::Explicit,
            truncation_error_bound: 0.0,
            tail: None,
            decay: FINITE_SUPPORT_DECAY,
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn origin(&self) -> &CoefficientOrigin {
        &self.origin
    }

    /// Certified bound on `sum_{j>J} |c_j|`.
    pub fn truncation_error_bound(&self) -> f64 {
        self.truncation_error_bound
    }

    pub fn tail_certificate(&self) -> Option<&TailCertificate> {
        self.tail.as_ref()
    }

    /// Upper bound on `sum_{j>J} |c_j|^p`; zero for exact sequences.
    pub fn tail_power_bound(&self, p: f64) -> f64 {
        self.tail.as_ref().map_or(0.0, |t| t.power_sum_bound(p))
    }

    /// Upper bound on `sum_{j>J} j |c_j|^p`; zero for exact sequences.
    pub fn tail_weighted_power_bound(&self, p: f64) -> f64 {
        let last = (self.coeffs.len() - 1) as f64;
        self.tail
            .as_ref()
            .map_or(0.0, |t| t.weighted_power_sum_bound(p, last))
    }

    /// Index of the last stored coefficient.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Largest absolute coefficient, including a bound on the discarded ones.
    pub fn max_abs(&self) -> f64 {
        let stored = self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        stored.max(self.truncation_error_bound)
    }

    /// Same sequence with every coefficient multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda != 0.0) {
            return Err(Error::invalid(format!("scale must be finite and nonzero, got {lambda}")));
        }
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= lambda);
        out.truncation_error_bound *= lambda.abs();
        if let Some(t) = out.tail.as_mut() {
            t.state_norm *= lambda.abs();
        }
        Ok(out)
    }

    fn fingerprint_words(&self) -> impl Iterator<Item = u64> + '_ {
        std::iter::once(self.coeffs.len() as u64).chain(self.coeffs.iter().map(|c| c.to_bits()))
    }
}

/// Companion matrix of `x_t = ar_1 x_{t-1} + ... + ar_p x_{t-p}`.
fn companion(ar: &[f64]) -> DMatrix<f64> {
    let p = ar.len();
    let mut f = DMatrix::zeros(p, p);
    for (i, &a) in ar.iter().enumerate() {
        f[(0, i)] = a;
    }
    for i in 1..p {
        f[(i, i - 1)] = 1.0;
    }
    f
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest modulus among the inverse roots of `1 - ar_1 z - ... - ar_p z^p`.
pub fn max_inverse_root_modulus(ar: &[f64]) -> f64 {
    let p = trimmed_len(ar);
    if p == 0 {
        return 0.0;
    }
    companion(&ar[..p])
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn trimmed_len(v: &[f64]) -> usize {
    v.iter().rposition(|&x| x != 0.0).map_or(0, |i| i + 1)
}

/// MA(infinity) expansion of a causal ARMA(p, q) filter, truncated at the
/// first `J` whose certified tail mass is below `tol`.
pub fn arma_to_ma(ar: &[f64], ma: &[f64], tol: f64) -> Result<CoefficientSequence> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    if let Some(x) = ar.iter().chain(ma).find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("ARMA parameter {x} is not finite")));
    }
    let p = trimmed_len(ar);
    let q = trimmed_len(ma);
    let ar_eff = &ar[..p];
    let origin = CoefficientOrigin::Arma {
        ar: ar.to_vec(),
        ma: ma.to_vec(),
    };

    let rho = max_inverse_root_modulus(ar_eff);
    if rho >= 1.0 {
        return Err(Error::NotCausal {
            max_inverse_root: rho,
        });
    }

    if p == 0 {
        let mut coeffs = Vec::with_capacity(q + 1);
        coeffs.push(1.0);
        coeffs.extend_from_slice(&ma[..q]);
        return Ok(CoefficientSequence {
            coeffs,
            origin,
            truncation_error_bound: 0.0,
            tail: None,
            decay: FINITE_SUPPORT_DECAY,
        });
    }

    // ||F^h|| for h = 1..=m, stopping at the first power that contracts.
    let f = companion(ar_eff);
    let mut power = f.clone();
    let mut power_norms = vec![inf_norm(&power)];
    while *power_norms.last().unwrap() >= 1.0 {
        if power_norms.len() >= MAX_CONTRACTION_STEPS {
            return Err(Error::invalid(
                "AR filter too close to a unit root to certify the truncation",
            ));
        }
        power = &f * &power;
        power_norms.push(inf_norm(&power));
    }
    let contraction = *power_norms.last().unwrap();

    let mut coeffs: Vec<f64> = Vec::new();
    loop {
        let j = coeffs.len();
        let theta = if j == 0 {
            1.0
        } else if j <= q {
            ma[j - 1]
        } else {
            0.0
        };
        let ar_part: f64 = ar_eff
            .iter()
            .enumerate()
            .filter(|(i, _)| j > *i)
            .map(|(i, &a)| a * coeffs[j - 1 - i])
            .sum();
        coeffs.push(theta + ar_part);

        if j >= q {
            // State (c_J, ..., c_{J-p+1}); negative indices contribute zero.
            let state_norm = (0..p)
                .filter(|&i| j >= i)
                .map(|i| coeffs[j - i].abs())
                .fold(0.0, f64::max);
            let tail = TailCertificate {
                state_norm,
                power_norms: power_norms.clone(),
                contraction,
            };
            let bound = tail.power_sum_bound(1.0);
            if bound < tol {
                return Ok(CoefficientSequence {
                    coeffs,
                    origin,
                    truncation_error_bound: bound,
                    tail: Some(tail),
                    decay: 1.0 / rho,
                });
            }
        }
        if coeffs.len() >= MAX_EXPANSION_LEN {
            return Err(Error::invalid(format!(
                "expansion did not reach tol = {tol} within {MAX_EXPANSION_LEN} terms"
            )));
        }
    }
}

/// Certified pair `(A, u)` with `u > 1` and `|c_j| < A u^{-j}` at every stored `j`.
pub fn verify_a3(coeffs: &CoefficientSequence) -> Result<(f64, f64)> {
    if coeffs.coeffs.iter().all(|&c| c == 0.0) {
        return Err(Error::DegenerateCoefficients);
    }
    let u = coeffs.decay;
    let ln_u = u.ln();
    let log_max = coeffs
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, c)| c.abs().ln() + j as f64 * ln_u)
        .fold(f64::NEG_INFINITY, f64::max);
    let a = log_max.exp() * (1.0 + DECAY_SLACK);
    Ok((a, u))
}

/// `sum_{i<j} min(|c_i|, |c_j|)^(1/gamma) log(max / min)` over the stored support.
pub fn a4_sum(coeffs: &CoefficientSequence, gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    let inv_gamma = 1.0 / gamma;
    let c = &coeffs.coeffs;
    let mut total = 0.0;
    for i in 0..c.len() {
        let a = c[i].abs();
        if a == 0.0 {
            continue;
        }
        for &cj in &c[i + 1..] {
            let b = cj.abs();
            if b == 0.0 {
                continue;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            total += lo.powf(inv_gamma) * (hi / lo).ln();
        }
    }
    Ok(total)
}

/// A simulated stretch `X_1..X_n` of the linear process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath {
    pub values: Vec<f64>,
    pub seed: u64,
    pub fingerprint: u64,
}

/// FNV-1a over the configuration words.
pub fn config_fingerprint(coeffs: &CoefficientSequence, model: &InnovationModel, n: usize) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    coeffs
        .fingerprint_words()
        .chain(model.fingerprint_words())
        .chain(std::iter::once(n as u64))
        .flat_map(u64::to_le_bytes)
        .fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Filters `innovations = (Z_{1-J}, ..., Z_n)` through the stored coefficients.
pub fn filter_innovations(coeffs: &[f64], innovations: &[f64]) -> Result<Vec<f64>> {
    let order = coeffs.len().saturating_sub(1);
    if coeffs.is_empty() || innovations.len() <= order {
        return Err(Error::invalid(format!(
            "need more than {order} innovations for a filter of order {order}, got {}",
            innovations.len()
        )));
    }
    Ok(innovations
        .windows(order + 1)
        .map(|w| {
            coeffs
                .iter()
                .zip(w.iter().rev())
                .map(|(c, z)| c * z)
                .sum::<f64>()
        })
        .collect())
}

/// Draws `n + J` innovations from `rng` and filters them.
pub fn simulate_with_rng(
    coeffs: &CoefficientSequence,
    model: &InnovationModel,
    n: usize,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    model.validate()?;
    let z: Vec<f64> = (0..n + coeffs.order()).map(|_| model.draw(rng)).collect();
    filter_innovations(&coeffs.coeffs, &z)
}

/// Stationary path of length `n` from stream 0 of `seed`.
pub fn simulate(
    coeffs: &CoefficientSequence,
    model: &InnovationModel,
    n: usize,
    seed: u64,
) -> Result<SimulatedPath> {
    let mut rng = StreamRng::new(seed, 0);
    let values = simulate_with_rng(coeffs, model, n, &mut rng)?;
    Ok(SimulatedPath {
        values,
        seed,
        fingerprint: config_fingerprint(coeffs, model, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn seq(c: &[f64]) -> CoefficientSequence {
        CoefficientSequence::explicit(c.to_vec()).unwrap()
    }

    #[test]
    fn inverse_transform_identities() {
        assert_relative_eq!(InnovationModel::one_sided_quantile(3.0, 0.125), 2.0, epsilon = 1e-15);
        let near_one = 1.0 - f64::EPSILON;
        assert_relative_eq!(InnovationModel::one_sided_quantile(3.0, near_one), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pareto_exceedance_fraction_matches_exact_tail() {
        let model = InnovationModel::one_sided(3.0).unwrap();
        let z = innovation_sample(&model, 1_000_000, 2024).unwrap();
        let frac = z.iter().filter(|&&x| x > 10.0).count() as f64 / z.len() as f64;
        let p = 1e-3;
        assert!((frac - p).abs() <= 3.0 * (p / 1e6_f64).sqrt(), "fraction {frac}");
        assert!(z.iter().all(|&x| x >= 1.0));
    }

    #[test]
    fn pareto_sample_kolmogorov_distance() {
        let model = InnovationModel::one_sided(3.0).unwrap();
        let mut z = innovation_sample(&model, 1_000_000, 99).unwrap();
        z.sort_by(f64::total_cmp);
        let n = z.len() as f64;
        let d = z
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - x.powf(-3.0);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 3.0 * 2.0 / n.sqrt(), "KS distance {d}");
    }

    #[test]
    fn two_sided_signs_follow_weights() {
        let model = InnovationModel::two_sided(2.5, 0.8, 0.2).unwrap();
        let z = innovation_sample(&model, 200_000, 5).unwrap();
        let pos = z.iter().filter(|&&x| x > 0.0).count() as f64 / z.len() as f64;
        assert!((pos - 0.8).abs() < 5.0 * (0.16f64 / 2e5).sqrt());
        assert!(z.iter().all(|x| x.abs() >= 1.0));
        assert!(InnovationModel::two_sided(2.0, 0.7, 0.2).is_err());
        assert_eq!(
            InnovationModel::symmetric(3.0).unwrap(),
            InnovationModel::TwoSidedPareto { alpha: 3.0, pi1: 0.5, pi2: 0.5 }
        );
    }

    #[test]
    fn innovation_sample_rejects_zero_count() {
        let model = InnovationModel::one_sided(3.0).unwrap();
        assert!(innovation_sample(&model, 0, 1).is_err());
        assert!(InnovationModel::one_sided(0.0).is_err());
    }

    #[test]
    fn moments_of_pareto() {
        let (mu, s2) = innovation_moments(&InnovationModel::one_sided(3.0).unwrap()).unwrap();
        assert_eq!((mu, s2), (1.5, 1.5));
        let (mu, s2) = innovation_moments(&InnovationModel::one_sided(4.0).unwrap()).unwrap();
        assert_relative_eq!(mu, 4.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(s2, 4.0 / 6.0, epsilon = 1e-15);
        assert!(matches!(
            innovation_moments(&InnovationModel::one_sided(2.0).unwrap()),
            Err(Error::MomentDoesNotExist(_))
        ));
        assert!(matches!(
            innovation_moments(&InnovationModel::symmetric(3.0).unwrap()),
            Err(Error::UnsupportedModel(_))
        ));
    }

    #[test]
    fn ar1_expansion_truncates_at_forty() {
        let s = arma_to_ma(&[0.5], &[], 1e-12).unwrap();
        assert_eq!(s.order(), 40);
        for (j, c) in s.coeffs().iter().enumerate() {
            assert_eq!(*c, 0.5f64.powi(j as i32));
        }
        assert!(s.truncation_error_bound() < 1e-12);
        assert_relative_eq!(s.truncation_error_bound(), 0.5f64.powi(40), max_relative = 1e-12);
    }

    #[test]
    fn pure_ma_is_exact() {
        let s = arma_to_ma(&[], &[0.5], 1e-12).unwrap();
        assert_eq!(s.coeffs(), &[1.0, 0.5]);
        assert_eq!(s.truncation_error_bound(), 0.0);
    }

    #[test]
    fn unit_root_is_not_causal() {
        assert!(matches!(arma_to_ma(&[1.0], &[], 1e-12), Err(Error::NotCausal { .. })));
        assert!(matches!(arma_to_ma(&[0.5, 0.6], &[], 1e-12), Err(Error::NotCausal { .. })));
        assert!(arma_to_ma(&[0.5], &[], 0.0).is_err());
    }

    #[test]
    fn truncation_certificate_covers_recomputed_tail() {
        for (ar, ma) in [
            (vec![1.5, -0.56], vec![0.3]),
            (vec![0.9], vec![]),
            (vec![-0.7, 0.2], vec![0.4, -0.2]),
            (vec![0.2, 0.1, 0.3], vec![1.0]),
        ] {
            let s = arma_to_ma(&ar, &ma, 1e-9).unwrap();
            let mut c = s.coeffs().to_vec();
            let j0 = c.len();
            for j in j0..j0 + 20 {
                let v: f64 = ar
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| j > *i)
                    .map(|(i, a)| a * c[j - 1 - i])
                    .sum();
                c.push(v);
            }
            let extra: f64 = c[j0..].iter().map(|x| x.abs()).sum();
            assert!(extra <= s.truncation_error_bound(), "{ar:?}: {extra} > {}", s.truncation_error_bound());
            assert!(c[j0..].iter().all(|x| x.abs() < s.truncation_error_bound().max(f64::MIN_POSITIVE)));
        }
    }

    #[test]
    fn a3_certificates() {
        let (a, u) = verify_a3(&seq(&[1.0, 0.5])).unwrap();
        assert_eq!(u, 2.0);
        assert!(1.0 < a && 0.5 < a / u);
        assert!(a <= 1.0 + 1e-9);

        let s = arma_to_ma(&[0.5], &[], 1e-12).unwrap();
        let (a, u) = verify_a3(&s).unwrap();
        assert_relative_eq!(u, 2.0, max_relative = 1e-12);
        assert!(a > 1.0 && a < 1.0 + 1e-9);
        for (j, c) in s.coeffs().iter().enumerate() {
            assert!(c.abs() < a * u.powi(-(j as i32)));
        }
        assert!(matches!(
            CoefficientSequence::explicit(vec![0.0, 0.0]),
            Err(Error::DegenerateCoefficients)
        ));
    }

    #[test]
    fn a4_examples() {
        assert_relative_eq!(a4_sum(&seq(&[1.0, 0.5]), 1.0).unwrap(), 0.5 * 2f64.ln(), epsilon = 1e-15);
        assert_eq!(a4_sum(&seq(&[1.0]), 1.0).unwrap(), 0.0);
        assert_eq!(a4_sum(&seq(&[1.0, 1.0]), 0.7).unwrap(), 0.0);
        assert_eq!(a4_sum(&seq(&[1.0, 0.0, 0.3]), 0.5).unwrap(), 0.09 * (1.0f64 / 0.3).ln());
        assert!(a4_sum(&seq(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn identity_filter_passes_innovations_through() {
        let model = InnovationModel::one_sided(3.0).unwrap();
        let path = simulate(&seq(&[1.0]), &model, 1000, 17).unwrap();
        let z = innovation_sample(&model, 1000, 17).unwrap();
        assert_eq!(path.values, z);
    }

    #[test]
    fn hand_convolution() {
        let x = filter_innovations(&[1.0, 0.5], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(x, vec![2.5, 5.0]);
    }

    #[test]
    fn simulation_is_deterministic() {
        let model = InnovationModel::symmetric(2.5).unwrap();
        let c = arma_to_ma(&[0.4], &[0.3], 1e-12).unwrap();
        let a = simulate(&c, &model, 5000, 8).unwrap();
        let b = simulate(&c, &model, 5000, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.len(), 5000);
        assert!(a.values.iter().all(|x| x.is_finite()));
        let other = simulate(&c, &model, 5001, 8).unwrap();
        assert_ne!(a.fingerprint, other.fingerprint);
    }

    proptest! {
        #[test]
        fn filter_is_linear_in_coefficients(
            c in prop::collection::vec(0.01f64..2.0, 1..6),
            exp in -3i32..4,
            seed in any::<u64>(),
        ) {
            let model = InnovationModel::one_sided(3.0).unwrap();
            let base = seq(&c);
            let lambda = 2f64.powi(exp);
            let scaled = base.scaled(lambda).unwrap();
            let x = simulate(&base, &model, 200, seed).unwrap().values;
            let y = simulate(&scaled, &model, 200, seed).unwrap().values;
            for (a, b) in x.iter().zip(&y) {
                prop_assert_eq!(a * lambda, *b);
            }
        }

        #[test]
        fn a4_scales_with_power_of_gamma(
            c in prop::collection::vec(0.01f64..2.0, 1..6),
            lambda in 0.1f64..10.0,
            gamma in 0.2f64..2.0,
        ) {
            let base = a4_sum(&seq(&c), gamma).unwrap();
            let scaled = a4_sum(&seq(&c).scaled(lambda).unwrap(), gamma).unwrap();
            prop_assert!((scaled - lambda.powf(1.0 / gamma) * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
        }
    }
}
