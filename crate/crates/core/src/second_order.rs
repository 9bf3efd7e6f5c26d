//! Second-order tail behaviour of a linear process with exact Pareto(alpha)
//! innovations and non-negative coefficients.
//!
//! The marginal tail expands as
//! `1 - F(t) = c1 t^-a + c2 t^-(a+1) + c3 t^-(a+2) + o(t^-(a+2))`, and the
//! `1 - 1/x` quantile as `b(x) = a1 x^(1/a) + a2 + a3 x^(-1/a) + o(x^(-1/a))`.
//! These give the second-order auxiliary functions, the admissible growth of
//! `k(n)`, and the centring `sigma(n/k) ~ gamma b(n/k)` used by the Monte Carlo
//! harness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{a4_sum, innovation_moments, verify_a3, CoefficientSequence, InnovationModel};

/// Relative cancellation threshold for the "is nonzero" conditions.
pub const ZERO_TOL: f64 = 1e-12;
pub const DEFAULT_XI: f64 = 0.9;
pub const DEFAULT_THETA: f64 = 0.9;

fn is_nonzero(value: f64, scale: f64) -> bool {
    value.abs() > ZERO_TOL * scale
}

fn require_nonnegative(coeffs: &CoefficientSequence) -> Result<()> {
    match coeffs.coeffs().iter().enumerate().find(|(_, c)| **c < 0.0) {
        Some((index, &value)) => Err(Error::NegativeCoefficient { index, value }),
        None => Ok(()),
    }
}

/// `C_u = sum c_j^u` over the stored support.
pub fn c_sum(coeffs: &CoefficientSequence, u: f64) -> Result<f64> {
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::invalid(format!("exponent u must be positive, got {u}")));
    }
    require_nonnegative(coeffs)?;
    Ok(coeffs.coeffs().iter().map(|c| c.powf(u)).sum())
}

/// Three-term tail expansion of the process marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailExpansion {
    pub alpha: f64,
    pub c_tilde: [f64; 3],
    /// Coefficient `-alpha C_alpha` of `t^-(alpha+1)` in the tail derivative.
    pub density_leading: f64,
    pub mu: f64,
    pub sigma2: f64,
    /// `(C2 C_a - C_{a+2}) sigma^2 + (C1^2 C_a - 2 C1 C_{a+1} + C_{a+2}) mu^2`.
    pub variance_bracket: f64,
    /// Sum of the absolute summands of `variance_bracket`.
    pub variance_bracket_scale: f64,
    /// `alpha mu (C1 C_a + C_{a+1})`, the cancellation scale of `c_tilde[1]`.
    pub c2_scale: f64,
}

impl TailExpansion {
    /// Three-term approximation of `1 - F(t)`.
    pub fn tail(&self, t: f64) -> f64 {
        let [c1, c2, c3] = self.c_tilde;
        let a = self.alpha;
        c1 * t.powf(-a) + c2 * t.powf(-a - 1.0) + c3 * t.powf(-a - 2.0)
    }

    pub fn c2_is_zero(&self) -> bool {
        !is_nonzero(self.c_tilde[1], self.c2_scale)
    }
}

pub fn tail_expansion(alpha: f64, coeffs: &CoefficientSequence) -> Result<TailExpansion> {
    if !(alpha.is_finite() && alpha > 2.0) {
        return Err(Error::AlphaTooSmall(alpha));
    }
    require_nonnegative(coeffs)?;
    if !coeffs.coeffs().iter().any(|&c| c > 0.0) {
        return Err(Error::DegenerateCoefficients);
    }
    let (mu, sigma2) = innovation_moments(&InnovationModel::one_sided(alpha)?)?;
    let c = |u: f64| c_sum(coeffs, u);
    let (c1, c2, ca, ca1, ca2) = (c(1.0)?, c(2.0)?, c(alpha)?, c(alpha + 1.0)?, c(alpha + 2.0)?);

    let var_terms = [
        c2 * ca * sigma2,
        -ca2 * sigma2,
        c1 * c1 * ca * mu * mu,
        -2.0 * c1 * ca1 * mu * mu,
        ca2 * mu * mu,
    ];
    let variance_bracket = (c2 * ca - ca2) * sigma2 + (c1 * c1 * ca - 2.0 * c1 * ca1 + ca2) * mu * mu;
    let variance_bracket_scale = var_terms.iter().map(|x| x.abs()).sum();

    Ok(TailExpansion {
        alpha,
        c_tilde: [
            ca,
            alpha * mu * (c1 * ca - ca1),
            0.5 * alpha * (alpha + 1.0) * variance_bracket,
        ],
        density_leading: -alpha * ca,
        mu,
        sigma2,
        variance_bracket,
        variance_bracket_scale,
        c2_scale: alpha * mu * (c1 * ca + ca1),
    })
}

/// Three-term expansion of the `1 - 1/x` quantile and the second-order indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileExpansion {
    pub alpha: f64,
    pub a: [f64; 3],
    /// Second-order index of `b`: `-2 / alpha`.
    pub rho: f64,
    /// Second-order index of the tail: `-1` when `c2 != 0`, else `-2`.
    pub rho_prime: f64,
    pub case_c2_zero: bool,
    /// `(1 + alpha) c2^2 / (2 alpha) - c1 c3`; nonzero exactly when `a3` is.
    pub a3_combination: f64,
    pub tail: TailExpansion,
}

impl QuantileExpansion {
    /// `b(x) = a1 x^(1/alpha) + a2 + a3 x^(-1/alpha)`.
    pub fn quantile(&self, x: f64) -> f64 {
        let s = x.powf(1.0 / self.alpha);
        self.a[0] * s + self.a[1] + self.a[2] / s
    }

    /// Auxiliary function of the extended second-order condition on `b`.
    pub fn a_function(&self, t: f64) -> f64 {
        2.0 * self.a[2] / (self.a[0] * self.alpha) * t.powf(-2.0 / self.alpha)
    }

    /// Auxiliary function of the second-order condition on the tail.
    pub fn a_star_function(&self, t: f64) -> f64 {
        let [c1, c2, c3] = self.tail.c_tilde;
        if self.case_c2_zero {
            -2.0 * c3 / c1 * t.powi(-2)
        } else {
            -c2 / c1 / t
        }
    }
}

pub fn quantile_expansion(expansion: &TailExpansion) -> Result<QuantileExpansion> {
    let [c1, c2, c3] = expansion.c_tilde;
    let alpha = expansion.alpha;
    if !(c1 > 0.0) {
        return Err(Error::invalid(format!("leading tail coefficient must be positive, got {c1}")));
    }
    let a3_combination = (1.0 + alpha) * c2 * c2 / (2.0 * alpha) - c1 * c3;
    let case_c2_zero = expansion.c2_is_zero();
    Ok(QuantileExpansion {
        alpha,
        a: [
            c1.powf(1.0 / alpha),
            c2 / (alpha * c1),
            -c1.powf(-1.0 / alpha - 2.0) * a3_combination / alpha,
        ],
        rho: -2.0 / alpha,
        rho_prime: if case_c2_zero { -2.0 } else { -1.0 },
        case_c2_zero,
        a3_combination,
        tail: *expansion,
    })
}

/// Size of the two second-order bias terms relative to the `1/sqrt(k)` noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderRates {
    /// `sqrt(k) |A(n/k)|`.
    pub rate_2erv: f64,
    /// `sqrt(k) |A*(b(n/k))|`.
    pub rate_2rv: f64,
}

pub fn second_order_rates(n: usize, k: usize, q: &QuantileExpansion) -> Result<SecondOrderRates> {
    if !(1 <= k && k < n) {
        return Err(Error::invalid(format!("need 1 <= k < n, got k = {k}, n = {n}")));
    }
    let x = n as f64 / k as f64;
    let sk = (k as f64).sqrt();
    let b = q.quantile(x);
    Ok(SecondOrderRates {
        rate_2erv: sk * q.a_function(x).abs(),
        rate_2rv: sk * q.a_star_function(b).abs(),
    })
}

/// Growth exponent of `k(n)`: `2 theta / (2 + alpha)`, or `4 theta / (4 + alpha)` when `c2 = 0`.
pub fn k_exponent(alpha: f64, theta: f64, case_c2_zero: bool) -> f64 {
    if case_c2_zero {
        4.0 * theta / (4.0 + alpha)
    } else {
        2.0 * theta / (2.0 + alpha)
    }
}

/// `floor(n^exponent)`, clamped to `[2, n - 1]`.
pub fn choose_k(n: usize, alpha: f64, theta: f64, case_c2_zero: bool) -> Result<usize> {
    if n < 3 {
        return Err(Error::invalid(format!("n must be at least 3 to leave room for k, got {n}")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::invalid(format!("theta must lie in (0, 1), got {theta}")));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let e = k_exponent(alpha, theta, case_c2_zero);
    // Guard against n^e landing a hair below an integer.
    let raw = ((n as f64).ln() * e).exp() * (1.0 + 1e-12);
    Ok((raw.floor() as usize).clamp(2, n - 1))
}

/// `t F'(t) / (1 - F(t))` from the leading density term and the three-term tail.
pub fn von_mises_ratio(t: f64, expansion: &TailExpansion) -> Result<f64> {
    let tail = expansion.tail(t);
    if !(t > 0.0 && tail > 0.0) {
        return Err(Error::TTooSmall { t, value: tail });
    }
    Ok(t * (-expansion.density_leading) * t.powf(-expansion.alpha - 1.0) / tail)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionItem {
    pub label: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub detail: String,
}

/// Every sufficient condition for the normal limit in the Pareto setup, with
/// the number that decided each one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub alpha: f64,
    pub xi: f64,
    pub eta: f64,
    pub c_eta: Option<f64>,
    pub a3_constant: Option<f64>,
    pub a3_decay: Option<f64>,
    pub a4_sum: Option<f64>,
    pub variance_bracket: Option<f64>,
    pub a3_combination: Option<f64>,
    pub k_exponent_bound: Option<f64>,
    pub items: Vec<ConditionItem>,
    pub failing: Vec<String>,
    pub verdict: bool,
}

impl ConditionReport {
    pub fn item(&self, label: &str) -> Option<&ConditionItem> {
        self.items.iter().find(|i| i.label == label)
    }
}

pub fn check_conditions(alpha: f64, coeffs: &CoefficientSequence, xi: f64) -> ConditionReport {
    let mut items = Vec::new();
    let mut push = |label: &str, passed: bool, value: Option<f64>, detail: String| {
        items.push(ConditionItem {
            label: label.to_string(),
            passed,
            value,
            detail,
        })
    };

    let eta = xi * (alpha / (alpha + 3.0)).min(0.5);
    let xi_ok = xi > 0.0 && xi < 1.0;

    let a3 = verify_a3(coeffs).ok();
    push(
        "geometric_decay",
        a3.is_some(),
        a3.map(|(a, _)| a),
        match a3 {
            Some((a, u)) => format!("|c_j| < A u^-j with A = {a:.6e}, u = {u:.6}"),
            None => "degenerate coefficients".into(),
        },
    );

    let gamma = 1.0 / alpha;
    let a4 = a4_sum(coeffs, gamma).ok();
    push(
        "log_ratio_series",
        a4.is_some_and(f64::is_finite),
        a4,
        "finite double sum over the stored support".into(),
    );

    let setup = tail_expansion(alpha, coeffs);
    push(
        "pareto_setup",
        setup.is_ok(),
        Some(alpha),
        match &setup {
            Ok(_) => "alpha > 2 and non-negative coefficients".into(),
            Err(e) => e.to_string(),
        },
    );

    let c_eta = if xi_ok && eta > 0.0 { c_sum(coeffs, eta).ok() } else { None };
    push(
        "(i)",
        xi_ok && c_eta.is_some_and(f64::is_finite),
        c_eta,
        if xi_ok {
            format!("C_eta with eta = {eta:.6} (xi = {xi})")
        } else {
            format!("xi = {xi} must lie in (0, 1)")
        },
    );

    let quant = setup.as_ref().ok().and_then(|t| quantile_expansion(t).ok());
    let (bracket, comb) = match (&setup, &quant) {
        (Ok(t), Some(q)) => (Some(t), Some(q)),
        _ => (None, None),
    };
    push(
        "(ii)",
        bracket.is_some_and(|t| is_nonzero(t.variance_bracket, t.variance_bracket_scale)),
        bracket.map(|t| t.variance_bracket),
        "variance combination must be nonzero".into(),
    );
    push(
        "(iii)",
        comb.is_some_and(|q| {
            let [c1, c2, c3] = q.tail.c_tilde;
            let scale = (1.0 + alpha) * c2 * c2 / (2.0 * alpha) + (c1 * c3).abs();
            is_nonzero(q.a3_combination, scale)
        }),
        comb.map(|q| q.a3_combination),
        "(1 + alpha) c2^2 / (2 alpha) - c1 c3 must be nonzero".into(),
    );

    push(
        "d_moment",
        alpha > 2.0,
        Some(alpha),
        "holds by construction for exact Pareto innovations".into(),
    );
    push(
        "lipschitz_density",
        alpha > 2.0,
        None,
        "holds by construction for exact Pareto innovations".into(),
    );

    let k_bound = quant.map(|q| k_exponent(alpha, 1.0, q.case_c2_zero));
    push(
        "k_growth",
        k_bound.is_some_and(|e| e < 2.0 / 3.0),
        k_bound,
        "sup of the k(n) growth exponent must stay below 2/3 so that n / k^(3/2) -> infinity".into(),
    );

    let failing: Vec<String> = items.iter().filter(|i| !i.passed).map(|i| i.label.clone()).collect();
    ConditionReport {
        alpha,
        xi,
        eta,
        c_eta,
        a3_constant: a3.map(|(a, _)| a),
        a3_decay: a3.map(|(_, u)| u),
        a4_sum: a4,
        variance_bracket: setup.as_ref().ok().map(|t| t.variance_bracket),
        a3_combination: quant.map(|q| q.a3_combination),
        k_exponent_bound: k_bound,
        verdict: failing.is_empty(),
        failing,
        items,
    }
}

/// `P(c0 Z0 + c1 Z1 > t)` for iid Pareto(alpha) `Z`, by adaptive quadrature
/// over `Z1` in log scale. Independent of the series expansion above.
pub fn two_coefficient_tail(alpha: f64, c0: f64, c1: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0 && c0 > 0.0 && c1 > 0.0) {
        return Err(Error::invalid("quadrature needs alpha, c0, c1 > 0"));
    }
    if t <= c0 + c1 {
        return Ok(1.0);
    }
    // For z >= upper the first term already exceeds the remaining gap.
    let upper = (t - c0) / c1;
    let mid = 0.5 * (1.0 + upper);
    // Low half in log z; the mass sits near z = 1.
    let low = |s: f64| {
        let z = s.exp();
        alpha * z.powf(-alpha) * ((t - c1 * z) / c0).powf(-alpha)
    };
    // High half in log g with g = (t - c1 z) / c0; the mass sits near g = 1.
    let high = |s: f64| {
        let g = s.exp();
        let z = (t - c0 * g) / c1;
        alpha * z.powf(-alpha - 1.0) * g.powf(-alpha) * g * c0 / c1
    };
    let g_mid = (t - c1 * mid) / c0;
    let scale = upper.powf(-alpha);
    let tol = 1e-14 * scale;
    let body = adaptive_simpson(&low, 0.0, mid.ln(), tol, 40) + adaptive_simpson(&high, 0.0, g_mid.ln(), tol, 40);
    Ok(body + scale)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    // Pre-split into panels so that narrow features are not skipped.
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = simpson(fa, fm, fb, lo, hi);
            recurse(f, lo, hi, fa, fm, fb, whole, tol / panels as f64, depth)
        })
        .sum()
}
