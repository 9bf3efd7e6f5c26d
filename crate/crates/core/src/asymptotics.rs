//! Closed-form limit constants for the bivariate normal limit of the LME
//! under a linear process.
//!
//! Dependence enters only through `||c|| = sum |c_k|^(1/gamma)` and the three
//! pair sums `phi1, phi2, phi3`. From those we evaluate the limits of the
//! block variances and covariances of the tail array sums (the "raw" limits),
//! the centred limits `kappa1..kappa3`, the covariance `Sigma` of the moment
//! equations, the sensitivity matrix `L = -M^{-1}` and finally `L Sigma L^T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::process::CoefficientSequence;

const PSD_TOL: f64 = 1e-12;

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("gamma must be positive, got {gamma}")))
    }
}

fn check_r(r: f64) -> Result<()> {
    if !r.is_finite() {
        return Err(Error::invalid(format!("r must be finite, got {r}")));
    }
    if r < 0.0 {
        Ok(())
    } else {
        Err(Error::RMustBeNegative(r))
    }
}

/// Sums positive and negative terms separately before combining them.
fn split_sum(terms: &[f64]) -> f64 {
    let (pos, neg) = terms.iter().fold((0.0, 0.0), |(p, n), &t| {
        if t >= 0.0 {
            (p + t, n)
        } else {
            (p, n + t)
        }
    });
    pos + neg
}

/// `||c||` over the stored support.
pub fn norm_c(coeffs: &CoefficientSequence, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let p = 1.0 / gamma;
    let value: f64 = coeffs.coeffs().iter().map(|c| c.abs().powf(p)).sum();
    if value == 0.0 {
        return Err(Error::DegenerateCoefficients);
    }
    Ok(value)
}

/// Bound on the part of `||c||` lost to truncation.
pub fn norm_c_truncation_error(coeffs: &CoefficientSequence, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(coeffs.tail_power_bound(1.0 / gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiConstants {
    pub norm_c: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub gamma: f64,
    pub r: f64,
    /// Bound on the error of each phi caused by coefficient truncation.
    pub truncation_error: f64,
}

impl PhiConstants {
    /// Constants of the iid case, where every pair sum vanishes.
    pub fn independent(gamma: f64, r: f64) -> Self {
        Self {
            norm_c: 1.0,
            phi1: 0.0,
            phi2: 0.0,
            phi3: 0.0,
            gamma,
            r,
            truncation_error: 0.0,
        }
    }

    /// Arbitrary `(phi1, phi2, phi3)`, for exploring the formulas off the
    /// set reachable from actual coefficients.
    pub fn from_values(gamma: f64, r: f64, phi1: f64, phi2: f64, phi3: f64) -> Self {
        Self {
            norm_c: 1.0,
            phi1,
            phi2,
            phi3,
            gamma,
            r,
            truncation_error: 0.0,
        }
    }
}

/// Pair sums over `(k, k + j)`, `j >= 1`, each divided by `||c||`.
pub fn phi_constants(coeffs: &CoefficientSequence, gamma: f64, r: f64) -> Result<PhiConstants> {
    check_gamma(gamma)?;
    check_r(r)?;
    let norm = norm_c(coeffs, gamma)?;
    let p = 1.0 / gamma;
    let max_exp = r / gamma;
    let min_exp = (r - 1.0) / gamma;
    let c: Vec<f64> = coeffs.coeffs().iter().map(|x| x.abs()).collect();

    let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
    for k in 0..c.len() {
        for &b in &c[k + 1..] {
            let a = c[k];
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if lo == 0.0 {
                continue;
            }
            let lo_p = lo.powf(p);
            s1 += lo_p;
            s2 += hi.powf(max_exp) / lo.powf(min_exp);
            s3 += lo_p * (hi / lo).ln();
        }
    }

    // Pairs reaching past the stored support: every such term is bounded by
    // |c_m|^p for the later index m, and there are m of them.
    let e_norm = coeffs.tail_power_bound(p);
    let e1 = coeffs.tail_weighted_power_bound(p);
    // x^p log(C/x) <= (2 / (e p)) C^(p/2) x^(p/2) for 0 < x <= C.
    let cmax = coeffs.max_abs();
    let e3 = 2.0 / (std::f64::consts::E * p) * cmax.powf(p / 2.0) * coeffs.tail_weighted_power_bound(p / 2.0);
    let phi1 = s1 / norm;
    let phi2 = s2 / norm;
    let phi3 = s3 / norm;
    let rel_norm = e_norm / norm;
    let truncation_error = [
        e1 / norm + phi1 * rel_norm,
        e1 / norm + phi2 * rel_norm,
        e3 / norm + phi3 * rel_norm,
    ]
    .into_iter()
    .fold(0.0, f64::max);

    Ok(PhiConstants {
        norm_c: norm,
        phi1,
        phi2,
        phi3,
        gamma,
        r,
        truncation_error,
    })
}

/// Limits of the block variances and covariances of the uncentred tail array
/// sums, normalised by `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawLimits {
    pub t1: f64,
    pub t2: f64,
    pub t_i: f64,
    pub t12: f64,
    pub t1_i: f64,
    pub t2_i: f64,
    /// Centring weights of the indicator: `gamma / (gamma + 1)` and `-r / (1 - r + gamma)`.
    pub beta1_prime: f64,
    pub beta2_prime: f64,
    /// Limits of `(n/k) E phi_i`: `gamma` and `-r / (1 - r)`.
    pub beta1: f64,
    pub beta2: f64,
}

pub fn raw_limits(gamma: f64, r: f64, phi: &PhiConstants) -> Result<RawLimits> {
    check_gamma(gamma)?;
    check_r(r)?;
    let g = gamma;
    let PhiConstants { phi1, phi2, phi3, .. } = *phi;
    let one_r = 1.0 - r;
    let one_2r = 1.0 - 2.0 * r;

    let inner1 = split_sum(&[g, 2.0 * g * phi1, phi3]);
    let inner2 = split_sum(&[-r, one_2r * phi1, -phi2]);
    let t12 = split_sum(&[
        -g * r * (2.0 - r),
        (2.0 * r * r - 4.0 * r + 1.0) * g * phi1,
        -g * phi2,
        -r * one_r * phi3,
    ]) / (one_r * one_r);

    Ok(RawLimits {
        t1: 2.0 * g * inner1,
        t2: -2.0 * r * inner2 / (one_r * one_2r),
        t_i: 1.0 + 2.0 * phi1,
        t12,
        t1_i: inner1,
        t2_i: inner2 / one_r,
        beta1_prime: g / (g + 1.0),
        beta2_prime: -r / (one_r + g),
        beta1: g,
        beta2: -r / one_r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappas {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
}

/// Limits of the centred block variances (`kappa1`, `kappa2`) and covariance (`kappa3`).
pub fn kappas(gamma: f64, r: f64, phi: &PhiConstants) -> Result<Kappas> {
    check_gamma(gamma)?;
    check_r(r)?;
    let g = gamma;
    let PhiConstants { phi1, phi2, phi3, .. } = *phi;
    let g1 = g + 1.0;
    let one_r = 1.0 - r;
    let one_2r = 1.0 - 2.0 * r;
    let one_r_g = one_r + g;
    let quad = g * g + g + 1.0;

    let kappa1 = split_sum(&[
        (1.0 + 2.0 * phi1) * g * g * (2.0 * g * g + 2.0 * g + 1.0),
        2.0 * g * g * g1 * phi3,
    ]) / (g1 * g1);

    let kappa2 = split_sum(&[
        -2.0 * g * r * g1 * split_sum(&[-r, phi1 * one_2r, -phi2]),
        r * r * one_r * (1.0 + 2.0 * phi2),
    ]) / (one_r * one_2r * one_r_g * one_r_g);

    let denom = one_r * one_r * g1 * one_r_g;
    let kappa3 = split_sum(&[
        -g * r * ((2.0 - r) * quad - 1.0) / denom,
        -g * (2.0 * r * (2.0 - r) * quad - (g * g + g + 3.0 * r - r * r)) / denom * phi1,
        -g * (g + r) / (one_r * one_r * g1) * phi2,
        -g * r / (one_r * one_r_g) * phi3,
    ]);

    Ok(Kappas {
        kappa1,
        kappa2,
        kappa3,
    })
}

/// Covariance of the two moment equations: `[[k1, -k3], [-k3, k2]]`.
pub fn sigma_matrix(k: &Kappas) -> Result<Mat2> {
    if !(k.kappa1 >= 0.0 && k.kappa2 >= 0.0) {
        return Err(Error::invalid(format!(
            "kappa1 and kappa2 must be non-negative, got {} and {}",
            k.kappa1, k.kappa2
        )));
    }
    Ok(Mat2::symmetric(k.kappa1, -k.kappa3, k.kappa2))
}

/// Probability limit `M` of the Jacobian of the moment equations in
/// `(gamma, sigma / sigma(n/k))` at the truth.
pub fn jacobian_limit(gamma: f64, r: f64) -> Result<Mat2> {
    check_gamma(gamma)?;
    check_r(r)?;
    let g = gamma;
    let one_r = 1.0 - r;
    let a = -g / (1.0 + g);
    Ok(Mat2::new(
        a,
        a,
        -r / (one_r * one_r * (1.0 + g - r)),
        -r / (one_r * (1.0 + g - r)),
    ))
}

/// `L = -M^{-1}` in closed form.
pub fn l_matrix(gamma: f64, r: f64) -> Result<Mat2> {
    check_gamma(gamma)?;
    check_r(r)?;
    let g = gamma;
    let one_r = 1.0 - r;
    let a = one_r * one_r * (1.0 + g - r) / (r * r);
    Ok(Mat2::new(
        -one_r * (1.0 + g) / (g * r),
        a,
        (1.0 + g) / (g * r),
        -a,
    ))
}

/// Every intermediate of the asymptotic covariance computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub gamma: f64,
    pub r: f64,
    pub norm_c: f64,
    pub phi: PhiConstants,
    pub raw_limits: RawLimits,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub sigma_matrix: Mat2,
    pub l_matrix: Mat2,
    pub jacobian_limit: Mat2,
    pub estimator_cov: Mat2,
    pub sigma_matrix_psd: bool,
    pub estimator_cov_psd: bool,
}

impl CovarianceReport {
    pub fn kappas(&self) -> Kappas {
        Kappas {
            kappa1: self.kappa1,
            kappa2: self.kappa2,
            kappa3: self.kappa3,
        }
    }
}

/// Asymptotic covariance from precomputed dependence constants.
pub fn estimator_cov_from_phi(gamma: f64, r: f64, phi: &PhiConstants) -> Result<CovarianceReport> {
    let raw = raw_limits(gamma, r, phi)?;
    let k = kappas(gamma, r, phi)?;
    let sigma = sigma_matrix(&k)?;
    let l = l_matrix(gamma, r)?;
    let m = jacobian_limit(gamma, r)?;
    let cov = l.congruence(&sigma);
    Ok(CovarianceReport {
        gamma,
        r,
        norm_c: phi.norm_c,
        phi: *phi,
        raw_limits: raw,
        kappa1: k.kappa1,
        kappa2: k.kappa2,
        kappa3: k.kappa3,
        sigma_matrix: sigma,
        l_matrix: l,
        jacobian_limit: m,
        estimator_cov: cov,
        sigma_matrix_psd: sigma.is_psd(PSD_TOL),
        estimator_cov_psd: cov.is_psd(PSD_TOL),
    })
}

/// Limiting covariance of `sqrt(k) (gamma_hat - gamma, sigma_hat / sigma(n/k) - 1)`.
pub fn estimator_cov(gamma: f64, r: f64, coeffs: &CoefficientSequence) -> Result<CovarianceReport> {
    let phi = phi_constants(coeffs, gamma, r)?;
    estimator_cov_from_phi(gamma, r, &phi)
}
