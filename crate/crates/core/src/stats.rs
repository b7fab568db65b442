//! Small statistical helpers: exact binomial intervals, Gaussian and χ²
//! survival functions, and log-linear tail fits.

use serde::Serialize;
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};

/// Two-sided confidence level used for every tail report.
pub const CONFIDENCE: f64 = 0.99;

/// Exact (Clopper–Pearson) interval for a binomial proportion `k / n`.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n, "need 0 <= k <= n, n > 0");
    let alpha = 1.0 - confidence;
    let (kf, nf) = (k as f64, n as f64);
    let lower = if k == 0 {
        0.0
    } else {
        beta_quantile(alpha / 2.0, kf, nf - kf + 1.0)
    };
    let upper = if k == n {
        1.0
    } else {
        beta_quantile(1.0 - alpha / 2.0, kf + 1.0, nf - kf)
    };
    (lower, upper)
}

fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `P{N(0,1) > x}`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `P{χ²_k > t}`.
pub fn chi2_sf(k: f64, t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        gamma_ur(k / 2.0, t / 2.0)
    }
}

/// `P{χ²_k ≤ t}`.
pub fn chi2_cdf(k: f64, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        gamma_lr(k / 2.0, t / 2.0)
    }
}

/// Truncation error allowed in the Imhof integral.
const IMHOF_TAIL: f64 = 1e-10;
/// Largest number of quadrature pieces before giving up.
const IMHOF_MAX_PIECES: f64 = 1e6;

/// `P{Σ λ_i z_i² > t}` for independent standard normals, by Imhof's inversion
/// of the characteristic function. Eigenvalues may have either sign.
///
/// `None` when the integrand decays too slowly to reach an error of 1e-10
/// within the evaluation budget (two eigenvalues and `t` near zero).
pub fn quadratic_form_sf(eigenvalues: &[f64], t: f64) -> Option<f64> {
    let lams: Vec<f64> = eigenvalues.iter().copied().filter(|l| *l != 0.0).collect();
    match lams.len() {
        0 => return Some(if t < 0.0 { 1.0 } else { 0.0 }),
        1 => {
            let l = lams[0];
            return Some(if l > 0.0 { chi2_sf(1.0, t / l) } else { chi2_cdf(1.0, t / l) });
        }
        _ => {}
    }
    let sum: f64 = lams.iter().sum();
    let abs_sum: f64 = lams.iter().map(|l| l.abs()).sum();
    let log_rho = |u: f64| 0.25 * lams.iter().map(|l| (l * l * u * u).ln_1p()).sum::<f64>();
    let integrand = |u: f64| {
        if u == 0.0 {
            return 0.5 * (sum - t);
        }
        let theta = 0.5 * lams.iter().map(|l| (l * u).atan()).sum::<f64>() - 0.5 * t * u;
        theta.sin() / (u * log_rho(u).exp())
    };
    // |integrand| ≤ 1 / (u Π_{|λ|u ≥ 1} (|λ|u)^{1/2}), integrated beyond `upper`.
    // Once the phase speed is within a factor 2 of |t|/2 the tail oscillates
    // and is at most 4 g(upper) / |t| with g(u) = 1 / (u ρ(u)).
    let tail = |upper: f64| {
        let (k, log_prod) = lams
            .iter()
            .map(|l| l.abs() * upper)
            .filter(|v| *v >= 1.0)
            .fold((0usize, 0.0), |(k, s), v| (k + 1, s + 0.5 * v.ln()));
        let crude = if k == 0 {
            f64::INFINITY
        } else {
            2.0 / k as f64 * (-log_prod).exp()
        };
        let drift: f64 = lams.iter().map(|l| 0.5 * l.abs() / (1.0 + l * l * upper * upper)).sum();
        if t != 0.0 && drift <= 0.25 * t.abs() {
            crude.min(4.0 / (t.abs() * upper * log_rho(upper).exp()))
        } else {
            crude
        }
    };
    let max_abs = lams.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    // Pieces over which the phase moves by at most π/2.
    let step = std::f64::consts::PI / (abs_sum + t.abs());
    let mut upper = 1.0 / max_abs;
    while tail(upper) > IMHOF_TAIL {
        upper *= 2.0;
        if upper / step > IMHOF_MAX_PIECES {
            return None;
        }
    }
    let pieces = (upper / step).ceil().max(1.0) as usize;
    let width = upper / pieces as f64;
    let integral: f64 = (0..pieces)
        .map(|j| {
            let a = j as f64 * width;
            quadrature::integrate(integrand, a, a + width, 1e-13).integral
        })
        .sum();
    Some((0.5 + integral / std::f64::consts::PI).clamp(0.0, 1.0))
}

/// Least-squares fit of `log p = log C₁ - C₂ x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub c1: f64,
    pub c2: f64,
    pub c1_se: f64,
    pub c2_se: f64,
    /// `c2 / c2_se`; infinite for an exact fit.
    pub t_stat: f64,
    pub points: usize,
}

/// Fits an exponential tail to the strictly positive entries of `ps`.
pub fn fit_log_linear(xs: &[f64], ps: &[f64]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ps)
        .filter(|(_, p)| **p > 0.0)
        .map(|(x, p)| (*x, p.ln()))
        .collect();
    let m = pts.len();
    if m < 3 {
        return Err(Error::InsufficientTailPoints(m));
    }
    let mf = m as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / mf;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / mf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientTailPoints(1));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let s2 = rss / (mf - 2.0);
    let slope_se = (s2 / sxx).sqrt();
    let intercept_se = (s2 * (1.0 / mf + xbar * xbar / sxx)).sqrt();
    let c1 = intercept.exp();
    let c2 = -slope;
    Ok(DecayFit {
        c1,
        c2,
        c1_se: c1 * intercept_se,
        c2_se: slope_se,
        t_stat: if slope_se > 0.0 { c2 / slope_se } else { c2.signum() * f64::INFINITY },
        points: m,
    })
}

/// Mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
