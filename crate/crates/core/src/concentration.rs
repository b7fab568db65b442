//! Monte Carlo checks of the Gaussian tail lemma and of the increment
//! envelopes of the elementary processes.
//!
//! Every experiment records integer exceedance counts per threshold, so the
//! result is the same under any parallel schedule. Intervals are exact
//! Clopper–Pearson bounds at 99%.
//!
//! Increment envelopes. For `θ₁, θ₂` write `Δλ = λ(θ₁) - λ(θ₂)` and recall
//! `d² ≥ Σ ρ_i² Δλ_i²` and `d² ≥ σ² Σ Δλ_i²`.
//!
//! * `X2`, `X4` are linear in `z = ξ/σ` with coefficient norms at most
//!   `2σd` and `4σd` (because `|Δ(λ-λ²)| ≤ |Δλ|` and `|Δ(1-λ)²| ≤ 2|Δλ|`).
//!   The Gaussian tail then gives `min(1, 2e^{-w²/2})` with `w = x/(2σ)`
//!   or `w = x/(4σ)`, which is at most `4e^{-w/4}`.
//! * `X1`, `X3` are centered quadratic forms `σ² Σ c_i (z_i² - 1)` with
//!   `|c_i| ≤ 2|Δλ_i|`, so `sqrt(tr A²) ≤ 2σd`; applying the quadratic lemma
//!   to `A` and `-A` gives `4e^{-w/4}` with `w = x/(2σ)`.
//! * `D_μ = X1 + X2` and `D̂ = X3 + X4 + nσ²` split the threshold in half.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::EigencurveFamily;
use crate::risk::{self, SpectralInstance};
use crate::rng::SeedStream;
use crate::stats::{self, DecayFit};

pub use crate::rng::sample_noise;

/// Minimum replication count for the lemma experiments.
pub const MIN_LEMMA_REPS: u64 = 10_000;

/// Minimum exceedances for a grid point to enter a decay fit.
pub const MIN_FIT_EXCEEDANCES: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ProcessId {
    X1,
    X2,
    X3,
    X4,
    #[serde(rename = "D_mu")]
    DMu,
    #[serde(rename = "D_hat")]
    DHat,
}

impl ProcessId {
    pub const ELEMENTARY: [ProcessId; 4] = [ProcessId::X1, ProcessId::X2, ProcessId::X3, ProcessId::X4];
    pub const ALL: [ProcessId; 6] = [
        ProcessId::X1,
        ProcessId::X2,
        ProcessId::X3,
        ProcessId::X4,
        ProcessId::DMu,
        ProcessId::DHat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProcessId::X1 => "X1",
            ProcessId::X2 => "X2",
            ProcessId::X3 => "X3",
            ProcessId::X4 => "X4",
            ProcessId::DMu => "D_mu",
            ProcessId::DHat => "D_hat",
        }
    }

    pub fn pick(self, v: &risk::ProcessValues) -> f64 {
        match self {
            ProcessId::X1 => v.x1,
            ProcessId::X2 => v.x2,
            ProcessId::X3 => v.x3,
            ProcessId::X4 => v.x4,
            ProcessId::DMu => v.d_mu,
            ProcessId::DHat => v.d_hat,
        }
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProcessId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X1" | "x1" => Ok(ProcessId::X1),
            "X2" | "x2" => Ok(ProcessId::X2),
            "X3" | "x3" => Ok(ProcessId::X3),
            "X4" | "x4" => Ok(ProcessId::X4),
            "D_mu" | "d_mu" | "Dmu" => Ok(ProcessId::DMu),
            "D_hat" | "d_hat" | "Dhat" => Ok(ProcessId::DHat),
            other => Err(Error::UnknownProcess(other.to_string())),
        }
    }
}

/// `P{|Z(θ₁) - Z(θ₂)| > d(θ₁,θ₂) x} ≤ c1 e^{-c2 x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub c1: f64,
    pub c2: f64,
}

impl Envelope {
    pub fn bound(&self, x: f64) -> f64 {
        self.c1 * (-self.c2 * x).exp()
    }
}

/// Increment envelope constants derived in the module docs.
pub fn increment_envelope(process: ProcessId, sigma: f64) -> Envelope {
    match process {
        ProcessId::X1 | ProcessId::X2 | ProcessId::X3 => Envelope {
            c1: 4.0,
            c2: 1.0 / (8.0 * sigma),
        },
        ProcessId::X4 => Envelope {
            c1: 4.0,
            c2: 1.0 / (16.0 * sigma),
        },
        ProcessId::DMu => Envelope {
            c1: 8.0,
            c2: 1.0 / (16.0 * sigma),
        },
        ProcessId::DHat => Envelope {
            c1: 8.0,
            c2: 1.0 / (32.0 * sigma),
        },
    }
}

/// Empirical survival curve against a theoretical bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub label: String,
    pub grid: Vec<f64>,
    pub exceed_counts: Vec<u64>,
    pub reps: u64,
    pub seed: u64,
    pub empirical: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub bound: Vec<f64>,
    /// Closed-form survival where one is available.
    pub exact: Option<Vec<f64>>,
    pub fit: Option<DecayFit>,
}

impl TailReport {
    pub fn from_counts(
        label: impl Into<String>,
        grid: Vec<f64>,
        exceed_counts: Vec<u64>,
        reps: u64,
        seed: u64,
        bound: Vec<f64>,
        exact: Option<Vec<f64>>,
    ) -> Self {
        let mut empirical = Vec::with_capacity(grid.len());
        let mut ci_lower = Vec::with_capacity(grid.len());
        let mut ci_upper = Vec::with_capacity(grid.len());
        for &k in &exceed_counts {
            empirical.push(k as f64 / reps as f64);
            let (lo, hi) = stats::clopper_pearson(k, reps, stats::CONFIDENCE);
            ci_lower.push(lo);
            ci_upper.push(hi);
        }
        let mut report = Self {
            label: label.into(),
            grid,
            exceed_counts,
            reps,
            seed,
            empirical,
            ci_lower,
            ci_upper,
            bound,
            exact,
            fit: None,
        };
        report.fit = report.decay_fit().ok();
        report
    }

    /// Log-linear fit over grid points with at least five exceedances.
    pub fn decay_fit(&self) -> Result<DecayFit> {
        let (xs, ps): (Vec<f64>, Vec<f64>) = self
            .grid
            .iter()
            .zip(&self.empirical)
            .zip(&self.exceed_counts)
            .filter(|(_, &k)| k >= MIN_FIT_EXCEEDANCES)
            .map(|((x, p), _)| (*x, *p))
            .unzip();
        stats::fit_log_linear(&xs, &ps)
    }

    /// Grid indices where even the lower confidence bound exceeds the bound.
    pub fn bound_violations(&self) -> Vec<usize> {
        self.ci_lower
            .iter()
            .zip(&self.bound)
            .enumerate()
            .filter(|(_, (lo, b))| lo > b)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn bound_holds(&self) -> bool {
        self.bound_violations().is_empty()
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.exceed_counts.windows(2).all(|w| w[1] <= w[0])
    }

    /// `(matched, total)` grid points where `|empirical - exact|` is within
    /// the half-width of the confidence interval.
    pub fn oracle_agreement(&self) -> Option<(usize, usize)> {
        let exact = self.exact.as_ref()?;
        let matched = exact
            .iter()
            .enumerate()
            .filter(|&(i, &p)| (self.empirical[i] - p).abs() <= 0.5 * (self.ci_upper[i] - self.ci_lower[i]))
            .count();
        Some((matched, exact.len()))
    }
}

pub(crate) fn validate_grid(grid: &[f64], name: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::field(name, "empty grid"));
    }
    if grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::field(name, "grid values must be finite and nonnegative"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::field(name, "grid must be strictly increasing"));
    }
    Ok(())
}

fn check_reps(reps: u64, min: u64) -> Result<()> {
    if reps < min {
        return Err(Error::field("reps", format!("need at least {min}, got {reps}")));
    }
    Ok(())
}

/// Counts `stat > g` (or `≥` when `inclusive`) per grid value.
pub(crate) fn count_exceedances(stats: &[f64], grid: &[f64], inclusive: bool) -> Vec<u64> {
    grid.iter()
        .map(|&g| {
            stats
                .iter()
                .filter(|&&s| if inclusive { s >= g } else { s > g })
                .count() as u64
        })
        .collect()
}

/// `P{z·a ≥ w|a|}` for `z ~ N(0, I_n)` against `exp(-w²/2)`.
pub fn linear_tail_experiment(a: &[f64], w_grid: &[f64], reps: u64, seed: u64) -> Result<TailReport> {
    check_reps(reps, MIN_LEMMA_REPS)?;
    validate_grid(w_grid, "w_grid")?;
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroDirection);
    }
    let stream = SeedStream::new(seed, "linear-tail");
    let n = a.len();
    let values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let z = stream.standard_normals(i, n);
            z.iter().zip(a).map(|(z, a)| z * a).sum::<f64>() / norm
        })
        .collect();
    let counts = count_exceedances(&values, w_grid, true);
    let bound = w_grid.iter().map(|w| (-w * w / 2.0).exp()).collect();
    let exact = w_grid.iter().map(|&w| stats::normal_sf(w)).collect();
    Ok(TailReport::from_counts(
        "linear",
        w_grid.to_vec(),
        counts,
        reps,
        seed,
        bound,
        Some(exact),
    ))
}

/// Exact survival of `(Σ λ_i (z_i² - 1)) / |λ|` when all nonzero `λ_i` are equal.
pub fn equal_spectrum_survival(eigenvalues: &[f64], w: f64) -> Option<f64> {
    let nonzero: Vec<f64> = eigenvalues.iter().copied().filter(|l| *l != 0.0).collect();
    let first = *nonzero.first()?;
    if nonzero.iter().any(|l| (l - first).abs() > 1e-12 * first.abs()) {
        return None;
    }
    let k = nonzero.len() as f64;
    let shift = w * k.sqrt();
    Some(if first > 0.0 {
        stats::chi2_sf(k, k + shift)
    } else {
        stats::chi2_cdf(k, k - shift)
    })
}

/// `P{z'Az - tr A ≥ w sqrt(tr A²)}` against `2e^{-w/4}`; `A` is given by its spectrum.
pub fn quadratic_tail_experiment(eigenvalues: &[f64], w_grid: &[f64], reps: u64, seed: u64) -> Result<TailReport> {
    check_reps(reps, MIN_LEMMA_REPS)?;
    validate_grid(w_grid, "w_grid")?;
    let kappa = eigenvalues.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::ZeroMatrix);
    }
    let stream = SeedStream::new(seed, "quadratic-tail");
    let n = eigenvalues.len();
    let values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let z = stream.standard_normals(i, n);
            z.iter()
                .zip(eigenvalues)
                .map(|(z, l)| l * (z * z - 1.0))
                .sum::<f64>()
                / kappa
        })
        .collect();
    let counts = count_exceedances(&values, w_grid, true);
    let bound = w_grid.iter().map(|w| 2.0 * (-w / 4.0).exp()).collect();
    let trace: f64 = eigenvalues.iter().sum();
    let exact = w_grid
        .iter()
        .map(|&w| {
            equal_spectrum_survival(eigenvalues, w).or_else(|| stats::quadratic_form_sf(eigenvalues, trace + w * kappa))
        })
        .collect();
    Ok(TailReport::from_counts(
        "quadratic",
        w_grid.to_vec(),
        counts,
        reps,
        seed,
        bound,
        exact,
    ))
}

/// Closed-form law of one increment `X_i(θ₁) - X_i(θ₂)`.
#[derive(Debug, Clone, PartialEq)]
enum IncrementLaw {
    /// `σ Σ a_i z_i`: Gaussian with standard deviation `sd`.
    Gaussian { sd: f64 },
    /// `σ² Σ c_i (z_i² - 1)`: exact only when the nonzero `c_i` are equal.
    Quadratic { coefs: Vec<f64>, sigma2: f64 },
    /// Sum of a linear and a quadratic form.
    Mixed,
}

impl IncrementLaw {
    /// `P{|Δ| > t}` when a closed form exists.
    fn two_sided_survival(&self, t: f64) -> Option<f64> {
        match self {
            IncrementLaw::Gaussian { sd } => Some(if *sd > 0.0 {
                (2.0 * stats::normal_sf(t / sd)).min(1.0)
            } else {
                0.0
            }),
            IncrementLaw::Quadratic { coefs, sigma2 } => {
                let nonzero: Vec<f64> = coefs.iter().copied().filter(|c| *c != 0.0).collect();
                let Some(&c) = nonzero.first() else {
                    return Some(0.0);
                };
                if nonzero.iter().any(|v| (v - c).abs() > 1e-12 * c.abs()) {
                    return None;
                }
                let k = nonzero.len() as f64;
                let s = t / (c.abs() * sigma2);
                Some(stats::chi2_sf(k, k + s) + stats::chi2_cdf(k, k - s))
            }
            IncrementLaw::Mixed => None,
        }
    }
}

fn increment_law(inst: &SpectralInstance, l1: &[f64], l2: &[f64], process: ProcessId) -> IncrementLaw {
    let s2 = inst.sigma2();
    let linear = |f: &dyn Fn(f64) -> f64, scale: f64| {
        let norm2: f64 = inst
            .rho()
            .iter()
            .zip(l1.iter().zip(l2))
            .map(|(r, (a, b))| {
                let c = scale * r * (f(*a) - f(*b));
                c * c
            })
            .sum();
        IncrementLaw::Gaussian {
            sd: (s2 * norm2).sqrt(),
        }
    };
    let quadratic = |f: &dyn Fn(f64) -> f64| IncrementLaw::Quadratic {
        coefs: l1.iter().zip(l2).map(|(a, b)| f(*a) - f(*b)).collect(),
        sigma2: s2,
    };
    match process {
        ProcessId::X1 => quadratic(&|l| l * l),
        ProcessId::X2 => linear(&|l| l - l * l, -2.0),
        ProcessId::X3 => quadratic(&|l| (1.0 - l) * (1.0 - l)),
        ProcessId::X4 => linear(&|l| (1.0 - l) * (1.0 - l), 2.0),
        ProcessId::DMu | ProcessId::DHat => IncrementLaw::Mixed,
    }
}

/// Tail reports for the four elementary increments between `θ₁` and `θ₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementReports {
    pub theta1: f64,
    pub theta2: f64,
    pub d: f64,
    pub reports: Vec<TailReport>,
    pub envelopes: Vec<Envelope>,
    /// Standard deviations of the Gaussian increments `X2`, `X4`.
    pub linear_sd: [f64; 2],
}

/// `P{|X_i(θ₁) - X_i(θ₂)| > d(θ₁,θ₂) x}` for `i = 1..4`, against the derived
/// envelopes `c1 e^{-c2 x}`.
pub fn increment_tail_experiment(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    theta1: f64,
    theta2: f64,
    x_grid: &[f64],
    reps: u64,
    seed: u64,
) -> Result<IncrementReports> {
    check_reps(reps, MIN_LEMMA_REPS)?;
    validate_grid(x_grid, "x_grid")?;
    let d = risk::metric_d(inst, family, theta1, theta2)?;
    if theta1 == theta2 || !(d > 0.0) {
        return Err(Error::DegenerateIncrement(theta1, theta2));
    }
    let l1 = family.lambdas_at(theta1)?;
    let l2 = family.lambdas_at(theta2)?;
    let stream = SeedStream::new(seed, "increment-tail");
    let (n, s2) = (inst.n(), inst.sigma2());
    let values: Vec<[f64; 4]> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let xi = stream.noise(i, n, s2);
            let a = risk::process_from_lambdas(inst.rho(), s2, &l1, &xi);
            let b = risk::process_from_lambdas(inst.rho(), s2, &l2, &xi);
            [
                (a.x1 - b.x1).abs() / d,
                (a.x2 - b.x2).abs() / d,
                (a.x3 - b.x3).abs() / d,
                (a.x4 - b.x4).abs() / d,
            ]
        })
        .collect();

    let sigma = inst.sigma();
    let mut reports = Vec::with_capacity(4);
    let mut envelopes = Vec::with_capacity(4);
    let mut linear_sd = [0.0; 2];
    for (j, process) in ProcessId::ELEMENTARY.into_iter().enumerate() {
        let column: Vec<f64> = values.iter().map(|v| v[j]).collect();
        let counts = count_exceedances(&column, x_grid, false);
        let env = increment_envelope(process, sigma);
        let law = increment_law(inst, &l1, &l2, process);
        if let IncrementLaw::Gaussian { sd } = law {
            linear_sd[if process == ProcessId::X2 { 0 } else { 1 }] = sd;
        }
        let exact: Option<Vec<f64>> = x_grid.iter().map(|&x| law.two_sided_survival(d * x)).collect();
        reports.push(TailReport::from_counts(
            process.name(),
            x_grid.to_vec(),
            counts,
            reps,
            seed,
            x_grid.iter().map(|&x| env.bound(x)).collect(),
            exact,
        ));
        envelopes.push(env);
    }
    Ok(IncrementReports {
        theta1,
        theta2,
        d,
        reports,
        envelopes,
        linear_sd,
    })
}
