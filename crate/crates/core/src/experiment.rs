//! End-to-end Monte Carlo of Cp selection: draw `y`, select `θ̂`, record the
//! loss gap `Z = |G(θ̂) - G(θ_μ)|`, and monitor the event on which both
//! centred processes stay below `L(·, x, r_x)`.
//!
//! On a draw where the monitor holds at `x` (checked at `θ̂` and on a grid),
//! the deterministic argument gives `d̂ < r_x`, `M(θ̂) ≤ m* + 2x r_x` and
//! `Z ≤ 4x r_x`. All three are rechecked per record. The argument only needs
//! the monitored inequality at `θ̂`, so the grid is there for the frequency
//! estimate, not for soundness.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::concentration::{validate_grid, MIN_FIT_EXCEEDANCES};
use crate::descriptor::{self, FamilyDescriptor, InstanceDescriptor};
use crate::error::{Error, Result};
use crate::family::EigencurveFamily;
use crate::risk::{self, RiskPoint, SpectralInstance};
use crate::rng::SeedStream;
use crate::stats::{self, DecayFit};

pub const MIN_REPS: u64 = 100;
pub const MONITOR_POINTS: usize = 257;
pub const ORACLE_NOISE_LABEL: &str = "oracle";
/// Replications computed in parallel before handing rows to the sink.
pub const CHUNK: u64 = 512;

pub fn default_x_grid() -> Vec<f64> {
    (1..=16).map(|k| 0.25 * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub label: String,
    pub family: FamilyDescriptor,
    pub instance: InstanceDescriptor,
    pub reps: u64,
    pub seed: u64,
    pub x_grid: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn parse(value: &Value) -> Result<Self> {
        let obj = descriptor::object(value, "config")?;
        let family = FamilyDescriptor::parse_at(
            obj.get("family")
                .ok_or_else(|| Error::field("config.family", "missing required field"))?,
            "config.family",
        )?;
        let instance = InstanceDescriptor::parse_at(
            obj.get("instance")
                .ok_or_else(|| Error::field("config.instance", "missing required field"))?,
            "config.instance",
        )?;
        let reps = match obj.get("reps") {
            Some(v) => descriptor::u64_value(v, "config.reps")?,
            None => 2000,
        };
        let seed = match obj.get("seed") {
            Some(v) => descriptor::u64_value(v, "config.seed")?,
            None => 0,
        };
        let x_grid = match obj.get("x_grid") {
            Some(v) => descriptor::vec_value(v, "config.x_grid")?,
            None => default_x_grid(),
        };
        let label = match obj.get("label") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(Error::field("config.label", "expected a string")),
            None => instance.label(),
        };
        let out = match obj.get("out") {
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(Error::field("config.out", "expected a string")),
            None => None,
        };
        let config = Self {
            label,
            family,
            instance,
            reps,
            seed,
            x_grid,
            out,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::parse(&descriptor::parse_json(text, "config")?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < MIN_REPS {
            return Err(Error::field(
                "config.reps",
                format!("need at least {MIN_REPS}, got {}", self.reps),
            ));
        }
        validate_grid(&self.x_grid, "config.x_grid")
    }

    pub fn resolve(&self) -> Result<(EigencurveFamily, SpectralInstance)> {
        let family = self.family.build()?;
        let inst = self.instance.build(family.n())?;
        Ok((family, inst))
    }
}

/// Chain-check failure bits, meaningful only where the monitor held.
pub const CHAIN_DHAT: u8 = 1;
pub const CHAIN_M: u8 = 2;
pub const CHAIN_Z: u8 = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub index: u64,
    pub theta_hat: f64,
    /// `Ĝ(θ̂)`.
    pub g_hat_min: f64,
    /// `Ĝ(θ_μ)`; never below `g_hat_min`.
    pub g_hat_mu: f64,
    pub g_loss_hat: f64,
    pub g_loss_mu: f64,
    pub z: f64,
    /// `M(θ̂)`.
    pub m_hat: f64,
    /// `M(θ̂) - m*`, clamped at zero against rounding.
    pub m_excess: f64,
    pub d_hat: f64,
    /// Per x: both centred processes within `L(·, x, r_x)` at every monitored point.
    pub omega: Vec<bool>,
    /// Per x: OR of `CHAIN_*` bits for failed implications on monitored draws.
    pub chain_failures: Vec<u8>,
}

/// Precomputed state shared by all replications.
struct Setup {
    family: EigencurveFamily,
    inst: SpectralInstance,
    oracle: RiskPoint,
    lam_mu: Vec<f64>,
    weights: Vec<f64>,
    monitor: Vec<(Vec<f64>, f64)>,
    radii: Vec<f64>,
    x_grid: Vec<f64>,
    stream: SeedStream,
}

impl Setup {
    fn new(family: EigencurveFamily, inst: SpectralInstance, x_grid: &[f64], seed: u64) -> Result<Self> {
        let oracle = risk::minimize_m(&inst, &family)?;
        let lam_mu = family.lambdas_at(oracle.theta)?;
        let weights = inst.metric_weights();
        let top = family.theta_max();
        let monitor = (0..MONITOR_POINTS)
            .map(|k| {
                let theta = if k + 1 == MONITOR_POINTS {
                    top
                } else {
                    top * k as f64 / (MONITOR_POINTS - 1) as f64
                };
                let lam = family.lambdas_at(theta)?;
                let d2 = risk::d2_from_lambdas(&weights, &lam, &lam_mu);
                Ok((lam, d2))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            radii: x_grid.iter().map(|&x| risk::r_x(x, oracle.m_value)).collect(),
            x_grid: x_grid.to_vec(),
            stream: SeedStream::new(seed, ORACLE_NOISE_LABEL),
            family,
            inst,
            oracle,
            lam_mu,
            weights,
            monitor,
        })
    }

    fn replicate(&self, index: u64) -> Result<ReplicationRecord> {
        let (rho, s2) = (self.inst.rho(), self.inst.sigma2());
        let xi = self.stream.noise(index, rho.len(), s2);
        let y: Vec<f64> = rho.iter().zip(&xi).map(|(r, e)| r + e).collect();
        let theta_hat = risk::select_cp(s2, &self.family, &y)?;
        let lam_hat = self.family.lambdas_at(theta_hat)?;
        let m_star = self.oracle.m_value;

        let g_hat_min = risk::g_hat_from_lambdas(s2, theta_hat, &lam_hat, &y);
        let g_hat_mu = risk::g_hat_from_lambdas(s2, self.oracle.theta, &self.lam_mu, &y);
        let g_loss_hat = risk::g_loss_from_lambdas(rho, &lam_hat, &y);
        let g_loss_mu = risk::g_loss_from_lambdas(rho, &self.lam_mu, &y);
        let z = (g_loss_hat - g_loss_mu).abs();
        let m_hat = risk::m_from_lambdas(&self.inst, &lam_hat);
        let d2_hat = risk::d2_from_lambdas(&self.weights, &lam_hat, &self.lam_mu);
        let d_hat = d2_hat.sqrt();

        let centre = risk::process_from_lambdas(rho, s2, &self.lam_mu, &xi);
        let gap = |lam: &[f64]| {
            let v = risk::process_from_lambdas(rho, s2, lam, &xi);
            (v.d_hat - centre.d_hat).abs().max((v.d_mu - centre.d_mu).abs())
        };
        let mut points: Vec<(f64, f64)> = self.monitor.iter().map(|(lam, d2)| (gap(lam), *d2)).collect();
        points.push((gap(&lam_hat), d2_hat));

        let mut omega = Vec::with_capacity(self.x_grid.len());
        let mut chain_failures = Vec::with_capacity(self.x_grid.len());
        for (&x, &r) in self.x_grid.iter().zip(&self.radii) {
            let holds = points.iter().all(|&(g, d2)| {
                let l = if r > 0.0 {
                    risk::weight_from_d2(d2, x, r)
                } else {
                    d2 / 7.0
                };
                g <= l
            });
            let mut fail = 0;
            if holds && r > 0.0 {
                if !(d_hat < r) {
                    fail |= CHAIN_DHAT;
                }
                if !(m_hat <= m_star + 2.0 * x * r) {
                    fail |= CHAIN_M;
                }
                if !(z <= 4.0 * x * r) {
                    fail |= CHAIN_Z;
                }
            }
            omega.push(holds);
            chain_failures.push(fail);
        }

        Ok(ReplicationRecord {
            index,
            theta_hat,
            g_hat_min,
            g_hat_mu,
            g_loss_hat,
            g_loss_mu,
            z,
            m_hat,
            m_excess: (m_hat - m_star).max(0.0),
            d_hat,
            omega,
            chain_failures,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRun {
    pub records: Vec<ReplicationRecord>,
    pub summary: OracleSummary,
}

/// Runs the experiment, collecting every record.
pub fn run_oracle_experiment(config: &ExperimentConfig) -> Result<OracleRun> {
    let mut records = Vec::with_capacity(config.reps as usize);
    let summary = run_oracle_experiment_with_sink(config, |chunk| {
        records.extend_from_slice(chunk);
        Ok(())
    })?;
    Ok(OracleRun { records, summary })
}

/// Runs the experiment, handing records to `sink` in index order, one
/// parallel chunk at a time.
pub fn run_oracle_experiment_with_sink(
    config: &ExperimentConfig,
    mut sink: impl FnMut(&[ReplicationRecord]) -> Result<()>,
) -> Result<OracleSummary> {
    config.validate()?;
    let (family, inst) = config.resolve()?;
    let setup = Setup::new(family, inst, &config.x_grid, config.seed)?;
    let mut all = Vec::with_capacity(config.reps as usize);
    let mut start = 0;
    while start < config.reps {
        let end = (start + CHUNK).min(config.reps);
        let chunk: Vec<ReplicationRecord> = (start..end)
            .into_par_iter()
            .map(|i| setup.replicate(i))
            .collect::<Result<_>>()?;
        sink(&chunk)?;
        all.extend(chunk);
        start = end;
    }
    let mut summary = summarize_oracle(&all, setup.oracle.m_value, &config.x_grid)?;
    summary.label = config.label.clone();
    summary.n = setup.inst.n();
    summary.sigma2 = setup.inst.sigma2();
    summary.seed = config.seed;
    summary.theta_mu = setup.oracle.theta;
    Ok(summary)
}

/// Survival of `Z` at thresholds `max(x², x√m*)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub x: Vec<f64>,
    pub threshold: Vec<f64>,
    pub exceed_counts: Vec<u64>,
    pub reps: u64,
    pub empirical: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
}

impl TailCurve {
    pub fn is_nonincreasing(&self) -> bool {
        self.exceed_counts.windows(2).all(|w| w[1] <= w[0])
    }
}

/// `P{Z ≥ max(x², x√m*)}` per x.
pub fn tail_curve(records: &[ReplicationRecord], m_star: f64, x_grid: &[f64]) -> Result<TailCurve> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let reps = records.len() as u64;
    let root = m_star.max(0.0).sqrt();
    let threshold: Vec<f64> = x_grid.iter().map(|&x| (x * x).max(x * root)).collect();
    let exceed_counts: Vec<u64> = threshold
        .iter()
        .map(|&t| records.iter().filter(|r| r.z >= t).count() as u64)
        .collect();
    let mut empirical = Vec::with_capacity(x_grid.len());
    let mut ci_lower = Vec::with_capacity(x_grid.len());
    let mut ci_upper = Vec::with_capacity(x_grid.len());
    for &k in &exceed_counts {
        empirical.push(k as f64 / reps as f64);
        let (lo, hi) = stats::clopper_pearson(k, reps, stats::CONFIDENCE);
        ci_lower.push(lo);
        ci_upper.push(hi);
    }
    Ok(TailCurve {
        x: x_grid.to_vec(),
        threshold,
        exceed_counts,
        reps,
        empirical,
        ci_lower,
        ci_upper,
    })
}

/// Log-linear fit `log p = log Ĉ₁ - Ĉ₂ x` over points with at least five
/// exceedances.
pub fn fit_decay_rate(curve: &TailCurve) -> Result<DecayFit> {
    let (xs, ps): (Vec<f64>, Vec<f64>) = curve
        .x
        .iter()
        .zip(&curve.empirical)
        .zip(&curve.exceed_counts)
        .filter(|(_, &k)| k >= MIN_FIT_EXCEEDANCES)
        .map(|((x, p), _)| (*x, *p))
        .unzip();
    stats::fit_log_linear(&xs, &ps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XSummary {
    pub x: f64,
    pub r_x: f64,
    pub omega_count: u64,
    pub omega_frequency: f64,
    /// Fraction of all draws with `d̂ < r_x`.
    pub dhat_below_rx: f64,
    /// Fraction of all draws with `M(θ̂) ≤ m* + 2x r_x`.
    pub m_within_bound: f64,
    pub chain_dhat_failures: u64,
    pub chain_m_failures: u64,
    pub chain_z_failures: u64,
}

/// `Ĉ₃ √m* + Ĉ₄` with `Ĉ₃ = 2Ĉ₁/Ĉ₂` and `Ĉ₄ = 2Ĉ₁/Ĉ₂²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorollaryBound {
    pub c3: f64,
    pub c4: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    pub label: String,
    pub n: usize,
    pub sigma2: f64,
    pub reps: u64,
    pub seed: u64,
    pub theta_mu: f64,
    pub m_star: f64,
    pub mean_g_loss_hat: f64,
    pub se_g_loss_hat: f64,
    pub mean_m_hat: f64,
    pub mean_z: f64,
    /// `mean G(θ̂) - m*`.
    pub excess: f64,
    /// `excess / (√m* + 1)`.
    pub normalized_excess: f64,
    /// Records where `Ĝ(θ̂) > Ĝ(θ_μ)`; always zero for an exact minimizer.
    pub argmin_violations: u64,
    pub per_x: Vec<XSummary>,
    pub tail: TailCurve,
    pub fit: Option<DecayFit>,
    pub corollary: Option<CorollaryBound>,
}

impl OracleSummary {
    pub fn chain_failures(&self) -> u64 {
        self.per_x
            .iter()
            .map(|s| s.chain_dhat_failures + s.chain_m_failures + s.chain_z_failures)
            .sum()
    }
}

pub fn summarize_oracle(records: &[ReplicationRecord], m_star: f64, x_grid: &[f64]) -> Result<OracleSummary> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let reps = records.len() as u64;
    let g: Vec<f64> = records.iter().map(|r| r.g_loss_hat).collect();
    let (mean_g, se_g) = stats::mean_and_se(&g);
    let mean_of = |f: fn(&ReplicationRecord) -> f64| records.iter().map(f).sum::<f64>() / reps as f64;
    let excess = mean_g - m_star;
    let normalized_excess = excess / (m_star.max(0.0).sqrt() + 1.0);

    let per_x = x_grid
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let r = risk::r_x(x, m_star);
            let count = |pred: &dyn Fn(&ReplicationRecord) -> bool| records.iter().filter(|r| pred(r)).count() as u64;
            let omega_count = count(&|rec| rec.omega.get(j).copied().unwrap_or(false));
            let failures = |bit: u8| count(&|rec| rec.chain_failures.get(j).is_some_and(|f| f & bit != 0));
            XSummary {
                x,
                r_x: r,
                omega_count,
                omega_frequency: omega_count as f64 / reps as f64,
                dhat_below_rx: count(&|rec| rec.d_hat < r) as f64 / reps as f64,
                m_within_bound: count(&|rec| rec.m_hat <= m_star + 2.0 * x * r) as f64 / reps as f64,
                chain_dhat_failures: failures(CHAIN_DHAT),
                chain_m_failures: failures(CHAIN_M),
                chain_z_failures: failures(CHAIN_Z),
            }
        })
        .collect();

    let tail = tail_curve(records, m_star, x_grid)?;
    let fit = fit_decay_rate(&tail).ok();
    let corollary = fit.filter(|f| f.c2 > 0.0).map(|f| {
        let c3 = 2.0 * f.c1 / f.c2;
        let c4 = 2.0 * f.c1 / (f.c2 * f.c2);
        let bound = c3 * m_star.max(0.0).sqrt() + c4;
        CorollaryBound {
            c3,
            c4,
            bound,
            holds: excess <= bound,
        }
    });

    Ok(OracleSummary {
        label: String::new(),
        n: 0,
        sigma2: f64::NAN,
        reps,
        seed: 0,
        theta_mu: f64::NAN,
        m_star,
        mean_g_loss_hat: mean_g,
        se_g_loss_hat: se_g,
        mean_m_hat: mean_of(|r| r.m_hat),
        mean_z: mean_of(|r| r.z),
        excess,
        normalized_excess,
        argmin_violations: records.iter().filter(|r| r.g_hat_min > r.g_hat_mu).count() as u64,
        per_x,
        tail,
        fit,
        corollary,
    })
}
