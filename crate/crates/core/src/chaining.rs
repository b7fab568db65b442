//! Chaining nets, the γ-schedule, and Monte Carlo estimates of stratum and
//! weighted suprema of the loss processes.
//!
//! Suprema over a stratum are approximated by the maximum over the deepest
//! net together with a uniform θ-grid. The processes are continuous and
//! piecewise smooth in θ, so refining the grid changes little; the test suite
//! checks this once.
//!
//! The union bound over a level compares `Z(t)` with `Z(ψ_i t)`, which are at
//! most `δ_{i-1}` apart; the level bound `C C₁ e^{-x} 2^{-i}` is the one that
//! results when that distance is taken as `δ_i`. Reports carry both.

use rayon::prelude::*;
use serde::Serialize;

use crate::concentration::{count_exceedances, increment_envelope, validate_grid, Envelope, ProcessId, TailReport};
use crate::error::{Error, Result};
use crate::family::EigencurveFamily;
use crate::packing::{self, Direction, PACK_C, PACK_M};
use crate::risk::{self, d2_from_lambdas, process_from_lambdas, SpectralInstance};
use crate::rng::SeedStream;
use crate::stats;

pub const DEFAULT_DEPTH: usize = 12;
pub const SUP_GRID_POINTS: usize = 1000;
/// Net depth per stratum when collecting points for the weighted sup.
pub const WEIGHTED_NET_DEPTH: usize = 6;
pub const MIN_SUP_REPS: u64 = 1000;

const COVER_SLACK: f64 = 1.0 + 1e-9;

/// Nested δ_i-nets `T_0 = {t_0}, T_1, …, T_I` of one stratum, with the
/// nearest-parent maps `ψ_i : T_i → T_{i-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetHierarchy {
    pub lo: f64,
    pub hi: f64,
    /// `lo` for `Up`, `hi` for `Down`; this is `t_0`.
    pub direction: Direction,
    /// d-diameter of the stratum.
    pub r: f64,
    pub deltas: Vec<f64>,
    /// Points of each level, ordered outwards from `t_0`.
    pub levels: Vec<Vec<f64>>,
    /// `parents[i][j]` indexes `levels[i-1]`; `parents[0]` is empty.
    pub parents: Vec<Vec<usize>>,
}

impl NetHierarchy {
    pub fn origin(&self) -> f64 {
        self.levels[0][0]
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn far_end(&self) -> f64 {
        match self.direction {
            Direction::Up => self.hi,
            Direction::Down => self.lo,
        }
    }

    /// `PACK_C · 2^{PACK_M i}`.
    pub fn size_bound(level: usize) -> f64 {
        PACK_C * 2f64.powf(PACK_M * level as f64)
    }
}

/// Nets anchored at the left end of `[lo, hi]`.
pub fn build_nets(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    interval: (f64, f64),
    depth: usize,
) -> Result<NetHierarchy> {
    build_nets_from(inst, family, interval, Direction::Up, depth)
}

/// Nets anchored at the end of `[lo, hi]` that `direction` starts from.
pub fn build_nets_from(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    (lo, hi): (f64, f64),
    direction: Direction,
    depth: usize,
) -> Result<NetHierarchy> {
    if depth == 0 {
        return Err(Error::field("depth", "must be at least 1"));
    }
    if !(lo <= hi) {
        return Err(Error::EmptyInterval(lo, hi));
    }
    let r = risk::metric_d(inst, family, lo, hi)?;
    if !(r > 0.0) {
        return Err(Error::ZeroDiameter(lo, hi));
    }
    let (origin, far) = match direction {
        Direction::Up => (lo, hi),
        Direction::Down => (hi, lo),
    };
    let mut deltas = vec![r];
    let mut levels = vec![vec![origin]];
    let mut parents = vec![Vec::new()];
    for i in 1..=depth {
        let delta = r / 2f64.powi(i as i32);
        let level = packing::directed_chain(inst, family, delta, origin, far, direction)?;
        parents.push(nearest_parents(inst, family, &level, &levels[i - 1], direction)?);
        deltas.push(delta);
        levels.push(level);
    }
    let nets = NetHierarchy {
        lo,
        hi,
        direction,
        r,
        deltas,
        levels,
        parents,
    };
    verify_nets(inst, family, &nets)?;
    Ok(nets)
}

fn nearest_parents(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    level: &[f64],
    previous: &[f64],
    direction: Direction,
) -> Result<Vec<usize>> {
    let outward = |t: f64| match direction {
        Direction::Up => t,
        Direction::Down => -t,
    };
    level
        .iter()
        .map(|&t| {
            let j = previous.partition_point(|&p| outward(p) <= outward(t));
            let mut best = (f64::INFINITY, 0);
            for k in j.saturating_sub(1)..(j + 1).min(previous.len()) {
                let d = risk::metric_d2(inst, family, t, previous[k])?;
                if d < best.0 {
                    best = (d, k);
                }
            }
            Ok(best.1)
        })
        .collect()
}

/// Checks coverage at radius `δ_i`, the size bound, and parent distances.
pub fn verify_nets(inst: &SpectralInstance, family: &EigencurveFamily, nets: &NetHierarchy) -> Result<()> {
    let far = nets.far_end();
    let near_far = match nets.direction {
        Direction::Up => (far - packing::end_tie(far)).max(nets.lo),
        Direction::Down => (far + packing::end_tie(far)).min(nets.hi),
    };
    let end_slack = risk::metric_d(inst, family, near_far, far)?;
    for (i, level) in nets.levels.iter().enumerate().skip(1) {
        let tol = nets.deltas[i] * COVER_SLACK + end_slack;
        if level.len() as f64 > NetHierarchy::size_bound(i) {
            return Err(Error::Invalid(format!(
                "level {i} has {} points, above {}",
                level.len(),
                NetHierarchy::size_bound(i)
            )));
        }
        let mut gaps: Vec<(f64, f64)> = level.windows(2).map(|w| (w[0], w[1])).collect();
        gaps.push((*level.last().unwrap(), far));
        for (a, b) in gaps {
            let d = risk::metric_d(inst, family, a, b)?;
            if d > tol {
                return Err(Error::Invalid(format!("level {i} leaves a gap of d-length {d} > {tol}")));
            }
        }
        let parent_tol = nets.deltas[i - 1] * COVER_SLACK;
        for (&t, &p) in level.iter().zip(&nets.parents[i]) {
            let d = risk::metric_d(inst, family, t, nets.levels[i - 1][p])?;
            if d > parent_tol {
                return Err(Error::Invalid(format!("level {i} parent distance {d} > {parent_tol}")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSchedule {
    pub gammas: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// `R_∞ = (r/c₂)(2(m+1) log 2 + x)`.
    pub r_closed: f64,
    /// `R_∞ - R_D = (r/c₂) 2^{-D} [(D+2)(m+1) log 2 + x]`.
    pub tail: f64,
}

/// `γ_i = (r/c₂) 2^{-i} (i(m+1) log 2 + x)` for `i = 1..=depth`.
pub fn gamma_schedule(r: f64, c2: f64, m: f64, x: f64, depth: usize) -> Result<GammaSchedule> {
    if !(r > 0.0 && c2 > 0.0 && r.is_finite() && c2.is_finite()) {
        return Err(Error::NonpositiveScale);
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::field("x", "must be finite and nonnegative"));
    }
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::field("m", "must be finite and nonnegative"));
    }
    let scale = r / c2;
    let ln2 = std::f64::consts::LN_2;
    let mut gammas = Vec::with_capacity(depth);
    let mut partial_sums = Vec::with_capacity(depth);
    let mut sum = 0.0;
    for i in 1..=depth {
        let fi = i as f64;
        let g = scale * 0.5f64.powi(i as i32) * (fi * (m + 1.0) * ln2 + x);
        sum += g;
        gammas.push(g);
        partial_sums.push(sum);
    }
    let dd = depth as f64;
    Ok(GammaSchedule {
        gammas,
        partial_sums,
        r_closed: scale * (2.0 * (m + 1.0) * ln2 + x),
        tail: scale * 0.5f64.powi(depth as i32) * ((dd + 2.0) * (m + 1.0) * ln2 + x),
    })
}

/// Evaluation points with their eigenvalue vectors.
struct PointSet {
    thetas: Vec<f64>,
    lambdas: Vec<Vec<f64>>,
}

impl PointSet {
    fn new(family: &EigencurveFamily, mut thetas: Vec<f64>) -> Result<Self> {
        thetas.sort_by(f64::total_cmp);
        thetas.dedup();
        let lambdas = thetas.iter().map(|&t| family.lambdas_at(t)).collect::<Result<_>>()?;
        Ok(Self { thetas, lambdas })
    }

    fn index_of(&self, theta: f64) -> usize {
        self.thetas.partition_point(|&t| t < theta)
    }

    fn evaluate(&self, inst: &SpectralInstance, xi: &[f64], process: ProcessId) -> Vec<f64> {
        self.lambdas
            .iter()
            .map(|lam| process.pick(&process_from_lambdas(inst.rho(), inst.sigma2(), lam, xi)))
            .collect()
    }
}

fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|k| if k == points - 1 { hi } else { lo + step * k as f64 })
        .collect()
}

fn check_sup_reps(reps: u64) -> Result<()> {
    if reps < MIN_SUP_REPS {
        return Err(Error::field("reps", format!("need at least {MIN_SUP_REPS}, got {reps}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumSupReport {
    pub process: ProcessId,
    pub envelope: Envelope,
    /// Scale `r/C₂`, the coefficient of `x` in `R_∞`.
    pub c1: f64,
    /// Survival of `sup |Z(t) - Z(t_0)| / c1` over net ∪ grid.
    pub tail: TailReport,
    /// Same statistic over the deepest net alone.
    pub net_only: TailReport,
}

impl StratumSupReport {
    pub fn fitted_rate(&self) -> Option<f64> {
        self.tail.fit.as_ref().map(|f| f.c2)
    }

    /// Fitted rate positive and significant.
    pub fn passes(&self) -> bool {
        self.tail.fit.as_ref().is_some_and(|f| f.c2 > 0.0)
    }
}

/// Per-replication `(net sup, net ∪ grid sup)` of `|Z(t) - Z(t_0)|`.
pub fn stratum_sups(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    nets: &NetHierarchy,
    grid_points: usize,
    reps: u64,
    seed: u64,
    process: ProcessId,
) -> Result<Vec<(f64, f64)>> {
    let net = nets.levels.last().unwrap();
    let mut thetas = net.clone();
    thetas.extend(uniform_grid(nets.lo, nets.hi, grid_points));
    thetas.push(nets.origin());
    let points = PointSet::new(family, thetas)?;
    let in_net: Vec<bool> = {
        let mut mask = vec![false; points.thetas.len()];
        for &t in net {
            mask[points.index_of(t)] = true;
        }
        mask
    };
    let origin = points.index_of(nets.origin());
    let stream = SeedStream::new(seed, &format!("stratum-sup/{}", process.name()));
    let (n, s2) = (inst.n(), inst.sigma2());
    Ok((0..reps)
        .into_par_iter()
        .map(|i| {
            let xi = stream.noise(i, n, s2);
            let z = points.evaluate(inst, &xi, process);
            let z0 = z[origin];
            let mut net_sup: f64 = 0.0;
            let mut sup: f64 = 0.0;
            for (k, v) in z.iter().enumerate() {
                let a = (v - z0).abs();
                sup = sup.max(a);
                if in_net[k] {
                    net_sup = net_sup.max(a);
                }
            }
            (net_sup, sup)
        })
        .collect())
}

pub fn simulate_stratum_sup(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    nets: &NetHierarchy,
    x_grid: &[f64],
    reps: u64,
    seed: u64,
    process: ProcessId,
) -> Result<StratumSupReport> {
    simulate_stratum_sup_with_grid(inst, family, nets, x_grid, reps, seed, process, SUP_GRID_POINTS)
}

/// As [`simulate_stratum_sup`] with a chosen θ-grid resolution.
#[allow(clippy::too_many_arguments)]
pub fn simulate_stratum_sup_with_grid(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    nets: &NetHierarchy,
    x_grid: &[f64],
    reps: u64,
    seed: u64,
    process: ProcessId,
    grid_points: usize,
) -> Result<StratumSupReport> {
    check_sup_reps(reps)?;
    validate_grid(x_grid, "x_grid")?;
    let envelope = increment_envelope(process, inst.sigma());
    let c1 = nets.r / envelope.c2;
    let sups = stratum_sups(inst, family, nets, grid_points, reps, seed, process)?;
    let full: Vec<f64> = sups.iter().map(|s| s.1 / c1).collect();
    let net: Vec<f64> = sups.iter().map(|s| s.0 / c1).collect();
    // P{sup > R_∞(x)} ≤ C C₁ e^{-x} and R_∞(x) = c1 (x + 2(m+1) log 2).
    let shift = (2.0 * (PACK_M + 1.0) * std::f64::consts::LN_2).exp();
    let bound: Vec<f64> = x_grid
        .iter()
        .map(|&x| (PACK_C * envelope.c1 * shift * (-x).exp()).min(1.0))
        .collect();
    let make = |label: &str, values: &[f64]| {
        TailReport::from_counts(
            format!("{label}/{}", process.name()),
            x_grid.to_vec(),
            count_exceedances(values, x_grid, false),
            reps,
            seed,
            bound.clone(),
            None,
        )
    };
    Ok(StratumSupReport {
        process,
        envelope,
        c1,
        tail: make("stratum-sup", &full),
        net_only: make("stratum-sup-net", &net),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSupReport {
    pub process: ProcessId,
    pub theta_mu: f64,
    pub m_star: f64,
    pub r: f64,
    pub points: usize,
    /// Survival in x of `∃θ: |D(θ) - D(θ_μ)| > L(θ, x, r)` at the fixed `r`.
    pub fixed_r: TailReport,
    /// Same event with `r = r_x` at each x.
    pub at_r_x: TailReport,
}

fn check_weighted_process(process: ProcessId) -> Result<()> {
    match process {
        ProcessId::DMu | ProcessId::DHat => Ok(()),
        other => Err(Error::field(
            "process",
            format!("weighted sup is defined for D_mu and D_hat, got {other}"),
        )),
    }
}

/// Evaluation points for the weighted sup: a uniform grid over `[0, n]`,
/// `θ_μ`, and nets over every stratum of radius `r` on both sides.
pub fn weighted_sup_points(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    theta_mu: f64,
    r: f64,
) -> Result<Vec<f64>> {
    let mut thetas = uniform_grid(0.0, family.theta_max(), SUP_GRID_POINTS);
    thetas.push(theta_mu);
    for dir in [Direction::Up, Direction::Down] {
        let strat = packing::stratify_from(inst, family, theta_mu, r, dir)?;
        for interval in strat.strata() {
            if risk::metric_d(inst, family, interval.0, interval.1)? == 0.0 {
                continue;
            }
            let nets = build_nets_from(inst, family, interval, dir, WEIGHTED_NET_DEPTH)?;
            thetas.extend(nets.levels.iter().flatten());
        }
    }
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    Ok(thetas)
}

pub fn simulate_weighted_sup(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    r: f64,
    x_grid: &[f64],
    reps: u64,
    seed: u64,
    process: ProcessId,
) -> Result<WeightedSupReport> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::NonpositiveRadius(r));
    }
    check_weighted_process(process)?;
    let oracle = risk::minimize_m(inst, family)?;
    let thetas = weighted_sup_points(inst, family, oracle.theta, r)?;
    let points = thetas.len();
    let (fixed_r, at_r_x) = weighted_sup_on_points(
        inst,
        family,
        oracle.theta,
        oracle.m_value,
        &thetas,
        r,
        x_grid,
        reps,
        seed,
        process,
    )?;
    Ok(WeightedSupReport {
        process,
        theta_mu: oracle.theta,
        m_star: oracle.m_value,
        r,
        points,
        fixed_r,
        at_r_x,
    })
}

/// The weighted-sup survival at fixed `r` and at `r_x`, over explicit points.
#[allow(clippy::too_many_arguments)]
pub fn weighted_sup_on_points(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    theta_mu: f64,
    m_star: f64,
    thetas: &[f64],
    r: f64,
    x_grid: &[f64],
    reps: u64,
    seed: u64,
    process: ProcessId,
) -> Result<(TailReport, TailReport)> {
    check_sup_reps(reps)?;
    validate_grid(x_grid, "x_grid")?;
    check_weighted_process(process)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::NonpositiveRadius(r));
    }
    let mut all = thetas.to_vec();
    all.push(theta_mu);
    let points = PointSet::new(family, all)?;
    let centre = points.index_of(theta_mu);
    let weights = inst.metric_weights();
    let d2: Vec<f64> = points
        .lambdas
        .iter()
        .map(|lam| d2_from_lambdas(&weights, lam, &points.lambdas[centre]))
        .collect();
    let radii: Vec<f64> = x_grid.iter().map(|&x| risk::r_x(x, m_star)).collect();

    let stream = SeedStream::new(seed, &format!("weighted-sup/{}", process.name()));
    let (n, s2) = (inst.n(), inst.sigma2());
    let rows: Vec<(f64, Vec<bool>)> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let xi = stream.noise(i, n, s2);
            let z = points.evaluate(inst, &xi, process);
            let z0 = z[centre];
            let diffs: Vec<f64> = z.iter().map(|v| (v - z0).abs()).collect();
            let stat = diffs
                .iter()
                .zip(&d2)
                .map(|(a, d2)| a * r / (d2 + r * r))
                .fold(0.0, f64::max);
            let flags = x_grid
                .iter()
                .zip(&radii)
                .map(|(&x, &rx)| {
                    diffs.iter().zip(&d2).any(|(a, d2)| {
                        let l = if rx > 0.0 {
                            risk::weight_from_d2(*d2, x, rx)
                        } else {
                            // r_x = 7x → 0: L tends to d²/7.
                            d2 / 7.0
                        };
                        *a > l
                    })
                })
                .collect();
            (stat, flags)
        })
        .collect();

    let stats_fixed: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let fixed_counts = count_exceedances(&stats_fixed, x_grid, false);
    let rx_counts: Vec<u64> = (0..x_grid.len())
        .map(|j| rows.iter().filter(|r| r.1[j]).count() as u64)
        .collect();
    let label = process.name();
    Ok((
        with_fitted_bound(TailReport::from_counts(
            format!("weighted-sup/{label}/r"),
            x_grid.to_vec(),
            fixed_counts,
            reps,
            seed,
            vec![1.0; x_grid.len()],
            None,
        )),
        with_fitted_bound(TailReport::from_counts(
            format!("weighted-sup/{label}/r_x"),
            x_grid.to_vec(),
            rx_counts,
            reps,
            seed,
            vec![1.0; x_grid.len()],
            None,
        )),
    ))
}

/// No bound is known numerically; the bound column holds the fitted envelope.
fn with_fitted_bound(mut report: TailReport) -> TailReport {
    if let Some(fit) = &report.fit {
        report.bound = report.grid.iter().map(|&x| (fit.c1 * (-fit.c2 * x).exp()).min(1.0)).collect();
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCheck {
    pub level: usize,
    pub size: usize,
    pub gamma: f64,
    pub exceed_count: u64,
    pub reps: u64,
    pub empirical: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// `C C₁ e^{-x} 2^{-i}`.
    pub bound: f64,
    /// `min(1, C₁ N_i exp(-C₂ γ_i / δ_{i-1}))`.
    pub parent_distance_bound: f64,
}

impl LevelCheck {
    pub fn holds(&self) -> bool {
        self.ci_lower <= self.bound && self.ci_lower <= self.parent_distance_bound
    }
}

/// `P{S_i > γ_i}` with `S_i = max_{t ∈ T_i} |Z(t) - Z(ψ_i t)|` per level.
#[allow(clippy::too_many_arguments)]
pub fn union_bound_levels(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    nets: &NetHierarchy,
    process: ProcessId,
    x: f64,
    max_level: usize,
    reps: u64,
    seed: u64,
) -> Result<Vec<LevelCheck>> {
    check_sup_reps(reps)?;
    let max_level = max_level.min(nets.depth());
    let envelope = increment_envelope(process, inst.sigma());
    let schedule = gamma_schedule(nets.r, envelope.c2, PACK_M, x, max_level)?;
    let thetas: Vec<f64> = nets.levels[..=max_level].iter().flatten().copied().collect();
    let points = PointSet::new(family, thetas)?;
    let index: Vec<Vec<usize>> = nets.levels[..=max_level]
        .iter()
        .map(|l| l.iter().map(|&t| points.index_of(t)).collect())
        .collect();
    let stream = SeedStream::new(seed, &format!("union-bound/{}", process.name()));
    let (n, s2) = (inst.n(), inst.sigma2());
    let flags: Vec<Vec<bool>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let xi = stream.noise(rep, n, s2);
            let z = points.evaluate(inst, &xi, process);
            (1..=max_level)
                .map(|i| {
                    let s = index[i]
                        .iter()
                        .zip(&nets.parents[i])
                        .map(|(&k, &p)| (z[k] - z[index[i - 1][p]]).abs())
                        .fold(0.0, f64::max);
                    s > schedule.gammas[i - 1]
                })
                .collect()
        })
        .collect();
    Ok((1..=max_level)
        .map(|i| {
            let k = flags.iter().filter(|f| f[i - 1]).count() as u64;
            let (lo, hi) = stats::clopper_pearson(k, reps, stats::CONFIDENCE);
            let gamma = schedule.gammas[i - 1];
            let size = nets.levels[i].len();
            LevelCheck {
                level: i,
                size,
                gamma,
                exceed_count: k,
                reps,
                empirical: k as f64 / reps as f64,
                ci_lower: lo,
                ci_upper: hi,
                bound: PACK_C * envelope.c1 * (-x).exp() * 0.5f64.powi(i as i32),
                parent_distance_bound: (envelope.c1 * size as f64 * (-envelope.c2 * gamma / nets.deltas[i - 1]).exp())
                    .min(1.0),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> (SpectralInstance, EigencurveFamily) {
        (
            SpectralInstance::new(vec![2.0, 1.0], 1.0).unwrap(),
            EigencurveFamily::uniform_shrink(2),
        )
    }

    #[test]
    fn schedule_example() {
        let s = gamma_schedule(1.0, 0.25, 2.0, 1.0, 60).unwrap();
        assert!((s.gammas[0] - 6.1589).abs() < 1e-4);
        assert!((s.gammas[0] - 2.0 * (3.0 * std::f64::consts::LN_2 + 1.0)).abs() < 1e-12);
        assert!((s.r_closed - 20.636).abs() < 1e-3);
        assert!((s.r_closed - 4.0 * (6.0 * std::f64::consts::LN_2 + 1.0)).abs() < 1e-12);
        assert!((s.r_closed - s.partial_sums[59]).abs() < 1e-12);
        let zero = gamma_schedule(1.0, 0.25, 2.0, 0.0, 5).unwrap();
        assert!((zero.r_closed - 24.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(gamma_schedule(0.0, 1.0, 2.0, 1.0, 3), Err(Error::NonpositiveScale)));
        assert!(matches!(gamma_schedule(1.0, -1.0, 2.0, 1.0, 3), Err(Error::NonpositiveScale)));
    }

    #[test]
    fn schedule_tail_is_exact() {
        for depth in [1, 3, 8, 20] {
            let s = gamma_schedule(2.5, 0.1, 2.0, 3.0, depth).unwrap();
            let gap = s.r_closed - s.partial_sums[depth - 1];
            assert!((gap - s.tail).abs() <= 1e-12 * s.r_closed, "{depth}");
        }
    }

    #[test]
    fn depth_one_nets() {
        let (inst, fam) = canonical();
        let nets = build_nets(&inst, &fam, (0.0, 2.0), 1).unwrap();
        assert!((nets.r - 7f64.sqrt()).abs() < 1e-12);
        assert!(nets.levels[1].len() <= 8);
        assert_eq!(nets.levels[1], vec![0.0, 1.0]);
        assert!(matches!(build_nets(&inst, &fam, (1.0, 1.0), 1), Err(Error::ZeroDiameter(..))));
    }

    #[test]
    fn nets_cover_and_parents_are_close() {
        let (inst, fam) = canonical();
        for dir in [Direction::Up, Direction::Down] {
            let nets = build_nets_from(&inst, &fam, (0.3, 1.9), dir, 8).unwrap();
            assert_eq!(nets.depth(), 8);
            for i in 1..=8 {
                assert!(nets.levels[i].len() as f64 <= NetHierarchy::size_bound(i));
                for (&t, &p) in nets.levels[i].iter().zip(&nets.parents[i]) {
                    let d = risk::metric_d(&inst, &fam, t, nets.levels[i - 1][p]).unwrap();
                    assert!(d <= nets.deltas[i - 1] * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn zero_signal_x2_sup_vanishes() {
        let inst = SpectralInstance::new(vec![0.0, 0.0], 1.0).unwrap();
        let fam = EigencurveFamily::uniform_shrink(2);
        let nets = build_nets(&inst, &fam, (0.0, 2.0), 4).unwrap();
        let rep = simulate_stratum_sup(&inst, &fam, &nets, &[0.1, 1.0], 1000, 3, ProcessId::X2).unwrap();
        assert_eq!(rep.tail.exceed_counts, vec![0, 0]);
    }

    #[test]
    fn net_sup_is_below_full_sup() {
        let (inst, fam) = canonical();
        let nets = build_nets(&inst, &fam, (10.0 / 7.0, 2.0), 5).unwrap();
        for (net, full) in stratum_sups(&inst, &fam, &nets, 100, 1000, 4, ProcessId::DMu).unwrap() {
            assert!(net <= full);
        }
    }

    #[test]
    fn weighted_sup_at_centre_only_is_zero() {
        let (inst, fam) = canonical();
        let theta_mu = 10.0 / 7.0;
        let (fixed, at_rx) = weighted_sup_on_points(
            &inst,
            &fam,
            theta_mu,
            10.0 / 7.0,
            &[theta_mu],
            1.0,
            &[0.5, 1.0],
            1000,
            1,
            ProcessId::DHat,
        )
        .unwrap();
        assert_eq!(fixed.exceed_counts, vec![0, 0]);
        assert_eq!(at_rx.exceed_counts, vec![0, 0]);
        assert!(weighted_sup_on_points(&inst, &fam, theta_mu, 1.0, &[1.0], 1.0, &[1.0], 1000, 1, ProcessId::X1).is_err());
    }
}
