//! Packing numbers along the trace axis, the d²-superadditivity check and
//! the stratification of a half-domain around `θ_μ`.
//!
//! Every `θ ↦ d²(θ₀, θ)` is monotone on either side of `θ₀` because the
//! eigencurves are, so one-dimensional searches suffice throughout.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::{interpolate, EigencurveFamily};
use crate::risk::{self, d2_from_lambdas, SpectralInstance};

const BISECTION_STEPS: usize = 200;

/// Packing constants `(C, m)` in `pack(δ) ≤ C (r/δ)^m`, from the simplified
/// bound `2 (r/δ)²`.
pub const PACK_C: f64 = 2.0;
pub const PACK_M: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn endpoint(self, family: &EigencurveFamily) -> f64 {
        match self {
            Direction::Up => family.theta_max(),
            Direction::Down => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// d² evaluations against a fixed anchor without reallocating.
pub(crate) struct Anchor<'a> {
    family: &'a EigencurveFamily,
    weights: Vec<f64>,
    base: Vec<f64>,
    buf: Vec<f64>,
}

impl<'a> Anchor<'a> {
    pub(crate) fn new(inst: &SpectralInstance, family: &'a EigencurveFamily, theta: f64) -> Result<Self> {
        if family.n() != inst.n() {
            return Err(Error::DimensionMismatch {
                expected: family.n(),
                got: inst.n(),
            });
        }
        let base = family.lambdas_at(theta)?;
        Ok(Self {
            family,
            weights: inst.metric_weights(),
            buf: vec![0.0; base.len()],
            base,
        })
    }

    pub(crate) fn rebase(&mut self, theta: f64) -> Result<()> {
        self.family.lambdas_into(theta, &mut self.base)
    }

    fn knot_d2(&self, k: usize) -> f64 {
        d2_from_lambdas(&self.weights, &self.base, &self.family.lambdas_at_knots()[k])
    }

    /// d² from the anchor to a point of segment `k`.
    fn segment_d2(&mut self, k: usize, theta: f64) -> f64 {
        let seg = self.family.segment(k);
        let t = (theta - seg.theta_lo) / seg.width();
        interpolate(seg.lo, seg.hi, t, &mut self.buf);
        d2_from_lambdas(&self.weights, &self.base, &self.buf)
    }

    /// Farthest `θ` in `dir` from the anchor `from` with `d²(from, θ) ≤ target`.
    fn reach(&mut self, from: f64, target: f64, dir: Direction) -> f64 {
        let knots = self.family.knots();
        let last = knots.len() - 1;
        // Knot range strictly beyond `from`, where d² is monotone in the index.
        let (first_beyond, end) = match dir {
            Direction::Up => (knots.partition_point(|&t| t <= from), last),
            Direction::Down => (knots.partition_point(|&t| t < from).wrapping_sub(1), 0),
        };
        let ends_beyond = match dir {
            Direction::Up => first_beyond <= last,
            Direction::Down => first_beyond != usize::MAX,
        };
        if !ends_beyond || self.knot_d2(end) <= target {
            return dir.endpoint(self.family);
        }
        // First knot index beyond `from` whose d² exceeds the target.
        let (mut lo, mut hi) = match dir {
            Direction::Up => (first_beyond, last),
            Direction::Down => (0, first_beyond),
        };
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let exceeds = self.knot_d2(mid) > target;
            match dir {
                Direction::Up => {
                    if exceeds {
                        hi = mid
                    } else {
                        lo = mid + 1
                    }
                }
                Direction::Down => {
                    if exceeds {
                        lo = mid + 1
                    } else {
                        hi = mid
                    }
                }
            }
        }
        let (outer, seg, mut inside) = match dir {
            Direction::Up => {
                let k = lo;
                (knots[k], k - 1, knots[k - 1].max(from))
            }
            Direction::Down => {
                let k = match lo {
                    k if self.knot_d2(k) > target => k,
                    k => k - 1,
                };
                (knots[k], k, knots[k + 1].min(from))
            }
        };
        let mut outer = outer;
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (inside + outer);
            if mid == inside || mid == outer {
                break;
            }
            if self.segment_d2(seg, mid) <= target {
                inside = mid;
            } else {
                outer = mid;
            }
        }
        inside
    }
}

/// Farthest trace value in `dir` with `d²(from, θ) ≤ target_d2`.
pub fn reach(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    from: f64,
    target_d2: f64,
    dir: Direction,
) -> Result<f64> {
    if !(target_d2 >= 0.0) {
        return Err(Error::field("target_d2", "must be nonnegative"));
    }
    let mut anchor = Anchor::new(inst, family, from)?;
    Ok(anchor.reach(from, target_d2, dir))
}

fn check_interval(family: &EigencurveFamily, a: f64, b: f64) -> Result<()> {
    if !(a < b) {
        return Err(Error::EmptyInterval(a, b));
    }
    family.check_theta(a)?;
    family.check_theta(b)
}

/// Greedy chain `a = p_0 < p_1 < …` with `d(p_{k-1}, p_k) = δ`.
///
/// Points just past each `p_k` form a maximal δ-separated set, so the chain
/// length is the packing number.
pub fn greedy_chain(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    delta: f64,
    a: f64,
    b: f64,
) -> Result<Vec<f64>> {
    check_interval(family, a, b)?;
    if !(delta > 0.0) {
        return Err(Error::NonpositiveRadius(delta));
    }
    directed_chain(inst, family, delta, a, b, Direction::Up)
}

/// Greedy chain from `from` towards `to` with steps of d-length `δ`; the
/// last point is within `δ` of `to`.
pub(crate) fn directed_chain(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    delta: f64,
    from: f64,
    to: f64,
    dir: Direction,
) -> Result<Vec<f64>> {
    let mut chain = vec![from];
    let mut p = from;
    let d2 = delta * delta;
    let mut anchor = Anchor::new(inst, family, from)?;
    loop {
        anchor.rebase(p)?;
        let q = anchor.reach(p, d2, dir);
        let stalled = match dir {
            Direction::Up => q <= p,
            Direction::Down => q >= p,
        };
        if stops_at_dir(q, to, dir) || stalled {
            break;
        }
        chain.push(q);
        p = q;
    }
    Ok(chain)
}

/// Size of a maximal subset of `[a, b]` with pairwise `d > δ`.
pub fn pack_count(inst: &SpectralInstance, family: &EigencurveFamily, delta: f64, a: f64, b: f64) -> Result<usize> {
    let chain = greedy_chain(inst, family, delta, a, b)?;
    debug_assert!(is_maximal(inst, family, delta, &chain, b));
    Ok(chain.len())
}

/// No point can be inserted at a gap midpoint, nor at `b`, while keeping
/// separation `> δ` from its neighbours.
pub fn is_maximal(inst: &SpectralInstance, family: &EigencurveFamily, delta: f64, chain: &[f64], b: f64) -> bool {
    let tol = delta * (1.0 + 1e-9);
    let close = |s: f64, t: f64| risk::metric_d(inst, family, s, t).is_ok_and(|d| d <= tol);
    let gaps_full = chain.windows(2).all(|w| close(w[0], 0.5 * (w[0] + w[1])));
    gaps_full && chain.last().is_some_and(|&last| close(last, b))
}

/// `d²(a, b) - Σ_j d²(t_{j-1}, t_j)`; nonnegative up to rounding.
pub fn check_superadditivity(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    a: f64,
    b: f64,
    points: &[f64],
) -> Result<f64> {
    if !(a <= b) {
        return Err(Error::EmptyInterval(a, b));
    }
    for (i, &t) in points.iter().enumerate() {
        if !(a..=b).contains(&t) || (i > 0 && t <= points[i - 1]) {
            return Err(Error::UnsortedPoints(i));
        }
    }
    let total = risk::metric_d2(inst, family, a, b)?;
    let mut sum = 0.0;
    for w in points.windows(2) {
        sum += risk::metric_d2(inst, family, w[0], w[1])?;
    }
    Ok(total - sum)
}

/// Cut of the half-domain on one side of `θ_μ` into strata of d-diameter
/// at most `r`, with `d²(a_k, θ_μ) = k r²` except at the clipped end.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stratification {
    pub r: f64,
    pub direction: Direction,
    pub theta_mu: f64,
    /// `a_0 = θ_μ, a_1, …, a_m`, moving away from `θ_μ`.
    pub boundaries: Vec<f64>,
}

impl Stratification {
    pub fn m(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Strata as `(lo, hi)` intervals with `lo < hi`, nearest first.
    pub fn strata(&self) -> Vec<(f64, f64)> {
        self.boundaries
            .windows(2)
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
            .collect()
    }

    pub fn max_diameter(&self, inst: &SpectralInstance, family: &EigencurveFamily) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (lo, hi) in self.strata() {
            worst = worst.max(risk::metric_d(inst, family, lo, hi)?);
        }
        Ok(worst)
    }
}

pub fn stratify(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    r: f64,
    direction: Direction,
) -> Result<Stratification> {
    let theta_mu = risk::minimize_m(inst, family)?.theta;
    stratify_from(inst, family, theta_mu, r, direction)
}

/// Stratification around an explicit centre.
pub fn stratify_from(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    theta_mu: f64,
    r: f64,
    direction: Direction,
) -> Result<Stratification> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::NonpositiveRadius(r));
    }
    let end = direction.endpoint(family);
    let mut anchor = Anchor::new(inst, family, theta_mu)?;
    let mut boundaries = vec![theta_mu];
    let mut k = 1.0;
    while *boundaries.last().unwrap() != end {
        let a = anchor.reach(theta_mu, k * r * r, direction);
        let a = if stops_at_dir(a, end, direction) { end } else { a };
        boundaries.push(a);
        k += 1.0;
    }
    Ok(Stratification {
        r,
        direction,
        theta_mu,
        boundaries,
    })
}

/// Ties within rounding count as reaching `end`, so an endpoint exactly
/// δ away is not counted as separated.
/// Points this close to the end of a directed chain count as reaching it.
pub(crate) fn end_tie(end: f64) -> f64 {
    1e-12 * end.abs().max(1.0)
}

fn stops_at_dir(q: f64, end: f64, dir: Direction) -> bool {
    let tol = end_tie(end);
    match dir {
        Direction::Up => q >= end - tol,
        Direction::Down => q <= end + tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackRow {
    pub delta: f64,
    pub pack: usize,
    /// `1 + (r/δ)²`.
    pub bound: f64,
    /// `2 (r/δ)²`, the simplified bound used downstream.
    pub loose_bound: f64,
    /// `pack δ² / r²`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackBoundReport {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub rows: Vec<PackRow>,
    pub worst_ratio: f64,
}

impl PackBoundReport {
    pub fn holds(&self) -> bool {
        self.rows
            .iter()
            .all(|row| row.pack as f64 <= row.bound && row.pack as f64 <= row.loose_bound)
    }
}

pub fn check_pack_bound(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    a: f64,
    b: f64,
    delta_grid: &[f64],
) -> Result<PackBoundReport> {
    check_interval(family, a, b)?;
    let r = risk::metric_d(inst, family, a, b)?;
    if !(r > 0.0) {
        return Err(Error::ZeroDiameter(a, b));
    }
    let mut rows = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        if !(delta > 0.0 && delta <= r * (1.0 + 1e-12)) {
            return Err(Error::field("delta_grid", format!("{delta} outside (0, {r}]")));
        }
        let pack = pack_count(inst, family, delta, a, b)?;
        let q = (r / delta).powi(2);
        rows.push(PackRow {
            delta,
            pack,
            bound: 1.0 + q,
            loose_bound: 2.0 * q,
            ratio: pack as f64 / q,
        });
    }
    let worst_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(PackBoundReport {
        a,
        b,
        r,
        rows,
        worst_ratio,
    })
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
    fn reach_solves_uniform_shrink_metric() {
        // d²(θ, θ') = (7/4)(θ - θ')².
        let (inst, fam) = canonical();
        let up = reach(&inst, &fam, 0.5, 0.7, Direction::Up).unwrap();
        assert!((up - (0.5 + (0.4f64).sqrt())).abs() < 1e-12);
        let down = reach(&inst, &fam, 1.5, 0.7, Direction::Down).unwrap();
        assert!((down - (1.5 - (0.4f64).sqrt())).abs() < 1e-12);
        assert_eq!(reach(&inst, &fam, 1.0, 100.0, Direction::Up).unwrap(), 2.0);
        assert_eq!(reach(&inst, &fam, 1.0, 100.0, Direction::Down).unwrap(), 0.0);
        assert_eq!(reach(&inst, &fam, 2.0, 1.0, Direction::Up).unwrap(), 2.0);
        assert_eq!(reach(&inst, &fam, 0.0, 1.0, Direction::Down).unwrap(), 0.0);
    }

    #[test]
    fn reach_crosses_knots() {
        let inst = SpectralInstance::new(vec![3.0, 0.5, 1.0], 0.5).unwrap();
        let fam = EigencurveFamily::projection(3);
        for from in [0.0, 0.3, 1.0, 1.7] {
            for target in [0.1, 1.0, 5.0, 9.0] {
                let q = reach(&inst, &fam, from, target, Direction::Up).unwrap();
                let d2 = risk::metric_d2(&inst, &fam, from, q).unwrap();
                if q < 3.0 {
                    assert!((d2 - target).abs() < 1e-9 * target.max(1.0), "{from} {target} {q} {d2}");
                } else {
                    assert!(d2 <= target);
                }
            }
        }
    }

    #[test]
    fn pack_examples() {
        let (inst, fam) = canonical();
        let r = 7f64.sqrt();
        assert_eq!(pack_count(&inst, &fam, r * 1.01, 0.0, 2.0).unwrap(), 1);
        assert_eq!(pack_count(&inst, &fam, r / 2.0, 0.0, 2.0).unwrap(), 2);
        assert_eq!(pack_count(&inst, &fam, r / 4.0, 0.0, 2.0).unwrap(), 4);
        assert!(matches!(pack_count(&inst, &fam, 1.0, 1.0, 1.0), Err(Error::EmptyInterval(..))));
    }

    #[test]
    fn superadditivity_examples() {
        let (inst, fam) = canonical();
        assert_eq!(check_superadditivity(&inst, &fam, 0.0, 2.0, &[0.0, 2.0]).unwrap(), 0.0);
        let s = check_superadditivity(&inst, &fam, 0.0, 2.0, &[0.0, 1.0, 2.0]).unwrap();
        assert!((s - 3.5).abs() < 1e-12);
        assert!(matches!(
            check_superadditivity(&inst, &fam, 0.0, 2.0, &[1.0, 0.5]),
            Err(Error::UnsortedPoints(1))
        ));
    }

    #[test]
    fn stratify_examples() {
        let (inst, fam) = canonical();
        let up = stratify(&inst, &fam, 1.0, Direction::Up).unwrap();
        assert!((up.theta_mu - 10.0 / 7.0).abs() < 1e-12);
        assert_eq!(up.boundaries.len(), 2);
        assert_eq!(up.boundaries[1], 2.0);
        let down = stratify(&inst, &fam, 1.0, Direction::Down).unwrap();
        // d²(0, θ_μ) = (7/4)(100/49) = 25/7, so three full strata plus a clipped one.
        assert_eq!(down.m(), 4);
        for (k, a) in down.boundaries.iter().enumerate().take(4) {
            let d2 = risk::metric_d2(&inst, &fam, *a, down.theta_mu).unwrap();
            assert!((d2 - k as f64).abs() < 1e-8);
        }
        assert_eq!(*down.boundaries.last().unwrap(), 0.0);
        assert!(down.max_diameter(&inst, &fam).unwrap() <= 1.0 + 1e-9);
        let big = stratify(&inst, &fam, 10.0, Direction::Down).unwrap();
        assert_eq!(big.boundaries, vec![big.theta_mu, 0.0]);
    }

    #[test]
    fn pack_bound_examples() {
        let (inst, fam) = canonical();
        let r = 7f64.sqrt();
        let rep = check_pack_bound(&inst, &fam, 0.0, 2.0, &[r, r / 2.0, r / 4.0]).unwrap();
        assert!(rep.holds());
        assert_eq!(rep.rows[0].bound, 2.0);
        assert!(rep.rows[0].pack <= 2);
        assert!(rep.worst_ratio <= 1.0);
        assert!(check_pack_bound(&inst, &fam, 0.0, 2.0, &[2.0 * r]).is_err());
    }
}
