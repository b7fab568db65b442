//! Totally ordered smoother families in spectral coordinates.
//!
//! Every smoother in a totally ordered, simultaneously diagonalizable family
//! is determined by its trace `θ ∈ [0, n]`, so the whole family is stored as
//! `n` nondecreasing eigenvalue curves `θ ↦ λ_i(θ)`. Curves are piecewise
//! linear between knots; a discrete family is embedded into the continuum by
//! linear interpolation of its eigenvalue vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default number of knots used when sampling a ridge family.
pub const DEFAULT_RIDGE_KNOTS: usize = 512;

/// Relative tolerance for the trace identity `Σ λ_i(θ) = θ`.
pub const TRACE_TOLERANCE: f64 = 1e-9;

const VERIFY_PROBES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigencurveFamily {
    n: usize,
    knots: Vec<f64>,
    lambdas: Vec<Vec<f64>>,
}

/// One linear piece of the family: `λ(θ) = lo + t (hi - lo)` with
/// `t = (θ - theta_lo) / (theta_hi - theta_lo)`.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub lo: &'a [f64],
    pub hi: &'a [f64],
}

impl Segment<'_> {
    pub fn width(&self) -> f64 {
        self.theta_hi - self.theta_lo
    }

    pub fn theta_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            self.theta_lo
        } else if t >= 1.0 {
            self.theta_hi
        } else {
            (self.theta_lo + t * self.width()).min(self.theta_hi)
        }
    }
}

impl EigencurveFamily {
    /// Assembles a family from raw parts, checking only its shape.
    ///
    /// The ordering, trace and endpoint invariants are *not* enforced here so
    /// that hand-written descriptors can be loaded and then diagnosed with
    /// [`verify_family`].
    pub fn from_parts(n: usize, knots: Vec<f64>, lambdas: Vec<Vec<f64>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::field("n", "must be at least 1"));
        }
        if knots.len() < 2 {
            return Err(Error::field("knots", "need at least two knots"));
        }
        if lambdas.len() != knots.len() {
            return Err(Error::field(
                "lambdas",
                format!("{} vectors for {} knots", lambdas.len(), knots.len()),
            ));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::field("knots", "non-finite value"));
        }
        if knots[0] != 0.0 || knots[knots.len() - 1] != n as f64 {
            return Err(Error::field("knots", format!("must run from 0 to n = {n}")));
        }
        if let Some(k) = knots.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::field(
                "knots",
                format!("not strictly increasing at position {}", k + 1),
            ));
        }
        for (k, v) in lambdas.iter().enumerate() {
            if v.len() != n {
                return Err(Error::field(
                    "lambdas",
                    format!("vector {k} has length {}, expected {n}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::field("lambdas", format!("vector {k} has a non-finite entry")));
            }
        }
        Ok(Self { n, knots, lambdas })
    }

    /// `λ_i(θ) = θ / n` for every `i`.
    pub fn uniform_shrink(n: usize) -> Self {
        Self {
            n,
            knots: vec![0.0, n as f64],
            lambdas: vec![vec![0.0; n], vec![1.0; n]],
        }
    }

    /// Nested coordinate projections: `λ_i(θ) = clamp(θ - (i - 1), 0, 1)`.
    pub fn projection(n: usize) -> Self {
        let knots = (0..=n).map(|k| k as f64).collect();
        let lambdas = (0..=n)
            .map(|k| (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { n, knots, lambdas }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Upper end of the trace domain, `n` as a float.
    pub fn theta_max(&self) -> f64 {
        self.n as f64
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn lambdas_at_knots(&self) -> &[Vec<f64>] {
        &self.lambdas
    }

    pub fn segment_count(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn segment(&self, k: usize) -> Segment<'_> {
        Segment {
            theta_lo: self.knots[k],
            theta_hi: self.knots[k + 1],
            lo: &self.lambdas[k],
            hi: &self.lambdas[k + 1],
        }
    }

    /// Index of the segment containing `theta` (the last one for `θ = n`).
    pub fn segment_index(&self, theta: f64) -> usize {
        let k = self.knots.partition_point(|&t| t <= theta);
        k.saturating_sub(1).min(self.segment_count() - 1)
    }

    pub fn check_theta(&self, theta: f64) -> Result<()> {
        if (0.0..=self.theta_max()).contains(&theta) {
            Ok(())
        } else {
            Err(Error::ThetaOutOfRange {
                theta,
                n: self.theta_max(),
            })
        }
    }

    pub fn lambdas_at(&self, theta: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.lambdas_into(theta, &mut out)?;
        Ok(out)
    }

    /// Writes `λ(θ)` into `out` without allocating.
    pub fn lambdas_into(&self, theta: f64, out: &mut [f64]) -> Result<()> {
        self.check_theta(theta)?;
        if out.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: out.len(),
            });
        }
        let k = self.segment_index(theta);
        let seg = self.segment(k);
        if theta == seg.theta_lo {
            out.copy_from_slice(seg.lo);
        } else if theta == seg.theta_hi {
            out.copy_from_slice(seg.hi);
        } else {
            let t = (theta - seg.theta_lo) / seg.width();
            interpolate(seg.lo, seg.hi, t, out);
        }
        Ok(())
    }
}

/// Linear interpolation clamped to the bracketing values so that rounding
/// can never break monotonicity across a knot.
pub(crate) fn interpolate(lo: &[f64], hi: &[f64], t: f64, out: &mut [f64]) {
    for ((o, &a), &b) in out.iter_mut().zip(lo).zip(hi) {
        let v = a + t * (b - a);
        *o = if a <= b { v.clamp(a, b) } else { v.clamp(b, a) };
    }
}

/// Embeds an ordered list of eigenvalue vectors into a continuous family.
///
/// Inputs are sorted by trace, equal duplicates dropped, and the zero and
/// identity smoothers added when missing.
pub fn build_interpolated_family(discrete: &[Vec<f64>]) -> Result<EigencurveFamily> {
    let first = discrete
        .first()
        .ok_or_else(|| Error::Invalid("no smoothers given".into()))?;
    let n = first.len();
    if n == 0 {
        return Err(Error::Invalid("smoothers have dimension 0".into()));
    }
    for (k, v) in discrete.iter().enumerate() {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        if let Some(i) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Invalid(format!(
                "smoother {k} has eigenvalue {} at {i}, outside [0, 1]",
                v[i]
            )));
        }
    }

    let traces: Vec<f64> = discrete.iter().map(|v| v.iter().sum()).collect();
    let mut order: Vec<usize> = (0..discrete.len()).collect();
    order.sort_by(|&a, &b| traces[a].total_cmp(&traces[b]));

    let mut kept: Vec<usize> = Vec::with_capacity(order.len());
    for &idx in &order {
        if let Some(&prev) = kept.last() {
            let (p, c) = (&discrete[prev], &discrete[idx]);
            if p == c {
                continue;
            }
            if c.iter().zip(p).any(|(a, b)| a < b) {
                return Err(Error::OrderViolation {
                    first: prev,
                    second: idx,
                });
            }
            if traces[idx] <= traces[prev] {
                return Err(Error::DuplicateTrace {
                    first: prev,
                    second: idx,
                    trace: traces[idx],
                });
            }
        }
        kept.push(idx);
    }

    let zeros = vec![0.0; n];
    let ones = vec![1.0; n];
    let mut knots = Vec::with_capacity(kept.len() + 2);
    let mut lambdas = Vec::with_capacity(kept.len() + 2);
    if discrete[kept[0]] != zeros {
        knots.push(0.0);
        lambdas.push(zeros);
    }
    for &idx in &kept {
        knots.push(traces[idx]);
        lambdas.push(discrete[idx].clone());
    }
    if *lambdas.last().expect("nonempty") != ones {
        if traces[*kept.last().expect("nonempty")] >= n as f64 {
            return Err(Error::DuplicateTrace {
                first: *kept.last().expect("nonempty"),
                second: discrete.len(),
                trace: n as f64,
            });
        }
        knots.push(n as f64);
        lambdas.push(ones);
    }
    EigencurveFamily::from_parts(n, knots, lambdas)
}

/// Ridge shrinkage `λ_i(κ) = d_i² / (d_i² + κ)` reparametrized by trace.
pub fn ridge_family(design_eigenvalues: &[f64]) -> Result<EigencurveFamily> {
    ridge_family_with_knots(design_eigenvalues, DEFAULT_RIDGE_KNOTS)
}

pub fn ridge_family_with_knots(design_eigenvalues: &[f64], knot_count: usize) -> Result<EigencurveFamily> {
    if design_eigenvalues.is_empty() {
        return Err(Error::Invalid("no design eigenvalues".into()));
    }
    if let Some((index, &value)) = design_eigenvalues
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(Error::NonpositiveDesignEigenvalue { index, value });
    }
    if knot_count < 2 {
        return Err(Error::Invalid("ridge family needs at least two knots".into()));
    }
    let n = design_eigenvalues.len();
    let nf = n as f64;
    let mut knots = Vec::with_capacity(knot_count);
    let mut lambdas = Vec::with_capacity(knot_count);
    knots.push(0.0);
    lambdas.push(vec![0.0; n]);
    for k in 1..knot_count - 1 {
        let target = nf * k as f64 / (knot_count - 1) as f64;
        let kappa = ridge_kappa_for_trace(design_eigenvalues, target);
        let lam = ridge_lambdas(design_eigenvalues, kappa);
        let trace: f64 = lam.iter().sum();
        if trace <= *knots.last().expect("nonempty") || trace >= nf {
            return Err(Error::Invalid(format!(
                "ridge knots collapsed near trace {target}; use fewer knots"
            )));
        }
        knots.push(trace);
        lambdas.push(lam);
    }
    knots.push(nf);
    lambdas.push(vec![1.0; n]);
    EigencurveFamily::from_parts(n, knots, lambdas)
}

pub fn ridge_lambdas(design_eigenvalues: &[f64], kappa: f64) -> Vec<f64> {
    design_eigenvalues.iter().map(|&d2| d2 / (d2 + kappa)).collect()
}

/// Inverts `κ ↦ Σ d_i² / (d_i² + κ)` by bisection.
///
/// Returns `0` for `θ ≥ n` and `+∞` for `θ ≤ 0`.
pub fn ridge_kappa_for_trace(design_eigenvalues: &[f64], theta: f64) -> f64 {
    let n = design_eigenvalues.len() as f64;
    if theta >= n {
        return 0.0;
    }
    if theta <= 0.0 {
        return f64::INFINITY;
    }
    let trace = |kappa: f64| -> f64 { design_eigenvalues.iter().map(|&d2| d2 / (d2 + kappa)).sum() };
    // Σ d²/(d²+κ) < Σ d²/κ, so κ = Σd²/θ already undershoots the target.
    let mut lo = 0.0;
    let mut hi = design_eigenvalues.iter().sum::<f64>() / theta;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let t = trace(mid);
        if t == theta {
            return mid;
        }
        if t > theta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (trace(lo) - theta).abs() <= (trace(hi) - theta).abs() {
        lo
    } else {
        hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Largest violation found (0 when the invariant holds exactly).
    pub worst_violation: f64,
    pub offending: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl FamilyReport {
    pub fn first_failure(&self) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| !c.passed)
    }
}

#[derive(Default)]
struct Worst {
    value: f64,
    at: Option<String>,
}

impl Worst {
    fn record(&mut self, violation: f64, at: impl FnOnce() -> String) {
        if violation > self.value {
            self.value = violation;
            self.at = Some(at());
        }
    }
}

/// Checks monotonicity, the trace identity and the endpoint values at every
/// knot and at 1000 pseudo-random interior traces.
pub fn verify_family(family: &EigencurveFamily) -> FamilyReport {
    let n = family.n;
    let nf = family.theta_max();
    let mut mono = Worst::default();
    let mut trace = Worst::default();
    let mut ends = Worst::default();

    for (k, w) in family.lambdas.windows(2).enumerate() {
        for i in 0..n {
            mono.record(w[0][i] - w[1][i], || format!("curve {i} decreases at knot {}", k + 1));
        }
    }
    for (k, (theta, lam)) in family.knots.iter().zip(&family.lambdas).enumerate() {
        let s: f64 = lam.iter().sum();
        trace.record((s - theta).abs(), || format!("knot {k} (theta = {theta})"));
        for (i, &l) in lam.iter().enumerate() {
            let out = (-l).max(l - 1.0);
            ends.record(out, || format!("curve {i} leaves [0, 1] at knot {k}"));
        }
    }
    for (i, &l) in family.lambdas[0].iter().enumerate() {
        ends.record(l.abs(), || format!("curve {i} does not start at 0"));
    }
    for (i, &l) in family.lambdas[family.lambdas.len() - 1].iter().enumerate() {
        ends.record((l - 1.0).abs(), || format!("curve {i} does not end at 1"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_fa31);
    let mut probes: Vec<f64> = (0..VERIFY_PROBES).map(|_| rng.random::<f64>() * nf).collect();
    probes.sort_by(f64::total_cmp);
    let mut prev = vec![0.0; n];
    let mut cur = vec![0.0; n];
    family.lambdas_into(probes[0], &mut prev).expect("probe in range");
    for (j, &theta) in probes.iter().enumerate() {
        family.lambdas_into(theta, &mut cur).expect("probe in range");
        let s: f64 = cur.iter().sum();
        trace.record((s - theta).abs(), || format!("interior theta = {theta}"));
        if j > 0 {
            for i in 0..n {
                mono.record(prev[i] - cur[i], || {
                    format!("curve {i} decreases between theta {} and {theta}", probes[j - 1])
                });
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let trace_tol = TRACE_TOLERANCE * nf;
    let checks = vec![
        CheckOutcome {
            name: "family.monotonicity".into(),
            passed: mono.value <= 0.0,
            worst_violation: mono.value,
            offending: mono.at,
        },
        CheckOutcome {
            name: "family.trace_identity".into(),
            passed: trace.value <= trace_tol,
            worst_violation: trace.value,
            offending: if trace.value > trace_tol { trace.at } else { None },
        },
        CheckOutcome {
            name: "family.endpoints".into(),
            passed: ends.value <= 0.0,
            worst_violation: ends.value,
            offending: ends.at,
        },
    ];
    FamilyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_pair_interpolates_to_min_max_curves() {
        let fam = build_interpolated_family(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(fam.knots(), &[0.0, 1.0, 2.0]);
        for &theta in &[0.0, 0.25, 0.9, 1.0, 1.3, 2.0] {
            let lam = fam.lambdas_at(theta).unwrap();
            assert!((lam[0] - theta.min(1.0)).abs() < 1e-15);
            assert!((lam[1] - (theta - 1.0).max(0.0)).abs() < 1e-15);
        }
        assert_eq!(fam.lambdas_at(1.5).unwrap(), vec![1.0, 0.5]);
    }

    #[test]
    fn single_uniform_shrink_is_augmented() {
        let fam = build_interpolated_family(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(fam.knots(), &[0.0, 1.0, 2.0]);
        assert_eq!(fam.lambdas_at_knots()[0], vec![0.0, 0.0]);
        assert_eq!(fam.lambdas_at_knots()[2], vec![1.0, 1.0]);
        assert_eq!(fam.lambdas_at(1.0).unwrap(), vec![0.5, 0.5]);
        let lam = fam.lambdas_at(0.6).unwrap();
        assert!((lam[0] - 0.3).abs() < 1e-15 && (lam[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn incomparable_pair_is_an_order_violation() {
        let err = build_interpolated_family(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::OrderViolation { .. }));
    }

    #[test]
    fn equal_duplicates_are_dropped_and_unequal_ones_rejected() {
        let fam = build_interpolated_family(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(fam.knots().len(), 3);
        // 1 + 2^-53 rounds to 1, so both vectors have trace exactly 1.
        let tiny = f64::EPSILON / 2.0;
        let err = build_interpolated_family(&[vec![1.0, 0.0], vec![1.0, tiny]]).unwrap_err();
        assert!(matches!(err, Error::DuplicateTrace { .. }), "{err:?}");
    }

    #[test]
    fn unsorted_input_is_sorted_by_trace() {
        let fam = build_interpolated_family(&[vec![1.0, 0.5], vec![0.2, 0.0]]).unwrap();
        assert_eq!(fam.knots(), &[0.0, 0.2, 1.5, 2.0]);
    }

    #[test]
    fn lambdas_at_rejects_out_of_range() {
        let fam = EigencurveFamily::uniform_shrink(2);
        assert!(matches!(fam.lambdas_at(-0.1), Err(Error::ThetaOutOfRange { .. })));
        assert!(matches!(fam.lambdas_at(2.0001), Err(Error::ThetaOutOfRange { .. })));
        assert!(matches!(fam.lambdas_at(f64::NAN), Err(Error::ThetaOutOfRange { .. })));
        assert_eq!(fam.lambdas_at(0.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(fam.lambdas_at(1.0).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn ridge_with_equal_design_is_uniform_shrink() {
        let d2 = [1.0, 1.0];
        let fam = ridge_family(&d2).unwrap();
        for &theta in &[0.1, 0.5, 1.0, 1.7, 1.99] {
            // Closed form κ(θ) = 2/θ - 1.
            let kappa = ridge_kappa_for_trace(&d2, theta);
            assert!((kappa - (2.0 / theta - 1.0)).abs() < 1e-9 * (1.0 + kappa));
            let lam = fam.lambdas_at(theta).unwrap();
            assert!((lam[0] - theta / 2.0).abs() < 1e-9);
            assert!((lam[1] - theta / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ridge_endpoints_and_inverse() {
        let d2 = [4.0, 1.0];
        let fam = ridge_family(&d2).unwrap();
        assert_eq!(fam.lambdas_at(2.0).unwrap(), vec![1.0, 1.0]);
        assert_eq!(ridge_kappa_for_trace(&d2, 2.0), 0.0);
        let lam = ridge_lambdas(&d2, 4.0);
        assert!((lam[0] - 0.5).abs() < 1e-15 && (lam[1] - 0.2).abs() < 1e-15);
        let kappa = ridge_kappa_for_trace(&d2, 0.7);
        assert!((kappa - 4.0).abs() < 1e-8, "kappa = {kappa}");
    }

    #[test]
    fn ridge_rejects_nonpositive_design() {
        let err = ridge_family(&[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonpositiveDesignEigenvalue { index: 1, .. }));
        let err = ridge_family(&[-2.0]).unwrap_err();
        assert!(matches!(err, Error::NonpositiveDesignEigenvalue { index: 0, .. }));
    }

    #[test]
    fn ridge_trace_identity_is_tight() {
        let fam = ridge_family(&[4.0, 1.0, 0.25]).unwrap();
        let report = verify_family(&fam);
        assert!(report.passed, "{report:?}");
        assert!(report.checks[1].worst_violation <= 1e-6 * 3.0);
    }

    #[test]
    fn verify_uniform_shrink_has_zero_slack() {
        let report = verify_family(&EigencurveFamily::uniform_shrink(2));
        assert!(report.passed);
        for c in &report.checks {
            assert_eq!(c.worst_violation, 0.0, "{}", c.name);
        }
    }

    #[test]
    fn verify_reports_decreased_curve() {
        let mut lambdas = vec![vec![0.0, 0.0], vec![0.5, 0.3], vec![0.6, 0.6], vec![1.0, 1.0]];
        let knots = vec![0.0, 0.8, 1.2, 2.0];
        lambdas[2][0] = 0.4;
        lambdas[2][1] = 0.8;
        let fam = EigencurveFamily::from_parts(2, knots, lambdas).unwrap();
        let report = verify_family(&fam);
        assert!(!report.passed);
        let mono = report.first_failure().unwrap();
        assert_eq!(mono.name, "family.monotonicity");
        assert!(mono.offending.as_deref().unwrap().contains("curve 0 decreases at knot 2"));
        assert!((mono.worst_violation - 0.1).abs() < 1e-12);
    }

    #[test]
    fn from_parts_names_bad_fields() {
        let err = EigencurveFamily::from_parts(2, vec![0.0, 2.0], vec![vec![0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidField { ref field, .. } if field == "lambdas"));
        let err = EigencurveFamily::from_parts(2, vec![0.0, 1.0], vec![vec![0.0; 2], vec![1.0; 2]]).unwrap_err();
        assert!(matches!(err, Error::InvalidField { ref field, .. } if field == "knots"));
    }
}
