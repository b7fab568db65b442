//! Risk functionals of a smoother family evaluated in spectral form.
//!
//! With `ρ = Uμ` and `y` expressed in the common eigenbasis, every quantity
//! is a sum over coordinates:
//!
//! ```text
//! M_μ(θ) = Σ ρ_i² (1 - λ_i)² + σ² Σ λ_i²          exact risk
//! G_μ(θ) = Σ (ρ_i - λ_i y_i)²                     loss
//! Ĝ(θ)   = Σ (1 - λ_i)² y_i² + 2σ² θ               Mallows' Cp
//! d²(θ,θ') = Σ (ρ_i² + σ²) (λ_i(θ) - λ_i(θ'))²
//! ```
//!
//! Along one linear piece of the family `M_μ` and `Ĝ` are quadratics in θ,
//! so both are minimized exactly segment by segment.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::EigencurveFamily;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralInstance {
    rho: Vec<f64>,
    sigma2: f64,
}

impl SpectralInstance {
    pub fn new(rho: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::field("sigma2", format!("must be positive and finite, got {sigma2}")));
        }
        if rho.is_empty() {
            return Err(Error::field("rho", "empty signal vector"));
        }
        if rho.iter().any(|r| !r.is_finite()) {
            return Err(Error::field("rho", "non-finite entry"));
        }
        Ok(Self { rho, sigma2 })
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn n(&self) -> usize {
        self.rho.len()
    }

    /// Per-coordinate weights `ρ_i² + σ²` of the metric `d`.
    pub fn metric_weights(&self) -> Vec<f64> {
        self.rho.iter().map(|r| r * r + self.sigma2).collect()
    }

    /// Same problem with `ρ → cρ` and `σ → cσ`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.rho.iter().map(|r| r * c).collect(), self.sigma2 * c * c)
    }

    pub(crate) fn check_family(&self, family: &EigencurveFamily) -> Result<()> {
        if family.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: family.n(),
                got: self.n(),
            });
        }
        Ok(())
    }
}

/// Oracle smoother `θ_μ` together with its risk `m*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskPoint {
    pub theta: f64,
    pub m_value: f64,
    pub is_global_min: bool,
}

/// Expresses `μ` in the eigenbasis: `ρ = B μ` for an orthogonal `B` (rows).
pub fn rotate_to_spectral(basis: &[Vec<f64>], mu: &[f64], sigma2: f64) -> Result<SpectralInstance> {
    let n = mu.len();
    if basis.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: basis.len(),
        });
    }
    if let Some(row) = basis.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: row.len(),
        });
    }
    let mut deviation = 0.0f64;
    for a in 0..n {
        for b in a..n {
            let dot: f64 = basis.iter().map(|row| row[a] * row[b]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            deviation = deviation.max((dot - target).abs());
        }
    }
    if !(deviation <= 1e-8) {
        return Err(Error::NotOrthogonal { deviation });
    }
    let rho = basis
        .iter()
        .map(|row| row.iter().zip(mu).map(|(b, m)| b * m).sum())
        .collect();
    SpectralInstance::new(rho, sigma2)
}

fn check_vector(family: &EigencurveFamily, v: &[f64]) -> Result<()> {
    if v.len() != family.n() {
        return Err(Error::DimensionMismatch {
            expected: family.n(),
            got: v.len(),
        });
    }
    Ok(())
}

pub(crate) fn m_from_lambdas(inst: &SpectralInstance, lam: &[f64]) -> f64 {
    let s2 = inst.sigma2;
    inst.rho
        .iter()
        .zip(lam)
        .map(|(r, l)| {
            let u = 1.0 - l;
            r * r * u * u + s2 * l * l
        })
        .sum()
}

pub(crate) fn g_loss_from_lambdas(rho: &[f64], lam: &[f64], y: &[f64]) -> f64 {
    rho.iter()
        .zip(lam)
        .zip(y)
        .map(|((r, l), yi)| {
            let e = r - l * yi;
            e * e
        })
        .sum()
}

pub(crate) fn g_hat_from_lambdas(sigma2: f64, theta: f64, lam: &[f64], y: &[f64]) -> f64 {
    let resid: f64 = lam
        .iter()
        .zip(y)
        .map(|(l, yi)| {
            let u = 1.0 - l;
            u * u * yi * yi
        })
        .sum();
    resid + 2.0 * sigma2 * theta
}

pub(crate) fn d2_from_lambdas(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights
        .iter()
        .zip(a)
        .zip(b)
        .map(|((w, x), y)| {
            let d = x - y;
            w * d * d
        })
        .sum()
}

/// Exact risk `M_μ(θ) = E G_μ(θ)`.
pub fn m_risk(inst: &SpectralInstance, family: &EigencurveFamily, theta: f64) -> Result<f64> {
    inst.check_family(family)?;
    let lam = family.lambdas_at(theta)?;
    Ok(m_from_lambdas(inst, &lam))
}

/// Loss `G_μ(θ) = |μ - S_θ y|²` for spectral `y`.
pub fn g_loss(inst: &SpectralInstance, family: &EigencurveFamily, theta: f64, y: &[f64]) -> Result<f64> {
    inst.check_family(family)?;
    check_vector(family, y)?;
    let lam = family.lambdas_at(theta)?;
    Ok(g_loss_from_lambdas(&inst.rho, &lam, y))
}

/// Mallows' Cp criterion `Ĝ(θ) = |y - S_θ y|² + 2σ² θ`. Uses only `y` and `σ²`.
pub fn g_hat(sigma2: f64, family: &EigencurveFamily, theta: f64, y: &[f64]) -> Result<f64> {
    check_vector(family, y)?;
    let lam = family.lambdas_at(theta)?;
    Ok(g_hat_from_lambdas(sigma2, theta, &lam, y))
}

pub fn metric_d2(inst: &SpectralInstance, family: &EigencurveFamily, theta1: f64, theta2: f64) -> Result<f64> {
    inst.check_family(family)?;
    let a = family.lambdas_at(theta1)?;
    let b = family.lambdas_at(theta2)?;
    Ok(d2_from_lambdas(&inst.metric_weights(), &a, &b))
}

/// `d(θ₁, θ₂) = sqrt(E |S₁y - S₂y|²)`.
pub fn metric_d(inst: &SpectralInstance, family: &EigencurveFamily, theta1: f64, theta2: f64) -> Result<f64> {
    metric_d2(inst, family, theta1, theta2).map(f64::sqrt)
}

/// `Σ resid_i (1 - λ_i)² + shrink Σ λ_i² + trace_coef θ`, the common shape
/// of `M_μ` and `Ĝ`.
struct SpectralQuadratic<'a> {
    resid: &'a [f64],
    shrink: f64,
    trace_coef: f64,
}

impl SpectralQuadratic<'_> {
    fn eval(&self, lam: &[f64], theta: f64) -> f64 {
        let mut s = self.trace_coef * theta;
        for (w, l) in self.resid.iter().zip(lam) {
            let u = 1.0 - l;
            s += w * u * u + self.shrink * l * l;
        }
        s
    }

    /// Global minimizer over the family; ties go to the smallest θ.
    fn minimize(&self, family: &EigencurveFamily) -> (f64, f64) {
        let n = family.n();
        let mut lam = vec![0.0; n];
        let mut best = (0.0, self.eval(&family.lambdas_at_knots()[0], 0.0));
        let consider = |theta: f64, value: f64, best: &mut (f64, f64)| {
            if value < best.1 {
                *best = (theta, value);
            }
        };
        for k in 0..family.segment_count() {
            let seg = family.segment(k);
            if k > 0 {
                consider(seg.theta_lo, self.eval(seg.lo, seg.theta_lo), &mut best);
            }
            // f(t) = c0 + c1 t + c2 t² with λ = lo + t (hi - lo).
            let mut c1 = self.trace_coef * seg.width();
            let mut c2 = 0.0;
            for ((w, a), h) in self.resid.iter().zip(seg.lo).zip(seg.hi) {
                let b = h - a;
                c1 += -2.0 * w * (1.0 - a) * b + 2.0 * self.shrink * a * b;
                c2 += (w + self.shrink) * b * b;
            }
            if c2 > 0.0 {
                let t = -c1 / (2.0 * c2);
                if t > 0.0 && t < 1.0 {
                    let theta = seg.theta_at(t);
                    if theta > seg.theta_lo && theta < seg.theta_hi {
                        family.lambdas_into(theta, &mut lam).expect("theta inside segment");
                        consider(theta, self.eval(&lam, theta), &mut best);
                    }
                }
            }
        }
        let last = family.segment(family.segment_count() - 1);
        consider(last.theta_hi, self.eval(last.hi, last.theta_hi), &mut best);
        best
    }
}

/// Oracle `θ_μ = argmin M_μ` over the embedded family, and `m* = M_μ(θ_μ)`.
pub fn minimize_m(inst: &SpectralInstance, family: &EigencurveFamily) -> Result<RiskPoint> {
    inst.check_family(family)?;
    let resid: Vec<f64> = inst.rho.iter().map(|r| r * r).collect();
    let (theta, _) = SpectralQuadratic {
        resid: &resid,
        shrink: inst.sigma2,
        trace_coef: 0.0,
    }
    .minimize(family);
    // Re-evaluate through the public path so that m* == m_risk(θ_μ) bit for bit.
    let m_value = m_from_lambdas(inst, &family.lambdas_at(theta)?);
    Ok(RiskPoint {
        theta,
        m_value,
        is_global_min: true,
    })
}

/// Mallows' Cp choice `θ̂ = argmin Ĝ`.
pub fn select_cp(sigma2: f64, family: &EigencurveFamily, y: &[f64]) -> Result<f64> {
    check_vector(family, y)?;
    let resid: Vec<f64> = y.iter().map(|v| v * v).collect();
    let (theta, _) = SpectralQuadratic {
        resid: &resid,
        shrink: 0.0,
        trace_coef: 2.0 * sigma2,
    }
    .minimize(family);
    Ok(theta)
}

/// The four elementary processes and the two centered processes
/// `D_μ = G_μ - M_μ` and `D̂ = Ĝ - M_μ` at one θ for one noise draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessValues {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
    pub d_mu: f64,
    pub d_hat: f64,
}

pub(crate) fn process_from_lambdas(rho: &[f64], sigma2: f64, lam: &[f64], xi: &[f64]) -> ProcessValues {
    let (mut x1, mut x2, mut x3, mut x4) = (0.0, 0.0, 0.0, 0.0);
    for ((&r, &l), &e) in rho.iter().zip(lam).zip(xi) {
        let u = 1.0 - l;
        let e2 = e * e;
        x1 += l * l * (e2 - sigma2);
        x2 += -2.0 * r * (l - l * l) * e;
        x3 += u * u * (e2 - sigma2);
        x4 += 2.0 * r * u * u * e;
    }
    ProcessValues {
        x1,
        x2,
        x3,
        x4,
        d_mu: x1 + x2,
        d_hat: x3 + x4 + rho.len() as f64 * sigma2,
    }
}

pub fn process_values(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    theta: f64,
    xi: &[f64],
) -> Result<ProcessValues> {
    inst.check_family(family)?;
    check_vector(family, xi)?;
    let lam = family.lambdas_at(theta)?;
    Ok(process_from_lambdas(&inst.rho, inst.sigma2, &lam, xi))
}

/// `r_x = max(sqrt(3 m*), 7x)`.
pub fn r_x(x: f64, m_star: f64) -> f64 {
    (3.0 * m_star).sqrt().max(7.0 * x)
}

pub(crate) fn weight_from_d2(d2: f64, x: f64, r: f64) -> f64 {
    (d2 + r * r) * x / r
}

/// `L(θ, x, r) = [d²(θ, θ_μ) + r²] x / r`.
pub fn weight_l(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    theta_mu: f64,
    theta: f64,
    x: f64,
    r: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::NonpositiveRadius(r));
    }
    if !(x >= 0.0) {
        return Err(Error::Invalid(format!("x must be nonnegative, got {x}")));
    }
    let d2 = metric_d2(inst, family, theta, theta_mu)?;
    Ok(weight_from_d2(d2, x, r))
}

/// Slacks of the three deterministic inequalities; each should be `≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityReport {
    /// `min_i [λ_i(θ₁)² + λ_i(θ₂)² - (λ_i(θ₁) - λ_i(θ₂))²]`.
    pub square_diff: f64,
    /// `M(θ₁) + M(θ₂) - d²(θ₁, θ₂)`.
    pub m_incr: f64,
    /// `M(θ₁) - m* - d²(θ₁, θ_μ)/3 · 1{d²(θ₁, θ_μ) ≥ 3m*}`.
    pub m_growth: f64,
    pub growth_indicator: bool,
}

impl InequalityReport {
    pub fn min_slack(&self) -> f64 {
        self.square_diff.min(self.m_incr).min(self.m_growth)
    }
}

/// Diagonal of `S₁² + S₂² - (S₁ - S₂)²` for commuting `S₁, S₂` given by
/// their spectra.
pub fn square_diff_slacks(l1: &[f64], l2: &[f64]) -> Vec<f64> {
    l1.iter()
        .zip(l2)
        .map(|(a, b)| a * a + b * b - (a - b) * (a - b))
        .collect()
}

pub fn check_matrix_inequalities(
    inst: &SpectralInstance,
    family: &EigencurveFamily,
    oracle: &RiskPoint,
    theta1: f64,
    theta2: f64,
) -> Result<InequalityReport> {
    inst.check_family(family)?;
    let l1 = family.lambdas_at(theta1)?;
    let l2 = family.lambdas_at(theta2)?;
    let lmu = family.lambdas_at(oracle.theta)?;
    let weights = inst.metric_weights();

    let square_diff = square_diff_slacks(&l1, &l2)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let m1 = m_from_lambdas(inst, &l1);
    let m2 = m_from_lambdas(inst, &l2);
    let m_incr = m1 + m2 - d2_from_lambdas(&weights, &l1, &l2);
    let d2_mu = d2_from_lambdas(&weights, &l1, &lmu);
    let growth_indicator = d2_mu >= 3.0 * oracle.m_value;
    let m_growth = m1 - oracle.m_value - if growth_indicator { d2_mu / 3.0 } else { 0.0 };
    Ok(InequalityReport {
        square_diff,
        m_incr,
        m_growth,
        growth_indicator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::build_interpolated_family;

    fn canonical() -> (SpectralInstance, EigencurveFamily) {
        (
            SpectralInstance::new(vec![2.0, 1.0], 1.0).unwrap(),
            EigencurveFamily::uniform_shrink(2),
        )
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn instance_rejects_zero_variance() {
        assert!(SpectralInstance::new(vec![1.0], 0.0).is_err());
        assert!(SpectralInstance::new(vec![1.0], -1.0).is_err());
        assert!(SpectralInstance::new(vec![f64::NAN], 1.0).is_err());
    }

    #[test]
    fn rotation_examples() {
        let inst = rotate_to_spectral(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[2.0, 1.0], 1.0).unwrap();
        assert_eq!(inst.rho(), &[2.0, 1.0]);
        let inst = rotate_to_spectral(&[vec![0.0, -1.0], vec![1.0, 0.0]], &[1.0, 0.0], 1.0).unwrap();
        assert_eq!(inst.rho(), &[0.0, 1.0]);
        let err = rotate_to_spectral(&[vec![1.0, 1.0], vec![0.0, 1.0]], &[1.0, 0.0], 1.0).unwrap_err();
        assert!(matches!(err, Error::NotOrthogonal { .. }));
    }

    #[test]
    fn m_risk_endpoints_and_oracle() {
        let (inst, fam) = canonical();
        assert_eq!(m_risk(&inst, &fam, 0.0).unwrap(), 5.0);
        assert_eq!(m_risk(&inst, &fam, 2.0).unwrap(), 2.0);
        assert!(close(m_risk(&inst, &fam, 10.0 / 7.0).unwrap(), 10.0 / 7.0, 1e-14));
        assert!(m_risk(&inst, &fam, 2.5).is_err());
    }

    #[test]
    fn g_loss_examples() {
        let (inst, fam) = canonical();
        assert_eq!(g_loss(&inst, &fam, 2.0, &[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(g_loss(&inst, &fam, 0.0, &[7.0, -3.0]).unwrap(), 5.0);
        assert_eq!(g_loss(&inst, &fam, 1.0, &[3.0, 0.0]).unwrap(), 1.25);
        assert!(matches!(
            g_loss(&inst, &fam, 1.0, &[3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn g_hat_examples() {
        let fam = EigencurveFamily::uniform_shrink(2);
        let y = [3.0, 0.0];
        assert_eq!(g_hat(1.0, &fam, 2.0, &y).unwrap(), 4.0);
        assert_eq!(g_hat(1.0, &fam, 0.0, &y).unwrap(), 9.0);
        assert_eq!(g_hat(1.0, &fam, 1.0, &y).unwrap(), 4.25);
    }

    #[test]
    fn metric_examples() {
        let (inst, fam) = canonical();
        assert_eq!(metric_d(&inst, &fam, 0.7, 0.7).unwrap(), 0.0);
        assert!(close(metric_d(&inst, &fam, 0.0, 2.0).unwrap(), 7f64.sqrt(), 1e-15));
        let d = metric_d(&inst, &fam, 0.3, 1.7).unwrap();
        assert!(close(d, 7f64.sqrt() / 2.0 * 1.4, 1e-14));
        assert_eq!(d, metric_d(&inst, &fam, 1.7, 0.3).unwrap());
    }

    #[test]
    fn oracle_examples() {
        let (inst, fam) = canonical();
        let p = minimize_m(&inst, &fam).unwrap();
        assert!(close(p.theta, 10.0 / 7.0, 1e-14) && close(p.m_value, 10.0 / 7.0, 1e-14));

        let proj = EigencurveFamily::projection(2);
        let p = minimize_m(&inst, &proj).unwrap();
        assert!(close(p.theta, 1.5, 1e-14) && close(p.m_value, 1.5, 1e-14));

        let zero = SpectralInstance::new(vec![0.0, 0.0], 1.0).unwrap();
        let p = minimize_m(&zero, &fam).unwrap();
        assert_eq!((p.theta, p.m_value), (0.0, 0.0));
    }

    #[test]
    fn cp_examples() {
        let fam = EigencurveFamily::uniform_shrink(2);
        assert_eq!(select_cp(1.0, &fam, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(close(select_cp(1.0, &fam, &[3.0, 0.0]).unwrap(), 14.0 / 9.0, 1e-14));
        // |ρ|²(1-t)² + 4σ²t is minimized at t = 1 - 2σ²/|ρ|².
        let theta = select_cp(1e-6, &fam, &[2.0, 1.0]).unwrap();
        assert!(close(theta, 2.0 * (1.0 - 2e-6 / 5.0), 1e-12));
    }

    #[test]
    fn cp_ties_break_toward_smaller_theta() {
        // Ĝ is constant in θ when y_i² = 2σ² on a uniform shrink of size 1.
        let fam = EigencurveFamily::uniform_shrink(1);
        let y = [1.0];
        // Ĝ(θ) = (1-θ)² + θ: strictly convex, minimum at θ = 1/2.
        assert!(close(select_cp(0.5, &fam, &y).unwrap(), 0.5, 1e-15));
        let flat = build_interpolated_family(&[vec![0.5, 0.0], vec![0.5, 0.5]]).unwrap();
        // Zero data: Ĝ = 2σ²θ, strictly increasing.
        assert_eq!(select_cp(1.0, &flat, &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn process_zero_noise_and_zero_theta() {
        let (inst, fam) = canonical();
        let theta = 0.8;
        let lam = fam.lambdas_at(theta).unwrap();
        let p = process_values(&inst, &fam, theta, &[0.0, 0.0]).unwrap();
        let sl2: f64 = lam.iter().map(|l| l * l).sum();
        let su2: f64 = lam.iter().map(|l| (1.0 - l) * (1.0 - l)).sum();
        assert!(close(p.x1, -sl2, 1e-15) && p.x2 == 0.0);
        assert!(close(p.x3, -su2, 1e-15) && p.x4 == 0.0);
        let direct = g_loss(&inst, &fam, theta, &[2.0, 1.0]).unwrap() - m_risk(&inst, &fam, theta).unwrap();
        assert!(close(p.d_mu, direct, 1e-14));

        let p = process_values(&inst, &fam, 0.0, &[0.3, -1.2]).unwrap();
        assert_eq!((p.x1, p.x2, p.d_mu), (0.0, 0.0, 0.0));
    }

    #[test]
    fn weight_examples() {
        let (inst, fam) = canonical();
        let tmu = 10.0 / 7.0;
        assert!(close(weight_l(&inst, &fam, tmu, tmu, 1.3, 0.5).unwrap(), 0.65, 1e-15));
        assert_eq!(weight_l(&inst, &fam, tmu, 0.2, 0.0, 0.5).unwrap(), 0.0);
        assert!(close(weight_l(&inst, &fam, tmu, 2.0, 1.0, 1.0).unwrap(), 11.0 / 7.0, 1e-14));
        assert!(matches!(
            weight_l(&inst, &fam, tmu, 2.0, 1.0, 0.0),
            Err(Error::NonpositiveRadius(_))
        ));
        assert_eq!(r_x(1.0, 3.0), 7.0);
        assert_eq!(r_x(0.1, 3.0), 3.0);
    }

    #[test]
    fn inequality_examples() {
        assert_eq!(square_diff_slacks(&[1.0, 0.0], &[0.5, 0.5]), vec![1.0, 0.0]);

        let (inst, fam) = canonical();
        let oracle = minimize_m(&inst, &fam).unwrap();
        let rep = check_matrix_inequalities(&inst, &fam, &oracle, 0.0, 2.0).unwrap();
        assert_eq!(rep.m_incr, 0.0);

        let spike = SpectralInstance::new(vec![10.0, 0.0], 1.0).unwrap();
        let oracle = minimize_m(&spike, &fam).unwrap();
        assert!(close(oracle.theta, 200.0 / 102.0, 1e-13));
        assert!(close(oracle.m_value, 200.0 / 102.0, 1e-13));
        let rep = check_matrix_inequalities(&spike, &fam, &oracle, 0.0, 1.0).unwrap();
        assert!(rep.growth_indicator);
        let d2 = 10000.0 / 102.0;
        assert!(close(rep.m_growth, 100.0 - 200.0 / 102.0 - d2 / 3.0, 1e-11));
        assert!(rep.m_growth > 0.0);
    }

    #[test]
    fn square_diff_is_twice_the_product() {
        let fam = build_interpolated_family(&[vec![0.5, 0.5], vec![1.0, 0.5]]).unwrap();
        let inst = SpectralInstance::new(vec![1.0, 1.0], 1.0).unwrap();
        let oracle = minimize_m(&inst, &fam).unwrap();
        // λ(1.0) = (0.5, 0.5), λ(1.5) = (1, 0.5): per-coordinate 2λλ' = (1, 0.5).
        let rep = check_matrix_inequalities(&inst, &fam, &oracle, 1.0, 1.5).unwrap();
        assert_eq!(rep.square_diff, 0.5);
    }
}
