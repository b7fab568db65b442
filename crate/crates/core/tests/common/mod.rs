#![allow(dead_code)]

use cp_oracle::{build_interpolated_family, ridge_family, EigencurveFamily, SpectralInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn canonical() -> (SpectralInstance, EigencurveFamily) {
    (
        SpectralInstance::new(vec![2.0, 1.0], 1.0).unwrap(),
        EigencurveFamily::uniform_shrink(2),
    )
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> SpectralInstance {
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let rho = normals(rng, n).into_iter().map(|z| scale * z).collect();
    SpectralInstance::new(rho, rng.random_range(0.25..4.0)).unwrap()
}

/// Uniform shrink, projection, ridge, or a random interpolated chain.
pub fn random_family(rng: &mut ChaCha8Rng, n: usize) -> EigencurveFamily {
    match rng.random_range(0..4) {
        0 => EigencurveFamily::uniform_shrink(n),
        1 => EigencurveFamily::projection(n),
        2 => {
            let eigs: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-2.0..1.0))).collect();
            ridge_family(&eigs).unwrap()
        }
        _ => {
            let steps = rng.random_range(2..6);
            let mut cur = vec![0.0; n];
            let mut chain = vec![cur.clone()];
            for s in 0..steps {
                for v in cur.iter_mut() {
                    let left = 1.0 - *v;
                    *v += if s + 1 == steps { left } else { left * rng.random::<f64>() * 0.7 };
                }
                chain.push(cur.clone());
            }
            build_interpolated_family(&chain).unwrap()
        }
    }
}

/// `M(θ)` straight from the eigenvalue curves.
pub fn m_direct(inst: &SpectralInstance, fam: &EigencurveFamily, theta: f64) -> f64 {
    let lam = fam.lambdas_at(theta).unwrap();
    inst.rho()
        .iter()
        .zip(&lam)
        .map(|(r, l)| r * r * (1.0 - l) * (1.0 - l) + inst.sigma2() * l * l)
        .sum()
}

/// `d²(θ₁, θ₂)` straight from the eigenvalue curves.
pub fn d2_direct(inst: &SpectralInstance, fam: &EigencurveFamily, t1: f64, t2: f64) -> f64 {
    let a = fam.lambdas_at(t1).unwrap();
    let b = fam.lambdas_at(t2).unwrap();
    inst.rho()
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(r, (x, y))| (r * r + inst.sigma2()) * (x - y) * (x - y))
        .sum()
}

/// `Ĝ(θ) = |y - S_θ y|² + 2σ²θ`.
pub fn g_hat_direct(sigma2: f64, fam: &EigencurveFamily, theta: f64, y: &[f64]) -> f64 {
    let lam = fam.lambdas_at(theta).unwrap();
    y.iter().zip(&lam).map(|(y, l)| (1.0 - l) * (1.0 - l) * y * y).sum::<f64>() + 2.0 * sigma2 * theta
}

/// `G(θ) = |ρ - S_θ y|²`.
pub fn g_direct(inst: &SpectralInstance, fam: &EigencurveFamily, theta: f64, y: &[f64]) -> f64 {
    let lam = fam.lambdas_at(theta).unwrap();
    inst.rho()
        .iter()
        .zip(y.iter().zip(&lam))
        .map(|(r, (y, l))| (r - l * y) * (r - l * y))
        .sum()
}

/// Minimum of `f` over `0, h, 2h, …, n`.
pub fn grid_min(n: f64, h: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let steps = (n / h).round() as usize;
    (0..=steps)
        .map(|k| (k as f64 * h).min(n))
        .map(|t| (t, f(t)))
        .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}
