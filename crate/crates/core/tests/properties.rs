mod common;

use common::*;
use cp_oracle::descriptor::FamilyDescriptor;
use cp_oracle::packing::{greedy_chain, is_maximal, reach, stratify, Direction};
use cp_oracle::risk::{self, g_hat, m_risk, metric_d, metric_d2};
use cp_oracle::rng::{derive_seed, SeedStream};
use cp_oracle::stats::{clopper_pearson, quadratic_form_sf};
use cp_oracle::{minimize_m, select_cp, verify_family};
use proptest::prelude::*;

fn case() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 1usize..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn families_keep_their_invariants((seed, n) in case(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let mut rng = rng(seed);
        let fam = random_family(&mut rng, n);
        prop_assert!(verify_family(&fam).passed);
        let nf = n as f64;
        let (a, b) = if u <= v { (u * nf, v * nf) } else { (v * nf, u * nf) };
        let la = fam.lambdas_at(a).unwrap();
        let lb = fam.lambdas_at(b).unwrap();
        prop_assert!((la.iter().sum::<f64>() - a).abs() <= 1e-9 * nf.max(1.0));
        for (x, y) in la.iter().zip(&lb) {
            prop_assert!(*x <= *y + 1e-15);
            prop_assert!((0.0..=1.0).contains(x));
        }
    }

    #[test]
    fn metric_is_a_pseudometric((seed, n) in case(), t in prop::array::uniform3(0.0f64..1.0)) {
        let mut rng = rng(seed);
        let fam = random_family(&mut rng, n);
        let inst = random_instance(&mut rng, n);
        let [a, b, c] = t.map(|x| x * n as f64);
        let dab = metric_d(&inst, &fam, a, b).unwrap();
        let dba = metric_d(&inst, &fam, b, a).unwrap();
        let dbc = metric_d(&inst, &fam, b, c).unwrap();
        let dac = metric_d(&inst, &fam, a, c).unwrap();
        prop_assert_eq!(dab, dba);
        prop_assert!(dac <= dab + dbc + 1e-12 * (1.0 + dac));
        prop_assert!((metric_d2(&inst, &fam, a, b).unwrap() - d2_direct(&inst, &fam, a, b)).abs() <= 1e-12 * (1.0 + dab * dab));
    }

    #[test]
    fn oracle_risk_is_a_lower_bound((seed, n) in case(), probes in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let mut rng = rng(seed);
        let fam = random_family(&mut rng, n);
        let inst = random_instance(&mut rng, n);
        let oracle = minimize_m(&inst, &fam).unwrap();
        prop_assert!(oracle.m_value >= 0.0);
        for p in probes {
            let m = m_risk(&inst, &fam, p * n as f64).unwrap();
            prop_assert!(oracle.m_value <= m + 1e-12 * m.max(1.0));
            prop_assert!((m - m_direct(&inst, &fam, p * n as f64)).abs() <= 1e-12 * m.max(1.0));
        }
    }

    #[test]
    fn cp_selection_is_a_global_minimum((seed, n) in case(), probes in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let mut rng = rng(seed);
        let fam = random_family(&mut rng, n);
        let inst = random_instance(&mut rng, n);
        let y: Vec<f64> = inst.rho().iter().zip(normals(&mut rng, n)).map(|(r, z)| r + inst.sigma() * z).collect();
        let theta = select_cp(inst.sigma2(), &fam, &y).unwrap();
        let best = g_hat(inst.sigma2(), &fam, theta, &y).unwrap();
        for p in probes {
            let other = g_hat_direct(inst.sigma2(), &fam, p * n as f64, &y);
            prop_assert!(best <= other + 1e-10 * other.abs().max(1.0));
        }
    }

    #[test]
    fn reach_lands_on_the_sphere((seed, n) in case(), from in 0.0f64..1.0, frac in 0.01f64..1.0, up in any::<bool>()) {
        let mut rng = rng(seed);
        let fam = random_family(&mut rng, n);
        let inst = random_instance(&mut rng, n);
        let nf = n as f64;
        let from = from * nf;
        let dir = if up { Direction::Up } else { Direction::Down };
        let end = if up { nf } else { 0.0 };
        let total = d2_direct(&inst, &fam, from, end);
        let target = frac * total;
        let q = reach(&inst, &fam, from, target, dir).unwrap();
        let got = d2_direct(&inst, &fam, from, q);
        prop_assert!(got <= target * (1.0 + 1e-9) + 1e-12);
        if q != end {
            prop_assert!((got - target).abs() <= 1e-8 * total.max(1e-300));
        }
    }

    #[test]
    fn greedy_chains_are_separated_and_maximal((seed, n) in case(), frac in 0.05f64..1.0) {
        let mut rng = rng(seed);
        let fam = random_family(&mut rng, n);
        let inst = random_instance(&mut rng, n);
        let nf = n as f64;
        let r = d2_direct(&inst, &fam, 0.0, nf).sqrt();
        prop_assume!(r > 0.0);
        let delta = frac * r;
        let chain = greedy_chain(&inst, &fam, delta, 0.0, nf).unwrap();
        for i in 0..chain.len() {
            for j in i + 1..chain.len() {
                prop_assert!(d2_direct(&inst, &fam, chain[i], chain[j]).sqrt() > delta * (1.0 - 1e-9));
            }
        }
        prop_assert!(is_maximal(&inst, &fam, delta, &chain, nf));
        prop_assert!(chain.len() as f64 <= 1.0 + (r / delta).powi(2));
    }

    #[test]
    fn strata_have_diameter_at_most_r((seed, n) in case(), frac in 0.05f64..1.0) {
        let mut rng = rng(seed);
        let fam = random_family(&mut rng, n);
        let inst = random_instance(&mut rng, n);
        let r = frac * d2_direct(&inst, &fam, 0.0, n as f64).sqrt();
        prop_assume!(r > 0.0);
        let theta_mu = minimize_m(&inst, &fam).unwrap().theta;
        for dir in [Direction::Up, Direction::Down] {
            let s = stratify(&inst, &fam, r, dir).unwrap();
            for (k, (lo, hi)) in s.strata().into_iter().enumerate() {
                prop_assert!(d2_direct(&inst, &fam, lo, hi).sqrt() <= r * (1.0 + 1e-9));
                let inner = if dir == Direction::Up { lo } else { hi };
                let d2 = d2_direct(&inst, &fam, inner, theta_mu);
                prop_assert!((d2 - k as f64 * r * r).abs() <= 1e-8 * (1.0 + d2));
            }
        }
    }

    #[test]
    fn weight_grows_with_distance((seed, n) in case(), t in 0.0f64..1.0, x in 0.0f64..5.0) {
        let mut rng = rng(seed);
        let fam = random_family(&mut rng, n);
        let inst = random_instance(&mut rng, n);
        let oracle = minimize_m(&inst, &fam).unwrap();
        let r = risk::r_x(x, oracle.m_value);
        prop_assume!(r > 0.0);
        let l = risk::weight_l(&inst, &fam, oracle.theta, t * n as f64, x, r).unwrap();
        prop_assert!(l >= r * x * (1.0 - 1e-12));
    }

    #[test]
    fn clopper_pearson_brackets_the_estimate(n in 1u64..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).floor() as u64;
        let (lo, hi) = clopper_pearson(k, n, 0.99);
        let p = k as f64 / n as f64;
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
    }

    #[test]
    fn quadratic_survival_is_monotone(eigs in prop::collection::vec(-3.0f64..3.0, 3..6), t in -5.0f64..5.0) {
        prop_assume!(eigs.iter().filter(|l| l.abs() > 0.05).count() >= 3);
        let a = quadratic_form_sf(&eigs, t).unwrap();
        let b = quadratic_form_sf(&eigs, t + 0.5).unwrap();
        prop_assert!(b <= a + 1e-9);
    }

    #[test]
    fn seeds_are_stable_and_label_separated(seed in any::<u64>(), index in 0u64..1000) {
        prop_assert_eq!(derive_seed(seed, "a"), derive_seed(seed, "a"));
        prop_assert_ne!(derive_seed(seed, "a"), derive_seed(seed, "b"));
        let s = SeedStream::new(seed, "oracle");
        prop_assert_eq!(s.standard_normals(index, 4), s.standard_normals(index, 4));
        prop_assert_ne!(s.standard_normals(index, 4), s.standard_normals(index + 1, 4));
    }
}

#[test]
fn descriptors_round_trip_through_json() {
    for text in [
        r#"{"type": "uniform-shrink", "n": 3}"#,
        r#"{"type": "projection", "n": 4}"#,
        r#"{"type": "ridge", "design_eigenvalues": [1.0, 0.5, 0.1], "knots": 64}"#,
        r#"{"type": "ridge-polynomial", "n": 5, "exponent": 2}"#,
        r#"{"n": 2, "knots": [0.0, 2.0], "lambdas": [[0.0, 0.0], [1.0, 1.0]]}"#,
    ] {
        let desc = FamilyDescriptor::from_json_str(text).unwrap();
        let back = FamilyDescriptor::from_json_str(&serde_json::to_string(&desc).unwrap()).unwrap();
        assert_eq!(desc, back);
        assert!(verify_family(&desc.build().unwrap()).passed);
    }
}
