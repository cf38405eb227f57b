mod common;

use std::collections::HashSet;

use common::*;
use idt::constructions::{dim_lower, no_md_smooth_instance, nodim_lower};
use idt::hypothesis::{default_c_grid, mass_between, monotone_report, subset_id, PreparedClass, BISECTION_TOL};
use idt::*;
use proptest::prelude::*;
use rand::Rng;

fn affine_class(w: Vec<f64>, lo: f64, hi: f64) -> ThresholdClass {
    ThresholdClass::new(ScoreFunction::affine(w), ThresholdRange::new(lo, hi).unwrap())
}

#[test]
fn optimal_rules_of_the_constructions() {
    let twins = no_md_smooth_instance(0.05).unwrap();
    let h1 = optimal_in_class(&twins.distribution, &affine_class(vec![1.0, 0.0], -1.0, 1.0), 0.4).unwrap();
    assert!(h1.threshold.abs() < 1e-8);
    assert!(matches!(optimal_in_class(&twins.distribution, &affine_class(vec![1.0, 0.0], -1.0, 1.0), 1.0), Err(IdtError::ParameterRange { .. })));

    let eps = 1.0 / 16.0;
    let nd = nodim_lower(eps, 0.1).unwrap();
    let h2 = optimal_in_class(&nd.distribution, &affine_class(vec![1.0, -2.0 * eps], -0.25, 0.25), nd.candidates[1]).unwrap();
    assert!(h2.threshold.abs() < 1e-3, "{}", h2.threshold);
}

#[test]
fn induced_posteriors_of_the_twin_squares() {
    let twins = no_md_smooth_instance(0.05).unwrap();
    let d = &twins.distribution;
    let h1 = affine_class(vec![1.0, 0.0], -1.0, 1.0);
    let h2 = affine_class(vec![0.0, 1.0], -1.0, 1.0);
    // q_{H1}(x) = 2/5 + (2/15)x₁ on the lower square
    assert!((induced_posterior(d, &h1, &[-0.5, -0.3]).unwrap() - 1.0 / 3.0).abs() < 1e-8);
    // q_{H2}(x) = 3/5 + (2/15)x₂ on the upper square
    assert!((induced_posterior(d, &h2, &[0.5, 0.5]).unwrap() - 2.0 / 3.0).abs() < 1e-8);
}

#[test]
fn induced_posterior_of_the_sign_family() {
    let sigma = [1, 1, 1, 1];
    let b = dim_lower(6, 1.0 / 128.0, 1.0, &sigma).unwrap();
    let fam = b.sigma_family.as_ref().unwrap();
    assert!((fam.loss_parameter(&sigma).unwrap() - 5.0 / 8.0).abs() < 1e-15);
    assert_eq!(fam.loss_parameter(&[1, -1, 1, -1]).unwrap(), 0.5);
    let class = fam.class(&sigma).unwrap();
    let x = [0.0, 1.0, 0.0, 0.0, 0.5];
    assert!((induced_posterior(&b.distribution, &class, &x).unwrap() - 0.5).abs() < 1e-8);
    assert!((b.agents[0].rule().unwrap().threshold - 0.5).abs() < 1e-8);
}

#[test]
fn sign_family_decisions_differ_only_inside_the_band() {
    let eps = 1.0 / 128.0;
    let band = 8.0 * eps * 2.0;
    let a = dim_lower(6, eps, 0.5, &[1, 1, 1, 1]).unwrap();
    let b = dim_lower(6, eps, 0.5, &[-1, 1, 1, 1]).unwrap();
    for k in 0..=200 {
        let t = k as f64 / 200.0;
        let x = [1.0, 0.0, 0.0, 0.0, t];
        let da = a.agents[0].decide(&a.distribution, &x).unwrap();
        let db = b.agents[0].decide(&b.distribution, &x).unwrap();
        if (t - 0.5).abs() > band {
            assert_eq!(da, db, "x5 = {t}");
        }
    }
    let inside = [1.0, 0.0, 0.0, 0.0, 0.5];
    assert_ne!(a.agents[0].decide(&a.distribution, &inside).unwrap(), b.agents[0].decide(&b.distribution, &inside).unwrap());
}

#[test]
fn vacuous_monotonicity_is_reported() {
    let d = uniform();
    let class = affine_class(vec![1.0], 10.0, 11.0);
    let xs: Vec<Vec<f64>> = (0..=10).map(|k| vec![k as f64 / 10.0]).collect();
    let grid: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    assert!(check_monotone(&d, &class, &grid, &xs).unwrap());
    assert!(monotone_report(&d, &class, &grid, &xs).unwrap().vacuous);
}

#[test]
fn min_disagreement_examples() {
    let twins = no_md_smooth_instance(0.05).unwrap();
    let h1 = twins.agents[0].rule().unwrap();
    assert_eq!(min_disagreement(&twins.distribution, h1, &affine_class(vec![0.0, 1.0], -1.0, 1.0)).unwrap(), 0.0);

    let (eps, p_c) = (1.0 / 16.0, 0.1);
    let nd = nodim_lower(eps, p_c).unwrap();
    let h2 = affine_class(vec![1.0, -2.0 * eps], -0.25, 0.25);
    for b1 in [0.0, 1.0 / 32.0, 1.0 / 16.0] {
        let rule = DecisionRule::new(ScoreFunction::affine(vec![1.0, 0.0]), b1);
        let md = min_disagreement(&nd.distribution, &rule, &h2).unwrap();
        let expect = 20.0 * p_c * (eps * (b1 + eps)).abs();
        assert!((md - expect).abs() <= 1e-9, "b1 = {b1}: {md} vs {expect}");
    }
}

#[test]
fn md_smoothness_examples() {
    let twins = no_md_smooth_instance(0.05).unwrap();
    let fam = twins.family.clone().unwrap();
    assert_eq!(md_smoothness_alpha(&twins.distribution, &fam, "H1", 0.4, &default_c_grid()).unwrap(), Alpha::Unbounded);

    let single = ClassFamily::explicit(vec![("only".into(), affine_class(vec![1.0], -1.0, 2.0))]).unwrap();
    assert_eq!(md_smoothness_alpha(&uniform(), &single, "only", 0.3, &default_c_grid()).unwrap(), Alpha::Finite(0.0));

    // x uniform on the unit square, q = 0.1 + 0.8 x₁. Home subset {1}; {1,2}
    // reproduces it exactly and {2} is constant, so its best rule is all-or-
    // nothing. The induced posterior has density M = 1.25 and at c = 7/60
    // the separation is ζ = P(q < c) = 1/48, giving M/ζ = 60.
    let d = PiecewiseDistribution::new(
        2,
        vec![Piece::rect([0.0, 0.0], [1.0, 1.0], 1.0, AffinePosterior::new(0.1, vec![0.8, 0.0]))],
    )
    .unwrap();
    let fam = ClassFamily::feature_subsets(2, 2).unwrap();
    let c = 7.0 / 60.0;
    let other = fam.class("{2}").unwrap();
    let home = optimal_in_class(&d, &fam.class("{1}").unwrap(), c).unwrap();
    assert!((min_disagreement(&d, &home, &other).unwrap() - 1.0 / 48.0).abs() < 1e-12);
    match md_smoothness_alpha(&d, &fam, "{1}", c, &default_c_grid()).unwrap() {
        Alpha::Finite(a) => assert!((a - 60.0).abs() <= 1e-6, "{a}"),
        Alpha::Unbounded => panic!("expected a finite constant"),
    }
}

#[test]
fn vc_bound_examples() {
    assert_eq!(feature_subset_vc_bound(1, 1).unwrap(), 3);
    assert_eq!(feature_subset_vc_bound(15, 2).unwrap(), 17);
    assert_eq!(feature_subset_vc_bound(3, 3).unwrap(), 13);
    assert!(feature_subset_vc_bound(2, 3).is_err());
}

#[test]
fn enumeration_order_and_guard() {
    let ids = |n, s| -> Vec<String> {
        enumerate_family(&ClassFamily::feature_subsets(n, s).unwrap()).unwrap().into_iter().map(|(id, _)| id).collect()
    };
    assert_eq!(ids(2, 1), ["{1}", "{2}"]);
    assert_eq!(ids(3, 2), ["{1}", "{2}", "{3}", "{1,2}", "{1,3}", "{2,3}"]);
    assert!(matches!(enumerate_family(&ClassFamily::FeatureSubsets { n: 40, s: 20 }), Err(IdtError::FamilyTooLarge { .. })));
    assert_eq!(subset_id(&[2, 5]), "{2,5}");
}

/// Random law on `count` atoms of `{0,1}^n` with random posteriors.
fn binary_atoms(n: usize, count: usize, seed: u64) -> PiecewiseDistribution {
    let mut r = rng(seed);
    let mut seen = HashSet::new();
    let mut locs = Vec::new();
    while locs.len() < count {
        let bits: Vec<u8> = (0..n).map(|_| r.gen_range(0..2)).collect();
        if seen.insert(bits.clone()) {
            locs.push(bits);
        }
    }
    let w = 1.0 / count as f64;
    let pieces = locs
        .into_iter()
        .map(|b| Piece::point(b.iter().map(|&v| f64::from(v)).collect(), w, AffinePosterior::constant(r.gen_range(0.0..1.0), n)))
        .collect();
    PiecewiseDistribution::new(n, pieces).unwrap()
}

/// Distinct labelings of `points` produced by every threshold class of the family.
fn labelings(d: &PiecewiseDistribution, fam: &ClassFamily, points: &[Vec<f64>]) -> HashSet<Vec<bool>> {
    let mut out = HashSet::new();
    for (_, class) in enumerate_family(fam).unwrap() {
        let g: Vec<f64> = points.iter().map(|x| class.score.eval(d, x).unwrap()).collect();
        let mut thresholds = g.clone();
        thresholds.push(f64::INFINITY);
        for b in thresholds {
            out.insert(g.iter().map(|&v| v >= b).collect());
        }
    }
    out
}

#[test]
fn seventeen_points_are_not_shattered_by_pairs_of_fifteen_features() {
    let d = binary_atoms(15, 40, 17);
    let fam = ClassFamily::feature_subsets(15, 2).unwrap();
    let points: Vec<Vec<f64>> = d.pieces().iter().take(17).map(|p| p.extreme_points()[0].clone()).collect();
    assert!(labelings(&d, &fam, &points).len() < 1 << 17);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bisection_limits_agree_and_decisions_follow_the_induced_posterior(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = random_distribution(&mut r);
        let class = ThresholdClass::unbounded(random_score(&mut r));
        let p = PreparedClass::new(&d, &class).unwrap();
        for (x, _) in d.sample(seed, 5) {
            let s = class.score.eval(&d, &x).unwrap();
            let (lo, hi) = p.flip_bracket(s);
            prop_assert!(hi - lo <= 2.0 * BISECTION_TOL);
            let q = p.induced_posterior_at_score(s).unwrap();
            for _ in 0..20 {
                let c: f64 = r.gen_range(0.001..0.999);
                if (q - c).abs() > 1e-6 {
                    let h = optimal_in_class(&d, &class, c).unwrap();
                    prop_assert_eq!(h.apply(&d, &x).unwrap(), u8::from(q > c));
                }
            }
        }
    }

    #[test]
    fn class_members_have_zero_min_disagreement(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = random_distribution(&mut r);
        let lo = r.gen_range(-1.0..0.0);
        let class = ThresholdClass::new(random_score(&mut r), ThresholdRange::new(lo, lo + 1.0).unwrap());
        let b = r.gen_range(lo..lo + 1.0);
        prop_assert_eq!(min_disagreement(&d, &class.rule(b), &class).unwrap(), 0.0);
        let other = ThresholdClass::unbounded(random_score(&mut r));
        prop_assert!(min_disagreement(&d, &class.rule(b), &other).unwrap() >= 0.0);
    }

    #[test]
    fn posterior_between_nested_rules_is_sandwiched(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = random_distribution(&mut r);
        let a: f64 = r.gen_range(0.02..0.98);
        let b: f64 = r.gen_range(0.02..0.98);
        let (c, c2) = (a.min(b), a.max(b));
        let class = ThresholdClass::unbounded(random_score(&mut r));
        let p = PreparedClass::new(&d, &class).unwrap();
        let (h, h2) = (p.optimal(c), p.optimal(c2));
        let (mass, pos) = mass_between(&d, &h, &h2).unwrap();
        prop_assert!(mass_between(&d, &h2, &h).unwrap().0 <= 1e-12, "rules are not nested");
        if mass > 1e-9 {
            let cond = pos / mass;
            prop_assert!(cond >= c - 1e-9 && cond <= c2 + 1e-9, "{} not in [{}, {}]", cond, c, c2);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn brute_force_shattering_stays_below_the_bound(seed in any::<u64>(), n in 1usize..=4, s in 1usize..=2) {
        let s = s.min(n);
        let count = 1usize << n;
        let d = binary_atoms(n, count, seed);
        let fam = ClassFamily::feature_subsets(n, s).unwrap();
        let atoms: Vec<Vec<f64>> = d.pieces().iter().map(|p| p.extreme_points()[0].clone()).collect();
        let mut largest = 0;
        for mask in 1u32..(1 << count) {
            let set: Vec<Vec<f64>> = (0..count).filter(|i| mask >> i & 1 == 1).map(|i| atoms[i].clone()).collect();
            if set.len() > largest && labelings(&d, &fam, &set).len() == 1 << set.len() {
                largest = set.len();
            }
        }
        prop_assert!(largest <= feature_subset_vc_bound(n, s).unwrap());
    }
}
