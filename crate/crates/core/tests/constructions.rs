use std::sync::OnceLock;

use num_traits::{One, Zero};
use treedyn::cocycle::{f_sets, FVariant};
use treedyn::constructions::*;
use treedyn::measures::*;
use treedyn::{Error, GeneratedGroup, Prefix, TreeShape};

fn bin() -> TreeShape {
    TreeShape::binary01()
}

fn coin() -> ProductMeasure {
    ProductMeasure::bernoulli(&bin(), LevelDistribution::binary(q(2, 3)).unwrap()).unwrap()
}

fn betas() -> [LevelDistribution; 2] {
    [LevelDistribution::binary(q(1, 3)).unwrap(), LevelDistribution::binary(q(2, 3)).unwrap()]
}

fn family() -> &'static (GeneratedGroup, MeasureFamily) {
    static F: OnceLock<(GeneratedGroup, MeasureFamily)> = OnceLock::new();
    F.get_or_init(|| {
        let g = grigorchuk();
        let f = build_measure_family(&g, betas(), &FamilyOptions::default()).unwrap();
        (g, f)
    })
}

#[test]
fn grigorchuk_relations() {
    let g = grigorchuk();
    for w in ["a a", "b b", "c c", "d d", "b c d"] {
        let e = g.evaluate(&g.parse_word(w).unwrap());
        assert!(e.is_identity_exact().unwrap(), "{w}");
    }
    assert!(!g.evaluate(&g.parse_word("a b").unwrap()).is_identity_exact().unwrap());
    let ones = Prefix(vec![1; 30]);
    for name in ["b", "c", "d"] {
        assert_eq!(g.generator(name).unwrap().apply_prefix(&ones), ones);
    }
}

#[test]
fn parity_group_examples() {
    let p = parity_group(DEFAULT_PARITY_SPAN);
    for (name, e) in p.names().iter().zip(p.generators()) {
        let (i, j) = name[1..].split_once('_').unwrap();
        let (i, j): (usize, usize) = (i.parse().unwrap(), j.parse().unwrap());
        let image = e.apply_prefix(&Prefix(vec![0; DEFAULT_PARITY_SPAN]));
        let ones: Vec<usize> = (0..DEFAULT_PARITY_SPAN).filter(|&k| image.0[k] == 1).map(|k| k + 1).collect();
        assert_eq!(ones, vec![i, j]);
        assert!(!e.may_act_at(j));
    }
    assert!(p.minimality_check(4, 1 << 12).unwrap().is_transitive());
    let blocks = p.level_orbit_partition(4, &in_window(&p, 4), 1 << 12).unwrap();
    assert_eq!(blocks.len(), 2);
    assert!(blocks.iter().all(|b| b.len() == 8));
}

#[test]
fn orthogonal_pair_example() {
    let haar = ProductMeasure::uniform(&bin());
    let nu = ProductMeasure::bernoulli(&bin(), LevelDistribution::binary(q(1, 4)).unwrap()).unwrap();
    let e = orthogonal_pair_element(&haar, &nu, 3, DEFAULT_SEPARATION_DEPTH_CAP, DEFAULT_LR_STATE_CAP).unwrap();
    assert_eq!(e.depths(), vec![2, 7, 23]);
    for s in &e.stages {
        let eps = Q::new(1.into(), (num_bigint::BigInt::one()) << s.k);
        assert!(s.mu_mass > Q::one() - &eps && s.nu_mass < eps, "stage {}", s.k);
    }
    let first = &e.stages[0];
    let f = f_sets(&e.element, first.depth, FVariant::Plain, Some(&nu), None, 1 << 12).unwrap();
    assert_eq!(f.measure.as_ref(), Some(&first.nu_mass));
    let f = f_sets(&e.element, first.depth, FVariant::Plain, Some(&haar), None, 1 << 12).unwrap();
    assert_eq!(f.measure.as_ref(), Some(&first.mu_mass));
    let err = orthogonal_pair_element(&haar, &haar, 1, 16, 64).unwrap_err();
    assert!(matches!(err, Error::SeparationNotFound(_)));
}

#[test]
fn separating_element_example() {
    let theta = q(1, 2);
    let s = separating_element(&theta, 3, DEFAULT_WLLN_DEPTH_CAP).unwrap();
    assert_eq!(s.depths(), vec![13, 398, 1417]);
    for st in &s.stages {
        let target = Q::one() - Q::new(1.into(), ((st.k * st.k) as i64).into());
        assert!(st.theta_mass > target && st.net_min_mass > target);
        assert!(s.f_measure(&theta, st.k) < Q::one() - &target);
        assert!(s.f_measure(&st.net_argmin, st.k) > target);
    }
    assert!(s.bands_disjoint(1) && s.bands_disjoint(2));
    assert!(separating_element(&Q::one(), 1, 64).is_err());
}

#[test]
fn factorial_sets() {
    let f = factorial_element();
    let haar = ProductMeasure::uniform(&bin());
    for n in 1..=12 {
        let s = f_sets(&f.element, n, FVariant::Plain, Some(&haar), None, 1 << 14).unwrap();
        match n {
            2 => assert_eq!((s.cardinality(), s.measure.unwrap()), (2, q(1, 2))),
            6 => assert_eq!((s.cardinality(), s.measure.unwrap()), (4, q(1, 16))),
            _ => assert_eq!(s.cardinality(), 0, "n = {n}"),
        }
    }
    assert_eq!(FactorialElement::active_levels(24), vec![2, 6, 24]);
    assert_eq!(FactorialElement::f_measure(&haar, 3), q(1, 16));
}

#[test]
fn typical_bands() {
    let sm = sm_elements(&coin(), (8, 16), DEFAULT_BAND_DEPTH_CAP).unwrap();
    assert!((sm.entropy - 0.6365).abs() < 1e-3);
    for (m, mass, floor, _) in sm.band_masses((8, 16)).unwrap() {
        assert!(mass >= floor, "m = {m}");
    }
    let p = sm.bifurcation_probe(8, (8, 16), 0.05).unwrap();
    assert!(p.above_sums_increase && p.below_terms_decay);
    let haar = ProductMeasure::uniform(&bin());
    assert!(sm_elements(&haar, (8, 16), DEFAULT_BAND_DEPTH_CAP).is_err());
}

#[test]
fn dissipative_example() {
    let d = dissipative_group(&coin(), 3, DEFAULT_BLOCK_CAP).unwrap();
    assert_eq!(&d.schedule.depths[..4], &[1, 11, 29, 55]);
    assert!(d.mass_lower_bound() > Q::zero());
    for k in 0..=3 {
        assert!(d.block_flip_disjoint(k).unwrap(), "block {k}");
    }
    let w = d.wandering_check(2, 1 << 12).unwrap();
    assert!(w.disjoint && w.checked > 0);
    let flipped = ProductMeasure::bernoulli(&bin(), LevelDistribution::binary(q(1, 3)).unwrap()).unwrap();
    assert!(dissipative_group(&flipped, 2, DEFAULT_BLOCK_CAP).is_err());
}

#[test]
fn nonergodic_examples() {
    let m = conservative_nonergodic_group(&coin(), 3, DEFAULT_BLOCK_CAP).unwrap();
    assert!(m.h_invariance());
    assert!(m.disjointness(2, 1 << 12).unwrap().disjoint);
    let pair = m.invariant_pair(2, 1 << 12).unwrap();
    assert!(pair.disjoint && pair.mass_a > Q::zero() && pair.mass_b > Q::zero());
    let rn = m.rn_flip_check(50, 0).unwrap();
    assert!(rn.holds && rn.evaluations > 0);
    assert_eq!(rn.bound, q(1, 2));

    let w = weakly_branch_nonergodic_group(&coin(), 2, DEFAULT_BLOCK_CAP).unwrap();
    assert!(w.localized && w.h_invariance());
    assert!(w.weakly_branch_check(1, 1 << 12).unwrap().holds);
    assert!(w.rn_flip_check(50, 1).unwrap().holds);
}

#[test]
fn family_build() {
    let (_, f) = family();
    assert_eq!(f.levels, vec![2, 11, 23]);
    let constants: Vec<Q> = f.stages.iter().map(|s| s.constant_q()).collect();
    assert_eq!(constants, vec![q(9, 10), q(99, 100), q(999, 1000)]);
    assert_eq!(f.stages[1].mass_ratio_bound, "255/256");
    assert_eq!(f.stages[2].mass_ratio_bound, "1023/1024");
    assert_eq!(f.level_index(4), 35);
}

#[test]
fn family_verifies_for_tail_words() {
    let (g, f) = family();
    for (word, tail) in [("", false), ("", true), ("1", false)] {
        let mu = f.measure(&OmegaWord::parse(word, tail).unwrap()).unwrap();
        let r = verify_compatibility(g, &mu, f, &[1, 2, 3], &VerifyOptions::default()).unwrap();
        assert_eq!(r.stages.len(), 3);
        for s in &r.stages {
            assert!(s.min_mass_ratio_f64 > 1.0 - 10f64.powi(-(s.stage as i32)), "{word}/{tail} stage {}", s.stage);
        }
        assert!(r.stages[0].exhaustive && !r.stages[2].exhaustive);
    }
    let haar = ProductMeasure::uniform(&bin());
    assert!(verify_compatibility(g, &haar, f, &[1, 2], &VerifyOptions::default()).is_ok());
}

#[test]
fn family_negative_controls() {
    let (g, f) = family();
    let mu = f.measure(&OmegaWord::constant(false)).unwrap();
    let mut bad = f.clone();
    bad.stages[0].exclusions.push(Exclusion {
        from: vec![0],
        to: vec![1],
        cylinder: vec![],
    });
    let err = verify_compatibility(g, &mu, &bad, &[1], &VerifyOptions::default()).unwrap_err();
    assert!(matches!(err, Error::ConditionFailed { .. }), "{err:?}");
    let mut bad = f.clone();
    bad.stages[1].transporters.swap(0, 1);
    let err = verify_compatibility(g, &mu, &bad, &[2], &VerifyOptions::default()).unwrap_err();
    assert!(matches!(err, Error::ConditionFailed { .. }));
    assert!(verify_compatibility(g, &mu, f, &[4], &VerifyOptions::default()).is_err());
}

#[test]
fn family_round_trips_through_json() {
    let (_, f) = family();
    let text = serde_json::to_string(f).unwrap();
    let back: MeasureFamily = serde_json::from_str(&text).unwrap();
    assert_eq!(back.levels, f.levels);
    let w = OmegaWord::parse("101", false).unwrap();
    let (a, b) = (f.measure(&w).unwrap(), back.measure(&w).unwrap());
    for n in 1..=40 {
        assert_eq!(a.level(n), b.level(n));
    }
}

#[test]
fn family_measures_agree_off_the_index_set() {
    let (_, f) = family();
    let a = f.measure(&OmegaWord::constant(false)).unwrap();
    let b = f.measure(&OmegaWord::parse("000", true).unwrap()).unwrap();
    for seed in 0..20 {
        let y = a.sample(f.level_index(4) - 1, seed);
        assert_eq!(a.cylinder_measure(&y), b.cylinder_measure(&y));
    }
    let deep = Prefix(vec![0; f.level_index(4)]);
    assert_ne!(a.cylinder_measure(&deep), b.cylinder_measure(&deep));
}

#[test]
fn family_kakutani_pattern() {
    let (_, f) = family();
    let m = |w: &str, t: bool| f.measure(&OmegaWord::parse(w, t).unwrap()).unwrap();
    let haar = ProductMeasure::uniform(&bin());
    let r = kakutani_classify(&m("", false), &m("", true), 64, -40.0, true).unwrap();
    assert_eq!(r.verdict, KakutaniVerdict::Orthogonal);
    let r = kakutani_classify(&m("", false), &m("110", false), 64, -40.0, true).unwrap();
    assert_eq!(r.verdict, KakutaniVerdict::Equivalent);
    let r = kakutani_classify(&m("01", true), &haar, 64, -40.0, true).unwrap();
    assert_eq!(r.verdict, KakutaniVerdict::Orthogonal);
}

#[test]
fn family_rejects_close_or_unbounded_inputs() {
    let g = grigorchuk();
    let close = [LevelDistribution::binary(q(1, 2)).unwrap(), LevelDistribution::binary(q(51, 100)).unwrap()];
    assert!(matches!(
        build_measure_family(&g, close, &FamilyOptions::default()),
        Err(Error::ConditionFailed { .. })
    ));
    let opts = FamilyOptions {
        depth_cap: 8,
        ..Default::default()
    };
    assert!(build_measure_family(&g, betas(), &opts).is_err());
}
