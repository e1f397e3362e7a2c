use std::collections::BTreeMap;

use num_traits::{One, Zero};
use proptest::prelude::*;
use treedyn::measures::*;
use treedyn::{Evidence, Prefix, TreeShape};

fn bin() -> TreeShape {
    TreeShape::binary01()
}

fn coin() -> ProductMeasure {
    ProductMeasure::bernoulli(&bin(), LevelDistribution::binary(q(2, 3)).unwrap()).unwrap()
}

#[test]
fn cylinder_examples() {
    let haar = ProductMeasure::uniform(&bin());
    assert_eq!(haar.cylinder_measure(&Prefix(vec![0, 1, 1])), q(1, 8));
    assert_eq!(coin().cylinder_measure(&Prefix(vec![1, 0])), q(2, 9));
    assert_eq!(coin().cylinder_measure(&Prefix::root()), Q::one());
}

#[test]
fn affinity_examples() {
    let half = LevelDistribution::uniform(2);
    let quarter = LevelDistribution::binary(q(1, 4)).unwrap();
    assert_eq!(hellinger(&half, &half).unwrap(), 0.0);
    let brute = (0.5f64 * 0.25).sqrt() + (0.5f64 * 0.75).sqrt();
    let a = hellinger_affinity(&half, &quarter).unwrap();
    assert!((a - brute).abs() < 1e-15);
    assert!((a - 0.965926).abs() < 1e-6);
    assert!(LevelDistribution::binary(Q::one()).is_err());
}

#[test]
fn kakutani_examples() {
    let haar = ProductMeasure::uniform(&bin());
    let nu = ProductMeasure::bernoulli(&bin(), LevelDistribution::binary(q(1, 4)).unwrap()).unwrap();
    let r = kakutani_classify(&haar, &haar, 32, -40.0, true).unwrap();
    assert_eq!(r.verdict, KakutaniVerdict::Equivalent);
    let r = kakutani_classify(&haar, &nu, 32, -40.0, true).unwrap();
    assert_eq!((r.verdict, r.evidence), (KakutaniVerdict::Orthogonal, Evidence::ClosedForm));
    assert!(r.tail_affinities.iter().all(|a| (a - 0.965926).abs() < 1e-6));
    let beta = LevelDistribution::binary(q(1, 3)).unwrap();
    let a = ProductMeasure::with_overrides(&haar, BTreeMap::from([(3, beta.clone())]), None).unwrap();
    let b = ProductMeasure::with_overrides(&haar, BTreeMap::from([(5, beta)]), None).unwrap();
    assert_eq!(kakutani_classify(&a, &b, 32, -40.0, true).unwrap().verdict, KakutaniVerdict::Equivalent);
    assert_eq!(kakutani_classify(&a, &haar, 32, -40.0, true).unwrap().verdict, KakutaniVerdict::Equivalent);
}

#[test]
fn nonatomicity_examples() {
    let haar = ProductMeasure::uniform(&bin());
    let c = nonatomicity_certificate(&haar, 64, 1e-9);
    assert!(c.certified && c.evidence == Evidence::ClosedForm);
    assert_eq!(c.period_max_product, "1/2");
    assert_eq!(nonatomicity_certificate(&coin(), 64, 1e-9).witness_depth, Some(52));
}

#[test]
fn entropy_and_typical_sets() {
    assert!((entropy(&LevelDistribution::uniform(2)) - 2f64.ln()).abs() < 1e-15);
    let h = entropy(LevelDistribution::binary(q(2, 3)).as_ref().unwrap());
    assert!((h - (3f64.ln() - 2.0 / 3.0 * 2f64.ln())).abs() < 1e-15);
    let mu = coin();
    let masses: Vec<Q> = [8, 12, 16]
        .iter()
        .map(|&n| mu.set_measure(&sm_typical_set(&mu, n, 0.2, 1 << 16).unwrap()))
        .collect();
    assert!(masses.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn wlln_examples() {
    let s = bin();
    let b = wlln_set(&s, &q(1, 2), 2, &q(3, 10), 64).unwrap();
    assert_eq!(b, vec![Prefix(vec![0, 1]), Prefix(vec![1, 0])]);
    assert_eq!(wlln_set(&s, &q(1, 2), 4, &Q::one(), 64).unwrap().len(), 16);
}

#[test]
fn omega_words() {
    let zero = OmegaWord::constant(false);
    assert!(tail_equivalent(&zero, &OmegaWord::parse("1", false).unwrap()));
    assert!(!tail_equivalent(&zero, &OmegaWord::constant(true)));
    assert!(tail_equivalent(&zero, &zero));
    assert_eq!(OmegaWord::parse("10", true).unwrap().to_string(), "10(1)^∞");
    assert!(OmegaWord::parse("12", true).is_err());
}

#[test]
fn specs_round_trip() {
    let haar = ProductMeasure::uniform(&bin());
    let m = ProductMeasure::with_overrides(
        &haar,
        BTreeMap::from([(2, LevelDistribution::binary(q(1, 3)).unwrap())]),
        Some(OverrideTail {
            start: 11,
            period: 12,
            levels: BTreeMap::from([(0, LevelDistribution::binary(q(2, 3)).unwrap())]),
        }),
    )
    .unwrap();
    let text = serde_json::to_string(&m.to_spec()).unwrap();
    let back: MeasureSpec = serde_json::from_str(&text).unwrap();
    let m2 = back.build(&bin()).unwrap();
    for n in 1..=60 {
        assert_eq!(m.level(n), m2.level(n), "level {n}");
    }
    assert_eq!(m.level(23), &LevelDistribution::binary(q(2, 3)).unwrap());
}

proptest! {
    #[test]
    fn measures_are_additive(letters in prop::collection::vec(0u32..2, 0..10), p in 1i64..9) {
        let mu = ProductMeasure::bernoulli(&bin(), LevelDistribution::binary(q(p, 10)).unwrap()).unwrap();
        let y = Prefix(letters);
        let kids: Q = (0..2).map(|x| mu.cylinder_measure(&y.child(x))).sum();
        prop_assert_eq!(kids, mu.cylinder_measure(&y));
        prop_assert!(mu.cylinder_measure(&y) > Q::zero());
    }

    #[test]
    fn affinity_is_symmetric_and_bounded(a in 1i64..20, b in 1i64..20) {
        let (x, y) = (LevelDistribution::binary(q(a, 20)).unwrap(), LevelDistribution::binary(q(b, 20)).unwrap());
        let (ab, ba) = (hellinger_affinity(&x, &y).unwrap(), hellinger_affinity(&y, &x).unwrap());
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!(ab <= 1.0 + 1e-15 && ab > 0.0);
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), depth in 1usize..32) {
        let mu = coin();
        prop_assert_eq!(mu.sample(depth, seed), mu.sample(depth, seed));
    }
}
