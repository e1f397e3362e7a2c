use num_traits::{One, Zero};
use proptest::prelude::*;
use treedyn::cocycle::*;
use treedyn::constructions::{factorial_element, grigorchuk};
use treedyn::measures::{q, LevelDistribution, ProductMeasure, Q};
use treedyn::{Automorphism, BoundaryPoint, Evidence, GeneratedGroup, Prefix, TreeShape};

fn bin() -> TreeShape {
    TreeShape::binary01()
}

fn coin() -> ProductMeasure {
    ProductMeasure::bernoulli(&bin(), LevelDistribution::binary(q(2, 3)).unwrap()).unwrap()
}

fn element(g: &GeneratedGroup, letters: &[usize]) -> Automorphism {
    g.evaluate(&g.word(letters.iter().map(|&l| (l, 1))))
}

fn point() -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
    (prop::collection::vec(0u32..2, 0..12), prop::collection::vec(0u32..2, 1..4))
}

#[test]
fn rn_of_a_matches_cylinder_ratio() {
    let g = grigorchuk();
    let a = g.generator("a").unwrap();
    let mu = coin();
    let x = BoundaryPoint::new(&bin(), vec![0, 1, 1, 0, 1, 0], vec![1]).unwrap();
    let v = rn_derivative(a, &mu, &x, 64).unwrap();
    assert_eq!(v.value, q(1, 2));
    let y = x.project(6);
    assert_eq!(mu.cylinder_measure(&a.apply_prefix(&y)) / mu.cylinder_measure(&y), q(1, 2));
    assert!((v.to_f64() - 0.5).abs() < 1e-15);
}

#[test]
fn identity_and_haar_give_one() {
    let g = grigorchuk();
    let id = Automorphism::identity(&bin());
    let haar = ProductMeasure::uniform(&bin());
    let x = BoundaryPoint::new(&bin(), vec![1, 0, 0], vec![0, 1]).unwrap();
    let v = rn_derivative(&id, &coin(), &x, 64).unwrap();
    assert_eq!((v.value, v.depth), (Q::one(), 0));
    for w in ["a", "b", "c", "d", "a b c d a b", "a d a c a b"] {
        let e = g.evaluate(&g.parse_word(w).unwrap());
        assert_eq!(rn_derivative(&e, &haar, &x, 64).unwrap().value, Q::one(), "{w}");
    }
}

#[test]
fn chain_check_examples() {
    let g = grigorchuk();
    let id = Automorphism::identity(&bin());
    let c = cocycle_chain_check(&id, &id, &coin(), 20, 0, 64).unwrap();
    assert!(c.holds);
    assert_eq!(c.worst_defect, 0.0);
    let (a, b) = (g.generator("a").unwrap(), g.generator("b").unwrap());
    let c = cocycle_chain_check(a, b, &coin(), 100, 7, 64).unwrap();
    assert!(c.holds && c.witness.is_none());
    assert_eq!(c.evidence, Evidence::Exact);
    let inv = a.inverse();
    assert!(cocycle_chain_check(a, &inv, &coin(), 50, 1, 64).unwrap().holds);
}

#[test]
fn factorial_f2() {
    let f = factorial_element();
    let haar = ProductMeasure::uniform(&bin());
    let s = f_sets(&f.element, 2, FVariant::Plain, Some(&haar), None, 1 << 12).unwrap();
    assert_eq!(s.members, vec![Prefix(vec![0, 0]), Prefix(vec![1, 0])]);
    assert_eq!(s.measure, Some(q(1, 2)));
}

#[test]
fn f_sets_of_b_vanish_on_residue_one() {
    let g = grigorchuk();
    let b = g.generator("b").unwrap();
    let shape = bin();
    for n in [1, 4, 7] {
        let s = f_sets(b, n, FVariant::Plain, None, None, 1 << 12).unwrap();
        assert!(s.members.is_empty(), "n = {n}");
    }
    for n in 1..=6 {
        let s = f_sets(b, n, FVariant::Plain, None, None, 1 << 12).unwrap();
        let brute: Vec<Prefix> = shape
            .enumerate_level(n, 1 << 12)
            .unwrap()
            .into_iter()
            .filter(|y| !b.section(y).root_perm().is_identity())
            .collect();
        assert_eq!(s.members, brute, "n = {n}");
    }
}

#[test]
fn identity_has_empty_sets() {
    let id = Automorphism::identity(&bin());
    for n in 1..=5 {
        for v in [FVariant::Plain, FVariant::Plus, FVariant::Bullet] {
            let s = f_sets(&id, n, v, Some(&coin()), None, 1 << 12).unwrap();
            assert!(s.members.is_empty());
            assert_eq!(s.measure, Some(Q::zero()));
        }
    }
    let r = finitarity_report(&id, &coin(), &FinitarityOptions::default()).unwrap();
    assert!(r.f_partial.iter().chain(&r.plus_partial).all(|&x| x == 0.0));
    assert!(r.delta_sums.iter().all(|d| d.partial.iter().all(|&x| x == 0.0)));
    let v = r.verdict(FinitarityClass::Finitary).unwrap();
    assert_eq!(v.holds, Some(true));
}

#[test]
fn plus_requires_a_measure() {
    let id = Automorphism::identity(&bin());
    assert!(f_sets(&id, 2, FVariant::Plus, None, None, 16).is_err());
}

#[test]
fn factorial_report() {
    let f = factorial_element();
    let haar = ProductMeasure::uniform(&bin());
    let opts = FinitarityOptions {
        horizon: 8,
        claims: treedyn::constructions::FactorialElement::claims(&haar),
        ..Default::default()
    };
    let r = finitarity_report(&f.element, &haar, &opts).unwrap();
    let w = r.verdict(FinitarityClass::WSubexponentiallyBounded).unwrap();
    assert_eq!((w.holds, w.evidence), (Some(true), Evidence::ClosedForm));
    let p = r.verdict(FinitarityClass::PurelyMuFinitary).unwrap();
    assert_eq!(p.holds, Some(false));
    for row in &r.rows {
        assert_eq!(row.bullet_measure, Some(Q::one()), "n = {}", row.n);
        let expect = if row.n == 2 || row.n == 6 { 1usize << if row.n == 2 { 1 } else { 2 } } else { 0 };
        assert_eq!(row.f_count, expect, "n = {}", row.n);
    }
    assert!(r.f_partial.windows(2).all(|w| w[0] <= w[1]));
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.starts_with("n,f_count"));
}

#[test]
fn reports_are_reproducible() {
    let g = grigorchuk();
    let opts = FinitarityOptions {
        horizon: 10,
        ..Default::default()
    };
    let b = g.generator("b").unwrap();
    let r1 = finitarity_report(b, &coin(), &opts).unwrap().to_csv();
    let r2 = finitarity_report(b, &coin(), &opts).unwrap().to_csv();
    assert_eq!(r1, r2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rn_inverse_product_is_one(letters in prop::collection::vec(0usize..4, 1..8), (head, tail) in point()) {
        let g = grigorchuk();
        let e = element(&g, &letters);
        let x = BoundaryPoint::new(&bin(), head, tail).unwrap();
        let mu = coin();
        let gx = e.apply_point(&x, 64).unwrap();
        let p = rn_derivative(&e, &mu, &x, 64).unwrap().value * rn_derivative(&e.inverse(), &mu, &gx, 64).unwrap().value;
        prop_assert_eq!(p, Q::one());
    }

    #[test]
    fn rn_is_a_cylinder_ratio(letters in prop::collection::vec(0usize..4, 1..8), (head, tail) in point()) {
        let g = grigorchuk();
        let e = element(&g, &letters);
        let x = BoundaryPoint::new(&bin(), head, tail).unwrap();
        let mu = coin();
        let v = rn_derivative(&e, &mu, &x, 64).unwrap();
        prop_assert!(v.value > Q::zero());
        let y = x.project(v.depth);
        prop_assert_eq!(mu.cylinder_measure(&e.apply_prefix(&y)) / mu.cylinder_measure(&y), v.value);
    }

    #[test]
    fn rn_is_multiplicative(
        l1 in prop::collection::vec(0usize..4, 1..6),
        l2 in prop::collection::vec(0usize..4, 1..6),
        (head, tail) in point(),
    ) {
        let g = grigorchuk();
        let (a, b) = (element(&g, &l1), element(&g, &l2));
        let x = BoundaryPoint::new(&bin(), head, tail).unwrap();
        let mu = coin();
        let bx = b.apply_point(&x, 64).unwrap();
        let lhs = rn_derivative(&a.compose(&b), &mu, &x, 64).unwrap().value;
        let rhs = rn_derivative(&a, &mu, &bx, 64).unwrap().value * rn_derivative(&b, &mu, &x, 64).unwrap().value;
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn f_measure_is_bounded_by_count(letters in prop::collection::vec(0usize..4, 1..6), n in 1usize..8) {
        let g = grigorchuk();
        let e = element(&g, &letters);
        let mu = coin();
        let s = f_sets(&e, n, FVariant::Plain, Some(&mu), None, 1 << 12).unwrap();
        let bound = Q::from_integer(s.cardinality().into()) * num_traits::pow(q(2, 3), n);
        prop_assert!(s.measure.unwrap() <= bound);
        let plus = f_sets(&e, n, FVariant::Plus, Some(&mu), None, 1 << 12).unwrap();
        prop_assert!(plus.members.iter().all(|y| s.members.contains(y)));
    }
}
