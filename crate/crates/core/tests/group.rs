use std::collections::HashSet;

use treedyn::constructions::{grigorchuk, in_window, parity_group};
use treedyn::group::{supported_in, DEFAULT_DEDUP_DEPTH};
use treedyn::{Automorphism, GeneratedGroup, Minimality, Prefix, TreeShape};

const CAP: usize = 1 << 16;

#[test]
fn ball_sizes() {
    let g = grigorchuk();
    assert_eq!(g.ball(0, DEFAULT_DEDUP_DEPTH, CAP).unwrap().len(), 1);
    let b1 = g.ball(1, DEFAULT_DEDUP_DEPTH, CAP).unwrap();
    let words: Vec<String> = b1.iter().map(|e| g.format_word(&e.word)).collect();
    assert_eq!(words, ["1", "a", "b", "c", "d"]);

    let p = parity_group(3);
    let ball = p.ball(2, DEFAULT_DEDUP_DEPTH, CAP).unwrap();
    let alphabet: Vec<_> = p.generators().to_vec();
    let mut tables = HashSet::new();
    tables.insert(Automorphism::identity(p.shape()).level_projection(6, CAP).unwrap());
    for x in &alphabet {
        tables.insert(x.level_projection(6, CAP).unwrap());
        for y in &alphabet {
            tables.insert(x.compose(y).level_projection(6, CAP).unwrap());
        }
    }
    assert_eq!(ball.len(), tables.len());
    assert_eq!(ball.len(), 4);
}

#[test]
fn ball_closed_under_inverses() {
    let g = grigorchuk();
    let ball = g.ball(4, DEFAULT_DEDUP_DEPTH, CAP).unwrap();
    for e in &ball {
        let inv = e.element.inverse();
        assert!(ball.iter().any(|f| f.element.equal_exact(&inv).unwrap()));
    }
}

#[test]
fn minimality_levels() {
    let g = grigorchuk();
    let p = parity_group(6);
    for group in [&g, &p] {
        for n in 1..=5 {
            let m = group.minimality_check(n, CAP).unwrap();
            let Minimality::Transitive { witnesses } = m else { panic!("level {n} not transitive") };
            let levels = group.shape().enumerate_level(n, CAP).unwrap();
            for (y, w) in levels.iter().zip(&witnesses) {
                assert_eq!(&group.evaluate(w).apply_prefix(&levels[0]), y);
            }
            let (dim, uniform) = group.invariant_distribution_dimension(n, CAP).unwrap();
            assert_eq!(dim, 1);
            assert!(uniform);
        }
    }
    let trivial =
        GeneratedGroup::new(&TreeShape::binary01(), vec![("e".into(), Automorphism::identity(&TreeShape::binary01()))])
            .unwrap();
    match trivial.minimality_check(1, CAP).unwrap() {
        Minimality::NotTransitive { orbits } => assert_eq!(orbits, vec![vec![0], vec![1]]),
        _ => panic!(),
    }
    assert_eq!(trivial.invariant_distribution_dimension(2, CAP).unwrap().0, 4);
}

#[test]
fn transitivity_descends() {
    let g = grigorchuk();
    assert!(g.minimality_check(7, CAP).unwrap().is_transitive());
    for k in 1..7 {
        assert!(g.minimality_check(k, CAP).unwrap().is_transitive());
    }
}

#[test]
fn transporters() {
    let g = grigorchuk();
    let y = Prefix(vec![0, 1, 1]);
    assert!(g.find_transporter(&y, &y, CAP).unwrap().is_empty());
    let w = g.find_transporter(&Prefix(vec![0]), &Prefix(vec![1]), CAP).unwrap();
    assert_eq!(g.format_word(&w), "a");
    let shape = g.shape().clone();
    for y in shape.enumerate_level(3, CAP).unwrap() {
        for z in shape.enumerate_level(3, CAP).unwrap() {
            let w = g.find_transporter(&y, &z, CAP).unwrap();
            assert_eq!(g.evaluate(&w).apply_prefix(&y), z);
        }
    }
    let trivial = GeneratedGroup::new(&shape, vec![("e".into(), Automorphism::identity(&shape))]).unwrap();
    assert!(trivial.find_transporter(&Prefix(vec![0]), &Prefix(vec![1]), CAP).is_err());
}

#[test]
fn rigid_stabilizers() {
    let g = grigorchuk();
    let o = Prefix(vec![1]);
    let els = g.rigid_stabilizer_elements(&o, 6, 6, CAP).unwrap();
    assert!(!els.is_empty());
    for (_, e) in &els {
        assert!(e.support_level(6, CAP).unwrap().iter().all(|y| o.is_prefix_of(y)));
    }
    // the identity never qualifies
    assert!(!supported_in(&Automorphism::identity(g.shape()), &o, CAP).unwrap());

    let p = parity_group(6);
    assert!(p.rigid_stabilizer_elements(&Prefix(vec![1]), 1, 4, CAP).unwrap().is_empty());
}

#[test]
fn orbit_partitions() {
    let p = parity_group(6);
    let window = in_window(&p, 4);
    let blocks = p.level_orbit_partition(4, &window, CAP).unwrap();
    assert_eq!(blocks.len(), 2);
    let shape = p.shape().clone();
    for b in &blocks {
        let parities: HashSet<u32> =
            b.iter().map(|&i| shape.prefix_at(4, i).letters().iter().sum::<u32>() % 2).collect();
        assert_eq!(parities.len(), 1);
    }
    let all: Vec<usize> = (0..p.generators().len()).collect();
    assert_eq!(p.level_orbit_partition(4, &all, CAP).unwrap().len(), 1);
    assert_eq!(p.level_orbit_partition(3, &[], CAP).unwrap().len(), 8);
}
