use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use treedyn::constructions::{build_measure_family, grigorchuk, grigorchuk_rist_word, FamilyOptions};
use treedyn::koopman::*;
use treedyn::measures::{q, LevelDistribution, OmegaWord, ProductMeasure};
use treedyn::{Automorphism, Error, GeneratedGroup, Prefix, TreeShape};

const CAP: usize = 1 << 16;

fn bin() -> TreeShape {
    TreeShape::binary01()
}

fn coin() -> ProductMeasure {
    ProductMeasure::bernoulli(&bin(), LevelDistribution::binary(q(2, 3)).unwrap()).unwrap()
}

fn element(g: &GeneratedGroup, letters: &[usize]) -> Automorphism {
    g.evaluate(&g.word(letters.iter().map(|&l| (l, 1))))
}

#[test]
fn a_under_a_coin_is_a_swap() {
    let g = grigorchuk();
    let m = koopman_matrix(g.generator("a").unwrap(), &coin(), 1, CAP).unwrap();
    assert!(m.is_permutation());
    assert_eq!(m.normalized, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    assert_eq!(m.entry_squared(1, 0), q(2, 1));
    assert!((m.indicator[(1, 0)] - 2f64.sqrt()).abs() < 1e-15);
    assert!(unitarity_defect(&m.normalized) <= 1e-12);
}

#[test]
fn identity_gives_the_identity() {
    let id = Automorphism::identity(&bin());
    let m = koopman_matrix(&id, &coin(), 4, CAP).unwrap();
    assert_eq!(m.normalized, DMatrix::identity(16, 16));
    let fs = fixed_space(&[m]).unwrap();
    assert_eq!(fs.dimension, 16);
}

#[test]
fn b_under_haar_is_its_level_permutation() {
    let g = grigorchuk();
    let b = g.generator("b").unwrap();
    let m = koopman_matrix(b, &ProductMeasure::uniform(&bin()), 4, CAP).unwrap();
    let table = b.level_projection(4, CAP).unwrap();
    for col in 0..16 {
        for row in 0..16 {
            let expect = if table.image(col) == row { 1.0 } else { 0.0 };
            assert_eq!(m.normalized[(row, col)], expect);
        }
    }
    let text = m.to_text(true);
    assert_eq!(text.lines().count(), 16);
    let err = koopman_matrix(b, &coin(), 3, CAP).unwrap_err();
    assert!(matches!(err, Error::NotDepthCompatible { .. }));
}

#[test]
fn corrupted_entries_are_detected() {
    let g = grigorchuk();
    let m = koopman_matrix(g.generator("c").unwrap(), &ProductMeasure::uniform(&bin()), 3, CAP).unwrap();
    let mut bad = m.normalized.clone();
    let col = 0;
    let row = m.table[col] as usize;
    bad[(row, col)] = 0.9;
    assert!(unitarity_defect(&bad) > 1e-6);
}

#[test]
fn depth_one_transposition_fixes_constants_only() {
    let g = grigorchuk();
    let m = koopman_matrix(g.generator("a").unwrap(), &ProductMeasure::uniform(&bin()), 1, CAP).unwrap();
    let fs = fixed_space(&[m]).unwrap();
    assert_eq!(fs.dimension, 1);
    let ones = DVector::from_element(2, 1.0 / 2f64.sqrt());
    assert!(fs.residual(&ones) < 1e-12);
    let other = koopman_matrix(g.generator("a").unwrap(), &ProductMeasure::uniform(&bin()), 2, CAP).unwrap();
    let m = koopman_matrix(g.generator("a").unwrap(), &ProductMeasure::uniform(&bin()), 1, CAP).unwrap();
    assert!(matches!(fixed_space(&[m, other]), Err(Error::DimensionMismatch(_))));
    assert!(fixed_space(&[]).is_err());
}

#[test]
fn haar_constants_are_fixed_by_the_group() {
    let g = grigorchuk();
    let haar = ProductMeasure::uniform(&bin());
    let ms: Vec<KoopmanMatrix> = g.generators().iter().map(|e| koopman_matrix(e, &haar, 4, CAP).unwrap()).collect();
    let fs = fixed_space(&ms).unwrap();
    assert_eq!(fs.dimension, 1);
    assert!(fs.residual(&DVector::from_element(16, 0.25)) < 1e-12);
}

#[test]
fn io_diagnostic_on_the_right_half() {
    let g = grigorchuk();
    let haar = ProductMeasure::uniform(&bin());
    let d = io_diagnostic(&g, &Prefix(vec![1]), &haar, 5, 4, CAP).unwrap();
    assert_eq!(d.outside, 16);
    assert!(d.outside_fixed);
    assert!(d.dimension >= d.outside);
    assert!(!d.elements.is_empty());
}

#[test]
fn filtration_commutes_under_haar() {
    let g = grigorchuk();
    let r = level_filtration_check(&g, 5, CAP).unwrap();
    assert!(r.max_defect <= 1e-12);
    assert_eq!(r.defects.len(), 4);
    let p = filtration_projectors(&bin(), 2, CAP).unwrap();
    let sum = p.iter().fold(DMatrix::<f64>::zeros(4, 4), |acc, x| acc + x);
    assert!((sum - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    // swapping 01 and 10 ignores the tree structure
    let mut swap = DMatrix::<f64>::identity(4, 4);
    swap.swap_rows(1, 2);
    let defects = filtration_defects(&swap, &p);
    assert!(defects[0] < 1e-12);
    assert!(defects[1] > 0.1);
}

#[test]
fn coefficients_agree_two_ways() {
    let g = grigorchuk();
    let haar = ProductMeasure::uniform(&bin());
    let shape = bin();
    let f = CylinderFunction::new(&shape, 4, (0..16).map(|i| (i as f64).sin()).collect()).unwrap();
    let r = CylinderFunction::new(&shape, 4, (0..16).map(|i| (i as f64 * 0.7).cos()).collect()).unwrap();
    for w in ["b", "a c", "a b a d"] {
        let e = g.evaluate(&g.parse_word(w).unwrap());
        let m = koopman_matrix(&e, &haar, 4, CAP).unwrap();
        let c = koopman_coefficient(&e, &haar, &f, &r, 12, CAP).unwrap();
        assert!(c.is_exact());
        assert!((c.midpoint() - m.coefficient(&f, &r)).abs() < 1e-12, "{w}");
    }
    let a = g.generator("a").unwrap();
    let m = koopman_matrix(a, &coin(), 3, CAP).unwrap();
    let f = CylinderFunction::new(&shape, 3, (0..8).map(|i| i as f64).collect()).unwrap();
    let c = koopman_coefficient(a, &coin(), &f, &f, 12, CAP).unwrap();
    assert!((c.midpoint() - m.coefficient(&f, &f)).abs() < 1e-12);
}

#[test]
fn rigidity_under_haar_and_a_family_measure() {
    let g = grigorchuk();
    let shape = bin();
    let chain: Vec<RigidityStepInput> = (1..=6)
        .map(|m| {
            let w = grigorchuk_rist_word(&g, m).unwrap();
            RigidityStepInput {
                cylinder: Prefix(vec![1; m]),
                element: g.evaluate(&w),
                label: g.format_word(&w),
            }
        })
        .collect();
    let one = CylinderFunction::constant(&shape, 0, 1.0).unwrap();
    let haar = ProductMeasure::uniform(&shape);
    let t = rigidity_trace(&haar, &one, &one, &chain, 12, CAP).unwrap();
    assert!(t.all_hold);
    for (i, s) in t.steps.iter().enumerate() {
        assert_eq!(s.mass, 0.5f64.powi(i as i32 + 1));
        assert!(s.value.hi <= 2.0 * s.mass.sqrt());
        assert!(s.bound <= 2.0 * s.mass.sqrt() + 1e-15);
    }
    let betas = [LevelDistribution::binary(q(1, 3)).unwrap(), LevelDistribution::binary(q(2, 3)).unwrap()];
    let fam = build_measure_family(&g, betas, &FamilyOptions::default()).unwrap();
    let lw = fam.measure(&OmegaWord::constant(false)).unwrap();
    let t = rigidity_trace(&lw, &one, &one, &chain, 16, CAP).unwrap();
    assert!(t.all_hold);
    assert!(t.steps.iter().all(|s| s.constant_bound.is_some_and(|b| s.value.hi <= b)));
}

#[test]
fn weak_containment_with_equal_measures() {
    let g = grigorchuk();
    let haar = ProductMeasure::uniform(&bin());
    let f = CylinderFunction::indicator(&bin(), &Prefix(vec![1])).unwrap();
    let elems: Vec<(String, Automorphism)> =
        ["a", "b"].iter().map(|n| (n.to_string(), g.generator(n).unwrap().clone())).collect();
    let r = weak_containment_experiment(&elems, &haar, &haar, &f, &WeakContainmentOptions::default()).unwrap();
    assert!(r.holds);
    // with Φ ≡ 1 only the cut to Y separates the two sides
    assert!(r.max_difference <= r.complement_mass + 1e-15);
    assert!(r.cross_check < 1e-12);
    let plain = WeakContainmentOptions {
        drop_phi: true,
        ..Default::default()
    };
    let d = weak_containment_experiment(&elems, &haar, &haar, &f, &plain).unwrap();
    for (x, y) in r.rows.iter().zip(&d.rows) {
        assert_eq!(x.nu_coefficient, y.nu_coefficient);
    }
    let whole = CylinderFunction::constant(&bin(), 1, 1.0).unwrap();
    let id = vec![("1".to_string(), Automorphism::identity(&bin()))];
    let r = weak_containment_experiment(&id, &haar, &haar, &whole, &WeakContainmentOptions::default()).unwrap();
    assert_eq!(r.max_difference, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn haar_matrices_are_unitary_homomorphic(
        l1 in prop::collection::vec(0usize..4, 0..6),
        l2 in prop::collection::vec(0usize..4, 0..6),
        n in 1usize..=5,
    ) {
        let g = grigorchuk();
        let haar = ProductMeasure::uniform(&bin());
        let (a, b) = (element(&g, &l1), element(&g, &l2));
        let (ma, mb) = (koopman_matrix(&a, &haar, n, CAP).unwrap(), koopman_matrix(&b, &haar, n, CAP).unwrap());
        let mab = koopman_matrix(&a.compose(&b), &haar, n, CAP).unwrap();
        prop_assert!(ma.is_permutation());
        prop_assert!(unitarity_defect(&ma.normalized) <= 1e-12);
        prop_assert!(homomorphism_defect(&ma.normalized, &mb.normalized, &mab.normalized) <= 1e-12);
        prop_assert!(homomorphism_defect(&ma.indicator, &mb.indicator, &mab.indicator) <= 1e-12);
    }

    #[test]
    fn coin_matrices_of_finitary_words_are_unitary(letters in prop::collection::vec(0usize..4, 0..6)) {
        // words in a alone, or deep enough to be compatible, under a non-uniform measure
        let g = grigorchuk();
        let e = element(&g, &letters);
        let mu = coin();
        if let Ok(m) = koopman_matrix(&e, &mu, 3, CAP) {
            prop_assert!(unitarity_defect(&m.normalized) <= 1e-12);
            prop_assert!(m.is_permutation());
        }
    }
}
