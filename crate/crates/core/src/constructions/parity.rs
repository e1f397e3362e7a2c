use crate::automorphism::Automorphism;
use crate::group::GeneratedGroup;
use crate::tree::TreeShape;

pub const DEFAULT_PARITY_SPAN: usize = 6;

/// Even-weight translations of `(ℤ/2)^ℕ`, generated by `e_i + e_j` for
/// `i < j ≤ span`. Generator `t{i}_{j}` flips coordinates `i` and `j`.
pub fn parity_group(span: usize) -> GeneratedGroup {
    assert!(span >= 2, "span must be at least 2");
    let shape = TreeShape::binary01();
    let mut gens = Vec::new();
    for i in 1..=span {
        for j in i + 1..=span {
            gens.push((format!("t{i}_{j}"), Automorphism::translation(&shape, &[i, j]).unwrap()));
        }
    }
    GeneratedGroup::new(&shape, gens).unwrap()
}

/// Indices of the generators flipping only coordinates `≤ n`.
pub fn in_window(group: &GeneratedGroup, n: usize) -> Vec<usize> {
    group
        .names()
        .iter()
        .enumerate()
        .filter(|(_, name)| {
            let (_, j) = name[1..].split_once('_').unwrap();
            j.parse::<usize>().unwrap() <= n
        })
        .map(|(k, _)| k)
        .collect()
}
