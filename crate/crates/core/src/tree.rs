//! Index arithmetic for the tree `X = X_1 × X_2 × ⋯`: shapes, prefixes
//! (cylinders) and finitely represented boundary points.
//!
//! Letters are stored 0-based. Every shape carries a `letter_base` used when
//! letters are printed or parsed, so the same data renders as `{1,…,q}` (the
//! default) or as `{0,1}` for the ℤ/2 corpus.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of prefixes any single enumeration may produce.
pub const DEFAULT_ENUMERATION_CAP: usize = 1 << 22;

/// Arity sequence `(q_n)`: an explicit head followed by a periodic tail.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TreeShape {
    head: Vec<u32>,
    period: Vec<u32>,
    letter_base: u32,
}

/// JSON form: `{"arities": {"head": [2,2], "tail_period": [2]}, "letter_base": 1}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub arities: AritySpec,
    #[serde(default = "default_letter_base")]
    pub letter_base: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AritySpec {
    #[serde(default)]
    pub head: Vec<u32>,
    pub tail_period: Vec<u32>,
}

fn default_letter_base() -> u32 {
    1
}

impl TreeShape {
    pub fn new(head: Vec<u32>, period: Vec<u32>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::InvalidShape("tail period must be nonempty".into()));
        }
        if let Some(q) = head.iter().chain(period.iter()).find(|&&q| q < 2) {
            return Err(Error::InvalidShape(format!("arity {q} < 2")));
        }
        Ok(TreeShape {
            head,
            period,
            letter_base: 1,
        })
    }

    /// Constant arity `q` at every level.
    pub fn constant(q: u32) -> Self {
        TreeShape::new(Vec::new(), vec![q]).expect("arity must be at least 2")
    }

    /// Binary tree with letters written `{0,1}`.
    pub fn binary01() -> Self {
        TreeShape::constant(2).with_letter_base(0)
    }

    pub fn with_letter_base(mut self, base: u32) -> Self {
        self.letter_base = base;
        self
    }

    pub fn letter_base(&self) -> u32 {
        self.letter_base
    }

    pub fn from_spec(spec: &ShapeSpec) -> Result<Self> {
        Ok(TreeShape::new(spec.arities.head.clone(), spec.arities.tail_period.clone())?
            .with_letter_base(spec.letter_base))
    }

    pub fn to_spec(&self) -> ShapeSpec {
        ShapeSpec {
            arities: AritySpec {
                head: self.head.clone(),
                tail_period: self.period.clone(),
            },
            letter_base: self.letter_base,
        }
    }

    /// `q_level` for `level ≥ 1`.
    pub fn arity(&self, level: usize) -> u32 {
        assert!(level >= 1, "levels are numbered from 1");
        let i = level - 1;
        if i < self.head.len() {
            self.head[i]
        } else {
            self.period[(i - self.head.len()) % self.period.len()]
        }
    }

    /// Number of children of a vertex at depth `depth`.
    pub fn child_arity(&self, depth: usize) -> u32 {
        self.arity(depth + 1)
    }

    pub fn head_len(&self) -> usize {
        self.head.len()
    }

    pub fn period_len(&self) -> usize {
        self.period.len()
    }

    /// Depths with equal class have identical subtrees below them.
    pub fn depth_class(&self, depth: usize) -> usize {
        if depth < self.head.len() {
            depth
        } else {
            self.head.len() + (depth - self.head.len()) % self.period.len()
        }
    }

    pub fn constant_arity(&self) -> Option<u32> {
        let q = self.period[0];
        self.head
            .iter()
            .chain(self.period.iter())
            .all(|&x| x == q)
            .then_some(q)
    }

    /// `q_1 ⋯ q_n`, exactly.
    pub fn level_size(&self, n: usize) -> BigUint {
        (1..=n).fold(BigUint::one(), |acc, l| acc * self.arity(l))
    }

    /// `level_size(n)` as a machine integer, refusing anything above `cap`.
    pub fn level_count(&self, n: usize, cap: usize) -> Result<usize> {
        let size = self.level_size(n);
        match size.to_usize() {
            Some(s) if s <= cap => Ok(s),
            _ => Err(Error::cap(format!("level {n} ({size} prefixes)"), cap)),
        }
    }

    /// All depth-`n` prefixes in lexicographic order.
    pub fn enumerate_level(&self, n: usize, cap: usize) -> Result<Vec<Prefix>> {
        let count = self.level_count(n, cap)?;
        Ok((0..count).map(|i| self.prefix_at(n, i)).collect())
    }

    /// Lexicographic rank of a prefix among prefixes of the same length.
    pub fn index_of(&self, prefix: &Prefix) -> usize {
        prefix
            .0
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, &x)| acc * self.arity(i + 1) as usize + x as usize)
    }

    /// Inverse of [`TreeShape::index_of`].
    pub fn prefix_at(&self, n: usize, mut index: usize) -> Prefix {
        let mut letters = vec![0u32; n];
        for level in (1..=n).rev() {
            let q = self.arity(level) as usize;
            letters[level - 1] = (index % q) as u32;
            index /= q;
        }
        Prefix(letters)
    }

    pub fn validate(&self, prefix: &Prefix) -> Result<()> {
        for (i, &x) in prefix.0.iter().enumerate() {
            if x >= self.arity(i + 1) {
                return Err(Error::InvalidPrefix(format!(
                    "letter {} at level {} exceeds arity {}",
                    x + self.letter_base,
                    i + 1,
                    self.arity(i + 1)
                )));
            }
        }
        Ok(())
    }

    /// Builds a prefix from external (based) letters.
    pub fn parse_prefix(&self, letters: &[u32]) -> Result<Prefix> {
        let internal = letters
            .iter()
            .map(|&x| {
                x.checked_sub(self.letter_base)
                    .ok_or_else(|| Error::InvalidPrefix(format!("letter {x} below base {}", self.letter_base)))
            })
            .collect::<Result<Vec<_>>>()?;
        let p = Prefix(internal);
        self.validate(&p)?;
        Ok(p)
    }

    /// External letters of a prefix.
    pub fn external(&self, prefix: &Prefix) -> Vec<u32> {
        prefix.0.iter().map(|&x| x + self.letter_base).collect()
    }

    pub fn format_prefix(&self, prefix: &Prefix) -> String {
        let parts: Vec<String> = self.external(prefix).iter().map(u32::to_string).collect();
        format!("({})", parts.join(","))
    }
}

/// A finite word `(x_1,…,x_n)`; identified with the cylinder `[x_1,…,x_n]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prefix(pub Vec<u32>);

impl Prefix {
    pub fn root() -> Self {
        Prefix(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[u32] {
        &self.0
    }

    pub fn child(&self, letter: u32) -> Prefix {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(letter);
        Prefix(v)
    }

    pub fn concat(&self, other: &Prefix) -> Prefix {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Prefix(v)
    }

    pub fn truncate(&self, n: usize) -> Prefix {
        Prefix(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn is_prefix_of(&self, other: &Prefix) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

impl From<Vec<u32>> for Prefix {
    fn from(v: Vec<u32>) -> Self {
        Prefix(v)
    }
}

impl fmt::Display for Prefix {
    /// Internal (0-based) letters; use [`TreeShape::format_prefix`] for reports.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// A point of `X` given by an explicit head and a periodic tail.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoundaryPoint {
    head: Vec<u32>,
    tail: Vec<u32>,
}

impl BoundaryPoint {
    pub fn new(shape: &TreeShape, head: Vec<u32>, tail: Vec<u32>) -> Result<Self> {
        if tail.is_empty() {
            return Err(Error::InvalidPrefix("tail must be nonempty".into()));
        }
        let point = BoundaryPoint { head, tail }.canonical();
        // Letters repeat with period lcm(shape period, tail period) after both heads.
        let horizon = point.head.len().max(shape.head_len())
            + num_integer::lcm(point.tail.len(), shape.period_len());
        shape.validate(&point.project(horizon))?;
        Ok(point)
    }

    /// The point whose every letter is `letter`.
    pub fn constant(shape: &TreeShape, letter: u32) -> Result<Self> {
        BoundaryPoint::new(shape, Vec::new(), vec![letter])
    }

    /// `prefix` followed by the constant letter `letter`.
    pub fn with_constant_tail(shape: &TreeShape, prefix: &Prefix, letter: u32) -> Result<Self> {
        BoundaryPoint::new(shape, prefix.0.clone(), vec![letter])
    }

    pub(crate) fn from_parts_unchecked(head: Vec<u32>, tail: Vec<u32>) -> Self {
        BoundaryPoint { head, tail }.canonical()
    }

    /// Shortest tail period, then shortest head.
    fn canonical(mut self) -> Self {
        let n = self.tail.len();
        if let Some(p) = (1..=n).find(|&p| n.is_multiple_of(p) && (p..n).all(|i| self.tail[i] == self.tail[i - p])) {
            self.tail.truncate(p);
        }
        while let Some(&last) = self.head.last() {
            if last != *self.tail.last().unwrap() {
                break;
            }
            self.head.pop();
            self.tail.rotate_right(1);
        }
        self
    }

    pub fn head(&self) -> &[u32] {
        &self.head
    }

    pub fn tail(&self) -> &[u32] {
        &self.tail
    }

    /// Letter at 0-based position `i` (i.e. the coordinate in `X_{i+1}`).
    pub fn letter(&self, i: usize) -> u32 {
        if i < self.head.len() {
            self.head[i]
        } else {
            self.tail[(i - self.head.len()) % self.tail.len()]
        }
    }

    /// `π_n(x)`.
    pub fn project(&self, n: usize) -> Prefix {
        Prefix((0..n).map(|i| self.letter(i)).collect())
    }

    /// Phase of position `i` inside the periodic tail, or `None` in the head.
    pub fn tail_phase(&self, i: usize) -> Option<usize> {
        (i >= self.head.len()).then(|| (i - self.head.len()) % self.tail.len())
    }
}

/// True iff `x` lies in the cylinder `[c]`.
pub fn cylinder_contains(c: &Prefix, x: &BoundaryPoint) -> bool {
    c.0.iter().enumerate().all(|(i, &l)| x.letter(i) == l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn level_sizes() {
        let bin = TreeShape::constant(2);
        assert_eq!(bin.level_size(0), BigUint::one());
        assert_eq!(bin.level_size(10), BigUint::from(1024u32));
        let alt = TreeShape::new(vec![], vec![2, 3]).unwrap();
        assert_eq!(alt.level_size(4), BigUint::from(36u32));
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(TreeShape::new(vec![2, 1], vec![2]).is_err());
        assert!(TreeShape::new(vec![2], vec![]).is_err());
    }

    #[test]
    fn enumerate_small_levels() {
        let bin = TreeShape::constant(2);
        assert_eq!(bin.enumerate_level(1, 16).unwrap(), vec![Prefix(vec![0]), Prefix(vec![1])]);
        assert_eq!(
            bin.enumerate_level(2, 16).unwrap(),
            vec![
                Prefix(vec![0, 0]),
                Prefix(vec![0, 1]),
                Prefix(vec![1, 0]),
                Prefix(vec![1, 1])
            ]
        );
        // (2,3) shape: brute-force cross product.
        let s = TreeShape::new(vec![2, 3], vec![2]).unwrap();
        let mut brute = Vec::new();
        for a in 0..2 {
            for b in 0..3 {
                brute.push(Prefix(vec![a, b]));
            }
        }
        assert_eq!(s.enumerate_level(2, 16).unwrap(), brute);
        assert!(matches!(bin.enumerate_level(5, 16), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn projections_and_cylinders() {
        let bin = TreeShape::constant(2);
        let ones = BoundaryPoint::constant(&bin, 0).unwrap();
        assert_eq!(ones.project(3), Prefix(vec![0, 0, 0]));
        assert_eq!(ones.project(0), Prefix::root());
        let x = BoundaryPoint::with_constant_tail(&bin, &Prefix(vec![1, 0]), 0).unwrap();
        assert_eq!(x.project(4), Prefix(vec![1, 0, 0, 0]));
        assert!(cylinder_contains(&Prefix(vec![0]), &ones));
        assert!(!cylinder_contains(&Prefix(vec![1]), &ones));
        let y = BoundaryPoint::new(&bin, vec![0, 1], vec![1, 0, 0]).unwrap();
        assert!(cylinder_contains(&Prefix(vec![0, 1]), &y));
    }

    #[test]
    fn external_letters_follow_base() {
        let s = TreeShape::constant(3);
        let p = s.parse_prefix(&[1, 3, 2]).unwrap();
        assert_eq!(p, Prefix(vec![0, 2, 1]));
        assert_eq!(s.format_prefix(&p), "(1,3,2)");
        assert!(s.parse_prefix(&[0]).is_err());
        assert!(s.parse_prefix(&[4]).is_err());
        let b = TreeShape::binary01();
        assert_eq!(b.format_prefix(&Prefix(vec![0, 1])), "(0,1)");
    }

    #[test]
    fn boundary_point_validation_checks_tail_against_shape() {
        let s = TreeShape::new(vec![], vec![2, 3]).unwrap();
        assert!(BoundaryPoint::constant(&s, 2).is_err());
        assert!(BoundaryPoint::new(&s, vec![], vec![1, 2]).is_ok());
        assert!(BoundaryPoint::new(&s, vec![0], vec![1, 2]).is_err());
    }

    fn shape_and_point() -> impl Strategy<Value = (TreeShape, BoundaryPoint)> {
        (prop::collection::vec(2u32..5, 0..3), prop::collection::vec(2u32..5, 1..3)).prop_flat_map(
            |(head, period)| {
                let shape = TreeShape::new(head, period).unwrap();
                let s2 = shape.clone();
                (prop::collection::vec(0u32..100, 0..6), 0u32..100).prop_map(move |(h, t)| {
                    let head: Vec<u32> =
                        h.iter().enumerate().map(|(i, &x)| x % s2.arity(i + 1)).collect();
                    // a tail letter valid at every level
                    let min_q = (1..=64).map(|l| s2.arity(l)).min().unwrap();
                    let p = BoundaryPoint::new(&s2, head, vec![t % min_q]).unwrap();
                    (s2.clone(), p)
                })
            },
        )
    }

    proptest! {
        #[test]
        fn projections_are_nested((_shape, x) in shape_and_point(), n in 0usize..10, extra in 0usize..10) {
            let short = x.project(n);
            let long = x.project(n + extra);
            prop_assert!(short.is_prefix_of(&long));
        }

        #[test]
        fn truncated_enumeration_matches_shorter_level((shape, _x) in shape_and_point(), n in 0usize..5, k in 0usize..5) {
            let k = k.min(n);
            let full = shape.enumerate_level(n, 1 << 16).unwrap();
            let mut cut: Vec<Prefix> = full.iter().map(|p| p.truncate(k)).collect();
            cut.dedup();
            prop_assert_eq!(cut, shape.enumerate_level(k, 1 << 16).unwrap());
        }

        #[test]
        fn depth_cylinders_partition_points((shape, x) in shape_and_point(), n in 0usize..5) {
            let hits = shape
                .enumerate_level(n, 1 << 16)
                .unwrap()
                .iter()
                .filter(|c| cylinder_contains(c, &x))
                .count();
            prop_assert_eq!(hits, 1);
        }

        #[test]
        fn index_roundtrip((shape, x) in shape_and_point(), n in 0usize..8) {
            let p = x.project(n);
            prop_assert_eq!(shape.prefix_at(n, shape.index_of(&p)), p);
        }
    }
}
