//! Permutations of a finite alphabet `{0,…,q-1}` stored as image tables.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm(Vec<u32>);

impl Perm {
    pub fn identity(q: u32) -> Self {
        Perm((0..q).collect())
    }

    /// Swaps `i` and `j`.
    pub fn transposition(q: u32, i: u32, j: u32) -> Self {
        let mut v: Vec<u32> = (0..q).collect();
        v.swap(i as usize, j as usize);
        Perm(v)
    }

    /// `x ↦ x + shift (mod q)`.
    pub fn cyclic(q: u32, shift: u32) -> Self {
        Perm((0..q).map(|x| (x + shift) % q).collect())
    }

    pub fn from_images(images: Vec<u32>) -> Result<Self> {
        let q = images.len();
        let mut seen = vec![false; q];
        for &x in &images {
            if x as usize >= q || std::mem::replace(&mut seen[x as usize], true) {
                return Err(Error::InvalidPermutation(format!("{images:?} is not a bijection")));
            }
        }
        Ok(Perm(images))
    }

    pub fn degree(&self) -> u32 {
        self.0.len() as u32
    }

    pub fn images(&self) -> &[u32] {
        &self.0
    }

    pub fn apply(&self, x: u32) -> u32 {
        self.0[x as usize]
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &x)| i as u32 == x)
    }

    pub fn inverse(&self) -> Perm {
        let mut v = vec![0; self.0.len()];
        for (i, &x) in self.0.iter().enumerate() {
            v[x as usize] = i as u32;
        }
        Perm(v)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Perm) -> Perm {
        debug_assert_eq!(self.0.len(), other.0.len());
        Perm(other.0.iter().map(|&x| self.0[x as usize]).collect())
    }
}

impl fmt::Debug for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Perm{:?}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_algebra() {
        let t = Perm::transposition(3, 0, 2);
        assert_eq!(t.images(), &[2, 1, 0]);
        assert!(t.compose(&t).is_identity());
        let c = Perm::cyclic(3, 1);
        assert_eq!(c.compose(&c.inverse()), Perm::identity(3));
        assert_eq!(c.compose(&c).apply(0), 2);
        assert!(Perm::from_images(vec![0, 0]).is_err());
        assert!(Perm::from_images(vec![0, 2]).is_err());
    }
}
