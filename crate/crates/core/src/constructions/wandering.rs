//! Block constructions over a biased coin: a wandering set for commuting block
//! flips, and its conservative non-ergodic refinements.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use serde::Serialize;

use super::binomial::weight_range_mass;
use crate::automorphism::{Automorphism, PortraitNode};
use crate::cocycle::{rn_derivative, sample_point};
use crate::error::{Error, Result};
use crate::group::{supported_in, GeneratedGroup, DEFAULT_DEDUP_DEPTH};
use crate::measures::{bernoulli_dist, format_rational, rng_stream, ser_q, ProductMeasure, Q};
use crate::perm::Perm;
use crate::tree::{Prefix, TreeShape};

pub const DEFAULT_BLOCK_STAGES: usize = 5;
pub const DEFAULT_BLOCK_CAP: usize = 1 << 12;

/// `n_0 = 1 < n_1 < ⋯ < n_{K+1}`; block `k` is `(n_k, n_{k+1}]` and its length
/// `m_k` is the least even length with `μ(weight < m_k/2) > 1 − ε_k`,
/// `ε_k = (k+2)⁻²`.
#[derive(Clone, Debug, Serialize)]
pub struct BlockSchedule {
    #[serde(serialize_with = "ser_q")]
    pub p1: Q,
    pub depths: Vec<usize>,
    #[serde(serialize_with = "ser_qs")]
    pub eps: Vec<Q>,
    /// `μ(Y_k)`.
    #[serde(serialize_with = "ser_qs")]
    pub block_masses: Vec<Q>,
}

fn ser_qs<S: serde::Serializer>(xs: &[Q], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(format_rational))
}

impl BlockSchedule {
    pub fn build(p1: &Q, stages: usize, cap: usize) -> Result<BlockSchedule> {
        let mut depths = vec![1];
        let mut eps = Vec::new();
        let mut block_masses = Vec::new();
        for k in 0..=stages {
            let e = Q::new(1.into(), ((k + 2) * (k + 2)).into());
            let target = Q::one() - &e;
            let mut m = 2;
            let mass = loop {
                if m > cap {
                    return Err(Error::ScheduleOverflow(format!("block {k} needs length beyond {cap}")));
                }
                let mass = weight_range_mass(p1, m, 0, m / 2 - 1);
                if mass > target {
                    break mass;
                }
                m += 2;
            };
            depths.push(depths[k] + m);
            eps.push(e);
            block_masses.push(mass);
        }
        Ok(BlockSchedule {
            p1: p1.clone(),
            depths,
            eps,
            block_masses,
        })
    }

    pub fn stages(&self) -> usize {
        self.depths.len() - 2
    }

    /// `n_{K+1}`.
    pub fn depth(&self) -> usize {
        *self.depths.last().unwrap()
    }

    /// First coordinate (1-based) and length of block `k`.
    pub fn block(&self, k: usize) -> (usize, usize) {
        (self.depths[k] + 1, self.depths[k + 1] - self.depths[k])
    }

    /// `∏_{k>K}(1 − ε_k) = (K+2)/(K+3)`.
    pub fn tail_factor(&self) -> Q {
        let k = self.stages();
        Q::new((k + 2).into(), (k + 3).into())
    }
}

/// Coordinates `start..start+len` with weight at most `max_weight`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WeightBlock {
    pub start: usize,
    pub len: usize,
    pub max_weight: usize,
}

/// A clopen set of depth-`depth` words: weight-capped blocks and fixed
/// coordinates; every other coordinate is free.
#[derive(Clone, Debug, Serialize)]
pub struct CylinderSet {
    pub depth: usize,
    pub blocks: Vec<WeightBlock>,
    pub fixed: BTreeMap<usize, u32>,
}

impl CylinderSet {
    pub fn contains(&self, y: &[u32]) -> bool {
        self.fixed.iter().all(|(&i, &v)| y[i - 1] == v)
            && self.blocks.iter().all(|b| {
                y[b.start - 1..b.start - 1 + b.len].iter().filter(|&&x| x == 1).count() <= b.max_weight
            })
    }

    pub fn with_fixed(&self, coord: usize, value: u32) -> CylinderSet {
        let mut s = self.clone();
        s.fixed.insert(coord, value);
        s
    }

    pub fn constrains(&self, coord: usize) -> bool {
        self.fixed.contains_key(&coord) || self.blocks.iter().any(|b| (b.start..b.start + b.len).contains(&coord))
    }

    pub fn measure(&self, p1: &Q) -> Q {
        let p0 = Q::one() - p1;
        let mut out = Q::one();
        for b in &self.blocks {
            let fixed: Vec<u32> = (b.start..b.start + b.len).filter_map(|i| self.fixed.get(&i).copied()).collect();
            let w0: usize = fixed.iter().filter(|&&v| v == 1).count();
            let free = b.len - fixed.len();
            for &v in &fixed {
                out *= if v == 1 { p1 } else { &p0 };
            }
            if w0 > b.max_weight {
                return Q::zero();
            }
            out *= weight_range_mass(p1, free, 0, b.max_weight - w0);
        }
        for (&i, &v) in &self.fixed {
            if !self.blocks.iter().any(|b| (b.start..b.start + b.len).contains(&i)) {
                out *= if v == 1 { p1 } else { &p0 };
            }
        }
        out
    }

    /// Whether `(self ⊕ mask) ∩ other` is nonempty. Both sets must share
    /// their block layout.
    pub fn meets(&self, mask: &BTreeSet<usize>, other: &CylinderSet) -> Result<bool> {
        if self.blocks != other.blocks || self.depth != other.depth {
            return Err(Error::ShapeMismatch("cylinder sets with different block layouts".into()));
        }
        // Required value of y_i, from self directly and from other through the mask.
        let forced = |i: usize| -> std::result::Result<Option<u32>, ()> {
            let a = self.fixed.get(&i).copied();
            let b = other.fixed.get(&i).map(|&v| v ^ u32::from(mask.contains(&i)));
            match (a, b) {
                (Some(x), Some(y)) if x != y => Err(()),
                (x, y) => Ok(x.or(y)),
            }
        };
        let coords: BTreeSet<usize> = self.fixed.keys().chain(other.fixed.keys()).copied().collect();
        for &i in &coords {
            if forced(i).is_err() {
                return Ok(false);
            }
        }
        for b in &self.blocks {
            // weights of y and of y ⊕ mask on the block, with u free flipped
            // coordinates to split
            let (mut a0, mut b0, mut flipped) = (0, 0, 0);
            for i in b.start..b.start + b.len {
                let m = mask.contains(&i);
                match forced(i).unwrap() {
                    Some(v) => {
                        a0 += v as usize;
                        b0 += (v ^ u32::from(m)) as usize;
                    }
                    None if m => flipped += 1,
                    None => {}
                }
            }
            // v of the flipped free coordinates set to 1 in y: weights a0+v, b0+flipped−v
            let lo = (b0 + flipped).saturating_sub(b.max_weight);
            let hi = b.max_weight.checked_sub(a0).map(|h| h.min(flipped));
            match hi {
                Some(hi) if lo <= hi => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    }
}

/// Flipped coordinates of a finitary element that acts as a translation on
/// the first `depth` coordinates; `None` if it is not one.
pub fn translation_mask(g: &Automorphism, depth: usize) -> Result<Option<BTreeSet<usize>>> {
    let image = g.apply_prefix(&Prefix(vec![0; depth]));
    let mask: BTreeSet<usize> = image.letters().iter().enumerate().filter(|(_, &x)| x == 1).map(|(i, _)| i + 1).collect();
    let levels: Vec<usize> = mask.iter().copied().collect();
    let t = Automorphism::translation(g.shape(), &levels)?;
    Ok(g.equal_exact(&t)?.then_some(mask))
}

#[derive(Clone, Debug, Serialize)]
pub struct WanderingCheck {
    pub radius: usize,
    pub checked: usize,
    pub disjoint: bool,
    pub witness: Option<String>,
}

fn wandering_check(group: &GeneratedGroup, set: &CylinderSet, radius: usize, cap: usize) -> Result<WanderingCheck> {
    let ball = group.ball(radius, DEFAULT_DEDUP_DEPTH, cap)?;
    let mut checked = 0;
    for e in ball.iter().filter(|e| !e.word.is_empty()) {
        let mask = translation_mask(&e.element, set.depth)?.ok_or_else(|| Error::ConditionFailed {
            condition: "ball element is a translation".into(),
            witness: group.format_word(&e.word),
        })?;
        checked += 1;
        if mask.is_empty() || set.meets(&mask, set)? {
            return Ok(WanderingCheck {
                radius,
                checked,
                disjoint: false,
                witness: Some(group.format_word(&e.word)),
            });
        }
    }
    Ok(WanderingCheck {
        radius,
        checked,
        disjoint: true,
        witness: None,
    })
}

fn biased_coin(mu: &ProductMeasure) -> Result<Q> {
    let d = bernoulli_dist(mu)?;
    if d.len() != 2 || mu.shape().constant_arity() != Some(2) {
        return Err(Error::ShapeMismatch("binary letters required".into()));
    }
    if d.get(0) <= d.get(1) {
        return Err(Error::InvalidDistribution("μ₁(0) > μ₁(1) is required".into()));
    }
    Ok(d.get(1).clone())
}

#[derive(Clone, Debug)]
pub struct DissipativeGroup {
    pub schedule: BlockSchedule,
    /// `γ_k` flips coordinate `k` and block `k`, `1 ≤ k ≤ K`.
    pub group: GeneratedGroup,
    /// `X_1 × Y_0 × ⋯ × Y_K`.
    pub y: CylinderSet,
}

pub fn dissipative_group(mu: &ProductMeasure, stages: usize, cap: usize) -> Result<DissipativeGroup> {
    let p1 = biased_coin(mu)?;
    let schedule = BlockSchedule::build(&p1, stages, cap)?;
    let shape = mu.shape().clone();
    let mut gens = Vec::new();
    for k in 1..=stages {
        let (start, len) = schedule.block(k);
        let mut levels: Vec<usize> = (start..start + len).collect();
        levels.push(k);
        gens.push((format!("γ{k}"), Automorphism::translation(&shape, &levels)?));
    }
    let blocks = (0..=stages)
        .map(|k| {
            let (start, len) = schedule.block(k);
            WeightBlock {
                start,
                len,
                max_weight: len / 2 - 1,
            }
        })
        .collect();
    Ok(DissipativeGroup {
        y: CylinderSet {
            depth: schedule.depth(),
            blocks,
            fixed: BTreeMap::new(),
        },
        group: GeneratedGroup::new(&shape, gens)?,
        schedule,
    })
}

impl DissipativeGroup {
    /// `μ(Y) ≥ ∏_{k≤K} μ(Y_k) · (K+2)/(K+3)`.
    pub fn mass_lower_bound(&self) -> Q {
        self.y.measure(&self.schedule.p1) * self.schedule.tail_factor()
    }

    /// Whether flipping all of block `k` moves `Y_k` off itself.
    pub fn block_flip_disjoint(&self, k: usize) -> Result<bool> {
        let (start, len) = self.schedule.block(k);
        let mask = (start..start + len).collect();
        Ok(!self.y.meets(&mask, &self.y)?)
    }

    pub fn wandering_check(&self, radius: usize, cap: usize) -> Result<WanderingCheck> {
        wandering_check(&self.group, &self.y, radius, cap)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantPairCheck {
    pub split_coordinate: usize,
    #[serde(serialize_with = "ser_q")]
    pub mass_a: Q,
    #[serde(serialize_with = "ser_q")]
    pub mass_b: Q,
    pub pairs_checked: usize,
    pub disjoint: bool,
    pub witness: Option<(String, String)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RnFlipCheck {
    pub evaluations: usize,
    #[serde(serialize_with = "ser_q")]
    pub bound: Q,
    #[serde(serialize_with = "ser_q")]
    pub min_value: Q,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchCheck {
    pub depth: usize,
    pub vertices: usize,
    pub holds: bool,
    pub witness: Option<String>,
}

#[derive(Clone, Debug)]
pub struct NonErgodicGroup {
    pub mu: ProductMeasure,
    pub schedule: BlockSchedule,
    /// `γ̃_k` flips coordinate `k` and the constrained part of block `k`.
    pub g: GeneratedGroup,
    pub h_generators: Vec<(String, Automorphism)>,
    /// `X_1 × (X_{n_0+1} × Ỹ_0) × ⋯ × (X_{n_K+1} × Ỹ_K)`.
    pub y_tilde: CylinderSet,
    pub a: CylinderSet,
    pub b: CylinderSet,
    pub split_coordinate: usize,
    /// Whether `H` is generated by the localized flips `δ_{k,y}`.
    pub localized: bool,
}

fn tilde_parts(mu: &ProductMeasure, stages: usize, cap: usize) -> Result<(BlockSchedule, GeneratedGroup, CylinderSet)> {
    let p1 = biased_coin(mu)?;
    let schedule = BlockSchedule::build(&p1, stages, cap)?;
    let shape = mu.shape().clone();
    let mut gens = Vec::new();
    for k in 1..=stages {
        let (start, len) = schedule.block(k);
        let mut levels: Vec<usize> = (start + 1..start + len).collect();
        levels.push(k);
        gens.push((format!("γ̃{k}"), Automorphism::translation(&shape, &levels)?));
    }
    let blocks = (0..=stages)
        .map(|k| {
            let (start, len) = schedule.block(k);
            WeightBlock {
                start: start + 1,
                len: len - 1,
                max_weight: len / 2 - 1,
            }
        })
        .collect();
    let set = CylinderSet {
        depth: schedule.depth(),
        blocks,
        fixed: BTreeMap::new(),
    };
    Ok((schedule, GeneratedGroup::new(&shape, gens)?, set))
}

/// The single flip of coordinate `|y| + 1` below `y`.
fn localized_flip(shape: &TreeShape, y: &[u32]) -> Result<Automorphism> {
    let mut node = PortraitNode::build(Perm::transposition(2, 0, 1), BTreeMap::new());
    for (d, &x) in y.iter().enumerate().rev() {
        let q = shape.arity(d + 1);
        node = PortraitNode::build(Perm::identity(q), node.into_iter().map(|c| (x, c)).collect());
    }
    Automorphism::portrait(shape, node)
}

fn non_ergodic(mu: &ProductMeasure, stages: usize, cap: usize, localized: bool) -> Result<NonErgodicGroup> {
    let (schedule, g, y_tilde) = tilde_parts(mu, stages, cap)?;
    let shape = mu.shape().clone();
    let mut h_generators = Vec::new();
    for k in 1..=stages {
        let free = schedule.depths[k] + 1;
        if localized {
            // only the first stage: 2^{n_1} localized flips
            if k > 1 {
                break;
            }
            for y in shape.enumerate_level(free - 1, cap)? {
                let bits: String = y.letters().iter().map(|x| x.to_string()).collect();
                h_generators.push((format!("δ{k}_{bits}"), localized_flip(&shape, y.letters())?));
            }
        } else {
            h_generators.push((format!("δ{k}"), Automorphism::translation(&shape, &[free])?));
        }
    }
    let p1 = &schedule.p1;
    let split = y_tilde
        .blocks
        .iter()
        .find(|b| b.max_weight >= 1)
        .map(|b| b.start)
        .ok_or_else(|| Error::ScheduleOverflow("no block admits both values on its first constrained coordinate".into()))?;
    let a = y_tilde.with_fixed(split, 0);
    let b = y_tilde.with_fixed(split, 1);
    if a.measure(p1).is_zero() || b.measure(p1).is_zero() {
        return Err(Error::ConditionFailed {
            condition: "both halves of the split have positive mass".into(),
            witness: format!("coordinate {split}"),
        });
    }
    Ok(NonErgodicGroup {
        mu: mu.clone(),
        schedule,
        g,
        h_generators,
        y_tilde,
        a,
        b,
        split_coordinate: split,
        localized,
    })
}

/// `δ_k` flips coordinate `n_k + 1`, the free coordinate of block `k`.
pub fn conservative_nonergodic_group(mu: &ProductMeasure, stages: usize, cap: usize) -> Result<NonErgodicGroup> {
    non_ergodic(mu, stages, cap, false)
}

/// `H` generated by `δ_{1,y}`, `y ∈ X_1^{n_1}`, each flipping coordinate
/// `n_1 + 1` inside `[y]` only.
pub fn weakly_branch_nonergodic_group(mu: &ProductMeasure, stages: usize, cap: usize) -> Result<NonErgodicGroup> {
    non_ergodic(mu, stages, cap, true)
}

impl NonErgodicGroup {
    pub fn m_group(&self) -> Result<GeneratedGroup> {
        let mut gens: Vec<(String, Automorphism)> = self
            .g
            .names()
            .iter()
            .zip(self.g.generators())
            .map(|(n, g)| (n.clone(), g.clone()))
            .collect();
        gens.extend(self.h_generators.iter().cloned());
        GeneratedGroup::new(self.g.shape(), gens)
    }

    /// Each `H` generator acts only on coordinates `Ỹ`, `A` and `B` leave free.
    pub fn h_invariance(&self) -> bool {
        let depth = self.y_tilde.depth;
        self.h_generators.iter().all(|(_, h)| {
            (1..=depth).all(|s| !self.a.constrains(s) || !h.may_act_at(s - 1))
        })
    }

    /// `gỸ ∩ Ỹ = ∅` over the `G`-ball.
    pub fn disjointness(&self, radius: usize, cap: usize) -> Result<WanderingCheck> {
        wandering_check(&self.g, &self.y_tilde, radius, cap)
    }

    /// `gA ∩ g′B = ∅` for all `g, g′` in the `G`-ball.
    pub fn invariant_pair(&self, radius: usize, cap: usize) -> Result<InvariantPairCheck> {
        let ball = self.g.ball(radius, DEFAULT_DEDUP_DEPTH, cap)?;
        let masks: Vec<(String, BTreeSet<usize>)> = ball
            .iter()
            .map(|e| {
                let m = translation_mask(&e.element, self.y_tilde.depth)?.ok_or_else(|| Error::ConditionFailed {
                    condition: "ball element is a translation".into(),
                    witness: self.g.format_word(&e.word),
                })?;
                Ok((self.g.format_word(&e.word), m))
            })
            .collect::<Result<_>>()?;
        let p1 = &self.schedule.p1;
        let mut pairs = 0;
        for (wa, ma) in &masks {
            for (wb, mb) in &masks {
                pairs += 1;
                let diff: BTreeSet<usize> = ma.symmetric_difference(mb).copied().collect();
                if self.a.meets(&diff, &self.b)? {
                    return Ok(InvariantPairCheck {
                        split_coordinate: self.split_coordinate,
                        mass_a: self.a.measure(p1),
                        mass_b: self.b.measure(p1),
                        pairs_checked: pairs,
                        disjoint: false,
                        witness: Some((wa.clone(), wb.clone())),
                    });
                }
            }
        }
        Ok(InvariantPairCheck {
            split_coordinate: self.split_coordinate,
            mass_a: self.a.measure(p1),
            mass_b: self.b.measure(p1),
            pairs_checked: pairs,
            disjoint: true,
            witness: None,
        })
    }

    /// `dμ∘δ/dμ(x) ≥ μ₁(1)/μ₁(0)` at sampled `x`, for every flip acting at `x`.
    pub fn rn_flip_check(&self, samples: usize, seed: u64) -> Result<RnFlipCheck> {
        let p1 = &self.schedule.p1;
        let bound = p1 / (Q::one() - p1);
        let horizon = self.y_tilde.depth + 2;
        let mut rng = rng_stream(seed, 2);
        let mut min_value: Option<Q> = None;
        let mut evaluations = 0;
        for _ in 0..samples {
            let x = sample_point(&self.mu, horizon, &mut rng)?;
            for (name, h) in &self.h_generators {
                if self.localized {
                    let (_, bits) = name.split_once('_').unwrap();
                    let hit = bits.chars().enumerate().all(|(i, c)| c.to_digit(10) == Some(x.letter(i)));
                    if !hit {
                        continue;
                    }
                }
                let v = rn_derivative(h, &self.mu, &x, horizon)?.value;
                evaluations += 1;
                if min_value.as_ref().is_none_or(|m| &v < m) {
                    min_value = Some(v);
                }
            }
        }
        let min_value = min_value.unwrap_or_else(Q::one);
        Ok(RnFlipCheck {
            evaluations,
            holds: min_value >= bound,
            bound,
            min_value,
        })
    }

    /// Every vertex of depth `≤ depth` carries an `H` generator supported
    /// below it; `depth ≤ n_1`.
    pub fn weakly_branch_check(&self, depth: usize, cap: usize) -> Result<BranchCheck> {
        let shape = self.g.shape();
        let mut vertices = 0;
        for d in 0..=depth {
            for v in shape.enumerate_level(d, cap)? {
                vertices += 1;
                let mut found = false;
                for (_, h) in &self.h_generators {
                    if supported_in(h, &v, cap)? {
                        found = true;
                        break;
                    }
                }
                if !found {
                    return Ok(BranchCheck {
                        depth,
                        vertices,
                        holds: false,
                        witness: Some(shape.format_prefix(&v)),
                    });
                }
            }
        }
        Ok(BranchCheck {
            depth,
            vertices,
            holds: true,
            witness: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{q, LevelDistribution};

    fn coin() -> ProductMeasure {
        ProductMeasure::bernoulli(&TreeShape::binary01(), LevelDistribution::binary(q(2, 3)).unwrap()).unwrap()
    }

    #[test]
    fn meets_agrees_with_enumeration() {
        let set = CylinderSet {
            depth: 6,
            blocks: vec![
                WeightBlock {
                    start: 2,
                    len: 3,
                    max_weight: 1,
                },
                WeightBlock {
                    start: 5,
                    len: 2,
                    max_weight: 0,
                },
            ],
            fixed: BTreeMap::new(),
        };
        let other = set.with_fixed(3, 1);
        let words: Vec<Vec<u32>> = (0..64u32).map(|i| (0..6).map(|k| (i >> (5 - k)) & 1).collect()).collect();
        for m in 0..64u32 {
            let mask: BTreeSet<usize> = (0..6).filter(|k| (m >> (5 - k)) & 1 == 1).map(|k| k + 1).collect();
            for (s, o) in [(&set, &set), (&set, &other), (&other, &set), (&other, &other)] {
                let brute = words.iter().any(|y| {
                    s.contains(y) && {
                        let z: Vec<u32> = y.iter().enumerate().map(|(i, &x)| x ^ u32::from(mask.contains(&(i + 1)))).collect();
                        o.contains(&z)
                    }
                });
                assert_eq!(s.meets(&mask, o).unwrap(), brute, "mask {mask:?}");
            }
        }
    }

    #[test]
    fn schedule_blocks_are_even_and_dense() {
        let s = BlockSchedule::build(&q(1, 3), 3, DEFAULT_BLOCK_CAP).unwrap();
        for k in 0..=3 {
            let (_, len) = s.block(k);
            assert_eq!(len % 2, 0);
            assert!(s.block_masses[k] > Q::one() - &s.eps[k]);
        }
        assert_eq!(s.tail_factor(), q(5, 6));
    }

    #[test]
    fn localized_flip_acts_below_its_vertex() {
        let s = TreeShape::binary01();
        let g = localized_flip(&s, &[1, 0]).unwrap();
        assert_eq!(g.apply_prefix(&Prefix(vec![1, 0, 0])), Prefix(vec![1, 0, 1]));
        assert_eq!(g.apply_prefix(&Prefix(vec![1, 1, 0])), Prefix(vec![1, 1, 0]));
    }

    #[test]
    fn small_dissipative_group() {
        let d = dissipative_group(&coin(), 2, DEFAULT_BLOCK_CAP).unwrap();
        assert!(d.mass_lower_bound() > Q::zero());
        assert!(d.wandering_check(2, 1 << 10).unwrap().disjoint);
    }
}
