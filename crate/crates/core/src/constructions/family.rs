//! The measure family `λ^ω` over a minimal group, built stage by stage, and
//! the compatibility checker for its stage data.
//!
//! Stage `l` works at depth `d = n_{l−1}` (with `n_0 = 1`). For every `y` of
//! length `d` a transporter `t_y` maps `0…0` to `y`, and `g_{y,y'} =
//! t_{y'} t_y⁻¹`. The set `A_{y,y'}` is `[y]` minus the `(n_l − 1)`-cylinders
//! `yz` where `t_y⁻¹` or one of the controlled elements has a nontrivial
//! section, and minus the preimages of those `0…0 z'` where `t_{y'}` does.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::automorphism::Automorphism;
use crate::cocycle::{analyze_sections, ActivityGrowth};
use crate::error::{Error, Result};
use crate::group::{GeneratedGroup, Minimality, DEFAULT_DEDUP_DEPTH};
use crate::measures::{
    format_rational, hellinger, q_to_f64, rng_stream, LevelDistribution, OmegaWord, OverrideTail, ProductMeasure, Q,
};
use crate::tree::{Prefix, ShapeSpec, TreeShape};

pub const DEFAULT_FAMILY_STAGES: usize = 3;

#[derive(Clone, Debug)]
pub struct FamilyOptions {
    pub stages: usize,
    /// Lower bound for the Hellinger distances `H(β_0, β_1)` and `H(β_i, λ_n)`.
    pub separation: f64,
    /// Largest admissible `n_l`.
    pub depth_cap: usize,
    /// Largest level enumerated for transporters.
    pub level_cap: usize,
    /// Node budget for section graphs and nontrivial-section frontiers.
    pub section_cap: usize,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        FamilyOptions {
            stages: DEFAULT_FAMILY_STAGES,
            separation: 0.05,
            depth_cap: 48,
            level_cap: 1 << 14,
            section_cap: 1 << 16,
        }
    }
}

/// An extra cylinder `yz` removed from `A_{y,y'}`; letters are internal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub from: Vec<u32>,
    pub to: Vec<u32>,
    pub cylinder: Vec<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyStage {
    pub stage: usize,
    /// `n_{l−1}`.
    pub depth: usize,
    /// `n_l`.
    pub n: usize,
    /// `1 − 10^{−l}`.
    pub constant: String,
    pub controlled: Vec<String>,
    /// `t_y` for `y` in level order.
    pub transporters: Vec<String>,
    /// Per `y`: the words `z` of length `n − 1 − depth` where `t_y⁻¹` or a
    /// controlled element has a nontrivial section at `yz`.
    pub bad_out: Vec<Vec<Vec<u32>>>,
    /// Per `y'`: the words `z'` where `t_{y'}` has a nontrivial section at `0…0 z'`.
    pub bad_in: Vec<Vec<Vec<u32>>>,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
    /// Exact lower bound on `λ^η(A_{y,y'}) / λ^η([y])` over all pairs and `η`.
    pub mass_ratio_bound: String,
}

impl FamilyStage {
    pub fn constant_q(&self) -> Q {
        stage_constant(self.stage)
    }

    fn relative_depth(&self) -> usize {
        self.n - 1 - self.depth
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureFamily {
    pub shape: ShapeSpec,
    pub beta: [Vec<String>; 2],
    /// `min(H(β_0, β_1), H(β_0, λ_n), H(β_1, λ_n))`.
    pub separation: f64,
    /// `n_1 < n_2 < … < n_L`.
    pub levels: Vec<usize>,
    pub stages: Vec<FamilyStage>,
}

fn stage_constant(l: usize) -> Q {
    Q::one() - Q::new(1.into(), num_traits::pow(num_bigint::BigInt::from(10), l))
}

fn nontrivial(h: &Automorphism) -> Result<bool> {
    h.is_nontrivial().ok_or(Error::NotDecidable)
}

/// Nontrivial sections of `h` one relative level at a time.
#[derive(Clone)]
struct Frontier {
    nodes: Vec<(Vec<u32>, Automorphism)>,
}

impl Frontier {
    fn new(h: Automorphism) -> Result<Self> {
        let nodes = if nontrivial(&h)? { vec![(Vec::new(), h)] } else { Vec::new() };
        Ok(Frontier { nodes })
    }

    fn advance(&mut self, cap: usize) -> Result<()> {
        let mut next = Vec::new();
        for (z, h) in &self.nodes {
            for x in 0..h.arity() {
                let s = h.section_letter(x);
                if nontrivial(&s)? {
                    if next.len() >= cap {
                        return Err(Error::cap("nontrivial sections", cap));
                    }
                    let mut w = z.clone();
                    w.push(x);
                    next.push((w, s));
                }
            }
        }
        self.nodes = next;
        Ok(())
    }

    fn words(&self) -> impl Iterator<Item = &Vec<u32>> {
        self.nodes.iter().map(|(z, _)| z)
    }
}

fn bad_set(h: &Automorphism, r: usize, cap: usize) -> Result<Vec<Vec<u32>>> {
    let mut f = Frontier::new(h.clone())?;
    for _ in 0..r {
        f.advance(cap)?;
    }
    Ok(f.words().cloned().collect())
}

/// First `count` nonidentity elements in shortlex order of their shortest words.
fn controlled_elements(group: &GeneratedGroup, count: usize) -> Result<Vec<(String, Automorphism)>> {
    let mut radius = 1;
    loop {
        let ball = group.ball(radius, DEFAULT_DEDUP_DEPTH, 1 << 14)?;
        if ball.len() > count {
            return Ok(ball[1..=count]
                .iter()
                .map(|b| (group.format_word(&b.word), b.element.clone()))
                .collect());
        }
        if radius > count {
            return Err(Error::NotFound(format!("fewer than {count} nonidentity elements")));
        }
        radius += 1;
    }
}

/// `(words, t_y, t_y|_{0…0})` for every `y` at depth `d`.
fn transporters(group: &GeneratedGroup, d: usize, cap: usize) -> Result<(Vec<String>, Vec<Automorphism>)> {
    let witnesses = match group.minimality_check(d, cap)? {
        Minimality::Transitive { witnesses } => witnesses,
        Minimality::NotTransitive { orbits } => {
            return Err(Error::ConditionFailed {
                condition: format!("level {d} transitivity"),
                witness: format!("{} orbits", orbits.len()),
            })
        }
    };
    let zero = Prefix(vec![0; d]);
    let mut words = Vec::with_capacity(witnesses.len());
    let mut below = Vec::with_capacity(witnesses.len());
    for (i, w) in witnesses.iter().enumerate() {
        let t = group.evaluate(w);
        debug_assert_eq!(group.shape().index_of(&t.apply_prefix(&zero)), i);
        words.push(group.format_word(w));
        below.push(t.section(&zero));
    }
    Ok((words, below))
}

pub fn build_measure_family(
    group: &GeneratedGroup,
    beta: [LevelDistribution; 2],
    opts: &FamilyOptions,
) -> Result<MeasureFamily> {
    let shape = group.shape();
    let q = shape
        .constant_arity()
        .ok_or_else(|| Error::ShapeMismatch("measure families need constant arity".into()))?;
    if beta.iter().any(|b| b.len() != q as usize) {
        return Err(Error::ShapeMismatch(format!("β vectors must have {q} entries")));
    }
    let uniform = LevelDistribution::uniform(q);
    let separation = hellinger(&beta[0], &beta[1])?
        .min(hellinger(&beta[0], &uniform)?)
        .min(hellinger(&beta[1], &uniform)?);
    if separation <= opts.separation {
        return Err(Error::ConditionFailed {
            condition: format!("Hellinger separation > {}", opts.separation),
            witness: format!("{separation}"),
        });
    }
    for (name, g) in group.names().iter().zip(group.generators()) {
        let finitary = match analyze_sections(g, opts.section_cap) {
            Ok(a) => matches!(a.growth, ActivityGrowth::Finitary { .. } | ActivityGrowth::Bounded { .. }),
            Err(Error::NotDecidable) => false,
            Err(e) => return Err(e),
        };
        if !finitary {
            return Err(Error::ConditionFailed {
                condition: "generator with bounded activity".into(),
                witness: name.clone(),
            });
        }
    }
    let controlled = controlled_elements(group, opts.stages)?;

    let mut levels = Vec::with_capacity(opts.stages);
    let mut stages = Vec::with_capacity(opts.stages);
    let mut prev = 1;
    for l in 1..=opts.stages {
        let d = prev;
        let (words, below) = transporters(group, d, opts.level_cap).map_err(|e| Error::StageNotFound {
            stage: l,
            reason: format!("transporters at depth {d}: {e}"),
        })?;
        let ys = shape.enumerate_level(d, opts.level_cap)?;
        // Per y: frontiers of t_y⁻¹|_y and of each controlled element at y.
        let mut out: Vec<Vec<Frontier>> = Vec::with_capacity(ys.len());
        let mut inn: Vec<Frontier> = Vec::with_capacity(ys.len());
        for (y, s) in ys.iter().zip(&below) {
            let mut fs = vec![Frontier::new(s.inverse())?];
            for (_, g) in &controlled[..l] {
                fs.push(Frontier::new(g.section(y))?);
            }
            out.push(fs);
            inn.push(Frontier::new(s.clone())?);
        }
        let threshold = Q::new(1.into(), num_traits::pow(num_bigint::BigInt::from(10), l));
        let mut r = 0;
        let (bad_out, bad_in, worst) = loop {
            let n = d + 1 + r;
            let bad_out: Vec<Vec<Vec<u32>>> = out
                .iter()
                .map(|fs| {
                    let set: BTreeSet<&Vec<u32>> = fs.iter().flat_map(Frontier::words).collect();
                    set.into_iter().cloned().collect()
                })
                .collect();
            let bad_in: Vec<Vec<Vec<u32>>> = inn.iter().map(|f| f.words().cloned().collect()).collect();
            let worst = bad_out.iter().map(Vec::len).max().unwrap_or(0) + bad_in.iter().map(Vec::len).max().unwrap_or(0);
            let size = (d + 1..n).fold(num_bigint::BigInt::one(), |acc, m| acc * shape.arity(m));
            if Q::new(worst.into(), size.clone()) < threshold {
                break (bad_out, bad_in, Q::new(worst.into(), size));
            }
            if n >= opts.depth_cap {
                return Err(Error::StageNotFound {
                    stage: l,
                    reason: format!(
                        "at n = {n} up to {worst} of {size} cylinders below a depth-{d} vertex carry nontrivial sections"
                    ),
                });
            }
            for f in out.iter_mut().flatten().chain(inn.iter_mut()) {
                f.advance(opts.section_cap)?;
            }
            r += 1;
        };
        let n = d + 1 + r;
        levels.push(n);
        stages.push(FamilyStage {
            stage: l,
            depth: d,
            n,
            constant: format_rational(&stage_constant(l)),
            controlled: controlled[..l].iter().map(|(w, _)| w.clone()).collect(),
            transporters: words,
            bad_out,
            bad_in,
            exclusions: Vec::new(),
            mass_ratio_bound: format_rational(&(Q::one() - worst)),
        });
        prev = n;
    }
    Ok(MeasureFamily {
        shape: shape.to_spec(),
        beta: [beta[0].to_strings(), beta[1].to_strings()],
        separation,
        levels,
        stages,
    })
}

impl MeasureFamily {
    pub fn tree(&self) -> Result<TreeShape> {
        TreeShape::from_spec(&self.shape)
    }

    pub fn betas(&self) -> Result<[LevelDistribution; 2]> {
        Ok([LevelDistribution::parse(&self.beta[0])?, LevelDistribution::parse(&self.beta[1])?])
    }

    pub fn stage(&self, l: usize) -> Option<&FamilyStage> {
        self.stages.iter().find(|s| s.stage == l)
    }

    /// `n_i`, continued periodically past the built levels with the last gap.
    pub fn level_index(&self, i: usize) -> usize {
        let big_l = self.levels.len();
        if i <= big_l {
            return self.levels[i - 1];
        }
        let last = self.levels[big_l - 1];
        let before = if big_l >= 2 { self.levels[big_l - 2] } else { 1 };
        last + (i - big_l) * (last - before)
    }

    /// `λ^ω`: `β_{ω_i}` at level `n_i` and Haar elsewhere.
    pub fn measure(&self, omega: &OmegaWord) -> Result<ProductMeasure> {
        let shape = self.tree()?;
        let betas = self.betas()?;
        let big_l = self.levels.len();
        let explicit = big_l.max(omega.word.len());
        let map: BTreeMap<usize, LevelDistribution> = (1..=explicit)
            .map(|i| (self.level_index(i), betas[usize::from(omega.bit(i))].clone()))
            .collect();
        let period = self.level_index(big_l + 1) - self.level_index(big_l);
        let tail = OverrideTail {
            start: self.level_index(explicit + 1),
            period,
            levels: BTreeMap::from([(0, betas[usize::from(omega.tail)].clone())]),
        };
        ProductMeasure::with_overrides(&ProductMeasure::uniform(&shape), map, Some(tail))
    }

    /// `λ^η` with `β_{η_i}` at `n_i` for `i ≤ |η|` only.
    pub fn stage_measure(&self, eta: &[bool]) -> Result<ProductMeasure> {
        let shape = self.tree()?;
        let betas = self.betas()?;
        let map = eta
            .iter()
            .enumerate()
            .map(|(i, &b)| (self.level_index(i + 1), betas[usize::from(b)].clone()))
            .collect();
        ProductMeasure::with_overrides(&ProductMeasure::uniform(&shape), map, None)
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Check every pair when there are at most this many.
    pub pair_cap: usize,
    /// Random pairs added to the star pairs otherwise.
    pub samples: usize,
    pub seed: u64,
    /// Member cylinders enumerated per stage for the RN check.
    pub member_cap: usize,
    pub section_cap: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            pair_cap: 4096,
            samples: 64,
            seed: 0,
            member_cap: 1 << 18,
            section_cap: 1 << 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RnEvidence {
    /// The ratio was compared on every member cylinder.
    Enumerated { members: usize },
    /// Levels strictly between `n_{l−1}` and `n_l` are uniform, so the ratio
    /// at a member `yz` with trivial section is `μ([y'])/μ([y])` identically.
    UniformLevels,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageReport {
    pub stage: usize,
    pub depth: usize,
    pub n: usize,
    pub constant: String,
    pub pairs: usize,
    /// Every pair was checked; otherwise star pairs through `0…0` plus samples.
    pub exhaustive: bool,
    pub min_mass_ratio: String,
    pub min_mass_ratio_f64: f64,
    pub rn: RnEvidence,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompatibilityReport {
    pub stages: Vec<StageReport>,
    pub ergodicity: String,
}

fn failed(condition: &str, shape: &TreeShape, at: &Prefix) -> Error {
    Error::ConditionFailed {
        condition: condition.into(),
        witness: shape.format_prefix(at),
    }
}

/// Re-checks at each listed stage, for the measure `mu`: `μ(A_{y,y'}) >
/// (1 − 10^{−l}) μ([y])`, `g_{y,y'}[y] = [y']`, trivial sections of `g_{y,y'}`
/// and the controlled elements on `A_{y,y'}`, and constancy of
/// `dμ∘g_{y,y'}/dμ` on `A_{y,y'}`. All arithmetic is exact.
pub fn verify_compatibility(
    group: &GeneratedGroup,
    mu: &ProductMeasure,
    family: &MeasureFamily,
    stage_list: &[usize],
    opts: &VerifyOptions,
) -> Result<CompatibilityReport> {
    let mut reports = Vec::new();
    for &l in stage_list {
        let stage = family
            .stage(l)
            .ok_or_else(|| Error::NotFound(format!("stage {l} is not part of the family")))?;
        reports.push(verify_stage(group, mu, stage, opts)?);
    }
    let depths: Vec<String> = reports.iter().map(|r| r.depth.to_string()).collect();
    Ok(CompatibilityReport {
        stages: reports,
        ergodicity: format!(
            "ergodic: compatibility along an unbounded depth sequence implies it; verified at depths {}",
            depths.join(", ")
        ),
    })
}

fn verify_stage(group: &GeneratedGroup, mu: &ProductMeasure, stage: &FamilyStage, opts: &VerifyOptions) -> Result<StageReport> {
    let shape = group.shape();
    let (d, r) = (stage.depth, stage.relative_depth());
    let size = stage.transporters.len();
    let ys = shape.enumerate_level(d, size.max(1))?;
    if ys.len() != size || stage.bad_out.len() != size || stage.bad_in.len() != size {
        return Err(Error::ShapeMismatch(format!("stage {} data does not cover level {d}", stage.stage)));
    }
    let zero = Prefix(vec![0; d]);
    let mut below = Vec::with_capacity(size);
    let mut below_inv = Vec::with_capacity(size);
    for (y, w) in ys.iter().zip(&stage.transporters) {
        let t = group.evaluate(&group.parse_word(w)?);
        if t.apply_prefix(&zero) != *y {
            return Err(failed("transporter maps 0…0 to y", shape, y));
        }
        let s = t.section(&zero);
        below_inv.push(s.inverse());
        below.push(s);
    }
    let controlled: Vec<Automorphism> = stage
        .controlled
        .iter()
        .map(|w| Ok(group.evaluate(&group.parse_word(w)?)))
        .collect::<Result<_>>()?;

    let exhaustive = size.saturating_mul(size) <= opts.pair_cap;
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    if exhaustive {
        pairs.extend((0..size).flat_map(|i| (0..size).map(move |j| (i, j))));
    } else {
        pairs.extend((0..size).flat_map(|i| [(i, 0), (0, i)]));
        let mut rng = rng_stream(opts.seed, 5);
        for _ in 0..opts.samples {
            pairs.insert((rng.gen_range(0..size), rng.gen_range(0..size)));
        }
    }
    let mut excluded: BTreeMap<(usize, usize), Vec<Vec<u32>>> = BTreeMap::new();
    for e in &stage.exclusions {
        let key = (shape.index_of(&Prefix(e.from.clone())), shape.index_of(&Prefix(e.to.clone())));
        pairs.insert(key);
        excluded.entry(key).or_default().push(e.cylinder.clone());
    }

    let uniform = (d + 1..stage.n).all(|m| mu.is_uniform_at(m));
    let members_per_pair = shape.level_count(stage.n - 1, usize::MAX)? / size;
    let enumerate = pairs.len().saturating_mul(members_per_pair) <= opts.member_cap;
    if !uniform && !enumerate {
        return Err(Error::cap("member cylinders for the RN check", opts.member_cap));
    }
    let relative: Vec<Vec<u32>> = if enumerate {
        (0..members_per_pair)
            .map(|k| {
                let mut z = vec![0u32; r];
                let mut k = k;
                for i in (0..r).rev() {
                    let a = shape.arity(d + i + 1) as usize;
                    z[i] = (k % a) as u32;
                    k /= a;
                }
                z
            })
            .collect()
    } else {
        Vec::new()
    };

    let constant = stage.constant_q();
    let mut min_ratio: Option<Q> = None;
    let mut controlled_bad: Vec<Option<BTreeSet<Vec<u32>>>> = vec![None; size];
    let mut members = 0usize;
    for &(i, j) in &pairs {
        let (y, y2) = (&ys[i], &ys[j]);
        let mut removed: BTreeSet<Vec<u32>> = stage.bad_out[i].iter().cloned().collect();
        for z2 in &stage.bad_in[j] {
            removed.insert(below[i].apply_prefix(&Prefix(z2.clone())).0);
        }
        if let Some(extra) = excluded.get(&(i, j)) {
            removed.extend(extra.iter().cloned());
        }
        let cyl = |z: &[u32]| y.concat(&Prefix(z.to_vec()));

        // g_{y,y'}|_y = t_{y'}|_{0…0} ∘ (t_y|_{0…0})⁻¹.
        let h = below[j].compose(&below_inv[i]);
        for z in bad_set(&h, r, opts.section_cap)? {
            if !removed.contains(&z) {
                return Err(failed("g_{y,y'} changes only the first n_l − 1 coordinates on A_{y,y'}", shape, &cyl(&z)));
            }
        }
        if controlled_bad[i].is_none() {
            let mut set = BTreeSet::new();
            for g in &controlled {
                set.extend(bad_set(&g.section(y), r, opts.section_cap)?);
            }
            controlled_bad[i] = Some(set);
        }
        if let Some(z) = controlled_bad[i].as_ref().unwrap().iter().find(|z| !removed.contains(*z)) {
            return Err(failed("controlled elements change only the first n_l − 1 coordinates on A_{y,y'}", shape, &cyl(z)));
        }

        let my = mu.cylinder_measure(y);
        let lost: Q = removed.iter().map(|z| mu.cylinder_measure(&cyl(z))).sum();
        let ratio = (&my - lost) / &my;
        if ratio <= constant {
            let witness = removed.iter().next().map(|z| cyl(z)).unwrap_or_else(|| y.clone());
            return Err(Error::ConditionFailed {
                condition: format!(
                    "μ(A_{{y,y'}}) > {} μ([y]) (ratio {})",
                    format_rational(&constant),
                    format_rational(&ratio)
                ),
                witness: shape.format_prefix(&witness),
            });
        }
        if min_ratio.as_ref().is_none_or(|m| ratio < *m) {
            min_ratio = Some(ratio);
        }

        if enumerate {
            let target = mu.cylinder_measure(y2) / &my;
            for z in relative.iter().filter(|z| !removed.contains(*z)) {
                let image = y2.concat(&h.apply_prefix(&Prefix(z.clone())));
                if mu.cylinder_measure(&image) / mu.cylinder_measure(&cyl(z)) != target {
                    return Err(failed("dμ∘g_{y,y'}/dμ = μ([y'])/μ([y]) on A_{y,y'}", shape, &cyl(z)));
                }
                members += 1;
            }
        }
    }
    let min_ratio = min_ratio.unwrap_or_else(Q::zero);
    Ok(StageReport {
        stage: stage.stage,
        depth: d,
        n: stage.n,
        constant: stage.constant.clone(),
        pairs: pairs.len(),
        exhaustive,
        min_mass_ratio_f64: q_to_f64(&min_ratio),
        min_mass_ratio: format_rational(&min_ratio),
        rn: if enumerate { RnEvidence::Enumerated { members } } else { RnEvidence::UniformLevels },
    })
}
