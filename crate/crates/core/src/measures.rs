//! Infinite product measures `μ = ⊗ μ_n` with exact rational levels.
//!
//! Square roots and logarithms (Hellinger affinity, entropy, log-products)
//! are evaluated in `f64`; comparisons on them use [`FLOAT_TOL`].

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{Prefix, TreeShape};
use crate::verdict::Evidence;

pub type Q = BigRational;

pub const FLOAT_TOL: f64 = 1e-12;

/// Default natural-log threshold below which a partial Kakutani product is
/// reported as orthogonal.
pub const DEFAULT_LOG_THRESHOLD: f64 = -60.0;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn q_to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // Very small or large values: go through logs of numerator/denominator.
        (ln_bigint(x.numer()) - ln_bigint(x.denom())).exp()
    })
}

/// Natural log of a positive rational, safe for huge numerators/denominators.
pub fn ln_q(x: &Q) -> f64 {
    ln_bigint(x.numer()) - ln_bigint(x.denom())
}

fn ln_bigint(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits < 1000 {
        return n.to_f64().unwrap().abs().ln();
    }
    let shift = bits - 60;
    let top: BigInt = n.abs() >> shift;
    top.to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// Parses `"p/q"` or an integer string.
pub fn parse_rational(s: &str) -> Result<Q> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = n.parse().map_err(|_| Error::Parse(format!("bad numerator in {s:?}")))?;
    let d: BigInt = d.parse().map_err(|_| Error::Parse(format!("bad denominator in {s:?}")))?;
    if d.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(Q::new(n, d))
}

pub fn format_rational(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub(crate) fn ser_q<S: serde::Serializer>(x: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(x))
}

pub(crate) fn ser_opt_q<S: serde::Serializer>(x: &Option<Q>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&format_rational(v)),
        None => s.serialize_none(),
    }
}

/// A nondegenerate probability vector on one level.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LevelDistribution {
    probs: Vec<Q>,
}

impl fmt::Debug for LevelDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v: Vec<String> = self.probs.iter().map(format_rational).collect();
        write!(f, "({})", v.join(", "))
    }
}

impl LevelDistribution {
    pub fn new(probs: Vec<Q>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution("needs at least two letters".into()));
        }
        if probs.iter().any(|p| !p.is_positive()) {
            return Err(Error::InvalidDistribution(format!(
                "{:?} has a non-positive entry",
                probs.iter().map(format_rational).collect::<Vec<_>>()
            )));
        }
        let total: Q = probs.iter().sum();
        if !total.is_one() {
            return Err(Error::InvalidDistribution(format!("entries sum to {}", format_rational(&total))));
        }
        Ok(LevelDistribution { probs })
    }

    pub fn parse(entries: &[impl AsRef<str>]) -> Result<Self> {
        LevelDistribution::new(entries.iter().map(|s| parse_rational(s.as_ref())).collect::<Result<_>>()?)
    }

    pub fn uniform(q: u32) -> Self {
        LevelDistribution {
            probs: vec![Q::new(BigInt::one(), BigInt::from(q)); q as usize],
        }
    }

    /// `(p0, 1 − p0)` on two letters.
    pub fn binary(p0: Q) -> Result<Self> {
        LevelDistribution::new(vec![p0.clone(), Q::one() - p0])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, x: u32) -> &Q {
        &self.probs[x as usize]
    }

    pub fn probs(&self) -> &[Q] {
        &self.probs
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.probs.iter().map(q_to_f64).collect()
    }

    pub fn max(&self) -> &Q {
        self.probs.iter().max().unwrap()
    }

    pub fn is_uniform(&self) -> bool {
        self.probs.iter().all(|p| *p == self.probs[0])
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.probs.iter().map(format_rational).collect()
    }
}

fn same_support(a: &LevelDistribution, b: &LevelDistribution) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("distributions on {} and {} letters", a.len(), b.len())));
    }
    Ok(())
}

/// `Σ √(α(b) β(b)) = 1 − H²(α, β)`.
pub fn hellinger_affinity(a: &LevelDistribution, b: &LevelDistribution) -> Result<f64> {
    same_support(a, b)?;
    Ok(a.to_f64().iter().zip(b.to_f64()).map(|(x, y)| (x * y).sqrt()).sum())
}

/// `H(α, β) = 2^{-1/2} (Σ (√α(b) − √β(b))²)^{1/2}`.
pub fn hellinger(a: &LevelDistribution, b: &LevelDistribution) -> Result<f64> {
    same_support(a, b)?;
    let s: f64 = a
        .to_f64()
        .iter()
        .zip(b.to_f64())
        .map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2))
        .sum();
    Ok((s / 2.0).sqrt())
}

/// Shannon entropy in nats.
pub fn entropy(a: &LevelDistribution) -> f64 {
    a.to_f64().iter().map(|p| -p * p.ln()).sum()
}

/// Periodic override rule: at levels `n ≥ start` with `(n − start) mod period`
/// in `levels`, the listed distribution replaces the base one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverrideTail {
    pub start: usize,
    pub period: usize,
    pub levels: BTreeMap<usize, LevelDistribution>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Rule {
    Uniform,
    Bernoulli(LevelDistribution),
    Explicit {
        head: Vec<LevelDistribution>,
        tail: Vec<LevelDistribution>,
    },
    Overrides {
        base: Box<ProductMeasure>,
        map: BTreeMap<usize, LevelDistribution>,
        tail: Option<OverrideTail>,
    },
}

/// `μ = ⊗_{n≥1} μ_n` on `X`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductMeasure {
    shape: TreeShape,
    rule: Rule,
    uniform: Vec<LevelDistribution>,
}

impl ProductMeasure {
    fn build(shape: &TreeShape, rule: Rule) -> Result<Self> {
        let classes = shape.head_len() + shape.period_len();
        let uniform = (0..classes).map(|c| LevelDistribution::uniform(shape.child_arity(c))).collect();
        let m = ProductMeasure {
            shape: shape.clone(),
            rule,
            uniform,
        };
        let (t, p) = m.periodicity();
        for n in 1..=t + p {
            if m.level(n).len() != shape.arity(n) as usize {
                return Err(Error::ShapeMismatch(format!(
                    "level {n} distribution has {} letters, arity is {}",
                    m.level(n).len(),
                    shape.arity(n)
                )));
            }
        }
        Ok(m)
    }

    /// Haar measure `λ`.
    pub fn uniform(shape: &TreeShape) -> Self {
        ProductMeasure::build(shape, Rule::Uniform).unwrap()
    }

    pub fn bernoulli(shape: &TreeShape, dist: LevelDistribution) -> Result<Self> {
        if shape.constant_arity().is_none() {
            return Err(Error::ShapeMismatch("Bernoulli measures need constant arity".into()));
        }
        ProductMeasure::build(shape, Rule::Bernoulli(dist))
    }

    pub fn explicit(shape: &TreeShape, head: Vec<LevelDistribution>, tail: Vec<LevelDistribution>) -> Result<Self> {
        if tail.is_empty() {
            return Err(Error::InvalidDistribution("explicit measure needs a nonempty tail".into()));
        }
        ProductMeasure::build(shape, Rule::Explicit { head, tail })
    }

    pub fn with_overrides(
        base: &ProductMeasure,
        map: BTreeMap<usize, LevelDistribution>,
        tail: Option<OverrideTail>,
    ) -> Result<Self> {
        if map.contains_key(&0) {
            return Err(Error::InvalidDistribution("levels start at 1".into()));
        }
        if let Some(t) = &tail {
            if t.period == 0 || t.start == 0 || t.levels.keys().any(|&k| k >= t.period) {
                return Err(Error::InvalidDistribution("malformed override tail".into()));
            }
        }
        ProductMeasure::build(
            &base.shape,
            Rule::Overrides {
                base: Box::new(base.clone()),
                map,
                tail,
            },
        )
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    /// `μ_n` for `n ≥ 1`.
    pub fn level(&self, n: usize) -> &LevelDistribution {
        match &self.rule {
            Rule::Uniform => &self.uniform[self.shape.depth_class(n - 1)],
            Rule::Bernoulli(d) => d,
            Rule::Explicit { head, tail } => {
                if n <= head.len() {
                    &head[n - 1]
                } else {
                    &tail[(n - 1 - head.len()) % tail.len()]
                }
            }
            Rule::Overrides { base, map, tail } => {
                if let Some(d) = map.get(&n) {
                    return d;
                }
                if let Some(t) = tail {
                    if n >= t.start {
                        if let Some(d) = t.levels.get(&((n - t.start) % t.period)) {
                            return d;
                        }
                    }
                }
                base.level(n)
            }
        }
    }

    /// `(T, P)` with `μ_{n+P} = μ_n` for every `n > T`.
    pub fn periodicity(&self) -> (usize, usize) {
        let (sh, sp) = (self.shape.head_len(), self.shape.period_len());
        match &self.rule {
            Rule::Uniform => (sh, sp),
            Rule::Bernoulli(_) => (0, 1),
            Rule::Explicit { head, tail } => (head.len(), tail.len()),
            Rule::Overrides { base, map, tail } => {
                let (bt, bp) = base.periodicity();
                let mut t = bt.max(map.keys().max().copied().unwrap_or(0));
                let mut p = bp;
                if let Some(o) = tail {
                    t = t.max(o.start - 1);
                    p = p.lcm(&o.period);
                }
                (t, p)
            }
        }
    }

    /// Levels at which this measure is known to differ from its base
    /// (only meaningful for override measures).
    pub fn override_levels(&self) -> Vec<usize> {
        match &self.rule {
            Rule::Overrides { map, .. } => map.keys().copied().collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_uniform_at(&self, n: usize) -> bool {
        self.level(n).is_uniform()
    }

    /// `μ([y])`, exactly.
    pub fn cylinder_measure(&self, y: &Prefix) -> Q {
        self.cylinder_measure_from(0, y)
    }

    /// Mass of a word placed at levels `offset+1, …, offset+|y|`.
    pub fn cylinder_measure_from(&self, offset: usize, y: &Prefix) -> Q {
        y.letters()
            .iter()
            .enumerate()
            .fold(Q::one(), |acc, (i, &x)| acc * self.level(offset + i + 1).get(x))
    }

    pub fn set_measure<'a>(&self, set: impl IntoIterator<Item = &'a Prefix>) -> Q {
        set.into_iter().map(|y| self.cylinder_measure(y)).sum()
    }

    /// Draws a depth-`depth` prefix from a fresh generator seeded with `seed`.
    pub fn sample(&self, depth: usize, seed: u64) -> Prefix {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, 0, depth)
    }

    /// Letters at levels `offset+1 ..= offset+depth` drawn from `rng`.
    pub fn sample_with(&self, rng: &mut impl Rng, offset: usize, depth: usize) -> Prefix {
        Prefix(
            (1..=depth)
                .map(|i| {
                    let probs = self.level(offset + i).to_f64();
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    for (x, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            return x as u32;
                        }
                    }
                    probs.len() as u32 - 1
                })
                .collect(),
        )
    }
}

/// Deterministic generator for sub-stream `stream` of `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KakutaniVerdict {
    Equivalent,
    Orthogonal,
    Undecided,
}

#[derive(Clone, Debug, Serialize)]
pub struct KakutaniRow {
    pub n: usize,
    pub affinity: f64,
    pub cumulative_log: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct KakutaniReport {
    pub verdict: KakutaniVerdict,
    pub evidence: Evidence,
    /// Affinities over one period of the tail, when the closed form applied.
    pub tail_affinities: Vec<f64>,
    pub trace: Vec<KakutaniRow>,
}

impl KakutaniReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,affinity,cumulative_log\n");
        for r in &self.trace {
            s.push_str(&format!("{},{:.15},{:.15}\n", r.n, r.affinity, r.cumulative_log));
        }
        s
    }
}

/// Kakutani dichotomy on eventually periodic product measures.
///
/// With `closed_form`, the verdict comes from one period of the common tail:
/// identical tails give `Equivalent` (finitely many factors, each positive),
/// any tail factor below one gives `Orthogonal`. Otherwise only a crossing of
/// `log_threshold` by the partial log-product decides.
pub fn kakutani_classify(
    mu: &ProductMeasure,
    nu: &ProductMeasure,
    horizon: usize,
    log_threshold: f64,
    closed_form: bool,
) -> Result<KakutaniReport> {
    if mu.shape != nu.shape {
        return Err(Error::ShapeMismatch("measures live on different trees".into()));
    }
    let mut trace = Vec::with_capacity(horizon);
    let mut cum = 0.0;
    for n in 1..=horizon {
        let a = if mu.level(n) == nu.level(n) { 1.0 } else { hellinger_affinity(mu.level(n), nu.level(n))? };
        cum += a.ln();
        trace.push(KakutaniRow {
            n,
            affinity: a,
            cumulative_log: cum,
        });
    }
    if closed_form {
        let (tm, pm) = mu.periodicity();
        let (tn, pn) = nu.periodicity();
        let t = tm.max(tn).max(mu.shape.head_len());
        let p = pm.lcm(&pn).lcm(&mu.shape.period_len());
        let mut tail = Vec::with_capacity(p);
        let mut identical = true;
        for n in t + 1..=t + p {
            if mu.level(n) == nu.level(n) {
                tail.push(1.0);
            } else {
                identical = false;
                tail.push(hellinger_affinity(mu.level(n), nu.level(n))?);
            }
        }
        let verdict = if identical { KakutaniVerdict::Equivalent } else { KakutaniVerdict::Orthogonal };
        return Ok(KakutaniReport {
            verdict,
            evidence: Evidence::ClosedForm,
            tail_affinities: tail,
            trace,
        });
    }
    let (verdict, evidence) = if cum < log_threshold {
        (KakutaniVerdict::Orthogonal, Evidence::Threshold)
    } else {
        (KakutaniVerdict::Undecided, Evidence::Inconclusive)
    };
    Ok(KakutaniReport {
        verdict,
        evidence,
        tail_affinities: Vec::new(),
        trace,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct NonatomicityCertificate {
    pub certified: bool,
    pub evidence: Evidence,
    /// Least `n ≤ horizon` with `∏_{i≤n} max μ_i < threshold`.
    pub witness_depth: Option<usize>,
    /// Product of the per-level maxima over one tail period.
    pub period_max_product: String,
}

/// Certifies `∏ max_x μ_n(x) = 0`.
pub fn nonatomicity_certificate(mu: &ProductMeasure, horizon: usize, threshold: f64) -> NonatomicityCertificate {
    let thr = Q::from_float(threshold).unwrap_or_else(Q::zero);
    let mut acc = Q::one();
    let mut witness = None;
    for n in 1..=horizon {
        acc *= mu.level(n).max();
        if acc < thr {
            witness = Some(n);
            break;
        }
    }
    let (t, p) = mu.periodicity();
    let period: Q = (t + 1..=t + p).map(|n| mu.level(n).max().clone()).product();
    let closed = period < Q::one();
    NonatomicityCertificate {
        certified: closed || witness.is_some(),
        evidence: if closed {
            Evidence::ClosedForm
        } else if witness.is_some() {
            Evidence::Threshold
        } else {
            Evidence::Inconclusive
        },
        witness_depth: witness,
        period_max_product: format_rational(&period),
    }
}

pub(crate) fn bernoulli_dist(mu: &ProductMeasure) -> Result<&LevelDistribution> {
    match &mu.rule {
        Rule::Bernoulli(d) => Ok(d),
        Rule::Uniform if mu.shape.constant_arity().is_some() => Ok(mu.level(1)),
        _ => Err(Error::InvalidDistribution("a Bernoulli measure is required".into())),
    }
}

/// Shannon–McMillan set `Y_{n,δ} = {y : |n⁻¹ log μ(y) + h| < δ}`.
pub fn sm_typical_set(mu: &ProductMeasure, n: usize, delta: f64, cap: usize) -> Result<Vec<Prefix>> {
    let d = bernoulli_dist(mu)?;
    let h = entropy(d);
    let logs: Vec<f64> = d.to_f64().iter().map(|p| p.ln()).collect();
    Ok(mu
        .shape
        .enumerate_level(n, cap)?
        .into_iter()
        .filter(|y| {
            let l: f64 = y.letters().iter().map(|&x| logs[x as usize]).sum();
            (l / n as f64 + h).abs() < delta
        })
        .collect())
}

/// `B_{λ,n,ε} = {y ∈ {0,1}^n : |n⁻¹(y_1+⋯+y_n) − λ| < ε}`, exactly.
pub fn wlln_set(shape: &TreeShape, mean: &Q, n: usize, eps: &Q, cap: usize) -> Result<Vec<Prefix>> {
    if (1..=n).any(|l| shape.arity(l) != 2) {
        return Err(Error::ShapeMismatch("binary letters required".into()));
    }
    let nn = Q::from_integer(BigInt::from(n));
    Ok(shape
        .enumerate_level(n, cap)?
        .into_iter()
        .filter(|y| {
            let s: u32 = y.letters().iter().sum();
            (Q::from_integer(BigInt::from(s)) / &nn - mean).abs() < *eps
        })
        .collect())
}

/// A finitely represented `ω ∈ {0,1}^ℕ`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OmegaWord {
    pub word: Vec<bool>,
    pub tail: bool,
}

impl OmegaWord {
    pub fn constant(bit: bool) -> Self {
        OmegaWord {
            word: Vec::new(),
            tail: bit,
        }
    }

    pub fn new(word: Vec<bool>, tail: bool) -> Self {
        OmegaWord { word, tail }
    }

    /// `ω_i` for `i ≥ 1`.
    pub fn bit(&self, i: usize) -> bool {
        self.word.get(i - 1).copied().unwrap_or(self.tail)
    }

    /// Parses e.g. `"0110"` with tail bit.
    pub fn parse(word: &str, tail: bool) -> Result<Self> {
        let bits = word
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Parse(format!("bad omega letter {c:?}"))),
            })
            .collect::<Result<_>>()?;
        Ok(OmegaWord { word: bits, tail })
    }
}

impl fmt::Display for OmegaWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.word {
            write!(f, "{}", u8::from(b))?;
        }
        write!(f, "({})^∞", u8::from(self.tail))
    }
}

/// Agreement beyond some finite position.
pub fn tail_equivalent(a: &OmegaWord, b: &OmegaWord) -> bool {
    a.tail == b.tail
}

/// JSON form of a product measure; rationals are `"p/q"` strings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeasureSpec {
    Uniform,
    Bernoulli {
        probs: Vec<String>,
    },
    Explicit {
        #[serde(default)]
        head: Vec<Vec<String>>,
        tail: Vec<Vec<String>>,
    },
    Overrides {
        base: Box<MeasureSpec>,
        #[serde(default)]
        levels: BTreeMap<String, Vec<String>>,
        #[serde(default)]
        tail: Option<OverrideTailSpec>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OverrideTailSpec {
    pub start: usize,
    pub period: usize,
    pub levels: BTreeMap<String, Vec<String>>,
}

impl MeasureSpec {
    pub fn build(&self, shape: &TreeShape) -> Result<ProductMeasure> {
        let dists = |v: &[Vec<String>]| v.iter().map(|d| LevelDistribution::parse(d)).collect::<Result<Vec<_>>>();
        let map = |m: &BTreeMap<String, Vec<String>>| {
            m.iter()
                .map(|(k, d)| {
                    let k: usize = k.parse().map_err(|_| Error::Parse(format!("bad level key {k:?}")))?;
                    Ok((k, LevelDistribution::parse(d)?))
                })
                .collect::<Result<BTreeMap<_, _>>>()
        };
        match self {
            MeasureSpec::Uniform => Ok(ProductMeasure::uniform(shape)),
            MeasureSpec::Bernoulli { probs } => ProductMeasure::bernoulli(shape, LevelDistribution::parse(probs)?),
            MeasureSpec::Explicit { head, tail } => ProductMeasure::explicit(shape, dists(head)?, dists(tail)?),
            MeasureSpec::Overrides { base, levels, tail } => {
                let base = base.build(shape)?;
                let tail = match tail {
                    Some(t) => Some(OverrideTail {
                        start: t.start,
                        period: t.period,
                        levels: map(&t.levels)?,
                    }),
                    None => None,
                };
                ProductMeasure::with_overrides(&base, map(levels)?, tail)
            }
        }
    }
}

impl ProductMeasure {
    pub fn to_spec(&self) -> MeasureSpec {
        let strs = |v: &[LevelDistribution]| v.iter().map(LevelDistribution::to_strings).collect();
        let map = |m: &BTreeMap<usize, LevelDistribution>| m.iter().map(|(k, d)| (k.to_string(), d.to_strings())).collect();
        match &self.rule {
            Rule::Uniform => MeasureSpec::Uniform,
            Rule::Bernoulli(d) => MeasureSpec::Bernoulli { probs: d.to_strings() },
            Rule::Explicit { head, tail } => MeasureSpec::Explicit {
                head: strs(head),
                tail: strs(tail),
            },
            Rule::Overrides { base, map: m, tail } => MeasureSpec::Overrides {
                base: Box::new(base.to_spec()),
                levels: map(m),
                tail: tail.as_ref().map(|t| OverrideTailSpec {
                    start: t.start,
                    period: t.period,
                    levels: map(&t.levels),
                }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bern(p0: Q) -> ProductMeasure {
        ProductMeasure::bernoulli(&TreeShape::binary01(), LevelDistribution::binary(p0).unwrap()).unwrap()
    }

    #[test]
    fn cylinder_masses() {
        let haar = ProductMeasure::uniform(&TreeShape::constant(2));
        assert_eq!(haar.cylinder_measure(&Prefix(vec![0, 1, 1])), q(1, 8));
        let b = bern(q(2, 3));
        assert_eq!(b.cylinder_measure(&Prefix(vec![1, 0])), q(2, 9));
        assert_eq!(b.cylinder_measure(&Prefix::root()), Q::one());
    }

    #[test]
    fn hellinger_values() {
        let a = LevelDistribution::uniform(2);
        let b = LevelDistribution::binary(q(1, 4)).unwrap();
        assert_eq!(hellinger(&a, &a).unwrap(), 0.0);
        let aff = hellinger_affinity(&a, &b).unwrap();
        assert!((aff - 0.965926).abs() < 1e-6);
        let brute: f64 = [(0.5f64, 0.25f64), (0.5, 0.75)].iter().map(|(x, y)| (x * y).sqrt()).sum();
        assert!((aff - brute).abs() < 1e-15);
        assert!(LevelDistribution::binary(Q::one()).is_err());
    }

    #[test]
    fn parse_rationals() {
        assert_eq!(parse_rational("2/6").unwrap(), q(1, 3));
        assert_eq!(parse_rational("1").unwrap(), Q::one());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn kakutani_examples() {
        let shape = TreeShape::binary01();
        let haar = ProductMeasure::uniform(&shape);
        let r = kakutani_classify(&haar, &haar, 20, DEFAULT_LOG_THRESHOLD, true).unwrap();
        assert_eq!(r.verdict, KakutaniVerdict::Equivalent);
        let b = bern(q(1, 4));
        let r = kakutani_classify(&haar, &b, 20, DEFAULT_LOG_THRESHOLD, true).unwrap();
        assert_eq!(r.verdict, KakutaniVerdict::Orthogonal);
        assert_eq!(r.evidence, Evidence::ClosedForm);
        assert!((r.tail_affinities[0] - 0.965926).abs() < 1e-6);
        let r = kakutani_classify(&haar, &b, 20, DEFAULT_LOG_THRESHOLD, false).unwrap();
        assert_eq!(r.verdict, KakutaniVerdict::Undecided);
        let r = kakutani_classify(&haar, &b, 2000, DEFAULT_LOG_THRESHOLD, false).unwrap();
        assert_eq!(r.verdict, KakutaniVerdict::Orthogonal);
        assert_eq!(r.evidence, Evidence::Threshold);
        assert!(r.to_csv().starts_with("n,affinity,cumulative_log\n1,"));
    }

    #[test]
    fn finite_overrides_are_equivalent() {
        let shape = TreeShape::binary01();
        let haar = ProductMeasure::uniform(&shape);
        let mut m = BTreeMap::new();
        m.insert(3, LevelDistribution::binary(q(1, 3)).unwrap());
        let o = ProductMeasure::with_overrides(&haar, m, None).unwrap();
        let r = kakutani_classify(&haar, &o, 10, DEFAULT_LOG_THRESHOLD, true).unwrap();
        assert_eq!(r.verdict, KakutaniVerdict::Equivalent);
        assert!(r.trace[2].affinity < 1.0);
        assert_eq!(o.cylinder_measure(&Prefix(vec![0, 0, 0])), q(1, 12));
    }

    #[test]
    fn nonatomicity() {
        let shape = TreeShape::binary01();
        let c = nonatomicity_certificate(&ProductMeasure::uniform(&shape), 10, 1e-9);
        assert!(c.certified);
        assert_eq!(c.evidence, Evidence::ClosedForm);
        assert_eq!(c.period_max_product, "1/2");
        let c = nonatomicity_certificate(&bern(q(2, 3)), 100, 1e-9);
        assert_eq!(c.witness_depth, Some(52));
    }

    #[test]
    fn entropy_values() {
        assert!((entropy(&LevelDistribution::uniform(2)) - 2f64.ln()).abs() < 1e-15);
        let h = entropy(&LevelDistribution::binary(q(2, 3)).unwrap());
        assert!((h - (3f64.ln() - 2.0 / 3.0 * 2f64.ln())).abs() < 1e-15);
        assert!((h - 0.6365).abs() < 1e-4);
    }

    #[test]
    fn typical_set_mass_grows() {
        let b = bern(q(2, 3));
        let masses: Vec<f64> = [6, 9, 12]
            .iter()
            .map(|&n| q_to_f64(&b.set_measure(&sm_typical_set(&b, n, 0.2, 1 << 16).unwrap())))
            .collect();
        assert!(masses[0] <= masses[1] && masses[1] <= masses[2], "{masses:?}");
        assert!(masses[2] < 1.0);
    }

    #[test]
    fn wlln_sets() {
        let s = TreeShape::binary01();
        let b = wlln_set(&s, &q(1, 2), 2, &q(3, 10), 64).unwrap();
        assert_eq!(b, vec![Prefix(vec![0, 1]), Prefix(vec![1, 0])]);
        assert_eq!(wlln_set(&s, &q(1, 2), 5, &Q::one(), 64).unwrap().len(), 32);
        // binomial oracle, n = 10, p(1) = 1/3, window |k/10 − 1/3| < 1/5
        let mu = bern(q(2, 3));
        let set = wlln_set(&s, &q(1, 3), 10, &q(1, 5), 1 << 12).unwrap();
        let mass = mu.set_measure(&set);
        let binom = |n: u64, k: u64| -> u64 { (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1)) };
        let oracle: Q = (2..=5u64)
            .map(|k| {
                Q::from_integer(BigInt::from(binom(10, k) * 2u64.pow(10 - k as u32))) / Q::from_integer(BigInt::from(3u64.pow(10)))
            })
            .sum();
        assert_eq!(mass, oracle);
    }

    #[test]
    fn omega_words() {
        let z = OmegaWord::constant(false);
        let one = OmegaWord::parse("1", false).unwrap();
        assert!(tail_equivalent(&z, &one));
        assert!(!tail_equivalent(&z, &OmegaWord::constant(true)));
        assert!(tail_equivalent(&one, &one));
        assert!(one.bit(1) && !one.bit(2));
    }

    #[test]
    fn sampling_is_reproducible() {
        let haar = ProductMeasure::uniform(&TreeShape::binary01());
        let a = haar.sample(5, 20240601);
        assert_eq!(a, haar.sample(5, 20240601));
        assert_eq!(a, Prefix(vec![1, 1, 0, 1, 1]));
        let b = bern(q(2, 3));
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let n = 100_000;
        let zeros = (0..n).filter(|_| b.sample_with(&mut rng, 0, 1).letters()[0] == 0).count() as f64;
        let sigma = (n as f64 * (2.0 / 9.0)).sqrt();
        assert!((zeros - n as f64 * 2.0 / 3.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn spec_roundtrip() {
        let json = r#"{"kind":"overrides","base":{"kind":"uniform"},"levels":{"2":["1/3","2/3"]},
                       "tail":{"start":5,"period":3,"levels":{"0":["2/3","1/3"]}}}"#;
        let spec: MeasureSpec = serde_json::from_str(json).unwrap();
        let m = spec.build(&TreeShape::binary01()).unwrap();
        assert_eq!(*m.level(2).get(0), q(1, 3));
        assert_eq!(*m.level(8).get(0), q(2, 3));
        assert!(m.level(9).is_uniform());
        assert_eq!(m.to_spec().build(&TreeShape::binary01()).unwrap(), m);
        let bad: MeasureSpec = serde_json::from_str(r#"{"kind":"bernoulli","probs":["1/0","1"]}"#).unwrap();
        assert!(bad.build(&TreeShape::binary01()).is_err());
    }

    fn random_measure() -> impl Strategy<Value = ProductMeasure> {
        prop::collection::vec(1i64..20, 2..8).prop_map(|w| {
            let total: i64 = w.iter().sum();
            let shape = TreeShape::binary01();
            let dists: Vec<LevelDistribution> = w
                .chunks(2)
                .filter(|c| c.len() == 2)
                .map(|c| LevelDistribution::new(vec![q(c[0], c[0] + c[1]), q(c[1], c[0] + c[1])]).unwrap())
                .collect();
            let _ = total;
            ProductMeasure::explicit(&shape, dists[..dists.len() - 1].to_vec(), vec![dists.last().unwrap().clone()])
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn additivity(mu in random_measure(), letters in prop::collection::vec(0u32..2, 0..10)) {
            let y = Prefix(letters);
            let children: Q = (0..2).map(|a| mu.cylinder_measure(&y.child(a))).sum();
            prop_assert_eq!(mu.cylinder_measure(&y), children);
        }

        #[test]
        fn hellinger_laws(a in 1i64..50, b in 1i64..50, c in 1i64..50, d in 1i64..50) {
            let x = LevelDistribution::new(vec![q(a, a + b), q(b, a + b)]).unwrap();
            let y = LevelDistribution::new(vec![q(c, c + d), q(d, c + d)]).unwrap();
            let h = hellinger(&x, &y).unwrap();
            prop_assert!((h - hellinger(&y, &x).unwrap()).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&h));
            prop_assert!((hellinger_affinity(&x, &y).unwrap() + h * h - 1.0).abs() < 1e-14);
            prop_assert!(hellinger(&x, &x).unwrap() < 1e-15);
        }

        #[test]
        fn kakutani_symmetric(mu in random_measure(), nu in random_measure()) {
            let a = kakutani_classify(&mu, &nu, 12, DEFAULT_LOG_THRESHOLD, true).unwrap();
            let b = kakutani_classify(&nu, &mu, 12, DEFAULT_LOG_THRESHOLD, true).unwrap();
            prop_assert_eq!(a.verdict, b.verdict);
            let s = kakutani_classify(&mu, &mu.clone(), 12, DEFAULT_LOG_THRESHOLD, true).unwrap();
            prop_assert_eq!(s.verdict, KakutaniVerdict::Equivalent);
        }

        #[test]
        fn overrides_differ_only_at_listed_levels(levels in prop::collection::btree_set(1usize..20, 0..5)) {
            let shape = TreeShape::binary01();
            let haar = ProductMeasure::uniform(&shape);
            let map = levels.iter().map(|&n| (n, LevelDistribution::binary(q(1, 3)).unwrap())).collect();
            let o = ProductMeasure::with_overrides(&haar, map, None).unwrap();
            for n in 1..25 {
                prop_assert_eq!(o.level(n) != haar.level(n), levels.contains(&n));
            }
        }
    }
}
