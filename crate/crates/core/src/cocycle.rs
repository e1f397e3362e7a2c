//! Radon–Nikodym cocycles of product measures, the sets `F_n`, `F_n⁺`,
//! `F_n•` and finitarity diagnostics built from them.

use std::collections::HashMap;

use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::automorphism::Automorphism;
use crate::error::{Error, Result};
use crate::measures::{format_rational, q_to_f64, rng_stream, ser_opt_q, ser_q, LevelDistribution, ProductMeasure, Q};
use crate::perm::Perm;
use crate::tree::{BoundaryPoint, Prefix};
use crate::verdict::Evidence;

pub const DEFAULT_RN_HORIZON: usize = 64;
pub const DEFAULT_DELTA_GRID: [f64; 4] = [0.51, 0.6, 0.75, 0.9];
/// Head length of points drawn by [`sample_point`] in the chain check.
pub const SAMPLE_HEAD: usize = 16;

/// `dμ∘g/dμ (x)` together with the depth `N` after which every section along
/// `x` preserves the corresponding level of `μ`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RadonNikodymValue {
    #[serde(serialize_with = "ser_q")]
    pub value: Q,
    pub depth: usize,
}

impl RadonNikodymValue {
    pub fn ln(&self) -> f64 {
        crate::measures::ln_q(&self.value)
    }

    pub fn to_f64(&self) -> f64 {
        q_to_f64(&self.value)
    }
}

/// `μ_{n+1} ∘ σ = μ_{n+1}`.
pub fn preserves(perm: &Perm, dist: &LevelDistribution) -> bool {
    (0..dist.len() as u32).all(|a| dist.get(perm.apply(a)) == dist.get(a))
}

/// First level `L` such that `μ_n` is uniform for every `n ≥ L`.
fn uniform_tail_start(mu: &ProductMeasure) -> Option<usize> {
    let (t, p) = mu.periodicity();
    if !(t + 1..=t + p).all(|n| mu.is_uniform_at(n)) {
        return None;
    }
    Some((1..=t).rev().find(|&n| !mu.is_uniform_at(n)).map_or(1, |n| n + 1))
}

/// The Radon–Nikodym derivative at an eventually periodic point, as the
/// finite product of per-level ratios up to the stabilization depth.
///
/// Stabilization is detected when the section becomes the identity, when all
/// remaining levels of `μ` are uniform, or when the triple (section, phase of
/// `x`, phase of `μ`) repeats with no non-preserving level inside the cycle.
pub fn rn_derivative(
    g: &Automorphism,
    mu: &ProductMeasure,
    x: &BoundaryPoint,
    horizon: usize,
) -> Result<RadonNikodymValue> {
    let shape = g.shape();
    let (t, p) = mu.periodicity();
    let start = x.head().len().max(t).max(shape.head_len());
    let period = p.lcm(&shape.period_len());
    let uniform_from = uniform_tail_start(mu);
    let limit = 2 * start.max(horizon) + x.tail().len() * period + 1;

    let mut value = Q::one();
    let mut last_fail: Option<usize> = None;
    let mut seen = HashMap::new();
    let mut sec = g.clone();
    let finish = |value: Q, last_fail: Option<usize>| {
        let depth = last_fail.map_or(0, |f| f + 1);
        if depth > horizon {
            Err(Error::NotStabilized(horizon))
        } else {
            Ok(RadonNikodymValue { value, depth })
        }
    };
    for i in 0..limit {
        if sec.is_trivially_identity() || uniform_from.is_some_and(|l| i + 1 >= l) {
            return finish(value, last_fail);
        }
        if i >= start {
            let key = (sec.key(), x.tail_phase(i), (i - start) % period);
            if let Some(&i0) = seen.get(&key) {
                if last_fail.is_some_and(|f| f >= i0) {
                    return Err(Error::NotStabilized(horizon));
                }
                return finish(value, last_fail);
            }
            seen.insert(key, i);
        }
        let dist = mu.level(i + 1);
        let perm = sec.root_perm();
        let xi = x.letter(i);
        if !preserves(&perm, dist) {
            last_fail = Some(i);
            value = value * dist.get(perm.apply(xi)) / dist.get(xi);
        }
        sec = sec.section_letter(xi);
    }
    Err(Error::NotStabilized(horizon))
}

/// A point with a `μ`-distributed head of length `head_len` followed by a
/// periodic tail of one shape period, also drawn from `μ`.
pub fn sample_point(mu: &ProductMeasure, head_len: usize, rng: &mut impl Rng) -> Result<BoundaryPoint> {
    let shape = mu.shape();
    let head_len = head_len.max(shape.head_len());
    let head = mu.sample_with(rng, 0, head_len);
    let tail = mu.sample_with(rng, head_len, shape.period_len());
    BoundaryPoint::new(shape, head.0, tail.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainCheck {
    pub samples: usize,
    pub holds: bool,
    pub evidence: Evidence,
    /// Largest `|rn(gh,x) − rn(g,hx)·rn(h,x)|` seen, in floating point.
    pub worst_defect: f64,
    /// `(head, tail)` of the first failing point.
    pub witness: Option<(Vec<u32>, Vec<u32>)>,
}

/// Exact check of `rn(gh, x) = rn(g, hx) · rn(h, x)` on sampled points.
pub fn cocycle_chain_check(
    g: &Automorphism,
    h: &Automorphism,
    mu: &ProductMeasure,
    samples: usize,
    seed: u64,
    horizon: usize,
) -> Result<ChainCheck> {
    let gh = g.compose(h);
    let mut rng = rng_stream(seed, 1);
    let mut worst = 0.0f64;
    let mut witness = None;
    for _ in 0..samples {
        let x = sample_point(mu, SAMPLE_HEAD, &mut rng)?;
        let hx = h.apply_point(&x, horizon)?;
        let lhs = rn_derivative(&gh, mu, &x, horizon)?.value;
        let rhs = rn_derivative(g, mu, &hx, horizon)?.value * rn_derivative(h, mu, &x, horizon)?.value;
        if lhs != rhs {
            worst = worst.max(q_to_f64(&(lhs - rhs)).abs());
            if witness.is_none() {
                witness = Some((x.head().to_vec(), x.tail().to_vec()));
            }
        }
    }
    Ok(ChainCheck {
        samples,
        holds: witness.is_none(),
        evidence: Evidence::Exact,
        worst_defect: worst,
        witness,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FVariant {
    /// `α_n(y) ≠ I`.
    Plain,
    /// `μ_{n+1} ∘ α_n(y) ≠ μ_{n+1}`.
    Plus,
    /// Some `α_m(ya) ≠ I` with `m > n`.
    Bullet,
}

#[derive(Clone, Debug)]
pub struct FinitarySets {
    pub depth: usize,
    pub variant: FVariant,
    /// Members in lexicographic order.
    pub members: Vec<Prefix>,
    pub measure: Option<Q>,
    /// Set when bullet membership used bounded lookahead (members are then a
    /// subset of the true set).
    pub lower_bound: bool,
}

impl FinitarySets {
    pub fn cardinality(&self) -> usize {
        self.members.len()
    }
}

/// Members of `F_n` and (with `mu`) `F_n⁺`, by a pruned depth-first search.
fn plain_and_plus(
    g: &Automorphism,
    n: usize,
    mu: Option<&ProductMeasure>,
    cap: usize,
) -> Result<(Vec<Prefix>, Vec<Prefix>)> {
    let mut plain = Vec::new();
    let mut plus = Vec::new();
    let abs = g.depth() + n;
    let mut visited = 0usize;
    let mut stack = vec![(g.clone(), Prefix::root())];
    while let Some((sec, y)) = stack.pop() {
        visited += 1;
        if visited > cap {
            return Err(Error::cap(format!("F-set search at depth {n}"), cap));
        }
        if sec.is_trivially_identity() {
            continue;
        }
        if y.len() == n {
            let perm = sec.root_perm();
            if !perm.is_identity() {
                if let Some(m) = mu {
                    if !preserves(&perm, m.level(abs + 1)) {
                        plus.push(y.clone());
                    }
                }
                plain.push(y);
            }
            continue;
        }
        if !sec.may_act_at(abs) {
            continue;
        }
        for x in (0..sec.arity()).rev() {
            stack.push((sec.section_letter(x), y.child(x)));
        }
    }
    Ok((plain, plus))
}

fn bullet(g: &Automorphism, n: usize, lookahead: Option<usize>, cap: usize) -> Result<(Vec<Prefix>, bool)> {
    let mut out = Vec::new();
    let mut lower = false;
    let mut visited = 0usize;
    let mut stack = vec![(g.clone(), Prefix::root())];
    while let Some((sec, y)) = stack.pop() {
        visited += 1;
        if visited > cap {
            return Err(Error::cap(format!("F• search at depth {n}"), cap));
        }
        if sec.is_trivially_identity() {
            continue;
        }
        if y.len() < n {
            for x in (0..sec.arity()).rev() {
                stack.push((sec.section_letter(x), y.child(x)));
            }
            continue;
        }
        let mut member = false;
        for x in 0..sec.arity() {
            let c = sec.section_letter(x);
            member = match c.is_nontrivial() {
                Some(b) => b,
                None => {
                    let m = lookahead.ok_or_else(|| {
                        Error::NoActivityBound(format!("section below {y} has no exact activity bound"))
                    })?;
                    lower = true;
                    m > n + 1 && !c.is_identity_to_depth(m - n - 1)
                }
            };
            if member {
                break;
            }
        }
        if member {
            out.push(y);
        }
    }
    Ok((out, lower))
}

/// `F_n(g)`, `F_n⁺(g)` or `F_n•(g)`. `Plus` requires `mu`; `Bullet` uses
/// the exact activity bound and falls back to `lookahead` (an absolute level
/// `m`) only when the bound is unavailable.
pub fn f_sets(
    g: &Automorphism,
    n: usize,
    variant: FVariant,
    mu: Option<&ProductMeasure>,
    lookahead: Option<usize>,
    cap: usize,
) -> Result<FinitarySets> {
    let (members, lower_bound) = match variant {
        FVariant::Plain => (plain_and_plus(g, n, None, cap)?.0, false),
        FVariant::Plus => {
            let m = mu.ok_or_else(|| Error::InvalidDistribution("F⁺ needs a measure".into()))?;
            (plain_and_plus(g, n, Some(m), cap)?.1, false)
        }
        FVariant::Bullet => bullet(g, n, lookahead, cap)?,
    };
    Ok(FinitarySets {
        depth: n,
        variant,
        measure: mu.map(|m| m.set_measure(&members)),
        members,
        lower_bound,
    })
}

/// Growth of the number of nontrivial sections per level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivityGrowth {
    /// Every `α_n` is the identity for `n ≥ depth`.
    Finitary { depth: usize },
    /// At most `active` members of `F_n` and `sections` nontrivial sections
    /// per level.
    Bounded { active: usize, sections: usize },
    Polynomial { degree: usize },
    Exponential,
}

#[derive(Clone, Debug, Serialize)]
pub struct SectionAnalysis {
    pub growth: ActivityGrowth,
    pub quasi_finitary: bool,
    /// Distinct nontrivial sections.
    pub states: usize,
}

/// Exact analysis of the (finite) section graph of a machine/portrait
/// element. Rule elements have no finite section graph.
pub fn analyze_sections(g: &Automorphism, cap: usize) -> Result<SectionAnalysis> {
    if g.has_rule() {
        return Err(Error::NotDecidable);
    }
    // Reachable non-empty sections.
    let mut index = HashMap::new();
    let mut nodes: Vec<Automorphism> = Vec::new();
    let mut edges: Vec<Vec<usize>> = Vec::new();
    let mut active: Vec<bool> = Vec::new();
    if !g.is_trivially_identity() {
        index.insert(g.key(), 0);
        nodes.push(g.clone());
    }
    let mut i = 0;
    while i < nodes.len() {
        let sec = nodes[i].clone();
        active.push(!sec.root_perm().is_identity());
        let mut out = Vec::new();
        for x in 0..sec.arity() {
            let c = sec.section_letter(x);
            if c.is_trivially_identity() {
                continue;
            }
            let k = c.key();
            let j = match index.get(&k) {
                Some(&j) => j,
                None => {
                    if nodes.len() >= cap {
                        return Err(Error::cap("section graph", cap));
                    }
                    index.insert(k, nodes.len());
                    nodes.push(c);
                    nodes.len() - 1
                }
            };
            out.push(j);
        }
        edges.push(out);
        i += 1;
    }
    let v = nodes.len();

    // Nodes from which an active node is reachable.
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); v];
    for (a, out) in edges.iter().enumerate() {
        for &b in out {
            rev[b].push(a);
        }
    }
    let mut live = active.clone();
    let mut stack: Vec<usize> = (0..v).filter(|&a| active[a]).collect();
    while let Some(b) = stack.pop() {
        for &a in &rev[b] {
            if !live[a] {
                live[a] = true;
                stack.push(a);
            }
        }
    }
    if v == 0 || !live[0] {
        return Ok(SectionAnalysis {
            growth: ActivityGrowth::Finitary { depth: 0 },
            quasi_finitary: true,
            states: 0,
        });
    }
    let sub: Vec<Vec<usize>> = edges
        .iter()
        .map(|out| out.iter().copied().filter(|&b| live[b]).collect())
        .collect();

    let (comp, ncomp) = scc(&sub, &live);
    let mut size = vec![0usize; ncomp];
    let mut internal = vec![0usize; ncomp];
    let mut has_active = vec![false; ncomp];
    for a in (0..v).filter(|&a| live[a]) {
        size[comp[a]] += 1;
        has_active[comp[a]] |= active[a];
        internal[comp[a]] += sub[a].iter().filter(|&&b| comp[b] == comp[a]).count();
    }
    let cyclic: Vec<bool> = internal.iter().map(|&e| e > 0).collect();
    let quasi_finitary = !(0..ncomp).any(|c| cyclic[c] && has_active[c]);
    let states = live.iter().filter(|&&l| l).count();
    if (0..ncomp).any(|c| cyclic[c] && internal[c] != size[c]) {
        return Ok(SectionAnalysis {
            growth: ActivityGrowth::Exponential,
            quasi_finitary,
            states,
        });
    }

    // Longest chain of cyclic components, and for acyclic graphs the deepest
    // active node, by memoized DFS on the condensation.
    let mut chain = vec![usize::MAX; v];
    let mut deepest = vec![usize::MAX; v];
    let mut order = Vec::new();
    let mut seen = vec![false; v];
    let mut st = vec![(0usize, 0usize)];
    seen[0] = true;
    while let Some((a, k)) = st.pop() {
        if k < sub[a].len() {
            st.push((a, k + 1));
            let b = sub[a][k];
            if !seen[b] {
                seen[b] = true;
                st.push((b, 0));
            }
        } else {
            order.push(a);
        }
    }
    for &a in &order {
        let mut c = 0usize;
        let mut d = if active[a] { Some(0usize) } else { None };
        for &b in &sub[a] {
            if comp[b] == comp[a] {
                continue;
            }
            c = c.max(chain[b]);
            if deepest[b] != usize::MAX {
                d = Some(d.map_or(deepest[b] + 1, |x| x.max(deepest[b] + 1)));
            }
        }
        // Members of one cyclic component share the same chain value.
        let own = cyclic[comp[a]] as usize;
        chain[a] = c + own;
        deepest[a] = d.unwrap_or(usize::MAX);
    }
    // Propagate chain values within components (cycle members).
    for _ in 0..v {
        let mut changed = false;
        for &a in &order {
            for &b in &sub[a] {
                if comp[b] == comp[a] && chain[b] > chain[a] {
                    chain[a] = chain[b];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let growth = match chain[0] {
        0 => ActivityGrowth::Finitary { depth: deepest[0] + 1 },
        1 => {
            let l = (0..ncomp)
                .filter(|&c| cyclic[c])
                .fold(1usize, |acc, c| acc.lcm(&size[c]));
            let mut counts = vec![0u64; v];
            counts[0] = 1;
            let (mut max_active, mut max_sections) = (0u64, 0u64);
            for _ in 0..=v + l {
                max_sections = max_sections.max(counts.iter().sum());
                max_active = max_active.max((0..v).filter(|&a| active[a]).map(|a| counts[a]).sum());
                let mut next = vec![0u64; v];
                for a in 0..v {
                    if counts[a] > 0 {
                        for &b in &sub[a] {
                            next[b] += counts[a];
                        }
                    }
                }
                counts = next;
            }
            ActivityGrowth::Bounded {
                active: max_active as usize,
                sections: max_sections as usize,
            }
        }
        c => ActivityGrowth::Polynomial { degree: c - 1 },
    };
    Ok(SectionAnalysis {
        growth,
        quasi_finitary,
        states,
    })
}

/// Strongly connected components of the live subgraph (Kosaraju).
fn scc(adj: &[Vec<usize>], live: &[bool]) -> (Vec<usize>, usize) {
    let v = adj.len();
    let mut order = Vec::with_capacity(v);
    let mut seen = vec![false; v];
    for s in (0..v).filter(|&s| live[s]) {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut st = vec![(s, 0usize)];
        while let Some((a, k)) = st.pop() {
            if k < adj[a].len() {
                st.push((a, k + 1));
                let b = adj[a][k];
                if !seen[b] {
                    seen[b] = true;
                    st.push((b, 0));
                }
            } else {
                order.push(a);
            }
        }
    }
    let mut rev = vec![Vec::new(); v];
    for (a, out) in adj.iter().enumerate() {
        for &b in out {
            rev[b].push(a);
        }
    }
    let mut comp = vec![usize::MAX; v];
    let mut n = 0;
    for &s in order.iter().rev() {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = n;
        let mut st = vec![s];
        while let Some(a) = st.pop() {
            for &b in &rev[a] {
                if comp[b] == usize::MAX {
                    comp[b] = n;
                    st.push(b);
                }
            }
        }
        n += 1;
    }
    (comp, n)
}

/// `Σ_{n≥1} ∏_{i≤n} max μ_i`, summed in closed form over the periodic tail.
pub fn max_mass_series(mu: &ProductMeasure) -> f64 {
    let (t, p) = mu.periodicity();
    let m = |n: usize| q_to_f64(mu.level(n).max());
    let mut prod = 1.0;
    let mut sum = 0.0;
    for n in 1..=t {
        prod *= m(n);
        sum += prod;
    }
    let mut inner = 1.0;
    let mut s = 0.0;
    for n in t + 1..=t + p {
        inner *= m(n);
        s += inner;
    }
    sum + prod * s / (1.0 - inner)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinitarityClass {
    Finitary,
    QuasiFinitary,
    MuFinitary,
    PurelyMuFinitary,
    EventuallyMuPreserving,
    WSubexponentiallyBounded,
    SubexponentiallyBounded,
}

/// A verdict about one class, with the argument that produced it. Also used
/// by constructions to supply schedule-driven closed forms.
#[derive(Clone, Debug, Serialize)]
pub struct ClassVerdict {
    pub class: FinitarityClass,
    pub holds: Option<bool>,
    pub evidence: Evidence,
    pub basis: String,
    /// Upper bound on the relevant infinite sum, when one is known.
    pub bound: Option<f64>,
}

impl ClassVerdict {
    pub fn closed_form(class: FinitarityClass, holds: bool, basis: impl Into<String>, bound: Option<f64>) -> Self {
        ClassVerdict {
            class,
            holds: Some(holds),
            evidence: Evidence::ClosedForm,
            basis: basis.into(),
            bound,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FinitarityRow {
    pub n: usize,
    pub f_count: usize,
    #[serde(serialize_with = "ser_q")]
    pub f_measure: Q,
    pub plus_count: usize,
    #[serde(serialize_with = "ser_q")]
    pub plus_measure: Q,
    pub bullet_count: Option<usize>,
    #[serde(serialize_with = "ser_opt_q")]
    pub bullet_measure: Option<Q>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaSums {
    pub delta: f64,
    /// `Σ_{m≤n} |F_m| δ^m` for `n = 1..=horizon`.
    pub partial: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FinitarityReport {
    pub horizon: usize,
    pub rows: Vec<FinitarityRow>,
    /// `Σ_{m≤n} μ(F_m)`.
    pub f_partial: Vec<f64>,
    /// `Σ_{m≤n} μ(F_m⁺)`.
    pub plus_partial: Vec<f64>,
    pub delta_sums: Vec<DeltaSums>,
    pub sections: Option<SectionAnalysis>,
    pub verdicts: Vec<ClassVerdict>,
}

impl FinitarityReport {
    pub fn verdict(&self, class: FinitarityClass) -> Option<&ClassVerdict> {
        self.verdicts.iter().find(|v| v.class == class)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,f_count,f_measure,plus_count,plus_measure,bullet_count,bullet_measure,sum_f,sum_plus");
        for d in &self.delta_sums {
            s.push_str(&format!(",delta_{}", d.delta));
        }
        s.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{:.15},{:.15}",
                r.n,
                r.f_count,
                format_rational(&r.f_measure),
                r.plus_count,
                format_rational(&r.plus_measure),
                r.bullet_count.map(|c| c.to_string()).unwrap_or_default(),
                r.bullet_measure.as_ref().map(format_rational).unwrap_or_default(),
                self.f_partial[i],
                self.plus_partial[i]
            ));
            for d in &self.delta_sums {
                s.push_str(&format!(",{:.15}", d.partial[i]));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct FinitarityOptions {
    pub horizon: usize,
    pub deltas: Vec<f64>,
    /// Node budget for the `F_n`/`F_n⁺` searches.
    pub cap: usize,
    /// Node budget for `F_n•`; rows beyond it report no bullet data.
    pub bullet_cap: usize,
    pub lookahead: Option<usize>,
    /// Schedule-driven closed forms supplied by a construction.
    pub claims: Vec<ClassVerdict>,
}

impl Default for FinitarityOptions {
    fn default() -> Self {
        FinitarityOptions {
            horizon: 16,
            deltas: DEFAULT_DELTA_GRID.to_vec(),
            cap: crate::tree::DEFAULT_ENUMERATION_CAP,
            bullet_cap: 1 << 16,
            lookahead: None,
            claims: Vec::new(),
        }
    }
}

/// Summability read off the trailing half of a term sequence: `Some(true)`
/// when every trailing term is at most `1/N`, `Some(false)` when every one is
/// at least `1/N`, otherwise undecided.
fn summable_trend(terms: &[f64]) -> Option<bool> {
    let n = terms.len();
    if n < 4 {
        return None;
    }
    let window = &terms[n / 2..];
    let inv = 1.0 / n as f64;
    if window.iter().all(|&t| t * n as f64 <= 1.0) {
        Some(true)
    } else if window.iter().all(|&t| t >= inv) {
        Some(false)
    } else {
        None
    }
}

fn trend_verdict(class: FinitarityClass, trend: Option<bool>, what: &str) -> ClassVerdict {
    ClassVerdict {
        class,
        holds: trend,
        evidence: if trend.is_some() { Evidence::PartialSums } else { Evidence::Inconclusive },
        basis: format!("trailing terms of {what}"),
        bound: None,
    }
}

/// Per-level `F`-set data up to the horizon plus verdicts for every class.
pub fn finitarity_report(g: &Automorphism, mu: &ProductMeasure, opts: &FinitarityOptions) -> Result<FinitarityReport> {
    use FinitarityClass::*;
    let mut rows = Vec::with_capacity(opts.horizon);
    for n in 1..=opts.horizon {
        let (plain, plus) = plain_and_plus(g, n, Some(mu), opts.cap)?;
        let b = match bullet(g, n, opts.lookahead, opts.bullet_cap) {
            Ok((set, _)) => Some(set),
            Err(Error::CapExceeded { .. }) | Err(Error::NoActivityBound(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push(FinitarityRow {
            n,
            f_count: plain.len(),
            f_measure: mu.set_measure(&plain),
            plus_count: plus.len(),
            plus_measure: mu.set_measure(&plus),
            bullet_count: b.as_ref().map(Vec::len),
            bullet_measure: b.as_ref().map(|s| mu.set_measure(s)),
        });
    }
    let running = |f: &dyn Fn(&FinitarityRow) -> f64| {
        rows.iter()
            .scan(0.0, |acc, r| {
                *acc += f(r);
                Some(*acc)
            })
            .collect::<Vec<f64>>()
    };
    let f_partial = running(&|r| q_to_f64(&r.f_measure));
    let plus_partial = running(&|r| q_to_f64(&r.plus_measure));
    let delta_sums: Vec<DeltaSums> = opts
        .deltas
        .iter()
        .map(|&d| DeltaSums {
            delta: d,
            partial: running(&|r| r.f_count as f64 * d.powi(r.n as i32)),
        })
        .collect();

    let sections = if g.has_rule() { None } else { Some(analyze_sections(g, opts.cap)?) };
    let mut verdicts = Vec::new();
    if let Some(a) = &sections {
        let series = max_mass_series(mu);
        let exact = |class, holds: bool, basis: String| ClassVerdict {
            class,
            holds: Some(holds),
            evidence: Evidence::Exact,
            basis,
            bound: None,
        };
        match &a.growth {
            ActivityGrowth::Finitary { depth } => {
                let basis = format!("sections are trivial from depth {depth}");
                for c in [
                    Finitary,
                    QuasiFinitary,
                    MuFinitary,
                    PurelyMuFinitary,
                    EventuallyMuPreserving,
                    WSubexponentiallyBounded,
                    SubexponentiallyBounded,
                ] {
                    verdicts.push(exact(c, true, basis.clone()));
                }
            }
            growth => {
                verdicts.push(exact(Finitary, false, "a cycle of nontrivial sections".into()));
                verdicts.push(exact(
                    QuasiFinitary,
                    a.quasi_finitary,
                    if a.quasi_finitary {
                        "no cycle of sections contains a nontrivial root permutation".into()
                    } else {
                        "a cycle of sections contains a nontrivial root permutation".into()
                    },
                ));
                match growth {
                    ActivityGrowth::Bounded { active, sections } => {
                        let basis = format!("bounded activity: |F_n| ≤ {active}, |F_n•| ≤ {sections}");
                        verdicts.push(ClassVerdict::closed_form(
                            MuFinitary,
                            true,
                            format!("{basis}; Σμ(F_n) ≤ {active}·Σ∏max μ_i"),
                            Some(*active as f64 * series),
                        ));
                        verdicts.push(ClassVerdict::closed_form(
                            PurelyMuFinitary,
                            true,
                            format!("{basis}; μ(F_n•) ≤ {sections}·∏_{{i≤n}} max μ_i → 0"),
                            None,
                        ));
                        verdicts.push(ClassVerdict::closed_form(
                            EventuallyMuPreserving,
                            true,
                            format!("{basis}; F_n⁺ ⊆ F_n"),
                            Some(*active as f64 * series),
                        ));
                        verdicts.push(ClassVerdict::closed_form(
                            WSubexponentiallyBounded,
                            true,
                            format!("{basis}; Σ|F_n|δ^n ≤ {active}·δ/(1−δ)"),
                            None,
                        ));
                        verdicts.push(ClassVerdict::closed_form(
                            SubexponentiallyBounded,
                            true,
                            format!("{basis}; Σ|F_n•|δ^n ≤ {sections}·δ/(1−δ)"),
                            None,
                        ));
                    }
                    ActivityGrowth::Polynomial { degree } => {
                        let basis = format!("activity grows like n^{degree}");
                        for c in [
                            MuFinitary,
                            PurelyMuFinitary,
                            EventuallyMuPreserving,
                            WSubexponentiallyBounded,
                            SubexponentiallyBounded,
                        ] {
                            verdicts.push(ClassVerdict::closed_form(
                                c,
                                true,
                                format!("{basis}; polynomial times geometric decay"),
                                None,
                            ));
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    let have = |v: &Vec<ClassVerdict>, c| v.iter().any(|x: &ClassVerdict| x.class == c);
    let f_terms: Vec<f64> = rows.iter().map(|r| q_to_f64(&r.f_measure)).collect();
    let plus_terms: Vec<f64> = rows.iter().map(|r| q_to_f64(&r.plus_measure)).collect();
    let mut fallback = vec![
        trend_verdict(MuFinitary, summable_trend(&f_terms), "μ(F_n)"),
        trend_verdict(EventuallyMuPreserving, summable_trend(&plus_terms), "μ(F_n⁺)"),
    ];
    let delta_trends: Vec<Option<bool>> = delta_sums
        .iter()
        .map(|d| {
            let terms: Vec<f64> = rows.iter().map(|r| r.f_count as f64 * d.delta.powi(r.n as i32)).collect();
            summable_trend(&terms)
        })
        .collect();
    let w = if delta_trends.contains(&Some(false)) {
        Some(false)
    } else if delta_trends.iter().all(|t| *t == Some(true)) {
        Some(true)
    } else {
        None
    };
    fallback.push(trend_verdict(WSubexponentiallyBounded, w, "|F_n|δ^n over the δ-grid"));
    let bullet_terms: Vec<f64> = rows.iter().filter_map(|r| r.bullet_measure.as_ref().map(q_to_f64)).collect();
    let pure = if bullet_terms.len() >= 4 {
        let tail = &bullet_terms[bullet_terms.len() / 2..];
        if tail.windows(2).all(|w| w[1] <= w[0]) && *tail.last().unwrap() * (bullet_terms.len() as f64) <= 1.0 {
            Some(true)
        } else if tail.iter().all(|&t| t >= 0.5) {
            Some(false)
        } else {
            None
        }
    } else {
        None
    };
    fallback.push(trend_verdict(PurelyMuFinitary, pure, "μ(F_n•)"));

    for claim in &opts.claims {
        if let Some(bound) = claim.bound {
            let partial = match claim.class {
                MuFinitary => f_partial.last(),
                EventuallyMuPreserving => plus_partial.last(),
                _ => None,
            };
            if let Some(&p) = partial {
                if p > bound * (1.0 + 1e-12) {
                    return Err(Error::ConditionFailed {
                        condition: format!("{:?} bound {bound}", claim.class),
                        witness: format!("partial sum {p}"),
                    });
                }
            }
        }
        verdicts.retain(|v| v.class != claim.class);
        verdicts.push(claim.clone());
    }
    for v in fallback {
        if !have(&verdicts, v.class) {
            verdicts.push(v);
        }
    }
    for c in [Finitary, QuasiFinitary] {
        if !have(&verdicts, c) {
            verdicts.push(trend_verdict(c, None, "rule sections"));
        }
    }
    verdicts.sort_by_key(|v| v.class);
    Ok(FinitarityReport {
        horizon: opts.horizon,
        rows,
        f_partial,
        plus_partial,
        delta_sums,
        sections,
        verdicts,
    })
}

/// Exact sum of `μ` over a set of prefixes, as a convenience for reports.
pub fn total_measure(mu: &ProductMeasure, sets: &[FinitarySets]) -> Q {
    sets.iter()
        .map(|s| mu.set_measure(&s.members))
        .fold(Q::zero(), |a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::grigorchuk;
    use crate::measures::q;
    use crate::tree::TreeShape;

    fn bern() -> ProductMeasure {
        ProductMeasure::bernoulli(&TreeShape::binary01(), LevelDistribution::binary(q(2, 3)).unwrap()).unwrap()
    }

    #[test]
    fn rn_of_a_under_bernoulli() {
        let g = grigorchuk();
        let a = g.evaluate(&g.parse_word("a").unwrap());
        let s = TreeShape::binary01();
        let x = BoundaryPoint::new(&s, vec![0], vec![1]).unwrap();
        let v = rn_derivative(&a, &bern(), &x, 64).unwrap();
        assert_eq!(v.value, q(1, 2));
        assert_eq!(v.depth, 1);
        let haar = ProductMeasure::uniform(&s);
        assert_eq!(rn_derivative(&a, &haar, &x, 64).unwrap().value, Q::one());
    }

    #[test]
    fn grigorchuk_is_bounded() {
        let g = grigorchuk();
        for name in ["b", "c", "d"] {
            let e = g.evaluate(&g.parse_word(name).unwrap());
            let a = analyze_sections(&e, 1000).unwrap();
            assert!(matches!(a.growth, ActivityGrowth::Bounded { active: 1, .. }), "{name}: {a:?}");
            assert!(a.quasi_finitary);
        }
        let a = g.evaluate(&g.parse_word("a").unwrap());
        assert_eq!(analyze_sections(&a, 10).unwrap().growth, ActivityGrowth::Finitary { depth: 1 });
    }

    #[test]
    fn summable_trend_reads_tails() {
        assert_eq!(summable_trend(&[0.5; 8]), Some(false));
        let sq: Vec<f64> = (1..=16).map(|n| 1.0 / (n * n) as f64).collect();
        assert_eq!(summable_trend(&sq), Some(true));
        assert_eq!(summable_trend(&[1.0, 1.0]), None);
    }

    #[test]
    fn max_mass_series_geometric() {
        // Σ (2/3)^n = 2.
        assert!((max_mass_series(&bern()) - 2.0).abs() < 1e-12);
        let haar = ProductMeasure::uniform(&TreeShape::binary01());
        assert!((max_mass_series(&haar) - 1.0).abs() < 1e-12);
    }
}
