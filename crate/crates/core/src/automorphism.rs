//! Level-preserving tree automorphisms as lazy section machines.
//!
//! An [`Automorphism`] is a product `f_0 ∘ f_1 ∘ ⋯ ∘ f_k` of factors, each of
//! which is a finitary portrait, a state of a finite-state machine, or a
//! section of a rule element (possibly inverted). Sections of the product are
//! computed factor by factor from the right, so a section never has more
//! factors than its parent and no cache is needed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::perm::Perm;
use crate::tree::{BoundaryPoint, Prefix, TreeShape};

/// What a rule element is known to do below a prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activity {
    /// Every section at or below the prefix is the identity.
    Quiescent,
    /// Some section at or below the prefix has a nontrivial root permutation.
    Active,
    Unknown,
}

/// A programmatic section oracle. Prefixes are absolute (source side).
pub trait SectionRule: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Root permutation `α_n(y)` of the section at `prefix`.
    fn permutation(&self, prefix: &Prefix) -> Perm;

    /// The activity bound. `Quiescent` must be exact.
    fn activity(&self, prefix: &Prefix) -> Activity;

    /// Whether some extension `z` of `prefix` with `|z| = level` may have a
    /// nontrivial root permutation. Returning `false` must be exact.
    fn may_act_at(&self, prefix: &Prefix, level: usize) -> bool {
        let _ = level;
        self.activity(prefix) != Activity::Quiescent
    }
}

/// A finitary portrait node. Missing children are the identity; a node is
/// never itself the identity (such nodes are represented by absence).
#[derive(Debug, PartialEq, Eq)]
pub struct PortraitNode {
    perm: Perm,
    children: BTreeMap<u32, Arc<PortraitNode>>,
}

impl PortraitNode {
    /// Returns `None` when the node would be the identity.
    pub fn build(perm: Perm, children: BTreeMap<u32, Arc<PortraitNode>>) -> Option<Arc<PortraitNode>> {
        if perm.is_identity() && children.is_empty() {
            None
        } else {
            Some(Arc::new(PortraitNode { perm, children }))
        }
    }

    pub fn perm(&self) -> &Perm {
        &self.perm
    }

    pub fn children(&self) -> &BTreeMap<u32, Arc<PortraitNode>> {
        &self.children
    }

    pub fn child(&self, x: u32) -> Option<&Arc<PortraitNode>> {
        self.children.get(&x)
    }

    /// Some node `depth` levels below carries a nontrivial permutation.
    pub fn acts_at(self: &Arc<Self>, depth: usize) -> bool {
        let mut layer: Vec<&Arc<PortraitNode>> = vec![self];
        for _ in 0..depth {
            let mut seen = HashSet::new();
            layer = layer
                .iter()
                .flat_map(|n| n.children.values())
                .filter(|c| seen.insert(Arc::as_ptr(c)))
                .collect();
            if layer.is_empty() {
                return false;
            }
        }
        layer.iter().any(|n| !n.perm.is_identity())
    }

    /// Largest depth below this node carrying a nontrivial permutation, plus one.
    pub fn height(&self) -> usize {
        fn go(n: &PortraitNode, memo: &mut HashMap<*const PortraitNode, usize>) -> usize {
            let key = n as *const PortraitNode;
            if let Some(&h) = memo.get(&key) {
                return h;
            }
            let below = n.children.values().map(|c| go(c, memo)).max().unwrap_or(0);
            let h = if below > 0 { below + 1 } else { usize::from(!n.perm.is_identity()) };
            memo.insert(key, h);
            h
        }
        go(self, &mut HashMap::new())
    }

    fn validate(node: &Arc<PortraitNode>, shape: &TreeShape, depth: usize) -> Result<()> {
        let mut seen = HashSet::new();
        let mut stack = vec![(node.clone(), depth)];
        while let Some((n, d)) = stack.pop() {
            if !seen.insert((Arc::as_ptr(&n), d)) {
                continue;
            }
            let q = shape.child_arity(d);
            if n.perm.degree() != q {
                return Err(Error::InvalidAutomorphism(format!(
                    "portrait permutation of degree {} at depth {d}, arity is {q}",
                    n.perm.degree()
                )));
            }
            for (&x, c) in &n.children {
                if x >= q {
                    return Err(Error::InvalidAutomorphism(format!("child letter {x} at depth {d} out of range")));
                }
                stack.push((c.clone(), d + 1));
            }
        }
        Ok(())
    }
}

type NodeMemo = HashMap<(usize, usize), Option<Arc<PortraitNode>>>;

fn ptr(n: &Arc<PortraitNode>) -> usize {
    Arc::as_ptr(n) as usize
}

fn portrait_compose(p: &Arc<PortraitNode>, q: &Arc<PortraitNode>, memo: &mut NodeMemo) -> Option<Arc<PortraitNode>> {
    if let Some(r) = memo.get(&(ptr(p), ptr(q))) {
        return r.clone();
    }
    let perm = p.perm.compose(&q.perm);
    let mut children = BTreeMap::new();
    for x in 0..q.perm.degree() {
        let left = p.children.get(&q.perm.apply(x));
        let right = q.children.get(&x);
        let c = match (left, right) {
            (None, None) => None,
            (Some(l), None) => Some(l.clone()),
            (None, Some(r)) => Some(r.clone()),
            (Some(l), Some(r)) => portrait_compose(l, r, memo),
        };
        if let Some(c) = c {
            children.insert(x, c);
        }
    }
    let r = PortraitNode::build(perm, children);
    memo.insert((ptr(p), ptr(q)), r.clone());
    r
}

fn portrait_inverse(p: &Arc<PortraitNode>, memo: &mut HashMap<usize, Arc<PortraitNode>>) -> Arc<PortraitNode> {
    if let Some(r) = memo.get(&ptr(p)) {
        return r.clone();
    }
    let children = p
        .children
        .iter()
        .map(|(&x, c)| (p.perm.apply(x), portrait_inverse(c, memo)))
        .collect();
    let r = Arc::new(PortraitNode {
        perm: p.perm.inverse(),
        children,
    });
    memo.insert(ptr(p), r.clone());
    r
}

/// A finite-state machine closed under inverses and minimized.
#[derive(Debug)]
pub struct Machine {
    perms: Vec<Perm>,
    next: Vec<Vec<usize>>,
    inverse: Vec<usize>,
    identity: Option<usize>,
    class_of: Vec<usize>,
}

impl Machine {
    /// `states[s] = (root permutation, successor per letter)`.
    pub fn new(states: Vec<(Perm, Vec<usize>)>) -> Result<Arc<Machine>> {
        let n = states.len();
        if n == 0 {
            return Err(Error::InvalidAutomorphism("machine has no states".into()));
        }
        for (s, (p, nx)) in states.iter().enumerate() {
            if nx.len() != p.degree() as usize {
                return Err(Error::InvalidAutomorphism(format!(
                    "state {s}: {} successors for a permutation of degree {}",
                    nx.len(),
                    p.degree()
                )));
            }
            if let Some(&t) = nx.iter().find(|&&t| t >= n) {
                return Err(Error::InvalidAutomorphism(format!("state {s}: successor {t} out of range")));
            }
        }
        // States n..2n are the inverses of 0..n.
        let mut perms: Vec<Perm> = states.iter().map(|(p, _)| p.clone()).collect();
        let mut next: Vec<Vec<usize>> = states.iter().map(|(_, nx)| nx.clone()).collect();
        for (p, nx) in &states {
            let inv = p.inverse();
            next.push((0..p.degree()).map(|x| n + nx[inv.apply(x) as usize]).collect());
            perms.push(inv);
        }
        let total = 2 * n;

        // Moore partition refinement.
        let mut class = {
            let mut ids: HashMap<&Perm, usize> = HashMap::new();
            (0..total)
                .map(|s| {
                    let k = ids.len();
                    *ids.entry(&perms[s]).or_insert(k)
                })
                .collect::<Vec<_>>()
        };
        loop {
            let mut ids: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
            let refined: Vec<usize> = (0..total)
                .map(|s| {
                    let sig = (class[s], next[s].iter().map(|&t| class[t]).collect());
                    let k = ids.len();
                    *ids.entry(sig).or_insert(k)
                })
                .collect();
            let stable = ids.len() == class.iter().collect::<HashSet<_>>().len();
            class = refined;
            if stable {
                break;
            }
        }
        let classes = class.iter().max().unwrap() + 1;
        let mut rep = vec![usize::MAX; classes];
        for s in 0..total {
            if rep[class[s]] == usize::MAX {
                rep[class[s]] = s;
            }
        }
        let m_perms: Vec<Perm> = rep.iter().map(|&s| perms[s].clone()).collect();
        let m_next: Vec<Vec<usize>> = rep.iter().map(|&s| next[s].iter().map(|&t| class[t]).collect()).collect();
        let inverse: Vec<usize> = rep
            .iter()
            .map(|&s| class[if s < n { s + n } else { s - n }])
            .collect();

        // Greatest fixed point of "identity permutation and identity successors".
        let mut id: Vec<bool> = m_perms.iter().map(Perm::is_identity).collect();
        loop {
            let mut changed = false;
            for c in 0..classes {
                if id[c] && m_next[c].iter().any(|&t| !id[t]) {
                    id[c] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let identity = (0..classes).find(|&c| id[c]);
        Ok(Arc::new(Machine {
            perms: m_perms,
            next: m_next,
            inverse,
            identity,
            class_of: class[..n].to_vec(),
        }))
    }

    pub fn num_states(&self) -> usize {
        self.perms.len()
    }

    /// Minimized state of an input state index.
    pub fn state_of(&self, original: usize) -> Option<usize> {
        self.class_of.get(original).copied()
    }

    pub fn is_identity_state(&self, s: usize) -> bool {
        self.identity == Some(s)
    }

    pub fn perm(&self, s: usize) -> &Perm {
        &self.perms[s]
    }

    pub fn next(&self, s: usize, x: u32) -> usize {
        self.next[s][x as usize]
    }

    pub fn inverse_state(&self, s: usize) -> usize {
        self.inverse[s]
    }

    fn validate(&self, start: usize, shape: &TreeShape, depth: usize) -> Result<()> {
        let mut seen = HashSet::new();
        let mut stack = vec![(start, shape.depth_class(depth), depth)];
        while let Some((s, class, d)) = stack.pop() {
            if !seen.insert((s, class)) {
                continue;
            }
            let q = shape.child_arity(d);
            if self.perms[s].degree() != q {
                return Err(Error::InvalidAutomorphism(format!(
                    "machine state of degree {} reached at depth {d} with arity {q}",
                    self.perms[s].degree()
                )));
            }
            for x in 0..q {
                stack.push((self.next[s][x as usize], shape.depth_class(d + 1), d + 1));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Factor {
    Portrait(Arc<PortraitNode>),
    State(Arc<Machine>, usize),
    /// Section at source prefix `base` of a rule element; inverted if `inverse`.
    Rule {
        rule: Arc<dyn SectionRule>,
        base: Prefix,
        inverse: bool,
    },
}

/// Hashable identity of a factor, used by bisimulation and cycle detection.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) enum FactorKey {
    Portrait(usize),
    State(usize, usize),
    Rule(usize, Prefix, bool),
}

impl Factor {
    fn rule_root(rule: &Arc<dyn SectionRule>, base: &Prefix, inverse: bool) -> Option<Factor> {
        (rule.activity(base) != Activity::Quiescent).then(|| Factor::Rule {
            rule: rule.clone(),
            base: base.clone(),
            inverse,
        })
    }

    fn perm(&self) -> Perm {
        match self {
            Factor::Portrait(n) => n.perm.clone(),
            Factor::State(m, s) => m.perms[*s].clone(),
            Factor::Rule { rule, base, inverse } => {
                let p = rule.permutation(base);
                if *inverse {
                    p.inverse()
                } else {
                    p
                }
            }
        }
    }

    fn apply_letter(&self, x: u32) -> u32 {
        match self {
            Factor::Portrait(n) => n.perm.apply(x),
            Factor::State(m, s) => m.perms[*s].apply(x),
            Factor::Rule { .. } => self.perm().apply(x),
        }
    }

    /// Section at source letter `x`, `None` when it is the identity.
    fn section(&self, x: u32) -> Option<Factor> {
        match self {
            Factor::Portrait(n) => n.children.get(&x).cloned().map(Factor::Portrait),
            Factor::State(m, s) => {
                let t = m.next[*s][x as usize];
                (!m.is_identity_state(t)).then(|| Factor::State(m.clone(), t))
            }
            Factor::Rule { rule, base, inverse } => {
                let letter = if *inverse { rule.permutation(base).inverse().apply(x) } else { x };
                Factor::rule_root(rule, &base.child(letter), *inverse)
            }
        }
    }

    fn inverse(&self, memo: &mut HashMap<usize, Arc<PortraitNode>>) -> Factor {
        match self {
            Factor::Portrait(n) => Factor::Portrait(portrait_inverse(n, memo)),
            Factor::State(m, s) => Factor::State(m.clone(), m.inverse[*s]),
            Factor::Rule { rule, base, inverse } => Factor::Rule {
                rule: rule.clone(),
                base: base.clone(),
                inverse: !inverse,
            },
        }
    }

    fn key(&self) -> FactorKey {
        match self {
            Factor::Portrait(n) => FactorKey::Portrait(ptr(n)),
            Factor::State(m, s) => FactorKey::State(Arc::as_ptr(m) as usize, *s),
            Factor::Rule { rule, base, inverse } => {
                FactorKey::Rule(Arc::as_ptr(rule) as *const () as usize, base.clone(), *inverse)
            }
        }
    }

    fn cancels(&self, other: &Factor) -> bool {
        match (self, other) {
            (Factor::State(m1, s1), Factor::State(m2, s2)) => Arc::ptr_eq(m1, m2) && m1.inverse[*s1] == *s2,
            (
                Factor::Rule { rule: r1, base: b1, inverse: i1 },
                Factor::Rule { rule: r2, base: b2, inverse: i2 },
            ) => Arc::ptr_eq(r1, r2) && b1 == b2 && i1 != i2,
            _ => false,
        }
    }

    fn may_act_at(&self, depth: usize, level: usize) -> bool {
        match self {
            Factor::Rule { rule, base, .. } => rule.may_act_at(base, level),
            Factor::Portrait(p) => level >= depth && p.acts_at(level - depth),
            Factor::State(..) => true,
        }
    }

    fn is_rule(&self) -> bool {
        matches!(self, Factor::Rule { .. })
    }
}

fn normalize(factors: impl IntoIterator<Item = Factor>) -> Vec<Factor> {
    let mut out: Vec<Factor> = Vec::new();
    let mut memo = NodeMemo::new();
    for f in factors {
        match (out.last(), &f) {
            (Some(Factor::Portrait(p)), Factor::Portrait(q)) => {
                let merged = portrait_compose(p, q, &mut memo);
                out.pop();
                if let Some(m) = merged {
                    out.push(Factor::Portrait(m));
                }
            }
            (Some(top), _) if top.cancels(&f) => {
                out.pop();
            }
            _ => out.push(f),
        }
    }
    out
}

/// An element of the automorphism group of the subtree rooted at some depth.
#[derive(Clone)]
pub struct Automorphism {
    shape: Arc<TreeShape>,
    depth: usize,
    factors: Vec<Factor>,
}

impl fmt::Debug for Automorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|x| match x {
                Factor::Portrait(n) => format!("portrait(h={})", n.height()),
                Factor::State(_, s) => format!("state {s}"),
                Factor::Rule { rule, base, inverse } => {
                    format!("{}{}@{}", rule.name(), if *inverse { "⁻¹" } else { "" }, base)
                }
            })
            .collect();
        write!(f, "Automorphism[depth {}; {}]", self.depth, parts.join(" ∘ "))
    }
}

/// Depth-`n` bijection `g_n` as a table on lexicographic prefix indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LevelPermutation {
    depth: usize,
    table: Vec<u32>,
}

impl LevelPermutation {
    pub fn identity(depth: usize, size: usize) -> Self {
        LevelPermutation {
            depth,
            table: (0..size as u32).collect(),
        }
    }

    pub fn from_table(depth: usize, table: Vec<u32>) -> Result<Self> {
        Perm::from_images(table.clone())?;
        Ok(LevelPermutation { depth, table })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn table(&self) -> &[u32] {
        &self.table
    }

    pub fn image(&self, index: usize) -> usize {
        self.table[index] as usize
    }

    pub fn is_identity(&self) -> bool {
        self.table.iter().enumerate().all(|(i, &x)| i as u32 == x)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &LevelPermutation) -> LevelPermutation {
        assert_eq!(self.depth, other.depth);
        LevelPermutation {
            depth: self.depth,
            table: other.table.iter().map(|&x| self.table[x as usize]).collect(),
        }
    }

    pub fn inverse(&self) -> LevelPermutation {
        let mut t = vec![0; self.table.len()];
        for (i, &x) in self.table.iter().enumerate() {
            t[x as usize] = i as u32;
        }
        LevelPermutation {
            depth: self.depth,
            table: t,
        }
    }
}

impl Automorphism {
    pub fn identity(shape: &TreeShape) -> Self {
        Automorphism {
            shape: Arc::new(shape.clone()),
            depth: 0,
            factors: Vec::new(),
        }
    }

    /// A finitary element from a portrait rooted at depth 0.
    pub fn portrait(shape: &TreeShape, node: Option<Arc<PortraitNode>>) -> Result<Self> {
        if let Some(n) = &node {
            PortraitNode::validate(n, shape, 0)?;
        }
        Ok(Automorphism {
            shape: Arc::new(shape.clone()),
            depth: 0,
            factors: node.into_iter().map(Factor::Portrait).collect(),
        })
    }

    /// The element given by input state `state` of `machine`.
    pub fn machine_state(shape: &TreeShape, machine: &Arc<Machine>, state: usize) -> Result<Self> {
        let s = machine
            .state_of(state)
            .ok_or_else(|| Error::InvalidAutomorphism(format!("state {state} out of range")))?;
        machine.validate(s, shape, 0)?;
        let factors = if machine.is_identity_state(s) {
            Vec::new()
        } else {
            vec![Factor::State(machine.clone(), s)]
        };
        Ok(Automorphism {
            shape: Arc::new(shape.clone()),
            depth: 0,
            factors,
        })
    }

    pub fn rule(shape: &TreeShape, rule: Arc<dyn SectionRule>) -> Self {
        Automorphism {
            shape: Arc::new(shape.clone()),
            depth: 0,
            factors: Factor::rule_root(&rule, &Prefix::root(), false).into_iter().collect(),
        }
    }

    /// Flips every listed level (1-based) on a tree that is binary there.
    pub fn translation(shape: &TreeShape, levels: &[usize]) -> Result<Self> {
        let mut node: Option<Arc<PortraitNode>> = None;
        let Some(&max) = levels.iter().max() else {
            return Ok(Automorphism::identity(shape));
        };
        for level in (1..=max).rev() {
            let q = shape.arity(level);
            let flip = levels.contains(&level);
            if flip && q != 2 {
                return Err(Error::InvalidAutomorphism(format!("level {level} has arity {q}, not 2")));
            }
            let perm = if flip { Perm::transposition(q, 0, 1) } else { Perm::identity(q) };
            let children = match &node {
                Some(c) => (0..q).map(|x| (x, c.clone())).collect(),
                None => BTreeMap::new(),
            };
            node = PortraitNode::build(perm, children);
        }
        Automorphism::portrait(shape, node)
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    /// Depth of the vertex this element acts below.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    /// True when the representation is syntactically the identity.
    pub fn is_trivially_identity(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn has_rule(&self) -> bool {
        self.factors.iter().any(Factor::is_rule)
    }

    pub(crate) fn key(&self) -> (Vec<FactorKey>, usize) {
        (self.factors.iter().map(Factor::key).collect(), self.shape.depth_class(self.depth))
    }

    pub fn arity(&self) -> u32 {
        self.shape.child_arity(self.depth)
    }

    /// Root permutation (`α_n(y)` when this is the section at `y`).
    pub fn root_perm(&self) -> Perm {
        self.factors
            .iter()
            .fold(Perm::identity(self.arity()), |acc, f| acc.compose(&f.perm()))
    }

    pub fn apply_letter(&self, x: u32) -> u32 {
        self.factors.iter().rev().fold(x, |x, f| f.apply_letter(x))
    }

    /// Section at a single letter.
    pub fn section_letter(&self, x: u32) -> Automorphism {
        let mut cur = x;
        let mut rev = Vec::with_capacity(self.factors.len());
        for f in self.factors.iter().rev() {
            rev.push(f.section(cur));
            cur = f.apply_letter(cur);
        }
        Automorphism {
            shape: self.shape.clone(),
            depth: self.depth + 1,
            factors: normalize(rev.into_iter().rev().flatten()),
        }
    }

    /// `section(g, y)`.
    pub fn section(&self, y: &Prefix) -> Automorphism {
        let mut g = self.clone();
        for &x in y.letters() {
            if g.factors.is_empty() {
                return Automorphism {
                    depth: self.depth + y.len(),
                    ..g
                };
            }
            g = g.section_letter(x);
        }
        g
    }

    /// Image of a finite word under this element.
    pub fn apply_prefix(&self, y: &Prefix) -> Prefix {
        let mut out = y.clone();
        for f in self.factors.iter().rev() {
            let mut cur = Some(f.clone());
            for x in out.0.iter_mut() {
                match cur {
                    Some(c) => {
                        let img = c.apply_letter(*x);
                        cur = c.section(*x);
                        *x = img;
                    }
                    None => break,
                }
            }
        }
        out
    }

    /// `π_n(g x)`.
    pub fn apply(&self, x: &BoundaryPoint, n: usize) -> Prefix {
        self.apply_prefix(&x.project(n))
    }

    /// The full image `g x` as an eventually periodic point, found by cycle
    /// detection on (section, tail phase) within `horizon` levels.
    pub fn apply_point(&self, x: &BoundaryPoint, horizon: usize) -> Result<BoundaryPoint> {
        let mut seen: HashMap<((Vec<FactorKey>, usize), usize), usize> = HashMap::new();
        let mut out = Vec::new();
        let mut g = self.clone();
        let start = x.head().len();
        for i in 0..horizon.max(start) + x.tail().len() * self.shape.period_len() + 1 {
            if i >= start {
                let phase = x.tail_phase(i).unwrap();
                if let Some(&i0) = seen.get(&(g.key(), phase)) {
                    let tail = out[i0..].to_vec();
                    out.truncate(i0);
                    return Ok(BoundaryPoint::from_parts_unchecked(out, tail));
                }
                if i > horizon {
                    break;
                }
                seen.insert((g.key(), phase), i);
            }
            let l = x.letter(i);
            out.push(g.apply_letter(l));
            g = g.section_letter(l);
        }
        Err(Error::NotStabilized(horizon))
    }

    pub fn compose(&self, other: &Automorphism) -> Automorphism {
        assert!(
            (Arc::ptr_eq(&self.shape, &other.shape) || self.shape == other.shape)
                && self.shape.depth_class(self.depth) == self.shape.depth_class(other.depth),
            "composing automorphisms of non-isomorphic subtrees"
        );
        Automorphism {
            shape: self.shape.clone(),
            depth: self.depth,
            factors: normalize(self.factors.iter().chain(other.factors.iter()).cloned()),
        }
    }

    /// `g_1 ∘ g_2 ∘ ⋯`, all at this element's depth class.
    pub fn product<'a>(&self, rest: impl IntoIterator<Item = &'a Automorphism>) -> Automorphism {
        let mut factors = self.factors.clone();
        for g in rest {
            assert!(
                self.shape.depth_class(self.depth) == self.shape.depth_class(g.depth),
                "composing automorphisms of non-isomorphic subtrees"
            );
            factors.extend(g.factors.iter().cloned());
        }
        Automorphism {
            shape: self.shape.clone(),
            depth: self.depth,
            factors: normalize(factors),
        }
    }

    pub fn inverse(&self) -> Automorphism {
        let mut memo = HashMap::new();
        Automorphism {
            shape: self.shape.clone(),
            depth: self.depth,
            factors: normalize(self.factors.iter().rev().map(|f| f.inverse(&mut memo))),
        }
    }

    /// Exact identity test by bisimulation over reachable sections.
    pub fn is_identity_exact(&self) -> Result<bool> {
        if self.has_rule() {
            return Err(Error::NotDecidable);
        }
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(g) = stack.pop() {
            if g.factors.is_empty() || !seen.insert(g.key()) {
                continue;
            }
            if !g.root_perm().is_identity() {
                return Ok(false);
            }
            for x in 0..g.arity() {
                stack.push(g.section_letter(x));
            }
        }
        Ok(true)
    }

    /// Identity test that falls back to depth-bounded comparison for rules:
    /// `Some(true)` only when proven (exactly or via quiescence).
    pub fn is_identity_to_depth(&self, depth: usize) -> bool {
        if !self.has_rule() {
            return self.is_identity_exact().unwrap_or(false);
        }
        let mut stack = vec![(self.clone(), 0usize)];
        while let Some((g, d)) = stack.pop() {
            if g.factors.is_empty() || d >= depth {
                continue;
            }
            if !g.root_perm().is_identity() {
                return false;
            }
            for x in 0..g.arity() {
                stack.push((g.section_letter(x), d + 1));
            }
        }
        true
    }

    pub fn equal_exact(&self, other: &Automorphism) -> Result<bool> {
        if self.has_rule() || other.has_rule() {
            return Err(Error::NotDecidable);
        }
        self.compose(&other.inverse()).is_identity_exact()
    }

    /// Agreement of the level projections at every depth up to `depth`.
    pub fn equal_to_depth(&self, other: &Automorphism, depth: usize) -> bool {
        self.compose(&other.inverse()).is_identity_to_depth(depth)
    }

    /// Tri-state nontriviality: exact for machine/portrait kernels, and for a
    /// single rule factor via its activity bound.
    pub fn is_nontrivial(&self) -> Option<bool> {
        if self.factors.is_empty() {
            return Some(false);
        }
        if !self.has_rule() {
            return Some(!self.is_identity_exact().unwrap());
        }
        if let [Factor::Rule { rule, base, .. }] = self.factors.as_slice() {
            return match rule.activity(base) {
                Activity::Active => Some(true),
                Activity::Quiescent => Some(false),
                Activity::Unknown => None,
            };
        }
        None
    }

    /// Whether a section at absolute depth `level` below this node may have a
    /// nontrivial root permutation (`false` is exact).
    pub fn may_act_at(&self, level: usize) -> bool {
        self.factors.iter().any(|f| f.may_act_at(self.depth, level))
    }

    fn level_count_below(&self, n: usize, cap: usize) -> Result<usize> {
        let count = (1..=n).try_fold(1usize, |acc, l| acc.checked_mul(self.shape.arity(self.depth + l) as usize));
        match count {
            Some(c) if c <= cap => Ok(c),
            _ => Err(Error::cap(format!("level {n} below depth {}", self.depth), cap)),
        }
    }

    /// `g_n` as a table over `enumerate_level(n)`.
    pub fn level_projection(&self, n: usize, cap: usize) -> Result<LevelPermutation> {
        let count = self.level_count_below(n, cap)?;
        let mut table = vec![0u32; count];
        // (section, source index, image index, level)
        let mut stack = vec![(self.clone(), 0usize, 0usize, 0usize)];
        while let Some((g, src, img, d)) = stack.pop() {
            if d == n {
                table[src] = img as u32;
                continue;
            }
            let q = g.arity() as usize;
            if g.factors.is_empty() {
                let span: usize = (d + 1..=n).map(|l| self.shape.arity(self.depth + l) as usize).product();
                let (s0, i0) = (src * span, img * span);
                for k in 0..span {
                    table[s0 + k] = (i0 + k) as u32;
                }
                continue;
            }
            let span_next_src = src * q;
            let span_next_img = img * q;
            for x in 0..q as u32 {
                let y = g.apply_letter(x);
                stack.push((g.section_letter(x), span_next_src + x as usize, span_next_img + y as usize, d + 1));
            }
        }
        Ok(LevelPermutation { depth: n, table })
    }

    /// Depth-`n` prefixes whose cylinders meet the support. Exact for
    /// machine/portrait kernels; rule sections whose triviality cannot be
    /// decided are included.
    pub fn support_level(&self, n: usize, cap: usize) -> Result<Vec<Prefix>> {
        self.level_count_below(n, cap)?;
        let mut out = Vec::new();
        let mut stack = vec![(self.clone(), Prefix::root(), false)];
        while let Some((g, y, moved)) = stack.pop() {
            if !moved && g.factors.is_empty() {
                continue;
            }
            if y.len() == n {
                if moved || g.is_nontrivial() != Some(false) {
                    out.push(y);
                }
                continue;
            }
            for x in (0..g.arity()).rev() {
                let m = moved || g.apply_letter(x) != x;
                stack.push((g.section_letter(x), y.child(x), m));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap() -> Perm {
        Perm::transposition(2, 0, 1)
    }

    fn bin() -> TreeShape {
        TreeShape::binary01()
    }

    #[test]
    fn machine_minimization_finds_identity_and_inverses() {
        // state 0: flip then identity; state 1: identity; state 2 copies state 0
        let m = Machine::new(vec![
            (swap(), vec![1, 1]),
            (Perm::identity(2), vec![1, 1]),
            (swap(), vec![1, 1]),
        ])
        .unwrap();
        assert_eq!(m.state_of(0), m.state_of(2));
        assert!(m.is_identity_state(m.state_of(1).unwrap()));
        let a = m.state_of(0).unwrap();
        assert_eq!(m.inverse_state(a), a);
    }

    #[test]
    fn odometer_has_infinite_order_at_finite_depth() {
        // t = flip(I, t) with letters {0,1}: adding one with carry.
        let m = Machine::new(vec![(swap(), vec![1, 0]), (Perm::identity(2), vec![1, 1])]).unwrap();
        let t = Automorphism::machine_state(&bin(), &m, 0).unwrap();
        let tt = t.compose(&t);
        assert!(!tt.is_identity_exact().unwrap());
        let p = t.level_projection(3, 64).unwrap();
        let mut q = p.clone();
        for _ in 1..8 {
            q = q.compose(&p);
        }
        assert!(q.is_identity());
        assert!(t.compose(&t.inverse()).is_identity_exact().unwrap());
    }

    #[test]
    fn translation_portraits() {
        let g = Automorphism::translation(&bin(), &[1, 3]).unwrap();
        assert_eq!(g.apply_prefix(&Prefix(vec![0, 0, 0, 1])), Prefix(vec![1, 0, 1, 1]));
        assert!(g.compose(&g).is_trivially_identity());
        let h = Automorphism::translation(&bin(), &[3]).unwrap();
        let gh = g.compose(&h);
        assert_eq!(gh.num_factors(), 1);
        assert_eq!(gh.apply_prefix(&Prefix(vec![0, 0, 0])), Prefix(vec![1, 0, 0]));
    }

    #[test]
    fn apply_point_is_eventually_periodic() {
        let m = Machine::new(vec![(swap(), vec![1, 0]), (Perm::identity(2), vec![1, 1])]).unwrap();
        let t = Automorphism::machine_state(&bin(), &m, 0).unwrap();
        let ones = BoundaryPoint::constant(&bin(), 1).unwrap();
        // 111… + 1 = 000…
        let img = t.apply_point(&ones, 64).unwrap();
        assert_eq!(img, BoundaryPoint::constant(&bin(), 0).unwrap());
        let x = BoundaryPoint::with_constant_tail(&bin(), &Prefix(vec![1, 1]), 0).unwrap();
        let img = t.apply_point(&x, 64).unwrap();
        assert_eq!(img.project(5), Prefix(vec![0, 0, 1, 0, 0]));
    }
}
