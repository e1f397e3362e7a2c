//! Finitely generated subgroups of the automorphism group: words, balls,
//! level projections `G_n`, level transitivity, transporters, rigid
//! stabilizers and level orbit partitions.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::automorphism::{Automorphism, LevelPermutation};
use crate::error::{Error, Result};
use crate::tree::{Prefix, TreeShape};

/// Default depth of level-projection comparisons when equality is undecidable.
pub const DEFAULT_DEDUP_DEPTH: usize = 12;

#[derive(Clone, Debug)]
pub struct GeneratedGroup {
    shape: TreeShape,
    names: Vec<String>,
    gens: Vec<Automorphism>,
    inverses: Vec<Automorphism>,
    involution: Vec<bool>,
}

/// A free-reduced word `s_1^{e_1} ⋯ s_k^{e_k}`; the rightmost letter acts first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<(usize, i8)>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn letters(&self) -> &[(usize, i8)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DedupMode {
    Exact,
    Depth(usize),
}

#[derive(Clone, Debug)]
pub struct BallElement {
    pub word: Word,
    pub element: Automorphism,
    pub dedup: DedupMode,
}

#[derive(Clone, Debug)]
pub enum Minimality {
    /// `witnesses[i]` maps the first prefix to the `i`-th prefix of the level.
    Transitive { witnesses: Vec<Word> },
    NotTransitive { orbits: Vec<Vec<usize>> },
}

impl Minimality {
    pub fn is_transitive(&self) -> bool {
        matches!(self, Minimality::Transitive { .. })
    }
}

impl GeneratedGroup {
    pub fn new(shape: &TreeShape, gens: Vec<(String, Automorphism)>) -> Result<Self> {
        if gens.is_empty() {
            return Err(Error::InvalidAutomorphism("a group needs at least one generator".into()));
        }
        let mut names = Vec::new();
        let mut elems = Vec::new();
        for (name, g) in gens {
            if g.shape() != shape || g.depth() != 0 {
                return Err(Error::ShapeMismatch(format!("generator {name} acts on another tree")));
            }
            if names.contains(&name) {
                return Err(Error::InvalidAutomorphism(format!("duplicate generator name {name}")));
            }
            names.push(name);
            elems.push(g);
        }
        let inverses: Vec<Automorphism> = elems.iter().map(Automorphism::inverse).collect();
        let involution = elems
            .iter()
            .map(|g| {
                let sq = g.compose(g);
                sq.is_identity_exact().unwrap_or_else(|_| sq.is_identity_to_depth(DEFAULT_DEDUP_DEPTH))
            })
            .collect();
        Ok(GeneratedGroup {
            shape: shape.clone(),
            names,
            gens: elems,
            inverses,
            involution,
        })
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn generators(&self) -> &[Automorphism] {
        &self.gens
    }

    pub fn generator(&self, name: &str) -> Option<&Automorphism> {
        self.names.iter().position(|n| n == name).map(|i| &self.gens[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_involution(&self, i: usize) -> bool {
        self.involution[i]
    }

    /// Free reduction, with `s⁻¹ = s` for involutive generators.
    pub fn word(&self, letters: impl IntoIterator<Item = (usize, i8)>) -> Word {
        let mut out: Vec<(usize, i8)> = Vec::new();
        for (g, e) in letters {
            let e = if self.involution[g] { 1 } else { e.signum() };
            match out.last() {
                Some(&(h, f)) if h == g && f == -e => {
                    out.pop();
                }
                Some(&(h, _)) if h == g && self.involution[g] => {
                    out.pop();
                }
                _ => out.push((g, e)),
            }
        }
        Word(out)
    }

    /// Parses space-separated generator names, each optionally followed by `^-1`.
    pub fn parse_word(&self, s: &str) -> Result<Word> {
        let mut letters = Vec::new();
        for tok in s.split_whitespace() {
            if tok == "1" {
                continue;
            }
            let (name, e) = match tok.strip_suffix("^-1") {
                Some(n) => (n, -1),
                None => (tok, 1),
            };
            let g = self
                .index_of(name)
                .ok_or_else(|| Error::Parse(format!("unknown generator {name:?}")))?;
            letters.push((g, e));
        }
        Ok(self.word(letters))
    }

    pub fn format_word(&self, w: &Word) -> String {
        if w.is_empty() {
            return "1".into();
        }
        w.0.iter()
            .map(|&(g, e)| if e < 0 { format!("{}^-1", self.names[g]) } else { self.names[g].clone() })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn concat(&self, a: &Word, b: &Word) -> Word {
        self.word(a.0.iter().chain(b.0.iter()).copied())
    }

    pub fn inverse_word(&self, w: &Word) -> Word {
        self.word(w.0.iter().rev().map(|&(g, e)| (g, -e)))
    }

    pub fn evaluate(&self, w: &Word) -> Automorphism {
        Automorphism::identity(&self.shape).product(w.0.iter().map(|&l| self.letter(l)))
    }

    /// Letters in shortlex order: each generator, then its inverse unless it
    /// is an involution.
    fn alphabet(&self) -> Vec<(usize, i8)> {
        let mut order: Vec<usize> = (0..self.gens.len()).collect();
        order.sort_by(|&a, &b| self.names[a].cmp(&self.names[b]));
        order
            .into_iter()
            .flat_map(|g| {
                let mut v = vec![(g, 1i8)];
                if !self.involution[g] {
                    v.push((g, -1));
                }
                v
            })
            .collect()
    }

    fn letter(&self, (g, e): (usize, i8)) -> &Automorphism {
        if e < 0 {
            &self.inverses[g]
        } else {
            &self.gens[g]
        }
    }

    /// Distinct elements of word length at most `radius`, in shortlex order
    /// of their first representative.
    pub fn ball(&self, radius: usize, dedup_depth: usize, cap: usize) -> Result<Vec<BallElement>> {
        let table_depth = (0..=dedup_depth)
            .rev()
            .find(|&d| self.shape.level_count(d, 1 << 12).is_ok())
            .unwrap_or(0);
        let mut out: Vec<BallElement> = vec![BallElement {
            word: Word::empty(),
            element: Automorphism::identity(&self.shape),
            dedup: DedupMode::Exact,
        }];
        let mut buckets: HashMap<LevelPermutation, Vec<usize>> = HashMap::new();
        buckets
            .entry(out[0].element.level_projection(table_depth, usize::MAX)?)
            .or_default()
            .push(0);
        let alphabet = self.alphabet();
        let mut frontier = vec![0usize];
        for _ in 0..radius {
            let mut next = Vec::new();
            for &i in &frontier {
                for &l in &alphabet {
                    let word = self.word(out[i].word.0.iter().copied().chain(std::iter::once(l)));
                    if word.len() <= out[i].word.len() {
                        continue;
                    }
                    let element = out[i].element.compose(self.letter(l));
                    let table = element.level_projection(table_depth, usize::MAX)?;
                    let exact = !element.has_rule();
                    let bucket = buckets.entry(table).or_default();
                    let dup = bucket.iter().any(|&j| {
                        if exact && !out[j].element.has_rule() {
                            element.equal_exact(&out[j].element).unwrap()
                        } else {
                            element.equal_to_depth(&out[j].element, dedup_depth)
                        }
                    });
                    if dup {
                        continue;
                    }
                    if out.len() >= cap {
                        return Err(Error::cap(format!("ball of radius {radius}"), cap));
                    }
                    bucket.push(out.len());
                    next.push(out.len());
                    out.push(BallElement {
                        word,
                        element,
                        dedup: if exact { DedupMode::Exact } else { DedupMode::Depth(dedup_depth) },
                    });
                }
            }
            frontier = next;
        }
        Ok(out)
    }

    pub fn level_tables(&self, n: usize, cap: usize) -> Result<Vec<LevelPermutation>> {
        self.gens.iter().map(|g| g.level_projection(n, cap)).collect()
    }

    /// BFS over `G_n` from the first prefix. Exact: no word cap is involved.
    pub fn minimality_check(&self, n: usize, cap: usize) -> Result<Minimality> {
        let size = self.shape.level_count(n, cap)?;
        let tables: Vec<(LevelPermutation, (usize, i8))> = self
            .alphabet()
            .into_iter()
            .map(|l| Ok((self.letter(l).level_projection(n, cap)?, l)))
            .collect::<Result<_>>()?;
        let (parent, _) = bfs(&tables, 0, size);
        if parent.iter().all(Option::is_some) {
            let mut witnesses: Vec<Option<Word>> = vec![None; size];
            witnesses[0] = Some(Word::empty());
            for i in 0..size {
                resolve_word(self, i, &parent, &mut witnesses);
            }
            return Ok(Minimality::Transitive {
                witnesses: witnesses.into_iter().map(Option::unwrap).collect(),
            });
        }
        Ok(Minimality::NotTransitive {
            orbits: self.level_orbit_partition(n, &(0..self.gens.len()).collect::<Vec<_>>(), cap)?,
        })
    }

    /// A shortest word (BFS, shortlex tie-breaking) whose level projection maps `y` to `y2`.
    pub fn find_transporter(&self, y: &Prefix, y2: &Prefix, cap: usize) -> Result<Word> {
        if y.len() != y2.len() {
            return Err(Error::InvalidPrefix("transporter endpoints have different lengths".into()));
        }
        let n = y.len();
        let size = self.shape.level_count(n, cap)?;
        let tables: Vec<(LevelPermutation, (usize, i8))> = self
            .alphabet()
            .into_iter()
            .map(|l| Ok((self.letter(l).level_projection(n, cap)?, l)))
            .collect::<Result<_>>()?;
        let (src, dst) = (self.shape.index_of(y), self.shape.index_of(y2));
        let (parent, _) = bfs(&tables, src, size);
        if parent[dst].is_none() {
            return Err(Error::NotFound(format!(
                "{} is not in the orbit of {}",
                self.shape.format_prefix(y2),
                self.shape.format_prefix(y)
            )));
        }
        let mut letters = Vec::new();
        let mut cur = dst;
        while cur != src {
            let (prev, l) = parent[cur].unwrap();
            letters.push(l);
            cur = prev;
        }
        Ok(self.word(letters))
    }

    /// Orbits of the subgroup generated by the listed generators on level `n`,
    /// as sorted blocks of prefix indices ordered by least element.
    pub fn level_orbit_partition(&self, n: usize, filter: &[usize], cap: usize) -> Result<Vec<Vec<usize>>> {
        let size = self.shape.level_count(n, cap)?;
        let tables: Vec<LevelPermutation> =
            filter.iter().map(|&i| self.gens[i].level_projection(n, cap)).collect::<Result<_>>()?;
        let mut block = vec![usize::MAX; size];
        let mut out = Vec::new();
        for s in 0..size {
            if block[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            block[s] = id;
            let mut q = VecDeque::from([s]);
            while let Some(i) = q.pop_front() {
                for t in &tables {
                    let j = t.image(i);
                    if block[j] == usize::MAX {
                        block[j] = id;
                        members.push(j);
                        q.push_back(j);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        Ok(out)
    }

    /// Dimension of the space of `G_n`-invariant vectors, i.e. of
    /// `{p : P_g p = p for all generators}` (SVD, cutoff `1e-10`), and
    /// whether that space is spanned by the uniform vector.
    pub fn invariant_distribution_dimension(&self, n: usize, cap: usize) -> Result<(usize, bool)> {
        let size = self.shape.level_count(n, cap)?;
        let tables = self.level_tables(n, cap)?;
        let mut m = DMatrix::<f64>::zeros(size * tables.len(), size);
        for (k, t) in tables.iter().enumerate() {
            for i in 0..size {
                // (P p)[g(i)] = p[i]
                m[(k * size + t.image(i), i)] += 1.0;
                m[(k * size + i, i)] -= 1.0;
            }
        }
        let basis = null_space(&m, 1e-10);
        let uniform = basis.len() == 1 && {
            let v = &basis[0];
            let mean = v.sum() / size as f64;
            mean.abs() > 1e-10 && v.iter().all(|x| (x - mean).abs() < 1e-10)
        };
        Ok((basis.len(), uniform))
    }

    /// Ball elements supported inside the cylinder `o`, excluding the identity.
    /// Support is certified exactly (bisimulation) or via activity bounds; the
    /// depth-`verify_depth` support table is cross-checked.
    pub fn rigid_stabilizer_elements(
        &self,
        o: &Prefix,
        radius: usize,
        verify_depth: usize,
        cap: usize,
    ) -> Result<Vec<(Word, Automorphism)>> {
        let ball = self.ball(radius, DEFAULT_DEDUP_DEPTH, cap)?;
        let mut out = Vec::new();
        for e in ball {
            if e.word.is_empty() {
                continue;
            }
            if supported_in(&e.element, o, cap)? {
                let vd = verify_depth.max(o.len());
                debug_assert!(e.element.support_level(vd, cap)?.iter().all(|y| o.is_prefix_of(y)));
                out.push((e.word, e.element));
            }
        }
        Ok(out)
    }
}

/// Exact test of `Supp g ⊆ [o]` (and `g ≠ 1`).
pub fn supported_in(g: &Automorphism, o: &Prefix, cap: usize) -> Result<bool> {
    if g.is_nontrivial() == Some(false) {
        return Ok(false);
    }
    let table = g.level_projection(o.len(), cap)?;
    if !table.is_identity() {
        return Ok(false);
    }
    let shape = g.shape();
    for y in shape.enumerate_level(o.len(), cap)? {
        if &y == o {
            continue;
        }
        if g.section(&y).is_nontrivial() != Some(false) {
            return Ok(false);
        }
    }
    Ok(g.section(o).is_nontrivial() == Some(true))
}

type Parent = Vec<Option<(usize, (usize, i8))>>;

fn bfs(tables: &[(LevelPermutation, (usize, i8))], src: usize, size: usize) -> (Parent, usize) {
    let mut parent: Parent = vec![None; size];
    let mut seen = vec![false; size];
    seen[src] = true;
    parent[src] = Some((src, (usize::MAX, 0)));
    let mut q = VecDeque::from([src]);
    let mut reached = 1;
    while let Some(i) = q.pop_front() {
        for (t, l) in tables {
            let j = t.image(i);
            if !seen[j] {
                seen[j] = true;
                parent[j] = Some((i, *l));
                reached += 1;
                q.push_back(j);
            }
        }
    }
    (parent, reached)
}

fn resolve_word(g: &GeneratedGroup, i: usize, parent: &Parent, memo: &mut [Option<Word>]) {
    let mut chain = Vec::new();
    let mut cur = i;
    while memo[cur].is_none() {
        chain.push(cur);
        cur = parent[cur].unwrap().0;
    }
    for &c in chain.iter().rev() {
        let (p, l) = parent[c].unwrap();
        let w = g.word(std::iter::once(l).chain(memo[p].as_ref().unwrap().0.iter().copied()));
        memo[c] = Some(w);
    }
}

/// Orthonormal basis of the null space of `m`, singular-value cutoff `tol`.
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let cols = m.ncols();
    // Pad to at least square so that V is complete.
    let padded = if m.nrows() < cols { m.clone().resize_vertically(cols, 0.0) } else { m.clone() };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("V requested");
    (0..cols)
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| vt.row(i).transpose())
        .collect()
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|&(g, e)| if e < 0 { format!("s{g}^-1") } else { format!("s{g}") })
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}
