//! Finite-level Koopman matrices `κ_μ(g)f = f∘g⁻¹ · √(dμ∘g⁻¹/dμ)` on
//! cylinder functions, and diagnostics built from them.

use std::collections::{BTreeSet, HashMap, HashSet};

use nalgebra::{DMatrix, DVector};
use num_integer::Integer;
use serde::Serialize;

use crate::automorphism::Automorphism;
use crate::cocycle::{analyze_sections, preserves, ActivityGrowth};
use crate::error::{Error, Result};
use crate::group::{null_space, GeneratedGroup};
use crate::measures::{q_to_f64, ProductMeasure, Q};
use crate::tree::{Prefix, TreeShape};

pub const FIXED_SPACE_CUTOFF: f64 = 1e-10;

/// A function of the first `depth` coordinates, by value on each cylinder in
/// level order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CylinderFunction {
    pub depth: usize,
    pub values: Vec<f64>,
}

impl CylinderFunction {
    pub fn new(shape: &TreeShape, depth: usize, values: Vec<f64>) -> Result<Self> {
        let count = shape.level_count(depth, 1 << 24)?;
        if values.len() != count {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {count} cylinders of depth {depth}",
                values.len()
            )));
        }
        Ok(CylinderFunction { depth, values })
    }

    pub fn constant(shape: &TreeShape, depth: usize, c: f64) -> Result<Self> {
        let count = shape.level_count(depth, 1 << 24)?;
        Ok(CylinderFunction {
            depth,
            values: vec![c; count],
        })
    }

    pub fn indicator(shape: &TreeShape, y: &Prefix) -> Result<Self> {
        let mut f = Self::constant(shape, y.len(), 0.0)?;
        f.values[shape.index_of(y)] = 1.0;
        Ok(f)
    }

    /// Value on `[x]` for `|x| ≥ depth`.
    pub fn at(&self, shape: &TreeShape, x: &Prefix) -> f64 {
        self.values[shape.index_of(&x.truncate(self.depth))]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm(&self, shape: &TreeShape, mu: &ProductMeasure) -> f64 {
        self.inner(shape, mu, self).sqrt()
    }

    pub fn inner(&self, shape: &TreeShape, mu: &ProductMeasure, other: &CylinderFunction) -> f64 {
        let d = self.depth.max(other.depth);
        (0..shape.level_count(d, usize::MAX).unwrap_or(0))
            .map(|i| {
                let y = shape.prefix_at(d, i);
                self.at(shape, &y) * other.at(shape, &y) * q_to_f64(&mu.cylinder_measure(&y))
            })
            .sum()
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }
}

/// Depth class of a vertex for both the tree and the measure.
fn class_of(shape: &TreeShape, mu: &ProductMeasure) -> impl Fn(usize) -> usize {
    let (t, p) = mu.periodicity();
    let t = t.max(shape.head_len());
    let p = p.lcm(&shape.period_len().max(1));
    move |depth| if depth <= t { depth } else { t + (depth - t) % p }
}

/// A vertex below the root of `s` whose permutation does not preserve the
/// matching level of `mu`, as a path relative to `s`.
fn tail_violation(s: &Automorphism, mu: &ProductMeasure, cap: usize) -> Result<Option<Vec<u32>>> {
    let class = class_of(s.shape(), mu);
    let mut seen = HashSet::new();
    let mut stack = vec![(s.clone(), Vec::new())];
    while let Some((h, path)) = stack.pop() {
        if h.is_trivially_identity() {
            continue;
        }
        if h.has_rule() {
            match h.is_nontrivial() {
                Some(false) => continue,
                _ => return Err(Error::NotDecidable),
            }
        }
        if !seen.insert((h.key(), class(h.depth()))) {
            continue;
        }
        if seen.len() > cap {
            return Err(Error::cap("section states for depth compatibility", cap));
        }
        if !preserves(&h.root_perm(), mu.level(h.depth() + 1)) {
            return Ok(Some(path));
        }
        for x in 0..h.arity() {
            let mut p = path.clone();
            p.push(x);
            stack.push((h.section_letter(x), p));
        }
    }
    Ok(None)
}

/// `κ_μ(g)` on depth-`n` cylinder functions.
#[derive(Clone, Debug)]
pub struct KoopmanMatrix {
    pub depth: usize,
    /// `g_n` over the level enumeration.
    pub table: Vec<u32>,
    /// `μ([y])`.
    pub weights: Vec<Q>,
    /// In the basis `1_[y]`: entry `(g_n(y), y)` is `√(μ[y]/μ[g_n(y)])`.
    pub indicator: DMatrix<f64>,
    /// In the orthonormal basis `1_[y]/√μ[y]`.
    pub normalized: DMatrix<f64>,
}

impl KoopmanMatrix {
    /// Square of the indicator-basis entry, exactly.
    pub fn entry_squared(&self, row: usize, col: usize) -> Q {
        if self.table[col] as usize == row {
            &self.weights[col] / &self.weights[row]
        } else {
            Q::from_integer(0.into())
        }
    }

    pub fn is_permutation(&self) -> bool {
        self.normalized
            .iter()
            .all(|&v| v == 0.0 || (v - 1.0).abs() <= 1e-15)
    }

    /// Row-major text, one row per line.
    pub fn to_text(&self, normalized: bool) -> String {
        let m = if normalized { &self.normalized } else { &self.indicator };
        let mut s = String::new();
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// `⟨M f, r⟩_μ` for depth-`n` functions.
    pub fn coefficient(&self, f: &CylinderFunction, r: &CylinderFunction) -> f64 {
        let fv = DVector::from_vec(f.values.clone());
        let mf = &self.indicator * fv;
        (0..mf.len()).map(|i| mf[i] * r.values[i] * q_to_f64(&self.weights[i])).sum()
    }
}

/// Fails with the first cylinder below which `g` does not preserve `mu`.
pub fn depth_compatibility(g: &Automorphism, mu: &ProductMeasure, n: usize, cap: usize) -> Result<()> {
    let shape = g.shape();
    for i in 0..shape.level_count(n, cap)? {
        let y = shape.prefix_at(n, i);
        if let Some(path) = tail_violation(&g.section(&y), mu, cap)? {
            let w = y.concat(&Prefix(path));
            return Err(Error::NotDepthCompatible {
                witness: shape.format_prefix(&w),
            });
        }
    }
    Ok(())
}

pub fn koopman_matrix(g: &Automorphism, mu: &ProductMeasure, n: usize, cap: usize) -> Result<KoopmanMatrix> {
    depth_compatibility(g, mu, n, cap)?;
    let shape = g.shape();
    let table = g.level_projection(n, cap)?;
    let size = table.len();
    let weights: Vec<Q> = (0..size).map(|i| mu.cylinder_measure(&shape.prefix_at(n, i))).collect();
    let mut indicator = DMatrix::zeros(size, size);
    let mut normalized = DMatrix::zeros(size, size);
    for col in 0..size {
        let row = table.image(col);
        let ratio = &weights[col] / &weights[row];
        indicator[(row, col)] = q_to_f64(&ratio).sqrt();
        normalized[(row, col)] = q_to_f64(&(ratio * &weights[row] / &weights[col])).sqrt();
    }
    Ok(KoopmanMatrix {
        depth: n,
        table: table.table().to_vec(),
        weights,
        indicator,
        normalized,
    })
}

/// `max |MᵀM − I|`.
pub fn unitarity_defect(m: &DMatrix<f64>) -> f64 {
    let id = DMatrix::<f64>::identity(m.nrows(), m.ncols());
    (m.transpose() * m - id).amax()
}

/// `max |AB − C|`.
pub fn homomorphism_defect(a: &DMatrix<f64>, b: &DMatrix<f64>, ab: &DMatrix<f64>) -> f64 {
    (a * b - ab).amax()
}

#[derive(Clone, Debug)]
pub struct FixedSpace {
    pub dimension: usize,
    /// Orthonormal, in the normalized cylinder basis.
    pub basis: Vec<DVector<f64>>,
}

impl FixedSpace {
    /// `‖Pv − v‖` for the orthogonal projection `P` onto the space.
    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        let mut p = DVector::zeros(v.len());
        for b in &self.basis {
            p += b * b.dot(v);
        }
        (p - v).norm()
    }
}

/// `{h : Mh = h for every M}` via the null space of the stacked `M − I`.
pub fn fixed_space(matrices: &[KoopmanMatrix]) -> Result<FixedSpace> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::DimensionMismatch("no matrices".into()))?;
    let size = first.normalized.nrows();
    if matrices.iter().any(|m| m.depth != first.depth || m.weights != first.weights) {
        return Err(Error::DimensionMismatch("matrices differ in depth or measure".into()));
    }
    let mut stacked = DMatrix::zeros(size * matrices.len(), size);
    for (k, m) in matrices.iter().enumerate() {
        let block = &m.normalized - DMatrix::<f64>::identity(size, size);
        stacked.view_mut((k * size, 0), (size, size)).copy_from(&block);
    }
    let basis = null_space(&stacked, FIXED_SPACE_CUTOFF);
    Ok(FixedSpace {
        dimension: basis.len(),
        basis,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IoDiagnostic {
    pub cylinder: String,
    pub depth: usize,
    /// Ball elements supported in `[o]`.
    pub elements: Vec<String>,
    /// Of those, the ones with a Koopman matrix at this depth.
    pub compatible: usize,
    pub dimension: usize,
    /// Depth-`n` cylinders outside `[o]`.
    pub outside: usize,
    /// Every cylinder outside `[o]` lies in the fixed space.
    pub outside_fixed: bool,
    /// `dimension − outside`.
    pub residual_inside: usize,
}

/// Fixed space of the rigid stabilizer of `[o]`, sampled from a ball.
pub fn io_diagnostic(
    group: &GeneratedGroup,
    o: &Prefix,
    mu: &ProductMeasure,
    depth: usize,
    radius: usize,
    cap: usize,
) -> Result<IoDiagnostic> {
    let shape = group.shape();
    let elements = group.rigid_stabilizer_elements(o, radius, depth, cap)?;
    let mut matrices = Vec::new();
    for (_, e) in &elements {
        match koopman_matrix(e, mu, depth, cap) {
            Ok(m) => matrices.push(m),
            Err(Error::NotDepthCompatible { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if matrices.is_empty() {
        return Err(Error::NotFound(format!(
            "no depth-compatible element supported in {}",
            shape.format_prefix(o)
        )));
    }
    let space = fixed_space(&matrices)?;
    let size = shape.level_count(depth, cap)?;
    let outside: Vec<usize> = (0..size).filter(|&i| !o.is_prefix_of(&shape.prefix_at(depth, i))).collect();
    let outside_fixed = outside.iter().all(|&i| {
        let mut e = DVector::zeros(size);
        e[i] = 1.0;
        space.residual(&e) <= 1e-9
    });
    Ok(IoDiagnostic {
        cylinder: shape.format_prefix(o),
        depth,
        elements: elements.iter().map(|(w, _)| group.format_word(w)).collect(),
        compatible: matrices.len(),
        dimension: space.dimension,
        outside: outside.len(),
        outside_fixed,
        residual_inside: space.dimension.saturating_sub(outside.len()),
    })
}

/// Lower and upper bounds for a matrix coefficient; equal when exact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Coefficient {
    pub lo: f64,
    pub hi: f64,
}

impl Coefficient {
    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    /// Largest `|v − c|` over the bracket.
    pub fn max_distance(&self, c: f64) -> f64 {
        (self.lo - c).abs().max((self.hi - c).abs())
    }
}

/// `⟨κ_μ(g)f, r⟩`, summed over cylinders on which `dμ∘g⁻¹/dμ` is constant.
/// Cylinders still undetermined at `horizon` contribute a Cauchy–Schwarz
/// bracket.
pub fn koopman_coefficient(
    g: &Automorphism,
    mu: &ProductMeasure,
    f: &CylinderFunction,
    r: &CylinderFunction,
    horizon: usize,
    cap: usize,
) -> Result<Coefficient> {
    let shape = g.shape().clone();
    let d = f.depth.max(r.depth);
    let h = g.inverse();
    let class = class_of(&shape, mu);
    let mut memo = HashMap::new();
    let (mut lo, mut hi) = (0.0, 0.0);
    let mut nodes = 0usize;
    // (section of g⁻¹ at y, y, g⁻¹(y))
    let mut stack = vec![(h, Prefix::root(), Prefix::root())];
    while let Some((s, y, hy)) = stack.pop() {
        nodes += 1;
        if nodes > cap {
            return Err(Error::cap("coefficient nodes", cap));
        }
        let k = y.len();
        if k >= d {
            let key = (s.key(), class(k));
            let settled = match memo.get(&key) {
                Some(&b) => b,
                None => {
                    let b = match tail_violation(&s, mu, cap) {
                        Ok(v) => v.is_none(),
                        Err(Error::NotDecidable) => false,
                        Err(e) => return Err(e),
                    };
                    memo.insert(key, b);
                    b
                }
            };
            let v = f.at(&shape, &hy)
                * r.at(&shape, &y)
                * (q_to_f64(&mu.cylinder_measure(&y)) * q_to_f64(&mu.cylinder_measure(&hy))).sqrt();
            if settled {
                lo += v;
                hi += v;
                continue;
            }
            if k >= horizon {
                lo += v.min(0.0);
                hi += v.max(0.0);
                continue;
            }
        }
        for x in 0..s.arity() {
            let img = s.apply_letter(x);
            stack.push((s.section_letter(x), y.child(x), hy.child(img)));
        }
    }
    Ok(Coefficient { lo, hi })
}

#[derive(Clone, Debug, Serialize)]
pub struct RigidityStep {
    pub m: usize,
    pub cylinder: String,
    pub element: String,
    pub mass: f64,
    /// `|⟨κ(g_m)f, r⟩ − ⟨f, r⟩|` bracketed.
    pub value: Coefficient,
    /// `‖f‖_∞ ‖1_O‖₂ ‖r‖₂ + |⟨f 1_O, r⟩|`.
    pub bound: f64,
    pub holds: bool,
    /// `2√μ(O_m)`, reported for constant `f` and `r`.
    pub constant_bound: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RigidityTrace {
    pub steps: Vec<RigidityStep>,
    pub all_hold: bool,
}

/// One element per cylinder of a shrinking chain, each supported in its cylinder.
pub struct RigidityStepInput {
    pub cylinder: Prefix,
    pub element: Automorphism,
    pub label: String,
}

pub fn rigidity_trace(
    mu: &ProductMeasure,
    f: &CylinderFunction,
    r: &CylinderFunction,
    chain: &[RigidityStepInput],
    horizon: usize,
    cap: usize,
) -> Result<RigidityTrace> {
    let shape = mu.shape().clone();
    let base = f.inner(&shape, mu, r);
    let r_norm = r.norm(&shape, mu);
    let constant = f.is_constant() && r.is_constant();
    let mut steps = Vec::new();
    for (i, s) in chain.iter().enumerate() {
        let o = &s.cylinder;
        let d = f.depth.max(r.depth).max(o.len());
        let mass = q_to_f64(&mu.cylinder_measure(o));
        // ⟨f 1_O, r⟩ at depth d.
        let fo: f64 = (0..shape.level_count(d, cap)?)
            .map(|j| shape.prefix_at(d, j))
            .filter(|y| o.is_prefix_of(y))
            .map(|y| f.at(&shape, &y) * r.at(&shape, &y) * q_to_f64(&mu.cylinder_measure(&y)))
            .sum();
        let c = koopman_coefficient(&s.element, mu, f, r, horizon.max(d), cap)?;
        let lo = if c.lo <= base && base <= c.hi { 0.0 } else { (c.lo - base).abs().min((c.hi - base).abs()) };
        let value = Coefficient {
            lo,
            hi: c.max_distance(base),
        };
        let bound = f.sup_norm() * mass.sqrt() * r_norm + fo.abs();
        let constant_bound = constant.then(|| 2.0 * mass.sqrt() * f.sup_norm() * r.sup_norm());
        let holds = value.hi <= bound + 1e-12 && constant_bound.is_none_or(|b| value.hi <= b + 1e-12);
        steps.push(RigidityStep {
            m: i + 1,
            cylinder: shape.format_prefix(o),
            element: s.label.clone(),
            mass,
            value,
            bound,
            holds,
            constant_bound,
        });
    }
    Ok(RigidityTrace {
        all_hold: steps.iter().all(|s| s.holds),
        steps,
    })
}

/// Orthogonal projectors onto the depth-`k` functions minus the depth-`(k−1)`
/// ones, `k = 0..=n`, in the normalized Haar basis of depth `n`.
pub fn filtration_projectors(shape: &TreeShape, n: usize, cap: usize) -> Result<Vec<DMatrix<f64>>> {
    let size = shape.level_count(n, cap)?;
    let mut out = Vec::with_capacity(n + 1);
    let mut prev = DMatrix::<f64>::zeros(size, size);
    for k in 0..=n {
        let mut p = DMatrix::<f64>::zeros(size, size);
        let blocks = shape.level_count(k, cap)?;
        let width = size / blocks;
        let w = 1.0 / width as f64;
        for b in 0..blocks {
            for i in b * width..(b + 1) * width {
                for j in b * width..(b + 1) * width {
                    p[(i, j)] = w;
                }
            }
        }
        out.push(&p - &prev);
        prev = p;
    }
    Ok(out)
}

/// `max |M P_k − P_k M|` per projector.
pub fn filtration_defects(m: &DMatrix<f64>, projectors: &[DMatrix<f64>]) -> Vec<f64> {
    projectors.iter().map(|p| (m * p - p * m).amax()).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FiltrationReport {
    pub depth: usize,
    /// Per generator, the commutator defect for each `k = 0..=depth`.
    pub defects: Vec<(String, Vec<f64>)>,
    pub max_defect: f64,
}

/// Commutation of Haar Koopman matrices of the generators with the level
/// filtration.
pub fn level_filtration_check(group: &GeneratedGroup, n: usize, cap: usize) -> Result<FiltrationReport> {
    let shape = group.shape();
    let haar = ProductMeasure::uniform(shape);
    let projectors = filtration_projectors(shape, n, cap)?;
    let mut defects = Vec::new();
    for (name, g) in group.names().iter().zip(group.generators()) {
        let m = koopman_matrix(g, &haar, n, cap)?;
        defects.push((name.clone(), filtration_defects(&m.normalized, &projectors)));
    }
    let max_defect = defects.iter().flat_map(|(_, d)| d.iter().copied()).fold(0.0, f64::max);
    Ok(FiltrationReport {
        depth: n,
        defects,
        max_defect,
    })
}

#[derive(Clone, Debug)]
pub struct WeakContainmentOptions {
    pub eps: f64,
    /// Largest depth tried for `k_ε`.
    pub k_cap: usize,
    /// Depth at which undetermined cylinders of the `μ` coefficient are bracketed.
    pub horizon: usize,
    /// Negative control: use `f 1_Y` in place of `f Φ 1_Y`.
    pub drop_phi: bool,
    pub cap: usize,
}

impl Default for WeakContainmentOptions {
    fn default() -> Self {
        WeakContainmentOptions {
            eps: 0.01,
            k_cap: 20,
            horizon: 24,
            drop_phi: false,
            cap: 1 << 20,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakContainmentRow {
    pub element: String,
    /// `⟨κ_μ(g)(f⊗1), f⊗1⟩`.
    pub mu_coefficient: Coefficient,
    /// The same through the depth-`n` Koopman matrix, when `g` is depth-compatible.
    pub mu_coefficient_matrix: Option<f64>,
    /// `⟨κ_ν(g)(f̃⊗1), f̃⊗1⟩` by summing over depth-`k_ε` cylinders.
    pub nu_coefficient: f64,
    /// The same through the Koopman matrix restricted to `Y_{k_ε}`.
    pub nu_coefficient_matrix: f64,
    pub difference: f64,
    /// `μ(g⁻¹ Y^c)` at `k_ε`.
    pub preimage_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakContainmentReport {
    pub k_eps: usize,
    pub eps: f64,
    /// `max |f|`.
    pub c: f64,
    /// `μ(Y^c)` at `k_ε`.
    pub complement_mass: f64,
    pub rows: Vec<WeakContainmentRow>,
    /// `2C²ε`.
    pub bound: f64,
    pub max_difference: f64,
    pub holds: bool,
    /// Largest disagreement between the two evaluations of each coefficient.
    pub cross_check: f64,
}

/// Compares `⟨κ_μ(g)(f⊗1), f⊗1⟩` with `⟨κ_ν(g)(f̃⊗1), f̃⊗1⟩` for
/// `f̃ = f · √(dμ/dν) · 1_Y` on depth-`k_ε` cylinders, where `Y` is the set of
/// depth-`k_ε` words at which every element of `elements` has a trivial
/// section.
pub fn weak_containment_experiment(
    elements: &[(String, Automorphism)],
    mu: &ProductMeasure,
    nu: &ProductMeasure,
    f: &CylinderFunction,
    opts: &WeakContainmentOptions,
) -> Result<WeakContainmentReport> {
    let shape = mu.shape().clone();
    for (name, g) in elements {
        let bounded = matches!(
            analyze_sections(g, opts.cap).map(|a| a.growth),
            Ok(ActivityGrowth::Finitary { .. } | ActivityGrowth::Bounded { .. })
        );
        if !bounded {
            return Err(Error::ConditionFailed {
                condition: "element with bounded activity".into(),
                witness: name.clone(),
            });
        }
    }
    let n = f.depth;
    // Nontrivial sections of each element, one level at a time from the root.
    let mut frontiers: Vec<Vec<(Prefix, Automorphism)>> = elements
        .iter()
        .map(|(_, g)| if g.is_nontrivial() == Some(false) { Vec::new() } else { vec![(Prefix::root(), g.clone())] })
        .collect();
    let advance = |fr: &mut Vec<(Prefix, Automorphism)>| {
        let mut next = Vec::new();
        for (y, s) in fr.iter() {
            for x in 0..s.arity() {
                let t = s.section_letter(x);
                if t.is_nontrivial() != Some(false) {
                    next.push((y.child(x), t));
                }
            }
        }
        *fr = next;
    };
    for _ in 0..n {
        frontiers.iter_mut().for_each(advance);
    }
    let mut k = n;
    let (bad, complement_mass, preimage) = loop {
        k += 1;
        if k > opts.k_cap {
            return Err(Error::KEpsNotFound(opts.k_cap));
        }
        frontiers.iter_mut().for_each(advance);
        let bad: BTreeSet<Prefix> = frontiers.iter().flatten().map(|(y, _)| y.clone()).collect();
        let complement: Q = bad.iter().map(|y| mu.cylinder_measure(y)).sum();
        let preimage: Vec<f64> = elements
            .iter()
            .map(|(_, g)| {
                let gi = g.inverse();
                q_to_f64(&bad.iter().map(|y| mu.cylinder_measure(&gi.apply_prefix(y))).sum::<Q>())
            })
            .collect();
        let cm = q_to_f64(&complement);
        if cm < opts.eps && preimage.iter().all(|&p| p < opts.eps) {
            break (bad, cm, preimage);
        }
    };

    let size = shape.level_count(k, opts.cap)?;
    let levels: Vec<Prefix> = (0..size).map(|i| shape.prefix_at(k, i)).collect();
    let mu_w: Vec<f64> = levels.iter().map(|y| q_to_f64(&mu.cylinder_measure(y))).collect();
    let nu_w: Vec<f64> = levels.iter().map(|y| q_to_f64(&nu.cylinder_measure(y))).collect();
    let in_y: Vec<bool> = levels.iter().map(|y| !bad.contains(y)).collect();
    let tilde: Vec<f64> = (0..size)
        .map(|i| {
            if !in_y[i] {
                return 0.0;
            }
            let phi = if opts.drop_phi { 1.0 } else { (mu_w[i] / nu_w[i]).sqrt() };
            f.at(&shape, &levels[i]) * phi
        })
        .collect();

    let c = f.sup_norm();
    let bound = 2.0 * c * c * opts.eps;
    let mut rows = Vec::new();
    let mut cross_check: f64 = 0.0;
    for ((name, g), pre) in elements.iter().zip(preimage) {
        let table = g.level_projection(k, opts.cap)?;
        let mut inv = vec![0usize; size];
        for y in 0..size {
            inv[table.image(y)] = y;
        }
        // Direct sum over x with g⁻¹x ∈ Y.
        let nu_direct: f64 = (0..size)
            .map(|x| {
                let y = inv[x];
                tilde[y] * tilde[x] * (nu_w[y] / nu_w[x]).sqrt() * nu_w[x]
            })
            .sum();
        // Sparse Koopman columns 1_[y] ↦ √(ν[y]/ν[gy]) 1_[gy] for y ∈ Y.
        let mut image = vec![0.0; size];
        for y in (0..size).filter(|&y| in_y[y]) {
            let x = table.image(y);
            image[x] += (nu_w[y] / nu_w[x]).sqrt() * tilde[y];
        }
        let nu_matrix: f64 = (0..size).map(|x| image[x] * tilde[x] * nu_w[x]).sum();
        cross_check = cross_check.max((nu_direct - nu_matrix).abs());

        let mu_c = koopman_coefficient(g, mu, f, f, opts.horizon, opts.cap)?;
        let mu_matrix = match koopman_matrix(g, mu, n, opts.cap) {
            Ok(m) => Some(m.coefficient(f, f)),
            Err(Error::NotDepthCompatible { .. }) | Err(Error::NotDecidable) => None,
            Err(e) => return Err(e),
        };
        if let (Some(m), true) = (mu_matrix, mu_c.is_exact()) {
            cross_check = cross_check.max((m - mu_c.lo).abs());
        }
        rows.push(WeakContainmentRow {
            element: name.clone(),
            mu_coefficient: mu_c,
            mu_coefficient_matrix: mu_matrix,
            nu_coefficient: nu_direct,
            nu_coefficient_matrix: nu_matrix,
            difference: mu_c.max_distance(nu_direct),
            preimage_defect: pre,
        });
    }
    let max_difference = rows.iter().map(|r| r.difference).fold(0.0, f64::max);
    Ok(WeakContainmentReport {
        k_eps: k,
        eps: opts.eps,
        c,
        complement_mass,
        rows,
        bound,
        max_difference,
        holds: max_difference < bound,
        cross_check,
    })
}
