//! Elements finitary for one measure and not for another.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use super::binomial::{ln_factorials, weight_range_mass, weight_range_mass_f64};
use super::staged::{StageSet, StagedFlipRule};
use crate::automorphism::Automorphism;
use crate::cocycle::{ClassVerdict, FinitarityClass};
use crate::error::{Error, Result};
use crate::measures::{kakutani_classify, q_to_f64, ser_q, KakutaniVerdict, ProductMeasure, Q};
use crate::tree::TreeShape;

pub const DEFAULT_SEPARATION_STAGES: usize = 3;
pub const DEFAULT_SEPARATION_DEPTH_CAP: usize = 256;
pub const DEFAULT_LR_STATE_CAP: usize = 1 << 16;

#[derive(Clone, Debug, Serialize)]
pub struct SeparationStage {
    pub k: usize,
    pub depth: usize,
    /// `D_k` is the set of words with likelihood ratio `dμ/dν ≥ threshold`.
    #[serde(serialize_with = "ser_q")]
    pub threshold: Q,
    #[serde(serialize_with = "ser_q")]
    pub mu_mass: Q,
    #[serde(serialize_with = "ser_q")]
    pub nu_mass: Q,
}

#[derive(Debug)]
struct LikelihoodSet {
    ratios: Vec<Vec<Q>>,
    max_ratio_suffix: Vec<Q>,
    threshold: Q,
}

impl LikelihoodSet {
    fn new(mu: &ProductMeasure, nu: &ProductMeasure, depth: usize, threshold: Q) -> Self {
        let mut ratios: Vec<Vec<Q>> = Vec::new();
        let mut max_ratio = Vec::with_capacity(depth);
        for n in 1..=depth {
            let (a, b) = (mu.level(n), nu.level(n));
            let r: Vec<Q> = (0..a.len() as u32).map(|x| a.get(x) / b.get(x)).collect();
            max_ratio.push(r.iter().max().unwrap().clone());
            ratios.push(r);
        }
        let mut max_ratio_suffix = vec![Q::one(); depth + 1];
        for i in (0..depth).rev() {
            max_ratio_suffix[i] = &max_ratio_suffix[i + 1] * &max_ratio[i];
        }
        LikelihoodSet {
            ratios,
            max_ratio_suffix,
            threshold,
        }
    }

    fn ratio(&self, y: &[u32]) -> Q {
        y.iter().enumerate().fold(Q::one(), |acc, (i, &x)| acc * &self.ratios[i][x as usize])
    }
}

impl StageSet for LikelihoodSet {
    fn contains(&self, y: &[u32]) -> bool {
        self.ratio(y) >= self.threshold
    }

    fn reachable(&self, prefix: &[u32], depth: usize) -> bool {
        debug_assert_eq!(depth + 1, self.max_ratio_suffix.len());
        self.ratio(prefix) * &self.max_ratio_suffix[prefix.len()] >= self.threshold
    }
}

#[derive(Clone, Debug)]
pub struct OrthogonalPairElement {
    pub element: Automorphism,
    pub stages: Vec<SeparationStage>,
}

/// Stage `k` acts at the least depth `n_k > n_{k−1}` where a likelihood-ratio
/// cut `U_k` has `μ(U_k) > 1 − 2⁻ᵏ` and `ν(U_k) < 2⁻ᵏ`. The element is the
/// `stages`-stage truncation.
pub fn orthogonal_pair_element(
    mu: &ProductMeasure,
    nu: &ProductMeasure,
    stages: usize,
    depth_cap: usize,
    state_cap: usize,
) -> Result<OrthogonalPairElement> {
    let report = kakutani_classify(mu, nu, 1, f64::NEG_INFINITY, true)?;
    if report.verdict != KakutaniVerdict::Orthogonal {
        return Err(Error::SeparationNotFound("the measures are not orthogonal by a closed-form argument".into()));
    }
    // likelihood ratio -> (μ mass, ν mass) over depth-m words
    let mut dist: BTreeMap<Q, (Q, Q)> = BTreeMap::new();
    dist.insert(Q::one(), (Q::one(), Q::one()));
    let mut found = Vec::new();
    for m in 1..=depth_cap {
        if found.len() == stages {
            break;
        }
        let (a, b) = (mu.level(m), nu.level(m));
        let mut next: BTreeMap<Q, (Q, Q)> = BTreeMap::new();
        for (lr, (pm, pn)) in &dist {
            for x in 0..a.len() as u32 {
                if b.get(x).is_zero() || a.get(x).is_zero() {
                    return Err(Error::SeparationNotFound(format!("level {m} masses are not fully supported")));
                }
                let e = next.entry(lr * (a.get(x) / b.get(x))).or_insert_with(|| (Q::zero(), Q::zero()));
                e.0 += pm * a.get(x);
                e.1 += pn * b.get(x);
            }
        }
        if next.len() > state_cap {
            return Err(Error::SeparationNotFound(format!(
                "{} likelihood-ratio classes at depth {m} exceed the cap of {state_cap}",
                next.len()
            )));
        }
        dist = next;
        let k = found.len() + 1;
        let eps = Q::new(1.into(), num_bigint::BigInt::one() << k);
        let target = Q::one() - &eps;
        let (mut am, mut an) = (Q::zero(), Q::zero());
        for (lr, (pm, pn)) in dist.iter().rev() {
            am += pm;
            an += pn;
            if am > target {
                if an < eps {
                    found.push(SeparationStage {
                        k,
                        depth: m,
                        threshold: lr.clone(),
                        mu_mass: am.clone(),
                        nu_mass: an.clone(),
                    });
                }
                break;
            }
        }
    }
    if found.len() < stages {
        return Err(Error::SeparationNotFound(format!(
            "stage {} has no likelihood-ratio cut up to depth {depth_cap}",
            found.len() + 1
        )));
    }
    let rule = StagedFlipRule {
        name: "orthogonal-pair".into(),
        shape: mu.shape().clone(),
        stages: found
            .iter()
            .map(|s| {
                let set: Box<dyn StageSet> = Box::new(LikelihoodSet::new(mu, nu, s.depth, s.threshold.clone()));
                (s.depth, set)
            })
            .collect(),
    };
    Ok(OrthogonalPairElement {
        element: Automorphism::rule(mu.shape(), Arc::new(rule)),
        stages: found,
    })
}

impl OrthogonalPairElement {
    pub fn depths(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.depth).collect()
    }

    /// Verdicts under `ν`, the measure the cuts avoid.
    pub fn claims_nu(&self) -> Vec<ClassVerdict> {
        vec![
            ClassVerdict::closed_form(FinitarityClass::Finitary, false, "every D_k is nonempty", None),
            ClassVerdict::closed_form(FinitarityClass::MuFinitary, true, "Σ_k ν(F_{n_k}) = Σ_k ν(U_k) < Σ_k 2⁻ᵏ = 1", Some(1.0)),
        ]
    }

    /// Verdicts under `μ`, the measure the cuts capture.
    pub fn claims_mu(&self) -> Vec<ClassVerdict> {
        vec![
            ClassVerdict::closed_form(FinitarityClass::Finitary, false, "every D_k is nonempty", None),
            ClassVerdict::closed_form(
                FinitarityClass::MuFinitary,
                false,
                "Σ_k μ(X∖U_k) < 1, so by Borel–Cantelli μ-almost every point lies in infinitely many U_k",
                None,
            ),
        ]
    }
}

pub const DEFAULT_WLLN_STAGES: usize = 3;
pub const DEFAULT_WLLN_DEPTH_CAP: usize = 1 << 13;

#[derive(Clone, Debug, Serialize)]
pub struct WllnStage {
    pub k: usize,
    pub depth: usize,
    #[serde(serialize_with = "ser_q")]
    pub eps: Q,
    /// `B_{θ,n_k,ε_k}` as the weight range `lo..=hi`.
    pub weights: (usize, usize),
    #[serde(serialize_with = "ser_q")]
    pub theta_mass: Q,
    /// The rational net of `Λ_k`.
    #[serde(serialize_with = "ser_qs")]
    pub net: Vec<Q>,
    #[serde(serialize_with = "ser_q")]
    pub net_min_mass: Q,
    #[serde(serialize_with = "ser_q")]
    pub net_argmin: Q,
}

fn ser_qs<S: serde::Serializer>(xs: &[Q], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(crate::measures::format_rational))
}

/// Weights `j ≤ n` with `|j/n − λ| < ε`.
fn band(n: usize, lambda: &Q, eps: &Q) -> (usize, usize) {
    let nq = Q::from_integer(n.into());
    let lo = (&nq * (lambda - eps)).floor() + Q::one();
    let hi = (&nq * (lambda + eps)).ceil() - Q::one();
    let clamp = |x: Q| x.to_integer().max(0.into()).min(n.into()).to_usize().unwrap();
    let lo = if lo.is_negative() { 0 } else { clamp(lo) };
    let hi = if hi.is_negative() { return (1, 0) } else { clamp(hi) };
    (lo, hi)
}

/// Words of length `n_k` whose weight leaves `weights`.
#[derive(Debug)]
struct OutsideBand {
    weights: (usize, usize),
}

impl StageSet for OutsideBand {
    fn contains(&self, y: &[u32]) -> bool {
        let w = y.iter().filter(|&&x| x == 1).count();
        w < self.weights.0 || w > self.weights.1
    }

    fn reachable(&self, prefix: &[u32], depth: usize) -> bool {
        let w = prefix.iter().filter(|&&x| x == 1).count();
        let top = w + depth - prefix.len();
        w < self.weights.0 || top > self.weights.1
    }
}

#[derive(Clone, Debug)]
pub struct SeparatingElement {
    pub theta: Q,
    pub element: Automorphism,
    pub stages: Vec<WllnStage>,
}

/// `ε_k = m/(6(k+1))` and `Λ_k = [m/(k+2), θ − m/(k+1)] ∪ [θ + m/(k+1), 1 − m/(k+2)]`
/// with `m = min(θ, 1−θ)`, so every `λ ∈ Λ_k` has `|θ − λ| ≥ 6ε_k`.
pub fn wlln_schedule(theta: &Q, k: usize) -> (Q, Vec<Q>) {
    let m = theta.clone().min(Q::one() - theta);
    let eps = &m / Q::from_integer((6 * (k + 1)).into());
    let gap = &m / Q::from_integer((k + 1).into());
    let edge = &m / Q::from_integer((k + 2).into());
    let mut net = Vec::new();
    for (a, b) in [(edge.clone(), theta - &gap), (theta + &gap, Q::one() - &edge)] {
        let mut x = a;
        while x < b {
            net.push(x.clone());
            x += &eps;
        }
        net.push(b);
    }
    (eps, net)
}

/// Stage `k` acts at the least `n_k > n_{k−1}` for which both `θ` and every
/// net point `λ` of `Λ_k` keep mass `> 1 − k⁻²` on their own band.
pub fn separating_element(theta: &Q, stages: usize, depth_cap: usize) -> Result<SeparatingElement> {
    if !theta.is_positive() || theta >= &Q::one() {
        return Err(Error::InvalidDistribution(format!("θ = {theta} must lie in (0,1)")));
    }
    let mut found: Vec<WllnStage> = Vec::new();
    let mut n = 0;
    let lnf = ln_factorials(depth_cap);
    for k in 1..=stages {
        let (eps, net) = wlln_schedule(theta, k);
        let target = Q::one() - Q::new(1.into(), (k * k).into());
        let target_f = q_to_f64(&target);
        let probe = |n: usize, l: &Q| {
            let (lo, hi) = band(n, l, &eps);
            weight_range_mass_f64(q_to_f64(l), n, lo, hi, &lnf)
        };
        let stage = loop {
            n += 1;
            if n > depth_cap {
                return Err(Error::ScheduleOverflow(format!("stage {k} needs depth beyond {depth_cap}")));
            }
            let points = std::iter::once(theta).chain(&net);
            if points.clone().any(|l| probe(n, l) <= target_f - 1e-9) {
                continue;
            }
            let weights = band(n, theta, &eps);
            let theta_mass = weight_range_mass(theta, n, weights.0, weights.1);
            if theta_mass <= target {
                continue;
            }
            let mut worst: Option<(Q, Q)> = None;
            for l in &net {
                let (lo, hi) = band(n, l, &eps);
                let mass = weight_range_mass(l, n, lo, hi);
                if worst.as_ref().is_none_or(|(m, _)| &mass < m) {
                    worst = Some((mass, l.clone()));
                }
            }
            let (net_min_mass, net_argmin) = worst.unwrap();
            if net_min_mass > target {
                break WllnStage {
                    k,
                    depth: n,
                    eps: eps.clone(),
                    weights,
                    theta_mass,
                    net: net.clone(),
                    net_min_mass,
                    net_argmin,
                };
            }
        };
        found.push(stage);
    }
    let shape = TreeShape::binary01();
    let rule = StagedFlipRule {
        name: "wlln-separating".into(),
        shape: shape.clone(),
        stages: found
            .iter()
            .map(|s| {
                let set: Box<dyn StageSet> = Box::new(OutsideBand { weights: s.weights });
                (s.depth, set)
            })
            .collect(),
    };
    Ok(SeparatingElement {
        theta: theta.clone(),
        element: Automorphism::rule(&shape, Arc::new(rule)),
        stages: found,
    })
}

impl SeparatingElement {
    pub fn depths(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.depth).collect()
    }

    /// `μ_λ(F_{n_k}) = 1 − κ_λ^{n_k}(B_{θ,n_k,ε_k})`.
    pub fn f_measure(&self, lambda: &Q, k: usize) -> Q {
        let s = &self.stages[k - 1];
        Q::one() - weight_range_mass(lambda, s.depth, s.weights.0, s.weights.1)
    }

    /// `B_{θ,n_k,ε_k} ∩ B_{λ,n_k,ε_k} = ∅` for every net point of stage `k`.
    pub fn bands_disjoint(&self, k: usize) -> bool {
        let s = &self.stages[k - 1];
        s.net.iter().all(|l| {
            let (lo, hi) = band(s.depth, l, &s.eps);
            lo > hi || hi < s.weights.0 || lo > s.weights.1
        })
    }

    pub fn claims(&self, lambda: &Q) -> Vec<ClassVerdict> {
        use FinitarityClass::*;
        let mut v = vec![ClassVerdict::closed_form(Finitary, false, "every stage acts on a nonempty set", None)];
        if lambda == &self.theta {
            v.push(ClassVerdict::closed_form(
                MuFinitary,
                true,
                "μ_θ(F_{n_k}) < k⁻², and Σ k⁻² = π²/6",
                Some(std::f64::consts::PI.powi(2) / 6.0),
            ));
        } else {
            v.push(ClassVerdict::closed_form(
                MuFinitary,
                false,
                "μ_λ(F_{n_k}) > 1 − k⁻² once λ lies in Λ_k (checked on the rational net); Borel–Cantelli",
                None,
            ));
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::q;

    #[test]
    fn bands() {
        assert_eq!(band(10, &q(1, 2), &q(1, 10)), (5, 5));
        assert_eq!(band(10, &q(1, 2), &q(11, 100)), (4, 6));
        assert_eq!(band(10, &q(1, 20), &q(1, 10)), (0, 1));
    }

    #[test]
    fn haar_against_biased_coin() {
        let s = TreeShape::binary01();
        let mu = ProductMeasure::uniform(&s);
        let nu = ProductMeasure::bernoulli(&s, crate::measures::LevelDistribution::binary(q(1, 4)).unwrap()).unwrap();
        let e = orthogonal_pair_element(&mu, &nu, 3, 64, DEFAULT_LR_STATE_CAP).unwrap();
        assert_eq!(e.stages[0].depth, 2);
        for st in &e.stages {
            let eps = Q::new(1.into(), (1u64 << st.k).into());
            assert!(st.mu_mass > Q::one() - &eps && st.nu_mass < eps);
        }
        assert!(e.depths().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn wlln_stages() {
        let t = std::time::Instant::now();
        let e = separating_element(&q(1, 2), 3, DEFAULT_WLLN_DEPTH_CAP).unwrap();
        assert!(t.elapsed().as_secs() < 30);
        for k in 1..=3 {
            assert!(e.bands_disjoint(k));
        }
    }

    #[test]
    fn schedule_margins() {
        for k in 1..5 {
            let (eps, net) = wlln_schedule(&q(1, 3), k);
            for l in &net {
                assert!((l - q(1, 3)).abs() > &eps * Q::from_integer(5.into()));
                assert!(l.is_positive() && l < &Q::one());
            }
        }
    }
}
