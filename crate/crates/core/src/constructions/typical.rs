//! Generators `g_n` that cycle `x_n` and then act on the near-typical words
//! `B_m`, `m ≥ n`, of a non-uniform Bernoulli measure.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use super::binomial::{binomial, binomial_row};
use crate::automorphism::{Activity, Automorphism, SectionRule};
use crate::error::{Error, Result};
use crate::group::GeneratedGroup;
use crate::measures::{bernoulli_dist, entropy, q_to_f64, ser_q, ProductMeasure, Q};
use crate::perm::Perm;
use crate::tree::{Prefix, TreeShape};

pub const DEFAULT_BAND_DEPTH_CAP: usize = 1 << 12;

/// `B_m` as whole weight classes plus, for each entry `(j, t)` of `partial`,
/// the lexicographically first `t` words of weight `j`.
#[derive(Clone, Debug, Serialize)]
pub struct TypicalBand {
    pub m: usize,
    pub full: Vec<usize>,
    pub partial: Vec<(usize, String)>,
    #[serde(skip)]
    partial_counts: Vec<(usize, BigInt)>,
    #[serde(serialize_with = "ser_q")]
    pub mass: Q,
    pub count: String,
    /// `max_{y ∈ B_m} |m⁻¹ log μ(y) + h|`.
    pub max_deviation: f64,
}

/// Lexicographic rank of `y` among words of its length and weight.
fn rank(y: &[u32]) -> BigInt {
    let n = y.len();
    let mut ones = y.iter().filter(|&&x| x == 1).count();
    let mut r = BigInt::zero();
    for (i, &x) in y.iter().enumerate() {
        if x == 1 {
            r += binomial(n - i - 1, ones);
            ones -= 1;
        }
    }
    r
}

/// `⌈e^x⌉` for `x ≥ 0`, through a binary exponent once `e^x` leaves `u64` range.
fn ceil_exp(x: f64) -> BigInt {
    if x < 40.0 {
        return BigInt::from(x.exp().ceil() as u64);
    }
    let bits = x / std::f64::consts::LN_2;
    let k = bits.floor() as usize;
    let mantissa = (2f64.powf(bits - k as f64) * (1u64 << 52) as f64).ceil() as u64;
    BigInt::from(mantissa) << (k - 52)
}

impl TypicalBand {
    /// Draws from the two weight classes whose word probabilities bracket
    /// `e^{−mh}`, with about `e^{mh}/m²` words in total, so `|B_m|` grows
    /// like `e^{mh}` level by level. Falls back to filling classes in order
    /// of deviation when the bracketing classes are too small.
    fn build(p1: &Q, m: usize) -> TypicalBand {
        let (a, d) = (p1.numer().clone(), p1.denom().clone());
        let b = &d - &a;
        let total = num_traits::pow(d, m);
        let word = |j: usize| num_traits::pow(a.clone(), j) * num_traits::pow(b.clone(), m - j);
        let pf = q_to_f64(p1);
        let (l1, l0) = (pf.ln(), (1.0 - pf).ln());
        let h = -(pf * l1 + (1.0 - pf) * l0);
        let log_p = |j: usize| j as f64 * l1 + (m - j) as f64 * l0;
        let dev = |j: usize| (log_p(j) / m as f64 + h).abs();
        let row = binomial_row(m);
        // Mass is tracked as an integer over d^m; the target is d^m/m².
        let m2 = BigInt::from(m * m);

        let target = -(m as f64) * h;
        let hi = (0..=m).filter(|&j| log_p(j) >= target).min_by(|&i, &j| log_p(i).total_cmp(&log_p(j)));
        let lo = (0..=m).filter(|&j| log_p(j) < target).max_by(|&i, &j| log_p(i).total_cmp(&log_p(j)));
        if let (Some(hi), Some(lo)) = (hi, lo) {
            let n = ceil_exp(m as f64 * h - 2.0 * (m as f64).ln()).max(BigInt::one());
            let (wh, wl) = (word(hi), word(lo));
            // least t with (t·wh + (n − t)·wl)·m² ≥ d^m
            let short = &total - &n * &wl * &m2;
            let step = (&wh - &wl) * &m2;
            let t = if short <= BigInt::zero() {
                BigInt::zero()
            } else {
                ((&short + &step - BigInt::one()) / &step).min(n.clone())
            };
            let rest = &n - &t;
            if t <= row[hi] && rest <= row[lo] && (&t * &wh + &rest * &wl) * &m2 >= total {
                let acc = &t * &wh + &rest * &wl;
                let mut parts: Vec<(usize, BigInt)> =
                    [(hi, t), (lo, rest)].into_iter().filter(|(_, c)| !c.is_zero()).collect();
                parts.sort();
                let max_deviation = parts.iter().map(|&(j, _)| dev(j)).fold(0.0, f64::max);
                return TypicalBand::assemble(m, Vec::new(), parts, &row, Q::new(acc, total), max_deviation);
            }
        }

        let mut order: Vec<usize> = (0..=m).collect();
        order.sort_by(|&i, &j| dev(i).total_cmp(&dev(j)).then(i.cmp(&j)));
        let mut acc = BigInt::zero();
        let mut full = Vec::new();
        let mut parts = Vec::new();
        let mut max_deviation: f64 = 0.0;
        for j in order {
            if &acc * &m2 >= total {
                break;
            }
            let w = word(j);
            let class = &row[j] * &w;
            max_deviation = max_deviation.max(dev(j));
            if (&acc + &class) * &m2 <= total {
                acc += class;
                full.push(j);
            } else {
                let short = &total - &acc * &m2;
                let step = &w * &m2;
                let t = (&short + &step - BigInt::one()) / &step;
                acc += &t * &w;
                parts.push((j, t));
            }
        }
        full.sort_unstable();
        TypicalBand::assemble(m, full, parts, &row, Q::new(acc, total), max_deviation)
    }

    fn assemble(m: usize, full: Vec<usize>, parts: Vec<(usize, BigInt)>, row: &[BigInt], mass: Q, max_deviation: f64) -> Self {
        let count: BigInt = full.iter().map(|&j| row[j].clone()).sum::<BigInt>() + parts.iter().map(|(_, t)| t.clone()).sum::<BigInt>();
        TypicalBand {
            m,
            full,
            partial: parts.iter().map(|(j, t)| (*j, t.to_string())).collect(),
            partial_counts: parts,
            mass,
            count: count.to_string(),
            max_deviation,
        }
    }

    pub fn contains(&self, y: &[u32]) -> bool {
        debug_assert_eq!(y.len(), self.m);
        let w = y.iter().filter(|&&x| x == 1).count();
        if self.full.binary_search(&w).is_ok() {
            return true;
        }
        self.partial_counts.iter().any(|(j, t)| *j == w && rank(y) < *t)
    }

    /// Some length-`m` extension of `prefix` lies in `B_m`.
    pub fn reachable(&self, prefix: &[u32]) -> bool {
        let w = prefix.iter().filter(|&&x| x == 1).count();
        let r = self.m - prefix.len();
        if self.full.iter().any(|&j| j >= w && j <= w + r) {
            return true;
        }
        self.partial_counts.iter().any(|(j, t)| {
            if *j < w || *j > w + r {
                return false;
            }
            // the lexicographically least completion
            let mut z = prefix.to_vec();
            z.extend(std::iter::repeat_n(0, r - (j - w)));
            z.extend(std::iter::repeat_n(1, j - w));
            rank(&z) < *t
        })
    }

    pub fn count(&self) -> BigInt {
        self.count.parse().unwrap()
    }
}

#[derive(Debug)]
struct BandCache {
    p1: Q,
    cap: usize,
    bands: Mutex<HashMap<usize, Arc<TypicalBand>>>,
}

impl BandCache {
    fn get(&self, m: usize) -> Option<Arc<TypicalBand>> {
        if m == 0 || m > self.cap {
            return None;
        }
        let mut bands = self.bands.lock().unwrap();
        Some(bands.entry(m).or_insert_with(|| Arc::new(TypicalBand::build(&self.p1, m))).clone())
    }
}

/// `α_{n−1} ≡ γ`, `α_m = γ` on `B_m` for `n ≤ m ≤ cap`, trivial elsewhere.
#[derive(Debug)]
struct TypicalRule {
    name: String,
    n: usize,
    cache: Arc<BandCache>,
}

impl SectionRule for TypicalRule {
    fn name(&self) -> &str {
        &self.name
    }

    fn permutation(&self, prefix: &Prefix) -> Perm {
        let m = prefix.len();
        let flip = m + 1 == self.n
            || (m >= self.n && self.cache.get(m).is_some_and(|b| b.contains(prefix.letters())));
        if flip {
            Perm::transposition(2, 0, 1)
        } else {
            Perm::identity(2)
        }
    }

    fn activity(&self, prefix: &Prefix) -> Activity {
        if prefix.len() > self.cache.cap {
            Activity::Quiescent
        } else {
            Activity::Active
        }
    }

    fn may_act_at(&self, prefix: &Prefix, level: usize) -> bool {
        if level < prefix.len() {
            return false;
        }
        if level + 1 == self.n {
            return true;
        }
        level >= self.n && self.cache.get(level).is_some_and(|b| b.reachable(prefix.letters()))
    }
}

#[derive(Clone, Debug)]
pub struct SmElements {
    pub p1: Q,
    pub entropy: f64,
    pub group: GeneratedGroup,
    pub window: (usize, usize),
    cache: Arc<BandCache>,
}

/// Generators `g_n` for `n` in `window`. Sections past `band_cap` are trivial.
pub fn sm_elements(mu: &ProductMeasure, window: (usize, usize), band_cap: usize) -> Result<SmElements> {
    let dist = bernoulli_dist(mu)?;
    if dist.len() != 2 || mu.shape().constant_arity() != Some(2) {
        return Err(Error::ShapeMismatch("binary letters required".into()));
    }
    if dist.is_uniform() {
        return Err(Error::InvalidDistribution("the Bernoulli measure must be non-uniform".into()));
    }
    if window.0 == 0 || window.0 > window.1 || window.1 > band_cap {
        return Err(Error::cap(format!("window {}..={}", window.0, window.1), band_cap));
    }
    let p1 = dist.get(1).clone();
    let cache = Arc::new(BandCache {
        p1: p1.clone(),
        cap: band_cap,
        bands: Mutex::new(HashMap::new()),
    });
    let shape: TreeShape = mu.shape().clone();
    let gens = (window.0..=window.1)
        .map(|n| {
            let rule = TypicalRule {
                name: format!("typical-{n}"),
                n,
                cache: cache.clone(),
            };
            (format!("g{n}"), Automorphism::rule(&shape, Arc::new(rule)))
        })
        .collect();
    Ok(SmElements {
        p1,
        entropy: entropy(dist),
        group: GeneratedGroup::new(&shape, gens)?,
        window,
        cache,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BifurcationRow {
    pub m: usize,
    pub f_count: String,
    pub term_above: f64,
    pub term_below: f64,
    pub partial_above: f64,
    pub partial_below: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BifurcationProbe {
    pub n: usize,
    pub entropy: f64,
    pub delta_above: f64,
    pub delta_below: f64,
    pub rows: Vec<BifurcationRow>,
    pub above_sums_increase: bool,
    pub below_terms_decay: bool,
}

impl SmElements {
    pub fn generator(&self, n: usize) -> Option<&Automorphism> {
        self.group.generator(&format!("g{n}"))
    }

    pub fn band(&self, m: usize) -> Result<Arc<TypicalBand>> {
        self.cache.get(m).ok_or_else(|| Error::cap(format!("band at depth {m}"), self.cache.cap))
    }

    /// `|F_m(g_n)|`: all of `X_1^{n−1}` at `m = n−1`, `|B_m|` for `m ≥ n`.
    pub fn f_count(&self, n: usize, m: usize) -> Result<BigInt> {
        if m + 1 == n {
            Ok(BigInt::one() << m)
        } else if m >= n {
            Ok(self.band(m)?.count())
        } else {
            Ok(BigInt::zero())
        }
    }

    /// `Σ_m |F_m(g_n)| δ^m` over `ms` at `δ = e^{−h} ± offset`.
    pub fn bifurcation_probe(&self, n: usize, ms: (usize, usize), offset: f64) -> Result<BifurcationProbe> {
        let base = (-self.entropy).exp();
        let (up, down) = (base + offset, base - offset);
        let (mut sa, mut sb) = (0.0, 0.0);
        let mut rows = Vec::new();
        for m in ms.0..=ms.1 {
            let c = self.f_count(n, m)?;
            let cf = c.to_f64().unwrap_or(f64::INFINITY);
            let (ta, tb) = (cf * up.powi(m as i32), cf * down.powi(m as i32));
            sa += ta;
            sb += tb;
            rows.push(BifurcationRow {
                m,
                f_count: c.to_string(),
                term_above: ta,
                term_below: tb,
                partial_above: sa,
                partial_below: sb,
            });
        }
        let above_sums_increase = rows.windows(2).all(|w| w[1].partial_above > w[0].partial_above);
        let below_terms_decay = rows.windows(2).all(|w| w[1].term_below < w[0].term_below);
        Ok(BifurcationProbe {
            n,
            entropy: self.entropy,
            delta_above: up,
            delta_below: down,
            rows,
            above_sums_increase,
            below_terms_decay,
        })
    }

    /// `(m, μ(B_m), m⁻², μ(B_m)·m²)` for `m` in `ms`.
    pub fn band_masses(&self, ms: (usize, usize)) -> Result<Vec<(usize, Q, Q, Q)>> {
        (ms.0..=ms.1)
            .map(|m| {
                let b = self.band(m)?;
                let floor = Q::new(BigInt::one(), BigInt::from(m * m));
                let scaled = &b.mass * Q::from_integer(BigInt::from(m * m));
                Ok((m, b.mass.clone(), floor, scaled))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{q, LevelDistribution};

    fn brute_rank(y: &[u32]) -> usize {
        let n = y.len();
        let w = y.iter().filter(|&&x| x == 1).count();
        (0..1usize << n)
            .map(|i| (0..n).map(|k| ((i >> (n - 1 - k)) & 1) as u32).collect::<Vec<_>>())
            .filter(|z| z.iter().filter(|&&x| x == 1).count() == w)
            .position(|z| z == y)
            .unwrap()
    }

    #[test]
    fn ranks_match_enumeration() {
        for y in [vec![0, 1, 1, 0, 1], vec![1, 0, 0, 0, 0], vec![0, 0, 0, 1, 1], vec![1, 1, 1, 0, 0]] {
            assert_eq!(rank(&y), BigInt::from(brute_rank(&y)));
        }
    }

    #[test]
    fn bands_meet_the_floor_and_enumerate_consistently() {
        let p = q(1, 3);
        for m in 1..=12 {
            let b = TypicalBand::build(&p, m);
            assert!(b.mass >= Q::new(1.into(), (m * m).into()));
            let s = TreeShape::binary01();
            let members: Vec<Prefix> = s
                .enumerate_level(m, 1 << 12)
                .unwrap()
                .into_iter()
                .filter(|y| b.contains(y.letters()))
                .collect();
            assert_eq!(BigInt::from(members.len()), b.count());
            let mu = ProductMeasure::bernoulli(&s, LevelDistribution::binary(q(2, 3)).unwrap()).unwrap();
            assert_eq!(mu.set_measure(&members), b.mass);
            for len in 0..=m {
                for y in s.enumerate_level(len, 1 << 12).unwrap() {
                    let reach = members.iter().any(|z| y.is_prefix_of(z));
                    assert_eq!(b.reachable(y.letters()), reach, "m={m} prefix={y:?}");
                }
            }
        }
    }

    #[test]
    fn band_counts_grow_smoothly() {
        let p = q(1, 3);
        let counts: Vec<f64> = (8..=60).map(|m| TypicalBand::build(&p, m).count().to_f64().unwrap()).collect();
        assert!(counts.windows(2).all(|w| w[1] / w[0] < 2.0));
        let deep = TypicalBand::build(&p, 400);
        assert!(deep.mass >= Q::new(1.into(), 160_000.into()));
        assert!(deep.max_deviation < 0.01);
        assert!(ceil_exp(100.0) > BigInt::from(u64::MAX));
    }
}
