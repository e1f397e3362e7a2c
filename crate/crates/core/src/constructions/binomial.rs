//! Exact binomial masses for weight-defined sets of binary words.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::measures::Q;

pub fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    (0..k).fold(BigInt::one(), |acc, i| acc * (n - i) / (i + 1))
}

/// Row `C(n, 0..=n)`.
pub fn binomial_row(n: usize) -> Vec<BigInt> {
    let mut row = Vec::with_capacity(n + 1);
    let mut c = BigInt::one();
    row.push(c.clone());
    for i in 0..n {
        c = c * (n - i) / (i + 1);
        row.push(c.clone());
    }
    row
}

/// `P(S_n = j)` for `j = 0..=n` with `S_n` a sum of `n` Bernoulli(`p1`) bits.
pub fn weight_pmf(p1: &Q, n: usize) -> Vec<Q> {
    let p0 = Q::one() - p1;
    let row = binomial_row(n);
    // p1^j and p0^(n−j) as running powers.
    let mut pow1 = vec![Q::one(); n + 1];
    let mut pow0 = vec![Q::one(); n + 1];
    for j in 1..=n {
        pow1[j] = &pow1[j - 1] * p1;
        pow0[j] = &pow0[j - 1] * &p0;
    }
    (0..=n)
        .map(|j| Q::from_integer(row[j].clone()) * &pow1[j] * &pow0[n - j])
        .collect()
}

/// `P(S_n ∈ J)` for the weights `j` accepted by `pred`.
pub fn weight_mass(p1: &Q, n: usize, pred: impl Fn(usize) -> bool) -> Q {
    let p0 = Q::one() - p1;
    let row = binomial_row(n);
    let mut total = Q::zero();
    for (j, c) in row.iter().enumerate() {
        if pred(j) {
            total += Q::from_integer(c.clone()) * num_traits::pow(p1.clone(), j) * num_traits::pow(p0.clone(), n - j);
        }
    }
    total
}

/// `P(lo ≤ S_n ≤ hi)`. With `p1 = a/d` the terms `C(n,j)a^j(d−a)^{n−j}` are
/// integers, so the sum runs in integer arithmetic over the common `d^n`.
pub fn weight_range_mass(p1: &Q, n: usize, lo: usize, hi: usize) -> Q {
    let hi = hi.min(n);
    if lo > hi {
        return Q::zero();
    }
    let (a, d) = (p1.numer().clone(), p1.denom().clone());
    let b = &d - &a;
    if a.is_zero() || b.is_zero() {
        let j = if a.is_zero() { 0 } else { n };
        return if (lo..=hi).contains(&j) { Q::one() } else { Q::zero() };
    }
    let mut term = binomial(n, lo) * num_traits::pow(a.clone(), lo) * num_traits::pow(b.clone(), n - lo);
    let mut total = term.clone();
    for j in lo + 1..=hi {
        term = term * (n - j + 1) * &a / (j * &b);
        total += &term;
    }
    Q::new(total, num_traits::pow(d, n))
}

/// Log-factorial table `ln k!` for `k ≤ n`.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(0.0);
    for k in 1..=n {
        t.push(t[k - 1] + (k as f64).ln());
    }
    t
}

/// `P(lo ≤ S_n ≤ hi)` in floating point; `lnf` must cover `n`.
pub fn weight_range_mass_f64(p1: f64, n: usize, lo: usize, hi: usize, lnf: &[f64]) -> f64 {
    let (l1, l0) = (p1.ln(), (1.0 - p1).ln());
    (lo..=hi.min(n))
        .map(|j| (lnf[n] - lnf[j] - lnf[n - j] + j as f64 * l1 + (n - j) as f64 * l0).exp())
        .sum()
}

/// Same as [`weight_mass`] in floating point via log-space recurrences.
pub fn weight_mass_f64(p1: f64, n: usize, pred: impl Fn(usize) -> bool) -> f64 {
    let (l1, l0) = (p1.ln(), (1.0 - p1).ln());
    let mut ln_c = 0.0;
    let mut total = 0.0;
    for j in 0..=n {
        if j > 0 {
            ln_c += ((n - j + 1) as f64).ln() - (j as f64).ln();
        }
        if pred(j) {
            total += (ln_c + j as f64 * l1 + (n - j) as f64 * l0).exp();
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{q, q_to_f64};

    #[test]
    fn coefficients() {
        assert_eq!(binomial(10, 3), BigInt::from(120));
        assert_eq!(binomial(3, 5), BigInt::zero());
        assert_eq!(binomial_row(4), [1, 4, 6, 4, 1].map(BigInt::from).to_vec());
    }

    #[test]
    fn masses_sum_to_one() {
        let p = q(1, 3);
        let pmf = weight_pmf(&p, 12);
        assert_eq!(pmf.iter().sum::<Q>(), Q::one());
        assert_eq!(weight_mass(&p, 12, |_| true), Q::one());
        let exact = weight_mass(&p, 40, |j| j < 20);
        assert_eq!(weight_range_mass(&p, 40, 0, 19), exact);
        assert_eq!(weight_range_mass(&p, 40, 30, 20), Q::zero());
        let lnf = ln_factorials(40);
        assert!((weight_range_mass_f64(1.0 / 3.0, 40, 0, 19, &lnf) - q_to_f64(&exact)).abs() < 1e-12);
        assert!((q_to_f64(&exact) - weight_mass_f64(1.0 / 3.0, 40, |j| j < 20)).abs() < 1e-12);
    }
}
