use std::sync::Arc;

use crate::automorphism::{Activity, Automorphism, SectionRule};
use crate::cocycle::{ClassVerdict, FinitarityClass};
use crate::measures::{q_to_f64, ProductMeasure, Q};
use crate::perm::Perm;
use crate::tree::{Prefix, TreeShape};

fn factorial(k: usize) -> Option<usize> {
    (2..=k).try_fold(1usize, |acc, i| acc.checked_mul(i))
}

/// `k ≥ 2` with `k! = n`.
fn factorial_index(n: usize) -> Option<usize> {
    let mut k = 2;
    while let Some(f) = factorial(k) {
        if f == n {
            return Some(k);
        }
        if f > n {
            return None;
        }
        k += 1;
    }
    None
}

/// `α_{k!}(y)` is the flip exactly when `y` vanishes on `((k−1)!, k!]`;
/// every other `α_n` is trivial.
#[derive(Debug)]
struct FactorialRule;

impl SectionRule for FactorialRule {
    fn name(&self) -> &str {
        "factorial"
    }

    fn permutation(&self, prefix: &Prefix) -> Perm {
        let n = prefix.len();
        match factorial_index(n) {
            Some(k) if prefix.letters()[factorial(k - 1).unwrap()..].iter().all(|&x| x == 0) => {
                Perm::transposition(2, 0, 1)
            }
            _ => Perm::identity(2),
        }
    }

    fn activity(&self, _prefix: &Prefix) -> Activity {
        // Any prefix shorter than (k−1)! extends to an active word at k!.
        Activity::Active
    }

    fn may_act_at(&self, prefix: &Prefix, level: usize) -> bool {
        let Some(k) = factorial_index(level) else {
            return false;
        };
        let from = factorial(k - 1).unwrap();
        level >= prefix.len() && prefix.letters().iter().skip(from).all(|&x| x == 0)
    }
}

#[derive(Clone, Debug)]
pub struct FactorialElement {
    pub element: Automorphism,
}

/// The element whose `F_n` is `X_1^{(k−1)!} 0^{k!−(k−1)!}` at `n = k!` and
/// empty elsewhere.
pub fn factorial_element() -> FactorialElement {
    let shape = TreeShape::binary01();
    FactorialElement {
        element: Automorphism::rule(&shape, Arc::new(FactorialRule)),
    }
}

impl FactorialElement {
    /// Factorials `k!` with `2 ≤ k` and `k! ≤ n`.
    pub fn active_levels(n: usize) -> Vec<usize> {
        (2..).map_while(|k| factorial(k).filter(|&f| f <= n)).collect()
    }

    /// `μ(F_{k!})`, exactly: the mass of `0` on every level of the block.
    pub fn f_measure(mu: &ProductMeasure, k: usize) -> Q {
        let (from, to) = (factorial(k - 1).unwrap(), factorial(k).unwrap());
        (from + 1..=to).fold(Q::from_integer(1.into()), |acc, n| acc * mu.level(n).get(0))
    }

    /// Closed forms for the finitarity report under `mu`.
    pub fn claims(mu: &ProductMeasure) -> Vec<ClassVerdict> {
        use FinitarityClass::*;
        // Σ_k μ(F_{k!}); terms decay superexponentially, so summing until a
        // term drops below 1e-300 and doubling the last one bounds the tail.
        let mut bound = 0.0;
        let mut last = 0.0;
        for k in 2..=8 {
            let t = q_to_f64(&Self::f_measure(mu, k));
            bound += t;
            last = t;
            if t < 1e-300 {
                break;
            }
        }
        bound += last;
        vec![
            ClassVerdict::closed_form(Finitary, false, "α_{k!} is nontrivial for every k", None),
            ClassVerdict::closed_form(QuasiFinitary, false, "0^∞ is moved at every level k!", None),
            ClassVerdict::closed_form(
                MuFinitary,
                true,
                "Σ_k μ(X_1^{(k−1)!} 0^{k!−(k−1)!}) converges superexponentially",
                Some(bound),
            ),
            ClassVerdict::closed_form(
                EventuallyMuPreserving,
                true,
                "F_n⁺ ⊆ F_n and Σ μ(F_n) < ∞",
                Some(bound),
            ),
            ClassVerdict::closed_form(
                WSubexponentiallyBounded,
                true,
                "Σ|F_n|δ^n = Σ_k (2δ^k)^{(k−1)!} < ∞ for every δ ∈ (0,1)",
                None,
            ),
            ClassVerdict::closed_form(
                SubexponentiallyBounded,
                false,
                "F_n• = X_1^n, so Σ|F_n•|δ^n = Σ(2δ)^n diverges for δ > 1/2",
                None,
            ),
            ClassVerdict::closed_form(PurelyMuFinitary, false, "μ(F_n•) = μ(X_1^n) = 1 for every n", None),
        ]
    }
}
