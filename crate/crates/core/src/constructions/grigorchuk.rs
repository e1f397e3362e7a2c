use std::sync::Arc;

use crate::automorphism::{Automorphism, Machine};
use crate::error::{Error, Result};
use crate::group::{GeneratedGroup, Word, DEFAULT_DEDUP_DEPTH};
use crate::perm::Perm;
use crate::tree::{Prefix, TreeShape};

/// Letters `{0,1}`. After a prefix `1^n 0`, `b`, `c`, `d` flip the next
/// letter unless `n ≡ 0`, `1`, `2 (mod 3)` respectively; all three fix `1^∞`.
pub fn grigorchuk_machine() -> Arc<Machine> {
    let id = Perm::identity(2);
    let swap = Perm::transposition(2, 0, 1);
    Machine::new(vec![
        (swap, vec![4, 4]),      // a
        (id.clone(), vec![4, 3]), // b = (1, d)
        (id.clone(), vec![0, 1]), // c = (a, b)
        (id.clone(), vec![0, 2]), // d = (a, c)
        (id, vec![4, 4]),
    ])
    .expect("well-formed machine")
}

pub fn grigorchuk() -> GeneratedGroup {
    let shape = TreeShape::binary01();
    let m = grigorchuk_machine();
    let gens = ["a", "b", "c", "d"]
        .iter()
        .enumerate()
        .map(|(i, n)| (n.to_string(), Automorphism::machine_state(&shape, &m, i).unwrap()))
        .collect();
    GeneratedGroup::new(&shape, gens).unwrap()
}

/// `k = (ad)²` written as a product of conjugates `u k^{±1} u⁻¹`.
type ConjugateProduct = Vec<(Word, i8)>;

/// For each generator `x` a word `σ(x)` fixing the first letter with section
/// `x` at `1`.
fn lift_letters(g: &GeneratedGroup) -> Result<Vec<Word>> {
    let ball = g.ball(3, DEFAULT_DEDUP_DEPTH, 1 << 12)?;
    let one = Prefix(vec![1]);
    g.generators()
        .iter()
        .enumerate()
        .map(|(i, x)| {
            ball.iter()
                .find(|b| b.element.root_perm().is_identity() && b.element.section(&one).equal_exact(x).unwrap_or(false))
                .map(|b| b.word.clone())
                .ok_or_else(|| Error::NotFound(format!("no lift of generator {}", g.names()[i])))
        })
        .collect()
}

/// A word for an element of the Grigorchuk group supported in `[1^m]`.
///
/// With `k = (ad)²`, the element `(adab)² = k · b k⁻¹ b` fixes `[0]` and has
/// section `k` at `1`. Conjugating by `σ(v)` lifts `v k v⁻¹` the same way, so
/// a product of conjugates of `k` supported in `[1^{m−1}]` lifts to one
/// supported in `[1^m]`.
pub fn grigorchuk_rist_word(g: &GeneratedGroup, m: usize) -> Result<Word> {
    let k = g.parse_word("a d a d")?;
    let b = g.parse_word("b")?;
    let lifted = g.evaluate(&g.parse_word("a d a b a d a b")?);
    let (ke, le) = (g.evaluate(&k), g.evaluate(&g.concat(&k, &g.concat(&b, &g.concat(&g.inverse_word(&k), &b)))));
    if !lifted.equal_exact(&le)? || !lifted.section(&Prefix(vec![1])).equal_exact(&ke)? {
        return Err(Error::NoStabilizerElement(m));
    }
    let sigma = lift_letters(g)?;
    let lift_word = |v: &Word| g.word(v.letters().iter().flat_map(|&(x, e)| {
        let w = if e < 0 { g.inverse_word(&sigma[x]) } else { sigma[x].clone() };
        w.letters().to_vec()
    }));
    let mut product: ConjugateProduct = vec![(Word::empty(), 1)];
    for _ in 0..m {
        product = product
            .iter()
            .flat_map(|(v, e)| {
                let s = lift_word(v);
                let sb = g.concat(&s, &b);
                if *e > 0 {
                    [(s, 1), (sb, -1)]
                } else {
                    [(sb, 1), (s, -1)]
                }
            })
            .collect();
    }
    let kinv = g.inverse_word(&k);
    let letters = product.iter().flat_map(|(v, e)| {
        let inner = if *e > 0 { &k } else { &kinv };
        let mut w = v.letters().to_vec();
        w.extend_from_slice(inner.letters());
        w.extend(g.inverse_word(v).letters().iter().copied());
        w
    });
    Ok(g.word(letters.collect::<Vec<_>>()))
}
