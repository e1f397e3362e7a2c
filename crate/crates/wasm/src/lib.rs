//! JSON-returning entry points for the browser demo in `www/`.

use serde_json::{json, Value};
use treedyn::cocycle::{finitarity_report, FinitarityOptions};
use treedyn::constructions::{factorial_element, grigorchuk, parity_group, DEFAULT_PARITY_SPAN};
use treedyn::measures::{kakutani_classify, LevelDistribution, ProductMeasure, DEFAULT_LOG_THRESHOLD};
use treedyn::{Automorphism, GeneratedGroup, Prefix, TreeShape};
use wasm_bindgen::prelude::*;

/// Largest depth the demo will draw.
pub const MAX_DEPTH: usize = 8;
pub const MAX_HORIZON: usize = 400;

fn err(e: impl ToString) -> String {
    e.to_string()
}

/// `"1/3, 2/3"` as a Bernoulli measure on the binary tree; empty means uniform.
pub fn bernoulli(probs: &str) -> Result<ProductMeasure, String> {
    let shape = TreeShape::binary01();
    let parts: Vec<&str> = probs.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if parts.is_empty() {
        return Ok(ProductMeasure::uniform(&shape));
    }
    let dist = LevelDistribution::parse(&parts).map_err(err)?;
    ProductMeasure::bernoulli(&shape, dist).map_err(err)
}

fn group(name: &str) -> Result<GeneratedGroup, String> {
    match name {
        "grigorchuk" => Ok(grigorchuk()),
        "parity" => Ok(parity_group(DEFAULT_PARITY_SPAN)),
        "factorial" => {
            let f = factorial_element().element;
            let shape = f.shape().clone();
            GeneratedGroup::new(&shape, vec![("f".into(), f)]).map_err(err)
        }
        _ => Err(format!("unknown group {name:?}")),
    }
}

fn element(g: &GeneratedGroup, word: &str) -> Result<(String, Automorphism), String> {
    let w = g.parse_word(word).map_err(err)?;
    Ok((g.format_word(&w), g.evaluate(&w)))
}

pub fn kakutani_trace_json(mu: &str, nu: &str, horizon: usize) -> Result<Value, String> {
    let horizon = horizon.clamp(1, MAX_HORIZON);
    let r = kakutani_classify(&bernoulli(mu)?, &bernoulli(nu)?, horizon, DEFAULT_LOG_THRESHOLD, true).map_err(err)?;
    Ok(json!({
        "verdict": r.verdict,
        "evidence": r.evidence,
        "n": r.trace.iter().map(|t| t.n).collect::<Vec<_>>(),
        "affinity": r.trace.iter().map(|t| t.affinity).collect::<Vec<_>>(),
        "cumulative_log": r.trace.iter().map(|t| t.cumulative_log).collect::<Vec<_>>(),
    }))
}

/// Where a Grigorchuk word sends each vertex down to `depth`, the letter
/// permutation it applies at every vertex, and the group's level orbits.
pub fn grigorchuk_action_json(word: &str, depth: usize) -> Result<Value, String> {
    let depth = depth.clamp(1, MAX_DEPTH);
    let g = grigorchuk();
    let (label, e) = element(&g, word)?;
    let shape = g.shape();
    let cap = 1 << MAX_DEPTH;
    let mut levels = Vec::new();
    let mut level = vec![Prefix::root()];
    for n in 0..depth {
        let swaps: Vec<bool> = level.iter().map(|v| !e.section(v).root_perm().is_identity()).collect();
        let next: Vec<Prefix> = level.iter().flat_map(|v| (0..shape.arity(n + 1)).map(move |x| v.child(x))).collect();
        let image: Vec<usize> = next.iter().map(|v| shape.index_of(&e.apply_prefix(v))).collect();
        levels.push(json!({
            "depth": n + 1,
            "vertices": next.iter().map(|v| shape.format_prefix(v)).collect::<Vec<_>>(),
            "image": image,
            "swaps_above": swaps,
        }));
        level = next;
    }
    let all: Vec<usize> = (0..g.generators().len()).collect();
    let orbits = g.level_orbit_partition(depth, &all, cap).map_err(err)?;
    Ok(json!({ "word": label, "depth": depth, "levels": levels, "group_orbits": orbits }))
}

pub fn finitarity_sums_json(group_name: &str, word: &str, probs: &str, horizon: usize) -> Result<Value, String> {
    let g = group(group_name)?;
    let (label, e) = element(&g, word)?;
    let opts = FinitarityOptions {
        horizon: horizon.clamp(1, 24),
        ..Default::default()
    };
    let r = finitarity_report(&e, &bernoulli(probs)?, &opts).map_err(err)?;
    Ok(json!({
        "element": label,
        "f_partial": r.f_partial,
        "plus_partial": r.plus_partial,
        "delta_sums": r.delta_sums,
        "counts": r.rows.iter().map(|row| row.f_count).collect::<Vec<_>>(),
        "verdicts": r.verdicts,
    }))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsValue> {
    v.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = kakutaniTrace)]
pub fn kakutani_trace(mu: &str, nu: &str, horizon: usize) -> Result<String, JsValue> {
    to_js(kakutani_trace_json(mu, nu, horizon))
}

#[wasm_bindgen(js_name = grigorchukAction)]
pub fn grigorchuk_action(word: &str, depth: usize) -> Result<String, JsValue> {
    to_js(grigorchuk_action_json(word, depth))
}

#[wasm_bindgen(js_name = finitaritySums)]
pub fn finitarity_sums(group: &str, word: &str, probs: &str, horizon: usize) -> Result<String, JsValue> {
    to_js(finitarity_sums_json(group, word, probs, horizon))
}
