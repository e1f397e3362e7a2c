use treedyn_wasm::{finitarity_sums_json, grigorchuk_action_json, kakutani_trace_json, MAX_DEPTH};

#[test]
fn haar_against_biased_coin_is_orthogonal() {
    let r = kakutani_trace_json("1/2,1/2", "1/4,3/4", 30).unwrap();
    assert_eq!(r["verdict"], "Orthogonal");
    assert_eq!(r["cumulative_log"].as_array().unwrap().len(), 30);
    let a = r["affinity"][0].as_f64().unwrap();
    assert!((a - 0.965926).abs() < 1e-6);
}

#[test]
fn identical_measures_are_equivalent() {
    let r = kakutani_trace_json("", "1/2, 1/2", 10).unwrap();
    assert_eq!(r["verdict"], "Equivalent");
}

#[test]
fn bad_distribution_is_an_error() {
    assert!(kakutani_trace_json("1/2,1/3", "", 5).is_err());
    assert!(kakutani_trace_json("x", "", 5).is_err());
}

#[test]
fn generator_a_swaps_only_at_the_root() {
    let r = grigorchuk_action_json("a", 3).unwrap();
    let levels = r["levels"].as_array().unwrap();
    assert_eq!(levels[0]["swaps_above"], serde_json::json!([true]));
    assert_eq!(levels[1]["swaps_above"], serde_json::json!([false, false]));
    assert_eq!(levels[2]["image"], serde_json::json!([4, 5, 6, 7, 0, 1, 2, 3]));
    assert_eq!(r["group_orbits"].as_array().unwrap().len(), 1);
}

#[test]
fn images_are_permutations() {
    let r = grigorchuk_action_json("a b a c d^-1", 5).unwrap();
    for lv in r["levels"].as_array().unwrap() {
        let mut img: Vec<u64> = lv["image"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        img.sort();
        assert_eq!(img, (0..img.len() as u64).collect::<Vec<_>>());
    }
}

#[test]
fn depth_is_clamped() {
    let r = grigorchuk_action_json("b", 50).unwrap();
    assert_eq!(r["depth"], MAX_DEPTH);
    assert!(grigorchuk_action_json("q", 2).is_err());
}

#[test]
fn finitarity_sums_are_monotone() {
    let r = finitarity_sums_json("parity", "t1_2", "1/3,2/3", 10).unwrap();
    let f: Vec<f64> = r["f_partial"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(f.len(), 10);
    assert!(f.windows(2).all(|w| w[0] <= w[1]));
    assert!(finitarity_sums_json("nosuch", "a", "", 4).is_err());
}
