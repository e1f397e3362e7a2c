//! Named corpus entries and their verification bundles.

use std::path::PathBuf;

use num_traits::{One, Zero};
use serde_json::json;
use treedyn::cocycle::{f_sets, FVariant, FinitarityOptions};
use treedyn::constructions::*;
use treedyn::group::DEFAULT_DEDUP_DEPTH;
use treedyn::koopman::*;
use treedyn::measures::*;
use treedyn::{Automorphism, Evidence, GeneratedGroup, Prefix, TreeShape};

use crate::ops::{self, DEFECT_TOL};
use crate::output::{line_plot, Outcome, Verdict};
use crate::CliError;

pub struct Ctx {
    pub seed: u64,
    pub cap: usize,
    pub cache: Option<PathBuf>,
    pub svg: bool,
}

pub struct Entry {
    pub name: &'static str,
    pub title: &'static str,
    pub description: &'static str,
    pub run: fn(&Ctx) -> Result<Outcome, CliError>,
}

pub const ENTRIES: &[Entry] = &[
    Entry {
        name: "grigorchuk-relations",
        title: "Grigorchuk group relations",
        description: "a, b, c, d are involutions and bcd = 1, decided by bisimulation of the minimized machine.",
        run: relations,
    },
    Entry {
        name: "example-3.5",
        title: "Even-weight translation group",
        description: "The group of translations of (Z/2)^N flipping an even number of coordinates. It is minimal \
            (transitive on every level), while the subgroup flipping coordinates inside a window of length n \
            splits level n into two classes of equal size.",
        run: parity,
    },
    Entry {
        name: "example-3.6",
        title: "Element separating two orthogonal product measures",
        description: "For Haar measure μ and the Bernoulli(1/4,3/4) measure ν, an element that is ν-finitary but \
            not μ-finitary. Stage k acts on a likelihood-ratio cut U_k with μ(U_k) > 1 − 2^−k and ν(U_k) < 2^−k.",
        run: orthogonal_pair,
    },
    Entry {
        name: "example-3.7",
        title: "Element separating one Bernoulli measure from all others",
        description: "An element that is μ_θ-finitary but not μ_λ-finitary for every λ ≠ θ (here θ = 1/2). \
            Stage k acts outside a law-of-large-numbers band around θ; the other parameters are covered by a \
            finite rational net at each stage.",
        run: separating,
    },
    Entry {
        name: "example-4.2-fsets",
        title: "Factorial element",
        description: "F_n is empty unless n = k!, where it is X^{(k−1)!} followed by zeros, so |F_{k!}| = 2^{(k−1)!}. \
            The element is (w)-subexponentially bounded for Haar measure but not purely μ-finitary.",
        run: factorial,
    },
    Entry {
        name: "example-4.3",
        title: "Typical-band elements and the bifurcation at e^−h",
        description: "For Bernoulli(2/3,1/3), elements g_n acting on bands of typical words of mass at least n^−2. \
            The sums Σ|F_m|δ^m change behaviour at δ = e^−h with h the entropy of the coin.",
        run: typical,
    },
    Entry {
        name: "example-4.4",
        title: "Dissipative translation group",
        description: "Block-flip translations γ_k with a wandering set Y of positive measure: gY ∩ Y = ∅ for every \
            nonidentity g.",
        run: dissipative,
    },
    Entry {
        name: "example-4.5",
        title: "Conservative non-ergodic group",
        description: "Adding coordinate flips δ_k to the block translations gives a conservative action with two \
            disjoint invariant sets of positive measure.",
        run: nonergodic,
    },
    Entry {
        name: "example-4.6",
        title: "Minimal weakly branch non-ergodic group",
        description: "The same invariant pair for a minimal, weakly branch group whose flips are localized below \
            the first stage. Level transitivity is checked up to the number of stages built.",
        run: weakly_branch,
    },
    Entry {
        name: "theorem-5.3-grigorchuk-3stages",
        title: "Continuum of pairwise orthogonal ergodic measures for the Grigorchuk group",
        description: "A three-stage family λ^ω built from β = (1/3,2/3) and (2/3,1/3), with stage constants \
            9/10, 99/100, 999/1000 checked for the 0-tail, 1-tail and a one-flip word.",
        run: family_entry,
    },
    Entry {
        name: "theorem-7.1",
        title: "Transfer of matrix coefficients between measures",
        description: "For F = {a, b}, f = 1_[1], ε = 0.01, Haar μ and the 0-tail λ^ω, the coefficients of κ_μ are \
            reproduced by κ_ν on a modified vector within 2C²ε.",
        run: transfer,
    },
    Entry {
        name: "kakutani-haar-bernoulli",
        title: "Kakutani dichotomy for Haar against Bernoulli(1/4,3/4)",
        description: "Orthogonal by the closed-form tail: every level has Hellinger affinity ≈ 0.965926.",
        run: kakutani_entry,
    },
    Entry {
        name: "rigidity",
        title: "Rigidity trace along a shrinking cylinder chain",
        description: "Elements of the rigid stabilizers of [1^m], m = 1..6, move ⟨κ(g)f, r⟩ by at most the \
            Cauchy–Schwarz bound, which is 2√μ(O_m) for constant f and r. Haar and one λ^ω.",
        run: rigidity,
    },
    Entry {
        name: "koopman-diagnostics",
        title: "Finite-level Koopman diagnostics",
        description: "Unitarity and homomorphism defects of depth-n Koopman matrices over the radius-2 ball, \
            commutation with the level filtration under Haar, and the fixed space of the rigid stabilizer of [1].",
        run: koopman_diag,
    },
];

pub fn find(name: &str) -> Option<&'static Entry> {
    ENTRIES.iter().find(|e| e.name == name)
}

fn bin() -> TreeShape {
    TreeShape::binary01()
}

fn coin() -> ProductMeasure {
    ProductMeasure::bernoulli(&bin(), LevelDistribution::binary(q(2, 3)).unwrap()).unwrap()
}

fn betas() -> [LevelDistribution; 2] {
    [LevelDistribution::binary(q(1, 3)).unwrap(), LevelDistribution::binary(q(2, 3)).unwrap()]
}

fn fr(x: &Q) -> String {
    format_rational(x)
}

/// Every verdict recorded here is a check; a false one makes the outcome negative.
fn check(o: &mut Outcome, name: &str, holds: bool, evidence: Evidence) {
    o.verdicts.push(Verdict::new(name, holds, evidence));
    o.negative |= !holds;
}

fn relations(_: &Ctx) -> Result<Outcome, CliError> {
    let g = grigorchuk();
    let mut o = Outcome::default();
    let mut rows = Vec::new();
    for w in ["a a", "b b", "c c", "d d", "b c d"] {
        let e = g.evaluate(&g.parse_word(w)?);
        let id = e.is_identity_exact()?;
        check(&mut o, &format!("{w} = 1"), id, Evidence::Exact);
        rows.push(json!({"word": w, "identity": id, "depth_12_table_identity": e.is_identity_to_depth(12)}));
    }
    o.result = json!({ "relations": rows });
    Ok(o)
}

fn parity(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = parity_group(DEFAULT_PARITY_SPAN);
    let mut o = ops::minimality(&p, [1, 5], ctx.cap)?;
    let blocks = p.level_orbit_partition(4, &in_window(&p, 4), ctx.cap)?;
    let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
    check(&mut o, "window_4_two_classes", sizes == [8, 8], Evidence::Exact);
    o.result["window_4_classes"] = json!(blocks
        .iter()
        .map(|b| b.iter().map(|&i| bin().format_prefix(&bin().prefix_at(4, i))).collect::<Vec<_>>())
        .collect::<Vec<_>>());
    Ok(o)
}

fn orthogonal_pair(ctx: &Ctx) -> Result<Outcome, CliError> {
    let haar = ProductMeasure::uniform(&bin());
    let nu = ProductMeasure::bernoulli(&bin(), LevelDistribution::binary(q(1, 4)).unwrap()).unwrap();
    let e = orthogonal_pair_element(&haar, &nu, DEFAULT_SEPARATION_STAGES, DEFAULT_SEPARATION_DEPTH_CAP, DEFAULT_LR_STATE_CAP)?;
    let mut o = Outcome::default();
    for s in &e.stages {
        let eps = Q::new(One::one(), num_bigint::BigInt::one() << s.k);
        check(
            &mut o,
            &format!("stage_{}_masses", s.k),
            s.mu_mass > Q::one() - &eps && s.nu_mass < eps,
            Evidence::Exact,
        );
    }
    for v in e.claims_nu() {
        o.verdicts.push(Verdict::new(format!("nu: {:?}", v.class), v.holds, v.evidence));
    }
    for v in e.claims_mu() {
        o.verdicts.push(Verdict::new(format!("mu: {:?}", v.class), v.holds, v.evidence));
    }
    let first = &e.stages[0];
    let f = f_sets(&e.element, first.depth, FVariant::Plain, Some(&nu), None, ctx.cap)?;
    check(&mut o, "stage_1_f_set_nu_mass", f.measure.as_ref() == Some(&first.nu_mass), Evidence::Exact);
    o.result = json!({ "depths": e.depths(), "stages": e.stages });
    Ok(o)
}

fn separating(_: &Ctx) -> Result<Outcome, CliError> {
    let theta = q(1, 2);
    let s = separating_element(&theta, DEFAULT_WLLN_STAGES, DEFAULT_WLLN_DEPTH_CAP)?;
    let mut o = Outcome::default();
    for st in &s.stages {
        let target = Q::one() - Q::new(One::one(), ((st.k * st.k) as i64).into());
        check(
            &mut o,
            &format!("stage_{}_band_masses", st.k),
            st.theta_mass > target && st.net_min_mass > target,
            Evidence::Exact,
        );
    }
    for v in s.claims(&theta) {
        o.verdicts.push(Verdict::new(format!("theta: {:?}", v.class), v.holds, v.evidence));
    }
    let other = q(1, 5);
    for v in s.claims(&other) {
        o.verdicts.push(Verdict::new(format!("lambda = 1/5: {:?}", v.class), v.holds, v.evidence));
    }
    o.result = json!({ "theta": fr(&theta), "depths": s.depths(), "stages": s.stages });
    Ok(o)
}

fn factorial(ctx: &Ctx) -> Result<Outcome, CliError> {
    let f = factorial_element();
    let haar = ProductMeasure::uniform(&bin());
    let mut o = Outcome::default();
    let mut rows = Vec::new();
    let mut ok = true;
    for n in 1..=24 {
        let s = f_sets(&f.element, n, FVariant::Plain, Some(&haar), None, ctx.cap.max(1 << 20))?;
        let mass = s.measure.clone().unwrap_or_else(Q::zero);
        ok &= match n {
            2 => s.cardinality() == 2 && mass == q(1, 2),
            6 => s.cardinality() == 4 && mass == q(1, 16),
            24 => s.cardinality() == 64,
            _ => s.cardinality() == 0,
        };
        if s.cardinality() > 0 {
            let members: Vec<String> = s.members.iter().take(4).map(|y| bin().format_prefix(y)).collect();
            rows.push(json!({"n": n, "count": s.cardinality(), "haar_mass": fr(&mass), "first_members": members}));
        }
    }
    check(&mut o, "f_sets_closed_form_to_24", ok, Evidence::Exact);
    let opts = FinitarityOptions {
        horizon: 8,
        claims: FactorialElement::claims(&haar),
        ..Default::default()
    };
    let r = treedyn::cocycle::finitarity_report(&f.element, &haar, &opts)?;
    ops::finitarity_into(&mut o, "factorial", &r, ctx.svg);
    o.result = json!({ "nonempty": rows });
    Ok(o)
}

fn typical(ctx: &Ctx) -> Result<Outcome, CliError> {
    let sm = sm_elements(&coin(), (8, 16), DEFAULT_BAND_DEPTH_CAP)?;
    let mut o = Outcome::default();
    check(&mut o, "entropy_near_0.6365", (sm.entropy - 0.6365).abs() < 1e-3, Evidence::Exact);
    let masses = sm.band_masses((8, 16))?;
    check(&mut o, "band_mass_at_least_n^-2", masses.iter().all(|(_, m, floor, _)| m >= floor), Evidence::Exact);
    let p = sm.bifurcation_probe(8, (8, 16), 0.05)?;
    check(&mut o, "sums_increase_above", p.above_sums_increase, Evidence::PartialSums);
    check(&mut o, "terms_decay_below", p.below_terms_decay, Evidence::PartialSums);
    let mut csv = String::from("m,f_count,term_above,term_below,partial_above,partial_below\n");
    for r in &p.rows {
        csv.push_str(&format!(
            "{},{},{:.15},{:.15},{:.15},{:.15}\n",
            r.m, r.f_count, r.term_above, r.term_below, r.partial_above, r.partial_below
        ));
    }
    o.csv("bifurcation.csv", &csv);
    if ctx.svg {
        let pts = |f: fn(&BifurcationRow) -> f64| p.rows.iter().map(|r| (r.m as f64, f(r))).collect::<Vec<_>>();
        o.artifacts.push((
            "bifurcation.svg".into(),
            line_plot(
                "Σ |F_m| δ^m around δ = e^-h",
                "m",
                &[
                    (format!("partial sums, δ = {:.4}", p.delta_above), pts(|r| r.partial_above)),
                    (format!("terms, δ = {:.4}", p.delta_below), pts(|r| r.term_below)),
                ],
            ),
        ));
    }
    let masses: Vec<_> = masses
        .iter()
        .map(|(m, mass, floor, _)| json!({"m": m, "mass": fr(mass), "floor": fr(floor)}))
        .collect();
    o.result = json!({ "entropy": sm.entropy, "band_masses": masses, "probe": p });
    Ok(o)
}

fn dissipative(ctx: &Ctx) -> Result<Outcome, CliError> {
    let d = dissipative_group(&coin(), DEFAULT_BLOCK_STAGES, DEFAULT_BLOCK_CAP)?;
    let mut o = Outcome::default();
    let bound = d.mass_lower_bound();
    check(&mut o, "mass_lower_bound_positive", bound > Q::zero(), Evidence::Exact);
    let mut flips = true;
    for k in 0..=d.schedule.stages() {
        flips &= d.block_flip_disjoint(k)?;
    }
    check(&mut o, "block_flips_move_y_off_itself", flips, Evidence::Exact);
    let w = d.wandering_check(3, ctx.cap)?;
    check(&mut o, "wandering_radius_3", w.disjoint, Evidence::Exact);
    o.result = json!({ "schedule": d.schedule, "mass_lower_bound": fr(&bound), "wandering": w });
    Ok(o)
}

fn nonergodic_bundle(m: &NonErgodicGroup, ctx: &Ctx, o: &mut Outcome) -> Result<serde_json::Value, CliError> {
    check(o, "y_invariant_under_h", m.h_invariance(), Evidence::Exact);
    let d = m.disjointness(3, ctx.cap)?;
    check(o, "disjoint_translates_radius_3", d.disjoint, Evidence::Exact);
    let p = m.invariant_pair(3, ctx.cap)?;
    check(
        o,
        "invariant_pair_disjoint_positive",
        p.disjoint && p.mass_a > Q::zero() && p.mass_b > Q::zero(),
        Evidence::Exact,
    );
    let rn = m.rn_flip_check(200, ctx.seed)?;
    check(o, "flip_rn_lower_bound", rn.holds, Evidence::Exact);
    Ok(json!({ "schedule": m.schedule, "disjointness": d, "invariant_pair": p, "rn_flips": rn }))
}

fn nonergodic(ctx: &Ctx) -> Result<Outcome, CliError> {
    let m = conservative_nonergodic_group(&coin(), DEFAULT_BLOCK_STAGES, DEFAULT_BLOCK_CAP)?;
    let mut o = Outcome::default();
    o.result = nonergodic_bundle(&m, ctx, &mut o)?;
    Ok(o)
}

fn weakly_branch(ctx: &Ctx) -> Result<Outcome, CliError> {
    let stages = 2;
    let m = weakly_branch_nonergodic_group(&coin(), stages, DEFAULT_BLOCK_CAP)?;
    let mut o = Outcome::default();
    let mut r = nonergodic_bundle(&m, ctx, &mut o)?;
    let b = m.weakly_branch_check(1, ctx.cap)?;
    check(&mut o, "weakly_branch_depth_1", b.holds, Evidence::Exact);
    let mg = m.m_group()?;
    for n in 1..=stages {
        let t = mg.minimality_check(n, ctx.cap)?.is_transitive();
        check(&mut o, &format!("transitive_level_{n}"), t, Evidence::Exact);
    }
    r["branch"] = json!(b);
    o.result = r;
    Ok(o)
}

/// The Grigorchuk family, read from the cache directory when present there.
pub fn family(ctx: &Ctx) -> Result<(GeneratedGroup, MeasureFamily), CliError> {
    let g = grigorchuk();
    let path = ctx.cache.as_ref().map(|d| d.join("family-grigorchuk-1_3-2_3.json"));
    if let Some(p) = &path {
        if let Ok(text) = std::fs::read_to_string(p) {
            if let Ok(f) = serde_json::from_str::<MeasureFamily>(&text) {
                return Ok((g, f));
            }
        }
    }
    let f = build_measure_family(&g, betas(), &FamilyOptions::default())?;
    if let Some(p) = &path {
        let _ = std::fs::create_dir_all(p.parent().unwrap());
        let _ = std::fs::write(p, serde_json::to_string(&f).expect("serializable family"));
    }
    Ok((g, f))
}

fn family_entry(_ctx: &Ctx) -> Result<Outcome, CliError> {
    let (g, f) = family(_ctx)?;
    let mut o = Outcome::default();
    let constants: Vec<String> = f.stages.iter().map(|s| s.constant.clone()).collect();
    check(&mut o, "stage_constants", constants == ["9/10", "99/100", "999/1000"], Evidence::Exact);
    let mut reports = Vec::new();
    for (word, tail) in [("", false), ("", true), ("1", false)] {
        let omega = OmegaWord::parse(word, tail)?;
        let mu = f.measure(&omega)?;
        let label = omega.to_string();
        match verify_compatibility(&g, &mu, &f, &[1, 2, 3], &VerifyOptions::default()) {
            Ok(r) => {
                check(&mut o, &format!("{label}: compatible"), true, Evidence::Exact);
                reports.push(json!({"omega": label, "report": r}));
            }
            Err(e) => {
                check(&mut o, &format!("{label}: compatible"), false, Evidence::Exact);
                reports.push(json!({"omega": label, "error": e.to_string()}));
            }
        }
    }
    o.result = json!({ "levels": f.levels, "constants": constants, "verification": reports });
    Ok(o)
}

fn transfer(ctx: &Ctx) -> Result<Outcome, CliError> {
    let (g, f) = family(ctx)?;
    let nu = f.measure(&OmegaWord::constant(false))?;
    let ind = CylinderFunction::indicator(&bin(), &Prefix(vec![1]))?;
    let elems: Vec<(String, Automorphism)> =
        ["a", "b"].iter().map(|n| (n.to_string(), g.generator(n).unwrap().clone())).collect();
    let opts = WeakContainmentOptions::default();
    let r = weak_containment_experiment(&elems, &ProductMeasure::uniform(&bin()), &nu, &ind, &opts)?;
    let mut o = Outcome::default();
    check(&mut o, "difference_below_2C^2eps", r.holds, Evidence::Exact);
    check(&mut o, "two_evaluations_agree", r.cross_check <= DEFECT_TOL, Evidence::Exact);
    let control = WeakContainmentOptions {
        drop_phi: true,
        ..Default::default()
    };
    let c = weak_containment_experiment(&elems, &ProductMeasure::uniform(&bin()), &nu, &ind, &control)?;
    o.verdicts.push(Verdict::new("control_without_density_holds", c.holds, Evidence::Exact));
    o.result = json!({ "report": r, "control_max_difference": c.max_difference });
    Ok(o)
}

fn kakutani_entry(ctx: &Ctx) -> Result<Outcome, CliError> {
    let haar = ProductMeasure::uniform(&bin());
    let nu = ProductMeasure::bernoulli(&bin(), LevelDistribution::binary(q(1, 4)).unwrap()).unwrap();
    let r = kakutani_classify(&haar, &nu, 32, DEFAULT_LOG_THRESHOLD, true)?;
    let mut o = ops::kakutani_outcome(&r, ctx.svg);
    check(
        &mut o,
        "affinity_0.965926",
        r.tail_affinities.iter().all(|a| (a - 0.965926).abs() < 1e-6),
        Evidence::ClosedForm,
    );
    check(&mut o, "orthogonal", r.verdict == KakutaniVerdict::Orthogonal, r.evidence);
    Ok(o)
}

fn rigidity(ctx: &Ctx) -> Result<Outcome, CliError> {
    let (g, f) = family(ctx)?;
    let mut chain = Vec::new();
    for m in 1..=6 {
        let w = grigorchuk_rist_word(&g, m)?;
        chain.push(RigidityStepInput {
            cylinder: Prefix(vec![1; m]),
            element: g.evaluate(&w),
            label: g.format_word(&w),
        });
    }
    let one = CylinderFunction::constant(&bin(), 0, 1.0)?;
    let mut o = Outcome::default();
    let mut traces = Vec::new();
    let mut series = Vec::new();
    for (label, mu) in [("haar", ProductMeasure::uniform(&bin())), ("lambda_0_tail", f.measure(&OmegaWord::constant(false))?)] {
        let t = rigidity_trace(&mu, &one, &one, &chain, 16, ctx.cap)?;
        check(&mut o, &format!("{label}: bound_holds"), t.all_hold, Evidence::Exact);
        let within = t.steps.iter().all(|s| s.value.hi <= 2.0 * s.mass.sqrt() + 1e-15);
        check(&mut o, &format!("{label}: within_2_sqrt_mass"), within, Evidence::Exact);
        series.push((format!("{label}: upper value"), t.steps.iter().map(|s| (s.m as f64, s.value.hi)).collect()));
        series.push((format!("{label}: bound"), t.steps.iter().map(|s| (s.m as f64, s.bound)).collect()));
        traces.push(json!({"measure": label, "trace": t}));
    }
    if ctx.svg {
        o.artifacts.push(("rigidity.svg".into(), line_plot("rigidity trace", "m", &series)));
    }
    o.result = json!({ "traces": traces });
    Ok(o)
}

fn koopman_diag(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let mut worst = Vec::new();
    let haar = ProductMeasure::uniform(&bin());
    for (name, group, mu) in [("grigorchuk/haar", grigorchuk(), haar.clone()), ("parity/coin", parity_group(DEFAULT_PARITY_SPAN), coin())] {
        let ball = group.ball(2, DEFAULT_DEDUP_DEPTH, ctx.cap)?;
        let (mut unit, mut hom, mut pairs) = (0f64, 0f64, 0usize);
        for n in 1..=6 {
            let ms: Vec<(usize, KoopmanMatrix)> = ball
                .iter()
                .enumerate()
                .filter_map(|(i, e)| koopman_matrix(&e.element, &mu, n, ctx.cap).ok().map(|m| (i, m)))
                .collect();
            for (i, a) in &ms {
                unit = unit.max(unitarity_defect(&a.normalized));
                for (j, b) in &ms {
                    let prod = ball[*i].element.compose(&ball[*j].element);
                    if let Ok(ab) = koopman_matrix(&prod, &mu, n, ctx.cap) {
                        hom = hom.max(homomorphism_defect(&a.normalized, &b.normalized, &ab.normalized));
                        pairs += 1;
                    }
                }
            }
        }
        check(&mut o, &format!("{name}: unitarity"), unit <= DEFECT_TOL, Evidence::Exact);
        check(&mut o, &format!("{name}: homomorphism"), hom <= DEFECT_TOL, Evidence::Exact);
        worst.push(json!({"group": name, "ball_size": ball.len(), "pairs": pairs, "unitarity_defect": unit, "homomorphism_defect": hom}));
    }
    let r = level_filtration_check(&grigorchuk(), 5, ctx.cap)?;
    check(&mut o, "filtration_commutes_depth_5", r.max_defect <= DEFECT_TOL, Evidence::Exact);
    let io = io_diagnostic(&grigorchuk(), &Prefix(vec![1]), &haar, 5, 4, ctx.cap)?;
    check(&mut o, "io_fixed_space_contains_outside", io.outside_fixed && io.dimension >= io.outside, Evidence::Exact);
    o.result = json!({ "defects": worst, "filtration": r, "io": io });
    Ok(o)
}
