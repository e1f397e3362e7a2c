//! Single operations shared by `run` and the direct subcommands.

use serde_json::{json, Value};
use treedyn::cocycle::{cocycle_chain_check, f_sets, finitarity_report, FVariant, FinitarityOptions, FinitarityReport};
use treedyn::koopman::{koopman_matrix, unitarity_defect};
use treedyn::measures::{format_rational, kakutani_classify, KakutaniReport, KakutaniVerdict, ProductMeasure};
use treedyn::{Automorphism, Evidence, GeneratedGroup, Minimality};

use crate::output::{line_plot, Outcome, Verdict};
use crate::CliError;

pub const DEFECT_TOL: f64 = 1e-12;

pub fn file_stem(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "identity".into()
    } else {
        s
    }
}

pub fn kakutani(mu: &ProductMeasure, nu: &ProductMeasure, horizon: usize, threshold: f64, svg: bool) -> Result<Outcome, CliError> {
    let r = kakutani_classify(mu, nu, horizon, threshold, true)?;
    Ok(kakutani_outcome(&r, svg))
}

pub fn kakutani_outcome(r: &KakutaniReport, svg: bool) -> Outcome {
    let mut o = Outcome {
        verdicts: vec![Verdict::new("kakutani", r.verdict, r.evidence)],
        result: json!({
            "verdict": r.verdict,
            "evidence": r.evidence,
            "tail_affinities": r.tail_affinities,
        }),
        negative: r.verdict == KakutaniVerdict::Undecided,
        ..Default::default()
    };
    o.csv("kakutani.csv", &r.to_csv());
    if svg {
        let pts = r.trace.iter().map(|row| (row.n as f64, row.cumulative_log)).collect();
        o.artifacts.push((
            "kakutani.svg".into(),
            line_plot("log of the partial affinity product", "level n", &[("cumulative log".into(), pts)]),
        ));
    }
    o
}

pub fn minimality(group: &GeneratedGroup, levels: [usize; 2], cap: usize) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let mut rows = Vec::new();
    for n in levels[0]..=levels[1] {
        let level = group.shape().enumerate_level(n, cap)?;
        let fmt = |i: usize| group.shape().format_prefix(&level[i]);
        match group.minimality_check(n, cap)? {
            Minimality::Transitive { witnesses } => {
                let (dim, uniform) = group.invariant_distribution_dimension(n, cap)?;
                o.verdicts.push(Verdict::new(format!("level_{n}"), "transitive", Evidence::Exact));
                o.verdicts.push(Verdict::new(format!("level_{n}_uniform_unique"), dim == 1 && uniform, Evidence::Exact));
                o.negative |= dim != 1 || !uniform;
                let w: Vec<Value> = witnesses
                    .iter()
                    .enumerate()
                    .map(|(i, w)| json!({"to": fmt(i), "word": group.format_word(w)}))
                    .collect();
                rows.push(json!({"level": n, "verdict": "transitive", "invariant_dimension": dim, "transporters": w}));
            }
            Minimality::NotTransitive { orbits } => {
                o.verdicts.push(Verdict::new(format!("level_{n}"), "not-transitive", Evidence::Exact));
                o.negative = true;
                let orbits: Vec<Vec<String>> = orbits.iter().map(|orb| orb.iter().map(|&i| fmt(i)).collect()).collect();
                rows.push(json!({"level": n, "verdict": "not-transitive", "orbits": orbits}));
            }
        }
    }
    o.result = json!({ "levels": rows });
    Ok(o)
}

pub fn finitarity(
    elements: &[(String, Automorphism)],
    mu: &ProductMeasure,
    opts: &FinitarityOptions,
    svg: bool,
) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let mut reports = Vec::new();
    for (label, g) in elements {
        let r = finitarity_report(g, mu, opts)?;
        finitarity_into(&mut o, label, &r, svg);
        reports.push(json!({"element": label, "report": r}));
    }
    o.result = json!({ "elements": reports });
    Ok(o)
}

pub fn finitarity_into(o: &mut Outcome, label: &str, r: &FinitarityReport, svg: bool) {
    for v in &r.verdicts {
        o.verdicts.push(Verdict::new(
            format!("{label}: {}", serde_json::to_value(v.class).unwrap().as_str().unwrap_or("class")),
            v.holds,
            v.evidence,
        ));
    }
    let stem = file_stem(label);
    o.csv(&format!("finitarity-{stem}.csv"), &r.to_csv());
    if svg {
        let xs = |v: &[f64]| v.iter().enumerate().map(|(i, &y)| ((i + 1) as f64, y)).collect::<Vec<_>>();
        let mut series = vec![("Σ μ(F_m)".to_string(), xs(&r.f_partial)), ("Σ μ(F_m⁺)".to_string(), xs(&r.plus_partial))];
        for d in &r.delta_sums {
            series.push((format!("Σ |F_m| δ^m, δ = {}", d.delta), xs(&d.partial)));
        }
        o.artifacts.push((
            format!("finitarity-{stem}.svg"),
            line_plot(&format!("partial sums for {label}"), "level n", &series),
        ));
    }
}

pub fn fsets(
    elements: &[(String, Automorphism)],
    mu: &ProductMeasure,
    horizon: usize,
    cap: usize,
) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let mut out = Vec::new();
    for (label, g) in elements {
        let shape = g.shape();
        let mut rows = Vec::new();
        let mut csv = String::from("n,count,measure\n");
        for n in 1..=horizon {
            let s = f_sets(g, n, FVariant::Plain, Some(mu), None, cap)?;
            let measure = s.measure.as_ref().map(format_rational).unwrap_or_default();
            csv.push_str(&format!("{n},{},{measure}\n", s.cardinality()));
            let members: Vec<String> = s.members.iter().take(64).map(|y| shape.format_prefix(y)).collect();
            rows.push(json!({
                "n": n,
                "count": s.cardinality(),
                "measure": measure,
                "members": members,
                "members_truncated": s.cardinality() > 64,
            }));
        }
        o.verdicts.push(Verdict::new(format!("{label}: f_sets"), "computed", Evidence::Exact));
        o.csv(&format!("fsets-{}.csv", file_stem(label)), &csv);
        out.push(json!({"element": label, "rows": rows}));
    }
    o.result = json!({ "elements": out });
    Ok(o)
}

pub fn cocycle(
    labels: [&str; 2],
    g: &Automorphism,
    h: &Automorphism,
    mu: &ProductMeasure,
    samples: usize,
    seed: u64,
) -> Result<Outcome, CliError> {
    let c = cocycle_chain_check(g, h, mu, samples, seed, treedyn::cocycle::DEFAULT_RN_HORIZON)?;
    Ok(Outcome {
        verdicts: vec![Verdict::new("chain_rule", c.holds, c.evidence)],
        negative: !c.holds,
        result: json!({"g": labels[0], "h": labels[1], "check": c}),
        ..Default::default()
    })
}

pub fn koopman(label: &str, g: &Automorphism, mu: &ProductMeasure, depth: usize, cap: usize, exact: bool) -> Result<Outcome, CliError> {
    let m = koopman_matrix(g, mu, depth, cap)?;
    let defect = unitarity_defect(&m.normalized);
    let mut o = Outcome {
        verdicts: vec![
            Verdict::new("unitarity_defect", defect, Evidence::Exact),
            Verdict::new("unitary", defect <= DEFECT_TOL, Evidence::Exact),
            Verdict::new("permutation_matrix", m.is_permutation(), Evidence::Exact),
        ],
        negative: defect > DEFECT_TOL,
        ..Default::default()
    };
    let shape = g.shape();
    let level = shape.enumerate_level(depth, cap)?;
    let basis: Vec<String> = level.iter().map(|y| shape.format_prefix(y)).collect();
    let header = format!(
        "# format_version: {}\n# element {label}, depth {depth}, basis 1_[y]/sqrt(mu[y]) in the order below\n# {}\n",
        crate::config::FORMAT_VERSION,
        basis.join(" ")
    );
    o.artifacts.push(("koopman.txt".into(), format!("{header}{}", m.to_text(true))));
    if exact {
        let n = level.len();
        let mut body = String::new();
        for row in 0..n {
            let cells: Vec<String> = (0..n).map(|col| format_rational(&m.entry_squared(row, col))).collect();
            body.push_str(&cells.join(" "));
            body.push('\n');
        }
        o.artifacts.push((
            "koopman-indicator-squared.txt".into(),
            format!("{header}# squared entries in the basis 1_[y], exact\n{body}"),
        ));
    }
    o.result = json!({
        "element": label,
        "depth": depth,
        "dimension": level.len(),
        "table": m.table.iter().map(|&i| basis[i as usize].clone()).collect::<Vec<_>>(),
        "weights": m.weights.iter().map(format_rational).collect::<Vec<_>>(),
        "unitarity_defect": defect,
    });
    Ok(o)
}
