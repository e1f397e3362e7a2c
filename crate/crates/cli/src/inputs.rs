//! Shapes, measures, groups, portraits and machines read from JSON.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use treedyn::constructions::{factorial_element, grigorchuk, parity_group, DEFAULT_PARITY_SPAN};
use treedyn::measures::{parse_rational, LevelDistribution, MeasureSpec, ProductMeasure};
use treedyn::tree::ShapeSpec;
use treedyn::{Automorphism, GeneratedGroup, Machine, Perm, PortraitNode, TreeShape};

use crate::CliError;

pub const CORPUS_GROUPS: [&str; 3] = ["grigorchuk", "parity", "factorial"];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortraitJson {
    pub perm: Vec<u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub children: BTreeMap<String, PortraitJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineJson {
    pub states: Vec<StateJson>,
    #[serde(default)]
    pub start: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateJson {
    pub perm: Vec<u32>,
    pub next: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorJson {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portrait: Option<PortraitJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portrait_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine: Option<MachineJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine_file: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeSpec>,
    pub generators: Vec<GeneratorJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupRef {
    Name(String),
    Inline(GroupJson),
}

pub fn default_shape() -> TreeShape {
    TreeShape::binary01()
}

/// Inline JSON when the argument starts with `{`, otherwise a file path.
pub fn load_json(arg: &str) -> Result<Value, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| CliError::config("", format!("cannot read {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::config("", format!("{arg}: {e}")))
}

pub fn from_value<T: serde::de::DeserializeOwned>(v: Value, base: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let pointer = format!("{base}{}", pointer_of(e.path()));
        CliError::config(&pointer, e.into_inner().to_string())
    })
}

pub fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut s = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => s.push_str(&format!("/{index}")),
            Segment::Map { key } => s.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => s.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    s
}

/// Checks every rational of a measure spec, reporting the offending location.
pub fn check_measure(spec: &MeasureSpec, at: &str) -> Result<(), CliError> {
    let dist = |d: &[String], at: String| -> Result<(), CliError> {
        for (i, s) in d.iter().enumerate() {
            parse_rational(s).map_err(|e| CliError::config(&format!("{at}/{i}"), e.to_string()))?;
        }
        LevelDistribution::parse(d).map(|_| ()).map_err(|e| CliError::config(&at, e.to_string()))
    };
    match spec {
        MeasureSpec::Uniform => Ok(()),
        MeasureSpec::Bernoulli { probs } => dist(probs, format!("{at}/probs")),
        MeasureSpec::Explicit { head, tail } => {
            for (i, d) in head.iter().enumerate() {
                dist(d, format!("{at}/head/{i}"))?;
            }
            for (i, d) in tail.iter().enumerate() {
                dist(d, format!("{at}/tail/{i}"))?;
            }
            Ok(())
        }
        MeasureSpec::Overrides { base, levels, tail } => {
            check_measure(base, &format!("{at}/base"))?;
            for (k, d) in levels {
                dist(d, format!("{at}/levels/{k}"))?;
            }
            if let Some(t) = tail {
                for (k, d) in &t.levels {
                    dist(d, format!("{at}/tail/levels/{k}"))?;
                }
            }
            Ok(())
        }
    }
}

pub fn build_measure(spec: &MeasureSpec, shape: &TreeShape, at: &str) -> Result<ProductMeasure, CliError> {
    check_measure(spec, at)?;
    spec.build(shape).map_err(|e| CliError::config(at, e.to_string()))
}

/// `uniform`, a `bernoulli:p0,p1,…` shorthand, inline JSON or a file.
pub fn measure_arg(arg: &str, shape: &TreeShape) -> Result<ProductMeasure, CliError> {
    let spec = if arg == "uniform" || arg == "haar" {
        MeasureSpec::Uniform
    } else if let Some(rest) = arg.strip_prefix("bernoulli:") {
        MeasureSpec::Bernoulli {
            probs: rest.split(',').map(|s| s.trim().to_string()).collect(),
        }
    } else {
        from_value(load_json(arg)?, "")?
    };
    build_measure(&spec, shape, "")
}

pub fn corpus_group(name: &str) -> Option<GeneratedGroup> {
    match name {
        "grigorchuk" => Some(grigorchuk()),
        "parity" => Some(parity_group(DEFAULT_PARITY_SPAN)),
        "factorial" => {
            let f = factorial_element().element;
            let shape = f.shape().clone();
            GeneratedGroup::new(&shape, vec![("f".into(), f)]).ok()
        }
        _ => {
            let span: usize = name.strip_prefix("parity:")?.parse().ok()?;
            (2..=16).contains(&span).then(|| parity_group(span))
        }
    }
}

/// A corpus name, inline JSON or a group file.
pub fn group_arg(arg: &str) -> Result<GeneratedGroup, CliError> {
    if let Some(g) = corpus_group(arg) {
        return Ok(g);
    }
    if !arg.trim_start().starts_with('{') && !Path::new(arg).exists() {
        return Err(CliError::config("", format!("unknown group {arg:?}; corpus groups are {}", CORPUS_GROUPS.join(", "))));
    }
    let json: GroupJson = from_value(load_json(arg)?, "")?;
    build_group(&json, "")
}

pub fn resolve_group(r: &GroupRef, at: &str) -> Result<GeneratedGroup, CliError> {
    match r {
        GroupRef::Name(n) => corpus_group(n).ok_or_else(|| CliError::config(at, format!("unknown corpus group {n:?}"))),
        GroupRef::Inline(g) => build_group(g, at),
    }
}

pub fn build_group(json: &GroupJson, at: &str) -> Result<GeneratedGroup, CliError> {
    let shape = match &json.shape {
        Some(s) => TreeShape::from_spec(s).map_err(|e| CliError::config(&format!("{at}/shape"), e.to_string()))?,
        None => default_shape(),
    };
    let mut gens = Vec::new();
    for (i, g) in json.generators.iter().enumerate() {
        let here = format!("{at}/generators/{i}");
        gens.push((g.name.clone(), build_generator(g, &shape, &here)?));
    }
    GeneratedGroup::new(&shape, gens).map_err(|e| CliError::config(&format!("{at}/generators"), e.to_string()))
}

fn read_file<T: serde::de::DeserializeOwned>(path: &Path, at: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(at, format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::config(at, e.to_string()))?;
    from_value(v, at)
}

fn build_generator(g: &GeneratorJson, shape: &TreeShape, at: &str) -> Result<Automorphism, CliError> {
    let sources = [
        g.corpus.is_some(),
        g.portrait.is_some(),
        g.portrait_file.is_some(),
        g.machine.is_some(),
        g.machine_file.is_some(),
    ];
    if sources.iter().filter(|&&b| b).count() != 1 {
        return Err(CliError::config(at, "exactly one of corpus, portrait, portrait_file, machine, machine_file"));
    }
    let cfg = |e: treedyn::Error, at: String| CliError::config(&at, e.to_string());
    if let Some(c) = &g.corpus {
        let (group, name) = c
            .split_once('/')
            .ok_or_else(|| CliError::config(&format!("{at}/corpus"), "expected group/generator"))?;
        let grp = corpus_group(group).ok_or_else(|| CliError::config(&format!("{at}/corpus"), "unknown corpus group"))?;
        let e = grp
            .generator(name)
            .ok_or_else(|| CliError::config(&format!("{at}/corpus"), format!("no generator {name:?}")))?;
        if e.shape() != shape {
            return Err(CliError::config(&format!("{at}/corpus"), "generator acts on another tree"));
        }
        return Ok(e.clone());
    }
    if let Some(p) = &g.portrait {
        let node = portrait_node(p, shape, 0, &format!("{at}/portrait"))?;
        return Automorphism::portrait(shape, node).map_err(|e| cfg(e, format!("{at}/portrait")));
    }
    if let Some(path) = &g.portrait_file {
        let p: PortraitJson = read_file(path, &format!("{at}/portrait_file"))?;
        let node = portrait_node(&p, shape, 0, &format!("{at}/portrait_file"))?;
        return Automorphism::portrait(shape, node).map_err(|e| cfg(e, format!("{at}/portrait_file")));
    }
    let (m, here) = match (&g.machine, &g.machine_file) {
        (Some(m), _) => (m.clone(), format!("{at}/machine")),
        (_, Some(path)) => (read_file(path, &format!("{at}/machine_file"))?, format!("{at}/machine_file")),
        _ => unreachable!(),
    };
    let machine = build_machine(&m, shape, &here)?;
    Automorphism::machine_state(shape, &machine, m.start).map_err(|e| cfg(e, here))
}

fn perm_of(images: &[u32], shape: &TreeShape, at: &str) -> Result<Perm, CliError> {
    let base = shape.letter_base();
    let internal = images
        .iter()
        .map(|&x| x.checked_sub(base).ok_or_else(|| CliError::config(at, format!("letter {x} below base {base}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Perm::from_images(internal).map_err(|e| CliError::config(at, e.to_string()))
}

fn letter_key(k: &str, shape: &TreeShape, at: &str) -> Result<u32, CliError> {
    k.parse::<u32>()
        .ok()
        .and_then(|x| x.checked_sub(shape.letter_base()))
        .ok_or_else(|| CliError::config(at, format!("bad letter {k:?}")))
}

pub fn portrait_node(
    p: &PortraitJson,
    shape: &TreeShape,
    depth: usize,
    at: &str,
) -> Result<Option<Arc<PortraitNode>>, CliError> {
    let perm = perm_of(&p.perm, shape, &format!("{at}/perm"))?;
    if perm.degree() != shape.arity(depth + 1) {
        return Err(CliError::config(
            &format!("{at}/perm"),
            format!("degree {} at level {}, arity is {}", perm.degree(), depth + 1, shape.arity(depth + 1)),
        ));
    }
    let mut children = BTreeMap::new();
    for (k, c) in &p.children {
        let here = format!("{at}/children/{k}");
        let x = letter_key(k, shape, &here)?;
        if x >= perm.degree() {
            return Err(CliError::config(&here, format!("letter {k} out of range")));
        }
        if let Some(n) = portrait_node(c, shape, depth + 1, &here)? {
            children.insert(x, n);
        }
    }
    Ok(PortraitNode::build(perm, children))
}

pub fn build_machine(m: &MachineJson, shape: &TreeShape, at: &str) -> Result<Arc<Machine>, CliError> {
    if shape.constant_arity().is_none() {
        return Err(CliError::config(at, "machines need a constant-arity tree"));
    }
    if m.start >= m.states.len() {
        return Err(CliError::config(&format!("{at}/start"), "start state out of range"));
    }
    let mut states = Vec::new();
    for (i, s) in m.states.iter().enumerate() {
        states.push((perm_of(&s.perm, shape, &format!("{at}/states/{i}/perm"))?, s.next.clone()));
    }
    Machine::new(states).map_err(|e| CliError::config(&format!("{at}/states"), e.to_string()))
}

pub fn canonical_portrait(node: &Option<Arc<PortraitNode>>, shape: &TreeShape, depth: usize) -> PortraitJson {
    let base = shape.letter_base();
    match node {
        None => PortraitJson {
            perm: (0..shape.arity(depth + 1)).map(|x| x + base).collect(),
            children: BTreeMap::new(),
        },
        Some(n) => PortraitJson {
            perm: n.perm().images().iter().map(|x| x + base).collect(),
            children: n
                .children()
                .iter()
                .map(|(k, c)| ((k + base).to_string(), canonical_portrait(&Some(c.clone()), shape, depth + 1)))
                .collect(),
        },
    }
}

/// Minimized machine restricted to the states reachable from `start`, in BFS order.
pub fn canonical_machine(machine: &Machine, start: usize, shape: &TreeShape) -> MachineJson {
    let base = shape.letter_base();
    let s0 = machine.state_of(start).expect("validated start state");
    let mut order = vec![s0];
    let mut index = BTreeMap::from([(s0, 0usize)]);
    let mut queue = VecDeque::from([s0]);
    while let Some(s) = queue.pop_front() {
        for x in 0..machine.perm(s).degree() {
            let t = machine.next(s, x);
            if let std::collections::btree_map::Entry::Vacant(e) = index.entry(t) {
                e.insert(order.len());
                order.push(t);
                queue.push_back(t);
            }
        }
    }
    let states = order
        .iter()
        .map(|&s| StateJson {
            perm: machine.perm(s).images().iter().map(|x| x + base).collect(),
            next: (0..machine.perm(s).degree()).map(|x| index[&machine.next(s, x)]).collect(),
        })
        .collect();
    MachineJson { states, start: 0 }
}

/// The group with file references inlined and every portrait and machine canonical.
pub fn canonical_group(json: &GroupJson, at: &str) -> Result<GroupJson, CliError> {
    build_group(json, at)?;
    let shape = match &json.shape {
        Some(s) => TreeShape::from_spec(s).map_err(|e| CliError::config(&format!("{at}/shape"), e.to_string()))?,
        None => default_shape(),
    };
    let mut gens = Vec::new();
    for (i, g) in json.generators.iter().enumerate() {
        let here = format!("{at}/generators/{i}");
        let mut out = GeneratorJson {
            name: g.name.clone(),
            corpus: g.corpus.clone(),
            portrait: None,
            portrait_file: None,
            machine: None,
            machine_file: None,
        };
        let portrait = match (&g.portrait, &g.portrait_file) {
            (Some(p), _) => Some(p.clone()),
            (_, Some(f)) => Some(read_file::<PortraitJson>(f, &here)?),
            _ => None,
        };
        if let Some(p) = portrait {
            out.portrait = Some(canonical_portrait(&portrait_node(&p, &shape, 0, &here)?, &shape, 0));
        }
        let machine = match (&g.machine, &g.machine_file) {
            (Some(m), _) => Some(m.clone()),
            (_, Some(f)) => Some(read_file::<MachineJson>(f, &here)?),
            _ => None,
        };
        if let Some(m) = machine {
            let built = build_machine(&m, &shape, &here)?;
            out.machine = Some(canonical_machine(&built, m.start, &shape));
        }
        gens.push(out);
    }
    Ok(GroupJson {
        shape: json.shape.clone(),
        generators: gens,
    })
}
