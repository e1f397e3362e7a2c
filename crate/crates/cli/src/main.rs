mod config;
mod inputs;
mod ops;
mod output;
mod registry;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use treedyn::cocycle::FinitarityOptions;
use treedyn::measures::MeasureSpec;
use treedyn::tree::ShapeSpec;
use treedyn::{Automorphism, GeneratedGroup, TreeShape};

use config::{ExperimentConfig, Operation, Overrides, DEFAULT_CAP, DEFAULT_HORIZON};
use inputs::{default_shape, from_value, load_json, GroupJson, MachineJson, PortraitJson};
use output::{render_report, write_outputs, Outcome};

pub const CACHE_ENV: &str = "TREEDYN_CACHE_DIR";

#[derive(Debug)]
pub enum CliError {
    /// Bad input, located by a JSON pointer (empty for the whole document).
    Config { pointer: String, message: String },
    Core(treedyn::Error),
    /// A checked property failed.
    Negative(String),
    Other(String),
}

impl CliError {
    pub fn config(pointer: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            pointer: pointer.to_string(),
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        use treedyn::Error as E;
        match self {
            CliError::Config { .. } => 4,
            CliError::Negative(_) => 2,
            CliError::Other(_) => 1,
            CliError::Core(e) => match e {
                E::CapExceeded { .. } | E::ScheduleOverflow(_) | E::NotStabilized(_) | E::KEpsNotFound(_) => 3,
                E::ConditionFailed { .. } | E::SeparationNotFound(_) | E::StageNotFound { .. } | E::NotDepthCompatible { .. } => 2,
                E::InvalidShape(_)
                | E::InvalidPrefix(_)
                | E::InvalidPermutation(_)
                | E::InvalidDistribution(_)
                | E::InvalidAutomorphism(_)
                | E::ShapeMismatch(_)
                | E::DimensionMismatch(_)
                | E::Parse(_) => 4,
                _ => 1,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config { pointer, message } if pointer.is_empty() => write!(f, "config error: {message}"),
            CliError::Config { pointer, message } => write!(f, "config error at {pointer}: {message}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Negative(m) => write!(f, "negative verdict: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<treedyn::Error> for CliError {
    fn from(e: treedyn::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser)]
#[command(name = "treedyn", version, about = "Experiments with nonsingular actions on rooted-tree boundaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct Common {
    /// Seed for sampling operations.
    #[arg(long)]
    seed: Option<u64>,
    /// Enumeration cap.
    #[arg(long)]
    cap: Option<usize>,
    /// Directory for the report and its artifacts; the report goes to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip SVG plots.
    #[arg(long)]
    no_svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        config: String,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Run a corpus entry and compare it with its golden report.
    Reproduce {
        name: String,
        #[command(flatten)]
        common: Common,
        /// Directory of golden reports.
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Overwrite the golden report instead of comparing.
        #[arg(long)]
        bless: bool,
    },
    /// List corpus entries.
    List,
    /// Describe a corpus entry.
    Describe { name: String },
    /// Check a config, group, portrait, machine, measure or shape file and print its canonical form.
    Validate {
        file: String,
        #[arg(long, value_enum, default_value_t = Kind::Auto)]
        kind: Kind,
    },
    /// Finitarity report for group elements.
    ClassifyFinitarity {
        #[arg(long)]
        group: String,
        #[arg(long, default_value = "uniform")]
        measure: String,
        /// Word in the generators; every generator when omitted.
        #[arg(long)]
        element: Vec<String>,
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Level transitivity and invariant distributions.
    CheckMinimality {
        #[arg(long)]
        group: String,
        /// Range `lo..hi`, inclusive.
        #[arg(long, default_value = "1..5")]
        levels: String,
        #[command(flatten)]
        common: Common,
    },
    /// Depth-n Koopman matrix of one element.
    Koopman {
        #[arg(long)]
        group: String,
        #[arg(long, default_value = "uniform")]
        measure: String,
        #[arg(long)]
        element: String,
        #[arg(long)]
        depth: usize,
        /// Also export exact squared entries.
        #[arg(long)]
        exact: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Auto,
    Config,
    Group,
    Portrait,
    Machine,
    Measure,
    Shape,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("treedyn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Prints or writes the report; a negative outcome becomes exit code 2.
fn emit(operation: &str, config: &Value, outcome: Outcome, out: Option<&Path>, start: Instant) -> Result<(), CliError> {
    let report = render_report(operation, config, &outcome);
    match out {
        Some(dir) => {
            write_outputs(dir, &report, &outcome, start.elapsed())?;
            println!("{}", dir.join("report.json").display());
        }
        None => print!("{report}"),
    }
    negative(&outcome)
}

fn negative(outcome: &Outcome) -> Result<(), CliError> {
    if outcome.negative {
        let failed: Vec<&str> = outcome
            .verdicts
            .iter()
            .filter(|v| v.value == Value::Bool(false) || v.value == json!("not-transitive") || v.value == json!("Undecided"))
            .map(|v| v.name.as_str())
            .collect();
        Err(CliError::Negative(failed.join(", ")))
    } else {
        Ok(())
    }
}

fn elements(group: &GeneratedGroup, words: &[String], at: &str) -> Result<Vec<(String, Automorphism)>, CliError> {
    if words.is_empty() {
        return Ok(group.names().iter().cloned().zip(group.generators().iter().cloned()).collect());
    }
    words
        .iter()
        .map(|w| {
            let word = group.parse_word(w).map_err(|e| CliError::config(at, e.to_string()))?;
            Ok((group.format_word(&word), group.evaluate(&word)))
        })
        .collect()
}

fn parse_levels(s: &str) -> Result<[usize; 2], CliError> {
    let bad = || CliError::config("", format!("levels must look like 1..5, got {s:?}"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let b = b.trim_start_matches('=');
    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a == 0 || a > b {
        return Err(bad());
    }
    Ok([a, b])
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    let start = Instant::now();
    match cmd {
        Command::List => {
            for e in registry::ENTRIES {
                println!("{:<32} {}", e.name, e.title);
            }
            Ok(())
        }
        Command::Describe { name } => {
            let e = registry::find(&name).ok_or_else(|| CliError::config("", format!("unknown corpus entry {name:?}")))?;
            println!("{}\n{}\n\n{}", e.name, e.title, e.description);
            Ok(())
        }
        Command::Validate { file, kind } => validate(&file, kind),
        Command::Run { config, common, horizon } => {
            let v = load_json(&config)?;
            let mut cfg = ExperimentConfig::parse(v)?;
            cfg.resolve(&Overrides {
                seed: common.seed,
                cap: common.cap,
                horizon,
                out: common.out.clone(),
            })?;
            let outcome = run(&cfg, &common)?;
            let mut echo = serde_json::to_value(&cfg).expect("serializable config");
            if let Some(o) = echo.get_mut("output").and_then(Value::as_object_mut) {
                o.remove("dir");
            }
            let op = serde_json::to_value(cfg.operation).expect("serializable operation");
            emit(op.as_str().unwrap_or("run"), &echo, outcome, cfg.output.dir.as_deref(), start)
        }
        Command::Reproduce { name, common, golden, bless } => reproduce(&name, &common, golden, bless),
        Command::ClassifyFinitarity { group, measure, element, horizon, common } => {
            let g = inputs::group_arg(&group)?;
            let mu = inputs::measure_arg(&measure, g.shape())?;
            let elems = elements(&g, &element, "--element")?;
            let horizon = horizon.unwrap_or(DEFAULT_HORIZON);
            let opts = FinitarityOptions {
                horizon,
                cap: common.cap.unwrap_or(treedyn::DEFAULT_ENUMERATION_CAP),
                ..Default::default()
            };
            let outcome = ops::finitarity(&elems, &mu, &opts, !common.no_svg)?;
            let echo = json!({"group": group, "measure": mu.to_spec(), "elements": element, "horizon": horizon, "cap": opts.cap, "deltas": opts.deltas});
            emit("classify-finitarity", &echo, outcome, common.out.as_deref(), start)
        }
        Command::CheckMinimality { group, levels, common } => {
            let g = inputs::group_arg(&group)?;
            let levels = parse_levels(&levels)?;
            let cap = common.cap.unwrap_or(DEFAULT_CAP);
            let outcome = ops::minimality(&g, levels, cap)?;
            let echo = json!({"group": group, "levels": levels, "cap": cap});
            emit("check-minimality", &echo, outcome, common.out.as_deref(), start)
        }
        Command::Koopman { group, measure, element, depth, exact, common } => {
            let g = inputs::group_arg(&group)?;
            let mu = inputs::measure_arg(&measure, g.shape())?;
            let (label, e) = elements(&g, std::slice::from_ref(&element), "--element")?.remove(0);
            let cap = common.cap.unwrap_or(DEFAULT_CAP);
            let outcome = ops::koopman(&label, &e, &mu, depth, cap, exact)?;
            let echo = json!({"group": group, "measure": mu.to_spec(), "element": label, "depth": depth, "exact": exact, "cap": cap});
            emit("koopman", &echo, outcome, common.out.as_deref(), start)
        }
    }
}

fn run(cfg: &ExperimentConfig, common: &Common) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    let cap = p.cap.unwrap_or(DEFAULT_CAP);
    let horizon = p.horizon.unwrap_or(DEFAULT_HORIZON);
    let svg = cfg.output.svg && !common.no_svg;
    let shape = match &cfg.shape {
        Some(s) => TreeShape::from_spec(s).map_err(|e| CliError::config("/shape", e.to_string()))?,
        None => default_shape(),
    };
    let group = match &cfg.group {
        Some(r) => Some(inputs::resolve_group(r, "/group")?),
        None => None,
    };
    let shape = group.as_ref().map(|g| g.shape().clone()).unwrap_or(shape);
    let measure = |spec: &Option<MeasureSpec>, at: &str| {
        inputs::build_measure(spec.as_ref().expect("checked at parse"), &shape, at)
    };
    let element = |w: &Option<String>, at: &str| -> Result<(String, Automorphism), CliError> {
        let g = group.as_ref().expect("checked at parse");
        Ok(elements(g, std::slice::from_ref(w.as_ref().expect("checked at parse")), at)?.remove(0))
    };
    match cfg.operation {
        Operation::Kakutani => ops::kakutani(
            &measure(&cfg.measure, "/measure")?,
            &measure(&cfg.measure_b, "/measure_b")?,
            horizon,
            p.log_threshold.unwrap_or(treedyn::measures::DEFAULT_LOG_THRESHOLD),
            svg,
        ),
        Operation::Minimality => ops::minimality(group.as_ref().unwrap(), p.levels.unwrap_or([1, 5]), cap),
        Operation::Finitarity => {
            let g = group.as_ref().unwrap();
            let words: Vec<String> = cfg.element.iter().cloned().collect();
            let opts = FinitarityOptions {
                horizon,
                cap,
                deltas: p.deltas.clone().unwrap_or_default(),
                ..Default::default()
            };
            ops::finitarity(&elements(g, &words, "/element")?, &measure(&cfg.measure, "/measure")?, &opts, svg)
        }
        Operation::FSets => {
            let g = group.as_ref().unwrap();
            let words: Vec<String> = cfg.element.iter().cloned().collect();
            ops::fsets(&elements(g, &words, "/element")?, &measure(&cfg.measure, "/measure")?, horizon, cap)
        }
        Operation::CocycleCheck => {
            let (lg, g) = element(&cfg.element, "/element")?;
            let (lh, h) = element(&cfg.element_b, "/element_b")?;
            let mu = measure(&cfg.measure, "/measure")?;
            ops::cocycle([&lg, &lh], &g, &h, &mu, p.samples.unwrap_or(100), p.seed.expect("resolved"))
        }
        Operation::Koopman => {
            let (label, g) = element(&cfg.element, "/element")?;
            let mu = measure(&cfg.measure, "/measure")?;
            ops::koopman(&label, &g, &mu, p.depth.unwrap(), cap, p.exact.unwrap_or(false))
        }
        Operation::Corpus => {
            let name = p.name.as_deref().unwrap();
            let e = registry::find(name).ok_or_else(|| CliError::config("/params/name", format!("unknown corpus entry {name:?}")))?;
            (e.run)(&registry::Ctx {
                seed: p.seed.unwrap_or(0),
                cap,
                cache: cache_dir(),
                svg,
            })
        }
    }
}

fn default_golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("golden")
}

fn reproduce(name: &str, common: &Common, golden: Option<PathBuf>, bless: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let entry = registry::find(name).ok_or_else(|| CliError::config("", format!("unknown corpus entry {name:?}")))?;
    let ctx = registry::Ctx {
        seed: common.seed.unwrap_or(0),
        cap: common.cap.unwrap_or(DEFAULT_CAP),
        cache: cache_dir(),
        svg: !common.no_svg,
    };
    let outcome = (entry.run)(&ctx)?;
    let echo = json!({"name": name, "seed": ctx.seed, "cap": ctx.cap});
    let report = render_report("reproduce", &echo, &outcome);
    if let Some(dir) = &common.out {
        write_outputs(dir, &report, &outcome, start.elapsed())?;
    }
    let path = golden.unwrap_or_else(default_golden_dir).join(format!("{name}.json"));
    if bless {
        std::fs::write(&path, &report).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        return negative(&outcome);
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    negative(&outcome)?;
    if expected == report {
        println!("{name}: matches {}", path.display());
        return Ok(());
    }
    let (a, b): (Value, Value) = (
        serde_json::from_str(&expected).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?,
        serde_json::from_str(&report).expect("rendered report is JSON"),
    );
    let mut diffs = Vec::new();
    diff(&a, &b, String::new(), &mut diffs);
    for d in diffs.iter().take(20) {
        eprintln!("  {d}");
    }
    if diffs.len() > 20 {
        eprintln!("  … {} more", diffs.len() - 20);
    }
    Err(CliError::Negative(format!("{name}: {} differences from {}", diffs.len().max(1), path.display())))
}

fn diff(a: &Value, b: &Value, at: String, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                let here = format!("{at}/{k}");
                match (x.get(k), y.get(k)) {
                    (Some(u), Some(v)) => diff(u, v, here, out),
                    (Some(_), None) => out.push(format!("{here}: missing")),
                    (None, Some(_)) => out.push(format!("{here}: unexpected")),
                    (None, None) => {}
                }
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                diff(u, v, format!("{at}/{i}"), out);
            }
        }
        _ if a != b => out.push(format!("{}: expected {a}, got {b}", if at.is_empty() { "/" } else { &at })),
        _ => {}
    }
}

fn validate(file: &str, kind: Kind) -> Result<(), CliError> {
    let v = load_json(file)?;
    let kind = match kind {
        Kind::Auto => {
            let has = |k: &str| v.get(k).is_some();
            if has("operation") {
                Kind::Config
            } else if has("generators") {
                Kind::Group
            } else if has("states") {
                Kind::Machine
            } else if has("perm") {
                Kind::Portrait
            } else if has("kind") {
                Kind::Measure
            } else if has("arities") {
                Kind::Shape
            } else {
                return Err(CliError::config("", "cannot tell what kind of file this is; pass --kind"));
            }
        }
        k => k,
    };
    let canonical = match kind {
        Kind::Config => serde_json::to_value(ExperimentConfig::parse(v)?).unwrap(),
        Kind::Group => {
            let g: GroupJson = from_value(v, "")?;
            serde_json::to_value(inputs::canonical_group(&g, "")?).unwrap()
        }
        Kind::Portrait => {
            let p: PortraitJson = from_value(v, "")?;
            let shape = default_shape();
            let node = inputs::portrait_node(&p, &shape, 0, "")?;
            serde_json::to_value(inputs::canonical_portrait(&node, &shape, 0)).unwrap()
        }
        Kind::Machine => {
            let m: MachineJson = from_value(v, "")?;
            let shape = default_shape();
            let built = inputs::build_machine(&m, &shape, "")?;
            serde_json::to_value(inputs::canonical_machine(&built, m.start, &shape)).unwrap()
        }
        Kind::Measure => {
            let m: MeasureSpec = from_value(v, "")?;
            serde_json::to_value(inputs::build_measure(&m, &default_shape(), "")?.to_spec()).unwrap()
        }
        Kind::Shape => {
            let s: ShapeSpec = from_value(v, "")?;
            let shape = TreeShape::from_spec(&s).map_err(|e| CliError::config("", e.to_string()))?;
            serde_json::to_value(shape.to_spec()).unwrap()
        }
        Kind::Auto => unreachable!(),
    };
    println!("{}", serde_json::to_string_pretty(&canonical).unwrap());
    Ok(())
}
