use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use treedyn::measures::{MeasureSpec, DEFAULT_LOG_THRESHOLD};
use treedyn::tree::ShapeSpec;

use crate::inputs::{check_measure, from_value, GroupRef};
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_CAP: usize = 1 << 16;
pub const DEFAULT_HORIZON: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operation {
    Kakutani,
    Minimality,
    Finitarity,
    FSets,
    CocycleCheck,
    Koopman,
    Corpus,
}

impl Operation {
    pub fn samples(self) -> bool {
        matches!(self, Operation::CocycleCheck)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub svg: bool,
}

fn yes() -> bool {
    true
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: None, svg: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeSpec>,
    pub operation: Operation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure_b: Option<MeasureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_b: Option<String>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output: Output,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub cap: Option<usize>,
    pub horizon: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(v: Value) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = from_value(v, "")?;
        if cfg.format_version != FORMAT_VERSION {
            return Err(CliError::config(
                "/format_version",
                format!("unsupported version {}, expected {FORMAT_VERSION}", cfg.format_version),
            ));
        }
        if let Some(m) = &cfg.measure {
            check_measure(m, "/measure")?;
        }
        if let Some(m) = &cfg.measure_b {
            check_measure(m, "/measure_b")?;
        }
        let need = |present: bool, at: &str| {
            if present {
                Ok(())
            } else {
                Err(CliError::config(at, format!("required by operation {:?}", cfg.operation)))
            }
        };
        use Operation::*;
        match cfg.operation {
            Kakutani => {
                need(cfg.measure.is_some(), "/measure")?;
                need(cfg.measure_b.is_some(), "/measure_b")?;
            }
            Minimality => need(cfg.group.is_some(), "/group")?,
            Finitarity | FSets => {
                need(cfg.group.is_some(), "/group")?;
                need(cfg.measure.is_some(), "/measure")?;
            }
            CocycleCheck => {
                need(cfg.group.is_some(), "/group")?;
                need(cfg.measure.is_some(), "/measure")?;
                need(cfg.element.is_some(), "/element")?;
                need(cfg.element_b.is_some(), "/element_b")?;
            }
            Koopman => {
                need(cfg.group.is_some(), "/group")?;
                need(cfg.measure.is_some(), "/measure")?;
                need(cfg.element.is_some(), "/element")?;
                need(cfg.params.depth.is_some(), "/params/depth")?;
            }
            Corpus => need(cfg.params.name.is_some(), "/params/name")?,
        }
        if let Some([lo, hi]) = cfg.params.levels {
            if lo == 0 || lo > hi {
                return Err(CliError::config("/params/levels", "expected 1 ≤ lo ≤ hi"));
            }
        }
        Ok(cfg)
    }

    /// Applies command-line values, then fills every cap, horizon and
    /// threshold so the echoed config is complete.
    pub fn resolve(&mut self, o: &Overrides) -> Result<(), CliError> {
        let p = &mut self.params;
        p.seed = o.seed.or(p.seed);
        p.cap = Some(o.cap.or(p.cap).unwrap_or(DEFAULT_CAP));
        p.horizon = Some(o.horizon.or(p.horizon).unwrap_or(DEFAULT_HORIZON));
        if o.out.is_some() {
            self.output.dir = o.out.clone();
        }
        use Operation::*;
        match self.operation {
            Kakutani => {
                p.log_threshold.get_or_insert(DEFAULT_LOG_THRESHOLD);
            }
            Minimality => {
                p.levels.get_or_insert([1, 5]);
            }
            Finitarity => {
                p.deltas.get_or_insert_with(|| treedyn::cocycle::DEFAULT_DELTA_GRID.to_vec());
            }
            CocycleCheck => {
                p.samples.get_or_insert(100);
            }
            Koopman => {
                p.exact.get_or_insert(false);
            }
            FSets | Corpus => {}
        }
        if self.operation.samples() && p.seed.is_none() {
            return Err(CliError::config("/params/seed", "a seed is required for sampling operations"));
        }
        Ok(())
    }
}
