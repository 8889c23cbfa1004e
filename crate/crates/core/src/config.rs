//! Build settings and the flat `key = value` configuration format.
//!
//! Keys match the long command-line flags without the leading dashes
//! (`tc-size`, `mlm-prob`, ...). Lines starting with `#` are comments.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{SpecialTokenSet, Task, DEFAULT_MLM_PROBABILITY, DEFAULT_SEQUENCE_LENGTH};
use crate::sampling::{GroupEquality, TaskSizes, DEFAULT_MAX_HOPS, DEFAULT_MAX_STRATUM_FAILURES};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SHARDS: usize = 4;
pub const DEFAULT_TC_SIZE: usize = 2000;
pub const DEFAULT_EP_SIZE: usize = 1000;
pub const DEFAULT_LP_SIZE: usize = 1000;
pub const DEFAULT_LANGUAGE: &str = "ENG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub language: String,
    pub seed: u64,
    pub sizes: TaskSizes,
    pub disabled: BTreeSet<Task>,
    pub max_hops: usize,
    pub mlm_probability: f64,
    pub sequence_length: usize,
    pub shards: usize,
    pub tokens: SpecialTokenSet,
    pub group_equality: GroupEquality,
    pub max_stratum_failures: usize,
    pub mask_all_relations: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            language: DEFAULT_LANGUAGE.into(),
            seed: DEFAULT_SEED,
            sizes: TaskSizes {
                tc: DEFAULT_TC_SIZE,
                ep: DEFAULT_EP_SIZE,
                lp: DEFAULT_LP_SIZE,
            },
            disabled: BTreeSet::new(),
            max_hops: DEFAULT_MAX_HOPS,
            mlm_probability: DEFAULT_MLM_PROBABILITY,
            sequence_length: DEFAULT_SEQUENCE_LENGTH,
            shards: DEFAULT_SHARDS,
            tokens: SpecialTokenSet::default(),
            group_equality: GroupEquality::Canonical,
            max_stratum_failures: DEFAULT_MAX_STRATUM_FAILURES,
            mask_all_relations: true,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

impl BuildConfig {
    pub fn enabled(&self, task: Task) -> bool {
        !self.disabled.contains(&task)
    }

    /// Requested sizes with disabled tasks zeroed.
    pub fn effective_sizes(&self) -> TaskSizes {
        let size = |t: Task, n: usize| if self.enabled(t) { n } else { 0 };
        TaskSizes {
            tc: size(Task::Tc, self.sizes.tc),
            ep: size(Task::Ep, self.sizes.ep),
            lp: size(Task::Lp, self.sizes.lp),
        }
    }

    /// Applies one setting by its flag name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lang" | "language" => self.language = value.trim().to_string(),
            "seed" => self.seed = parse(key, value)?,
            "tc-size" => self.sizes.tc = parse(key, value)?,
            "ep-size" => self.sizes.ep = parse(key, value)?,
            "lp-size" => self.sizes.lp = parse(key, value)?,
            "max-hops" => self.max_hops = parse(key, value)?,
            "mlm-prob" => self.mlm_probability = parse(key, value)?,
            "seq-len" => self.sequence_length = parse(key, value)?,
            "shards" => self.shards = parse(key, value)?,
            "max-stratum-failures" => self.max_stratum_failures = parse(key, value)?,
            "mask-all-relations" => self.mask_all_relations = parse(key, value)?,
            "group-equality" => {
                self.group_equality = match value.trim() {
                    "canonical" => GroupEquality::Canonical,
                    "intersection" => GroupEquality::Intersection,
                    other => return Err(Error::Config(format!("{key}: unknown mode `{other}`"))),
                }
            }
            "disable-task" => {
                for t in value.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                    self.disabled.insert(t.parse()?);
                }
            }
            _ => return Err(Error::Config(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.language.is_empty() {
            return Err(Error::Config("language must not be empty".into()));
        }
        if self.enabled(Task::Lp) && self.sizes.lp > 0 && self.max_hops < 2 {
            return Err(Error::Config(format!(
                "max-hops must be at least 2, got {}",
                self.max_hops
            )));
        }
        if !(0.0..=1.0).contains(&self.mlm_probability) {
            return Err(Error::Config(format!(
                "mlm-prob must lie in [0, 1], got {}",
                self.mlm_probability
            )));
        }
        if self.sequence_length < 5 {
            return Err(Error::Config(format!(
                "seq-len must be at least 5, got {}",
                self.sequence_length
            )));
        }
        if self.shards == 0 {
            return Err(Error::Config("shards must be at least 1".into()));
        }
        self.tokens.validate()
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`", i + 1)));
        };
        let key = k.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_key_values(&text)
}
