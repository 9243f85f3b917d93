//! Experiment configuration: a flat `key = value` file with dotted keys.
//!
//! ```text
//! # comments run to the end of the line
//! data.path = molecules.csv
//! train.hidden = 256, 128
//! attack.rmia.gamma = 2
//! ```
//!
//! Unset keys take their defaults. Validation reports every problem at once.
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{LiraFallback, LiraParams, RmiaParams};
use crate::data::{ColumnSchema, SplitFractions};
use crate::game::{MembershipMode, ShadowConfig};
use crate::nnet::TrainConfig;
use crate::synth::SynthSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(k) = &self.key {
            write!(f, "{k}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "{} configuration error(s):\n  {}", self.0.len(), lines.join("\n  "))
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Csv(PathBuf),
    Synth(SynthSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub id_column: String,
    pub label_column: String,
    pub feature_prefix: String,
    pub meta_prefix: String,
    pub fractions: SplitFractions,
    pub train: TrainConfig,
    /// Random-search trials per repetition; 0 keeps `train` as given.
    pub search_trials: usize,
    pub shadow: ShadowConfig,
    pub lira: LiraParams,
    pub rmia: RmiaParams,
    pub p_member: f64,
    pub membership: MembershipMode,
    pub null_target: bool,
    pub repetitions: usize,
    pub fpr_targets: Vec<f64>,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub output_dir: PathBuf,
    pub save_checkpoints: bool,
    pub metadata_key: Option<String>,
}

impl ExperimentConfig {
    pub fn with_data(data: DataSource) -> Self {
        Self {
            data,
            id_column: "id".into(),
            label_column: "label".into(),
            feature_prefix: "f_".into(),
            meta_prefix: "meta_".into(),
            fractions: SplitFractions::default(),
            train: TrainConfig::default(),
            search_trials: 0,
            shadow: ShadowConfig::default(),
            lira: LiraParams::default(),
            rmia: RmiaParams::default(),
            p_member: 0.67,
            membership: MembershipMode::Ratio,
            null_target: false,
            repetitions: 20,
            fpr_targets: vec![0.0, 1e-3],
            seed: 0,
            workers: 0,
            output_dir: PathBuf::from("results"),
            save_checkpoints: false,
            metadata_key: None,
        }
    }

    pub fn schema(&self) -> ColumnSchema {
        ColumnSchema {
            id: self.id_column.clone(),
            label: self.label_column.clone(),
            meta_prefix: self.meta_prefix.clone(),
            feature_prefix: self.feature_prefix.clone(),
        }
    }

    /// Range checks across every component.
    pub fn check(&self) -> Result<(), ConfigErrors> {
        let mut issues = Vec::new();
        let mut push = |key: &str, message: String| {
            issues.push(ConfigIssue {
                line: None,
                key: Some(key.to_string()),
                message,
            })
        };
        if let DataSource::Synth(s) = &self.data {
            if let Err(e) = s.validate() {
                push("synth", e.to_string());
            }
        }
        if let Err(e) = self.fractions.validate() {
            push("split", e.to_string());
        }
        if let Err(e) = self.train.validate() {
            push("train", e.to_string());
        }
        if self.shadow.count < 2 {
            push("shadow.count", format!("{} < 2", self.shadow.count));
        }
        if !(self.shadow.inclusion_rate > 0.0 && self.shadow.inclusion_rate < 1.0) {
            push("shadow.inclusion_rate", format!("{} outside (0, 1)", self.shadow.inclusion_rate));
        }
        if self.shadow.epochs == 0 {
            push("shadow.epochs", "must be positive".into());
        }
        if !(0.0..1.0).contains(&self.shadow.z_fraction) || self.shadow.z_fraction == 0.0 {
            push("shadow.z_fraction", format!("{} outside (0, 1)", self.shadow.z_fraction));
        }
        if self.shadow.z_cap == 0 {
            push("attack.rmia.z_cap", "must be positive".into());
        }
        if !(self.lira.epsilon > 0.0 && self.lira.epsilon < 0.5) {
            push("attack.lira.epsilon", format!("{} outside (0, 0.5)", self.lira.epsilon));
        }
        if !(self.lira.variance_floor > 0.0 && self.lira.variance_floor.is_finite()) {
            push("attack.lira.variance_floor", format!("{} must be positive", self.lira.variance_floor));
        }
        if !(self.rmia.gamma > 0.0 && self.rmia.gamma.is_finite()) {
            push("attack.rmia.gamma", format!("{} must be positive", self.rmia.gamma));
        }
        if !(self.p_member > 0.0 && self.p_member < 1.0) {
            push("game.p_member", format!("{} outside (0, 1)", self.p_member));
        }
        if self.repetitions == 0 {
            push("run.repetitions", "must be at least 1".into());
        }
        if self.fpr_targets.is_empty() {
            push("run.fpr_targets", "at least one target required".into());
        }
        for &t in &self.fpr_targets {
            if !(0.0..=1.0).contains(&t) {
                push("run.fpr_targets", format!("{t} outside [0, 1]"));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(issues))
        }
    }

    /// Normalized `key = value` text; parsing it yields the same config.
    pub fn to_text(&self) -> String {
        let mut kv: Vec<(&str, String)> = Vec::new();
        match &self.data {
            DataSource::Csv(p) => kv.push(("data.path", p.display().to_string())),
            DataSource::Synth(s) => {
                kv.push(("synth.n", s.n.to_string()));
                kv.push(("synth.dim", s.dimension.to_string()));
                kv.push(("synth.positive_fraction", num(s.positive_fraction)));
                kv.push(("synth.separation", num(s.separation)));
                kv.push(("synth.seed", s.seed.to_string()));
            }
        }
        let t = &self.train;
        kv.extend([
            ("data.id_column", self.id_column.clone()),
            ("data.label_column", self.label_column.clone()),
            ("data.feature_prefix", self.feature_prefix.clone()),
            ("data.meta_prefix", self.meta_prefix.clone()),
            ("split.train", num(self.fractions.train)),
            ("split.validation", num(self.fractions.validation)),
            ("split.population", num(self.fractions.population)),
            ("train.hidden", t.hidden_dims.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(", ")),
            ("train.dropout", num(t.dropout_rate)),
            ("train.learning_rate", num(t.learning_rate)),
            ("train.weight_decay", num(t.weight_decay)),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.max_epochs", t.max_epochs.to_string()),
            ("train.patience", t.patience.to_string()),
            ("train.early_stopping", t.early_stopping.to_string()),
            ("train.search_trials", self.search_trials.to_string()),
            ("shadow.count", self.shadow.count.to_string()),
            ("shadow.inclusion_rate", num(self.shadow.inclusion_rate)),
            ("shadow.epochs", self.shadow.epochs.to_string()),
            ("shadow.z_fraction", num(self.shadow.z_fraction)),
            ("attack.lira.epsilon", num(self.lira.epsilon)),
            ("attack.lira.variance_floor", num(self.lira.variance_floor)),
            ("attack.lira.global_variance", self.lira.global_variance.to_string()),
            (
                "attack.lira.fallback",
                match self.lira.fallback {
                    LiraFallback::PooledOut => "pooled-out",
                    LiraFallback::Neutral => "neutral",
                }
                .into(),
            ),
            ("attack.rmia.gamma", num(self.rmia.gamma)),
            ("attack.rmia.z_cap", self.shadow.z_cap.to_string()),
            ("game.p_member", num(self.p_member)),
            (
                "game.membership",
                match self.membership {
                    MembershipMode::Ratio => "ratio",
                    MembershipMode::Bernoulli => "bernoulli",
                }
                .into(),
            ),
            ("game.null_target", self.null_target.to_string()),
            ("run.repetitions", self.repetitions.to_string()),
            ("run.fpr_targets", self.fpr_targets.iter().map(|&f| num(f)).collect::<Vec<_>>().join(", ")),
            ("run.seed", self.seed.to_string()),
            ("run.workers", self.workers.to_string()),
            ("output.dir", self.output_dir.display().to_string()),
            ("output.save_checkpoints", self.save_checkpoints.to_string()),
        ]);
        if let Some(k) = &self.metadata_key {
            kv.push(("eval.metadata_key", k.clone()));
        }
        kv.sort_by(|a, b| a.0.cmp(b.0));
        kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

const SYNTH_KEYS: [&str; 5] = ["synth.n", "synth.dim", "synth.positive_fraction", "synth.separation", "synth.seed"];

/// Splits the text into `(line, key, value)` triples; syntax errors are collected.
fn tokenize(text: &str, issues: &mut Vec<ConfigIssue>) -> BTreeMap<String, (usize, String)> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            issues.push(ConfigIssue {
                line: Some(line),
                key: None,
                message: format!("expected `key = value`, found {content:?}"),
            });
            continue;
        };
        let key = k.trim().to_string();
        let mut value = v.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            issues.push(ConfigIssue {
                line: Some(line),
                key: None,
                message: format!("malformed key {key:?}"),
            });
            continue;
        }
        if let Some((first, _)) = out.insert(key.clone(), (line, value.to_string())) {
            issues.push(ConfigIssue {
                line: Some(line),
                key: Some(key),
                message: format!("duplicate key, first set on line {first}"),
            });
        }
    }
    out
}

struct Reader {
    entries: BTreeMap<String, (usize, String)>,
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn take<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let (line, raw) = self.entries.remove(key)?;
        match parse(&raw) {
            Ok(v) => Some(v),
            Err(message) => {
                self.issues.push(ConfigIssue {
                    line: Some(line),
                    key: Some(key.to_string()),
                    message,
                });
                None
            }
        }
    }

    fn set<T>(&mut self, key: &str, slot: &mut T, parse: impl Fn(&str) -> Result<T, String>) {
        if let Some(v) = self.take(key, parse) {
            *slot = v;
        }
    }
}

fn p_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("expected a number, found {s:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

fn p_usize(s: &str) -> Result<usize, String> {
    s.parse().map_err(|_| format!("expected a non-negative integer, found {s:?}"))
}

fn p_u64(s: &str) -> Result<u64, String> {
    s.parse().map_err(|_| format!("expected a non-negative integer, found {s:?}"))
}

fn p_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, found {s:?}")),
    }
}

fn p_string(s: &str) -> Result<String, String> {
    if s.is_empty() {
        Err("empty value".into())
    } else {
        Ok(s.to_string())
    }
}

fn p_list<T>(item: impl Fn(&str) -> Result<T, String>) -> impl Fn(&str) -> Result<Vec<T>, String> {
    move |s: &str| {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|x| item(x.trim())).collect()
    }
}

fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
    let path = PathBuf::from(p);
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path,
    }
}

/// Parses config text. `base` anchors relative paths.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<ExperimentConfig, ConfigErrors> {
    let mut issues = Vec::new();
    let entries = tokenize(text, &mut issues);
    let mut r = Reader { entries, issues };

    let has_synth = SYNTH_KEYS.iter().any(|k| r.entries.contains_key(*k));
    let data = match (r.take("data.path", p_string), has_synth) {
        (Some(_), true) => {
            r.issues.push(ConfigIssue {
                line: None,
                key: Some("data.path".into()),
                message: "set either data.path or synth.* keys, not both".into(),
            });
            None
        }
        (Some(p), false) => Some(DataSource::Csv(resolve(base, &p))),
        (None, true) => {
            let mut s = SynthSpec::default();
            r.set("synth.n", &mut s.n, p_usize);
            r.set("synth.dim", &mut s.dimension, p_usize);
            r.set("synth.positive_fraction", &mut s.positive_fraction, p_f64);
            r.set("synth.separation", &mut s.separation, p_f64);
            r.set("synth.seed", &mut s.seed, p_u64);
            Some(DataSource::Synth(s))
        }
        (None, false) => {
            r.issues.push(ConfigIssue {
                line: None,
                key: Some("data.path".into()),
                message: "no data source: set data.path or synth.n".into(),
            });
            None
        }
    };
    let mut c = ExperimentConfig::with_data(data.clone().unwrap_or(DataSource::Csv(PathBuf::new())));
    r.set("data.id_column", &mut c.id_column, p_string);
    r.set("data.label_column", &mut c.label_column, p_string);
    r.set("data.feature_prefix", &mut c.feature_prefix, p_string);
    r.set("data.meta_prefix", &mut c.meta_prefix, p_string);
    r.set("split.train", &mut c.fractions.train, p_f64);
    r.set("split.validation", &mut c.fractions.validation, p_f64);
    r.set("split.population", &mut c.fractions.population, p_f64);
    r.set("train.hidden", &mut c.train.hidden_dims, p_list(p_usize));
    r.set("train.dropout", &mut c.train.dropout_rate, p_f64);
    r.set("train.learning_rate", &mut c.train.learning_rate, p_f64);
    r.set("train.weight_decay", &mut c.train.weight_decay, p_f64);
    r.set("train.batch_size", &mut c.train.batch_size, p_usize);
    r.set("train.max_epochs", &mut c.train.max_epochs, p_usize);
    r.set("train.patience", &mut c.train.patience, p_usize);
    r.set("train.early_stopping", &mut c.train.early_stopping, p_bool);
    r.set("train.search_trials", &mut c.search_trials, p_usize);
    r.set("shadow.count", &mut c.shadow.count, p_usize);
    r.set("shadow.inclusion_rate", &mut c.shadow.inclusion_rate, p_f64);
    r.set("shadow.epochs", &mut c.shadow.epochs, p_usize);
    r.set("shadow.z_fraction", &mut c.shadow.z_fraction, p_f64);
    r.set("attack.lira.epsilon", &mut c.lira.epsilon, p_f64);
    r.set("attack.lira.variance_floor", &mut c.lira.variance_floor, p_f64);
    r.set("attack.lira.global_variance", &mut c.lira.global_variance, p_bool);
    r.set("attack.lira.fallback", &mut c.lira.fallback, |s| match s {
        "pooled-out" => Ok(LiraFallback::PooledOut),
        "neutral" => Ok(LiraFallback::Neutral),
        _ => Err(format!("expected pooled-out or neutral, found {s:?}")),
    });
    r.set("attack.rmia.gamma", &mut c.rmia.gamma, p_f64);
    r.set("attack.rmia.z_cap", &mut c.shadow.z_cap, p_usize);
    r.set("game.p_member", &mut c.p_member, p_f64);
    r.set("game.membership", &mut c.membership, |s| match s {
        "ratio" => Ok(MembershipMode::Ratio),
        "bernoulli" => Ok(MembershipMode::Bernoulli),
        _ => Err(format!("expected ratio or bernoulli, found {s:?}")),
    });
    r.set("game.null_target", &mut c.null_target, p_bool);
    r.set("run.repetitions", &mut c.repetitions, p_usize);
    r.set("run.fpr_targets", &mut c.fpr_targets, p_list(p_f64));
    r.set("run.seed", &mut c.seed, p_u64);
    r.set("run.workers", &mut c.workers, p_usize);
    if let Some(dir) = r.take("output.dir", p_string) {
        c.output_dir = resolve(base, &dir);
    } else if let Some(b) = base {
        c.output_dir = b.join(&c.output_dir);
    }
    r.set("output.save_checkpoints", &mut c.save_checkpoints, p_bool);
    c.metadata_key = r.take("eval.metadata_key", p_string);

    let mut issues = r.issues;
    for (key, (line, _)) in r.entries {
        issues.push(ConfigIssue {
            line: Some(line),
            key: Some(key),
            message: "unknown key".into(),
        });
    }
    if data.is_some() {
        if let Err(ConfigErrors(more)) = c.check() {
            issues.extend(more);
        }
    }
    if issues.is_empty() {
        Ok(c)
    } else {
        issues.sort_by_key(|i| i.line.unwrap_or(usize::MAX));
        Err(ConfigErrors(issues))
    }
}

/// Reads, parses and validates a config file.
pub fn validate_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, crate::Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(parse_config(&text, path.parent())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn keys_of(e: &ConfigErrors) -> Vec<String> {
        e.0.iter().filter_map(|i| i.key.clone()).collect()
    }

    #[test]
    fn dataset_path_alone_gives_defaults() {
        let c = parse_config("data.path = bbb.csv\n", Some(Path::new("/work"))).unwrap();
        assert_eq!(c.data, DataSource::Csv(PathBuf::from("/work/bbb.csv")));
        assert_eq!(c.p_member, 0.67);
        assert_eq!(c.shadow.count, 10);
        assert_eq!(c.shadow.epochs, 15);
        assert_eq!(c.shadow.inclusion_rate, 0.5);
        assert_eq!(c.rmia.gamma, 2.0);
        assert_eq!(c.repetitions, 20);
        assert_eq!(c.fpr_targets, vec![0.0, 1e-3]);
        assert_eq!(c.train.hidden_dims, vec![256, 128]);
        assert_eq!((c.fractions.train, c.fractions.validation, c.fractions.population), (0.45, 0.10, 0.45));
        assert_eq!(c.output_dir, PathBuf::from("/work/results"));
    }

    #[test]
    fn every_violation_is_reported() {
        let text = "data.path = x.csv\nattack.rmia.gamma = -1\nsplit.train = 0.5\nsplit.validation = 0.5\nsplit.population = 0.5\nbogus.key = 3\nrun.repetitions = two\nno equals sign\n";
        let e = parse_config(text, None).unwrap_err();
        let keys = keys_of(&e);
        for k in ["attack.rmia.gamma", "split", "bogus.key", "run.repetitions"] {
            assert!(keys.iter().any(|x| x == k), "{k} missing from {e}");
        }
        assert!(e.0.iter().any(|i| i.line == Some(8)));
    }

    #[test]
    fn data_source_rules() {
        assert!(parse_config("", None).is_err());
        assert!(parse_config("data.path = a.csv\nsynth.n = 10\n", None).is_err());
        let c = parse_config("synth.n = 300 # desk size\nsynth.positive_fraction = 0.2\n", None).unwrap();
        match c.data {
            DataSource::Synth(s) => assert_eq!((s.n, s.positive_fraction, s.dimension), (300, 0.2, 16)),
            other => panic!("{other:?}"),
        }
        let e = parse_config("data.path = a.csv\ndata.path = b.csv\n", None).unwrap_err();
        assert!(e.to_string().contains("duplicate"));
    }

    #[test]
    fn normalized_text_round_trips() {
        let text = "synth.n = 500\ntrain.hidden = 64\nrun.fpr_targets = 0, 0.01\neval.metadata_key = size\ngame.membership = bernoulli\nattack.lira.fallback = neutral\n";
        let c = parse_config(text, None).unwrap();
        assert_eq!(parse_config(&c.to_text(), None).unwrap(), c);
    }

    proptest! {
        #[test]
        fn dumps_reparse(
            n in 10usize..5000,
            pf in 0.05f64..0.95,
            gamma in 0.1f64..10.0,
            reps in 1usize..50,
            hidden in prop::collection::vec(1usize..600, 0..4),
            seed in any::<u64>(),
        ) {
            let mut c = ExperimentConfig::with_data(DataSource::Synth(SynthSpec { n, positive_fraction: pf, ..SynthSpec::default() }));
            c.rmia.gamma = gamma;
            c.repetitions = reps;
            c.train.hidden_dims = hidden;
            c.seed = seed;
            prop_assume!(c.check().is_ok());
            prop_assert_eq!(parse_config(&c.to_text(), None).unwrap(), c);
        }
    }
}
