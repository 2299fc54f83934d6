//! Declarative run configuration read from TOML, with `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentConfig, ContaminationConfig, ContinuousMode, CurveSampler};
use crate::dataset::{
    gen_synthetic_with, load_dataset, Layout, SeriesFrame, SplitSpec, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::eval::{GridSettings, MetricSpace, Scenario, TestCondition, Variant};
use crate::model::ModelHyper;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// CSV file or directory; the synthetic generator is used when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub layout: Layout,
    pub synthetic: SyntheticSpec,
    pub split: SplitSpec,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            path: None,
            layout: Layout::Auto,
            synthetic: SyntheticSpec::default(),
            split: SplitSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub jitter_std: f64,
    pub symmetric_sign: bool,
    pub test_fraction: f64,
    pub sampler: CurveSampler,
    /// Training-set corruption used by `contaminate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contamination: Option<ContaminationConfig>,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let base = AugmentConfig::default();
        Self {
            jitter_std: base.jitter_std,
            symmetric_sign: base.symmetric_sign,
            test_fraction: base.test_fraction,
            sampler: base.sampler,
            contamination: None,
        }
    }
}

impl AugmentSection {
    pub fn config(&self) -> AugmentConfig {
        AugmentConfig {
            jitter_std: self.jitter_std,
            symmetric_sign: self.symmetric_sign,
            test_fraction: self.test_fraction,
            sampler: self.sampler.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Normalized for synthetic data and denormalized for CSV data when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric_space: Option<MetricSpace>,
    /// Keep every k-th training window in grid runs.
    pub train_stride: usize,
    pub seeds: Vec<u64>,
    pub conditions: Vec<TestCondition>,
    /// The first variant is the baseline of every comparison.
    pub variants: Vec<Variant>,
    /// Extra contaminated training regimes; clean training is always included.
    pub train_contamination: Vec<ContaminationConfig>,
    pub sweep_lambdas: Vec<f64>,
    pub sweep_conditions: Vec<TestCondition>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let io = TestCondition::Continuous(ContinuousMode::InputOnly);
        let oo = TestCondition::Continuous(ContinuousMode::InputOutput);
        Self {
            metric_space: None,
            train_stride: 1,
            seeds: vec![0, 1, 2],
            conditions: vec![TestCondition::Clean, io, oo],
            variants: vec![Variant::new("base", 0.0), Variant::new("co-tsfa", 0.1)],
            train_contamination: Vec::new(),
            sweep_lambdas: vec![0.001, 0.01, 0.1, 0.5, 1.0, 2.0],
            sweep_conditions: vec![io, oo],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub model: ModelHyper,
    pub train: TrainConfig,
    pub augment: AugmentSection,
    pub eval: EvalSection,
}

/// Keys that are unset by default and therefore absent from the defaults table.
pub const OPTIONAL_KEYS: [(&str, &str); 6] = [
    ("dataset.path", "unset (synthetic data)"),
    ("model.latent_len", "unset (= dataset.split.window)"),
    (
        "eval.metric_space",
        "unset (normalized | denormalized by data source)",
    ),
    (
        "augment.contamination.regime",
        "unset (input_only | input_output | pointwise)",
    ),
    ("augment.contamination.fraction", "unset"),
    (
        "augment.contamination.pointwise",
        "unset ({ kind, ratio, scale })",
    ),
];

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read `path` (defaults when `None`), then apply `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let table: toml::Table = toml::from_str(&text)
                    .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?;
                toml::Value::Table(table)
            }
            None => toml::Value::Table(toml::Table::new()),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.split.validate()?;
        if self.dataset.path.is_none() {
            self.dataset.synthetic.validate()?;
        }
        if self.model.latent_dim == 0 || self.model.hidden == 0 {
            return Err(Error::Validation(
                "model.latent_dim and model.hidden must be >= 1".into(),
            ));
        }
        if let Some(tp) = self.model.latent_len {
            if tp == 0 || tp > self.dataset.split.window {
                return Err(Error::Validation(format!(
                    "model.latent_len must be in 1..={}, got {tp}",
                    self.dataset.split.window
                )));
            }
        }
        self.train.validate()?;
        self.augment.config().validate()?;
        if let Some(c) = &self.augment.contamination {
            c.validate()?;
        }
        let e = &self.eval;
        if e.train_stride == 0 {
            return Err(Error::Validation("eval.train_stride must be >= 1".into()));
        }
        if e.seeds.is_empty() || e.variants.is_empty() || e.conditions.is_empty() {
            return Err(Error::Validation(
                "eval needs seeds, variants and conditions".into(),
            ));
        }
        if let Some(v) = e
            .variants
            .iter()
            .find(|v| !(v.lambda >= 0.0 && v.lambda.is_finite()))
        {
            return Err(Error::Validation(format!(
                "variant {} needs lambda >= 0",
                v.name
            )));
        }
        if e.sweep_lambdas
            .iter()
            .any(|l| !(*l >= 0.0 && l.is_finite()))
        {
            return Err(Error::Validation("eval.sweep_lambdas must be >= 0".into()));
        }
        for c in &e.train_contamination {
            c.validate()?;
        }
        Ok(())
    }

    /// Frames from `override_path`, else `dataset.path`, else the generator.
    pub fn load_frames(&self, override_path: Option<&Path>) -> Result<Vec<SeriesFrame>> {
        match override_path.or(self.dataset.path.as_deref()) {
            Some(p) => load_dataset(p, self.dataset.layout),
            None => Ok(gen_synthetic_with(&self.dataset.synthetic)?
                .into_iter()
                .map(|(f, _)| f)
                .collect()),
        }
    }

    pub fn metric_space(&self, synthetic: bool) -> MetricSpace {
        self.eval.metric_space.unwrap_or(if synthetic {
            MetricSpace::Normalized
        } else {
            MetricSpace::Denormalized
        })
    }

    pub fn grid_settings(&self, synthetic: bool) -> GridSettings {
        GridSettings {
            model: self.model.clone(),
            train: self.train.clone(),
            augment: self.augment.config(),
            metric_space: self.metric_space(synthetic),
            train_stride: self.eval.train_stride,
        }
    }

    /// Every training regime crossed with every test condition.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut regimes: Vec<Option<ContaminationConfig>> = vec![None];
        regimes.extend(self.eval.train_contamination.iter().cloned().map(Some));
        let mut out = Vec::new();
        for r in regimes {
            for c in &self.eval.conditions {
                out.push(Scenario {
                    train_contamination: r.clone(),
                    test_condition: *c,
                    seeds: self.eval.seeds.clone(),
                });
            }
        }
        out
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Set a dotted key, e.g. `train.lr0=0.01` or `eval.seeds=[0,1]`.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Validation(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Validation(format!("bad override key `{key}`")));
    }
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| {
            Error::Validation(format!("override `{key}`: `{p}` is not a section"))
        })?;
        node = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Validation(format!("override `{key}` does not name a field")))?;
    table.insert(parts[parts.len() - 1].to_string(), parse_scalar(raw.trim()));
    Ok(())
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Every config key with its default, sorted by key.
pub fn config_keys() -> Vec<(String, String)> {
    let value = toml::Value::try_from(RunConfig::default()).expect("default config serializes");
    let mut out = Vec::new();
    flatten("", &value, &mut out);
    out.extend(
        OPTIONAL_KEYS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string())),
    );
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml_str("").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("[train]\nlearning_rate = 0.1\n").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("learning_rate"), "{err}");
        assert!(RunConfig::load(None, &["train.bogus=1".into()]).is_err());
    }

    #[test]
    fn overrides_win_and_parse_types() {
        let cfg = RunConfig::load(
            None,
            &[
                "train.lr0=0.01".into(),
                "eval.seeds=[4, 5]".into(),
                "dataset.layout=wide".into(),
                "eval.conditions=[\"clean\", \"pointwise:missing:0.3\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.train.lr0, 0.01);
        assert_eq!(cfg.eval.seeds, vec![4, 5]);
        assert_eq!(cfg.dataset.layout, Layout::Wide);
        assert_eq!(cfg.eval.conditions[1].to_string(), "pointwise:missing:0.3");
        assert!(RunConfig::load(None, &["train.lr0".into()]).is_err());
    }

    #[test]
    fn cross_field_constraints_are_checked() {
        assert!(RunConfig::load(None, &["train.batch_size=1".into()]).is_err());
        assert!(RunConfig::load(
            None,
            &["train.batch_size=1".into(), "train.lambda_align=0".into()]
        )
        .is_ok());
        assert!(RunConfig::load(None, &["model.latent_len=17".into()]).is_err());
        assert!(RunConfig::load(None, &["dataset.synthetic.n_series=0".into()]).is_err());
    }

    #[test]
    fn key_listing_covers_every_section() {
        let keys = config_keys();
        for k in [
            "dataset.split.window",
            "model.latent_dim",
            "train.lr0",
            "augment.sampler.b",
            "eval.seeds",
        ] {
            assert!(keys.iter().any(|(key, _)| key == k), "missing {k}");
        }
        let lr = keys.iter().find(|(k, _)| k == "train.lr0").unwrap();
        assert_eq!(lr.1, "0.001");
    }
}
