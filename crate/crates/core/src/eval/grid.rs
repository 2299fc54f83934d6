use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::condition::{apply_condition, TestCondition};
use super::metrics::{delta_improvement, paired_t_test, MetricAccumulator, Metrics, TTest};
use crate::augment::{contaminate_training_set, AugmentConfig, ContaminationConfig};
use crate::dataset::{PreparedDataset, WindowPair};
use crate::error::{Error, Result};
use crate::model::{predict_batch, ModelHyper, ModelParams};
use crate::numeric::Tensor;
use crate::train::{train_model, TrainConfig, TrainLog};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "COTSFA_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpace {
    Normalized,
    #[default]
    Denormalized,
}

/// One trained model family, identified by its alignment weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub lambda: f64,
}

impl Variant {
    pub fn new(name: impl Into<String>, lambda: f64) -> Self {
        Self {
            name: name.into(),
            lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub train_contamination: Option<ContaminationConfig>,
    pub test_condition: TestCondition,
    pub seeds: Vec<u64>,
}

impl Scenario {
    pub fn clean_train(test_condition: TestCondition, seeds: Vec<u64>) -> Self {
        Self {
            train_contamination: None,
            test_condition,
            seeds,
        }
    }

    pub fn train_label(&self) -> String {
        self.train_contamination
            .as_ref()
            .map_or_else(|| "clean".to_string(), |c| c.label())
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.train_label(), self.test_condition)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Validation(format!(
                "scenario {} has no seeds",
                self.label()
            )));
        }
        if let Some(c) = &self.train_contamination {
            c.validate()?;
        }
        if let TestCondition::Pointwise(p) = &self.test_condition {
            p.validate()?;
        }
        Ok(())
    }
}

/// Everything a grid cell needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub model: ModelHyper,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub metric_space: MetricSpace,
    /// Keep every k-th training window.
    pub train_stride: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            model: ModelHyper::default(),
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            metric_space: MetricSpace::Denormalized,
            train_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub variant: String,
    pub scenario: String,
    pub seed: u64,
    pub metrics: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: String,
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub mae: Summary,
    pub mse: Summary,
    pub smape: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub baseline: String,
    pub variant: String,
    pub delta_mae: Option<f64>,
    pub delta_mse: Option<f64>,
    pub delta_smape: Option<f64>,
    /// Paired over seeds common to both variants; absent with fewer than two.
    pub t_mae: Option<TTest>,
    pub t_mse: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub baseline: String,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
    pub comparisons: Vec<Comparison>,
    /// Distinct models trained; cells sharing training data reuse a model.
    pub training_runs: usize,
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

impl ScenarioReport {
    /// Aggregate cells per `(variant, scenario)` and compare every variant
    /// against `baseline`.
    pub fn from_cells(cells: Vec<CellResult>, baseline: &str, training_runs: usize) -> Self {
        let variants = first_seen(cells.iter().map(|c| c.variant.as_str()));
        let scenarios = first_seen(cells.iter().map(|c| c.scenario.as_str()));
        let ok = |v: &str, s: &str| -> Vec<(u64, Metrics)> {
            cells
                .iter()
                .filter(|c| c.variant == v && c.scenario == s)
                .filter_map(|c| c.metrics.map(|m| (c.seed, m)))
                .collect()
        };
        let mut aggregates = Vec::new();
        for s in &scenarios {
            for v in &variants {
                let rows = ok(v, s);
                let mae: Vec<f64> = rows.iter().map(|(_, m)| m.mae).collect();
                let mse: Vec<f64> = rows.iter().map(|(_, m)| m.mse).collect();
                let smape: Vec<f64> = rows.iter().filter_map(|(_, m)| m.smape).collect();
                if let (Some(mae), Some(mse)) = (Summary::of(&mae), Summary::of(&mse)) {
                    aggregates.push(Aggregate {
                        variant: v.clone(),
                        scenario: s.clone(),
                        seeds: rows.iter().map(|(seed, _)| *seed).collect(),
                        mae,
                        mse,
                        smape: if smape.len() == rows.len() {
                            Summary::of(&smape)
                        } else {
                            None
                        },
                    });
                }
            }
        }
        let find = |v: &str, s: &str| {
            aggregates
                .iter()
                .find(|a| a.variant == v && a.scenario == s)
        };
        let mut comparisons = Vec::new();
        for s in &scenarios {
            let Some(base) = find(baseline, s) else {
                continue;
            };
            for v in variants.iter().filter(|v| *v != baseline) {
                let Some(co) = find(v, s) else { continue };
                let base_rows = ok(baseline, s);
                let co_rows = ok(v, s);
                let paired: Vec<(Metrics, Metrics)> = base_rows
                    .iter()
                    .filter_map(|(seed, b)| {
                        co_rows
                            .iter()
                            .find(|(s2, _)| s2 == seed)
                            .map(|(_, c)| (*b, *c))
                    })
                    .collect();
                let t = |f: fn(&Metrics) -> f64| -> Option<TTest> {
                    let a: Vec<f64> = paired.iter().map(|(_, c)| f(c)).collect();
                    let b: Vec<f64> = paired.iter().map(|(b, _)| f(b)).collect();
                    paired_t_test(&a, &b).ok()
                };
                comparisons.push(Comparison {
                    scenario: s.clone(),
                    baseline: baseline.to_string(),
                    variant: v.clone(),
                    delta_mae: delta_improvement(base.mae.mean, co.mae.mean),
                    delta_mse: delta_improvement(base.mse.mean, co.mse.mean),
                    delta_smape: match (base.smape, co.smape) {
                        (Some(b), Some(c)) => delta_improvement(b.mean, c.mean),
                        _ => None,
                    },
                    t_mae: t(|m| m.mae),
                    t_mse: t(|m| m.mse),
                });
            }
        }
        Self {
            baseline: baseline.to_string(),
            cells,
            aggregates,
            comparisons,
            training_runs,
        }
    }

    pub fn aggregate(&self, variant: &str, scenario: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.variant == variant && a.scenario == scenario)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.error.is_some())
    }

    /// Flat rows `variant,scenario,seed,mae,mse,smape` for successful cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,scenario,seed,mae,mse,smape\n");
        for c in &self.cells {
            if let Some(m) = c.metrics {
                let smape = m.smape.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.variant, c.scenario, c.seed, m.mae, m.mse, smape
                );
            }
        }
        out
    }

    /// Rebuild cells from [`ScenarioReport::to_csv`] output.
    pub fn cells_from_csv(text: &str) -> Result<Vec<CellResult>> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>()
            != ["variant", "scenario", "seed", "mae", "mse", "smape"]
        {
            return Err(Error::Parse {
                line: 1,
                msg: format!(
                    "unexpected report header {:?}",
                    headers.iter().collect::<Vec<_>>()
                ),
            });
        }
        let mut cells = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad number `{}`", &rec[i]),
                })
            };
            cells.push(CellResult {
                variant: rec[0].to_string(),
                scenario: rec[1].to_string(),
                seed: rec[2].parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad seed `{}`", &rec[2]),
                })?,
                metrics: Some(Metrics {
                    mae: num(3)?,
                    mse: num(4)?,
                    smape: if rec[5].is_empty() {
                        None
                    } else {
                        Some(num(5)?)
                    },
                }),
                error: None,
            });
        }
        Ok(cells)
    }

    /// Base / +variant / Δ table per scenario.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let fmt_delta = |d: Option<f64>, t: Option<TTest>| -> String {
            match d {
                Some(d) => {
                    let mark = t.map(|t| t.tier.marker()).unwrap_or("");
                    format!("{d:+.2}{mark}")
                }
                None => "n/a".into(),
            }
        };
        for v in first_seen(self.comparisons.iter().map(|c| c.variant.as_str())) {
            let _ = writeln!(out, "### {} vs {}\n", v, self.baseline);
            out.push_str(
                "| Scenario | Base MAE | +Co MAE | Δ MAE (%) | Base MSE | +Co MSE | Δ MSE (%) |\n",
            );
            out.push_str("|---|---|---|---|---|---|---|\n");
            for c in self.comparisons.iter().filter(|c| c.variant == v) {
                let (Some(b), Some(o)) = (
                    self.aggregate(&self.baseline, &c.scenario),
                    self.aggregate(&v, &c.scenario),
                ) else {
                    continue;
                };
                let _ = writeln!(
                    out,
                    "| {} | {:.4} | {:.4} | {} | {:.4} | {:.4} | {} |",
                    c.scenario,
                    b.mae.mean,
                    o.mae.mean,
                    fmt_delta(c.delta_mae, c.t_mae),
                    b.mse.mean,
                    o.mse.mean,
                    fmt_delta(c.delta_mse, c.t_mse),
                );
            }
            out.push('\n');
        }
        out.push_str("Δ < 0 means lower error than the baseline. ✓✓: p < 0.01, ✓: p < 0.05 (paired t-test over seeds).\n");
        out
    }

    pub fn write_all(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: String, body: String| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        write(format!("{stem}.json"), serde_json::to_string_pretty(self)?)?;
        write(format!("{stem}.csv"), self.to_csv())?;
        write(format!("{stem}.md"), self.to_markdown())
    }
}

/// Stable 64-bit seed derived from a base seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Run `f` on a pool capped by [`THREADS_ENV`] when set.
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| {
            Error::Validation(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))
        })?;
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Forecast `pairs` and pool metrics over every entry.
pub fn evaluate_pairs(
    params: &ModelParams,
    pairs: &[WindowPair],
    dataset: &PreparedDataset,
    space: MetricSpace,
) -> Result<Metrics> {
    let xs: Vec<&Tensor> = pairs.iter().map(|p| &p.x).collect();
    let preds = predict_batch(params, &xs)?;
    let stats = dataset.stats_map();
    let mut acc = MetricAccumulator::default();
    for (pred, pair) in preds.iter().zip(pairs) {
        match space {
            MetricSpace::Normalized => acc.add(pred, &pair.y)?,
            MetricSpace::Denormalized => {
                let s = stats.get(pair.origin.series_id.as_str()).ok_or_else(|| {
                    Error::Data(format!(
                        "no normalization stats for {}",
                        pair.origin.series_id
                    ))
                })?;
                let (mut p, mut y) = (pred.data().to_vec(), pair.y.data().to_vec());
                s.denormalize_rows(&mut p);
                s.denormalize_rows(&mut y);
                acc.add_slices(&p, &y);
            }
        }
    }
    acc.finish()
}

/// Test windows under `condition`; the realization depends only on the
/// condition and `seed`, never on the model being evaluated.
pub fn test_set(
    dataset: &PreparedDataset,
    condition: &TestCondition,
    augment: &AugmentConfig,
    seed: u64,
) -> Result<Vec<WindowPair>> {
    apply_condition(
        &dataset.splits.test,
        condition,
        augment,
        augment.test_fraction,
        derive_seed(seed, &format!("test:{condition}")),
    )
}

/// Evaluate already-trained models under each condition and seed. Scenario
/// labels are the condition names.
pub fn evaluate_models(
    dataset: &PreparedDataset,
    models: &[(String, ModelParams)],
    conditions: &[TestCondition],
    seeds: &[u64],
    augment: &AugmentConfig,
    space: MetricSpace,
) -> Result<ScenarioReport> {
    if models.is_empty() || conditions.is_empty() || seeds.is_empty() {
        return Err(Error::Validation(
            "evaluation needs models, conditions and seeds".into(),
        ));
    }
    let mut cells = Vec::new();
    for c in conditions {
        for &seed in seeds {
            let test = test_set(dataset, c, augment, seed)?;
            for (name, params) in models {
                let m = evaluate_pairs(params, &test, dataset, space)?;
                cells.push(CellResult {
                    variant: name.clone(),
                    scenario: c.to_string(),
                    seed,
                    metrics: Some(m),
                    error: None,
                });
            }
        }
    }
    Ok(ScenarioReport::from_cells(cells, &models[0].0, 0))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct TrainKey {
    variant: usize,
    contamination: String,
    seed: u64,
}

fn train_one(
    dataset: &PreparedDataset,
    train: &[WindowPair],
    variant: &Variant,
    contamination: Option<&ContaminationConfig>,
    seed: u64,
    settings: &GridSettings,
) -> Result<(ModelParams, TrainLog)> {
    let contaminated;
    let train = match contamination {
        Some(c) => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("contaminate:{}", c.label())));
            contaminated = contaminate_training_set(train, c, &settings.augment, &mut rng)?.0;
            &contaminated[..]
        }
        None => train,
    };
    let spec = &dataset.spec;
    let model = settings
        .model
        .config(spec.window, spec.horizon, dataset.channels(), seed);
    let cfg = TrainConfig {
        lambda_align: variant.lambda,
        seed,
        ..settings.train.clone()
    };
    let val = if cfg.early_stopping {
        &dataset.splits.val[..]
    } else {
        &[]
    };
    train_model(train, val, &model, &cfg, &settings.augment)
}

/// The log of one distinct training run inside a grid.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub variant: String,
    pub train_label: String,
    pub seed: u64,
    pub log: TrainLog,
}

/// Train every `(variant, training set, seed)` once, evaluate it under each
/// scenario's test condition, and aggregate. Test sets are shared across
/// variants so comparisons are paired.
pub fn run_scenario_grid(
    dataset: &PreparedDataset,
    scenarios: &[Scenario],
    variants: &[Variant],
    settings: &GridSettings,
) -> Result<ScenarioReport> {
    run_scenario_grid_logged(dataset, scenarios, variants, settings).map(|(r, _)| r)
}

/// [`run_scenario_grid`] plus the log of every successful training run.
pub fn run_scenario_grid_logged(
    dataset: &PreparedDataset,
    scenarios: &[Scenario],
    variants: &[Variant],
    settings: &GridSettings,
) -> Result<(ScenarioReport, Vec<TrainingRun>)> {
    if variants.is_empty() || scenarios.is_empty() {
        return Err(Error::Validation(
            "grid needs at least one variant and one scenario".into(),
        ));
    }
    if let Some(v) = variants.iter().find(|v| !(v.lambda >= 0.0)) {
        return Err(Error::Validation(format!(
            "variant {} has negative lambda",
            v.name
        )));
    }
    for s in scenarios {
        s.validate()?;
    }
    settings.train.validate()?;
    settings.augment.validate()?;
    if settings.train_stride == 0 {
        return Err(Error::Validation("train_stride must be >= 1".into()));
    }
    if dataset.splits.train.is_empty() || dataset.splits.test.is_empty() {
        return Err(Error::Data("grid needs training and test windows".into()));
    }
    let train: Vec<WindowPair> = dataset
        .splits
        .train
        .iter()
        .step_by(settings.train_stride)
        .cloned()
        .collect();

    let mut keys: Vec<(TrainKey, Option<&ContaminationConfig>)> = Vec::new();
    for s in scenarios {
        for (vi, _) in variants.iter().enumerate() {
            for &seed in &s.seeds {
                let key = TrainKey {
                    variant: vi,
                    contamination: s.train_label(),
                    seed,
                };
                if !keys.iter().any(|(k, _)| *k == key) {
                    keys.push((key, s.train_contamination.as_ref()));
                }
            }
        }
    }
    let trained: Vec<Result<(ModelParams, TrainLog)>> = with_thread_pool(|| {
        keys.par_iter()
            .map(|(k, c)| {
                log::info!(
                    "training {} on {} (seed {})",
                    variants[k.variant].name,
                    k.contamination,
                    k.seed
                );
                train_one(dataset, &train, &variants[k.variant], *c, k.seed, settings)
            })
            .collect()
    })?;
    let mut runs = Vec::new();
    let mut models: HashMap<TrainKey, std::result::Result<ModelParams, String>> = HashMap::new();
    for ((key, _), outcome) in keys.into_iter().zip(trained) {
        let outcome = outcome.map(|(params, log)| {
            runs.push(TrainingRun {
                variant: variants[key.variant].name.clone(),
                train_label: key.contamination.clone(),
                seed: key.seed,
                log,
            });
            params
        });
        models.insert(key, outcome.map_err(|e| e.to_string()));
    }

    let mut cells = Vec::new();
    for s in scenarios {
        let label = s.label();
        let tests: Vec<Result<Vec<WindowPair>>> = s
            .seeds
            .iter()
            .map(|&seed| test_set(dataset, &s.test_condition, &settings.augment, seed))
            .collect();
        for (vi, v) in variants.iter().enumerate() {
            for (&seed, test) in s.seeds.iter().zip(&tests) {
                let key = TrainKey {
                    variant: vi,
                    contamination: s.train_label(),
                    seed,
                };
                let outcome = match (&models[&key], test) {
                    (Ok(params), Ok(test)) => {
                        evaluate_pairs(params, test, dataset, settings.metric_space)
                            .map_err(|e| e.to_string())
                    }
                    (Err(e), _) => Err(format!("training failed: {e}")),
                    (_, Err(e)) => Err(format!("test injection failed: {e}")),
                };
                if let Err(e) = &outcome {
                    log::warn!("cell {}/{label}/seed {seed} failed: {e}", v.name);
                }
                cells.push(CellResult {
                    variant: v.name.clone(),
                    scenario: label.clone(),
                    seed,
                    metrics: outcome.as_ref().ok().copied(),
                    error: outcome.err(),
                });
            }
        }
    }
    Ok((
        ScenarioReport::from_cells(cells, &variants[0].name, models.len()),
        runs,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub condition: String,
    pub seed: u64,
    pub mae: f64,
    pub mse: f64,
}

/// One model per `(λ, seed)` trained on clean data, evaluated under each
/// condition. Rows are sorted by λ, then condition order, then seed.
pub fn lambda_sweep(
    dataset: &PreparedDataset,
    lambdas: &[f64],
    conditions: &[TestCondition],
    seeds: &[u64],
    settings: &GridSettings,
) -> Result<Vec<SweepRow>> {
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::Validation(format!(
            "sweep lambda must be >= 0, got {l}"
        )));
    }
    let variants: Vec<Variant> = lambdas
        .iter()
        .map(|l| Variant::new(format!("lambda={l}"), *l))
        .collect();
    let scenarios: Vec<Scenario> = conditions
        .iter()
        .map(|c| Scenario::clean_train(*c, seeds.to_vec()))
        .collect();
    let report = run_scenario_grid(dataset, &scenarios, &variants, settings)?;
    if let Some(f) = report.failures().next() {
        return Err(Error::Training {
            step: 0,
            msg: format!(
                "{} / {} / seed {}: {}",
                f.variant,
                f.scenario,
                f.seed,
                f.error.as_deref().unwrap_or("")
            ),
        });
    }
    let mut rows = Vec::new();
    for (v, lambda) in variants.iter().zip(lambdas) {
        for (ci, c) in conditions.iter().enumerate() {
            let scenario = scenarios[ci].label();
            for cell in report
                .cells
                .iter()
                .filter(|x| x.variant == v.name && x.scenario == scenario)
            {
                let m = cell.metrics.expect("failures handled above");
                rows.push((
                    ci,
                    SweepRow {
                        lambda: *lambda,
                        condition: c.to_string(),
                        seed: cell.seed,
                        mae: m.mae,
                        mse: m.mse,
                    },
                ));
            }
        }
    }
    rows.sort_by(|(ca, a), (cb, b)| {
        a.lambda
            .total_cmp(&b.lambda)
            .then(ca.cmp(cb))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lambda,condition,seed,mae,mse\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.lambda, r.condition, r.seed, r.mae, r.mse
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(v: &str, s: &str, seed: u64, mae: f64) -> CellResult {
        CellResult {
            variant: v.into(),
            scenario: s.into(),
            seed,
            metrics: Some(Metrics {
                mae,
                mse: mae * mae,
                smape: Some(10.0 * mae),
            }),
            error: None,
        }
    }

    #[test]
    fn aggregates_recompute_from_cells() {
        let cells = vec![
            cell("base", "clean/clean", 0, 1.0),
            cell("base", "clean/clean", 1, 2.0),
            cell("base", "clean/clean", 2, 4.0),
            cell("co", "clean/clean", 0, 0.5),
            cell("co", "clean/clean", 1, 1.5),
            cell("co", "clean/clean", 2, 3.0),
        ];
        let r = ScenarioReport::from_cells(cells, "base", 6);
        let a = r.aggregate("base", "clean/clean").unwrap();
        assert!((a.mae.mean - 7.0 / 3.0).abs() < 1e-12);
        let var = [1.0f64, 2.0, 4.0]
            .iter()
            .map(|v| (v - 7.0 / 3.0).powi(2))
            .sum::<f64>()
            / 2.0;
        assert!((a.mae.std - var.sqrt()).abs() < 1e-12);
        let c = &r.comparisons[0];
        assert!(
            (c.delta_mae.unwrap() - (5.0 / 3.0 - 7.0 / 3.0) / (7.0 / 3.0) * 100.0).abs() < 1e-9
        );
        assert!(c.t_mae.is_some());

        let back = ScenarioReport::cells_from_csv(&r.to_csv()).unwrap();
        assert_eq!(ScenarioReport::from_cells(back, "base", 6), r);
        let md = r.to_markdown();
        assert!(md.contains("| clean/clean |"), "{md}");
        assert!(md.contains("Δ MAE"));
    }

    #[test]
    fn failed_cells_are_excluded_from_aggregates() {
        let mut bad = cell("co", "s", 1, 9.0);
        bad.metrics = None;
        bad.error = Some("diverged".into());
        let r = ScenarioReport::from_cells(vec![cell("base", "s", 1, 1.0), bad], "base", 2);
        assert!(r.aggregate("co", "s").is_none());
        assert_eq!(r.failures().count(), 1);
        assert_eq!(r.to_csv().lines().count(), 2);
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(
            derive_seed(0, "test:clean"),
            derive_seed(0, "test:input_only")
        );
        assert_ne!(derive_seed(0, "x"), derive_seed(1, "x"));
        assert_eq!(derive_seed(5, "x"), derive_seed(5, "x"));
    }
}
