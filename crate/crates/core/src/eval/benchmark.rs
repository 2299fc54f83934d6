use crate::dataset::{gen_synthetic_with, prepare, PreparedDataset, SplitSpec, SyntheticSpec};
use crate::error::Result;
use crate::train::TrainConfig;

use super::condition::TestCondition;
use super::grid::{GridSettings, MetricSpace, Scenario, Variant};

/// Seeds used by the directional benchmark.
pub const BENCHMARK_SEEDS: [u64; 3] = [0, 1, 2];

/// The desk-scale synthetic benchmark: 20 series of 2000 steps, `L = 16`,
/// `H = 4`, metrics in normalized space.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub data: SyntheticSpec,
    pub split: SplitSpec,
    pub settings: GridSettings,
}

impl Default for Benchmark {
    fn default() -> Self {
        Self {
            data: SyntheticSpec::default(),
            split: SplitSpec {
                window: 16,
                horizon: 4,
                ..SplitSpec::default()
            },
            settings: GridSettings {
                train: TrainConfig {
                    epochs: 4,
                    lr0: 1e-2,
                    ..TrainConfig::default()
                },
                metric_space: MetricSpace::Normalized,
                train_stride: 4,
                ..GridSettings::default()
            },
        }
    }
}

impl Benchmark {
    pub fn prepare(&self) -> Result<PreparedDataset> {
        let frames: Vec<_> = gen_synthetic_with(&self.data)?
            .into_iter()
            .map(|(f, _)| f)
            .collect();
        prepare(&frames, &self.split)
    }

    /// Baseline (`λ = 0`) and Co-TSFA variants.
    pub fn variants(lambda: f64) -> Vec<Variant> {
        vec![Variant::new("base", 0.0), Variant::new("co-tsfa", lambda)]
    }

    /// Clean training, evaluated clean, input-only and input+output.
    pub fn scenarios(seeds: &[u64]) -> Vec<Scenario> {
        [
            TestCondition::Clean,
            TestCondition::Continuous(crate::augment::ContinuousMode::InputOnly),
            TestCondition::Continuous(crate::augment::ContinuousMode::InputOutput),
        ]
        .into_iter()
        .map(|c| Scenario::clean_train(c, seeds.to_vec()))
        .collect()
    }
}
