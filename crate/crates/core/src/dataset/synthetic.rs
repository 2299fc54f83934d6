use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{SeriesFrame, Timestamp};
use crate::error::{Error, Result};

/// Generator settings for sinusoid + trend + noise series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_series: usize,
    pub length: usize,
    pub channels: usize,
    pub seed: u64,
    pub period_min: f64,
    pub period_max: f64,
    /// Trend slopes are drawn from `[-max_slope, max_slope]` per step.
    pub max_slope: f64,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    /// Noise std as a fraction of the sinusoid amplitude.
    pub noise_ratio: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_series: 20,
            length: 2000,
            channels: 1,
            seed: 0,
            period_min: 8.0,
            period_max: 64.0,
            max_slope: 0.01,
            amplitude_min: 0.5,
            amplitude_max: 2.0,
            noise_ratio: 0.1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_series == 0 || self.length == 0 || self.channels == 0 {
            return Err(Error::Validation(
                "n_series, length and channels must be positive".into(),
            ));
        }
        if !(self.period_min > 0.0 && self.period_min <= self.period_max) {
            return Err(Error::Validation("invalid period range".into()));
        }
        if !(self.amplitude_min > 0.0 && self.amplitude_min <= self.amplitude_max) {
            return Err(Error::Validation("invalid amplitude range".into()));
        }
        if self.max_slope < 0.0 || self.noise_ratio < 0.0 {
            return Err(Error::Validation(
                "max_slope and noise_ratio must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// The deterministic part of one generated channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelComponents {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub slope: f64,
    pub noise_std: f64,
}

impl ChannelComponents {
    pub fn clean_value(&self, t: usize) -> f64 {
        let t = t as f64;
        self.amplitude * (2.0 * PI * t / self.period + self.phase).sin() + self.slope * t
    }
}

pub fn gen_synthetic(
    n_series: usize,
    length: usize,
    channels: usize,
    seed: u64,
) -> Result<Vec<SeriesFrame>> {
    let spec = SyntheticSpec {
        n_series,
        length,
        channels,
        seed,
        ..SyntheticSpec::default()
    };
    Ok(gen_synthetic_with(&spec)?
        .into_iter()
        .map(|(f, _)| f)
        .collect())
}

/// Generate frames together with the components used for each channel.
pub fn gen_synthetic_with(
    spec: &SyntheticSpec,
) -> Result<Vec<(SeriesFrame, Vec<ChannelComponents>)>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let width = (spec.n_series - 1).to_string().len().max(3);
    let mut out = Vec::with_capacity(spec.n_series);
    for s in 0..spec.n_series {
        let comps: Vec<ChannelComponents> = (0..spec.channels)
            .map(|_| {
                let amplitude = rng.random_range(spec.amplitude_min..=spec.amplitude_max);
                ChannelComponents {
                    amplitude,
                    period: rng.random_range(spec.period_min..=spec.period_max),
                    phase: rng.random_range(0.0..2.0 * PI),
                    slope: rng.random_range(-spec.max_slope..=spec.max_slope),
                    noise_std: spec.noise_ratio * amplitude,
                }
            })
            .collect();
        let mut values = Vec::with_capacity(spec.length * spec.channels);
        for t in 0..spec.length {
            for c in &comps {
                let noise = std_normal.sample(&mut rng);
                values.push(c.clean_value(t) + c.noise_std * noise);
            }
        }
        let frame = SeriesFrame::new(
            format!("series_{s:0width$}"),
            (0..spec.channels).map(|c| format!("c{c}")).collect(),
            (0..spec.length as i64).map(Timestamp::Index).collect(),
            values,
        )?;
        out.push((frame, comps));
    }
    Ok(out)
}
