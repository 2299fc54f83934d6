//! Series frames, train-split normalization, windowing and synthetic data.

mod csv_io;
mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub use csv_io::{load_csv, load_dataset, write_wide_csv, Layout};
pub use synthetic::{gen_synthetic, gen_synthetic_with, ChannelComponents, SyntheticSpec};

/// Lower bound applied to per-channel standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Ordered time marker: an integer index or an ISO-8601 date/datetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Timestamp {
    Index(i64),
    Date(NaiveDate),
    DateTime(NaiveDateTime),
}

impl Timestamp {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Ok(i) = s.parse::<i64>() {
            return Some(Timestamp::Index(i));
        }
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Some(Timestamp::Date(d));
        }
        for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
            if let Ok(d) = NaiveDateTime::parse_from_str(s, fmt) {
                return Some(Timestamp::DateTime(d));
            }
        }
        None
    }

    fn kind(&self) -> u8 {
        match self {
            Timestamp::Index(_) => 0,
            Timestamp::Date(_) => 1,
            Timestamp::DateTime(_) => 2,
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timestamp::Index(i) => write!(f, "{i}"),
            Timestamp::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Timestamp::DateTime(d) => write!(f, "{}", d.format("%Y-%m-%dT%H:%M:%S")),
        }
    }
}

/// Per-channel normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose std fell below [`STD_FLOOR`] and was replaced by it.
    pub floored: Vec<bool>,
}

impl NormStats {
    pub fn normalize(&self, channel: usize, v: f64) -> f64 {
        (v - self.mean[channel]) / self.std[channel]
    }

    pub fn denormalize(&self, channel: usize, v: f64) -> f64 {
        v * self.std[channel] + self.mean[channel]
    }

    /// Denormalize a row-major `rows × C` buffer in place.
    pub fn denormalize_rows(&self, values: &mut [f64]) {
        let c = self.mean.len();
        for (i, v) in values.iter_mut().enumerate() {
            *v = self.denormalize(i % c, *v);
        }
    }
}

/// A multivariate series: `T_total × C` values with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    pub series_id: String,
    pub channels: Vec<String>,
    timestamps: Vec<Timestamp>,
    values: Vec<f64>,
    pub norm_stats: Option<NormStats>,
}

impl SeriesFrame {
    pub fn new(
        series_id: impl Into<String>,
        channels: Vec<String>,
        timestamps: Vec<Timestamp>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let series_id = series_id.into();
        if channels.is_empty() {
            return Err(Error::Data(format!("series {series_id}: no channels")));
        }
        if values.len() != timestamps.len() * channels.len() {
            return Err(Error::Dimension {
                op: "series frame",
                lhs: vec![timestamps.len(), channels.len()],
                rhs: vec![values.len()],
            });
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Data(format!(
                "series {series_id}: timestamps not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if let Some(first) = timestamps.first() {
            if timestamps.iter().any(|t| t.kind() != first.kind()) {
                return Err(Error::Data(format!(
                    "series {series_id}: mixed timestamp formats"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("series {series_id}: non-finite value")));
        }
        Ok(Self {
            series_id,
            channels,
            timestamps,
            values,
            norm_stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    /// Row-major `T_total × C` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, t: usize, c: usize) -> f64 {
        self.values[t * self.channels.len() + c]
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.value(t, c)).collect()
    }

    /// A copy with values mapped into normalized units and `norm_stats` attached.
    pub fn normalized(&self, stats: &NormStats) -> Result<SeriesFrame> {
        if stats.mean.len() != self.n_channels() {
            return Err(Error::Dimension {
                op: "normalize",
                lhs: vec![self.n_channels()],
                rhs: vec![stats.mean.len()],
            });
        }
        let c = self.n_channels();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| stats.normalize(i % c, *v))
            .collect();
        Ok(SeriesFrame {
            values,
            norm_stats: Some(stats.clone()),
            ..self.clone()
        })
    }

    /// Inverse of [`SeriesFrame::normalized`]; identity when no stats are attached.
    pub fn denormalized(&self) -> SeriesFrame {
        let mut out = self.clone();
        if let Some(stats) = out.norm_stats.take() {
            stats.denormalize_rows(&mut out.values);
        }
        out
    }
}

/// Position of a window inside its source frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub series_id: String,
    pub start: usize,
}

/// One `(x: L×C, y: H×C)` sample; `y` starts where `x` ends.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub x: Tensor,
    pub y: Tensor,
    pub origin: Origin,
}

impl WindowPair {
    pub fn input_len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn horizon(&self) -> usize {
        self.y.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.x.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Input window length `L`.
    pub window: usize,
    /// Forecast horizon `H`.
    pub horizon: usize,
    pub stride: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            val_fraction: 0.1,
            test_fraction: 0.2,
            window: 16,
            horizon: 4,
            stride: 1,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Validation(format!(
                "split fractions must lie in (0, 1), got {fr:?}"
            )));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "split fractions must sum to 1, got {fr:?}"
            )));
        }
        if self.window == 0 || self.horizon == 0 || self.stride == 0 {
            return Err(Error::Validation(
                "window, horizon and stride must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Chronological train/val/test index ranges for a series of `total` steps.
    pub fn ranges(&self, total: usize) -> [Range<usize>; 3] {
        let n_train = (total as f64 * self.train_fraction).floor() as usize;
        let n_val = (total as f64 * self.val_fraction).floor() as usize;
        let n_val = n_val.min(total - n_train);
        [0..n_train, n_train..n_train + n_val, n_train + n_val..total]
    }
}

/// Per-channel mean and population std over `train_range` only.
pub fn fit_normalizer(frame: &SeriesFrame, train_range: Range<usize>) -> Result<NormStats> {
    if train_range.is_empty() || train_range.end > frame.len() {
        return Err(Error::Contract(format!(
            "training range {train_range:?} invalid for series {} of length {}",
            frame.series_id,
            frame.len()
        )));
    }
    let n = train_range.len() as f64;
    let c = frame.n_channels();
    let mut mean = vec![0.0; c];
    let mut std = vec![0.0; c];
    let mut floored = vec![false; c];
    for ch in 0..c {
        let m = train_range.clone().map(|t| frame.value(t, ch)).sum::<f64>() / n;
        let var = train_range
            .clone()
            .map(|t| (frame.value(t, ch) - m).powi(2))
            .sum::<f64>()
            / n;
        let mut s = var.sqrt();
        if s < STD_FLOOR {
            log::warn!(
                "series {} channel {}: constant over training range, std floored to {STD_FLOOR}",
                frame.series_id,
                frame.channels[ch]
            );
            s = STD_FLOOR;
            floored[ch] = true;
        }
        mean[ch] = m;
        std[ch] = s;
    }
    Ok(NormStats { mean, std, floored })
}

/// Train/val/test window lists.
#[derive(Debug, Clone, Default)]
pub struct Splits {
    pub train: Vec<WindowPair>,
    pub val: Vec<WindowPair>,
    pub test: Vec<WindowPair>,
}

/// Number of windows a split of `len` steps yields.
pub fn window_count(len: usize, window: usize, horizon: usize, stride: usize) -> usize {
    if len < window + horizon {
        0
    } else {
        (len - window - horizon) / stride + 1
    }
}

/// Windows of length `L + H` striding through `range`, never leaving it.
pub fn windows_in_range(
    frame: &SeriesFrame,
    range: Range<usize>,
    window: usize,
    horizon: usize,
    stride: usize,
) -> Vec<WindowPair> {
    let c = frame.n_channels();
    let count = window_count(range.len(), window, horizon, stride);
    (0..count)
        .map(|k| {
            let start = range.start + k * stride;
            let x = frame.values[start * c..(start + window) * c].to_vec();
            let y = frame.values[(start + window) * c..(start + window + horizon) * c].to_vec();
            WindowPair {
                x: Tensor::new(vec![window, c], x).expect("window shape"),
                y: Tensor::new(vec![horizon, c], y).expect("horizon shape"),
                origin: Origin {
                    series_id: frame.series_id.clone(),
                    start,
                },
            }
        })
        .collect()
}

pub fn make_windows(frame: &SeriesFrame, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let need = spec.window + spec.horizon;
    if frame.len() < need {
        return Err(Error::Data(format!(
            "series {} has {} steps, fewer than L+H = {need}",
            frame.series_id,
            frame.len()
        )));
    }
    let [train, val, test] = spec.ranges(frame.len());
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for (slot, (name, range)) in
        out.iter_mut()
            .zip([("train", train), ("val", val), ("test", test)])
    {
        if range.len() < need {
            log::warn!(
                "series {}: {name} split has {} steps < L+H = {need}; no windows",
                frame.series_id,
                range.len()
            );
        }
        *slot = windows_in_range(frame, range, spec.window, spec.horizon, spec.stride);
    }
    let [train, val, test] = out;
    Ok(Splits { train, val, test })
}

/// Frames normalized with their own training statistics, plus pooled windows.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub frames: Vec<SeriesFrame>,
    pub splits: Splits,
    pub spec: SplitSpec,
}

impl PreparedDataset {
    pub fn stats_for(&self, series_id: &str) -> Option<&NormStats> {
        self.frames
            .iter()
            .find(|f| f.series_id == series_id)
            .and_then(|f| f.norm_stats.as_ref())
    }

    pub fn stats_map(&self) -> HashMap<&str, &NormStats> {
        self.frames
            .iter()
            .filter_map(|f| f.norm_stats.as_ref().map(|s| (f.series_id.as_str(), s)))
            .collect()
    }

    pub fn channels(&self) -> usize {
        self.frames.first().map_or(0, |f| f.n_channels())
    }
}

/// Normalize every series with its training split and pool the windows of all series.
pub fn prepare(frames: &[SeriesFrame], spec: &SplitSpec) -> Result<PreparedDataset> {
    spec.validate()?;
    if frames.is_empty() {
        return Err(Error::Data("no series to prepare".into()));
    }
    let c = frames[0].n_channels();
    let mut normalized = Vec::with_capacity(frames.len());
    let mut splits = Splits::default();
    for frame in frames {
        if frame.n_channels() != c {
            return Err(Error::Data(format!(
                "series {} has {} channels, expected {c}",
                frame.series_id,
                frame.n_channels()
            )));
        }
        let [train, _, _] = spec.ranges(frame.len());
        let stats = fit_normalizer(frame, train)?;
        let norm = frame.normalized(&stats)?;
        let s = make_windows(&norm, spec)?;
        splits.train.extend(s.train);
        splits.val.extend(s.val);
        splits.test.extend(s.test);
        normalized.push(norm);
    }
    Ok(PreparedDataset {
        frames: normalized,
        splits,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(values: Vec<f64>, c: usize) -> SeriesFrame {
        let t = values.len() / c;
        SeriesFrame::new(
            "s",
            (0..c).map(|i| format!("c{i}")).collect(),
            (0..t as i64).map(Timestamp::Index).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn normalizer_closed_form() {
        let f = frame(vec![1.0, 2.0, 3.0], 1);
        let s = fit_normalizer(&f, 0..3).unwrap();
        assert_eq!(s.mean, vec![2.0]);
        assert!((s.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.floored, vec![false]);
    }

    #[test]
    fn normalized_data_has_unit_stats() {
        let raw = frame(vec![3.0, -1.0, 4.0, 1.0, -5.0, 9.0], 1);
        let s = fit_normalizer(&raw, 0..6).unwrap();
        let n = raw.normalized(&s).unwrap();
        let s2 = fit_normalizer(&n, 0..6).unwrap();
        assert!(s2.mean[0].abs() < 1e-12);
        assert!((s2.std[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_channel_floored() {
        let f = frame(vec![5.0, 5.0, 5.0], 1);
        let s = fit_normalizer(&f, 0..3).unwrap();
        assert_eq!(s.std, vec![STD_FLOOR]);
        assert_eq!(s.floored, vec![true]);
    }

    #[test]
    fn empty_train_range_rejected() {
        let f = frame(vec![1.0, 2.0], 1);
        assert!(fit_normalizer(&f, 1..1).is_err());
    }

    #[test]
    fn test_region_does_not_leak_into_stats() {
        let spec = SplitSpec::default();
        let mut vals: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        let f1 = frame(vals.clone(), 1);
        let [train, _, test] = spec.ranges(100);
        for v in &mut vals[test] {
            *v += 1000.0;
        }
        let f2 = frame(vals, 1);
        assert_eq!(
            fit_normalizer(&f1, train.clone()).unwrap(),
            fit_normalizer(&f2, train).unwrap()
        );
    }

    #[test]
    fn window_count_examples() {
        let f = frame((0..10).map(f64::from).collect(), 1);
        let w = windows_in_range(&f, 0..10, 4, 2, 1);
        assert_eq!(w.len(), 5);
        assert_eq!(w[4].x.data(), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(w[4].y.data(), &[8.0, 9.0]);
        assert_eq!(windows_in_range(&f, 0..10, 6, 4, 1).len(), 1);
        assert_eq!(window_count(5, 4, 2, 1), 0);
    }

    #[test]
    fn windows_never_cross_split_boundaries() {
        let f = frame((0..200).map(f64::from).collect(), 1);
        let spec = SplitSpec::default();
        let s = make_windows(&f, &spec).unwrap();
        let [train, val, test] = spec.ranges(200);
        for (ws, r) in [(&s.train, train), (&s.val, val), (&s.test, test)] {
            assert_eq!(ws.len(), window_count(r.len(), 16, 4, 1));
            for w in ws {
                assert!(w.origin.start >= r.start && w.origin.start + 20 <= r.end);
            }
        }
    }

    #[test]
    fn too_short_series_is_error() {
        let f = frame(vec![0.0; 10], 1);
        assert!(make_windows(&f, &SplitSpec::default()).is_err());
    }

    #[test]
    fn timestamps_must_increase() {
        let err = SeriesFrame::new(
            "s",
            vec!["c0".into()],
            vec![Timestamp::Index(1), Timestamp::Index(1)],
            vec![0.0, 0.0],
        );
        assert!(matches!(err, Err(Error::Data(_))));
    }

    proptest! {
        #[test]
        fn normalize_denormalize_identity(vals in prop::collection::vec(-1e6f64..1e6, 4..40)) {
            let c = 2;
            let n = vals.len() / c * c;
            let f = frame(vals[..n].to_vec(), c);
            let s = fit_normalizer(&f, 0..f.len()).unwrap();
            let back = f.normalized(&s).unwrap().denormalized();
            for (a, b) in f.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
        }

        #[test]
        fn stride_tiles_reconstruct_split(len in 20usize..120, l in 1usize..8, h in 1usize..5) {
            let f = frame((0..len).map(|i| i as f64 * 0.5).collect(), 1);
            let w = windows_in_range(&f, 0..len, l, h, l + h);
            let mut rebuilt = Vec::new();
            for p in &w {
                rebuilt.extend_from_slice(p.x.data());
                rebuilt.extend_from_slice(p.y.data());
            }
            prop_assert_eq!(&rebuilt[..], &f.values()[..rebuilt.len()]);
            prop_assert!(len - rebuilt.len() < l + h);
        }
    }
}
