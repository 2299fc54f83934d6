//! Anomaly perturbations: the parametric continuous curve, applied to the input
//! only or across the input/target boundary, and pointwise corruptions.
//!
//! The curve is `a(t) = A·t·exp(-B·t^C)/Z`. Injected values are scaled by the
//! per-channel mean of the concatenated `(x, y)` window.

use std::collections::HashMap;
use std::ops::RangeInclusive;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Origin, WindowPair};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub const CURVE_B: f64 = 0.385;
pub const CURVE_Z: f64 = 90_409.0;
pub const CURVE_A_MEAN: f64 = 74_120.0;
pub const CURVE_A_STD: f64 = 20_000.0;
pub const CURVE_C_MEAN: f64 = 0.806;
pub const CURVE_C_STD: f64 = 0.2;

/// Upper bound on the curve over the checked grid.
pub const CURVE_MAX: f64 = 2.0;
/// Step at which the curve must have decayed below [`CURVE_LATE_MAX`].
pub const CURVE_LATE_STEP: usize = 30;
pub const CURVE_LATE_MAX: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    /// Amplitude numerator.
    pub a: f64,
    /// Decay rate.
    pub b: f64,
    /// Decay exponent.
    pub c: f64,
    /// Scaling constant.
    pub z: f64,
}

impl CurveParams {
    /// Curve at the centre of the sampling distribution.
    pub fn mean() -> Self {
        Self {
            a: CURVE_A_MEAN,
            b: CURVE_B,
            c: CURVE_C_MEAN,
            z: CURVE_Z,
        }
    }

    /// `a(t)` without the domain check.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        self.a * t * (-self.b * t.powf(self.c)).exp() / self.z
    }

    /// Whether the curve is non-negative, stays below [`CURVE_MAX`] and has
    /// decayed below [`CURVE_LATE_MAX`] at step 30, on integer steps
    /// `0..=max(span, 30)`.
    pub fn is_valid(&self, span: usize) -> bool {
        let last = span.max(CURVE_LATE_STEP);
        let mut peak = f64::NEG_INFINITY;
        for t in 0..=last {
            let v = self.eval(t as f64);
            if !v.is_finite() || v < 0.0 {
                return false;
            }
            peak = peak.max(v);
        }
        peak < CURVE_MAX && self.eval(CURVE_LATE_STEP as f64) < CURVE_LATE_MAX
    }
}

pub fn anomaly_curve(params: &CurveParams, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::Domain(format!("anomaly curve at negative time {t}")));
    }
    Ok(params.eval(t))
}

/// Gaussian sampling of `A` and `C` with rejection on the curve constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSampler {
    pub a_mean: f64,
    pub a_std: f64,
    pub c_mean: f64,
    pub c_std: f64,
    pub b: f64,
    pub z: f64,
    pub max_attempts: usize,
}

impl Default for CurveSampler {
    fn default() -> Self {
        Self {
            a_mean: CURVE_A_MEAN,
            a_std: CURVE_A_STD,
            c_mean: CURVE_C_MEAN,
            c_std: CURVE_C_STD,
            b: CURVE_B,
            z: CURVE_Z,
            max_attempts: 1000,
        }
    }
}

impl CurveSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, horizon_span: usize) -> Result<CurveParams> {
        if horizon_span == 0 {
            return Err(Error::Contract(
                "curve sampling needs horizon_span >= 1".into(),
            ));
        }
        let a_dist = Normal::new(self.a_mean, self.a_std)
            .map_err(|e| Error::Validation(format!("amplitude distribution: {e}")))?;
        let c_dist = Normal::new(self.c_mean, self.c_std)
            .map_err(|e| Error::Validation(format!("exponent distribution: {e}")))?;
        for _ in 0..self.max_attempts {
            let p = CurveParams {
                a: a_dist.sample(rng),
                b: self.b,
                c: c_dist.sample(rng),
                z: self.z,
            };
            if p.is_valid(horizon_span) {
                return Ok(p);
            }
        }
        Err(Error::Sampling(format!(
            "no admissible curve parameters after {} attempts",
            self.max_attempts
        )))
    }
}

pub fn sample_curve_params<R: Rng + ?Sized>(
    rng: &mut R,
    horizon_span: usize,
) -> Result<CurveParams> {
    CurveSampler::default().sample(rng, horizon_span)
}

/// Multiply `A` and `C` by independent `N(1, rel_std²)` factors; keep `base`
/// when the jittered curve violates a constraint.
pub fn jitter_params<R: Rng + ?Sized>(
    base: &CurveParams,
    rng: &mut R,
    rel_std: f64,
    horizon_span: usize,
) -> CurveParams {
    if rel_std <= 0.0 {
        return *base;
    }
    let f = Normal::new(1.0, rel_std).expect("finite positive std");
    let p = CurveParams {
        a: base.a * f.sample(rng),
        c: base.c * f.sample(rng),
        ..*base
    };
    if p.is_valid(horizon_span) {
        p
    } else {
        *base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    InputOnly,
    InputOutput,
    Pointwise,
}

/// The two continuous-curve augmentation modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousMode {
    InputOnly,
    InputOutput,
}

impl ContinuousMode {
    /// Admissible anomaly start indices for input length `l`.
    pub fn t0_range(self, l: usize) -> RangeInclusive<usize> {
        let lf = l as f64;
        match self {
            ContinuousMode::InputOnly => 0..=(0.5 * lf).floor() as usize,
            ContinuousMode::InputOutput => {
                (0.85 * lf).floor() as usize..=(0.95 * lf).floor() as usize
            }
        }
    }

    pub fn as_mode(self) -> AugmentMode {
        match self {
            ContinuousMode::InputOnly => AugmentMode::InputOnly,
            ContinuousMode::InputOutput => AugmentMode::InputOutput,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContinuousMode::InputOnly => "input_only",
            ContinuousMode::InputOutput => "input_output",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPair {
    pub x: Tensor,
    pub y: Tensor,
    pub mode: AugmentMode,
    pub params: Option<CurveParams>,
    pub t0: Option<usize>,
    pub sign: f64,
}

/// Per-channel mean over the concatenation of `x` and `y`.
pub fn window_mean(pair: &WindowPair) -> Vec<f64> {
    let c = pair.channels();
    let mut sums = vec![0.0; c];
    for (i, v) in pair.x.data().iter().chain(pair.y.data()).enumerate() {
        sums[i % c] += v;
    }
    let n = (pair.input_len() + pair.horizon()) as f64;
    sums.iter().map(|s| s / n).collect()
}

fn check_t0(mode: ContinuousMode, l: usize, t0: usize) -> Result<()> {
    let r = mode.t0_range(l);
    if !r.contains(&t0) {
        return Err(Error::Contract(format!(
            "{} start index {t0} outside {}..={} for L = {l}",
            mode.name(),
            r.start(),
            r.end()
        )));
    }
    Ok(())
}

fn inject_curve(
    pair: &WindowPair,
    params: &CurveParams,
    t0: usize,
    sign: f64,
    mode: ContinuousMode,
) -> Result<AugmentedPair> {
    let (l, c) = (pair.input_len(), pair.channels());
    check_t0(mode, l, t0)?;
    let mu = window_mean(pair);
    let mut x = pair.x.clone();
    let xd = x.data_mut();
    for t in t0..l {
        let a = params.eval((t - t0) as f64);
        for ch in 0..c {
            xd[t * c + ch] += sign * mu[ch] * a;
        }
    }
    let mut y = pair.y.clone();
    if mode == ContinuousMode::InputOutput {
        let yd = y.data_mut();
        for h in 0..pair.horizon() {
            let a = params.eval((l + h - t0) as f64);
            for ch in 0..c {
                yd[h * c + ch] += sign * mu[ch] * a;
            }
        }
    }
    Ok(AugmentedPair {
        x,
        y,
        mode: mode.as_mode(),
        params: Some(*params),
        t0: Some(t0),
        sign,
    })
}

/// Add the curve to `x` from `t0` to the end of the input; `y` is left untouched.
pub fn inject_input_only(
    pair: &WindowPair,
    params: &CurveParams,
    t0: usize,
    sign: f64,
) -> Result<AugmentedPair> {
    inject_curve(pair, params, t0, sign, ContinuousMode::InputOnly)
}

/// Add one curve starting late in `x` and continuing through `y`.
pub fn inject_input_output(
    pair: &WindowPair,
    params: &CurveParams,
    t0: usize,
    sign: f64,
) -> Result<AugmentedPair> {
    inject_curve(pair, params, t0, sign, ContinuousMode::InputOutput)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointwiseKind {
    Const,
    Missing,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointwiseSpec {
    pub kind: PointwiseKind,
    pub ratio: f64,
    /// NaN (or JSON `null`) selects the kind's default.
    #[serde(
        default = "PointwiseSpec::unset_scale",
        deserialize_with = "scale_or_unset"
    )]
    pub scale: f64,
}

fn scale_or_unset<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl PointwiseSpec {
    fn unset_scale() -> f64 {
        f64::NAN
    }

    /// Spec with the default scale for `kind`: 0.5 for const, 2.0 for gaussian.
    pub fn new(kind: PointwiseKind, ratio: f64) -> Self {
        let scale = match kind {
            PointwiseKind::Const => 0.5,
            PointwiseKind::Gaussian => 2.0,
            PointwiseKind::Missing => 1.0,
        };
        Self { kind, ratio, scale }
    }

    /// Fill an unset scale with the kind's default.
    pub fn resolved(self) -> Self {
        if self.scale.is_nan() {
            Self::new(self.kind, self.ratio)
        } else {
            self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Validation(format!(
                "pointwise ratio must be in (0, 1], got {}",
                self.ratio
            )));
        }
        let s = self.resolved().scale;
        if self.kind != PointwiseKind::Missing && !(s > 0.0 && s.is_finite()) {
            return Err(Error::Validation(format!(
                "pointwise scale must be > 0, got {s}"
            )));
        }
        Ok(())
    }

    /// Number of corrupted timesteps in a window of length `l`.
    pub fn count(&self, l: usize) -> usize {
        ((self.ratio * l as f64).round() as usize).min(l)
    }
}

/// Corrupt `round(ratio·L)` distinct timesteps of `x` (`L×C`).
/// Returns the corrupted copy and the sorted indices.
pub fn inject_pointwise<R: Rng + ?Sized>(
    x: &Tensor,
    spec: &PointwiseSpec,
    rng: &mut R,
) -> Result<(Tensor, Vec<usize>)> {
    spec.validate()?;
    let spec = spec.resolved();
    if x.ndim() != 2 {
        return Err(Error::Dimension {
            op: "inject_pointwise",
            lhs: x.shape().to_vec(),
            rhs: vec![0, 0],
        });
    }
    let (l, c) = (x.shape()[0], x.shape()[1]);
    let mut idx = sample_indices(rng, l, spec.count(l)).into_vec();
    idx.sort_unstable();
    let mut out = x.clone();
    let d = out.data_mut();
    let noise = Normal::new(0.0, spec.scale.max(f64::MIN_POSITIVE)).expect("positive scale");
    for &t in &idx {
        for ch in 0..c {
            let v = &mut d[t * c + ch];
            match spec.kind {
                PointwiseKind::Const => *v += spec.scale,
                PointwiseKind::Missing => *v = 0.0,
                PointwiseKind::Gaussian => *v += noise.sample(rng),
            }
        }
    }
    Ok((out, idx))
}

/// Options shared by training-time augmentation and test-time injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Relative std of the per-sample jitter on `A` and `C`.
    pub jitter_std: f64,
    /// Draw the anomaly sign uniformly from ±1 instead of always +1.
    pub symmetric_sign: bool,
    /// Fraction of test windows corrupted under anomalous test conditions.
    pub test_fraction: f64,
    pub sampler: CurveSampler,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            jitter_std: 0.05,
            symmetric_sign: false,
            test_fraction: 1.0,
            sampler: CurveSampler::default(),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_std >= 0.0 && self.jitter_std.is_finite()) {
            return Err(Error::Validation("jitter_std must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(Error::Validation("test_fraction must be in [0, 1]".into()));
        }
        if self.sampler.max_attempts == 0 {
            return Err(Error::Validation(
                "sampler.max_attempts must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn draw_sign<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.symmetric_sign && rng.random_bool(0.5) {
            -1.0
        } else {
            1.0
        }
    }
}

/// Draw one continuous anomaly (params, start, sign) for a window.
pub fn draw_continuous<R: Rng + ?Sized>(
    mode: ContinuousMode,
    base: &CurveParams,
    l: usize,
    h: usize,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> (CurveParams, usize, f64) {
    let params = jitter_params(base, rng, cfg.jitter_std, l + h);
    let t0 = rng.random_range(mode.t0_range(l));
    let sign = cfg.draw_sign(rng);
    (params, t0, sign)
}

/// `views` augmentations of every pair in a batch, ordered view-major
/// (`view · B + i`). Curve parameters are drawn once for the batch and
/// jittered per augmented sample; start indices are per sample.
pub fn augment_batch<R: Rng + ?Sized>(
    pairs: &[&WindowPair],
    mode: ContinuousMode,
    views: usize,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<AugmentedPair>> {
    let Some(first) = pairs.first() else {
        return Ok(Vec::new());
    };
    let (l, h) = (first.input_len(), first.horizon());
    let base = cfg.sampler.sample(rng, l + h)?;
    let mut out = Vec::with_capacity(views * pairs.len());
    for _ in 0..views {
        for p in pairs {
            let (params, t0, sign) = draw_continuous(mode, &base, l, h, cfg, rng);
            out.push(inject_curve(p, &params, t0, sign, mode)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    InputOnly,
    InputOutput,
    Pointwise,
}

/// Which corruption a training set receives and on what fraction of its pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationConfig {
    pub regime: RegimeKind,
    pub fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointwise: Option<PointwiseSpec>,
}

impl ContaminationConfig {
    pub fn continuous(mode: ContinuousMode, fraction: f64) -> Self {
        let regime = match mode {
            ContinuousMode::InputOnly => RegimeKind::InputOnly,
            ContinuousMode::InputOutput => RegimeKind::InputOutput,
        };
        Self {
            regime,
            fraction,
            pointwise: None,
        }
    }

    pub fn pointwise(spec: PointwiseSpec, fraction: f64) -> Self {
        Self {
            regime: RegimeKind::Pointwise,
            fraction,
            pointwise: Some(spec),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::Contract(format!(
                "contamination fraction must be in [0, 1], got {}",
                self.fraction
            )));
        }
        match (self.regime, &self.pointwise) {
            (RegimeKind::Pointwise, Some(spec)) => spec.validate(),
            (RegimeKind::Pointwise, None) => Err(Error::Validation(
                "pointwise regime needs a `pointwise` spec".into(),
            )),
            (_, Some(_)) => Err(Error::Validation(
                "`pointwise` spec given for a continuous regime".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match (self.regime, &self.pointwise) {
            (RegimeKind::InputOnly, _) => format!("input_only@{}", self.fraction),
            (RegimeKind::InputOutput, _) => format!("input_output@{}", self.fraction),
            (RegimeKind::Pointwise, Some(p)) => {
                format!("{:?}{}@{}", p.kind, p.ratio, self.fraction).to_lowercase()
            }
            (RegimeKind::Pointwise, None) => "pointwise".into(),
        }
    }
}

/// Replay record for one corrupted pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub origin: Origin,
    pub mode: AugmentMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<CurveParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<usize>,
    pub sign: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointwise: Option<PointwiseSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationManifest {
    pub config: ContaminationConfig,
    pub entries: Vec<ManifestEntry>,
}

fn corrupt_one(
    pair: &WindowPair,
    cfg: &ContaminationConfig,
    augment: &AugmentConfig,
    seed: u64,
) -> Result<(WindowPair, ManifestEntry)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l, h) = (pair.input_len(), pair.horizon());
    let mode = match cfg.regime {
        RegimeKind::InputOnly => Some(ContinuousMode::InputOnly),
        RegimeKind::InputOutput => Some(ContinuousMode::InputOutput),
        RegimeKind::Pointwise => None,
    };
    let mut entry = ManifestEntry {
        origin: pair.origin.clone(),
        mode: AugmentMode::Pointwise,
        params: None,
        t0: None,
        sign: 1.0,
        indices: None,
        pointwise: None,
        seed,
    };
    let out = match mode {
        Some(mode) => {
            let base = augment.sampler.sample(&mut rng, l + h)?;
            let t0 = rng.random_range(mode.t0_range(l));
            let sign = augment.draw_sign(&mut rng);
            let aug = inject_curve(pair, &base, t0, sign, mode)?;
            entry.mode = aug.mode;
            entry.params = Some(base);
            entry.t0 = Some(t0);
            entry.sign = sign;
            WindowPair {
                x: aug.x,
                y: aug.y,
                origin: pair.origin.clone(),
            }
        }
        None => {
            let spec = cfg
                .pointwise
                .ok_or_else(|| Error::Validation("pointwise regime needs a spec".into()))?
                .resolved();
            let (x, idx) = inject_pointwise(&pair.x, &spec, &mut rng)?;
            entry.indices = Some(idx);
            entry.pointwise = Some(spec);
            WindowPair {
                x,
                y: pair.y.clone(),
                origin: pair.origin.clone(),
            }
        }
    };
    Ok((out, entry))
}

/// Replace exactly `round(fraction·n)` pairs, chosen uniformly, by corrupted copies.
pub fn contaminate_training_set<R: Rng + ?Sized>(
    pairs: &[WindowPair],
    cfg: &ContaminationConfig,
    augment: &AugmentConfig,
    rng: &mut R,
) -> Result<(Vec<WindowPair>, ContaminationManifest)> {
    cfg.validate()?;
    let n = pairs.len();
    let count = ((cfg.fraction * n as f64).round() as usize).min(n);
    let mut chosen = sample_indices(rng, n, count).into_vec();
    chosen.sort_unstable();
    let mut out = pairs.to_vec();
    let mut entries = Vec::with_capacity(count);
    for i in chosen {
        let seed = rng.next_u64();
        let (p, e) = corrupt_one(&pairs[i], cfg, augment, seed)?;
        out[i] = p;
        entries.push(e);
    }
    Ok((
        out,
        ContaminationManifest {
            config: cfg.clone(),
            entries,
        },
    ))
}

/// Re-apply a manifest to the clean pairs it was produced from.
pub fn replay_manifest(
    pairs: &[WindowPair],
    manifest: &ContaminationManifest,
) -> Result<Vec<WindowPair>> {
    let index: HashMap<&Origin, usize> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| (&p.origin, i))
        .collect();
    let mut out = pairs.to_vec();
    for e in &manifest.entries {
        let &i = index.get(&e.origin).ok_or_else(|| {
            Error::Data(format!(
                "manifest origin {}@{} not in dataset",
                e.origin.series_id, e.origin.start
            ))
        })?;
        let src = &pairs[i];
        out[i] = match (e.mode, e.params, e.t0) {
            (AugmentMode::InputOnly, Some(p), Some(t0)) => {
                let a = inject_input_only(src, &p, t0, e.sign)?;
                WindowPair {
                    x: a.x,
                    y: a.y,
                    origin: src.origin.clone(),
                }
            }
            (AugmentMode::InputOutput, Some(p), Some(t0)) => {
                let a = inject_input_output(src, &p, t0, e.sign)?;
                WindowPair {
                    x: a.x,
                    y: a.y,
                    origin: src.origin.clone(),
                }
            }
            (AugmentMode::Pointwise, _, _) => {
                let spec = e
                    .pointwise
                    .ok_or_else(|| Error::Data("pointwise manifest entry without spec".into()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(e.seed);
                let (x, idx) = inject_pointwise(&src.x, &spec, &mut rng)?;
                if e.indices.as_ref().is_some_and(|rec| *rec != idx) {
                    return Err(Error::Data(format!(
                        "manifest indices for {}@{} do not replay",
                        e.origin.series_id, e.origin.start
                    )));
                }
                WindowPair {
                    x,
                    y: src.y.clone(),
                    origin: src.origin.clone(),
                }
            }
            _ => return Err(Error::Data("incomplete manifest entry".into())),
        };
    }
    Ok(out)
}
