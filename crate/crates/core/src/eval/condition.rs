use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{
    inject_input_only, inject_input_output, inject_pointwise, AugmentConfig, ContinuousMode,
    PointwiseKind, PointwiseSpec,
};
use crate::dataset::WindowPair;
use crate::error::{Error, Result};

/// What the test windows look like at evaluation time.
///
/// Written as `clean`, `input_only`, `input_output` or
/// `pointwise:<const|missing|gaussian>:<ratio>[:<scale>]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TestCondition {
    Clean,
    Continuous(ContinuousMode),
    Pointwise(PointwiseSpec),
}

impl TestCondition {
    pub fn is_anomalous(&self) -> bool {
        !matches!(self, TestCondition::Clean)
    }
}

impl fmt::Display for TestCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestCondition::Clean => f.write_str("clean"),
            TestCondition::Continuous(m) => f.write_str(m.name()),
            TestCondition::Pointwise(p) => {
                let kind = match p.kind {
                    PointwiseKind::Const => "const",
                    PointwiseKind::Missing => "missing",
                    PointwiseKind::Gaussian => "gaussian",
                };
                let default = PointwiseSpec::new(p.kind, p.ratio).scale;
                if p.scale.is_nan() || p.scale == default {
                    write!(f, "pointwise:{kind}:{}", p.ratio)
                } else {
                    write!(f, "pointwise:{kind}:{}:{}", p.ratio, p.scale)
                }
            }
        }
    }
}

impl FromStr for TestCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("unknown test condition `{s}`"));
        match s {
            "clean" => return Ok(TestCondition::Clean),
            "input_only" => return Ok(TestCondition::Continuous(ContinuousMode::InputOnly)),
            "input_output" => return Ok(TestCondition::Continuous(ContinuousMode::InputOutput)),
            _ => {}
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() < 3 || parts.len() > 4 || parts[0] != "pointwise" {
            return Err(bad());
        }
        let kind = match parts[1] {
            "const" => PointwiseKind::Const,
            "missing" => PointwiseKind::Missing,
            "gaussian" => PointwiseKind::Gaussian,
            _ => return Err(bad()),
        };
        let ratio: f64 = parts[2].parse().map_err(|_| bad())?;
        let mut spec = PointwiseSpec::new(kind, ratio);
        if let Some(scale) = parts.get(3) {
            spec.scale = scale.parse().map_err(|_| bad())?;
        }
        spec.validate()?;
        Ok(TestCondition::Pointwise(spec))
    }
}

impl TryFrom<String> for TestCondition {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TestCondition> for String {
    fn from(c: TestCondition) -> String {
        c.to_string()
    }
}

/// Corrupt `round(fraction·n)` test windows per `condition`. Continuous
/// anomalies draw fresh curve parameters for every window.
pub fn apply_condition(
    pairs: &[WindowPair],
    condition: &TestCondition,
    augment: &AugmentConfig,
    fraction: f64,
    seed: u64,
) -> Result<Vec<WindowPair>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Contract(format!(
            "test fraction must be in [0, 1], got {fraction}"
        )));
    }
    let mut out = pairs.to_vec();
    if !condition.is_anomalous() || pairs.is_empty() {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pairs.len();
    let count = ((fraction * n as f64).round() as usize).min(n);
    let mut chosen = sample_indices(&mut rng, n, count).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let p = &pairs[i];
        let (l, h) = (p.input_len(), p.horizon());
        match condition {
            TestCondition::Clean => {}
            TestCondition::Continuous(mode) => {
                let params = augment.sampler.sample(&mut rng, l + h)?;
                let t0 = rng.random_range(mode.t0_range(l));
                let sign = augment.draw_sign(&mut rng);
                let a = match mode {
                    ContinuousMode::InputOnly => inject_input_only(p, &params, t0, sign)?,
                    ContinuousMode::InputOutput => inject_input_output(p, &params, t0, sign)?,
                };
                out[i].x = a.x;
                out[i].y = a.y;
            }
            TestCondition::Pointwise(spec) => {
                out[i].x = inject_pointwise(&p.x, spec, &mut rng)?.0;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Origin;
    use crate::numeric::Tensor;

    #[test]
    fn labels_round_trip() {
        for s in [
            "clean",
            "input_only",
            "input_output",
            "pointwise:missing:0.3",
            "pointwise:gaussian:0.1:1.5",
        ] {
            let c: TestCondition = s.parse().unwrap();
            assert_eq!(c.to_string(), s);
        }
        assert!("pointwise:missing:1.5".parse::<TestCondition>().is_err());
        assert!("spiky".parse::<TestCondition>().is_err());
    }

    #[test]
    fn conditions_touch_expected_parts() {
        let pairs: Vec<WindowPair> = (0..10)
            .map(|k| WindowPair {
                x: Tensor::full(&[16, 1], 1.0),
                y: Tensor::full(&[4, 1], 1.0),
                origin: Origin {
                    series_id: "s".into(),
                    start: k,
                },
            })
            .collect();
        let aug = AugmentConfig::default();
        let clean = apply_condition(&pairs, &TestCondition::Clean, &aug, 1.0, 0).unwrap();
        assert_eq!(clean, pairs);
        let io = apply_condition(&pairs, &"input_only".parse().unwrap(), &aug, 1.0, 0).unwrap();
        assert!(io.iter().zip(&pairs).all(|(a, b)| a.y == b.y && a.x != b.x));
        let oo = apply_condition(&pairs, &"input_output".parse().unwrap(), &aug, 0.5, 0).unwrap();
        assert_eq!(oo.iter().zip(&pairs).filter(|(a, b)| a.y != b.y).count(), 5);
        let again =
            apply_condition(&pairs, &"input_output".parse().unwrap(), &aug, 0.5, 0).unwrap();
        assert_eq!(oo, again);
    }
}
