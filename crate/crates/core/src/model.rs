//! Forecasting backbone: a per-timestep embedding and tanh MLP, an affine
//! mixing map across the time axis producing the latent sequence `z`
//! (`T'×D`), and a linear head from flattened `z` to the `H×C` forecast.
//!
//! All forward passes are batched: inputs are `[N, L, C]`, latents
//! `[N, T', D]`, forecasts `[N, H, C]`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Tape, Tensor, Var};

pub const CHECKPOINT_MAGIC: &str = "COTSFA1";

/// Parameter tensors in storage order.
pub const PARAM_NAMES: [&str; 10] = [
    "embed.w", "embed.b", "mlp1.w", "mlp1.b", "mlp2.w", "mlp2.b", "mix.w", "mix.b", "head.w",
    "head.b",
];

const EMBED_W: usize = 0;
const EMBED_B: usize = 1;
const MLP1_W: usize = 2;
const MLP1_B: usize = 3;
const MLP2_W: usize = 4;
const MLP2_B: usize = 5;
const MIX_W: usize = 6;
const MIX_B: usize = 7;
const HEAD_W: usize = 8;
const HEAD_B: usize = 9;

/// Rows per no-grad forward chunk in [`predict_batch`].
const PREDICT_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_len: usize,
    pub horizon: usize,
    pub channels: usize,
    pub latent_dim: usize,
    pub latent_len: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults `T' = L`, `D = 16`, `hidden = 64`.
    pub fn new(input_len: usize, horizon: usize, channels: usize, seed: u64) -> Self {
        Self {
            input_len,
            horizon,
            channels,
            latent_dim: 16,
            latent_len: input_len,
            hidden: 64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_len", self.input_len),
            ("horizon", self.horizon),
            ("channels", self.channels),
            ("latent_dim", self.latent_dim),
            ("latent_len", self.latent_len),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Validation(format!("model {name} must be positive")));
        }
        if self.latent_len > self.input_len {
            return Err(Error::Validation(format!(
                "latent_len {} exceeds input_len {}",
                self.latent_len, self.input_len
            )));
        }
        Ok(())
    }

    /// Expected shape of each parameter tensor, in [`PARAM_NAMES`] order.
    pub fn param_shapes(&self) -> [Vec<usize>; 10] {
        let (l, h, c, d, tp, hid) = (
            self.input_len,
            self.horizon,
            self.channels,
            self.latent_dim,
            self.latent_len,
            self.hidden,
        );
        [
            vec![c, d],
            vec![1, d],
            vec![d, hid],
            vec![1, hid],
            vec![hid, d],
            vec![1, d],
            vec![tp, l],
            vec![tp, 1],
            vec![tp * d, h * c],
            vec![1, h * c],
        ]
    }

    pub fn n_params(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

/// Width settings of the backbone; window sizes and seed come from the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelHyper {
    pub latent_dim: usize,
    /// Latent sequence length; defaults to the input length.
    pub latent_len: Option<usize>,
    pub hidden: usize,
}

impl Default for ModelHyper {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            latent_len: None,
            hidden: 64,
        }
    }
}

impl ModelHyper {
    pub fn config(
        &self,
        input_len: usize,
        horizon: usize,
        channels: usize,
        seed: u64,
    ) -> ModelConfig {
        ModelConfig {
            input_len,
            horizon,
            channels,
            latent_dim: self.latent_dim,
            latent_len: self.latent_len.unwrap_or(input_len),
            hidden: self.hidden,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// One tensor per entry of [`PARAM_NAMES`].
    pub tensors: Vec<Tensor>,
}

/// Tape handles for every parameter tensor.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars(pub [Var; 10]);

pub fn init_model(cfg: &ModelConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shapes = cfg.param_shapes();
    // Biases share the fan-in of the weight they belong to.
    let fan_in = [
        cfg.channels,
        cfg.channels,
        cfg.latent_dim,
        cfg.latent_dim,
        cfg.hidden,
        cfg.hidden,
        cfg.input_len,
        cfg.input_len,
        cfg.latent_len * cfg.latent_dim,
        cfg.latent_len * cfg.latent_dim,
    ];
    let tensors = shapes
        .iter()
        .zip(fan_in)
        .map(|(shape, fan)| {
            let s = (1.0 / fan as f64).sqrt();
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-s..=s)).collect();
            Tensor::new(shape.clone(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelParams {
        config: cfg.clone(),
        tensors,
    })
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            config: cfg.clone(),
            tensors: cfg
                .param_shapes()
                .iter()
                .map(|s| Tensor::zeros(s))
                .collect(),
        })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        PARAM_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        PARAM_NAMES
            .iter()
            .position(|n| *n == name)
            .map(move |i| &mut self.tensors[i])
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.tensors.len() != PARAM_NAMES.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                PARAM_NAMES.len(),
                self.tensors.len()
            )));
        }
        for ((t, shape), name) in self
            .tensors
            .iter()
            .zip(self.config.param_shapes())
            .zip(PARAM_NAMES)
        {
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "{name} has shape {:?}, config implies {shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Checkpoint(format!("{name} has non-finite values")));
            }
        }
        Ok(())
    }

    /// Place every tensor on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let vars = std::array::from_fn(|i| {
            let t = self.tensors[i].clone();
            if trainable {
                tape.leaf(t)
            } else {
                tape.constant(t)
            }
        });
        ParamVars(vars)
    }

    /// All parameters concatenated in storage order.
    pub fn flatten(&self) -> Tensor {
        let data: Vec<f64> = self
            .tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect();
        Tensor::vector(data)
    }

    pub fn from_flat(cfg: &ModelConfig, flat: &[f64]) -> Result<Self> {
        cfg.validate()?;
        if flat.len() != cfg.n_params() {
            return Err(Error::Dimension {
                op: "from_flat",
                lhs: vec![flat.len()],
                rhs: vec![cfg.n_params()],
            });
        }
        let mut off = 0;
        let tensors = cfg
            .param_shapes()
            .into_iter()
            .map(|shape| {
                let n: usize = shape.iter().product();
                let t = Tensor::new(shape, flat[off..off + n].to_vec());
                off += n;
                t
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: cfg.clone(),
            tensors,
        })
    }

    /// Split a flat parameter vector already on the tape into shaped views.
    pub fn bind_flat(cfg: &ModelConfig, tape: &mut Tape, flat: Var) -> Result<ParamVars> {
        let shapes = cfg.param_shapes();
        let mut vars = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for shape in &shapes {
            let n: usize = shape.iter().product();
            let s = tape.slice(flat, 0, off, off + n)?;
            vars.push(tape.reshape(s, shape)?);
            off += n;
        }
        Ok(ParamVars(vars.try_into().expect("ten parameter tensors")))
    }
}

fn check_input(cfg: &ModelConfig, shape: &[usize]) -> Result<usize> {
    if shape.len() == 3 && shape[1] == cfg.input_len && shape[2] == cfg.channels {
        Ok(shape[0])
    } else {
        Err(Error::Dimension {
            op: "encode",
            lhs: shape.to_vec(),
            rhs: vec![0, cfg.input_len, cfg.channels],
        })
    }
}

/// `[N, L, C] -> [N, T', D]` on the tape.
pub fn encode_batch(cfg: &ModelConfig, tape: &mut Tape, p: &ParamVars, x: Var) -> Result<Var> {
    let n = check_input(cfg, tape.shape(x))?;
    let (l, c, d, tp) = (cfg.input_len, cfg.channels, cfg.latent_dim, cfg.latent_len);
    let w = &p.0;
    let rows = tape.reshape(x, &[n * l, c])?;
    let e = tape.matmul(rows, w[EMBED_W])?;
    let e = tape.add(e, w[EMBED_B])?;
    let h = tape.matmul(e, w[MLP1_W])?;
    let h = tape.add(h, w[MLP1_B])?;
    let h = tape.tanh(h);
    let u = tape.matmul(h, w[MLP2_W])?;
    let u = tape.add(u, w[MLP2_B])?;
    let u = tape.reshape(u, &[n, l, d])?;
    let u = tape.permute(u, &[1, 0, 2])?;
    let u = tape.reshape(u, &[l, n * d])?;
    let m = tape.matmul(w[MIX_W], u)?;
    let m = tape.add(m, w[MIX_B])?;
    let m = tape.reshape(m, &[tp, n, d])?;
    let m = tape.permute(m, &[1, 0, 2])?;
    Ok(tape.tanh(m))
}

/// `[N, T', D] -> [N, H, C]` on the tape.
pub fn forecast_batch(cfg: &ModelConfig, tape: &mut Tape, p: &ParamVars, z: Var) -> Result<Var> {
    let shape = tape.shape(z).to_vec();
    if shape.len() != 3 || shape[1] != cfg.latent_len || shape[2] != cfg.latent_dim {
        return Err(Error::Dimension {
            op: "forecast",
            lhs: shape,
            rhs: vec![0, cfg.latent_len, cfg.latent_dim],
        });
    }
    let n = shape[0];
    let flat = tape.reshape(z, &[n, cfg.latent_len * cfg.latent_dim])?;
    let y = tape.matmul(flat, p.0[HEAD_W])?;
    let y = tape.add(y, p.0[HEAD_B])?;
    tape.reshape(y, &[n, cfg.horizon, cfg.channels])
}

/// Stack `L×C` windows into one `[N, L, C]` tensor.
pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = items.first() else {
        return Err(Error::Contract("cannot stack an empty list".into()));
    };
    let inner = first.shape().to_vec();
    let mut data = Vec::with_capacity(items.len() * first.len());
    for t in items {
        if t.shape() != inner.as_slice() {
            return Err(Error::Dimension {
                op: "stack",
                lhs: t.shape().to_vec(),
                rhs: inner,
            });
        }
        data.extend_from_slice(t.data());
    }
    let mut shape = vec![items.len()];
    shape.extend(inner);
    Tensor::new(shape, data)
}

/// Split a `[N, ...]` tensor into its `N` leading slices.
pub fn unstack(t: &Tensor) -> Result<Vec<Tensor>> {
    let (&n, inner) = t
        .shape()
        .split_first()
        .ok_or_else(|| Error::Contract("cannot unstack a scalar".into()))?;
    let size: usize = inner.iter().product();
    (0..n)
        .map(|i| Tensor::new(inner.to_vec(), t.data()[i * size..(i + 1) * size].to_vec()))
        .collect()
}

fn single(t: &Tensor, rank: usize, op: &'static str) -> Result<Tensor> {
    if t.ndim() != rank {
        return Err(Error::Dimension {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![0; rank],
        });
    }
    let mut shape = vec![1];
    shape.extend_from_slice(t.shape());
    t.clone().reshape(shape)
}

/// Latent sequence `T'×D` of one `L×C` window.
pub fn encode(params: &ModelParams, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let p = params.bind(&mut tape, false);
    let xv = tape.constant(single(x, 2, "encode")?);
    let z = encode_batch(&params.config, &mut tape, &p, xv)?;
    let cfg = &params.config;
    tape.value(z)
        .clone()
        .reshape(vec![cfg.latent_len, cfg.latent_dim])
}

/// Forecast `H×C` from one latent sequence `T'×D`.
pub fn forecast(params: &ModelParams, z: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let p = params.bind(&mut tape, false);
    let zv = tape.constant(single(z, 2, "forecast")?);
    let y = forecast_batch(&params.config, &mut tape, &p, zv)?;
    let cfg = &params.config;
    tape.value(y)
        .clone()
        .reshape(vec![cfg.horizon, cfg.channels])
}

/// `f(x) = head(encode(x))` for one window.
pub fn predict(params: &ModelParams, x: &Tensor) -> Result<Tensor> {
    Ok(predict_batch(params, &[x])?.remove(0))
}

/// Forecasts for many windows, evaluated in chunks without gradients.
pub fn predict_batch(params: &ModelParams, xs: &[&Tensor]) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(xs.len());
    let mut tape = Tape::new();
    for chunk in xs.chunks(PREDICT_CHUNK) {
        tape.clear();
        let p = params.bind(&mut tape, false);
        let xv = tape.constant(stack(chunk)?);
        let z = encode_batch(&params.config, &mut tape, &p, xv)?;
        let y = forecast_batch(&params.config, &mut tape, &p, z)?;
        out.extend(unstack(tape.value(y))?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    config: ModelConfig,
    tensors: Vec<NamedTensor>,
}

/// Magic line followed by a JSON document of config and named tensors.
pub fn checkpoint_bytes(params: &ModelParams) -> Result<Vec<u8>> {
    let doc = CheckpointDoc {
        config: params.config.clone(),
        tensors: params
            .tensors
            .iter()
            .zip(PARAM_NAMES)
            .map(|(t, name)| NamedTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    let mut out = format!("{CHECKPOINT_MAGIC}\n").into_bytes();
    serde_json::to_writer(&mut out, &doc)?;
    out.push(b'\n');
    Ok(out)
}

pub fn params_from_checkpoint_bytes(bytes: &[u8]) -> Result<ModelParams> {
    let header = format!("{CHECKPOINT_MAGIC}\n");
    let body = bytes.strip_prefix(header.as_bytes()).ok_or_else(|| {
        Error::Checkpoint(format!(
            "magic header mismatch: expected {CHECKPOINT_MAGIC}"
        ))
    })?;
    let doc: CheckpointDoc = serde_json::from_slice(body)
        .map_err(|e| Error::Checkpoint(format!("malformed body: {e}")))?;
    if doc.tensors.len() != PARAM_NAMES.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            PARAM_NAMES.len(),
            doc.tensors.len()
        )));
    }
    let mut tensors = Vec::with_capacity(doc.tensors.len());
    for (nt, name) in doc.tensors.into_iter().zip(PARAM_NAMES) {
        if nt.name != name {
            return Err(Error::Checkpoint(format!(
                "expected tensor {name}, found {}",
                nt.name
            )));
        }
        tensors.push(
            Tensor::new(nt.shape, nt.data)
                .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?,
        );
    }
    let params = ModelParams {
        config: doc.config,
        tensors,
    };
    params.validate()?;
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    params_from_checkpoint_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::grad_check;

    fn small() -> ModelConfig {
        ModelConfig {
            input_len: 6,
            horizon: 3,
            channels: 2,
            latent_dim: 4,
            latent_len: 5,
            hidden: 5,
            seed: 1,
        }
    }

    fn ramp(shape: &[usize], k: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|i| ((i as f64) * k).sin()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = small();
        assert_eq!(init_model(&cfg).unwrap(), init_model(&cfg).unwrap());
        let other = ModelConfig {
            seed: 2,
            ..cfg.clone()
        };
        assert_ne!(init_model(&cfg).unwrap(), init_model(&other).unwrap());

        let wide = ModelConfig {
            input_len: 100,
            latent_len: 100,
            ..cfg
        };
        let p = init_model(&wide).unwrap();
        let mix = p.get("mix.w").unwrap();
        assert!(mix.max_abs() <= 0.1);
        assert!(mix.max_abs() > 0.09);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = small();
        cfg.latent_len = 7;
        assert!(matches!(init_model(&cfg), Err(Error::Validation(_))));
        cfg.latent_len = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_params_give_zero_latent_and_bias_forecast() {
        let cfg = small();
        let mut p = ModelParams::zeros(&cfg).unwrap();
        let x = ramp(&[6, 2], 0.7);
        assert!(encode(&p, &x).unwrap().data().iter().all(|v| *v == 0.0));
        let bias = ramp(&[1, 6], 1.3);
        *p.get_mut("head.b").unwrap() = bias.clone();
        let y = forecast(&p, &Tensor::zeros(&[5, 4])).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.data(), bias.data());
    }

    #[test]
    fn identity_mixing_is_local_in_time() {
        let cfg = ModelConfig {
            latent_len: 6,
            ..small()
        };
        let mut p = init_model(&cfg).unwrap();
        *p.get_mut("mix.w").unwrap() = Tensor::identity(6);
        *p.get_mut("mix.b").unwrap() = Tensor::zeros(&[6, 1]);
        let x = ramp(&[6, 2], 0.4);
        let mut x2 = x.clone();
        x2.data_mut()[2 * 2] += 1.0;
        let (z, z2) = (encode(&p, &x).unwrap(), encode(&p, &x2).unwrap());
        for t in 0..6 {
            let same = z.data()[t * 4..(t + 1) * 4] == z2.data()[t * 4..(t + 1) * 4];
            assert_eq!(same, t != 2, "t = {t}");
        }
    }

    #[test]
    fn head_is_linear_in_latent() {
        let cfg = ModelConfig {
            latent_dim: 1,
            latent_len: 1,
            horizon: 1,
            channels: 1,
            ..small()
        };
        let mut p = ModelParams::zeros(&cfg).unwrap();
        *p.get_mut("head.w").unwrap() = Tensor::matrix(1, 1, vec![2.0]).unwrap();
        *p.get_mut("head.b").unwrap() = Tensor::matrix(1, 1, vec![0.5]).unwrap();
        for z in [-1.0, 0.0, 0.25, 3.0] {
            let y = forecast(&p, &Tensor::matrix(1, 1, vec![z]).unwrap()).unwrap();
            assert_eq!(y.data(), &[2.0 * z + 0.5]);
        }
    }

    #[test]
    fn batched_forward_matches_single_windows() {
        let cfg = small();
        let p = init_model(&cfg).unwrap();
        let xs: Vec<Tensor> = (0..3).map(|i| ramp(&[6, 2], 0.3 + i as f64)).collect();
        let refs: Vec<&Tensor> = xs.iter().collect();
        let batch = predict_batch(&p, &refs).unwrap();
        for (x, yb) in xs.iter().zip(&batch) {
            let z = encode(&p, x).unwrap();
            assert_eq!(z.shape(), &[5, 4]);
            let y = forecast(&p, &z).unwrap();
            for (a, b) in y.data().iter().zip(yb.data()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        assert_eq!(predict(&p, &xs[0]).unwrap(), batch[0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let p = init_model(&small()).unwrap();
        assert!(matches!(
            encode(&p, &Tensor::zeros(&[5, 2])),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            forecast(&p, &Tensor::zeros(&[5, 3])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn encode_and_full_model_gradients() {
        let cfg = small();
        let p = init_model(&cfg).unwrap();
        let x = ramp(&[2, 6, 2], 0.9);
        let flat = p.flatten();
        let enc = grad_check(
            |tape, f| {
                let pv = ModelParams::bind_flat(&cfg, tape, f)?;
                let xv = tape.constant(x.clone());
                let z = encode_batch(&cfg, tape, &pv, xv)?;
                tape.sum(z, None)
            },
            &flat,
            1e-6,
        )
        .unwrap();
        assert!(enc.passed(1e-4), "{enc:?}");
        let full = grad_check(
            |tape, f| {
                let pv = ModelParams::bind_flat(&cfg, tape, f)?;
                let xv = tape.constant(x.clone());
                let z = encode_batch(&cfg, tape, &pv, xv)?;
                let y = forecast_batch(&cfg, tape, &pv, z)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq, None)
            },
            &flat,
            1e-6,
        )
        .unwrap();
        assert!(full.passed(1e-4), "{full:?}");
    }

    #[test]
    fn flat_round_trip() {
        let p = init_model(&small()).unwrap();
        let back = ModelParams::from_flat(&p.config, p.flatten().data()).unwrap();
        assert_eq!(back, p);
        assert!(ModelParams::from_flat(&p.config, &[0.0; 3]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_magic() {
        let p = init_model(&small()).unwrap();
        let bytes = checkpoint_bytes(&p).unwrap();
        assert!(bytes.starts_with(b"COTSFA1\n"));
        assert_eq!(params_from_checkpoint_bytes(&bytes).unwrap(), p);
        assert_eq!(checkpoint_bytes(&p).unwrap(), bytes);

        let mut bad = bytes.clone();
        bad[6] = b'2';
        let err = params_from_checkpoint_bytes(&bad).unwrap_err();
        assert!(err.to_string().contains("magic header mismatch"), "{err}");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);
        let missing = load_checkpoint(&dir.path().join("nope.ckpt")).unwrap_err();
        assert!(missing.to_string().contains("nope.ckpt"));
    }
}
