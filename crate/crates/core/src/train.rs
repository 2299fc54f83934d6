//! Mini-batch training with Adam, per-epoch learning-rate halving, early
//! stopping on validation MSE and best-checkpoint restore.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_batch, AugmentConfig, AugmentedPair, ContinuousMode};
use crate::dataset::WindowPair;
use crate::error::{Error, Result};
use crate::loss::{alignment_tape, mse_tape};
use crate::model::{
    encode_batch, forecast_batch, init_model, predict_batch, stack, ModelConfig, ModelParams,
    ParamVars,
};
use crate::numeric::{Tape, Tensor, Var};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub lr_halving: bool,
    pub patience: usize,
    pub early_stopping: bool,
    /// Weight of the alignment term; 0 trains the plain forecasting baseline.
    pub lambda_align: f64,
    /// Augmented views per sample and mode.
    pub views: usize,
    pub modes: Vec<ContinuousMode>,
    pub tau: f64,
    /// Also fit forecasts of augmented inputs to their (shifted) targets.
    pub forecast_on_augmented: bool,
    /// Optimizer steps between log records.
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 10,
            lr0: 1e-3,
            lr_halving: true,
            patience: 3,
            early_stopping: true,
            lambda_align: 0.1,
            views: 5,
            modes: vec![ContinuousMode::InputOnly, ContinuousMode::InputOutput],
            tau: 1.0,
            forecast_on_augmented: false,
            log_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.into()));
        if self.batch_size == 0 || self.epochs == 0 || self.log_every == 0 {
            return bad("batch_size, epochs and log_every must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be > 0");
        }
        if !(self.lambda_align >= 0.0 && self.lambda_align.is_finite()) {
            return bad("lambda_align must be >= 0");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be > 0");
        }
        if self.uses_alignment() {
            if self.batch_size < 2 {
                return bad("batch_size must be >= 2 when lambda_align > 0");
            }
            if self.views == 0 {
                return bad("views must be >= 1 when lambda_align > 0");
            }
            if self.modes.is_empty() {
                return bad("at least one augmentation mode is needed when lambda_align > 0");
            }
        }
        if self.modes.len() > 2 || (self.modes.len() == 2 && self.modes[0] == self.modes[1]) {
            return bad("augmentation modes must be distinct");
        }
        Ok(())
    }

    pub fn uses_alignment(&self) -> bool {
        self.lambda_align > 0.0
    }
}

pub fn lr_schedule(lr0: f64, epoch: usize) -> f64 {
    lr0 * 0.5f64.powi(epoch as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: usize,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// Bias-corrected Adam update in place. Non-finite gradients abort before any
/// parameter changes.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Contract(format!(
            "adam_step got {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    let step = state.step + 1;
    if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Training {
            step,
            msg: format!("non-finite gradient in parameter tensor {k}"),
        });
    }
    state.step = step;
    let c1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(step as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (k, &gk) in g.data().iter().enumerate() {
            md[k] = ADAM_BETA1 * md[k] + (1.0 - ADAM_BETA1) * gk;
            vd[k] = ADAM_BETA2 * vd[k] + (1.0 - ADAM_BETA2) * gk * gk;
            let mhat = md[k] / c1;
            let vhat = vd[k] / c2;
            pd[k] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub stop: bool,
    /// First index of the minimum.
    pub best: usize,
}

/// Stop once the best value is at least `patience` epochs old, i.e. none of
/// the last `patience` entries improved on everything before them.
pub fn early_stopper(history: &[f64], patience: usize) -> Result<StopDecision> {
    if history.is_empty() {
        return Err(Error::Contract(
            "early_stopper needs a non-empty history".into(),
        ));
    }
    let best = history
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v < history[b] { i } else { b });
    let stop = history.len() > patience && best + patience < history.len();
    Ok(StopDecision { stop, best })
}

#[derive(Debug, Clone)]
pub struct EpochOutcome<S> {
    /// State after the best epoch, or after the last one without validation.
    pub state: S,
    pub history: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
}

/// Run up to `max_epochs` epochs of `epoch(e, state)`, which returns the
/// validation loss if one exists. Stops per [`early_stopper`] when `patience`
/// is given and restores the snapshot taken after the best epoch.
pub fn run_epochs<S: Clone>(
    max_epochs: usize,
    patience: Option<usize>,
    mut state: S,
    mut epoch: impl FnMut(usize, &mut S) -> Result<Option<f64>>,
) -> Result<EpochOutcome<S>> {
    let mut history = Vec::new();
    let mut best: Option<(usize, S)> = None;
    let mut epochs_run = 0;
    for e in 0..max_epochs {
        let val = epoch(e, &mut state)?;
        epochs_run = e + 1;
        let Some(v) = val else { continue };
        history.push(v);
        let improved = best.as_ref().is_none_or(|(b, _)| v < history[*b]);
        if improved {
            best = Some((history.len() - 1, state.clone()));
        }
        if let Some(p) = patience {
            if early_stopper(&history, p)?.stop {
                break;
            }
        }
    }
    let (best_epoch, state) = match best {
        Some((b, s)) => (Some(b), s),
        None => (None, state),
    };
    Ok(EpochOutcome {
        state,
        history,
        best_epoch,
        epochs_run,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub forecast: f64,
    pub align: f64,
    pub total: f64,
    pub val: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    pub optimizer_steps: usize,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    fn push(&mut self, rec: TrainRecord) {
        match self.records.last_mut() {
            Some(last) if last.step == rec.step => {
                if rec.val.is_some() {
                    last.val = rec.val;
                }
            }
            _ => self.records.push(rec),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,forecast,align,total,val,lr\n");
        for r in &self.records {
            let val = r.val.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step, r.forecast, r.align, r.total, val, r.lr
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Tape handles of one batch objective.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub total: Var,
    pub forecast: Var,
    pub align: Option<Var>,
}

/// Forecast MSE plus `λ` times the alignment loss averaged over the
/// augmentation modes in `augmented` (each view-major, `views·B` items).
pub fn batch_objective(
    tape: &mut Tape,
    model: &ModelConfig,
    params: &ParamVars,
    originals: &[&WindowPair],
    augmented: &[Vec<AugmentedPair>],
    cfg: &TrainConfig,
) -> Result<Objective> {
    let b = originals.len();
    let align_on = cfg.uses_alignment() && !augmented.is_empty();
    let mut xs: Vec<&Tensor> = originals.iter().map(|p| &p.x).collect();
    if align_on || cfg.forecast_on_augmented {
        for mode in augmented {
            if mode.len() != cfg.views * b {
                return Err(Error::Contract(format!(
                    "expected {} augmented pairs per mode, got {}",
                    cfg.views * b,
                    mode.len()
                )));
            }
            xs.extend(mode.iter().map(|a| &a.x));
        }
    }
    let n = xs.len();
    let x = tape.constant(stack(&xs)?);
    let z = encode_batch(model, tape, params, x)?;

    let mut ys: Vec<&Tensor> = originals.iter().map(|p| &p.y).collect();
    let pred = if cfg.forecast_on_augmented && n > b {
        for mode in augmented {
            ys.extend(mode.iter().map(|a| &a.y));
        }
        forecast_batch(model, tape, params, z)?
    } else {
        let zo = tape.slice(z, 0, 0, b)?;
        forecast_batch(model, tape, params, zo)?
    };
    let target = tape.constant(stack(&ys)?);
    let forecast = mse_tape(tape, pred, target)?;

    if !align_on {
        return Ok(Objective {
            total: forecast,
            forecast,
            align: None,
        });
    }
    let z_orig = tape.slice(z, 0, 0, b)?;
    let y_orig = tape.constant(stack(&originals.iter().map(|p| &p.y).collect::<Vec<_>>())?);
    let span = cfg.views * b;
    let mut terms = Vec::with_capacity(augmented.len());
    for (m, mode) in augmented.iter().enumerate() {
        let z_aug = tape.slice(z, 0, b + m * span, b + (m + 1) * span)?;
        let y_aug = tape.constant(stack(&mode.iter().map(|a| &a.y).collect::<Vec<_>>())?);
        terms.push(alignment_tape(
            tape,
            (z_orig, z_aug),
            (y_orig, y_aug),
            cfg.views,
            cfg.tau,
        )?);
    }
    let mut align = terms[0];
    for &t in &terms[1..] {
        align = tape.add(align, t)?;
    }
    let align = tape.scale(align, 1.0 / terms.len() as f64);
    let weighted = tape.scale(align, cfg.lambda_align);
    let total = tape.add(forecast, weighted)?;
    Ok(Objective {
        total,
        forecast,
        align: Some(align),
    })
}

/// Mean forecast MSE over `pairs`.
pub fn evaluate_mse(params: &ModelParams, pairs: &[WindowPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Contract("evaluate_mse of an empty set".into()));
    }
    let xs: Vec<&Tensor> = pairs.iter().map(|p| &p.x).collect();
    let preds = predict_batch(params, &xs)?;
    let mut total = 0.0;
    for (p, pair) in preds.iter().zip(pairs) {
        total += crate::loss::forecast_loss(p, &pair.y)?;
    }
    Ok(total / pairs.len() as f64)
}

fn check_pairs(model: &ModelConfig, pairs: &[WindowPair], op: &'static str) -> Result<()> {
    let want_x = [model.input_len, model.channels];
    let want_y = [model.horizon, model.channels];
    for p in pairs {
        if p.x.shape() != want_x || p.y.shape() != want_y {
            return Err(Error::Dimension {
                op,
                lhs: [p.x.shape(), p.y.shape()].concat(),
                rhs: [want_x, want_y].concat(),
            });
        }
    }
    Ok(())
}

struct Trainer<'a> {
    model: &'a ModelConfig,
    cfg: &'a TrainConfig,
    aug: &'a AugmentConfig,
    train: &'a [WindowPair],
    order: Vec<usize>,
    shuffle_rng: ChaCha8Rng,
    aug_rng: ChaCha8Rng,
    tape: Tape,
    /// Most recent batch record, completed with the validation loss at epoch end.
    last: Option<TrainRecord>,
}

#[derive(Clone)]
struct RunState {
    params: ModelParams,
    adam: AdamState,
}

impl Trainer<'_> {
    fn epoch(&mut self, epoch: usize, state: &mut RunState, log: &mut TrainLog) -> Result<()> {
        let lr = if self.cfg.lr_halving {
            lr_schedule(self.cfg.lr0, epoch)
        } else {
            self.cfg.lr0
        };
        self.order.shuffle(&mut self.shuffle_rng);
        let order = std::mem::take(&mut self.order);
        let result = order
            .chunks(self.cfg.batch_size)
            .try_for_each(|chunk| self.batch(chunk, lr, state, log));
        self.order = order;
        result
    }

    fn batch(
        &mut self,
        chunk: &[usize],
        lr: f64,
        state: &mut RunState,
        log: &mut TrainLog,
    ) -> Result<()> {
        let refs: Vec<&WindowPair> = chunk.iter().map(|&i| &self.train[i]).collect();
        let step = state.adam.step + 1;
        let augmented = if self.cfg.uses_alignment() {
            self.cfg
                .modes
                .iter()
                .map(|&m| augment_batch(&refs, m, self.cfg.views, self.aug, &mut self.aug_rng))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Training {
                    step,
                    msg: e.to_string(),
                })?
        } else {
            Vec::new()
        };
        self.tape.clear();
        let pv = state.params.bind(&mut self.tape, true);
        let obj = batch_objective(&mut self.tape, self.model, &pv, &refs, &augmented, self.cfg)?;
        let total = self.tape.value(obj.total).item()?;
        let forecast = self.tape.value(obj.forecast).item()?;
        let align = match obj.align {
            Some(a) => self.tape.value(a).item()?,
            None => 0.0,
        };
        if !total.is_finite() {
            return Err(Error::Training {
                step,
                msg: format!("total loss is {total}"),
            });
        }
        let grads = self.tape.backward(obj.total)?;
        let g: Vec<Tensor> =
            pv.0.iter()
                .zip(&state.params.tensors)
                .map(|(v, p)| grads.get_or_zeros(*v, p.shape()))
                .collect();
        adam_step(&mut state.params.tensors, &g, &mut state.adam, lr)?;
        log.optimizer_steps = state.adam.step;
        if state.adam.step.is_multiple_of(self.cfg.log_every) {
            log.push(TrainRecord {
                step: state.adam.step,
                forecast,
                align,
                total,
                val: None,
                lr,
            });
        }
        self.last = Some(TrainRecord {
            step: state.adam.step,
            forecast,
            align,
            total,
            val: None,
            lr,
        });
        Ok(())
    }
}

pub fn train_model(
    train: &[WindowPair],
    val: &[WindowPair],
    model: &ModelConfig,
    cfg: &TrainConfig,
    aug: &AugmentConfig,
) -> Result<(ModelParams, TrainLog)> {
    let mut log = TrainLog::default();
    let params = train_model_logged(train, val, model, cfg, aug, &mut log)?;
    Ok((params, log))
}

/// [`train_model`] writing into a caller-owned log, which keeps the records
/// up to the failing step when training aborts.
pub fn train_model_logged(
    train: &[WindowPair],
    val: &[WindowPair],
    model: &ModelConfig,
    cfg: &TrainConfig,
    aug: &AugmentConfig,
    log: &mut TrainLog,
) -> Result<ModelParams> {
    cfg.validate()?;
    aug.validate()?;
    model.validate()?;
    if train.is_empty() {
        return Err(Error::Data("no training windows".into()));
    }
    if cfg.early_stopping && val.is_empty() {
        return Err(Error::Data(
            "early stopping needs validation windows".into(),
        ));
    }
    check_pairs(model, train, "train windows")?;
    check_pairs(model, val, "validation windows")?;

    let params = init_model(model)?;
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    aug_rng.set_stream(1);
    let mut trainer = Trainer {
        model,
        cfg,
        aug,
        train,
        order: (0..train.len()).collect(),
        shuffle_rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        aug_rng,
        tape: Tape::new(),
        last: None,
    };
    let state = RunState {
        adam: AdamState::new(&params.tensors),
        params,
    };
    let patience = cfg.early_stopping.then_some(cfg.patience);
    let outcome = run_epochs(cfg.epochs, patience, state, |e, st| {
        trainer.epoch(e, st, log)?;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(evaluate_mse(&st.params, val)?)
        };
        if let Some(mut rec) = trainer.last.take() {
            rec.val = val_loss;
            log.push(rec);
        }
        log.epochs_run = e + 1;
        log::debug!("epoch {} val {:?}", e + 1, val_loss);
        Ok(val_loss)
    })?;
    log.best_epoch = outcome.best_epoch;
    Ok(outcome.state.params)
}
