//! Forecast loss, batch softmax similarities in latent and output space, and
//! the alignment objective that ties them together.
//!
//! For sample `i`, view `a` and step `t` the similarity is
//! `-log( exp(s(z_i, z'_{a,i})) / D )`, where `D` sums `exp(s(z_i, ·))` over
//! view `a` of every sample, every other original, and every view of `i`, and
//! `s(u, v) = <u, v>/τ`. Augmented items are always laid out view-major:
//! index `a·B + i` holds view `a` of sample `i`.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::numeric::{logsumexp, CustomOp, Tape, Tensor, Var};

/// Mean squared error over all entries.
pub fn forecast_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Dimension {
            op: "forecast_loss",
            lhs: pred.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Contract("forecast_loss of empty tensors".into()));
    }
    let sse: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(sse / pred.len() as f64)
}

/// Tape version of [`forecast_loss`].
pub fn mse_tape(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    tape.mean(sq, None)
}

pub fn total_loss(forecast: f64, align: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Contract(format!(
            "alignment weight must be >= 0, got {lambda}"
        )));
    }
    Ok(forecast + lambda * align)
}

/// Latents and targets of a batch of `B` originals and their `A` views each.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBatch {
    /// `B` latent sequences, each `T'×D`.
    pub z: Vec<Tensor>,
    /// `B` targets, each `H×C`.
    pub y: Vec<Tensor>,
    /// `A·B` augmented latents, view-major.
    pub z_aug: Vec<Tensor>,
    /// `A·B` augmented targets, view-major.
    pub y_aug: Vec<Tensor>,
    pub views: usize,
    pub tau: f64,
}

fn check_field(orig: &[Tensor], aug: &[Tensor], views: usize, what: &str) -> Result<()> {
    let Some(first) = orig.first() else {
        return Err(Error::Contract("similarity batch needs B >= 1".into()));
    };
    if aug.len() != views * orig.len() {
        return Err(Error::Contract(format!(
            "{what}: expected {} augmented items for B = {} and A = {views}, got {}",
            views * orig.len(),
            orig.len(),
            aug.len()
        )));
    }
    for t in orig.iter().chain(aug) {
        if t.ndim() != 2 || t.shape() != first.shape() {
            return Err(Error::Dimension {
                op: "similarity batch",
                lhs: t.shape().to_vec(),
                rhs: first.shape().to_vec(),
            });
        }
    }
    Ok(())
}

fn row(t: &Tensor, step: usize) -> &[f64] {
    let w = t.shape()[1];
    &t.data()[step * w..(step + 1) * w]
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Per-step similarity of sample `i` and view `a` within one field.
pub fn step_similarity(
    orig: &[Tensor],
    aug: &[Tensor],
    views: usize,
    tau: f64,
    i: usize,
    a: usize,
    t: usize,
) -> f64 {
    let b = orig.len();
    let u = row(&orig[i], t);
    let s = |v: &Tensor| dot(u, row(v, t)) / tau;
    let pos = s(&aug[a * b + i]);
    let mut terms = Vec::with_capacity(2 * b + views);
    for j in 0..b {
        terms.push(s(&aug[a * b + j]));
        if j != i {
            terms.push(s(&orig[j]));
        }
    }
    for k in 0..views {
        terms.push(s(&aug[k * b + i]));
    }
    logsumexp(&terms).expect("non-empty denominator") - pos
}

/// Time average of [`step_similarity`] over the field's sequence length.
pub fn sequence_similarity(
    orig: &[Tensor],
    aug: &[Tensor],
    views: usize,
    tau: f64,
    i: usize,
    a: usize,
) -> f64 {
    let steps = orig[i].shape()[0];
    (0..steps)
        .map(|t| step_similarity(orig, aug, views, tau, i, a, t))
        .sum::<f64>()
        / steps as f64
}

impl SimilarityBatch {
    pub fn new(
        z: Vec<Tensor>,
        y: Vec<Tensor>,
        z_aug: Vec<Tensor>,
        y_aug: Vec<Tensor>,
        views: usize,
        tau: f64,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Contract(format!(
                "temperature must be > 0, got {tau}"
            )));
        }
        if views == 0 {
            return Err(Error::Contract("similarity batch needs A >= 1".into()));
        }
        if z.len() != y.len() {
            return Err(Error::Contract(format!(
                "{} latents but {} targets",
                z.len(),
                y.len()
            )));
        }
        check_field(&z, &z_aug, views, "latents")?;
        check_field(&y, &y_aug, views, "targets")?;
        Ok(Self {
            z,
            y,
            z_aug,
            y_aug,
            views,
            tau,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.z.len()
    }

    pub fn latent_similarity(&self, i: usize, a: usize, t: usize) -> f64 {
        step_similarity(&self.z, &self.z_aug, self.views, self.tau, i, a, t)
    }

    pub fn output_similarity(&self, i: usize, a: usize, t: usize) -> f64 {
        step_similarity(&self.y, &self.y_aug, self.views, self.tau, i, a, t)
    }

    /// Mean over `(i, a)` of the absolute gap between time-averaged latent
    /// and output similarities.
    pub fn alignment_loss(&self) -> f64 {
        let (b, views) = (self.batch_size(), self.views);
        let mut total = 0.0;
        for i in 0..b {
            for a in 0..views {
                let sz = sequence_similarity(&self.z, &self.z_aug, views, self.tau, i, a);
                let sy = sequence_similarity(&self.y, &self.y_aug, views, self.tau, i, a);
                total += (sz - sy).abs();
            }
        }
        total / (b * views) as f64
    }
}

/// Per-step similarities `[T, B, A]` from the scaled Gram tensor
/// `[T, B, B(1+A)]`, whose columns are the `B` originals followed by the
/// view-major augmentations. Each row's exponentials are computed once and
/// shared by all views.
#[derive(Debug)]
struct Contrastive {
    batch: usize,
    views: usize,
    /// `exp(g - m)` per Gram entry, `m` the row max over non-self columns.
    weights: Vec<f64>,
    /// `1/S` per `(t, i, a)`, `S` the shifted denominator sum.
    inv_sums: Vec<f64>,
    /// Log-denominators, used for rows whose shifted sums underflowed.
    lse: Vec<f64>,
    /// Rows `(t, i)` handled exactly because a shifted sum underflowed.
    exact_rows: Vec<bool>,
}

impl Contrastive {
    fn forward(gram: &Tensor, batch: usize, views: usize) -> (Tensor, Self) {
        let shape = gram.shape();
        let (steps, w) = (shape[0], shape[2]);
        let aug = |a: usize, j: usize| batch + a * batch + j;
        let g = gram.data();
        let mut weights = vec![0.0; g.len()];
        let mut inv_sums = vec![0.0; steps * batch * views];
        let mut lse = vec![0.0; steps * batch * views];
        let mut exact_rows = vec![false; steps * batch];
        let mut out = vec![0.0; steps * batch * views];
        let mut aug_sums = vec![0.0; views];
        for row in 0..steps * batch {
            let i = row % batch;
            let gr = &g[row * w..(row + 1) * w];
            let er = &mut weights[row * w..(row + 1) * w];
            let mut m = f64::NEG_INFINITY;
            for (c, v) in gr.iter().enumerate() {
                if c != i && *v > m {
                    m = *v;
                }
            }
            for (e, v) in er.iter_mut().zip(gr) {
                *e = (v - m).exp();
            }
            er[i] = 0.0;
            let orig: f64 = er[..batch].iter().sum();
            let own: f64 = (0..views).map(|k| er[aug(k, i)]).sum();
            for (a, s) in aug_sums.iter_mut().enumerate() {
                *s = er[aug(a, 0)..aug(a, 0) + batch].iter().sum();
            }
            for a in 0..views {
                let k = row * views + a;
                let sum = aug_sums[a] + orig + own;
                if sum > 0.0 && sum.is_finite() {
                    inv_sums[k] = 1.0 / sum;
                    lse[k] = m + sum.ln();
                } else {
                    exact_rows[row] = true;
                    lse[k] = Self::exact_lse(gr, batch, views, i, a);
                }
                out[k] = lse[k] - gr[aug(a, i)];
            }
        }
        let value = Tensor::new(vec![steps, batch, views], out).expect("similarity shape");
        (
            value,
            Self {
                batch,
                views,
                weights,
                inv_sums,
                lse,
                exact_rows,
            },
        )
    }

    fn exact_lse(gr: &[f64], batch: usize, views: usize, i: usize, a: usize) -> f64 {
        let mut terms = Vec::with_capacity(2 * batch + views);
        for j in 0..batch {
            terms.push(gr[batch + a * batch + j]);
            if j != i {
                terms.push(gr[j]);
            }
        }
        terms.extend((0..views).map(|k| gr[batch + k * batch + i]));
        logsumexp(&terms).expect("non-empty denominator")
    }
}

impl CustomOp for Contrastive {
    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let (batch, views) = (self.batch, self.views);
        let gram = inputs[0];
        let w = gram.shape()[2];
        let g = gram.data();
        let go = grad.data();
        let aug = |a: usize, j: usize| batch + a * batch + j;
        let mut d = vec![0.0; g.len()];
        for (row, exact) in self.exact_rows.iter().enumerate() {
            let i = row % batch;
            let dr = &mut d[row * w..(row + 1) * w];
            let gor = &go[row * views..(row + 1) * views];
            if *exact {
                let gr = &g[row * w..(row + 1) * w];
                for (a, &ga) in gor.iter().enumerate() {
                    let l = self.lse[row * views + a];
                    let p = |c: usize| (gr[c] - l).exp();
                    for j in 0..batch {
                        dr[aug(a, j)] += ga * p(aug(a, j));
                        if j != i {
                            dr[j] += ga * p(j);
                        }
                    }
                    for k in 0..views {
                        dr[aug(k, i)] += ga * p(aug(k, i));
                    }
                    dr[aug(a, i)] -= ga;
                }
                continue;
            }
            let er = &self.weights[row * w..(row + 1) * w];
            let inv = &self.inv_sums[row * views..(row + 1) * views];
            let shared: f64 = gor.iter().zip(inv).map(|(ga, r)| ga * r).sum();
            for j in (0..batch).filter(|j| *j != i) {
                dr[j] = er[j] * shared;
            }
            for (a, (&ga, &r)) in gor.iter().zip(inv).enumerate() {
                let f = ga * r;
                for j in 0..batch {
                    let c = aug(a, j);
                    dr[c] = er[c] * f;
                }
            }
            for (k, &ga) in gor.iter().enumerate() {
                let c = aug(k, i);
                dr[c] += er[c] * shared - ga;
            }
        }
        vec![Tensor::new(gram.shape().to_vec(), d).expect("gram shape")]
    }
}

/// Time-averaged similarities `[B, A]` of `orig` (`[B, T, F]`) against its
/// view-major augmentations `aug` (`[A·B, T, F]`).
pub fn similarity_tape(
    tape: &mut Tape,
    orig: Var,
    aug: Var,
    views: usize,
    tau: f64,
) -> Result<Var> {
    let os = tape.shape(orig).to_vec();
    let as_ = tape.shape(aug).to_vec();
    if os.len() != 3 || views == 0 || as_ != [views * os[0], os[1], os[2]] {
        return Err(Error::Dimension {
            op: "similarity",
            lhs: os,
            rhs: as_,
        });
    }
    let all = tape.concat(&[orig, aug], 0)?;
    let p = tape.permute(orig, &[1, 0, 2])?;
    let q = tape.permute(all, &[1, 2, 0])?;
    let gram = tape.matmul(p, q)?;
    let gram = tape.scale(gram, 1.0 / tau);
    let (value, op) = Contrastive::forward(tape.value(gram), os[0], views);
    let sim = tape.custom(&[gram], value, Rc::new(op));
    tape.mean(sim, Some(0))
}

/// Alignment loss on the tape from latent and target similarity fields,
/// each given as `(originals, view-major augmentations)`.
pub fn alignment_tape(
    tape: &mut Tape,
    latent: (Var, Var),
    target: (Var, Var),
    views: usize,
    tau: f64,
) -> Result<Var> {
    let sz = similarity_tape(tape, latent.0, latent.1, views, tau)?;
    let sy = similarity_tape(tape, target.0, target.1, views, tau)?;
    let gap = tape.sub(sz, sy)?;
    let gap = tape.abs(gap);
    tape.mean(gap, None)
}
