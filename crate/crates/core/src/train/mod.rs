//! Mini-batch training: cross-entropy loss, AdamW with a cosine schedule,
//! global-norm gradient clipping and best-epoch selection on dev weighted F1.
//!
//! Given the same data, configuration and seed a run is bit-for-bit
//! repeatable on one platform. All randomness (shuffling, dropout masks)
//! comes from one ChaCha8 stream; floating-point results may still differ
//! across CPUs or compiler versions.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledExample, Task};
use crate::depgraph::{build_graph, normalize, DependencyParse, NormalizedAdjacency};
use crate::eval::weighted_metrics;
use crate::model::{argmax, BatchForward, Example, Mode, ModelConfig, ParamKind, SyLstmParams};
use crate::vocab::{Vocabulary, PAD};
use crate::{Error, Result};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Fold the decay into the gradient (plain L2) instead of decoupling it.
    pub coupled_l2: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.001,
            weight_decay: 0.1,
            epochs: 30,
            batch_size: 32,
            seed: 42,
            clip_norm: 5.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            coupled_l2: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return fail(format!("lr0 must be positive, got {}", self.lr0));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return fail(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.clip_norm.is_nan() || self.clip_norm < 0.0 {
            return fail(format!(
                "clip_norm must be non-negative, got {}",
                self.clip_norm
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return fail("adam_eps must be positive".into());
        }
        Ok(())
    }
}

/// `0.5 · lr0 · (1 + cos(π · step / total))`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    0.5 * lr0 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// `−ln p[gold]`, with `p[gold]` clamped at [`PROB_FLOOR`].
pub fn cross_entropy(probabilities: ArrayView1<'_, f64>, gold: usize) -> f64 {
    let p = probabilities[gold];
    if p < PROB_FLOOR {
        log::warn!("probability {p:e} of the gold class clamped to {PROB_FLOOR:e}");
    }
    -p.max(PROB_FLOOR).ln()
}

/// Mean cross-entropy over rows and its gradient with respect to the logits.
pub fn batch_cross_entropy(
    probabilities: ArrayView2<'_, f64>,
    labels: &[usize],
) -> (f64, Array2<f64>) {
    let n = labels.len() as f64;
    let mut d = probabilities.to_owned();
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        loss += cross_entropy(probabilities.row(i), y);
        d[[i, y]] -= 1.0;
    }
    (loss / n, d / n)
}

/// Whether decay applies to a tensor of this kind. Biases and batch-norm
/// scale/shift are never decayed.
pub fn decays(kind: ParamKind) -> bool {
    matches!(kind, ParamKind::Weight | ParamKind::Embedding)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub coupled: bool,
}

/// One AdamW update of a scalar at step `t` (1-based). Returns the new
/// `(θ, m, v)`.
pub fn adamw_scalar(
    theta: f64,
    grad: f64,
    m: f64,
    v: f64,
    t: u64,
    h: &AdamHyper,
) -> (f64, f64, f64) {
    let g = if h.coupled {
        grad + h.weight_decay * theta
    } else {
        grad
    };
    let m = h.beta1 * m + (1.0 - h.beta1) * g;
    let v = h.beta2 * v + (1.0 - h.beta2) * g * g;
    let m_hat = m / (1.0 - h.beta1.powf(t as f64));
    let v_hat = v / (1.0 - h.beta2.powf(t as f64));
    let decay = if h.coupled {
        0.0
    } else {
        h.lr * h.weight_decay * theta
    };
    (theta - h.lr * m_hat / (v_hat.sqrt() + h.eps) - decay, m, v)
}

/// AdamW state: first and second moments per trainable tensor.
#[derive(Debug, Clone)]
pub struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(params: &SyLstmParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. Fails, leaving everything untouched, if any
    /// gradient entry is non-finite. The PAD embedding row and a frozen
    /// embedding are skipped.
    pub fn step(
        &mut self,
        params: &mut SyLstmParams,
        grads: &SyLstmParams,
        lr: f64,
        cfg: &TrainConfig,
    ) -> Result<()> {
        let g_tensors = grads.tensors();
        if let Some(bad) = g_tensors
            .iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFiniteGradient(bad.name.clone()));
        }
        self.t += 1;
        let trainable_embedding = params.embedding.trainable;
        let d_w = params.embedding.dim();
        for (i, (p, g)) in params.tensors_mut().into_iter().zip(&g_tensors).enumerate() {
            let skip_prefix = match p.kind {
                ParamKind::Embedding if !trainable_embedding => continue,
                ParamKind::Embedding => (PAD + 1) * d_w,
                _ => 0,
            };
            let h = AdamHyper {
                lr,
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                eps: cfg.adam_eps,
                weight_decay: if decays(p.kind) {
                    cfg.weight_decay
                } else {
                    0.0
                },
                coupled: cfg.coupled_l2,
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in skip_prefix..p.data.len() {
                let (th, mk, vk) = adamw_scalar(p.data[k], g.data[k], m[k], v[k], self.t, &h);
                p.data[k] = th;
                m[k] = mk;
                v[k] = vk;
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut SyLstmParams, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for t in grads.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// An encoded, graph-aligned, labelled example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub id: String,
    pub ids: Vec<usize>,
    pub adj: NormalizedAdjacency,
    pub label: usize,
}

impl TrainExample {
    pub fn as_example(&self) -> Example<'_> {
        Example {
            ids: &self.ids,
            adj: &self.adj,
        }
    }
}

/// Token ids and normalised adjacency for one parse, truncated to `max_len`.
pub fn encode_parse(
    parse: &DependencyParse,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<(Vec<usize>, NormalizedAdjacency)> {
    let len = parse.len().min(max_len);
    let ids = vocab.encode(&parse.tokens()[..len]);
    let adj = normalize(&build_graph(parse).truncate(max_len), 1.0)?;
    Ok((ids, adj))
}

/// Pairs every example with its parse. Fails before doing any encoding if
/// a parse or label is missing, listing the offending ids.
pub fn align_examples(
    examples: &[LabeledExample],
    parses: &HashMap<String, DependencyParse>,
    vocab: &Vocabulary,
    task: Task,
    max_len: usize,
) -> Result<Vec<TrainExample>> {
    let missing: Vec<&str> = examples
        .iter()
        .filter(|e| !parses.contains_key(&e.id))
        .map(|e| e.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Alignment(format!(
            "{} example(s) without a parse: {}",
            missing.len(),
            list_ids(&missing)
        )));
    }
    let unlabeled: Vec<&str> = examples
        .iter()
        .filter(|e| e.label(task).is_none())
        .map(|e| e.id.as_str())
        .collect();
    if !unlabeled.is_empty() {
        return Err(Error::Alignment(format!(
            "{} example(s) without a task {task} label: {}",
            unlabeled.len(),
            list_ids(&unlabeled)
        )));
    }
    examples
        .iter()
        .map(|e| {
            let (ids, adj) = encode_parse(&parses[&e.id], vocab, max_len)?;
            Ok(TrainExample {
                id: e.id.clone(),
                ids,
                adj,
                label: e.label(task).expect("checked above"),
            })
        })
        .collect()
}

fn list_ids(ids: &[&str]) -> String {
    const SHOWN: usize = 20;
    let mut s = ids
        .iter()
        .take(SHOWN)
        .copied()
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > SHOWN {
        let _ = write!(s, ", … ({} more)", ids.len() - SHOWN);
    }
    s
}

/// Checks that every example fits the model before training starts.
fn preflight(
    cfg: &ModelConfig,
    params: &SyLstmParams,
    set: &str,
    examples: &[TrainExample],
) -> Result<()> {
    let mut bad = Vec::new();
    for e in examples {
        let len = crate::model::network::effective_len(&e.ids);
        let ok = len > 0
            && len <= cfg.max_len
            && (e.adj.n() == len || e.adj.n() == e.ids.len())
            && e.ids.iter().all(|&i| i < params.vocab_size())
            && e.label < cfg.n_classes;
        if !ok {
            bad.push(e.id.as_str());
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Alignment(format!(
            "{} {set} example(s) do not fit the model (empty, too long, graph size, id or label range): {}",
            bad.len(),
            list_ids(&bad)
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    /// Dev weighted F1, ×100.
    pub dev_wf1: f64,
    /// Learning rate of the epoch's last update.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the highest dev weighted F1 (earliest on ties).
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }

    /// `epoch,train_loss,dev_loss,dev_wf1,lr`, floats in shortest
    /// round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,dev_loss,dev_wf1,lr\n");
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?}",
                r.epoch, r.train_loss, r.dev_loss, r.dev_wf1, r.lr
            );
        }
        s
    }
}

/// Eval-mode loss, weighted F1 (×100) and predictions over `examples`.
pub fn evaluate(
    cfg: &ModelConfig,
    params: &SyLstmParams,
    examples: &[TrainExample],
    batch_size: usize,
) -> Result<(f64, f64, Vec<usize>)> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate".into()));
    }
    let mut loss = 0.0;
    let mut pred = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        let batch: Vec<Example<'_>> = chunk.iter().map(TrainExample::as_example).collect();
        let fwd = BatchForward::run(cfg, params, &batch, Mode::Eval)?;
        for (i, e) in chunk.iter().enumerate() {
            let p = fwd.probabilities.row(i);
            loss += cross_entropy(p, e.label);
            pred.push(argmax(&p.to_owned()));
        }
    }
    let gold: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let classes: Vec<String> = (0..cfg.n_classes).map(|c| c.to_string()).collect();
    let wf1 = weighted_metrics(&gold, &pred, &classes)?.weighted.f1;
    Ok((loss / examples.len() as f64, wf1, pred))
}

pub type EpochCallback<'a> = &'a mut dyn FnMut(&EpochRecord, &SyLstmParams);

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the best dev epoch.
    pub best: SyLstmParams,
    /// Parameters after the final epoch.
    pub last: SyLstmParams,
    pub history: TrainHistory,
}

/// Runs the full schedule from `params`. The callback, if any, sees each
/// epoch's record and the parameters at that point.
pub fn train(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut params: SyLstmParams,
    train_set: &[TrainExample],
    dev_set: &[TrainExample],
    mut on_epoch: Option<EpochCallback<'_>>,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    cfg.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::InvalidArgument(
            "training needs non-empty train and dev sets".into(),
        ));
    }
    preflight(model_cfg, &params, "train", train_set)?;
    preflight(model_cfg, &params, "dev", dev_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut adam = AdamW::new(&params);
    let mut grads = params.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, SyLstmParams)> = None;
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut lr = cfg.lr0;
        for chunk in order.chunks(cfg.batch_size) {
            lr = cosine_lr(step, total, cfg.lr0);
            let batch: Vec<Example<'_>> =
                chunk.iter().map(|&i| train_set[i].as_example()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set[i].label).collect();
            let mode = Mode::Train {
                dropout_seed: rng.gen(),
            };
            let fwd = BatchForward::run(model_cfg, &params, &batch, mode)?;
            let (loss, d_logits) = batch_cross_entropy(fwd.probabilities.view(), &labels);
            for t in grads.tensors_mut() {
                t.data.fill(0.0);
            }
            fwd.backward(&params, d_logits.view(), &mut grads)?;
            clip_grad_norm(&mut grads, cfg.clip_norm);
            adam.step(&mut params, &grads, lr, cfg)?;
            fwd.update_running_stats(&mut params, model_cfg.bn_momentum);
            loss_sum += loss * chunk.len() as f64;
            step += 1;
        }
        let (dev_loss, dev_wf1, _) = evaluate(model_cfg, &params, dev_set, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            dev_loss,
            dev_wf1,
            lr,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, dev loss {:.4}, dev wF1 {:.2}, lr {:.2e}",
            record.train_loss,
            record.dev_loss,
            record.dev_wf1,
            record.lr
        );
        if best.as_ref().is_none_or(|(b, _)| dev_wf1 > *b) {
            best = Some((dev_wf1, params.clone()));
            history.best_epoch = epoch;
        }
        if let Some(cb) = on_epoch.as_mut() {
            cb(&record, &params);
        }
        history.epochs.push(record);
    }
    let (_, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        last: params,
        history,
    })
}

#[cfg(test)]
mod tests;
