//! Batched forward pass with the caches backpropagation needs.
//!
//! Sequences in a batch run through the BiLSTM independently. Their outputs
//! are then stacked row-wise so both batch norms see every real token of
//! the batch, and the adjacency operators are packed block-diagonally so the
//! graph convolution is one sparse product.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lstm::{self, LstmTrace};
use super::norm::{self, NormCache};
use super::{ForwardTrace, Mode, ModelConfig, Pooling, SyLstmParams};
use crate::depgraph::{batch_graphs, NormalizedAdjacency};
use crate::vocab::PAD;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub ids: &'a [usize],
    pub adj: &'a NormalizedAdjacency,
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Inverted dropout mask: entries are 0 with probability `p`, else 1/(1−p).
pub(crate) fn dropout_mask(dim: (usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    if p == 0.0 {
        return Array2::ones(dim);
    }
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn(dim, |_| if rng.gen::<f64>() < p { 0.0 } else { keep })
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn relu_grad(d: Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut d = d;
    d.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
    d
}

pub(crate) fn softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
    out
}

/// Number of ids left after dropping trailing PADs.
pub fn effective_len(ids: &[usize]) -> usize {
    ids.iter().rposition(|&id| id != PAD).map_or(0, |p| p + 1)
}

#[derive(Debug, Clone)]
pub(crate) struct SequenceCache {
    pub ids: Vec<usize>,
    pub offset: usize,
    /// `layers[l] = [forward, backward]`.
    pub layers: Vec<[LstmTrace; 2]>,
    /// Dropout applied to the input of layer `l + 1`.
    pub masks: Vec<Array2<f64>>,
}

impl SequenceCache {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    fn top(&self) -> &[LstmTrace; 2] {
        self.layers.last().expect("at least one layer")
    }

    pub fn h_seq(&self) -> Array2<f64> {
        let [f, b] = self.top();
        concatenate![Axis(1), f.h, b.h]
    }

    pub fn h_final(&self) -> Array1<f64> {
        let [f, b] = self.top();
        concatenate![Axis(0), lstm::final_state(f), lstm::final_state(b)]
    }
}

/// A mini-batch pushed through the network, keeping every intermediate.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub(crate) examples: Vec<SequenceCache>,
    pooling: Pooling,
    hidden: usize,
    adj: NormalizedAdjacency,
    bn1: NormCache,
    l: Array2<f64>,
    al: Array2<f64>,
    pre: Array2<f64>,
    z: Array2<f64>,
    bn2: NormCache,
    mask2: Option<Array2<f64>>,
    zd: Array2<f64>,
    f_pre: Array2<f64>,
    f: Array2<f64>,
    /// Row (packed index) selected per example and column under max pooling.
    pool_arg: Option<Array2<usize>>,
    pub pooled: Array2<f64>,
    /// `pooled ∥ h_final` per example.
    pub features: Array2<f64>,
    pub logits: Array2<f64>,
    pub probabilities: Array2<f64>,
}

fn align<'a>(
    i: usize,
    ex: &Example<'a>,
    cfg: &ModelConfig,
    vocab: usize,
) -> Result<(Vec<usize>, NormalizedAdjacency)> {
    let len = effective_len(ex.ids);
    if len == 0 {
        return Err(Error::InvalidArgument(format!(
            "example {i} has no non-PAD token"
        )));
    }
    if len > cfg.max_len {
        return Err(Error::InvalidArgument(format!(
            "example {i} has {len} tokens, more than max_len = {}",
            cfg.max_len
        )));
    }
    if let Some(&bad) = ex.ids[..len].iter().find(|&&id| id >= vocab) {
        return Err(Error::InvalidArgument(format!(
            "example {i}: id {bad} outside a vocabulary of {vocab}"
        )));
    }
    let n = ex.adj.n();
    let adj = if n == len {
        ex.adj.clone()
    } else if n == ex.ids.len() {
        ex.adj.leading_block(len).map_err(|e| {
            Error::Alignment(format!("example {i}: PAD nodes must be isolated ({e})"))
        })?
    } else {
        return Err(Error::Alignment(format!(
            "example {i}: graph has {n} nodes but the sequence has {len} tokens"
        )));
    };
    Ok((ex.ids[..len].to_vec(), adj))
}

impl BatchForward {
    pub fn run(
        cfg: &ModelConfig,
        params: &SyLstmParams,
        batch: &[Example<'_>],
        mode: Mode,
    ) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if params.embedding.dim() != cfg.d_w || params.lstm.len() != cfg.lstm_layers {
            return Err(Error::Shape(
                "parameters do not match the model configuration".into(),
            ));
        }
        let train = mode.is_train();
        let mut rng = match mode {
            Mode::Train { dropout_seed } => Some(rng(dropout_seed)),
            Mode::Eval => None,
        };
        let h = cfg.lstm_hidden;

        let mut examples = Vec::with_capacity(batch.len());
        let mut graphs = Vec::with_capacity(batch.len());
        let mut offset = 0;
        for (i, ex) in batch.iter().enumerate() {
            let (ids, adj) = align(i, ex, cfg, params.vocab_size())?;
            let mut input = params.embedding.lookup(&ids);
            let mut layers = Vec::with_capacity(cfg.lstm_layers);
            let mut masks = Vec::new();
            for (l, [cf, cb]) in params.lstm.iter().enumerate() {
                if l > 0 {
                    if let Some(r) = rng.as_mut() {
                        let m = dropout_mask(input.dim(), cfg.lstm_dropout, r);
                        input *= &m;
                        masks.push(m);
                    }
                }
                let f = lstm::forward(cf, input.clone(), false);
                let b = lstm::forward(cb, input, true);
                input = concatenate![Axis(1), f.h, b.h];
                layers.push([f, b]);
            }
            let len = ids.len();
            examples.push(SequenceCache {
                ids,
                offset,
                layers,
                masks,
            });
            graphs.push(adj);
            offset += len;
        }
        let (adj, _) = batch_graphs(&graphs)?;

        let seqs: Vec<Array2<f64>> = examples.iter().map(|e| e.h_seq()).collect();
        let views: Vec<ArrayView2<'_, f64>> = seqs.iter().map(|a| a.view()).collect();
        let hstack = ndarray::concatenate(Axis(0), &views).expect("equal widths");
        let (l, bn1) = norm::forward(&params.bn1, hstack.view(), train, cfg.bn_eps);
        let al = adj.matmul(l.view())?;
        let pre = al.dot(&params.gcn_weight);
        let z = relu(&pre);
        let (zb, bn2) = norm::forward(&params.bn2, z.view(), train, cfg.bn_eps);
        let (zd, mask2) = match rng.as_mut() {
            Some(r) => {
                let m = dropout_mask(zb.dim(), cfg.gcn_dropout, r);
                (&zb * &m, Some(m))
            }
            None => (zb, None),
        };
        let f_pre = zd.dot(&params.ffnn_weight) + &params.ffnn_bias;
        let f = relu(&f_pre);

        let n_ex = examples.len();
        let fo = cfg.ffnn_out;
        let mut pooled = Array2::zeros((n_ex, fo));
        let mut pool_arg = None;
        match cfg.pooling {
            Pooling::Mean => {
                for (e, ex) in examples.iter().enumerate() {
                    let block = f.slice(s![ex.offset..ex.offset + ex.len(), ..]);
                    pooled
                        .row_mut(e)
                        .assign(&block.mean_axis(Axis(0)).expect("non-empty"));
                }
            }
            Pooling::Max => {
                let mut arg = Array2::zeros((n_ex, fo));
                for (e, ex) in examples.iter().enumerate() {
                    for c in 0..fo {
                        let mut best = ex.offset;
                        for r in ex.offset..ex.offset + ex.len() {
                            if f[[r, c]] > f[[best, c]] {
                                best = r;
                            }
                        }
                        arg[[e, c]] = best;
                        pooled[[e, c]] = f[[best, c]];
                    }
                }
                pool_arg = Some(arg);
            }
        }
        let mut features = Array2::zeros((n_ex, fo + 2 * h));
        features.slice_mut(s![.., ..fo]).assign(&pooled);
        for (e, ex) in examples.iter().enumerate() {
            features.slice_mut(s![e, fo..]).assign(&ex.h_final());
        }
        let logits = features.dot(&params.classifier_weight) + &params.classifier_bias;
        let probabilities = softmax(logits.view());
        Ok(Self {
            examples,
            pooling: cfg.pooling,
            hidden: h,
            adj,
            bn1,
            l,
            al,
            pre,
            z,
            bn2,
            mask2,
            zd,
            f_pre,
            f,
            pool_arg,
            pooled,
            features,
            logits,
            probabilities,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Batch-normalised BiLSTM outputs, the graph convolution's input.
    pub fn normalized_sequence(&self, i: usize) -> ArrayView2<'_, f64> {
        let ex = &self.examples[i];
        self.l.slice(s![ex.offset..ex.offset + ex.len(), ..])
    }

    pub fn trace(&self, i: usize) -> ForwardTrace {
        let ex = &self.examples[i];
        ForwardTrace {
            h_seq: ex.h_seq(),
            h_final: ex.h_final(),
            z_gcn: self
                .z
                .slice(s![ex.offset..ex.offset + ex.len(), ..])
                .to_owned(),
            pooled: self.pooled.row(i).to_owned(),
            logits: self.logits.row(i).to_owned(),
            probabilities: self.probabilities.row(i).to_owned(),
        }
    }

    /// Folds this batch's statistics into the batch-norm running averages.
    /// A no-op for eval-mode passes.
    pub fn update_running_stats(&self, params: &mut SyLstmParams, momentum: f64) {
        norm::update_running(&mut params.bn1, &self.bn1, momentum);
        norm::update_running(&mut params.bn2, &self.bn2, momentum);
    }

    /// Backpropagates `d_logits` (one row per example) and adds the
    /// parameter gradients into `grads`. The embedding gradient is skipped
    /// when the table is frozen.
    pub fn backward(
        &self,
        params: &SyLstmParams,
        d_logits: ArrayView2<'_, f64>,
        grads: &mut SyLstmParams,
    ) -> Result<()> {
        if d_logits.dim() != self.logits.dim() {
            return Err(Error::Shape(format!(
                "logit gradient is {:?}, logits are {:?}",
                d_logits.dim(),
                self.logits.dim()
            )));
        }
        let h = self.hidden;
        let fo = self.pooled.ncols();

        grads.classifier_weight += &self.features.t().dot(&d_logits);
        grads.classifier_bias += &d_logits.sum_axis(Axis(0));
        let d_feat = d_logits.dot(&params.classifier_weight.t());

        let mut d_f = Array2::<f64>::zeros(self.f.dim());
        for (e, ex) in self.examples.iter().enumerate() {
            let d_pool = d_feat.slice(s![e, ..fo]);
            match (&self.pooling, &self.pool_arg) {
                (Pooling::Max, Some(arg)) => {
                    for c in 0..fo {
                        d_f[[arg[[e, c]], c]] += d_pool[c];
                    }
                }
                _ => {
                    let scale = 1.0 / ex.len() as f64;
                    for r in ex.offset..ex.offset + ex.len() {
                        d_f.row_mut(r).scaled_add(scale, &d_pool);
                    }
                }
            }
        }
        let d_fpre = relu_grad(d_f, &self.f_pre);
        grads.ffnn_weight += &self.zd.t().dot(&d_fpre);
        grads.ffnn_bias += &d_fpre.sum_axis(Axis(0));
        let mut d_zb = d_fpre.dot(&params.ffnn_weight.t());
        if let Some(m) = &self.mask2 {
            d_zb *= m;
        }
        let d_z = norm::backward(&params.bn2, &self.bn2, d_zb.view(), &mut grads.bn2);
        let d_pre = relu_grad(d_z, &self.pre);
        grads.gcn_weight += &self.al.t().dot(&d_pre);
        let d_al = d_pre.dot(&params.gcn_weight.t());
        // Â is symmetric, so Âᵀ·G = Â·G.
        let d_l = self.adj.matmul(d_al.view())?;
        let d_hstack = norm::backward(&params.bn1, &self.bn1, d_l.view(), &mut grads.bn1);

        for (e, ex) in self.examples.iter().enumerate() {
            let len = ex.len();
            let mut d_top = d_hstack
                .slice(s![ex.offset..ex.offset + len, ..])
                .to_owned();
            {
                let d_final = d_feat.slice(s![e, fo..]);
                let mut last_fwd = d_top.slice_mut(s![len - 1, ..h]);
                last_fwd += &d_final.slice(s![..h]);
                let mut first_bwd = d_top.slice_mut(s![0, h..]);
                first_bwd += &d_final.slice(s![h..]);
            }
            let mut d_out = d_top;
            for l in (0..ex.layers.len()).rev() {
                let [tf, tb] = &ex.layers[l];
                let [cf, cb] = &params.lstm[l];
                let [gf, gb] = &mut grads.lstm[l];
                let mut d_in = lstm::backward(cf, tf, d_out.slice(s![.., ..h]), gf);
                d_in += &lstm::backward(cb, tb, d_out.slice(s![.., h..]), gb);
                if l > 0 {
                    if let Some(m) = ex.masks.get(l - 1) {
                        d_in *= m;
                    }
                }
                d_out = d_in;
            }
            if params.embedding.trainable {
                for (r, &id) in ex.ids.iter().enumerate() {
                    let mut row = grads.embedding.values.row_mut(id);
                    row += &d_out.row(r);
                }
            }
        }
        Ok(())
    }
}
