//! The network: embedding, two-layer BiLSTM, batch norm, one graph
//! convolution over the dependency tree, a feed-forward layer, node pooling,
//! and a linear softmax head fed with the pooled features and the BiLSTM
//! final states.
//!
//! Everything is computed in `f64`. The forward pass here is written for
//! clarity of the single-example API; training goes through
//! [`network::BatchForward`], which shares batch-norm statistics across a
//! mini-batch and keeps what backpropagation needs.

pub mod checkpoint;
mod lstm;
pub mod network;
mod norm;
mod params;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::depgraph::NormalizedAdjacency;
use crate::{Error, Result};

pub use network::{BatchForward, Example};
pub use params::{BatchNorm, LstmCell, ParamCount, ParamKind, SyLstmParams, Tensor, TensorMut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_w: usize,
    /// Hidden units per direction.
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    /// Dropout between BiLSTM layers.
    pub lstm_dropout: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub gcn_out: usize,
    /// Dropout applied after the second batch norm.
    pub gcn_dropout: f64,
    pub ffnn_out: usize,
    pub n_classes: usize,
    pub max_len: usize,
    pub pooling: Pooling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_w: 200,
            lstm_hidden: 32,
            lstm_layers: 2,
            lstm_dropout: 0.4,
            bn_momentum: 0.6,
            bn_eps: 1e-5,
            gcn_out: 32,
            gcn_dropout: 0.5,
            ffnn_out: 32,
            n_classes: 2,
            max_len: 64,
            pooling: Pooling::Mean,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_w", self.d_w),
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_layers", self.lstm_layers),
            ("gcn_out", self.gcn_out),
            ("ffnn_out", self.ffnn_out),
            ("n_classes", self.n_classes),
            ("max_len", self.max_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        for (name, p) in [
            ("lstm_dropout", self.lstm_dropout),
            ("gcn_dropout", self.gcn_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1), got {p}"
                )));
            }
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bn_momentum must lie in (0, 1), got {}",
                self.bn_momentum
            )));
        }
        if self.bn_eps.is_nan() || self.bn_eps <= 0.0 {
            return Err(Error::InvalidArgument("bn_eps must be positive".into()));
        }
        Ok(())
    }

    /// Width of the BiLSTM output (both directions).
    pub fn seq_dim(&self) -> usize {
        2 * self.lstm_hidden
    }
}

/// Train mode samples dropout masks from `dropout_seed` and normalises with
/// batch statistics; eval mode is deterministic and uses running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { dropout_seed: u64 },
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Layer-2 BiLSTM outputs before batch norm, T × 2h.
    pub h_seq: Array2<f64>,
    /// Forward state at the last token ∥ backward state at the first.
    pub h_final: Array1<f64>,
    /// `ReLU(Â · bn1(H) · W)`, T × gcn_out, before the second batch norm.
    pub z_gcn: Array2<f64>,
    pub pooled: Array1<f64>,
    pub logits: Array1<f64>,
    pub probabilities: Array1<f64>,
}

/// `ReLU(Â · H · W)`.
pub fn gcn_propagate(
    adj: &NormalizedAdjacency,
    h: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if h.ncols() != w.nrows() {
        return Err(Error::Shape(format!(
            "features have {} columns but the weight has {} rows",
            h.ncols(),
            w.nrows()
        )));
    }
    Ok(adj.matmul(h)?.dot(&w).mapv(|v| v.max(0.0)))
}

/// BiLSTM encoding of one sequence: `(H_seq, h_final)`. Trailing PAD ids
/// are dropped first.
pub fn semantic_encode(
    cfg: &ModelConfig,
    params: &SyLstmParams,
    ids: &[usize],
    mode: Mode,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let adj = NormalizedAdjacency::identity(ids.len());
    let fwd = BatchForward::run(cfg, params, &[Example { ids, adj: &adj }], mode)?;
    let ex = &fwd.examples[0];
    Ok((ex.h_seq(), ex.h_final()))
}

/// Syntactic encoding of already normalised node features `l` (the BiLSTM
/// output after the first batch norm): graph convolution, then the second
/// batch norm and, in train mode, dropout.
pub fn syntactic_encode(
    cfg: &ModelConfig,
    params: &SyLstmParams,
    l: ArrayView2<'_, f64>,
    adj: &NormalizedAdjacency,
    mode: Mode,
) -> Result<Array2<f64>> {
    let z = gcn_propagate(adj, l, params.gcn_weight.view())?;
    let (zb, _) = norm::forward(&params.bn2, z.view(), mode.is_train(), cfg.bn_eps);
    Ok(match mode {
        Mode::Train { dropout_seed } => {
            let mask =
                network::dropout_mask(z.dim(), cfg.gcn_dropout, &mut network::rng(dropout_seed));
            zb * &mask
        }
        Mode::Eval => zb,
    })
}

/// Eval-mode path from normalised node features to logits: graph
/// convolution, second batch norm, feed-forward layer, pooling, and the
/// classifier over `pooled ∥ h_final`. Returns `(pooled, logits)`.
pub fn syntactic_head(
    cfg: &ModelConfig,
    params: &SyLstmParams,
    l: ArrayView2<'_, f64>,
    adj: &NormalizedAdjacency,
    h_final: ArrayView1<'_, f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if l.nrows() == 0 {
        return Err(Error::InvalidArgument("no nodes".into()));
    }
    let zb = syntactic_encode(cfg, params, l, adj, Mode::Eval)?;
    let f = (zb.dot(&params.ffnn_weight) + &params.ffnn_bias).mapv(|v| v.max(0.0));
    let pooled = match cfg.pooling {
        Pooling::Mean => f.mean_axis(Axis(0)).expect("non-empty"),
        Pooling::Max => f.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b)),
    };
    let feat = ndarray::concatenate![Axis(0), pooled, h_final];
    let logits = feat.dot(&params.classifier_weight) + &params.classifier_bias;
    Ok((pooled, logits))
}

/// Full forward pass for one example. `adj` must have one node per
/// non-PAD token, or one per id with every trailing PAD node isolated.
pub fn forward(
    cfg: &ModelConfig,
    params: &SyLstmParams,
    ids: &[usize],
    adj: &NormalizedAdjacency,
    mode: Mode,
) -> Result<ForwardTrace> {
    let fwd = BatchForward::run(cfg, params, &[Example { ids, adj }], mode)?;
    Ok(fwd.trace(0))
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(p: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn predict(
    cfg: &ModelConfig,
    params: &SyLstmParams,
    ids: &[usize],
    adj: &NormalizedAdjacency,
) -> Result<usize> {
    Ok(argmax(
        &forward(cfg, params, ids, adj, Mode::Eval)?.probabilities,
    ))
}

/// Eval-mode predictions, in input order.
pub fn predict_batch(
    cfg: &ModelConfig,
    params: &SyLstmParams,
    batch: &[Example<'_>],
) -> Result<Vec<usize>> {
    Ok(probabilities_batch(cfg, params, batch)?
        .iter()
        .map(argmax)
        .collect())
}

pub fn probabilities_batch(
    cfg: &ModelConfig,
    params: &SyLstmParams,
    batch: &[Example<'_>],
) -> Result<Vec<Array1<f64>>> {
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let fwd = BatchForward::run(cfg, params, batch, Mode::Eval)?;
    Ok(fwd
        .probabilities
        .rows()
        .into_iter()
        .map(|r| r.to_owned())
        .collect())
}
