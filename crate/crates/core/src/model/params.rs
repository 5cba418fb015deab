use ndarray::{Array, Array1, Array2, Dimension};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::vocab::EmbeddingMatrix;
use crate::{Error, Result};

/// One LSTM direction. Gate blocks are stacked `[input, forget, cell, output]`
/// along the first axis of `w_ih` (4h × in), `w_hh` (4h × h) and `bias` (4h).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_ih: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LstmCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
        }
    }
}

/// Every tensor of the network. The same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct SyLstmParams {
    pub embedding: EmbeddingMatrix,
    /// `lstm[layer] = [forward, backward]`.
    pub lstm: Vec<[LstmCell; 2]>,
    pub bn1: BatchNorm,
    /// 2h × gcn_out.
    pub gcn_weight: Array2<f64>,
    pub bn2: BatchNorm,
    /// gcn_out × ffnn_out.
    pub ffnn_weight: Array2<f64>,
    pub ffnn_bias: Array1<f64>,
    /// (ffnn_out + 2h) × n_classes; rows `0..ffnn_out` read the pooled
    /// syntactic features, the rest the BiLSTM final states.
    pub classifier_weight: Array2<f64>,
    pub classifier_bias: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Embedding,
    Weight,
    Bias,
    /// Batch-norm scale and shift.
    Norm,
}

#[derive(Debug)]
pub struct Tensor<'a> {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct TensorMut<'a> {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

fn view<D: Dimension>(name: String, kind: ParamKind, a: &Array<f64, D>) -> Tensor<'_> {
    Tensor {
        name,
        kind,
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("parameters are contiguous"),
    }
}

fn view_mut<D: Dimension>(name: String, kind: ParamKind, a: &mut Array<f64, D>) -> TensorMut<'_> {
    TensorMut {
        name,
        kind,
        shape: a.shape().to_vec(),
        data: a.as_slice_mut().expect("parameters are contiguous"),
    }
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

macro_rules! tensor_list {
    ($self:ident, $wrap:ident, $iter:ident, $($amp:tt)+) => {{
        let mut out = Vec::new();
        out.push($wrap("embedding".into(), ParamKind::Embedding, $($amp)+ $self.embedding.values));
        for (l, pair) in $self.lstm.$iter().enumerate() {
            for (dir, cell) in pair.$iter().enumerate() {
                let d = if dir == 0 { "fwd" } else { "bwd" };
                out.push($wrap(format!("lstm.l{l}.{d}.w_ih"), ParamKind::Weight, $($amp)+ cell.w_ih));
                out.push($wrap(format!("lstm.l{l}.{d}.w_hh"), ParamKind::Weight, $($amp)+ cell.w_hh));
                out.push($wrap(format!("lstm.l{l}.{d}.bias"), ParamKind::Bias, $($amp)+ cell.bias));
            }
        }
        out.push($wrap("bn1.gamma".into(), ParamKind::Norm, $($amp)+ $self.bn1.gamma));
        out.push($wrap("bn1.beta".into(), ParamKind::Norm, $($amp)+ $self.bn1.beta));
        out.push($wrap("gcn.weight".into(), ParamKind::Weight, $($amp)+ $self.gcn_weight));
        out.push($wrap("bn2.gamma".into(), ParamKind::Norm, $($amp)+ $self.bn2.gamma));
        out.push($wrap("bn2.beta".into(), ParamKind::Norm, $($amp)+ $self.bn2.beta));
        out.push($wrap("ffnn.weight".into(), ParamKind::Weight, $($amp)+ $self.ffnn_weight));
        out.push($wrap("ffnn.bias".into(), ParamKind::Bias, $($amp)+ $self.ffnn_bias));
        out.push($wrap("classifier.weight".into(), ParamKind::Weight, $($amp)+ $self.classifier_weight));
        out.push($wrap("classifier.bias".into(), ParamKind::Bias, $($amp)+ $self.classifier_bias));
        out
    }};
}

/// Per-block trainable parameter counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub blocks: Vec<(String, usize)>,
    pub total: usize,
}

impl std::fmt::Display for ParamCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, n) in &self.blocks {
            writeln!(f, "{name:<12} {n:>12}")?;
        }
        write!(f, "{:<12} {:>12}", "total", self.total)
    }
}

impl SyLstmParams {
    /// All-zero tensors shaped for `cfg` with a `vocab_size`-row embedding;
    /// batch-norm scales and running variances are zero too, so this is the
    /// gradient accumulator shape rather than a usable model.
    pub fn zeros(cfg: &ModelConfig, vocab_size: usize) -> Self {
        let h = cfg.lstm_hidden;
        let lstm = (0..cfg.lstm_layers)
            .map(|l| {
                let input = if l == 0 { cfg.d_w } else { 2 * h };
                [LstmCell::zeros(input, h), LstmCell::zeros(input, h)]
            })
            .collect();
        let zero_bn = |d: usize| BatchNorm {
            gamma: Array1::zeros(d),
            beta: Array1::zeros(d),
            running_mean: Array1::zeros(d),
            running_var: Array1::zeros(d),
        };
        Self {
            embedding: EmbeddingMatrix {
                values: Array2::zeros((vocab_size, cfg.d_w)),
                trainable: true,
            },
            lstm,
            bn1: zero_bn(2 * h),
            gcn_weight: Array2::zeros((2 * h, cfg.gcn_out)),
            bn2: zero_bn(cfg.gcn_out),
            ffnn_weight: Array2::zeros((cfg.gcn_out, cfg.ffnn_out)),
            ffnn_bias: Array1::zeros(cfg.ffnn_out),
            classifier_weight: Array2::zeros((cfg.ffnn_out + 2 * h, cfg.n_classes)),
            classifier_bias: Array1::zeros(cfg.n_classes),
        }
    }

    /// Xavier-uniform weights (bound √(6 / (fan_in + fan_out))), zero biases,
    /// identity batch norms. Deterministic in `seed`.
    pub fn init(cfg: &ModelConfig, embedding: EmbeddingMatrix, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if embedding.dim() != cfg.d_w {
            return Err(Error::Shape(format!(
                "embedding dimension {} differs from d_w = {}",
                embedding.dim(),
                cfg.d_w
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.lstm_hidden;
        let lstm = (0..cfg.lstm_layers)
            .map(|l| {
                let input = if l == 0 { cfg.d_w } else { 2 * h };
                let mut cell = || LstmCell {
                    w_ih: xavier(4 * h, input, &mut rng),
                    w_hh: xavier(4 * h, h, &mut rng),
                    bias: Array1::zeros(4 * h),
                };
                [cell(), cell()]
            })
            .collect();
        let gcn_weight = xavier(2 * h, cfg.gcn_out, &mut rng);
        let ffnn_weight = xavier(cfg.gcn_out, cfg.ffnn_out, &mut rng);
        let classifier_weight = xavier(cfg.ffnn_out + 2 * h, cfg.n_classes, &mut rng);
        let params = Self {
            embedding,
            lstm,
            bn1: BatchNorm::new(2 * h),
            gcn_weight,
            bn2: BatchNorm::new(cfg.gcn_out),
            ffnn_weight,
            ffnn_bias: Array1::zeros(cfg.ffnn_out),
            classifier_weight,
            classifier_bias: Array1::zeros(cfg.n_classes),
        };
        log::info!("model parameters:\n{}", params.param_count());
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.fill(0.0);
        }
        z.bn1.running_mean.fill(0.0);
        z.bn1.running_var.fill(0.0);
        z.bn2.running_mean.fill(0.0);
        z.bn2.running_var.fill(0.0);
        z
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    /// Trainable tensors in a fixed order.
    pub fn tensors(&self) -> Vec<Tensor<'_>> {
        tensor_list!(self, view, iter, &)
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        tensor_list!(self, view_mut, iter_mut, &mut)
    }

    /// Batch-norm running statistics (not trained by gradient).
    pub fn buffers(&self) -> Vec<Tensor<'_>> {
        vec![
            view(
                "bn1.running_mean".into(),
                ParamKind::Norm,
                &self.bn1.running_mean,
            ),
            view(
                "bn1.running_var".into(),
                ParamKind::Norm,
                &self.bn1.running_var,
            ),
            view(
                "bn2.running_mean".into(),
                ParamKind::Norm,
                &self.bn2.running_mean,
            ),
            view(
                "bn2.running_var".into(),
                ParamKind::Norm,
                &self.bn2.running_var,
            ),
        ]
    }

    pub fn buffers_mut(&mut self) -> Vec<TensorMut<'_>> {
        vec![
            view_mut(
                "bn1.running_mean".into(),
                ParamKind::Norm,
                &mut self.bn1.running_mean,
            ),
            view_mut(
                "bn1.running_var".into(),
                ParamKind::Norm,
                &mut self.bn1.running_var,
            ),
            view_mut(
                "bn2.running_mean".into(),
                ParamKind::Norm,
                &mut self.bn2.running_mean,
            ),
            view_mut(
                "bn2.running_var".into(),
                ParamKind::Norm,
                &mut self.bn2.running_var,
            ),
        ]
    }

    /// Trainable counts per block. The embedding block is included only
    /// when the table is trainable.
    pub fn param_count(&self) -> ParamCount {
        let mut blocks: Vec<(String, usize)> = Vec::new();
        for t in self.tensors() {
            if t.kind == ParamKind::Embedding && !self.embedding.trainable {
                continue;
            }
            let block = t.name.split('.').next().unwrap_or_default().to_string();
            let n = t.data.len();
            match blocks.last_mut() {
                Some((b, c)) if *b == block => *c += n,
                _ => blocks.push((block, n)),
            }
        }
        let total = blocks.iter().map(|b| b.1).sum();
        ParamCount { blocks, total }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::random_embeddings;

    #[test]
    fn xavier_bounds_and_determinism() {
        let cfg = ModelConfig::default();
        let emb = random_embeddings(50, cfg.d_w, 1).unwrap();
        let a = SyLstmParams::init(&cfg, emb.clone(), 3).unwrap();
        let b = SyLstmParams::init(&cfg, emb.clone(), 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, SyLstmParams::init(&cfg, emb, 4).unwrap());
        // √(6 / (64 + 32)) = 0.25
        assert!(a.gcn_weight.iter().all(|w| w.abs() <= 0.25));
        assert!(a.gcn_weight.iter().any(|w| w.abs() > 0.2));
        assert!(a
            .lstm
            .iter()
            .flatten()
            .all(|c| c.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn embedding_dimension_checked() {
        let cfg = ModelConfig::default();
        let emb = random_embeddings(5, 10, 1).unwrap();
        assert!(matches!(
            SyLstmParams::init(&cfg, emb, 1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn tensor_views_cover_every_parameter() {
        let cfg = ModelConfig::default();
        let p = SyLstmParams::zeros(&cfg, 10);
        let names: Vec<String> = p.tensors().into_iter().map(|t| t.name).collect();
        assert_eq!(names.len(), 1 + 2 * 2 * 3 + 9);
        assert_eq!(names[1], "lstm.l0.fwd.w_ih");
        assert_eq!(names.last().unwrap(), "classifier.bias");
    }
}
