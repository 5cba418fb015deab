//! Syntax-aware tweet classification.
//!
//! A two-layer BiLSTM encodes the token sequence, a single graph-convolution
//! layer propagates those features over the (undirected, self-looped)
//! dependency tree, and the pooled syntactic features are concatenated with
//! the BiLSTM final states before a softmax classifier.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`textprep`]: tweet normalisation (usernames, URLs, hashtags, emoji,
//!   compound words, elongations).
//! * [`corpus`]: OLID / Davidson ingestion and stratified splits.
//! * [`vocab`]: vocabulary and embedding tables, GloVe loading.
//! * [`depgraph`]: CoNLL-U ingestion, graph construction and the
//!   symmetric-normalised adjacency operator.
//! * [`model`]: parameters, forward pass, backpropagation, checkpoints.
//! * [`train`]: AdamW, cosine schedule, the epoch loop.
//! * [`eval`]: weighted metrics, trivial baselines, a linear SVM and the
//!   paired t-test.

pub mod corpus;
pub mod depgraph;
mod error;
pub mod eval;
pub mod model;
pub mod textprep;
pub mod train;
pub mod vocab;

pub use corpus::{DatasetSplit, LabeledExample, Task};
pub use depgraph::{DependencyParse, NormalizedAdjacency, TweetGraph};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use model::{ForwardTrace, Mode, ModelConfig, SyLstmParams};
pub use train::{TrainConfig, TrainHistory};
pub use vocab::{EmbeddingMatrix, Vocabulary};
