//! Token vocabulary and embedding tables.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const DEFAULT_MAX_SIZE: usize = 30_000;
/// Half-width of the uniform range used for untrained embedding rows.
pub const INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the `max_size` most frequent tokens (ties broken
    /// lexicographically) after the PAD and UNK specials.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], max_size: usize) -> Result<Self> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tok in corpus.iter().flatten() {
            let tok = tok.as_ref();
            if tok != PAD_TOKEN && tok != UNK_TOKEN {
                *counts.entry(tok).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);
        Self::from_tokens(
            [PAD_TOKEN, UNK_TOKEN]
                .into_iter()
                .chain(ranked.into_iter().map(|(t, _)| t))
                .map(String::from)
                .collect(),
        )
    }

    /// Rebuilds from an id-ordered token list whose first two entries are
    /// the specials.
    pub fn from_tokens(id_to_token: Vec<String>) -> Result<Self> {
        if id_to_token.len() < 2 || id_to_token[PAD] != PAD_TOKEN || id_to_token[UNK] != UNK_TOKEN {
            return Err(Error::InvalidArgument(
                "vocabulary must start with <pad>, <unk>".into(),
            ));
        }
        let token_to_id: HashMap<String, usize> = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if token_to_id.len() != id_to_token.len() {
            return Err(Error::InvalidArgument(
                "vocabulary contains duplicate tokens".into(),
            ));
        }
        Ok(Self {
            id_to_token,
            token_to_id,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Out-of-vocabulary tokens map to UNK.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }

    /// JSON array of tokens ordered by id.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.id_to_token).expect("string list serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_tokens(serde_json::from_str(text)?)
    }

    /// Hex SHA-256 of [`Vocabulary::to_json`]; stored in checkpoints.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The |V| × d lookup table. Row [`PAD`] is kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub values: Array2<f64>,
    pub trainable: bool,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    /// Table lookup: row `id` of the matrix.
    pub fn lookup(&self, ids: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((ids.len(), self.dim()));
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).assign(&self.values.row(id));
        }
        out
    }

    pub fn row(&self, id: usize) -> Array1<f64> {
        self.values.row(id).to_owned()
    }
}

fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-INIT_RANGE, INIT_RANGE);
    let mut m = Array2::from_shape_fn((rows, cols), |_| dist.sample(&mut rng));
    if rows > PAD {
        m.row_mut(PAD).fill(0.0);
    }
    m
}

/// Uniform(−0.05, 0.05) table with a zero PAD row.
pub fn random_embeddings(vocab_size: usize, d_w: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if d_w == 0 {
        return Err(Error::InvalidArgument(
            "embedding dimension must be ≥ 1".into(),
        ));
    }
    Ok(EmbeddingMatrix {
        values: uniform_matrix(vocab_size, d_w, seed),
        trainable: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GloveCoverage {
    /// Non-special vocabulary entries found in the vectors file.
    pub found: usize,
    pub total: usize,
}

impl GloveCoverage {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.found as f64 / self.total as f64
        }
    }
}

/// Loads GloVe text vectors (`token v1 … vd` per line) for the tokens in
/// `vocab`. Missing tokens and UNK keep their seeded uniform init; PAD is
/// zero.
pub fn load_glove(
    path: &Path,
    vocab: &Vocabulary,
    d_w: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, GloveCoverage)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut values = uniform_matrix(vocab.len(), d_w, seed);
    let mut seen = vec![false; vocab.len()];
    let mut line = String::new();
    let mut reader = BufReader::new(file);
    let mut lineno = 0usize;
    loop {
        line.clear();
        let read = reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        lineno += 1;
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split(' ');
        let token = parts.next().unwrap_or_default();
        let numbers: Vec<&str> = parts.filter(|p| !p.is_empty()).collect();
        if numbers.len() != d_w {
            return Err(Error::Malformed {
                origin: path.display().to_string(),
                line: lineno,
                msg: format!("expected {d_w} values, found {}", numbers.len()),
            });
        }
        let Some(id) = vocab.id(token) else { continue };
        if id == PAD || id == UNK || seen[id] {
            continue;
        }
        let mut row = values.row_mut(id);
        for (slot, text) in row.iter_mut().zip(&numbers) {
            let v: f64 = text
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Malformed {
                    origin: path.display().to_string(),
                    line: lineno,
                    msg: format!("bad number {text:?}"),
                })?;
            *slot = v;
        }
        seen[id] = true;
    }
    let coverage = GloveCoverage {
        found: seen.iter().filter(|&&s| s).count(),
        total: vocab.len().saturating_sub(2),
    };
    log::info!(
        "GloVe coverage: {}/{} vocabulary entries ({:.1}%)",
        coverage.found,
        coverage.total,
        100.0 * coverage.fraction()
    );
    Ok((
        EmbeddingMatrix {
            values,
            trainable: true,
        },
        coverage,
    ))
}
