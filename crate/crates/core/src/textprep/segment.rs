//! Unigram word segmentation used to split run-together compounds.

use std::collections::HashMap;

use crate::{Error, Result};

/// A frequency-ranked word list with a dynamic-programming segmenter.
///
/// A candidate split is scored by the sum of the parts' log relative
/// frequencies; only splits whose every part is in the word list are
/// considered.
#[derive(Debug, Clone)]
pub struct WordSegmenter {
    log_prob: HashMap<String, f64>,
    max_word_chars: usize,
}

impl WordSegmenter {
    /// Parses a `word<TAB>count` table. Lines starting with `#` and blank
    /// lines are ignored.
    pub fn from_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut counts: Vec<(String, u64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::Resource {
                origin: origin.to_string(),
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected word<TAB>count"))?;
            if word.is_empty() {
                return Err(bad("empty word"));
            }
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| bad("count is not a non-negative integer"))?;
            if count == 0 {
                return Err(bad("count must be positive"));
            }
            counts.push((word.to_lowercase(), count));
        }
        Ok(Self::from_counts(counts))
    }

    pub fn from_counts<S: Into<String>>(counts: impl IntoIterator<Item = (S, u64)>) -> Self {
        let mut merged: HashMap<String, u64> = HashMap::new();
        for (w, c) in counts {
            *merged.entry(w.into()).or_default() += c;
        }
        let total: f64 = merged.values().map(|&c| c as f64).sum();
        let max_word_chars = merged.keys().map(|w| w.chars().count()).max().unwrap_or(0);
        let log_prob = merged
            .into_iter()
            .map(|(w, c)| (w, (c as f64 / total).ln()))
            .collect();
        Self {
            log_prob,
            max_word_chars,
        }
    }

    pub fn len(&self) -> usize {
        self.log_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_prob.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.log_prob.contains_key(word)
    }

    /// Best segmentation of `word` into dictionary words, or `None` when no
    /// full cover exists.
    pub fn segment(&self, word: &str) -> Option<Vec<String>> {
        let chars: Vec<char> = word.chars().collect();
        let n = chars.len();
        if n == 0 {
            return None;
        }
        // best[j]: (score, start of last part) for the prefix chars[..j]
        let mut best: Vec<Option<(f64, usize)>> = vec![None; n + 1];
        best[0] = Some((0.0, 0));
        let mut piece = String::new();
        for j in 1..=n {
            let lo = j.saturating_sub(self.max_word_chars);
            for i in lo..j {
                let Some((prefix_score, _)) = best[i] else {
                    continue;
                };
                piece.clear();
                piece.extend(&chars[i..j]);
                if let Some(&lp) = self.log_prob.get(piece.as_str()) {
                    let score = prefix_score + lp;
                    if best[j].is_none_or(|(s, _)| score > s) {
                        best[j] = Some((score, i));
                    }
                }
            }
        }
        best[n]?;
        let mut parts = Vec::new();
        let mut end = n;
        while end > 0 {
            let (_, start) = best[end].expect("reachable prefix");
            parts.push(chars[start..end].iter().collect());
            end = start;
        }
        parts.reverse();
        Some(parts)
    }

    /// Splits out-of-dictionary alphabetic tokens into dictionary words.
    ///
    /// Leading/trailing punctuation on a token is kept in place. Elongated
    /// spellings are looked up in their reduced form, so `soooocute` splits
    /// the same way as `soocute`. Tokens with no full cover are returned
    /// unchanged.
    pub fn split_compounds(&self, text: &str) -> String {
        let mut out: Vec<String> = Vec::new();
        for token in text.split_whitespace() {
            out.push(self.split_token(token));
        }
        out.join(" ")
    }

    fn split_token(&self, token: &str) -> String {
        let core_start = token
            .char_indices()
            .find(|(_, c)| c.is_alphabetic())
            .map(|(i, _)| i);
        let Some(core_start) = core_start else {
            return token.to_string();
        };
        let core_end = token
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphabetic())
            .map(|(i, c)| i + c.len_utf8())
            .expect("an alphabetic char exists");
        let core = &token[core_start..core_end];
        if !core.chars().all(char::is_alphabetic) {
            return token.to_string();
        }
        let lower = core.to_lowercase();
        if self.contains(&lower) {
            return token.to_string();
        }
        let reduced = super::reduce_lengthening(&lower);
        match self.segment(&reduced) {
            Some(parts) if parts.len() > 1 => format!(
                "{}{}{}",
                &token[..core_start],
                parts.join(" "),
                &token[core_end..]
            ),
            _ => token.to_string(),
        }
    }
}
