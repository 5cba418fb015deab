use std::collections::HashMap;

use crate::{Error, Result};

/// Emoticon/emoji → phrase table.
///
/// ASCII emoticons are matched as whole whitespace-delimited tokens;
/// non-ASCII entries (pictographic emoji) are matched anywhere in the text,
/// longest key first.
#[derive(Debug, Clone, Default)]
pub struct EmojiMap {
    pub(crate) tokens: HashMap<String, String>,
    pub(crate) pictographs: Vec<(String, String)>,
}

const VARIATION_SELECTOR: char = '\u{FE0F}';

impl EmojiMap {
    /// Parses an `emoticon<TAB>phrase` table; `#`-prefixed lines whose second
    /// character is a space are comments.
    pub fn from_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut map = EmojiMap::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with("# ") {
                continue;
            }
            let bad = |msg: &str| Error::Resource {
                origin: origin.to_string(),
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let (key, phrase) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected emoticon<TAB>phrase"))?;
            let phrase = phrase.trim();
            if key.is_empty() || key.chars().any(char::is_whitespace) {
                return Err(bad("emoticon must be non-empty and contain no whitespace"));
            }
            if phrase.is_empty() {
                return Err(bad("empty phrase"));
            }
            if key.is_ascii() {
                map.tokens.insert(key.to_string(), phrase.to_string());
            } else {
                map.pictographs.push((key.to_string(), phrase.to_string()));
            }
        }
        map.pictographs
            .sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(map)
    }

    pub fn len(&self) -> usize {
        self.tokens.len() + self.pictographs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn normalize(&self, text: &str) -> String {
        let mut spaced = String::with_capacity(text.len());
        let mut rest = text;
        'outer: while let Some(c) = rest.chars().next() {
            if !c.is_ascii() {
                for (key, phrase) in &self.pictographs {
                    if let Some(after) = rest.strip_prefix(key.as_str()) {
                        spaced.push(' ');
                        spaced.push_str(phrase);
                        spaced.push(' ');
                        rest = after.trim_start_matches(VARIATION_SELECTOR);
                        continue 'outer;
                    }
                }
            }
            spaced.push(c);
            rest = &rest[c.len_utf8()..];
        }
        spaced
            .split_whitespace()
            .map(|tok| self.tokens.get(tok).map_or(tok, String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
