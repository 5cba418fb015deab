//! Tweet normalisation.
//!
//! Six rules run in a fixed order: usernames, URLs, hashtags, emoji,
//! compound words, elongations. The result is lowercased and
//! whitespace-collapsed. Resource tables (emoticon map, word frequencies)
//! are bundled; set `SYLSTM_RESOURCE_DIR` to a directory containing
//! `emoticons.tsv` and `wordfreq.tsv` to override them.

mod emoji;
mod segment;

use std::borrow::Cow;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use emoji::EmojiMap;
pub use segment::WordSegmenter;

use crate::{Error, Result};

pub const RESOURCE_DIR_ENV: &str = "SYLSTM_RESOURCE_DIR";
pub const EMOTICON_FILE: &str = "emoticons.tsv";
pub const WORDFREQ_FILE: &str = "wordfreq.tsv";

const BUNDLED_EMOTICONS: &str = include_str!("../../resources/emoticons.tsv");
const BUNDLED_WORDFREQ: &str = include_str!("../../resources/wordfreq.tsv");

static USERNAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").unwrap());
static HASHTAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#(\w+)").unwrap());

/// A tweet as stored in a dataset file. Never blank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RawTweet(String);

impl RawTweet {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidArgument("tweet text is empty".into()));
        }
        Ok(RawTweet(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for RawTweet {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        RawTweet::new(s)
    }
}

impl From<RawTweet> for String {
    fn from(t: RawTweet) -> String {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Usernames,
    Urls,
    Hashtags,
    Emojis,
    Compounds,
    Lengthening,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Rule::Usernames => "usernames",
            Rule::Urls => "urls",
            Rule::Hashtags => "hashtags",
            Rule::Emojis => "emojis",
            Rule::Compounds => "compounds",
            Rule::Lengthening => "lengthening",
        };
        f.write_str(name)
    }
}

/// Output of [`Preprocessor::preprocess`]. `applied_rules` lists, in order,
/// the rules that changed the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanTweet {
    pub text: String,
    pub applied_rules: Vec<Rule>,
}

/// Replaces every `@handle` with `@user`.
pub fn replace_usernames(text: &str) -> Cow<'_, str> {
    USERNAME.replace_all(text, "@user")
}

/// Replaces `http(s)://…` and `www.…` runs (up to whitespace) with `url`.
pub fn replace_urls(text: &str) -> Cow<'_, str> {
    URL.replace_all(text, "url")
}

/// Caps every run of a repeated character at two. Runs are detected
/// case-insensitively so lowercasing afterwards cannot re-create a run.
/// Whitespace is left to the final collapse.
pub fn reduce_lengthening(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev: Option<char> = None;
    let mut run = 0usize;
    for c in text.chars() {
        let folded = fold(c);
        if Some(folded) == prev && !c.is_whitespace() {
            run += 1;
        } else {
            prev = Some(folded);
            run = 1;
        }
        if run <= 2 {
            out.push(c);
        }
    }
    out
}

fn fold(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

/// The full preprocessing pipeline with its resource tables.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    emoji: EmojiMap,
    words: WordSegmenter,
}

impl Preprocessor {
    pub fn new(emoji: EmojiMap, words: WordSegmenter) -> Self {
        Self { emoji, words }
    }

    /// Uses the tables compiled into the crate.
    pub fn bundled() -> Self {
        let emoji = EmojiMap::from_tsv(BUNDLED_EMOTICONS, "bundled emoticons.tsv")
            .expect("bundled emoticon table parses");
        let words = WordSegmenter::from_tsv(BUNDLED_WORDFREQ, "bundled wordfreq.tsv")
            .expect("bundled word list parses");
        Self { emoji, words }
    }

    /// Loads `emoticons.tsv` and `wordfreq.tsv` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map(|text| (text, path.display().to_string()))
                .map_err(|e| Error::io(&path, e))
        };
        let (emo, emo_origin) = read(EMOTICON_FILE)?;
        let (freq, freq_origin) = read(WORDFREQ_FILE)?;
        Ok(Self {
            emoji: EmojiMap::from_tsv(&emo, &emo_origin)?,
            words: WordSegmenter::from_tsv(&freq, &freq_origin)?,
        })
    }

    /// Honours `SYLSTM_RESOURCE_DIR`, falling back to the bundled tables.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(RESOURCE_DIR_ENV) {
            Some(dir) => Self::from_dir(Path::new(&dir)),
            None => Ok(Self::bundled()),
        }
    }

    pub fn words(&self) -> &WordSegmenter {
        &self.words
    }

    pub fn emoji(&self) -> &EmojiMap {
        &self.emoji
    }

    /// `#tag` → `# tag`, with the tag body run through compound splitting.
    pub fn segment_hashtags<'a>(&self, text: &'a str) -> Cow<'a, str> {
        HASHTAG.replace_all(text, |caps: &regex::Captures<'_>| {
            format!("# {}", self.words.split_compounds(&caps[1]))
        })
    }

    pub fn normalize_emojis(&self, text: &str) -> String {
        self.emoji.normalize(text)
    }

    pub fn split_compounds(&self, text: &str) -> String {
        self.words.split_compounds(text)
    }

    pub fn preprocess(&self, tweet: &RawTweet) -> CleanTweet {
        let mut applied = Vec::new();
        let mut text = tweet.as_str().to_string();
        let mut step = |rule: Rule, out: String, text: &mut String| {
            if out != *text {
                applied.push(rule);
                *text = out;
            }
        };
        let out = replace_usernames(&text).into_owned();
        step(Rule::Usernames, out, &mut text);
        let out = replace_urls(&text).into_owned();
        step(Rule::Urls, out, &mut text);
        let out = self.segment_hashtags(&text).into_owned();
        step(Rule::Hashtags, out, &mut text);
        let out = self.normalize_emojis(&text);
        step(Rule::Emojis, out, &mut text);
        let out = self.split_compounds(&text);
        step(Rule::Compounds, out, &mut text);
        let out = reduce_lengthening(&text);
        step(Rule::Lengthening, out, &mut text);

        let text = text
            .to_lowercase()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        CleanTweet {
            text,
            applied_rules: applied,
        }
    }

    /// Convenience wrapper that validates the input first.
    pub fn preprocess_str(&self, text: &str) -> Result<CleanTweet> {
        Ok(self.preprocess(&RawTweet::new(text)?))
    }
}
