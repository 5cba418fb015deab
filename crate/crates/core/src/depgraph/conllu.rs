use std::collections::HashMap;
use std::path::Path;

use super::DependencyParse;
use crate::{Error, Result};

/// A sentence block together with its `# sent_id` comment, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluSentence {
    pub sent_id: Option<String>,
    pub parse: DependencyParse,
}

/// Parses CoNLL-U text. Multiword-token ranges (`3-4`) and empty nodes
/// (`5.1`) are skipped; HEAD is converted to 0-based with the root as
/// `None`.
pub fn parse_conllu(text: &str) -> Result<Vec<ConlluSentence>> {
    let mut out = Vec::new();
    let mut block: Vec<&str> = Vec::new();
    let mut sent_id: Option<String> = None;
    for line in text.lines().chain(std::iter::once("")) {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !block.is_empty() {
                let index = out.len();
                let parse = parse_block(&block).map_err(|msg| Error::Parse { index, msg })?;
                out.push(ConlluSentence {
                    sent_id: sent_id.take(),
                    parse,
                });
                block.clear();
            }
            sent_id = None;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    sent_id = Some(value.trim().to_string());
                }
            }
            continue;
        }
        block.push(line);
    }
    Ok(out)
}

fn parse_block(lines: &[&str]) -> std::result::Result<DependencyParse, String> {
    let mut tokens = Vec::new();
    let mut heads = Vec::new();
    let mut relations = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(format!(
                "expected 10 tab-separated columns, got {}: {line:?}",
                cols.len()
            ));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| format!("bad token id {:?}", cols[0]))?;
        if id != tokens.len() + 1 {
            return Err(format!(
                "token ids must be consecutive from 1; got {id} after {}",
                tokens.len()
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| format!("bad head {:?} for token {id}", cols[6]))?;
        tokens.push(cols[1].to_string());
        heads.push(head.checked_sub(1));
        relations.push(cols[7].to_string());
    }
    DependencyParse::new(tokens, heads, relations)
}

pub fn read_conllu_keyed(path: &Path) -> Result<Vec<ConlluSentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(&text)
}

/// Maps `sent_id` to parse. Every sentence must carry a unique id.
pub fn index_by_sent_id(
    sentences: Vec<ConlluSentence>,
) -> Result<HashMap<String, DependencyParse>> {
    let mut out = HashMap::with_capacity(sentences.len());
    for (index, s) in sentences.into_iter().enumerate() {
        let id = s.sent_id.ok_or_else(|| Error::Parse {
            index,
            msg: "missing `# sent_id` comment".into(),
        })?;
        if out.insert(id.clone(), s.parse).is_some() {
            return Err(Error::Parse {
                index,
                msg: format!("duplicate sent_id {id}"),
            });
        }
    }
    Ok(out)
}

pub fn read_conllu(path: &Path) -> Result<Vec<DependencyParse>> {
    Ok(read_conllu_keyed(path)?
        .into_iter()
        .map(|s| s.parse)
        .collect())
}
