//! Run configuration: a TOML file whose keys can each be overridden on the
//! command line with `--key value` (nested keys as `--model.d_w 16`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sylstm::{ModelConfig, Task, TrainConfig};
use toml::{Table, Value};

use crate::exit::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Olid,
    Davidson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    #[default]
    Random,
    Glove,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Dataset,
    pub task: Task,
    /// OLID training TSV or the Davidson CSV.
    pub data: PathBuf,
    /// OLID test tweets and gold labels. Without them the test partition is
    /// held out of `data`.
    pub test_data: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// CoNLL-U parses of the cleaned tweets, `# sent_id` = tweet id.
    pub parses: Option<PathBuf>,
    pub glove: Option<PathBuf>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub embedding: EmbeddingMode,
    #[serde(default = "default_true")]
    pub train_embedding: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_fraction")]
    pub dev_fraction: f64,
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_true() -> bool {
    true
}

fn default_seed() -> u64 {
    42
}

fn default_fraction() -> f64 {
    0.1
}

fn default_vocab_size() -> usize {
    30_000
}

const PATH_KEYS: [&str; 6] = [
    "data",
    "test_data",
    "test_labels",
    "parses",
    "glove",
    "output",
];

/// Reads `path`, resolves its relative paths against the file's directory,
/// applies `overrides` and validates. Every problem found is reported at
/// once.
pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let mut table: Table = text
        .parse()
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for key in PATH_KEYS {
        if let Some(Value::String(s)) = table.get_mut(key) {
            let p = Path::new(s.as_str());
            if p.is_relative() {
                *s = base.join(p).to_string_lossy().into_owned();
            }
        }
    }
    apply_overrides(&mut table, overrides)?;
    from_table(table)
}

pub fn from_table(table: Table) -> Result<RunConfig, Failure> {
    let mut problems = Vec::new();
    let subtable = |name: &str| table.get(name).and_then(Value::as_table);
    if subtable("train").is_some_and(|t| t.contains_key("seed")) {
        problems.push("train.seed is not accepted; set the top-level `seed`".to_string());
    }
    let explicit_classes = subtable("model")
        .and_then(|t| t.get("n_classes"))
        .and_then(Value::as_integer);
    let mut cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Failure::config(e.to_string()))?;

    let n = cfg.task.n_classes();
    match explicit_classes {
        Some(k) if k != n as i64 => problems.push(format!(
            "model.n_classes = {k} but task {} has {n} classes",
            cfg.task
        )),
        _ => cfg.model.n_classes = n,
    }
    cfg.train.seed = cfg.seed;
    problems.extend(cfg.problems());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Failure::config(format!(
            "invalid configuration:\n  {}",
            problems.join("\n  ")
        )))
    }
}

/// Parses `--key value` / `--key=value` pairs into the table. Values are
/// read as TOML literals when they parse as one, as strings otherwise.
pub fn apply_overrides(table: &mut Table, args: &[String]) -> Result<(), Failure> {
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(Failure::config(format!(
                "expected `--key value`, found {arg:?}"
            )));
        };
        let (key, raw) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Failure::config(format!("--{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        set_path(table, &key, literal(&raw))?;
    }
    Ok(())
}

fn literal(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<(), Failure> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Failure::config(format!("empty key in --{key}")))?;
    let mut cur = table;
    for part in parts {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Failure::config(format!("--{key}: `{part}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match (self.dataset, self.task.is_olid()) {
            (Dataset::Olid, false) => out.push(format!(
                "task {} is not an OLID task (use A, B or C)",
                self.task
            )),
            (Dataset::Davidson, true) => out.push(format!(
                "task {} is not defined for davidson (use D3)",
                self.task
            )),
            _ => {}
        }
        match (self.dataset, &self.test_data, &self.test_labels) {
            (Dataset::Davidson, None, None)
            | (Dataset::Olid, None, None)
            | (Dataset::Olid, Some(_), Some(_)) => {}
            (Dataset::Davidson, _, _) => {
                out.push("davidson has no separate test file; remove test_data/test_labels".into())
            }
            _ => out.push("test_data and test_labels must be given together".into()),
        }
        let mut exists = |name: &str, p: &Option<PathBuf>| {
            if let Some(p) = p {
                if !p.exists() {
                    out.push(format!("{name}: {} does not exist", p.display()));
                }
            }
        };
        exists("data", &Some(self.data.clone()));
        exists("test_data", &self.test_data);
        exists("test_labels", &self.test_labels);
        exists("parses", &self.parses);
        exists("glove", &self.glove);
        if self.embedding == EmbeddingMode::Glove && self.glove.is_none() {
            out.push("embedding = \"glove\" needs a glove path".into());
        }
        for (name, f) in [
            ("dev_fraction", self.dev_fraction),
            ("test_fraction", self.test_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                out.push(format!("{name} must lie in (0, 1), got {f}"));
            }
        }
        if self.vocab_size < 3 {
            out.push(format!(
                "vocab_size must be at least 3, got {}",
                self.vocab_size
            ));
        }
        if let Err(e) = self.model.validate() {
            out.push(format!("model: {e}"));
        }
        if let Err(e) = self.train.validate() {
            out.push(format!("train: {e}"));
        }
        out
    }

    /// Requirements specific to `train`.
    pub fn check_trainable(&self) -> Result<(&Path, &Path), Failure> {
        let mut problems = Vec::new();
        if self.parses.is_none() {
            problems.push("parses is required for training");
        }
        if self.output.is_none() {
            problems.push("output is required for training");
        }
        match (self.parses.as_deref(), self.output.as_deref()) {
            (Some(p), Some(o)) => Ok((p, o)),
            _ => Err(Failure::config(format!(
                "invalid configuration:\n  {}",
                problems.join("\n  ")
            ))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Table {
        let here = env!("CARGO_MANIFEST_DIR");
        format!("dataset = \"olid\"\ntask = \"A\"\ndata = \"{here}/Cargo.toml\"\n")
            .parse()
            .unwrap()
    }

    #[test]
    fn overrides_parse_literals_and_nest() {
        let mut t = base();
        let args: Vec<String> = [
            "--seed",
            "7",
            "--model.d_w=16",
            "--model.pooling",
            "max",
            "--train.lr0",
            "0.5",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        apply_overrides(&mut t, &args).unwrap();
        let cfg = from_table(t).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.model.d_w, 16);
        assert_eq!(cfg.model.pooling, sylstm::model::Pooling::Max);
        assert_eq!(cfg.train.lr0, 0.5);
        assert_eq!(cfg.model.n_classes, 2);
    }

    #[test]
    fn unknown_keys_and_dangling_flags_rejected() {
        let mut t = base();
        assert!(apply_overrides(&mut t, &["--seed".into()]).is_err());
        assert!(apply_overrides(&mut t, &["seed".into(), "1".into()]).is_err());
        apply_overrides(&mut t, &["--model.width".into(), "3".into()]).unwrap();
        assert_eq!(from_table(t).unwrap_err().code, crate::exit::CONFIG);
    }

    #[test]
    fn all_problems_listed_together() {
        let mut t = base();
        let args: Vec<String> = [
            "--dataset",
            "davidson",
            "--task",
            "B",
            "--dev_fraction",
            "1.5",
            "--parses",
            "/no/such/file",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        apply_overrides(&mut t, &args).unwrap();
        let msg = from_table(t).unwrap_err().message;
        assert!(msg.contains("not defined for davidson"), "{msg}");
        assert!(msg.contains("dev_fraction"), "{msg}");
        assert!(msg.contains("/no/such/file"), "{msg}");
    }

    #[test]
    fn class_count_follows_task() {
        let mut t = base();
        apply_overrides(&mut t, &["--task".into(), "C".into()]).unwrap();
        assert_eq!(from_table(t).unwrap().model.n_classes, 3);
        let mut t = base();
        apply_overrides(&mut t, &["--model.n_classes".into(), "3".into()]).unwrap();
        assert!(from_table(t).is_err());
        let mut t = base();
        apply_overrides(&mut t, &["--train.seed".into(), "1".into()]).unwrap();
        assert!(from_table(t).is_err());
    }
}
