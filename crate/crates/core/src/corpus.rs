//! Dataset ingestion (OLID, Davidson et al.) and reproducible splits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::textprep::RawTweet;
use crate::{Error, Result};

/// Classification task. A/B/C are the OLID subtasks, D3 is the three-way
/// hate/offensive/neither task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    A,
    B,
    C,
    D3,
}

impl Task {
    /// Class names in class-index order.
    pub fn classes(self) -> &'static [&'static str] {
        match self {
            Task::A => &["NOT", "OFF"],
            Task::B => &["TIN", "UNT"],
            Task::C => &["IND", "GRP", "OTH"],
            Task::D3 => &["HATE", "OFF", "NONE"],
        }
    }

    pub fn n_classes(self) -> usize {
        self.classes().len()
    }

    pub fn class_index(self, name: &str) -> Option<usize> {
        self.classes().iter().position(|c| *c == name)
    }

    pub fn class_name(self, index: usize) -> &'static str {
        self.classes()[index]
    }

    pub fn is_olid(self) -> bool {
        !matches!(self, Task::D3)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::A => "A",
            Task::B => "B",
            Task::C => "C",
            Task::D3 => "D3",
        };
        f.write_str(s)
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Task::A),
            "B" => Ok(Task::B),
            "C" => Ok(Task::C),
            "D3" => Ok(Task::D3),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub id: String,
    pub raw: RawTweet,
    /// Class index per task, see [`Task::classes`].
    pub labels: BTreeMap<Task, usize>,
}

impl LabeledExample {
    pub fn label(&self, task: Task) -> Option<usize> {
        self.labels.get(&task).copied()
    }

    /// Checks the OLID hierarchy: B only under OFF, C only under TIN.
    pub fn hierarchy_consistent(&self) -> bool {
        let off = self.label(Task::A) == Task::A.class_index("OFF");
        let tin = self.label(Task::B) == Task::B.class_index("TIN");
        (self.label(Task::B).is_none() || off) && (self.label(Task::C).is_none() || tin)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Malformed {
        origin: path.display().to_string(),
        line: line as usize,
        msg: msg.into(),
    }
}

fn parse_olid_label(task: Task, raw: &str) -> std::result::Result<Option<usize>, String> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("NULL") {
        return Ok(None);
    }
    task.class_index(raw).map(Some).ok_or_else(|| {
        format!(
            "unknown subtask_{} label {raw:?}",
            task.to_string().to_lowercase()
        )
    })
}

/// Reads every row of an OLID training TSV (`id tweet subtask_a subtask_b
/// subtask_c`, `NULL` for absent labels).
pub fn load_olid_all(path: &Path) -> Result<Vec<LabeledExample>> {
    let bytes = read_file(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let expected = ["id", "tweet", "subtask_a", "subtask_b", "subtask_c"];
    let header = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Ok(Vec::new());
    }
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != expected {
        return Err(malformed(
            path,
            1,
            format!("expected header {expected:?}, got {names:?}"),
        ));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 5 {
            return Err(malformed(
                path,
                line,
                format!("expected 5 columns, got {}", record.len()),
            ));
        }
        let mut labels = BTreeMap::new();
        for (task, col) in [(Task::A, 2), (Task::B, 3), (Task::C, 4)] {
            if let Some(l) =
                parse_olid_label(task, &record[col]).map_err(|m| malformed(path, line, m))?
            {
                labels.insert(task, l);
            }
        }
        let raw = RawTweet::new(&record[1]).map_err(|_| malformed(path, line, "empty tweet"))?;
        let ex = LabeledExample {
            id: record[0].trim().to_string(),
            raw,
            labels,
        };
        if !ex.hierarchy_consistent() {
            return Err(malformed(
                path,
                line,
                "label hierarchy violated (B needs A=OFF, C needs B=TIN)",
            ));
        }
        out.push(ex);
    }
    Ok(out)
}

/// OLID rows that carry a label for `task`.
pub fn load_olid(path: &Path, task: Task) -> Result<Vec<LabeledExample>> {
    if !task.is_olid() {
        return Err(Error::InvalidArgument(format!(
            "task {task} is not an OLID subtask"
        )));
    }
    Ok(load_olid_all(path)?
        .into_iter()
        .filter(|e| e.labels.contains_key(&task))
        .collect())
}

/// Reads an OLID test release: a `id<TAB>tweet` file with header plus a
/// headerless `id,label` gold file.
pub fn load_olid_test(tweets: &Path, gold: &Path, task: Task) -> Result<Vec<LabeledExample>> {
    if !task.is_olid() {
        return Err(Error::InvalidArgument(format!(
            "task {task} is not an OLID subtask"
        )));
    }
    let gold_bytes = read_file(gold)?;
    let mut gold_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(gold_bytes.as_slice());
    let mut labels: HashMap<String, usize> = HashMap::new();
    for record in gold_reader.records() {
        let record = record
            .map_err(|e| malformed(gold, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(malformed(gold, line, "expected id,label"));
        }
        let label = parse_olid_label(task, &record[1])
            .map_err(|m| malformed(gold, line, m))?
            .ok_or_else(|| malformed(gold, line, "missing label"))?;
        labels.insert(record[0].trim().to_string(), label);
    }

    let bytes = read_file(tweets)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record
            .map_err(|e| malformed(tweets, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(malformed(
                tweets,
                line,
                format!("expected 2 columns, got {}", record.len()),
            ));
        }
        let id = record[0].trim().to_string();
        let label = *labels
            .get(&id)
            .ok_or_else(|| malformed(tweets, line, format!("no gold label for id {id}")))?;
        let raw = RawTweet::new(&record[1]).map_err(|_| malformed(tweets, line, "empty tweet"))?;
        out.push(LabeledExample {
            id,
            raw,
            labels: BTreeMap::from([(task, label)]),
        });
    }
    Ok(out)
}

/// Reads the Davidson et al. CSV (`count, hate_speech, offensive_language,
/// neither, class, tweet`, optionally preceded by an unnamed index column).
/// Class 0/1/2 maps to HATE/OFF/NONE under [`Task::D3`].
pub fn load_davidson(path: &Path) -> Result<Vec<LabeledExample>> {
    let bytes = read_file(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let header = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Ok(Vec::new());
    }
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let (Some(class_col), Some(tweet_col)) = (col("class"), col("tweet")) else {
        return Err(malformed(
            path,
            1,
            "header must contain `class` and `tweet` columns",
        ));
    };
    let id_col = header.get(0).filter(|h| h.trim().is_empty()).map(|_| 0);
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| malformed(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(malformed(
                path,
                line,
                format!("expected {} columns, got {}", header.len(), record.len()),
            ));
        }
        let class: usize = match record[class_col].trim() {
            "0" => 0,
            "1" => 1,
            "2" => 2,
            other => {
                return Err(malformed(
                    path,
                    line,
                    format!("unknown class label {other:?}"),
                ))
            }
        };
        let id = match id_col {
            Some(c) => record[c].trim().to_string(),
            None => row.to_string(),
        };
        let raw =
            RawTweet::new(&record[tweet_col]).map_err(|_| malformed(path, line, "empty tweet"))?;
        out.push(LabeledExample {
            id,
            raw,
            labels: BTreeMap::from([(Task::D3, class)]),
        });
    }
    Ok(out)
}

/// Where the test partition comes from.
#[derive(Debug, Clone)]
pub enum TestSource {
    /// A dataset-provided test file (OLID).
    Predefined(Vec<LabeledExample>),
    /// Stratified hold-out of this fraction of the examples (Davidson).
    HoldOut(f64),
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub task: Task,
    pub train: Vec<LabeledExample>,
    pub dev: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub seed: u64,
    pub dev_fraction: f64,
}

/// Split membership by id, serialised as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub dev_fraction: f64,
    pub train_ids: Vec<String>,
    pub dev_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Partitions `items` by class and moves `round(count · fraction)` of each
/// class (at least one, at most count − 1) into the held-out side. Classes
/// with fewer than two members stay whole on the kept side. Both outputs
/// preserve the input order.
fn stratified_holdout(
    labels: &[usize],
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut held = HashSet::new();
    for (class, mut members) in by_class {
        let count = members.len();
        if count < 2 {
            log::warn!("class {class} has {count} member(s); kept whole in the training side");
            continue;
        }
        let take = ((count as f64 * fraction).round() as usize).clamp(1, count - 1);
        members.shuffle(rng);
        held.extend(members.into_iter().take(take));
    }
    (0..labels.len()).partition(|i| !held.contains(i))
}

fn take_indices(examples: &[LabeledExample], idx: &[usize]) -> Vec<LabeledExample> {
    idx.iter().map(|&i| examples[i].clone()).collect()
}

/// Builds a stratified train/dev(/test) split, deterministic in `seed`.
pub fn make_split(
    examples: Vec<LabeledExample>,
    task: Task,
    dev_fraction: f64,
    seed: u64,
    test: TestSource,
) -> Result<DatasetSplit> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "dev_fraction must lie in (0, 1), got {dev_fraction}"
        )));
    }
    if examples.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot split an empty example list".into(),
        ));
    }
    let labels: Vec<usize> = examples
        .iter()
        .map(|e| {
            e.label(task).ok_or_else(|| {
                Error::InvalidArgument(format!("example {} has no label for task {task}", e.id))
            })
        })
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (pool, test) = match test {
        TestSource::Predefined(test) => (examples, test),
        TestSource::HoldOut(fraction) => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "test fraction must lie in (0, 1), got {fraction}"
                )));
            }
            let (keep, held) = stratified_holdout(&labels, fraction, &mut rng);
            (
                take_indices(&examples, &keep),
                take_indices(&examples, &held),
            )
        }
    };
    let pool_labels: Vec<usize> = pool
        .iter()
        .map(|e| e.label(task).expect("checked above"))
        .collect();
    let (train_idx, dev_idx) = stratified_holdout(&pool_labels, dev_fraction, &mut rng);
    Ok(DatasetSplit {
        task,
        train: take_indices(&pool, &train_idx),
        dev: take_indices(&pool, &dev_idx),
        test,
        seed,
        dev_fraction,
    })
}

impl DatasetSplit {
    pub fn manifest(&self) -> SplitManifest {
        let ids = |v: &[LabeledExample]| v.iter().map(|e| e.id.clone()).collect();
        SplitManifest {
            seed: self.seed,
            dev_fraction: self.dev_fraction,
            train_ids: ids(&self.train),
            dev_ids: ids(&self.dev),
            test_ids: ids(&self.test),
        }
    }

    /// Rebuilds a split from a manifest. `pool` must contain every listed id.
    pub fn from_manifest(
        manifest: &SplitManifest,
        task: Task,
        pool: &[LabeledExample],
    ) -> Result<Self> {
        let by_id: HashMap<&str, &LabeledExample> =
            pool.iter().map(|e| (e.id.as_str(), e)).collect();
        let pick = |ids: &[String]| -> Result<Vec<LabeledExample>> {
            ids.iter()
                .map(|id| {
                    by_id.get(id.as_str()).map(|e| (*e).clone()).ok_or_else(|| {
                        Error::InvalidArgument(format!("manifest id {id} not found in data"))
                    })
                })
                .collect()
        };
        Ok(DatasetSplit {
            task,
            train: pick(&manifest.train_ids)?,
            dev: pick(&manifest.dev_ids)?,
            test: pick(&manifest.test_ids)?,
            seed: manifest.seed,
            dev_fraction: manifest.dev_fraction,
        })
    }
}

impl SplitManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
