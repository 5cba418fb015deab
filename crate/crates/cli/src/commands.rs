use std::collections::HashMap;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sylstm::corpus::{
    load_davidson, load_olid, load_olid_test, make_split, SplitManifest, TestSource,
};
use sylstm::depgraph::{index_by_sent_id, parse_conllu, read_conllu_keyed};
use sylstm::eval::{
    format_csv, format_table, svm_baseline, trivial_baseline, weighted_metrics, SvmConfig,
    TableRow, DEFAULT_C_GRID,
};
use sylstm::model::checkpoint::{self, Checkpoint, CheckpointMeta};
use sylstm::model::{predict_batch, Example};
use sylstm::textprep::Preprocessor;
use sylstm::train::{align_examples, encode_parse, evaluate, train as run_training};
use sylstm::vocab::{load_glove, random_embeddings};
use sylstm::{
    DatasetSplit, DependencyParse, EvalReport, LabeledExample, SyLstmParams, Task, Vocabulary,
};

use crate::config::{Dataset, EmbeddingMode, RunConfig};
use crate::exit::{io_err, Failure};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const VOCAB_FILE: &str = "vocab.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const LOG_FILE: &str = "run.log";

const EVAL_BATCH: usize = 64;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn require(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::io(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

/// Timestamped progress lines; the only place wall-clock time is recorded.
struct RunLog(File);

impl RunLog {
    fn create(path: &Path) -> Result<Self, Failure> {
        File::create(path).map(RunLog).map_err(|e| io_err(path, e))
    }

    fn line(&mut self, msg: &str) {
        let t = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default();
        let _ = writeln!(self.0, "{}.{:03} {msg}", t.as_secs(), t.subsec_millis());
    }
}

pub fn prep(input: &Path, output: &Path) -> Result<(), Failure> {
    let pre = Preprocessor::from_env()?;
    let text = read(input)?;
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        match pre.preprocess_str(line) {
            Ok(clean) => out.push_str(&clean.text),
            Err(_) => log::warn!("line {}: blank tweet left blank", i + 1),
        }
        out.push('\n');
    }
    write(output, out)
}

fn load_split(cfg: &RunConfig) -> Result<DatasetSplit, Failure> {
    let (pool, test) = match cfg.dataset {
        Dataset::Olid => {
            let pool = load_olid(&cfg.data, cfg.task)?;
            let test = match (&cfg.test_data, &cfg.test_labels) {
                (Some(tweets), Some(gold)) => {
                    TestSource::Predefined(load_olid_test(tweets, gold, cfg.task)?)
                }
                _ => TestSource::HoldOut(cfg.test_fraction),
            };
            (pool, test)
        }
        Dataset::Davidson => (
            load_davidson(&cfg.data)?,
            TestSource::HoldOut(cfg.test_fraction),
        ),
    };
    Ok(make_split(
        pool,
        cfg.task,
        cfg.dev_fraction,
        cfg.seed,
        test,
    )?)
}

fn load_parses(path: &Path) -> Result<HashMap<String, DependencyParse>, Failure> {
    Ok(index_by_sent_id(read_conllu_keyed(path)?)?)
}

pub fn train(cfg: &RunConfig) -> Result<(), Failure> {
    let (parses_path, out_dir) = cfg.check_trainable()?;
    let split = load_split(cfg)?;
    let parses = load_parses(parses_path)?;

    let tokens: Vec<Vec<String>> = split
        .train
        .iter()
        .filter_map(|e| parses.get(&e.id))
        .map(|p| p.tokens().to_vec())
        .collect();
    let vocab = Vocabulary::build(&tokens, cfg.vocab_size)?;
    let train_set = align_examples(&split.train, &parses, &vocab, cfg.task, cfg.model.max_len)?;
    let dev_set = align_examples(&split.dev, &parses, &vocab, cfg.task, cfg.model.max_len)?;

    let mut embedding = match (cfg.embedding, &cfg.glove) {
        (EmbeddingMode::Glove, Some(path)) => {
            let (emb, coverage) = load_glove(path, &vocab, cfg.model.d_w, cfg.seed)?;
            log::info!(
                "GloVe covers {:.1}% of the vocabulary",
                100.0 * coverage.fraction()
            );
            emb
        }
        _ => random_embeddings(vocab.len(), cfg.model.d_w, cfg.seed)?,
    };
    embedding.trainable = cfg.train_embedding;
    let params = SyLstmParams::init(&cfg.model, embedding, cfg.seed)?;

    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut runlog = RunLog::create(&out_dir.join(LOG_FILE))?;
    runlog.line(&format!(
        "start: {} train, {} dev, {} test examples; vocabulary {}; {} parameters",
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        vocab.len(),
        params.param_count().total
    ));
    write(&out_dir.join(CONFIG_FILE), cfg.to_toml())?;
    write(&out_dir.join(SPLIT_FILE), split.manifest().to_json()?)?;
    write(&out_dir.join(VOCAB_FILE), vocab.to_json())?;

    let mut on_epoch = |r: &sylstm::train::EpochRecord, _: &SyLstmParams| {
        runlog.line(&format!(
            "epoch {}: train loss {:.4}, dev loss {:.4}, dev wF1 {:.2}, lr {:.3e}",
            r.epoch, r.train_loss, r.dev_loss, r.dev_wf1, r.lr
        ));
    };
    let outcome = run_training(
        &cfg.model,
        &cfg.train,
        params,
        &train_set,
        &dev_set,
        Some(&mut on_epoch),
    )?;
    let best = outcome.history.best().expect("at least one epoch").clone();
    let last = outcome
        .history
        .epochs
        .last()
        .expect("at least one epoch")
        .clone();

    write(&out_dir.join(HISTORY_FILE), outcome.history.to_csv())?;
    let meta = CheckpointMeta {
        task: Some(cfg.task.to_string()),
        classes: cfg.task.classes().iter().map(|c| c.to_string()).collect(),
        vocab_hash: vocab.hash(),
        extra: serde_json::json!({
            "dataset": cfg.dataset,
            "seed": cfg.seed,
            "best_epoch": best.epoch,
            "dev_wf1": best.dev_wf1,
        }),
    };
    checkpoint::save(
        &out_dir.join(CHECKPOINT_FILE),
        &cfg.model,
        &outcome.best,
        &meta,
    )?;
    runlog.line("done");

    println!(
        "best epoch {}: dev weighted F1 {:.1}",
        best.epoch, best.dev_wf1
    );
    println!("final dev weighted F1 {:.1}", last.dev_wf1);
    Ok(())
}

/// A checkpoint together with the vocabulary its ids refer to.
struct Model {
    ck: Checkpoint,
    vocab: Vocabulary,
    task: Task,
}

fn load_model(ck_path: &Path, vocab_path: &Path) -> Result<Model, Failure> {
    require(ck_path, "checkpoint")?;
    require(vocab_path, "vocabulary")?;
    let ck = checkpoint::load(ck_path)?;
    let vocab = Vocabulary::from_json(&read(vocab_path)?)
        .map_err(|e| Failure::integrity(format!("{}: {e}", vocab_path.display())))?;
    if vocab.hash() != ck.meta.vocab_hash {
        return Err(Failure::integrity(format!(
            "vocabulary {} does not match the checkpoint (hash {} vs {})",
            vocab_path.display(),
            vocab.hash(),
            ck.meta.vocab_hash
        )));
    }
    let task: Task = ck
        .meta
        .task
        .as_deref()
        .ok_or_else(|| Failure::integrity("checkpoint does not record its task"))?
        .parse()
        .map_err(|e: sylstm::Error| Failure::integrity(e.to_string()))?;
    if ck.config.n_classes != task.n_classes() {
        return Err(Failure::integrity(format!(
            "checkpoint has {} classes but task {task} has {}",
            ck.config.n_classes,
            task.n_classes()
        )));
    }
    Ok(Model { ck, vocab, task })
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub vocab: PathBuf,
    pub dataset: Dataset,
    pub data: PathBuf,
    pub labels: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub parses: PathBuf,
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct Baseline {
    system: String,
    report: EvalReport,
}

#[derive(Serialize)]
struct EvalOutput {
    loss: f64,
    model: EvalReport,
    baselines: Vec<Baseline>,
}

fn eval_examples(args: &EvalArgs, task: Task) -> Result<Vec<LabeledExample>, Failure> {
    require(&args.data, "data")?;
    if let Some(l) = &args.labels {
        require(l, "labels")?;
    }
    let examples = match (args.dataset, &args.labels) {
        (Dataset::Olid, Some(labels)) => load_olid_test(&args.data, labels, task)?,
        (Dataset::Olid, None) => load_olid(&args.data, task)?,
        (Dataset::Davidson, _) => load_davidson(&args.data)?,
    };
    let Some(split_path) = &args.split else {
        return Ok(examples);
    };
    let manifest = SplitManifest::from_json(&read(split_path)?)?;
    Ok(DatasetSplit::from_manifest(&manifest, task, &examples)?.test)
}

pub fn eval(args: &EvalArgs) -> Result<(), Failure> {
    let model = load_model(&args.checkpoint, &args.vocab)?;
    let task = model.task;
    if (args.dataset == Dataset::Olid) != task.is_olid() {
        return Err(Failure::config(format!(
            "the checkpoint was trained for task {task}, which {:?} does not provide",
            args.dataset
        )));
    }
    let examples = eval_examples(args, task)?;
    require(&args.parses, "parses")?;
    let parses = load_parses(&args.parses)?;
    let aligned = align_examples(
        &examples,
        &parses,
        &model.vocab,
        task,
        model.ck.config.max_len,
    )?;
    let (loss, _, pred) = evaluate(&model.ck.config, &model.ck.params, &aligned, EVAL_BATCH)?;
    let gold: Vec<usize> = aligned.iter().map(|e| e.label).collect();
    let classes = task.classes();
    let report = weighted_metrics(&gold, &pred, classes)?.with_task(task.to_string());

    let mut rows = vec![report.row("SyLSTM")];
    let mut baselines = Vec::new();
    for (c, name) in classes.iter().enumerate() {
        let system = format!("All {name}");
        let r = trivial_baseline(classes, c, &gold)?.with_task(task.to_string());
        rows.push(r.row(system.clone()));
        baselines.push(Baseline { system, report: r });
    }
    print!("{}", format_table(&rows));
    let out = EvalOutput {
        loss,
        model: report,
        baselines,
    };
    if let Some(path) = &args.report {
        write(
            path,
            serde_json::to_string_pretty(&out).map_err(sylstm::Error::from)?,
        )?;
    }
    if let Some(path) = &args.csv {
        write(path, format_csv(&rows))?;
    }
    Ok(())
}

pub enum ParseSource {
    Sidecar(PathBuf),
    Command(String),
}

/// Feeds the cleaned tweets, one per line, to `sh -c cmd` and reads
/// CoNLL-U from its standard output.
fn run_parser(cmd: &str, cleaned: &[String]) -> Result<String, Failure> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| Failure::io(format!("cannot start parser {cmd:?}: {e}")))?;
    let mut input = cleaned.join("\n");
    input.push('\n');
    let mut stdin = child.stdin.take().expect("piped stdin");
    let feeder = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
    let output = child
        .wait_with_output()
        .map_err(|e| Failure::io(format!("parser {cmd:?}: {e}")))?;
    let _ = feeder.join();
    if !output.status.success() {
        return Err(Failure::io(format!(
            "parser {cmd:?} exited with {}",
            output.status
        )));
    }
    String::from_utf8(output.stdout)
        .map_err(|_| Failure::io(format!("parser {cmd:?} wrote invalid UTF-8")))
}

fn line_list(range: std::ops::Range<usize>) -> String {
    range
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn predict(
    ck_path: &Path,
    vocab_path: &Path,
    input: &Path,
    output: &Path,
    source: &ParseSource,
) -> Result<(), Failure> {
    let model = load_model(ck_path, vocab_path)?;
    let pre = Preprocessor::from_env()?;
    let text = read(input)?;
    let mut cleaned = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let clean = pre.preprocess_str(line).map_err(|_| {
            Failure::io(format!("{}, line {}: blank tweet", input.display(), i + 1))
        })?;
        cleaned.push(clean.text);
    }
    let conllu = match source {
        ParseSource::Sidecar(path) => {
            require(path, "parses")?;
            read(path)?
        }
        ParseSource::Command(cmd) => run_parser(cmd, &cleaned)?,
    };
    let parses: Vec<DependencyParse> = parse_conllu(&conllu)?
        .into_iter()
        .map(|s| s.parse)
        .collect();
    let (n_tweets, n_parses) = (cleaned.len(), parses.len());
    if n_parses < n_tweets {
        return Err(Failure::alignment(format!(
            "{n_tweets} tweets but {n_parses} parses; no parse for input line(s) {}",
            line_list(n_parses..n_tweets)
        )));
    }
    if n_parses > n_tweets {
        return Err(Failure::alignment(format!(
            "{n_tweets} tweets but {n_parses} parses; parse(s) {} have no input line",
            line_list(n_tweets..n_parses)
        )));
    }

    let cfg = &model.ck.config;
    let encoded = parses
        .iter()
        .map(|p| encode_parse(p, &model.vocab, cfg.max_len))
        .collect::<sylstm::Result<Vec<_>>>()?;
    let mut out = String::new();
    for chunk in encoded.chunks(EVAL_BATCH) {
        let batch: Vec<Example<'_>> = chunk
            .iter()
            .map(|(ids, adj)| Example { ids, adj })
            .collect();
        for label in predict_batch(cfg, &model.ck.params, &batch)? {
            out.push_str(model.task.class_name(label));
            out.push('\n');
        }
    }
    write(output, out)
}

pub fn baseline(cfg: &RunConfig, report: Option<&Path>) -> Result<(), Failure> {
    let split = load_split(cfg)?;
    let pre = Preprocessor::from_env()?;
    let docs = |xs: &[LabeledExample]| -> Vec<Vec<String>> {
        xs.iter()
            .map(|e| {
                pre.preprocess(&e.raw)
                    .text
                    .split_whitespace()
                    .map(String::from)
                    .collect()
            })
            .collect()
    };
    let labels = |xs: &[LabeledExample]| -> Vec<usize> {
        xs.iter()
            .map(|e| e.label(cfg.task).expect("split is labelled"))
            .collect()
    };
    let n_classes = cfg.task.n_classes();
    let sel = svm_baseline(
        &docs(&split.train),
        &labels(&split.train),
        &docs(&split.dev),
        &labels(&split.dev),
        n_classes,
        &DEFAULT_C_GRID,
        SvmConfig::default(),
    )?;
    let gold = labels(&split.test);
    let pred: Vec<usize> = docs(&split.test)
        .iter()
        .map(|d| sel.model.predict(&sel.index.transform(d)))
        .collect();
    let classes = cfg.task.classes();
    let svm = weighted_metrics(&gold, &pred, classes)?.with_task(cfg.task.to_string());

    let mut rows: Vec<TableRow> = vec![svm.row("SVM")];
    let mut baselines = vec![Baseline {
        system: "SVM".into(),
        report: svm,
    }];
    for (c, name) in classes.iter().enumerate() {
        let system = format!("All {name}");
        let r = trivial_baseline(classes, c, &gold)?.with_task(cfg.task.to_string());
        rows.push(r.row(system.clone()));
        baselines.push(Baseline { system, report: r });
    }
    println!(
        "SVM C = {} (dev weighted F1 per C: {:?})",
        sel.model.c, sel.grid
    );
    print!("{}", format_table(&rows));
    if let Some(path) = report {
        write(
            path,
            serde_json::to_string_pretty(&baselines).map_err(sylstm::Error::from)?,
        )?;
    }
    Ok(())
}
