use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sylstm"));
    c.env("RUST_LOG", "warn").env_remove("SYLSTM_RESOURCE_DIR");
    c
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn toy_config() -> PathBuf {
    manifest_dir().join("fixtures/toy.toml")
}

fn toy(file: &str) -> PathBuf {
    manifest_dir().join("../core/fixtures/toy").join(file)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn status(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn train_into(dir: &Path) -> Output {
    run(bin()
        .args(["train", "--config"])
        .arg(toy_config())
        .arg("--output")
        .arg(dir))
}

/// One toy model shared by the tests that only read it.
fn trained() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let out = train_into(&dir.path().join("run"));
        assert_eq!(status(&out), 0, "{}", stderr(&out));
        dir
    })
    .path()
}

fn run_dir() -> PathBuf {
    trained().join("run")
}

const CHAIN_ROW: &str = "\t_\t_\t_\t_\t";

fn chain_conllu(sentences: &[&str]) -> String {
    let mut out = String::new();
    for s in sentences {
        let words: Vec<&str> = s.split_whitespace().collect();
        for (i, w) in words.iter().enumerate() {
            let head = if i == 0 { 0 } else { i };
            out.push_str(&format!("{}\t{w}{CHAIN_ROW}{head}\tdep\t_\t_\n", i + 1));
        }
        out.push('\n');
    }
    out
}

#[test]
fn prep_is_line_for_line() {
    let dir = TempDir::new().unwrap();
    let (input, output) = (dir.path().join("in.txt"), dir.path().join("out.txt"));
    std::fs::write(
        &input,
        "@india is great\nsee https://t.co/xyz now\n#banislam waaaaayyyy\n",
    )
    .unwrap();
    let out = run(bin()
        .args(["prep", "--in"])
        .arg(&input)
        .arg("--out")
        .arg(&output));
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let cleaned = std::fs::read_to_string(&output).unwrap();
    assert_eq!(
        cleaned.lines().collect::<Vec<_>>(),
        ["@user is great", "see url now", "# banislam waayy"]
    );
}

#[test]
fn prep_table_examples() {
    let dir = TempDir::new().unwrap();
    let (input, output) = (dir.path().join("in.txt"), dir.path().join("out.txt"));
    std::fs::write(&input, ":)\nputuporshutup\nwaaaaayyyy\n@india :)\n").unwrap();
    assert_eq!(
        status(&run(bin()
            .args(["prep", "--in"])
            .arg(&input)
            .arg("--out")
            .arg(&output))),
        0
    );
    let cleaned = std::fs::read_to_string(&output).unwrap();
    assert_eq!(
        cleaned.lines().collect::<Vec<_>>(),
        [
            "smiley face",
            "put up or shut up",
            "waayy",
            "@user smiley face"
        ]
    );
}

#[test]
fn prep_missing_input_is_io_error() {
    let dir = TempDir::new().unwrap();
    let out = run(bin()
        .args(["prep", "--in"])
        .arg(dir.path().join("absent.txt"))
        .arg("--out")
        .arg(dir.path().join("o")));
    assert_eq!(status(&out), 2);
}

#[test]
fn prep_bad_resource_dir_fails() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.txt");
    std::fs::write(&input, "hello\n").unwrap();
    let out = run(bin()
        .env("SYLSTM_RESOURCE_DIR", dir.path().join("nowhere"))
        .args(["prep", "--in"])
        .arg(&input)
        .arg("--out")
        .arg(dir.path().join("o")));
    assert_eq!(status(&out), 2);
}

#[test]
fn train_writes_all_artifacts() {
    let dir = run_dir();
    for f in [
        "model.ckpt",
        "history.csv",
        "split.json",
        "vocab.json",
        "config.toml",
        "run.log",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let history = std::fs::read_to_string(dir.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,dev_loss,dev_wf1,lr\n"));
    assert_eq!(history.lines().count(), 11);
}

#[test]
fn train_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let start = std::time::Instant::now();
    let out = train_into(&dir.path().join("again"));
    assert!(start.elapsed().as_secs() < 60);
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("dev weighted F1"));
    for f in ["history.csv", "model.ckpt", "split.json", "vocab.json"] {
        let a = std::fs::read(run_dir().join(f)).unwrap();
        let b = std::fs::read(dir.path().join("again").join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }
    // the resolved config differs only in the output directory
    let without_output = |p: PathBuf| -> String {
        let text = std::fs::read_to_string(p.join("config.toml")).unwrap();
        text.lines()
            .filter(|l| !l.starts_with("output ="))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        without_output(run_dir()),
        without_output(dir.path().join("again"))
    );
}

#[test]
fn config_errors_leave_no_output() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("never");
    let out = run(bin()
        .args(["train", "--config"])
        .arg(toy_config())
        .args(["--dataset", "davidson", "--task", "B", "--output"])
        .arg(&target));
    assert_eq!(status(&out), 1);
    assert!(
        stderr(&out).contains("not defined for davidson"),
        "{}",
        stderr(&out)
    );
    assert!(!target.exists());

    let out = run(bin()
        .args(["train", "--config"])
        .arg(toy_config())
        .args(["--model.widht", "3", "--output"])
        .arg(&target));
    assert_eq!(status(&out), 1);
    assert!(!target.exists());
}

#[test]
fn train_without_parses_for_every_tweet_is_alignment_error() {
    let dir = TempDir::new().unwrap();
    let parses = dir.path().join("few.conllu");
    std::fs::write(
        &parses,
        "# sent_id = 10000\n1\tthe\t_\t_\t_\t_\t0\troot\t_\t_\n\n",
    )
    .unwrap();
    let target = dir.path().join("run");
    let out = run(bin()
        .args(["train", "--config"])
        .arg(toy_config())
        .arg("--parses")
        .arg(&parses)
        .arg("--output")
        .arg(&target));
    assert_eq!(status(&out), 4, "{}", stderr(&out));
    assert!(!target.exists());
}

fn eval_cmd(run: &Path) -> Command {
    let mut c = bin();
    c.args(["eval", "--run"])
        .arg(run)
        .arg("--data")
        .arg(toy("test.tsv"))
        .arg("--labels")
        .arg(toy("test_labels.csv"))
        .arg("--parses")
        .arg(toy("parses.conllu"));
    c
}

#[test]
fn eval_reports_model_and_trivial_rows() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.json");
    let out = run(eval_cmd(&run_dir())
        .arg("--report")
        .arg(&report)
        .arg("--csv")
        .arg(dir.path().join("t.csv")));
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let table = String::from_utf8_lossy(&out.stdout);
    for row in ["SyLSTM", "All NOT", "All OFF"] {
        assert!(table.contains(row), "{table}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let model = &json["model"];
    assert_eq!(model["task"], "A");
    assert_eq!(model["n"], 40);
    assert_eq!(model["per_class"].as_array().unwrap().len(), 2);
    assert_eq!(model["confusion"].as_array().unwrap().len(), 2);
    for k in ["precision", "recall", "f1"] {
        assert!(model["weighted"][k].is_f64());
    }
    assert!(json["loss"].is_f64());
    assert_eq!(json["baselines"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(csv.starts_with("system,precision,recall,f1\n"));
}

#[test]
fn eval_rejects_damaged_artifacts() {
    let dir = TempDir::new().unwrap();
    let copy = dir.path().join("run");
    std::fs::create_dir(&copy).unwrap();
    for f in ["model.ckpt", "vocab.json"] {
        std::fs::copy(run_dir().join(f), copy.join(f)).unwrap();
    }
    let mut bytes = std::fs::read(copy.join("model.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(copy.join("model.ckpt"), &bytes).unwrap();
    assert_eq!(status(&run(&mut eval_cmd(&copy))), 3);

    std::fs::copy(run_dir().join("model.ckpt"), copy.join("model.ckpt")).unwrap();
    let vocab = std::fs::read_to_string(copy.join("vocab.json")).unwrap();
    std::fs::write(
        copy.join("vocab.json"),
        vocab.replacen("\"great\"", "\"grate\"", 1),
    )
    .unwrap();
    let out = run(&mut eval_cmd(&copy));
    assert_eq!(status(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("does not match"));
}

fn predict(tweets: &str, conllu: &str) -> (Output, Option<String>) {
    let dir = TempDir::new().unwrap();
    let (input, parses, output) = (
        dir.path().join("in.txt"),
        dir.path().join("p.conllu"),
        dir.path().join("out.txt"),
    );
    std::fs::write(&input, tweets).unwrap();
    std::fs::write(&parses, conllu).unwrap();
    let out = run(bin()
        .args(["predict", "--run"])
        .arg(run_dir())
        .arg("--in")
        .arg(&input)
        .arg("--out")
        .arg(&output)
        .arg("--parses")
        .arg(&parses));
    (out, std::fs::read_to_string(&output).ok())
}

#[test]
fn predict_one_label_per_tweet() {
    let (out, labels) = predict(
        "you are a moron\nwhat a great day\n",
        &chain_conllu(&["you are a moron", "what a great day"]),
    );
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let labels = labels.unwrap();
    let labels: Vec<&str> = labels.lines().collect();
    assert_eq!(labels.len(), 2);
    assert!(labels.iter().all(|l| *l == "NOT" || *l == "OFF"));
}

#[test]
fn predict_identical_tweets_get_identical_labels() {
    let t = "you clown what a loser";
    let (out, labels) = predict(&format!("{t}\n{t}\n"), &chain_conllu(&[t, t]));
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let labels = labels.unwrap();
    let labels: Vec<&str> = labels.lines().collect();
    assert_eq!(labels[0], labels[1]);
}

#[test]
fn predict_count_mismatch_lists_lines() {
    let (out, labels) = predict(
        "you are a moron\nwhat a great day\n",
        &chain_conllu(&["you are a moron"]),
    );
    assert_eq!(status(&out), 4);
    assert!(stderr(&out).contains("line(s) 2"), "{}", stderr(&out));
    assert!(labels.is_none());
}

#[test]
fn predict_through_parser_command() {
    let dir = TempDir::new().unwrap();
    let (input, output) = (dir.path().join("in.txt"), dir.path().join("out.txt"));
    std::fs::write(&input, "what a great day\n").unwrap();
    // A stand-in parser: every cleaned line becomes a one-token sentence.
    let parser = r#"while read -r line; do printf '1\t%s\t_\t_\t_\t_\t0\troot\t_\t_\n\n' "${line%% *}"; done"#;
    let out = run(bin()
        .args(["predict", "--run"])
        .arg(run_dir())
        .arg("--in")
        .arg(&input)
        .arg("--out")
        .arg(&output)
        .args(["--parser-cmd", parser]));
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(&output).unwrap().lines().count(), 1);

    let out = run(bin()
        .args(["predict", "--run"])
        .arg(run_dir())
        .arg("--in")
        .arg(&input)
        .arg("--out")
        .arg(&output)
        .args(["--parser-cmd", "exit 3"]));
    assert_eq!(status(&out), 2);
}

#[test]
fn baseline_prints_svm_and_trivial_rows() {
    let out = run(bin().args(["baseline", "--config"]).arg(toy_config()));
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let table = String::from_utf8_lossy(&out.stdout);
    for row in ["SVM", "All NOT", "All OFF"] {
        assert!(table.contains(row), "{table}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(status(&run(bin().arg("frobnicate"))), 1);
    assert_eq!(
        status(&run(bin().args(["predict", "--in", "x", "--out", "y"]))),
        1
    );
    assert_eq!(status(&run(bin().arg("--help"))), 0);
}
