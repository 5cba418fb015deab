use std::collections::HashMap;
use std::path::PathBuf;

use ndarray::{array, Array1};

use super::*;
use crate::corpus::load_olid;
use crate::depgraph::{index_by_sent_id, read_conllu_keyed};
use crate::model::SyLstmParams;
use crate::vocab::random_embeddings;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/toy")
        .join(name)
}

pub(crate) fn toy_model_config(vocab: usize) -> (ModelConfig, SyLstmParams) {
    let cfg = ModelConfig {
        d_w: 16,
        lstm_hidden: 8,
        gcn_out: 8,
        ffnn_out: 8,
        ..ModelConfig::default()
    };
    let params =
        SyLstmParams::init(&cfg, random_embeddings(vocab, cfg.d_w, 1).unwrap(), 1).unwrap();
    (cfg, params)
}

fn toy_train_config() -> TrainConfig {
    TrainConfig {
        lr0: 0.01,
        epochs: 10,
        batch_size: 16,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn toy_examples() -> (Vocabulary, Vec<TrainExample>) {
    let examples = load_olid(&fixture("train.tsv"), Task::A).unwrap();
    let parses: HashMap<String, DependencyParse> =
        index_by_sent_id(read_conllu_keyed(&fixture("parses.conllu")).unwrap()).unwrap();
    let tokens: Vec<Vec<String>> = examples
        .iter()
        .map(|e| parses[&e.id].tokens().to_vec())
        .collect();
    let vocab = Vocabulary::build(&tokens, 1000).unwrap();
    let aligned = align_examples(&examples, &parses, &vocab, Task::A, 64).unwrap();
    (vocab, aligned)
}

#[test]
fn cosine_boundaries() {
    assert_eq!(cosine_lr(0, 100, 0.001), 0.001);
    assert_eq!(cosine_lr(100, 100, 0.001), 0.0);
    assert!((cosine_lr(50, 100, 0.001) - 0.0005).abs() < 1e-18);
}

#[test]
fn cross_entropy_values() {
    assert_eq!(cross_entropy(array![1.0, 0.0].view(), 0), 0.0);
    let u = array![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
    assert!((cross_entropy(u.view(), 2) - 3f64.ln()).abs() < 1e-12);
    assert!((cross_entropy(array![1.0, 0.0].view(), 1) - 1e12f64.ln()).abs() < 1e-9);

    let p = array![[0.2, 0.5, 0.3], [0.7, 0.1, 0.2], [0.05, 0.05, 0.9]];
    let labels = [1, 0, 2];
    let (loss, d) = batch_cross_entropy(p.view(), &labels);
    let oracle = (-(0.5f64).ln() - (0.7f64).ln() - (0.9f64).ln()) / 3.0;
    assert!((loss - oracle).abs() < 1e-10);
    assert!((d[[0, 1]] - (0.5 - 1.0) / 3.0).abs() < 1e-15);
    assert!((d[[0, 0]] - 0.2 / 3.0).abs() < 1e-15);
}

fn hyper(lr: f64, wd: f64) -> AdamHyper {
    AdamHyper {
        lr,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: wd,
        coupled: false,
    }
}

#[test]
fn adamw_scalar_closed_form() {
    // θ = 1, g = 0.5, m = 0.1, v = 0.01, t = 3.
    let (theta, m, v) = adamw_scalar(1.0, 0.5, 0.1, 0.01, 3, &hyper(0.01, 0.1));
    let m_exp = 0.9 * 0.1 + 0.1 * 0.5;
    let v_exp = 0.999 * 0.01 + 0.001 * 0.25;
    let m_hat = m_exp / (1.0 - 0.9f64.powi(3));
    let v_hat = v_exp / (1.0 - 0.999f64.powi(3));
    let theta_exp = 1.0 - 0.01 * m_hat / (v_hat.sqrt() + 1e-8) - 0.01 * 0.1 * 1.0;
    assert!((m - m_exp).abs() < 1e-15);
    assert!((v - v_exp).abs() < 1e-15);
    assert!((theta - theta_exp).abs() < 1e-15);

    assert_eq!(adamw_scalar(2.5, 0.0, 0.0, 0.0, 1, &hyper(0.1, 0.0)).0, 2.5);
    let (decayed, _, _) = adamw_scalar(2.0, 0.0, 0.0, 0.0, 1, &hyper(0.1, 0.5));
    assert!((decayed - 2.0 * (1.0 - 0.1 * 0.5)).abs() < 1e-15);
}

#[test]
fn optimizer_respects_exclusions() {
    let (cfg, mut p) = toy_model_config(10);
    p.lstm[0][0].bias.fill(1.0);
    p.bn1.gamma.fill(2.0);
    p.embedding.values.row_mut(PAD).fill(0.0);
    let before = p.clone();
    let grads = p.zeros_like();
    let tc = TrainConfig {
        weight_decay: 0.5,
        ..TrainConfig::default()
    };
    let mut adam = AdamW::new(&p);
    adam.step(&mut p, &grads, 0.1, &tc).unwrap();
    assert_eq!(p.lstm[0][0].bias, before.lstm[0][0].bias);
    assert_eq!(p.bn1.gamma, before.bn1.gamma);
    assert_eq!(p.classifier_bias, before.classifier_bias);
    assert_eq!(
        p.embedding.values.row(PAD),
        before.embedding.values.row(PAD)
    );
    let expect = &before.gcn_weight * (1.0 - 0.1 * 0.5);
    assert!((&p.gcn_weight - &expect).iter().all(|d| d.abs() < 1e-15));
    assert!((p.embedding.values[[3, 0]] - before.embedding.values[[3, 0]] * 0.95).abs() < 1e-15);
    let _ = cfg;

    let mut frozen = before.clone();
    frozen.embedding.trainable = false;
    let mut adam = AdamW::new(&frozen);
    let mut g = frozen.zeros_like();
    g.embedding.values.fill(1.0);
    adam.step(&mut frozen, &g, 0.1, &tc).unwrap();
    assert_eq!(frozen.embedding.values, before.embedding.values);
}

#[test]
fn non_finite_gradient_aborts_without_mutation() {
    let (_, mut p) = toy_model_config(10);
    let before = p.clone();
    let mut g = p.zeros_like();
    g.ffnn_weight[[0, 0]] = f64::NAN;
    let mut adam = AdamW::new(&p);
    let err = adam
        .step(&mut p, &g, 0.1, &TrainConfig::default())
        .unwrap_err();
    assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "ffnn.weight"));
    assert_eq!(p, before);
    assert_eq!(adam.steps(), 0);
}

#[test]
fn clipping_bounds_global_norm() {
    let (_, p) = toy_model_config(10);
    let mut g = p.zeros_like();
    g.gcn_weight.fill(1.0);
    g.classifier_bias = Array1::from_elem(2, 1.0);
    let n = clip_grad_norm(&mut g, 1.0);
    assert!((n - ((g.gcn_weight.len() + 2) as f64).sqrt()).abs() < 1e-12);
    let after: f64 = g
        .tensors()
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    assert!((after - 1.0).abs() < 1e-12);
}

#[test]
fn config_validation() {
    assert!(TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    assert!(TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    assert!(TrainConfig {
        lr0: 0.0,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    assert!(TrainConfig::default().validate().is_ok());
}

#[test]
fn missing_parse_is_reported_by_id() {
    let examples = load_olid(&fixture("train.tsv"), Task::A).unwrap();
    let mut parses: HashMap<String, DependencyParse> =
        index_by_sent_id(read_conllu_keyed(&fixture("parses.conllu")).unwrap()).unwrap();
    parses.remove("10003");
    parses.remove("10150");
    let vocab = Vocabulary::from_tokens(vec!["<pad>".into(), "<unk>".into()]).unwrap();
    let err = align_examples(&examples, &parses, &vocab, Task::A, 64).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Alignment(_)));
    assert!(
        msg.contains("10003")
            && msg.contains("10150")
            && msg.starts_with("misaligned inputs: 2 example")
    );
}

#[test]
fn toy_corpus_trains_deterministically() {
    let (vocab, data) = toy_examples();
    let (train_set, dev_set) = data.split_at(160);
    let (cfg, params) = toy_model_config(vocab.len());
    let tc = toy_train_config();
    let a = train(&cfg, &tc, params.clone(), train_set, dev_set, None).unwrap();
    let b = train(&cfg, &tc, params, train_set, dev_set, None).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.to_csv(), b.history.to_csv());
    assert_eq!(a.history.epochs.len(), 10);

    let (_, _, pred) = evaluate(&cfg, &a.last, train_set, 64).unwrap();
    let acc = pred
        .iter()
        .zip(train_set)
        .filter(|(p, e)| **p == e.label)
        .count() as f64
        / train_set.len() as f64;
    assert!(acc >= 0.95, "train accuracy {acc}");

    let best = a.history.best().unwrap();
    assert!(a.history.epochs.iter().all(|r| r.dev_wf1 <= best.dev_wf1));
    let (_, wf1, _) = evaluate(&cfg, &a.best, dev_set, 7).unwrap();
    assert!((wf1 - best.dev_wf1).abs() < 1e-6);
}

#[test]
fn frozen_batch_loss_decreases() {
    let (vocab, data) = toy_examples();
    let batch_data = &data[..32];
    let mut decreasing = 0;
    for seed in 0..3u64 {
        let (cfg, mut params) = toy_model_config(vocab.len());
        params = SyLstmParams::init(&cfg, params.embedding.clone(), seed).unwrap();
        let tc = TrainConfig::default();
        let mut adam = AdamW::new(&params);
        let mut grads = params.zeros_like();
        let batch: Vec<_> = batch_data.iter().map(TrainExample::as_example).collect();
        let labels: Vec<usize> = batch_data.iter().map(|e| e.label).collect();
        let mut losses = Vec::new();
        for _ in 0..6 {
            let fwd =
                BatchForward::run(&cfg, &params, &batch, Mode::Train { dropout_seed: 0 }).unwrap();
            let (loss, d) = batch_cross_entropy(fwd.probabilities.view(), &labels);
            losses.push(loss);
            for t in grads.tensors_mut() {
                t.data.fill(0.0);
            }
            fwd.backward(&params, d.view(), &mut grads).unwrap();
            adam.step(&mut params, &grads, tc.lr0, &tc).unwrap();
        }
        if losses[5] < losses[0] {
            decreasing += 1;
        }
    }
    assert!(decreasing >= 2);
}

#[test]
fn history_csv_layout() {
    let h = TrainHistory {
        epochs: vec![EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            dev_loss: 0.25,
            dev_wf1: 80.0,
            lr: 0.001,
        }],
        best_epoch: 1,
    };
    assert_eq!(
        h.to_csv(),
        "epoch,train_loss,dev_loss,dev_wf1,lr\n1,0.5,0.25,80.0,0.001\n"
    );
}
