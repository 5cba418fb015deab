use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sylstm::depgraph::{build_graph, normalize};
use sylstm::model::{gcn_propagate, BatchForward, Example};
use sylstm::textprep::Preprocessor;
use sylstm::train::{batch_cross_entropy, AdamW, TrainConfig};
use sylstm::vocab::random_embeddings;
use sylstm::{DependencyParse, Mode, ModelConfig, NormalizedAdjacency, SyLstmParams};

const VOCAB: usize = 2_000;
const BATCH: usize = 32;

fn random_parse(n: usize, rng: &mut ChaCha8Rng) -> DependencyParse {
    let heads = (0..n)
        .map(|i| (i > 0).then(|| rng.gen_range(0..i)))
        .collect();
    DependencyParse::new(
        (0..n).map(|i| i.to_string()).collect(),
        heads,
        vec!["dep".into(); n],
    )
    .unwrap()
}

struct Batch {
    ids: Vec<Vec<usize>>,
    adjs: Vec<NormalizedAdjacency>,
    labels: Vec<usize>,
}

impl Batch {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let lens: Vec<usize> = (0..BATCH).map(|_| rng.gen_range(8..40)).collect();
        Batch {
            ids: lens
                .iter()
                .map(|&n| (0..n).map(|_| rng.gen_range(2..VOCAB)).collect())
                .collect(),
            adjs: lens
                .iter()
                .map(|&n| normalize(&build_graph(&random_parse(n, rng)), 1.0).unwrap())
                .collect(),
            labels: (0..BATCH).map(|_| rng.gen_range(0..2)).collect(),
        }
    }

    fn examples(&self) -> Vec<Example<'_>> {
        self.ids
            .iter()
            .zip(&self.adjs)
            .map(|(ids, adj)| Example { ids, adj })
            .collect()
    }
}

fn gcn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let adj = normalize(&build_graph(&random_parse(64, &mut rng)), 1.0).unwrap();
    let h = Array2::from_shape_fn((64, 64), |_| rng.gen_range(-1.0..1.0));
    let w = Array2::from_shape_fn((64, 32), |_| rng.gen_range(-1.0..1.0));
    c.bench_function("gcn_propagate 64 nodes", |b| {
        b.iter(|| gcn_propagate(black_box(&adj), h.view(), w.view()).unwrap())
    });
}

fn model(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = ModelConfig::default();
    let params =
        SyLstmParams::init(&cfg, random_embeddings(VOCAB, cfg.d_w, 1).unwrap(), 1).unwrap();
    let batch = Batch::random(&mut rng);
    let examples = batch.examples();

    c.bench_function("forward batch of 32 (eval)", |b| {
        b.iter(|| BatchForward::run(&cfg, &params, black_box(&examples), Mode::Eval).unwrap())
    });

    let tc = TrainConfig::default();
    c.bench_function("training step batch of 32", |b| {
        b.iter_batched(
            || (params.clone(), AdamW::new(&params)),
            |(mut p, mut opt)| {
                let fwd = BatchForward::run(&cfg, &p, &examples, Mode::Train { dropout_seed: 7 })
                    .unwrap();
                let (_, d) = batch_cross_entropy(fwd.probabilities.view(), &batch.labels);
                let mut grads = p.zeros_like();
                fwd.backward(&p, d.view(), &mut grads).unwrap();
                opt.step(&mut p, &grads, tc.lr0, &tc).unwrap();
                p
            },
            BatchSize::LargeInput,
        )
    });
}

fn preprocessing(c: &mut Criterion) {
    let pre = Preprocessor::bundled();
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/fixtures/tweets_1k.txt"
    ))
    .unwrap();
    let tweets: Vec<&str> = text.lines().collect();
    c.bench_function("preprocess 1000 tweets", |b| {
        b.iter(|| {
            for t in &tweets {
                black_box(pre.preprocess_str(t).unwrap());
            }
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = gcn, model, preprocessing
}
criterion_main!(benches);
