use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recveil::attack::{train_gbt_attacker, GbtConfig};
use recveil::data::{filter_min_interactions, split_dataset};
use recveil::recsys::{top_k_items, train_mf};
use recveil::synth::{movielens_like, MovieLensLikeConfig};
use recveil::unlearn::{mmd_eval, u2u_grad, u2u_loss, u2u_loss_bruteforce, Bandwidth};
use recveil::{AttributeTable, SplitRatios, TrainConfig};

fn embedding_fixture(n: usize, k: usize) -> (Array2<f64>, AttributeTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let theta = Array2::from_shape_fn((n, k), |_| rng.gen_range(-0.1..0.1));
    let labels: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
    (theta, AttributeTable::from_labels(labels).unwrap())
}

fn bench_u2u(c: &mut Criterion) {
    let (theta, labels) = embedding_fixture(943, 16);
    c.bench_function("u2u_loss_closed_form/943x16", |b| {
        b.iter(|| u2u_loss(black_box(&theta), black_box(&labels)).unwrap())
    });
    c.bench_function("u2u_grad/943x16", |b| {
        b.iter(|| u2u_grad(black_box(&theta), black_box(&labels)).unwrap())
    });
    let (small, small_labels) = embedding_fixture(200, 16);
    c.bench_function("u2u_loss_bruteforce/200x16", |b| {
        b.iter(|| u2u_loss_bruteforce(black_box(&small), black_box(&small_labels)).unwrap())
    });
}

fn bench_mmd(c: &mut Criterion) {
    let (theta, labels) = embedding_fixture(943, 16);
    let x = theta.select(ndarray::Axis(0), labels.group1());
    let y = theta.select(ndarray::Axis(0), labels.group0());
    c.bench_function("mmd_eval_median/943x16", |b| {
        b.iter(|| mmd_eval(black_box(x.view()), black_box(y.view()), Bandwidth::Median).unwrap())
    });
}

fn bench_ranking(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scores: Vec<f64> = (0..1682).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut excluded = vec![false; scores.len()];
    for i in 0..100 {
        excluded[i * 7] = true;
    }
    c.bench_function("top_k_items/1682->10", |b| {
        b.iter(|| top_k_items(black_box(&scores), black_box(&excluded), 10))
    });
}

fn bench_training(c: &mut Criterion) {
    let corpus = movielens_like(&MovieLensLikeConfig::small(5));
    let filtered = filter_min_interactions(&corpus.interactions, 5).unwrap();
    let dataset = split_dataset(&filtered, SplitRatios::DEFAULT, 3).unwrap();
    let mut cfg = TrainConfig::mf(11);
    cfg.epochs = 1;
    c.bench_function("train_mf_epoch/small", |b| {
        b.iter(|| train_mf(black_box(&dataset), black_box(&cfg)).unwrap())
    });
}

fn bench_gbt(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = Array2::from_shape_fn((94, 16), |_| rng.gen_range(-1.0..1.0f64));
    let y: Vec<u8> = (0..94).map(|_| rng.gen_range(0..2) as u8).collect();
    let cfg = GbtConfig {
        rounds: 20,
        ..GbtConfig::default()
    };
    c.bench_function("train_gbt/94x16x20rounds", |b| {
        b.iter(|| train_gbt_attacker(black_box(x.view()), black_box(&y), &cfg).unwrap())
    });
}

criterion_group!(
    benches,
    bench_u2u,
    bench_mmd,
    bench_ranking,
    bench_training,
    bench_gbt
);
criterion_main!(benches);
