//! Matrix-factorization core trained with per-sample SGD on binary
//! cross-entropy over observed positives plus uniformly sampled negatives.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::InteractionDataset;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

use super::{EmbeddingModel, ModelKind, TrainConfig};

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z), stable for large |z|.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn gaussian_matrix(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    let slice = m.as_slice_mut().expect("standard layout");
    let mut i = 0;
    while i < slice.len() {
        // Box-Muller; ChaCha gives identical streams on every platform.
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u2;
        slice[i] = std * r * phi.cos();
        i += 1;
        if i < slice.len() {
            slice[i] = std * r * phi.sin();
            i += 1;
        }
    }
    m
}

/// Uniform negative item for `user`: an item outside the user's train set.
/// Capped rejection sampling; after the cap the last draw is kept, which can
/// only happen for users interacting with nearly the whole catalog.
pub(crate) fn sample_negative(
    rng: &mut ChaCha8Rng,
    n_items: usize,
    train_mask: &[bool],
) -> usize {
    let mut item = rng.gen_range(0..n_items);
    for _ in 0..100 {
        if !train_mask[item] {
            break;
        }
        item = rng.gen_range(0..n_items);
    }
    item
}

pub(crate) fn train_masks(dataset: &InteractionDataset) -> Vec<Vec<bool>> {
    (0..dataset.n_users())
        .map(|u| {
            let mut mask = vec![false; dataset.n_items()];
            for &item in dataset.train_items(u) {
                mask[item] = true;
            }
            mask
        })
        .collect()
}

/// Train the MF model. With `epochs = 0` the embeddings are exactly the
/// Gaussian init. Deterministic for a fixed `(dataset, cfg)`.
pub fn train_mf(dataset: &InteractionDataset, cfg: &TrainConfig) -> Result<EmbeddingModel> {
    train_mf_with_hook(dataset, cfg, |_, _, _| {})
}

/// MF training with a per-epoch hook used by the in-training unlearning
/// baseline. The hook may mutate the embedding matrices after each epoch.
pub(crate) fn train_mf_with_hook(
    dataset: &InteractionDataset,
    cfg: &TrainConfig,
    mut after_epoch: impl FnMut(usize, &mut Array2<f64>, &mut Array2<f64>),
) -> Result<EmbeddingModel> {
    cfg.validate()?;
    let n = dataset.n_users();
    let m = dataset.n_items();
    let k = cfg.embedding_dim;
    let lr = cfg.learning_rate;

    let mut rng = rng_from_seed(cfg.seed);
    let mut user_emb = gaussian_matrix(n, k, cfg.init_std, &mut rng);
    let mut item_emb = gaussian_matrix(m, k, cfg.init_std, &mut rng);

    let positives: Vec<(usize, usize)> = dataset.train_pairs().collect();
    let masks = train_masks(dataset);
    let mut order: Vec<usize> = (0..positives.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &idx in &order {
            let (u, pos) = positives[idx];
            loss_sum += sgd_update(&mut user_emb, &mut item_emb, u, pos, 1.0, lr);
            for _ in 0..cfg.negatives {
                let neg = sample_negative(&mut rng, m, &masks[u]);
                loss_sum += sgd_update(&mut user_emb, &mut item_emb, u, neg, 0.0, lr);
            }
        }
        if !loss_sum.is_finite() {
            return Err(Error::Diverged {
                epoch,
                msg: format!("mean BCE loss became non-finite ({loss_sum})"),
            });
        }
        after_epoch(epoch, &mut user_emb, &mut item_emb);
    }

    Ok(EmbeddingModel::new(
        ModelKind::Mf,
        user_emb,
        item_emb,
        0,
        cfg.clone(),
        cfg.epochs,
        None,
    ))
}

/// One BCE SGD step on the pair `(user, item)` with label `y`; returns the
/// sample loss before the update.
fn sgd_update(
    user_emb: &mut Array2<f64>,
    item_emb: &mut Array2<f64>,
    user: usize,
    item: usize,
    y: f64,
    lr: f64,
) -> f64 {
    let k = user_emb.ncols();
    let u_off = user * k;
    let i_off = item * k;
    let u_slice = user_emb.as_slice_mut().expect("standard layout");
    // Split borrows: users and items live in different matrices.
    let z: f64;
    let g: f64;
    {
        let i_slice = item_emb.as_slice().expect("standard layout");
        z = (0..k)
            .map(|d| u_slice[u_off + d] * i_slice[i_off + d])
            .sum();
        g = sigmoid(z) - y;
    }
    let i_slice = item_emb.as_slice_mut().expect("standard layout");
    for d in 0..k {
        let uv = u_slice[u_off + d];
        let iv = i_slice[i_off + d];
        u_slice[u_off + d] = uv - lr * g * iv;
        i_slice[i_off + d] = iv - lr * g * uv;
    }
    // BCE(z, y) = softplus(z) - y*z.
    softplus(z) - y * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_dataset, SplitRatios};
    use crate::synth;

    #[test]
    fn zero_epochs_equals_gaussian_init() {
        let raw = synth::two_block_dataset(40, 20, 12, 3);
        let ds = split_dataset(&raw, SplitRatios::DEFAULT, 5).unwrap();
        let mut cfg = TrainConfig::mf(5);
        cfg.epochs = 0;
        let model = train_mf(&ds, &cfg).unwrap();

        let mut rng = rng_from_seed(cfg.seed);
        let expected_user = gaussian_matrix(ds.n_users(), 16, cfg.init_std, &mut rng);
        let expected_item = gaussian_matrix(ds.n_items(), 16, cfg.init_std, &mut rng);
        assert_eq!(model.user_embedding(), &expected_user);
        assert_eq!(model.item_embedding(), &expected_item);
    }

    #[test]
    fn block_dataset_matched_pairs_score_higher() {
        // Two user blocks each preferring one item block; after training the
        // mean matched dot product must exceed the mismatched one.
        let raw = synth::two_block_dataset(40, 20, 12, 3);
        let ds = split_dataset(&raw, SplitRatios::DEFAULT, 5).unwrap();
        let mut cfg = TrainConfig::mf(7);
        cfg.epochs = 30;
        let model = train_mf(&ds, &cfg).unwrap();

        let half_items = ds.n_items() / 2;
        let mut matched = 0.0;
        let mut mismatched = 0.0;
        let mut n_matched = 0;
        let mut n_mismatched = 0;
        for u in 0..ds.n_users() {
            let block = if u < ds.n_users() / 2 { 0 } else { 1 };
            let scores = model.scores_for(u);
            for (i, s) in scores.iter().enumerate() {
                let item_block = if i < half_items { 0 } else { 1 };
                if item_block == block {
                    matched += s;
                    n_matched += 1;
                } else {
                    mismatched += s;
                    n_mismatched += 1;
                }
            }
        }
        assert!(matched / n_matched as f64 > mismatched / n_mismatched as f64);
    }

    #[test]
    fn training_is_deterministic() {
        let raw = synth::two_block_dataset(20, 12, 8, 1);
        let ds = split_dataset(&raw, SplitRatios::DEFAULT, 2).unwrap();
        let mut cfg = TrainConfig::mf(9);
        cfg.epochs = 5;
        let a = train_mf(&ds, &cfg).unwrap();
        let b = train_mf(&ds, &cfg).unwrap();
        assert_eq!(a.user_embedding(), b.user_embedding());
        assert_eq!(a.item_embedding(), b.item_embedding());
    }

    #[test]
    fn sigmoid_and_softplus_are_stable() {
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }
}
