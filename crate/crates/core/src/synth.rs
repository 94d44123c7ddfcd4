//! Deterministic synthetic datasets.
//!
//! Three generators:
//!
//! * [`two_block_dataset`] — a tiny rank-1 taste structure for unit tests;
//! * [`MovieLensLikeConfig`] — an ML-100K-shaped implicit-feedback corpus
//!   with Zipf item popularity, per-user genre tastes and a controllable
//!   gender tilt, used by demos and by the evaluation suite when the real
//!   dataset is not on disk;
//! * [`gaussian_groups`] — two Gaussian clusters with group labels, the
//!   ground-truth fixture for unlearning checks.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{AttributeTable, RawInteraction};
use crate::rng::rng_from_seed;
use crate::{derive_seed, Error, Result};

/// Two user blocks, each interacting only with its own item block. Users and
/// items are split in half; user `u` draws `interactions_per_user` distinct
/// items from its block.
pub fn two_block_dataset(
    n_users: usize,
    n_items: usize,
    interactions_per_user: usize,
    seed: u64,
) -> Vec<RawInteraction> {
    let mut out = Vec::new();
    let half_items = n_items / 2;
    for u in 0..n_users {
        let mut rng = rng_from_seed(derive_seed(seed, u as u64));
        let block_start = if u < n_users / 2 { 0 } else { half_items };
        let block_len = if u < n_users / 2 {
            half_items
        } else {
            n_items - half_items
        };
        let mut items: Vec<usize> = (block_start..block_start + block_len).collect();
        items.shuffle(&mut rng);
        for &item in items.iter().take(interactions_per_user.min(block_len)) {
            out.push(RawInteraction {
                user_ext: format!("u{u}"),
                item_ext: format!("i{item}"),
                rating: 1.0,
                timestamp: 0,
            });
        }
    }
    out
}

/// Configuration for the MovieLens-shaped generator.
///
/// Interactions are drawn per user, without replacement, with item weight
/// `popularity(item) * preference(user, genre(item))`. A user's genre
/// preference mixes an individual taste vector with a gender-specific
/// profile; `gender_tilt` in [0, 1] controls the mix and therefore how much
/// gender signal ends up in trained embeddings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MovieLensLikeConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub n_genres: usize,
    /// Weight of the gender profile in user preferences.
    pub gender_tilt: f64,
    /// Zipf exponent for item popularity (0 = uniform).
    pub zipf_exponent: f64,
    /// Temperature on individual genre tastes; larger is more concentrated.
    pub taste_sharpness: f64,
    pub female_fraction: f64,
    pub min_user_interactions: usize,
    pub seed: u64,
}

impl MovieLensLikeConfig {
    /// ML-100K-shaped corpus: 943 users (273 female), 1,682 items.
    ///
    /// The density and taste parameters are calibrated so that a
    /// default-configured MF run lands in the regime where gender leaks into
    /// the embeddings at realistic attack levels and the default unlearning
    /// budgets are effective.
    pub fn ml100k_shaped(seed: u64) -> Self {
        MovieLensLikeConfig {
            n_users: 943,
            n_items: 1682,
            n_interactions: 70_000,
            n_genres: 8,
            gender_tilt: 0.73,
            zipf_exponent: 0.85,
            taste_sharpness: 3.0,
            female_fraction: 273.0 / 943.0,
            min_user_interactions: 20,
            seed,
        }
    }

    /// A small corpus for pipeline smoke tests (~200 users).
    pub fn small(seed: u64) -> Self {
        MovieLensLikeConfig {
            n_users: 200,
            n_items: 300,
            n_interactions: 8_000,
            n_genres: 6,
            gender_tilt: 0.5,
            zipf_exponent: 0.8,
            taste_sharpness: 1.5,
            female_fraction: 0.35,
            min_user_interactions: 12,
            seed,
        }
    }
}

/// Generated corpus: raw interactions plus external-id -> gender labels.
pub struct SyntheticCorpus {
    pub interactions: Vec<RawInteraction>,
    pub labels: HashMap<String, u8>,
}

pub fn movielens_like(cfg: &MovieLensLikeConfig) -> SyntheticCorpus {
    let n = cfg.n_users;
    let m = cfg.n_items;
    let g = cfg.n_genres;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 0xD5));

    // Gender labels: fixed female count, shuffled over users.
    let n_female = (cfg.female_fraction * n as f64).round() as usize;
    let mut labels_vec = vec![1u8; n_female];
    labels_vec.resize(n, 0u8);
    labels_vec.shuffle(&mut rng);

    // Item genres and Zipf popularity over a shuffled rank order.
    let genres: Vec<usize> = (0..m).map(|_| rng.gen_range(0..g)).collect();
    let mut ranks: Vec<usize> = (0..m).collect();
    ranks.shuffle(&mut rng);
    let mut popularity = vec![0f64; m];
    for (rank, &item) in ranks.iter().enumerate() {
        popularity[item] = 1.0 / ((rank + 1) as f64).powf(cfg.zipf_exponent);
    }

    // Gender genre profiles: males lean on even genres, females on odd.
    let profile_delta = 0.95;
    let male_profile: Vec<f64> = (0..g)
        .map(|gi| if gi % 2 == 0 { 1.0 + profile_delta } else { 1.0 - profile_delta })
        .collect();
    let female_profile: Vec<f64> = (0..g)
        .map(|gi| if gi % 2 == 0 { 1.0 - profile_delta } else { 1.0 + profile_delta })
        .collect();
    let normalize = |v: Vec<f64>| -> Vec<f64> {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    };
    let male_profile = normalize(male_profile);
    let female_profile = normalize(female_profile);

    // Per-user activity: lognormal-ish weights scaled to the target total,
    // with a hard floor.
    let floor = cfg.min_user_interactions;
    let raw_activity: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = standard_normal(&mut rng);
            (0.7 * z).exp()
        })
        .collect();
    let spare = cfg.n_interactions.saturating_sub(n * floor);
    let activity_sum: f64 = raw_activity.iter().sum();
    let mut counts: Vec<usize> = raw_activity
        .iter()
        .map(|w| floor + (spare as f64 * w / activity_sum) as usize)
        .collect();
    // Distribute the rounding remainder deterministically.
    let mut total: usize = counts.iter().sum();
    let mut u = 0;
    while total < cfg.n_interactions {
        counts[u % n] += 1;
        total += 1;
        u += 1;
    }
    for c in counts.iter_mut() {
        *c = (*c).min(m);
    }

    let mut interactions = Vec::with_capacity(cfg.n_interactions);
    let mut timestamp = 874_000_000i64;
    for user in 0..n {
        let mut urng = rng_from_seed(derive_seed(cfg.seed, 0xA100 + user as u64));
        // Individual taste: softmax of Gaussians over genres.
        let taste_logits: Vec<f64> = (0..g)
            .map(|_| cfg.taste_sharpness * standard_normal(&mut urng))
            .collect();
        let max_logit = taste_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let taste_raw: Vec<f64> = taste_logits.iter().map(|z| (z - max_logit).exp()).collect();
        let taste = normalize(taste_raw);
        let profile = if labels_vec[user] == 1 {
            &female_profile
        } else {
            &male_profile
        };
        let pref: Vec<f64> = (0..g)
            .map(|gi| (1.0 - cfg.gender_tilt) * taste[gi] + cfg.gender_tilt * profile[gi])
            .collect();

        // Weighted sampling without replacement (exponential-key trick).
        let mut keys: Vec<(f64, usize)> = (0..m)
            .map(|item| {
                let w = popularity[item] * pref[genres[item]].max(1e-12);
                let e: f64 = -urng.gen_range(f64::EPSILON..1.0f64).ln();
                (e / w, item)
            })
            .collect();
        keys.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        for &(_, item) in keys.iter().take(counts[user]) {
            let rating = match urng.gen_range(0..100) {
                0..=5 => 1.0,
                6..=16 => 2.0,
                17..=43 => 3.0,
                44..=77 => 4.0,
                _ => 5.0,
            };
            interactions.push(RawInteraction {
                user_ext: (user + 1).to_string(),
                item_ext: (item + 1).to_string(),
                rating,
                timestamp,
            });
            timestamp += 1;
        }
    }

    let labels = (0..n)
        .map(|user| ((user + 1).to_string(), labels_vec[user]))
        .collect();
    SyntheticCorpus {
        interactions,
        labels,
    }
}

/// Write a corpus as MovieLens-100K formatted files (`u.data`, `u.user`)
/// under `dir`, so the regular loaders can ingest it.
pub fn write_ml100k_files(dir: &Path, corpus: &SyntheticCorpus) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data_path = dir.join("u.data");
    let mut data = std::io::BufWriter::new(
        std::fs::File::create(&data_path).map_err(|e| Error::io(&data_path, e))?,
    );
    for i in &corpus.interactions {
        writeln!(
            data,
            "{}\t{}\t{}\t{}",
            i.user_ext, i.item_ext, i.rating as i64, i.timestamp
        )
        .map_err(|e| Error::io(&data_path, e))?;
    }
    drop(data);

    let user_path = dir.join("u.user");
    let mut users = std::io::BufWriter::new(
        std::fs::File::create(&user_path).map_err(|e| Error::io(&user_path, e))?,
    );
    let mut ids: Vec<&String> = corpus.labels.keys().collect();
    ids.sort_by_key(|s| s.parse::<u64>().unwrap_or(u64::MAX));
    for id in ids {
        let gender = if corpus.labels[id] == 1 { "F" } else { "M" };
        writeln!(users, "{id}|30|{gender}|other|00000").map_err(|e| Error::io(&user_path, e))?;
    }
    Ok(())
}

/// Two Gaussian clusters in K dimensions with labels equal to the component.
/// Component means sit at `-gap/2` and `+gap/2` per dimension, so the total
/// mean separation is `gap * sqrt(k)` in units of the per-dimension std.
pub fn gaussian_groups(
    n_per_group: usize,
    k: usize,
    per_dim_gap: f64,
    std: f64,
    seed: u64,
) -> (Array2<f64>, AttributeTable) {
    let n = 2 * n_per_group;
    let mut rng = rng_from_seed(seed);
    let mut theta = Array2::zeros((n, k));
    let mut labels = vec![0u8; n];
    for row in 0..n {
        let group = if row < n_per_group { 0 } else { 1 };
        labels[row] = group as u8;
        let mean = if group == 0 {
            -per_dim_gap * std / 2.0
        } else {
            per_dim_gap * std / 2.0
        };
        for d in 0..k {
            theta[[row, d]] = mean + std * standard_normal(&mut rng);
        }
    }
    let table = AttributeTable::from_labels(labels).expect("binary labels");
    (theta, table)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
