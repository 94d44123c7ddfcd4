//! Dataset-independent property suite: oracle equivalences, gradient checks
//! against finite differences, metric axioms, and split/filter invariants.

use std::collections::HashMap;

use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use recveil::analysis::{embedding_histograms, overlap_score};
use recveil::attack::{auc_rank, shadow_split};
use recveil::data::{
    build_attribute_table, filter_min_interactions, split_dataset, RawInteraction,
};
use recveil::recsys::{bpr_terms, top_k_items};
use recveil::unlearn::{
    frobenius_reg, mmd_grad, mmd_rbf, u2u_grad, u2u_loss, u2u_loss_bruteforce, unlearn,
    UnlearnConfig,
};
use recveil::{AttributeTable, SplitRatios};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    max_n: usize,
    max_k: usize,
) -> (Array2<f64>, AttributeTable) {
    let n = rng.gen_range(2..=max_n);
    let k = rng.gen_range(1..=max_k);
    let theta = Array2::from_shape_fn((n, k), |_| rng.gen_range(-3.0..3.0));
    // At least one user in each group.
    let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
    labels[0] = 0;
    labels[n - 1] = 1;
    (theta, AttributeTable::from_labels(labels).unwrap())
}

#[test]
fn u2u_closed_form_matches_bruteforce_on_100_random_instances() {
    let mut r = rng(0xA11CE);
    for case in 0..100 {
        let (theta, labels) = random_instance(&mut r, 30, 8);
        let fast = u2u_loss(&theta, &labels).unwrap();
        let slow = u2u_loss_bruteforce(&theta, &labels).unwrap();
        let denom = slow.abs().max(1e-12);
        assert!(
            ((fast - slow) / denom).abs() < 1e-9,
            "case {case}: {fast} vs {slow}"
        );
    }
}

#[test]
fn u2u_closed_form_matches_bruteforce_up_to_n50() {
    let mut r = rng(0xB0B);
    for _ in 0..20 {
        let (theta, labels) = random_instance(&mut r, 50, 6);
        let fast = u2u_loss(&theta, &labels).unwrap();
        let slow = u2u_loss_bruteforce(&theta, &labels).unwrap();
        assert!(((fast - slow) / slow.abs().max(1e-12)).abs() < 1e-9);
    }
}

/// Central finite differences of a scalar function over every matrix entry.
fn finite_difference(
    theta: &Array2<f64>,
    mut f: impl FnMut(&Array2<f64>) -> f64,
    step: f64,
) -> Array2<f64> {
    let mut grad = Array2::zeros(theta.raw_dim());
    let mut work = theta.clone();
    for i in 0..theta.nrows() {
        for j in 0..theta.ncols() {
            let orig = work[[i, j]];
            work[[i, j]] = orig + step;
            let plus = f(&work);
            work[[i, j]] = orig - step;
            let minus = f(&work);
            work[[i, j]] = orig;
            grad[[i, j]] = (plus - minus) / (2.0 * step);
        }
    }
    grad
}

fn relative_norm_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

#[test]
fn u2u_gradient_matches_central_differences() {
    let mut r = rng(0xFEED);
    let theta = Array2::from_shape_fn((5, 3), |_| r.gen_range(-2.0..2.0));
    let labels = AttributeTable::from_labels(vec![0, 1, 0, 1, 1]).unwrap();
    let analytic = u2u_grad(&theta, &labels).unwrap();
    let numeric = finite_difference(&theta, |t| u2u_loss(t, &labels).unwrap(), 1e-6);
    assert!(
        relative_norm_error(&analytic, &numeric) < 1e-5,
        "error {}",
        relative_norm_error(&analytic, &numeric)
    );
}

#[test]
fn mmd_gradient_matches_central_differences() {
    let mut r = rng(0xC0FFEE);
    let x = Array2::from_shape_fn((4, 2), |_| r.gen_range(-1.5..1.5));
    let y = Array2::from_shape_fn((5, 2), |_| r.gen_range(-1.5..1.5));
    let sigma = 0.8;
    let (gx, gy) = mmd_grad(x.view(), y.view(), sigma).unwrap();

    let num_x = finite_difference(
        &x,
        |t| mmd_rbf(t.view(), y.view(), sigma).unwrap(),
        1e-6,
    );
    assert!(
        relative_norm_error(&gx, &num_x) < 1e-5,
        "grad_x error {}",
        relative_norm_error(&gx, &num_x)
    );
    let num_y = finite_difference(
        &y,
        |t| mmd_rbf(x.view(), t.view(), sigma).unwrap(),
        1e-6,
    );
    assert!(
        relative_norm_error(&gy, &num_y) < 1e-5,
        "grad_y error {}",
        relative_norm_error(&gy, &num_y)
    );
}

#[test]
fn frobenius_gradient_is_twice_the_difference() {
    let mut r = rng(0x5EED);
    let star = Array2::from_shape_fn((4, 3), |_| r.gen_range(-1.0..1.0));
    let theta = Array2::from_shape_fn((4, 3), |_| r.gen_range(-1.0..1.0));
    let numeric = finite_difference(&theta, |t| frobenius_reg(t, &star).unwrap(), 1e-6);
    let analytic = (&theta - &star) * 2.0;
    assert!(relative_norm_error(&analytic, &numeric) < 1e-6);
}

#[test]
fn bpr_derivative_matches_finite_differences_and_pushes_positive_up() {
    for x in [-2.0, -0.5, 0.0, 0.5, 2.0] {
        let (_, dx) = bpr_terms(x);
        let h = 1e-6;
        let numeric = (bpr_terms(x + h).0 - bpr_terms(x - h).0) / (2.0 * h);
        assert!(
            ((dx - numeric) / numeric.abs().max(1e-12)).abs() < 1e-6,
            "x={x}: {dx} vs {numeric}"
        );
        // Negative derivative: descent raises the positive item's score.
        assert!(dx < 0.0);
    }
    let (_, at_zero) = bpr_terms(0.0);
    assert!((at_zero + 0.5).abs() < 1e-12);
}

#[test]
fn auc_matches_pairwise_enumeration_oracle() {
    let mut r = rng(0xAB);
    for _ in 0..50 {
        let n = r.gen_range(4..40);
        // Discrete score levels force ties through the tie-handling path.
        let scores: Vec<f64> = (0..n).map(|_| r.gen_range(0..6) as f64 / 5.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| r.gen_range(0..2) as u8).collect();
        labels[0] = 0;
        labels[n - 1] = 1;

        let mut concordant = 0.0;
        let mut pairs = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        concordant += 1.0;
                    } else if scores[i] == scores[j] {
                        concordant += 0.5;
                    }
                }
            }
        }
        let oracle = concordant / pairs;
        let fast = auc_rank(&scores, &labels);
        assert!((fast - oracle).abs() < 1e-12, "{fast} vs {oracle}");
    }
}

#[test]
fn random_scores_score_near_half_auc() {
    // Null band: uniform scores on 500 held-out users, 10 seeds.
    for seed in 0..10u64 {
        let mut r = rng(seed);
        let scores: Vec<f64> = (0..500).map(|_| r.gen_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..500).map(|i| (i % 3 == 0) as u8).collect();
        let auc = auc_rank(&scores, &labels);
        assert!((0.4..=0.6).contains(&auc), "seed {seed}: AUC {auc}");
    }
}

#[test]
fn unlearn_moves_less_when_alpha_grows() {
    // Anchoring: ||theta_new - theta*||_F weakly non-increasing over the
    // alpha grid, single seed, 2% slack.
    let (theta, labels) = recveil::synth::gaussian_groups(30, 4, 1.0, 0.5, 3);
    let mut dists = Vec::new();
    for alpha in [1e-6, 1e-4, 1e-2, 1.0] {
        let mut cfg = UnlearnConfig::u2u(7);
        cfg.alpha = alpha;
        cfg.epochs = 2000;
        let result = unlearn(&theta, &labels, &cfg).unwrap();
        dists.push(frobenius_reg(&result.theta, &theta).unwrap().sqrt());
    }
    for w in dists.windows(2) {
        assert!(
            w[1] <= w[0] * 1.02,
            "distance increased along alpha grid: {dists:?}"
        );
    }
}

#[test]
fn histogram_overlap_rises_as_groups_merge() {
    let (theta, labels) = recveil::synth::gaussian_groups(150, 2, 3.0, 0.1, 5);
    let before = overlap_score(&embedding_histograms(theta.view(), &labels, 30, true, 1).unwrap());
    let mut merged = theta.clone();
    // Translate group 1 onto group 0.
    for &u in labels.group1() {
        for d in 0..merged.ncols() {
            merged[[u, d]] -= 0.3;
        }
    }
    let after = overlap_score(&embedding_histograms(merged.view(), &labels, 30, true, 1).unwrap());
    assert!(after.mean > before.mean);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_mmd_axioms(seed in 0u64..1000, n1 in 1usize..12, n2 in 1usize..12, k in 1usize..5) {
        let mut r = rng(seed);
        let x = Array2::from_shape_fn((n1, k), |_| r.gen_range(-2.0..2.0));
        let y = Array2::from_shape_fn((n2, k), |_| r.gen_range(-2.0..2.0));
        let sigma = r.gen_range(0.2..3.0);
        let xy = mmd_rbf(x.view(), y.view(), sigma).unwrap();
        let yx = mmd_rbf(y.view(), x.view(), sigma).unwrap();
        // Non-negative, symmetric, zero on identical samples.
        prop_assert!(xy >= 0.0);
        prop_assert!((xy - yx).abs() < 1e-12);
        let xx = mmd_rbf(x.view(), x.view(), sigma).unwrap();
        prop_assert!(xx.abs() < 1e-10);
    }

    #[test]
    fn prop_u2u_permutation_and_translation_invariance(seed in 0u64..1000) {
        let mut r = rng(seed);
        let (theta, labels) = random_instance(&mut r, 20, 5);
        let n = theta.nrows();
        let base = u2u_loss(&theta, &labels).unwrap();

        // Permute rows and labels together.
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut r);
        let permuted = theta.select(Axis(0), &perm);
        let perm_labels = AttributeTable::from_labels(
            perm.iter().map(|&i| labels.label(i)).collect(),
        ).unwrap();
        let permuted_loss = u2u_loss(&permuted, &perm_labels).unwrap();
        prop_assert!((permuted_loss - base).abs() <= 1e-9 * base.abs().max(1.0));

        // Add the same row vector to every row.
        let shift: Vec<f64> = (0..theta.ncols()).map(|_| r.gen_range(-5.0..5.0)).collect();
        let mut shifted = theta.clone();
        for mut row in shifted.outer_iter_mut() {
            for (d, v) in row.iter_mut().enumerate() {
                *v += shift[d];
            }
        }
        let shifted_loss = u2u_loss(&shifted, &labels).unwrap();
        prop_assert!((shifted_loss - base).abs() <= 1e-9 * base.abs().max(1.0));
    }

    #[test]
    fn prop_mmd_permutation_invariance(seed in 0u64..1000) {
        let mut r = rng(seed);
        let (theta, labels) = random_instance(&mut r, 16, 4);
        let n = theta.nrows();
        let group = |t: &Array2<f64>, l: &AttributeTable| {
            (t.select(Axis(0), l.group0()), t.select(Axis(0), l.group1()))
        };
        let (x, y) = group(&theta, &labels);
        let sigma = 0.9;
        let base = mmd_rbf(x.view(), y.view(), sigma).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut r);
        let permuted = theta.select(Axis(0), &perm);
        let perm_labels = AttributeTable::from_labels(
            perm.iter().map(|&i| labels.label(i)).collect(),
        ).unwrap();
        let (px, py) = group(&permuted, &perm_labels);
        let permuted_loss = mmd_rbf(px.view(), py.view(), sigma).unwrap();
        prop_assert!((permuted_loss - base).abs() <= 1e-9 * base.abs().max(1e-9));
    }

    #[test]
    fn prop_topk_invariant_under_monotone_transforms(
        scores in prop::collection::vec(-100.0f64..100.0, 1..40),
        k in 1usize..10,
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let excluded = vec![false; scores.len()];
        let base = top_k_items(&scores, &excluded, k);
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        prop_assert_eq!(&base, &top_k_items(&affine, &excluded, k));
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
        prop_assert_eq!(&base, &top_k_items(&cubed, &excluded, k));
    }

    #[test]
    fn prop_filter_fixpoint_and_split_partition(seed in 0u64..500) {
        let mut r = rng(seed);
        let n_records = r.gen_range(40..150);
        let raw: Vec<RawInteraction> = (0..n_records)
            .map(|_| RawInteraction {
                user_ext: format!("u{}", r.gen_range(0..8)),
                item_ext: format!("i{}", r.gen_range(0..10)),
                rating: 1.0,
                timestamp: 0,
            })
            .collect();

        if let Ok(filtered) = filter_min_interactions(&raw, 3) {
            // Applying the filter to its own output changes nothing.
            let again = filter_min_interactions(&filtered, 3).unwrap();
            prop_assert_eq!(&again, &filtered);

            if let Ok(ds) = split_dataset(&filtered, SplitRatios::DEFAULT, seed) {
                // Partition: per-user bucket sizes add up to the user's count.
                let mut per_user = vec![0usize; ds.n_users()];
                for inter in ds.interactions() {
                    per_user[inter.user] += 1;
                }
                for u in 0..ds.n_users() {
                    let total = ds.train_items(u).len() + ds.val_items(u).len() + ds.test_items(u).len();
                    prop_assert_eq!(total, per_user[u]);
                    prop_assert!(!ds.train_items(u).is_empty());
                }
                // Determinism: same input and seed -> identical bytes.
                let ds2 = split_dataset(&filtered, SplitRatios::DEFAULT, seed).unwrap();
                prop_assert_eq!(ds.to_bytes(), ds2.to_bytes());
            }
        }
    }

    #[test]
    fn prop_shadow_split_partitions_users(seed in 0u64..300) {
        let mut r = rng(seed);
        let n = r.gen_range(30..120);
        let mut labels: Vec<u8> = (0..n).map(|_| r.gen_range(0..2) as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        let table = AttributeTable::from_labels(labels).unwrap();
        let split = shadow_split(n, &table, 0.2, seed).unwrap();
        let mut all: Vec<usize> = split.exposed.iter().chain(&split.held_out).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(split.exposed.iter().any(|&u| table.label(u) == 0));
        prop_assert!(split.exposed.iter().any(|&u| table.label(u) == 1));
    }
}

#[test]
fn core_pipeline_is_deterministic_end_to_end() {
    // Generate -> load -> filter -> split -> train -> unlearn -> attack,
    // twice, comparing the numeric outputs bit for bit.
    let run = || {
        let cfg = recveil::synth::MovieLensLikeConfig::small(42);
        let corpus = recveil::synth::movielens_like(&cfg);
        let filtered = filter_min_interactions(&corpus.interactions, 5).unwrap();
        let ds = split_dataset(&filtered, SplitRatios::DEFAULT, 7).unwrap();
        let ext_labels: HashMap<String, u8> = corpus.labels.clone();
        let table = build_attribute_table(&ds, &ext_labels).unwrap();

        let mut tc = recveil::TrainConfig::mf(11);
        tc.epochs = 10;
        let model = recveil::recsys::train_mf(&ds, &tc).unwrap();

        let mut uc = UnlearnConfig::d2d(13);
        uc.epochs = 50;
        let result = unlearn(model.user_embedding(), &table, &uc).unwrap();

        let split = shadow_split(ds.n_users(), &table, 0.1, 17).unwrap();
        let outcome = recveil::attack::run_attack(
            result.theta.view(),
            &table,
            &split,
            &recveil::attack::AttackerConfig::new(19),
        )
        .unwrap();
        (
            result.theta.clone(),
            result.final_loss().total,
            outcome.mlp.auc,
            outcome.gbt.auc,
        )
    };
    let a = run();
    let b = run();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    assert_eq!(a.3, b.3);
}
