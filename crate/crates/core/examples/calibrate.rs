//! Calibration scratchpad: prints attack/unlearning/ranking numbers for the
//! synthetic MovieLens-shaped corpus under the default hyper-parameters.
//!
//! Usage: calibrate [n_interactions] [gender_tilt] [n_seeds]

use ndarray::Axis;
use recveil::analysis::{embedding_histograms, mean_dimension_variance, overlap_score};
use recveil::attack::{run_attack, shadow_split, AttackerConfig};
use recveil::data::{build_attribute_table, filter_min_interactions, split_dataset};
use recveil::recsys::{eval_ranking, eval_ranking_on, train_mf, EvalSplit};
use recveil::synth::{movielens_like, MovieLensLikeConfig};
use recveil::unlearn::{frobenius_reg, median_heuristic, unlearn, UnlearnConfig};
use recveil::{derive_seed, SplitRatios, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_inter: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(100_000);
    let tilt: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.45);
    let n_seeds: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(3);
    let zipf: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.9);
    let tau: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let genres: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(8);

    let mut gen_cfg = MovieLensLikeConfig::ml100k_shaped(424242);
    gen_cfg.n_interactions = n_inter;
    gen_cfg.gender_tilt = tilt;
    gen_cfg.zipf_exponent = zipf;
    gen_cfg.taste_sharpness = tau;
    gen_cfg.n_genres = genres;
    let corpus = movielens_like(&gen_cfg);
    let filtered = filter_min_interactions(&corpus.interactions, 5).unwrap();
    let ds = split_dataset(&filtered, SplitRatios::DEFAULT, 1).unwrap();
    let table = build_attribute_table(&ds, &corpus.labels).unwrap();
    println!(
        "dataset: {} users, {} items, {} interactions (from {}), groups {:?}",
        ds.n_users(),
        ds.n_items(),
        ds.n_interactions(),
        corpus.interactions.len(),
        table.group_sizes()
    );

    let mut sums = [0.0f64; 12];
    for seed in 0..n_seeds {
        let t0 = std::time::Instant::now();
        let model = train_mf(&ds, &TrainConfig::mf(derive_seed(100, seed))).unwrap();
        let train_time = t0.elapsed().as_secs_f64();
        let theta = model.user_embedding();

        // Scale diagnostics.
        let per_dim_std = mean_dimension_variance(theta.view()).sqrt();
        let x = theta.select(Axis(0), table.group0());
        let y = theta.select(Axis(0), table.group1());
        let sigma = median_heuristic(x.view(), y.view()).unwrap();
        let gap: f64 = {
            let m0 = x.mean_axis(Axis(0)).unwrap();
            let m1 = y.mean_axis(Axis(0)).unwrap();
            (&m0 - &m1).mapv(|v| v * v).sum().sqrt()
        };

        let split = shadow_split(ds.n_users(), &table, 0.1, derive_seed(200, seed)).unwrap();
        let atk_cfg = AttackerConfig::new(derive_seed(300, seed));
        let orig = run_attack(theta.view(), &table, &split, &atk_cfg).unwrap();
        let rec_orig = eval_ranking(&model, &ds, &[10]);

        // D2D.
        let t1 = std::time::Instant::now();
        let d2d = unlearn(theta, &table, &UnlearnConfig::d2d(derive_seed(400, seed))).unwrap();
        let d2d_time = t1.elapsed().as_secs_f64();
        let d2d_model = model.replace_user_embedding(d2d.theta.clone()).unwrap();
        let d2d_atk = run_attack(d2d.theta.view(), &table, &split, &atk_cfg).unwrap();
        let rec_d2d = eval_ranking(&d2d_model, &ds, &[10]);

        // U2U.
        let u2u = unlearn(theta, &table, &UnlearnConfig::u2u(derive_seed(500, seed))).unwrap();
        let u2u_model = model.replace_user_embedding(u2u.theta.clone()).unwrap();
        let u2u_atk = run_attack(u2u.theta.view(), &table, &split, &atk_cfg).unwrap();
        let rec_u2u = eval_ranking(&u2u_model, &ds, &[10]);
        let var_ratio = mean_dimension_variance(theta.view())
            / mean_dimension_variance(u2u.theta.view()).max(1e-300);

        // Popularity baseline on validation.
        let pop_hr = popularity_hr10(&ds);
        let val_hr = eval_ranking_on(&model, &ds, EvalSplit::Val, &[10], true).hr_at(10);

        let overlap_orig = overlap_score(
            &embedding_histograms(theta.view(), &table, 50, true, 1).unwrap(),
        )
        .mean;
        let overlap_d2d = overlap_score(
            &embedding_histograms(d2d.theta.view(), &table, 50, true, 1).unwrap(),
        )
        .mean;

        println!(
            "seed {seed}: std/dim {per_dim_std:.4} gap {gap:.4} sigma {sigma:.4} | \
             orig mlp {:.4} gbt {:.4} | d2d mlp {:.4} gbt {:.4} | u2u mlp {:.4} gbt {:.4}",
            orig.mlp.auc, orig.gbt.auc, d2d_atk.mlp.auc, d2d_atk.gbt.auc, u2u_atk.mlp.auc,
            u2u_atk.gbt.auc
        );
        println!(
            "  ndcg10 orig {:.4} d2d {:.4} ({:+.2}%) u2u {:.4} ({:+.2}%) | hr10 orig {:.4} d2d {:.4} u2u {:.4}",
            rec_orig.ndcg_at(10),
            rec_d2d.ndcg_at(10),
            100.0 * (rec_d2d.ndcg_at(10) - rec_orig.ndcg_at(10)) / rec_orig.ndcg_at(10),
            rec_u2u.ndcg_at(10),
            100.0 * (rec_u2u.ndcg_at(10) - rec_orig.ndcg_at(10)) / rec_orig.ndcg_at(10),
            rec_orig.hr_at(10),
            rec_d2d.hr_at(10),
            rec_u2u.hr_at(10),
        );
        println!(
            "  var_ratio {var_ratio:.1} | moved d2d {:.4} u2u {:.4} | overlap {overlap_orig:.3} -> {overlap_d2d:.3} | val_hr {val_hr:.4} pop_hr {pop_hr:.4} | train {train_time:.1}s d2d {d2d_time:.1}s",
            frobenius_reg(&d2d.theta, theta).unwrap().sqrt(),
            frobenius_reg(&u2u.theta, theta).unwrap().sqrt(),
        );

        for (slot, v) in [
            orig.mlp.auc,
            orig.gbt.auc,
            d2d_atk.mlp.auc,
            d2d_atk.gbt.auc,
            u2u_atk.mlp.auc,
            u2u_atk.gbt.auc,
            rec_orig.ndcg_at(10),
            rec_d2d.ndcg_at(10),
            rec_u2u.ndcg_at(10),
            rec_orig.hr_at(10),
            rec_d2d.hr_at(10),
            rec_u2u.hr_at(10),
        ]
        .into_iter()
        .enumerate()
        {
            sums[slot] += v;
        }
    }
    let n = n_seeds as f64;
    println!(
        "MEANS over {n_seeds} seeds: orig mlp {:.4} gbt {:.4} | d2d mlp {:.4} gbt {:.4} | u2u mlp {:.4} gbt {:.4}",
        sums[0] / n, sums[1] / n, sums[2] / n, sums[3] / n, sums[4] / n, sums[5] / n
    );
    println!(
        "  ndcg10 {:.4} / {:.4} / {:.4} | hr10 {:.4} / {:.4} / {:.4}",
        sums[6] / n, sums[7] / n, sums[8] / n, sums[9] / n, sums[10] / n, sums[11] / n
    );
}

fn popularity_hr10(ds: &recveil::InteractionDataset) -> f64 {
    let counts = ds.item_train_counts();
    let mut ranking: Vec<usize> = (0..ds.n_items()).collect();
    ranking.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut total = 0.0;
    let mut users = 0usize;
    for u in 0..ds.n_users() {
        let val: std::collections::HashSet<usize> = ds.val_items(u).iter().copied().collect();
        if val.is_empty() {
            continue;
        }
        users += 1;
        let train: std::collections::HashSet<usize> = ds.train_items(u).iter().copied().collect();
        let hits = ranking
            .iter()
            .filter(|i| !train.contains(i))
            .take(10)
            .filter(|i| val.contains(i))
            .count();
        total += hits as f64 / val.len() as f64;
    }
    total / users.max(1) as f64
}
