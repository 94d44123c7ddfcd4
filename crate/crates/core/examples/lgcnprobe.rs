//! Scratch probe: LightGCN vs MF ranking quality on the synthetic corpus.

use recveil::data::{build_attribute_table, filter_min_interactions, split_dataset};
use recveil::recsys::{eval_ranking, train_lightgcn, train_mf};
use recveil::synth::{movielens_like, MovieLensLikeConfig};
use recveil::{SplitRatios, TrainConfig};

fn main() {
    let corpus = movielens_like(&MovieLensLikeConfig::ml100k_shaped(424242));
    let filtered = filter_min_interactions(&corpus.interactions, 5).unwrap();
    let ds = split_dataset(&filtered, SplitRatios::DEFAULT, 1).unwrap();
    let table = build_attribute_table(&ds, &corpus.labels).unwrap();
    println!("groups {:?}", table.group_sizes());

    let t0 = std::time::Instant::now();
    let mf = train_mf(&ds, &TrainConfig::mf(1001)).unwrap();
    let mf_rec = eval_ranking(&mf, &ds, &[10]);
    println!(
        "mf: hr10 {:.4} ndcg10 {:.4} ({:.1}s)",
        mf_rec.hr_at(10),
        mf_rec.ndcg_at(10),
        t0.elapsed().as_secs_f64()
    );

    let t1 = std::time::Instant::now();
    let lgcn = train_lightgcn(&ds, &TrainConfig::lightgcn(1002)).unwrap();
    let lgcn_rec = eval_ranking(&lgcn, &ds, &[10]);
    println!(
        "lightgcn: hr10 {:.4} ndcg10 {:.4} ({:.1}s)",
        lgcn_rec.hr_at(10),
        lgcn_rec.ndcg_at(10),
        t1.elapsed().as_secs_f64()
    );
}
