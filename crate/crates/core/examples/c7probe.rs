//! Scratch probe for the synthetic two-Gaussian unlearning fixture.
//! Usage: c7probe [k] [per_dim_gap] [std]

use recveil::analysis::{embedding_histograms, overlap_score};
use recveil::attack::{run_attack, shadow_split, AttackerConfig};
use recveil::synth::gaussian_groups;
use recveil::unlearn::{unlearn, UnlearnConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let k: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(4);
    let gap: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2.0);
    let std: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.01);

    let (theta, table) = gaussian_groups(200, k, gap, std, 99);
    let split = shadow_split(400, &table, 0.1, 7).unwrap();
    let atk = AttackerConfig::new(11);

    let orig = run_attack(theta.view(), &table, &split, &atk).unwrap();
    let overlap_before =
        overlap_score(&embedding_histograms(theta.view(), &table, 50, true, 3).unwrap()).mean;

    let t0 = std::time::Instant::now();
    let result = unlearn(&theta, &table, &UnlearnConfig::d2d(13)).unwrap();
    let post = run_attack(result.theta.view(), &table, &split, &atk).unwrap();
    let overlap_after =
        overlap_score(&embedding_histograms(result.theta.view(), &table, 50, true, 3).unwrap())
            .mean;

    println!(
        "orig mlp {:.4} gbt {:.4} | post mlp {:.4} gbt {:.4} | overlap {:.3} -> {:.3} (+{:.3}) | d2d {:.1}s",
        orig.mlp.auc,
        orig.gbt.auc,
        post.mlp.auc,
        post.gbt.auc,
        overlap_before,
        overlap_after,
        overlap_after - overlap_before,
        t0.elapsed().as_secs_f64()
    );
}
