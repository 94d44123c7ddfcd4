//! Diagnostics over embeddings and unlearning runs: per-dimension group
//! histograms, distribution-overlap scores, PCA projections, alpha sweeps,
//! and a manifest-writing report helper.

mod pca;

pub use pca::{pca_project, PcaProjection};

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::attack::{run_attack, shadow_split, AttackerConfig};
use crate::data::{AttributeTable, InteractionDataset};
use crate::recsys::{eval_ranking, EmbeddingModel};
use crate::rng::rng_from_seed;
use crate::unlearn::{frobenius_reg, unlearn, UnlearnConfig};
use crate::{derive_seed, Error, Result};

/// Histogram of one embedding dimension, same bin edges for both groups.
#[derive(Debug, Clone, PartialEq)]
pub struct DimHistogram {
    /// `bins + 1` strictly increasing edges.
    pub edges: Vec<f64>,
    pub counts_g0: Vec<u64>,
    pub counts_g1: Vec<u64>,
    /// Constant dimension collapsed to a single padded bin.
    pub degenerate: bool,
}

/// Per-dimension histograms of the user embedding grouped by attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSet {
    pub dims: Vec<DimHistogram>,
    pub downsampled: bool,
    pub seed: u64,
}

/// Per-dimension overlap (histogram intersection) and its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapScore {
    pub per_dim: Vec<f64>,
    pub mean: f64,
}

/// Build per-dimension histograms of `theta` grouped by label.
///
/// Bin edges span the pooled min/max of each dimension over all users, so
/// they do not depend on downsampling. With `downsample` set, the majority
/// group is uniformly subsampled to the minority size (seeded), matching the
/// usual practice for comparing imbalanced groups.
pub fn embedding_histograms(
    theta: ArrayView2<f64>,
    labels: &AttributeTable,
    bins: usize,
    downsample: bool,
    seed: u64,
) -> Result<HistogramSet> {
    labels.require_both_groups()?;
    if theta.nrows() != labels.n_users() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", labels.n_users()),
            got: format!("{}", theta.nrows()),
        });
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("bins must be >= 1".into()));
    }

    let (g0, g1) = (labels.group0(), labels.group1());
    let (rows0, rows1) = if downsample {
        let target = g0.len().min(g1.len());
        let mut rng = rng_from_seed(seed);
        let mut sub = |rows: &[usize]| -> Vec<usize> {
            if rows.len() == target {
                rows.to_vec()
            } else {
                let mut shuffled = rows.to_vec();
                shuffled.shuffle(&mut rng);
                shuffled.truncate(target);
                shuffled.sort_unstable();
                shuffled
            }
        };
        (sub(g0), sub(g1))
    } else {
        (g0.to_vec(), g1.to_vec())
    };

    let mut dims = Vec::with_capacity(theta.ncols());
    for d in 0..theta.ncols() {
        let col = theta.column(d);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in col.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let degenerate = !(hi > lo);
        let (edges, n_bins) = if degenerate {
            (vec![lo - 0.5, lo + 0.5], 1)
        } else {
            let width = (hi - lo) / bins as f64;
            let mut edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * width).collect();
            // Make the top edge exact so max lands in the last bin.
            edges[bins] = hi;
            (edges, bins)
        };
        let bin_of = |v: f64| -> usize {
            if degenerate {
                return 0;
            }
            let span = hi - lo;
            let idx = ((v - lo) / span * n_bins as f64) as usize;
            idx.min(n_bins - 1)
        };
        let mut counts_g0 = vec![0u64; n_bins];
        for &u in &rows0 {
            counts_g0[bin_of(theta[[u, d]])] += 1;
        }
        let mut counts_g1 = vec![0u64; n_bins];
        for &u in &rows1 {
            counts_g1[bin_of(theta[[u, d]])] += 1;
        }
        dims.push(DimHistogram {
            edges,
            counts_g0,
            counts_g1,
            degenerate,
        });
    }
    Ok(HistogramSet {
        dims,
        downsampled: downsample,
        seed,
    })
}

/// Histogram intersection per dimension: `sum_b min(p0_b, p1_b)` over
/// group-normalized bin masses; 1 for identical distributions, 0 for
/// disjoint supports.
pub fn overlap_score(hist: &HistogramSet) -> OverlapScore {
    let per_dim: Vec<f64> = hist
        .dims
        .iter()
        .map(|dim| {
            let s0: f64 = dim.counts_g0.iter().sum::<u64>() as f64;
            let s1: f64 = dim.counts_g1.iter().sum::<u64>() as f64;
            if s0 == 0.0 || s1 == 0.0 {
                return 0.0;
            }
            dim.counts_g0
                .iter()
                .zip(&dim.counts_g1)
                .map(|(&a, &b)| (a as f64 / s0).min(b as f64 / s1))
                .sum()
        })
        .collect();
    let mean = per_dim.iter().sum::<f64>() / per_dim.len().max(1) as f64;
    OverlapScore { per_dim, mean }
}

/// One alpha-sweep row: unlearning strength versus attack and ranking
/// quality.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub auc_mlp: f64,
    pub auc_gbt: f64,
    pub ndcg10: f64,
    pub hr10: f64,
    /// Frobenius distance of the unlearned embedding from the original.
    pub frob_dist: f64,
}

/// Run unlearn + attack + ranking evaluation for every alpha in `alphas`.
/// Deterministic per seed; rows come back in input order.
#[allow(clippy::too_many_arguments)]
pub fn alpha_sweep(
    model: &EmbeddingModel,
    dataset: &InteractionDataset,
    labels: &AttributeTable,
    alphas: &[f64],
    base: &UnlearnConfig,
    attacker: &AttackerConfig,
    shadow_fraction: f64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::InvalidConfig("alpha grid is empty".into()));
    }
    let theta_star = model.user_embedding();
    let split = shadow_split(model.n_users(), labels, shadow_fraction, derive_seed(seed, 1))?;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut cfg = base.clone();
        cfg.alpha = alpha;
        let result = unlearn(theta_star, labels, &cfg)?;
        let frob_dist = frobenius_reg(&result.theta, theta_star)?.sqrt();
        let unlearned = model.replace_user_embedding(result.theta)?;
        let outcome = run_attack(unlearned.user_embedding().view(), labels, &split, attacker)?;
        let rec = eval_ranking(&unlearned, dataset, &[10]);
        rows.push(SweepRow {
            alpha,
            auc_mlp: outcome.mlp.auc,
            auc_gbt: outcome.gbt.auc,
            ndcg10: rec.ndcg_at(10),
            hr10: rec.hr_at(10),
            frob_dist,
        });
    }
    Ok(rows)
}

/// CSV renderings used by the CLI and tests; all formats are documented in
/// the README.
pub fn histogram_csv(hist: &HistogramSet) -> String {
    let mut out = String::from("dim,bin_lo,bin_hi,count_g0,count_g1\n");
    for (d, dim) in hist.dims.iter().enumerate() {
        for b in 0..dim.counts_g0.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                d,
                dim.edges[b],
                dim.edges[b + 1],
                dim.counts_g0[b],
                dim.counts_g1[b]
            ));
        }
    }
    out
}

pub fn projection_csv(proj: &PcaProjection, labels: &AttributeTable) -> String {
    let mut out = String::from("user,x,y,label\n");
    for u in 0..proj.coords.nrows() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            u,
            proj.coords[[u, 0]],
            proj.coords[[u, 1]],
            labels.label(u)
        ));
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,auc_mlp,auc_gbt,ndcg10,hr10,frob_dist\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.alpha, r.auc_mlp, r.auc_gbt, r.ndcg10, r.hr10, r.frob_dist
        ));
    }
    out
}

/// Manifest entry for one written artifact.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
}

/// Manifest of a report directory.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReportManifest {
    pub entries: Vec<ManifestEntry>,
    pub meta: serde_json::Value,
}

/// Write named text artifacts plus a `manifest.json` that references every
/// written file exactly once. Overwrites are idempotent: identical inputs
/// produce byte-identical outputs.
pub fn write_report(
    out_dir: &Path,
    files: &[(String, String)],
    meta: serde_json::Value,
) -> Result<ReportManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            file: name.clone(),
            bytes: contents.len() as u64,
        });
    }
    let manifest = ReportManifest {
        entries,
        meta,
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidData(format!("manifest serialization: {e}")))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Mean per-dimension variance of an embedding matrix; the variance-collapse
/// diagnostic for pairwise unlearning.
pub fn mean_dimension_variance(theta: ArrayView2<f64>) -> f64 {
    let n = theta.nrows() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for d in 0..theta.ncols() {
        let col = theta.column(d);
        let mean = col.sum() / n;
        total += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    }
    total / theta.ncols() as f64
}

/// Group submatrices of an embedding, in (group0, group1) order.
pub fn group_embeddings(
    theta: ArrayView2<f64>,
    labels: &AttributeTable,
) -> (Array2<f64>, Array2<f64>) {
    (
        theta.select(Axis(0), labels.group0()),
        theta.select(Axis(0), labels.group1()),
    )
}
