//! Grey-box attribute-inference attacks.
//!
//! The attacker sees a fraction of user embeddings with their labels (the
//! shadow set), trains a classifier, and predicts the attribute for the
//! remaining users. Two attackers are provided: a small MLP and gradient
//! boosted trees. Attack quality is the unlearning metric: lower is better
//! for the defender.

mod gbt;
mod mlp;

pub use gbt::{train_gbt_attacker, GbtClassifier, GbtConfig};
pub use mlp::{train_mlp_attacker, MlpClassifier, MlpConfig};

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::data::AttributeTable;
use crate::rng::rng_from_seed;
use crate::{derive_seed, Error, Result};

/// Exposed/held-out user partition for one attack run.
#[derive(Debug, Clone)]
pub struct ShadowSplit {
    pub exposed: Vec<usize>,
    pub held_out: Vec<usize>,
    pub seed: u64,
}

/// Sample `fraction` of users (without replacement) as the attacker's shadow
/// set, resampling a bounded number of times until both label groups appear
/// in it. Deterministic per seed.
pub fn shadow_split(
    n_users: usize,
    labels: &AttributeTable,
    fraction: f64,
    seed: u64,
) -> Result<ShadowSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "shadow fraction must be in (0, 1), got {fraction}"
        )));
    }
    if labels.n_users() != n_users {
        return Err(Error::ShapeMismatch {
            expected: format!("{n_users} labels"),
            got: format!("{}", labels.n_users()),
        });
    }
    labels.require_both_groups()?;
    let exposed_count = (fraction * n_users as f64).round() as usize;
    if exposed_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "shadow set of {exposed_count} users cannot contain both groups; need n_users * fraction >= 2"
        )));
    }

    let mut rng = rng_from_seed(seed);
    let mut indices: Vec<usize> = (0..n_users).collect();
    for _ in 0..1000 {
        indices.shuffle(&mut rng);
        let exposed = &indices[..exposed_count];
        let has0 = exposed.iter().any(|&u| labels.label(u) == 0);
        let has1 = exposed.iter().any(|&u| labels.label(u) == 1);
        if has0 && has1 {
            let mut exposed: Vec<usize> = exposed.to_vec();
            let mut held_out: Vec<usize> = indices[exposed_count..].to_vec();
            exposed.sort_unstable();
            held_out.sort_unstable();
            return Ok(ShadowSplit {
                exposed,
                held_out,
                seed,
            });
        }
    }
    Err(Error::InvalidData(format!(
        "could not draw a shadow set containing both groups (sizes {:?})",
        labels.group_sizes()
    )))
}

/// A trained attack classifier: probability of label 1 per row.
pub trait Attacker {
    fn predict_proba(&self, features: ArrayView2<f64>) -> Result<Vec<f64>>;
}

/// Classification metrics of one attacker on the held-out users.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AttackReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
}

/// Threshold metrics plus rank-statistic AUC, positive class = label 1.
///
/// Precision is 0 when nothing is predicted positive. Errors unless both
/// classes appear in `labels`.
pub fn evaluate_attack(scores: &[f64], labels: &[u8], threshold: f64) -> Result<AttackReport> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", scores.len()),
            got: format!("{}", labels.len()),
        });
    }
    let n_pos = labels.iter().filter(|l| **l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidData(
            "held-out set must contain both classes".to_string(),
        ));
    }
    let mut tp = 0usize;
    let mut tn = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = s >= threshold;
        match (pred, y) {
            (true, 1) => tp += 1,
            (true, _) => fp += 1,
            (false, 1) => fn_ += 1,
            (false, _) => tn += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / labels.len() as f64;
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok(AttackReport {
        accuracy,
        precision,
        recall,
        auc: auc_rank(scores, labels),
    })
}

/// AUC via the Mann-Whitney rank statistic; tied scores contribute half.
pub fn auc_rank(scores: &[f64], labels: &[u8]) -> f64 {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks over tie groups (ranks are 1-based).
    let mut ranks = vec![0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg_rank;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|l| **l == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let pos_rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == 1)
        .map(|(r, _)| r)
        .sum();
    (pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64)
}

/// Both attackers' hyper-parameters; constructed from one base seed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AttackerConfig {
    pub mlp: MlpConfig,
    pub gbt: GbtConfig,
}

impl AttackerConfig {
    pub fn new(seed: u64) -> Self {
        AttackerConfig {
            mlp: MlpConfig::new(derive_seed(seed, 0x31)),
            gbt: GbtConfig::default(),
        }
    }
}

/// Reports for both attackers on one embedding.
#[derive(Debug, Clone, Copy)]
pub struct AttackOutcome {
    pub mlp: AttackReport,
    pub gbt: AttackReport,
}

/// Full attack round: train MLP and GBT on the exposed rows, score the
/// held-out rows, evaluate both.
pub fn run_attack(
    theta: ArrayView2<f64>,
    labels: &AttributeTable,
    split: &ShadowSplit,
    cfg: &AttackerConfig,
) -> Result<AttackOutcome> {
    let exposed_x = theta.select(Axis(0), &split.exposed);
    let exposed_y: Vec<u8> = split.exposed.iter().map(|&u| labels.label(u)).collect();
    let held_x = theta.select(Axis(0), &split.held_out);
    let held_y: Vec<u8> = split.held_out.iter().map(|&u| labels.label(u)).collect();

    let mlp = train_mlp_attacker(exposed_x.view(), &exposed_y, &cfg.mlp)?;
    let gbt = train_gbt_attacker(exposed_x.view(), &exposed_y, &cfg.gbt)?;
    let mlp_scores = mlp.predict_proba(held_x.view())?;
    let gbt_scores = gbt.predict_proba(held_x.view())?;
    Ok(AttackOutcome {
        mlp: evaluate_attack(&mlp_scores, &held_y, 0.5)?,
        gbt: evaluate_attack(&gbt_scores, &held_y, 0.5)?,
    })
}
