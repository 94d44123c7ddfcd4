//! Top-k ranking evaluation: NDCG and hit ratio at fixed cutoffs.
//!
//! Protocol: full-catalog ranking per user, excluding that user's train
//! items, ties broken by ascending item index. With multiple test items,
//! HR@k is the fraction of them that appear in the top k (recall-style), so
//! it stays in [0, 1] and is monotone in k.

use std::collections::BTreeMap;
use std::collections::HashSet;

use crate::data::InteractionDataset;

use super::EmbeddingModel;

/// Which held-out split to evaluate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Val,
    Test,
}

/// Mean ranking metrics over evaluated users, keyed by cutoff.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RecReport {
    pub ndcg: BTreeMap<usize, f64>,
    pub hr: BTreeMap<usize, f64>,
    /// Users with at least one held-out item, i.e. the averaging denominator.
    pub evaluated_users: usize,
}

impl RecReport {
    pub fn ndcg_at(&self, k: usize) -> f64 {
        self.ndcg[&k]
    }

    pub fn hr_at(&self, k: usize) -> f64 {
        self.hr[&k]
    }
}

/// Indices of the top-k scores with excluded entries skipped; ties broken by
/// ascending index. Returns fewer than `k` items when the candidate set is
/// smaller.
pub fn top_k_items(scores: &[f64], excluded: &[bool], k: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|i| !excluded[*i]).collect();
    candidates.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| a.cmp(&b))
    });
    candidates.truncate(k);
    candidates
}

/// Binary-gain metrics of one ranked list against a held-out set: returns
/// `(NDCG@k, HR@k)` with log2 position discounts and recall-style HR.
pub fn ranked_list_metrics(ranked: &[usize], held_out: &HashSet<usize>, k: usize) -> (f64, f64) {
    let hits: Vec<usize> = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| held_out.contains(item))
        .map(|(pos, _)| pos)
        .collect();
    let hr = hits.len() as f64 / held_out.len() as f64;
    let dcg: f64 = hits
        .iter()
        .map(|pos| 1.0 / ((pos + 2) as f64).log2())
        .sum();
    let ideal_hits = held_out.len().min(k);
    let idcg: f64 = (0..ideal_hits).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    let ndcg = if idcg > 0.0 { dcg / idcg } else { 0.0 };
    (ndcg, hr)
}

/// Evaluate NDCG@k / HR@k on the test split, excluding train items.
pub fn eval_ranking(
    model: &EmbeddingModel,
    dataset: &InteractionDataset,
    cutoffs: &[usize],
) -> RecReport {
    eval_ranking_on(model, dataset, EvalSplit::Test, cutoffs, true)
}

/// Evaluation with an explicit split and exclusion choice. Users without
/// held-out items in the chosen split are skipped.
pub fn eval_ranking_on(
    model: &EmbeddingModel,
    dataset: &InteractionDataset,
    split: EvalSplit,
    cutoffs: &[usize],
    exclude_train: bool,
) -> RecReport {
    let max_k = cutoffs.iter().copied().max().unwrap_or(0);
    let mut ndcg_sums: BTreeMap<usize, f64> = cutoffs.iter().map(|k| (*k, 0.0)).collect();
    let mut hr_sums: BTreeMap<usize, f64> = cutoffs.iter().map(|k| (*k, 0.0)).collect();
    let mut evaluated = 0usize;

    for user in 0..dataset.n_users() {
        let held: &[usize] = match split {
            EvalSplit::Val => dataset.val_items(user),
            EvalSplit::Test => dataset.test_items(user),
        };
        if held.is_empty() {
            continue;
        }
        evaluated += 1;
        let held: HashSet<usize> = held.iter().copied().collect();
        let scores = model.scores_for(user);
        let mut excluded = vec![false; dataset.n_items()];
        if exclude_train {
            for &item in dataset.train_items(user) {
                excluded[item] = true;
            }
        }
        let ranked = top_k_items(&scores, &excluded, max_k);
        for &k in cutoffs {
            let (ndcg, hr) = ranked_list_metrics(&ranked, &held, k);
            *ndcg_sums.get_mut(&k).unwrap() += ndcg;
            *hr_sums.get_mut(&k).unwrap() += hr;
        }
    }

    let denom = evaluated.max(1) as f64;
    RecReport {
        ndcg: ndcg_sums.into_iter().map(|(k, s)| (k, s / denom)).collect(),
        hr: hr_sums.into_iter().map(|(k, s)| (k, s / denom)).collect(),
        evaluated_users: evaluated,
    }
}
