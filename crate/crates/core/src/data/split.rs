//! Id remapping and per-user train/val/test splitting.

use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::rng::rng_from_seed;
use crate::{derive_seed, Error, Result};

use super::{AttributeTable, Interaction, InteractionDataset, RawInteraction, Split, SplitRatios};

/// Per-user counts for a split; see [`split_counts`] for the rounding rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Rounding rule for a user with `c` interactions:
///
/// 1. train gets `ceil(r_train * c)`, clamped so that when a test fraction is
///    configured at least one interaction is left over;
/// 2. val gets `floor(r_val * c)`, clamped to what remains (minus the test
///    reservation);
/// 3. test gets the remainder.
///
/// Guarantees at least one train interaction per user, and at least one test
/// interaction whenever `r_test > 0`. Errors if the user is too small to
/// satisfy that (fewer than 2 interactions with a test fraction configured).
pub(crate) fn split_counts(c: usize, ratios: SplitRatios) -> Option<SplitCounts> {
    let mut train = (ratios.train * c as f64).ceil() as usize;
    train = train.clamp(1, c);
    if ratios.test > 0.0 && train == c {
        if c < 2 {
            return None;
        }
        train = c - 1;
    }
    let mut val = (ratios.val * c as f64).floor() as usize;
    val = val.min(c - train);
    if ratios.test > 0.0 {
        val = val.min(c - train - 1);
    }
    let test = c - train - val;
    Some(SplitCounts { train, val, test })
}

/// Remap external ids to dense indices (first-appearance order) and split
/// each user's interactions at the given ratios.
///
/// The split is per user: indices of a user's interactions are shuffled with
/// an RNG derived from `(seed, user index)` and assigned train, then val,
/// then test slots according to [`split_counts`]. Deterministic for a fixed
/// `(input, seed)`.
pub fn split_dataset(
    interactions: &[RawInteraction],
    ratios: SplitRatios,
    seed: u64,
) -> Result<InteractionDataset> {
    ratios.validate()?;
    if interactions.is_empty() {
        return Err(Error::InvalidData("no interactions to split".to_string()));
    }

    let mut user_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut remapped: Vec<Interaction> = Vec::with_capacity(interactions.len());
    for raw in interactions {
        let user = *user_index.entry(&raw.user_ext).or_insert_with(|| {
            user_ids.push(raw.user_ext.clone());
            user_ids.len() - 1
        });
        let item = *item_index.entry(&raw.item_ext).or_insert_with(|| {
            item_ids.push(raw.item_ext.clone());
            item_ids.len() - 1
        });
        remapped.push(Interaction {
            user,
            item,
            rating: raw.rating,
        });
    }
    let n_users = user_ids.len();
    let n_items = item_ids.len();

    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for (idx, inter) in remapped.iter().enumerate() {
        per_user[inter.user].push(idx);
    }

    let mut splits = vec![Split::Train; remapped.len()];
    for (user, indices) in per_user.iter_mut().enumerate() {
        let c = indices.len();
        let counts = split_counts(c, ratios).ok_or_else(|| {
            Error::InvalidData(format!(
                "user {:?} has too few interactions ({c}) to populate a train split",
                user_ids[user]
            ))
        })?;
        let mut rng = rng_from_seed(derive_seed(seed, user as u64));
        indices.shuffle(&mut rng);
        for (pos, &inter_idx) in indices.iter().enumerate() {
            splits[inter_idx] = if pos < counts.train {
                Split::Train
            } else if pos < counts.train + counts.val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }

    InteractionDataset::from_parts(
        n_users, n_items, remapped, splits, user_ids, item_ids, seed, ratios,
    )
}

/// Attach external labels to a dataset: internal-index-keyed table with group
/// lists. Labels for users that were filtered out are dropped silently; a
/// retained user without a label is an error.
pub fn build_attribute_table(
    dataset: &InteractionDataset,
    raw_labels: &HashMap<String, u8>,
) -> Result<AttributeTable> {
    let mut labels = Vec::with_capacity(dataset.n_users());
    for user in 0..dataset.n_users() {
        let ext = dataset.user_external(user);
        match raw_labels.get(ext) {
            Some(l) => labels.push(*l),
            None => {
                return Err(Error::InvalidData(format!(
                    "missing attribute label for user {ext:?}"
                )))
            }
        }
    }
    AttributeTable::from_labels(labels)
}
