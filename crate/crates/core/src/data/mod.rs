//! Dataset loading: MovieLens-format parsing, k-core filtering, id remapping
//! and reproducible per-user train/validation/test splits.
//!
//! Ratings are treated as implicit feedback downstream (every interaction is
//! a positive); the raw rating value is carried through for completeness.

mod filter;
mod io;
mod parse;
mod split;

pub use filter::{filter_min_interactions, filter_min_interactions_with, FilterMode};
pub use parse::{parse_attributes, parse_ratings, GenericFormat, RatingsFormat, UsersFormat};
pub use split::{build_attribute_table, split_dataset};

use std::collections::HashMap;

use crate::{Error, Result};

/// One rating line as read from disk, ids still in their external form.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user_ext: String,
    pub item_ext: String,
    pub rating: f64,
    pub timestamp: i64,
}

/// Which split an interaction belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// An interaction after id remapping: `user < n_users`, `item < n_items`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

/// Per-user split fractions; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const DEFAULT: SplitRatios = SplitRatios {
        train: 0.8,
        val: 0.1,
        test: 0.1,
    };

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "split ratios must be non-negative, got {self:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        if self.train <= 0.0 {
            return Err(Error::InvalidConfig(
                "train ratio must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// A filtered, remapped and split interaction dataset.
///
/// Invariants, enforced at construction and on load:
/// * user indices are dense in `[0, n_users)`, item indices in `[0, n_items)`;
/// * every user has at least one train interaction;
/// * the three splits partition the interaction list.
#[derive(Debug, Clone)]
pub struct InteractionDataset {
    n_users: usize,
    n_items: usize,
    interactions: Vec<Interaction>,
    splits: Vec<Split>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    seed: u64,
    ratios: SplitRatios,
    // Cached per-user adjacency, derived from `interactions`/`splits`.
    train_items: Vec<Vec<usize>>,
    val_items: Vec<Vec<usize>>,
    test_items: Vec<Vec<usize>>,
}

impl InteractionDataset {
    pub(crate) fn from_parts(
        n_users: usize,
        n_items: usize,
        interactions: Vec<Interaction>,
        splits: Vec<Split>,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        seed: u64,
        ratios: SplitRatios,
    ) -> Result<Self> {
        if interactions.len() != splits.len() {
            return Err(Error::InvalidData(format!(
                "interaction/split length mismatch: {} vs {}",
                interactions.len(),
                splits.len()
            )));
        }
        if user_ids.len() != n_users || item_ids.len() != n_items {
            return Err(Error::InvalidData(
                "id map length does not match user/item counts".to_string(),
            ));
        }
        let mut train_items = vec![Vec::new(); n_users];
        let mut val_items = vec![Vec::new(); n_users];
        let mut test_items = vec![Vec::new(); n_users];
        for (inter, split) in interactions.iter().zip(&splits) {
            if inter.user >= n_users || inter.item >= n_items {
                return Err(Error::InvalidData(format!(
                    "interaction ({}, {}) out of bounds for {}x{}",
                    inter.user, inter.item, n_users, n_items
                )));
            }
            let bucket = match split {
                Split::Train => &mut train_items,
                Split::Val => &mut val_items,
                Split::Test => &mut test_items,
            };
            bucket[inter.user].push(inter.item);
        }
        for (u, items) in train_items.iter().enumerate() {
            if items.is_empty() {
                return Err(Error::InvalidData(format!(
                    "user {u} has no train interactions"
                )));
            }
        }
        Ok(Self {
            n_users,
            n_items,
            interactions,
            splits,
            user_ids,
            item_ids,
            seed,
            ratios,
            train_items,
            val_items,
            test_items,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_interactions(&self) -> usize {
        self.interactions.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ratios(&self) -> SplitRatios {
        self.ratios
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn split_of(&self, index: usize) -> Split {
        self.splits[index]
    }

    /// Iterator over `(user, item)` train pairs in stored order.
    pub fn train_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.interactions
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == Split::Train)
            .map(|(i, _)| (i.user, i.item))
    }

    pub fn n_train(&self) -> usize {
        self.splits.iter().filter(|s| **s == Split::Train).count()
    }

    pub fn train_items(&self, user: usize) -> &[usize] {
        &self.train_items[user]
    }

    pub fn val_items(&self, user: usize) -> &[usize] {
        &self.val_items[user]
    }

    pub fn test_items(&self, user: usize) -> &[usize] {
        &self.test_items[user]
    }

    pub fn user_external(&self, user: usize) -> &str {
        &self.user_ids[user]
    }

    pub fn item_external(&self, item: usize) -> &str {
        &self.item_ids[item]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn user_index(&self) -> HashMap<&str, usize> {
        self.user_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect()
    }

    /// Number of train interactions per item; items that only appear in
    /// val/test have count zero.
    pub fn item_train_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_items];
        for (_, item) in self.train_pairs() {
            counts[item] += 1;
        }
        counts
    }
}

/// Binary attribute labels over the dataset's internal user indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeTable {
    labels: Vec<u8>,
    group0: Vec<usize>,
    group1: Vec<usize>,
}

impl AttributeTable {
    /// Build from per-user labels (index = internal user id, values 0/1).
    ///
    /// Single-group tables are allowed here; operations that require both
    /// groups (unlearning, attacks) reject them at their own boundary.
    pub fn from_labels(labels: Vec<u8>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|l| **l > 1) {
            return Err(Error::InvalidData(format!(
                "attribute labels must be 0 or 1, got {bad}"
            )));
        }
        let group0 = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == 0)
            .map(|(i, _)| i)
            .collect();
        let group1 = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == 1)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            labels,
            group0,
            group1,
        })
    }

    pub fn n_users(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, user: usize) -> u8 {
        self.labels[user]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// User indices with label 0.
    pub fn group0(&self) -> &[usize] {
        &self.group0
    }

    /// User indices with label 1.
    pub fn group1(&self) -> &[usize] {
        &self.group1
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        (self.group0.len(), self.group1.len())
    }

    /// Error unless both label groups are non-empty.
    pub fn require_both_groups(&self) -> Result<()> {
        if self.group0.is_empty() || self.group1.is_empty() {
            return Err(Error::InvalidData(format!(
                "both attribute groups must be non-empty (sizes {} and {})",
                self.group0.len(),
                self.group1.len()
            )));
        }
        Ok(())
    }
}
