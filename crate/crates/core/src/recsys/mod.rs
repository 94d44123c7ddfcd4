//! Collaborative-filtering models over implicit feedback.
//!
//! Two model families share one scoring contract: a user embedding matrix
//! (N x K) and an item embedding matrix (M x K), scored by dot product. The
//! user embedding is the object that downstream attack and unlearning code
//! operates on.

mod checkpoint;
mod eval;
pub(crate) mod lightgcn;
pub(crate) mod mf;

pub use eval::{eval_ranking, eval_ranking_on, ranked_list_metrics, top_k_items, EvalSplit, RecReport};
pub use lightgcn::{bpr_terms, train_lightgcn};
pub use mf::train_mf;

use ndarray::Array2;

use crate::{Error, Result};

/// Which architecture produced the embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ModelKind {
    Mf,
    LightGcn,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Mf => "mf",
            ModelKind::LightGcn => "lightgcn",
        }
    }
}

/// Training hyper-parameters shared by both models.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    /// Embedding size K.
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Positives per SGD batch (LightGCN; MF updates per sample).
    pub batch_size: usize,
    /// Sampled negatives per positive.
    pub negatives: usize,
    /// Std-dev of the Gaussian parameter init.
    pub init_std: f64,
    /// Propagation depth L (LightGCN; 0 disables propagation).
    pub layers: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Matrix-factorization defaults: K=16, lr=0.001, 50 epochs, 4 negatives.
    pub fn mf(seed: u64) -> Self {
        TrainConfig {
            embedding_dim: 16,
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 1024,
            negatives: 4,
            init_std: 0.01,
            layers: 0,
            seed,
        }
    }

    /// LightGCN defaults: K=16, lr=0.001, 400 epochs, 3 layers, 1 negative.
    pub fn lightgcn(seed: u64) -> Self {
        TrainConfig {
            embedding_dim: 16,
            learning_rate: 0.001,
            epochs: 400,
            batch_size: 1024,
            negatives: 1,
            init_std: 0.01,
            layers: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::InvalidConfig("embedding_dim must be > 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::InvalidConfig("init_std must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be > 0".into()));
        }
        if self.negatives == 0 {
            return Err(Error::InvalidConfig("negatives must be > 0".into()));
        }
        Ok(())
    }
}

/// LightGCN state needed to recompute final embeddings: layer-0 parameters
/// plus the degree-normalized bipartite adjacency.
#[derive(Debug, Clone)]
pub struct LightGcnState {
    pub base_user: Array2<f64>,
    pub base_item: Array2<f64>,
    pub(crate) graph: lightgcn::NormalizedAdjacency,
}

impl LightGcnState {
    /// Layer-averaged final embeddings recomputed from the layer-0
    /// parameters.
    pub fn final_embeddings(&self, layers: usize) -> (Array2<f64>, Array2<f64>) {
        lightgcn::propagate(&self.graph, &self.base_user, &self.base_item, layers)
    }
}

/// A trained embedding model.
///
/// `user_emb`/`item_emb` are the matrices used for scoring. For MF they are
/// the trained parameters; for LightGCN they are the layer-averaged final
/// embeddings derived from the layer-0 state.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    kind: ModelKind,
    user_emb: Array2<f64>,
    item_emb: Array2<f64>,
    layers: usize,
    config: TrainConfig,
    trained_epochs: usize,
    state: Option<LightGcnState>,
}

impl EmbeddingModel {
    pub(crate) fn new(
        kind: ModelKind,
        user_emb: Array2<f64>,
        item_emb: Array2<f64>,
        layers: usize,
        config: TrainConfig,
        trained_epochs: usize,
        state: Option<LightGcnState>,
    ) -> Self {
        EmbeddingModel {
            kind,
            user_emb,
            item_emb,
            layers,
            config,
            trained_epochs,
            state,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_users(&self) -> usize {
        self.user_emb.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.item_emb.nrows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.user_emb.ncols()
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn trained_epochs(&self) -> usize {
        self.trained_epochs
    }

    pub fn lightgcn_state(&self) -> Option<&LightGcnState> {
        self.state.as_ref()
    }

    /// The attack/unlearning target: final user embeddings, N x K.
    pub fn user_embedding(&self) -> &Array2<f64> {
        &self.user_emb
    }

    pub fn item_embedding(&self) -> &Array2<f64> {
        &self.item_emb
    }

    /// Replace the user-embedding matrix, keeping item embeddings untouched.
    /// Scoring thereafter uses the new matrix. Shape and finiteness checked.
    pub fn replace_user_embedding(&self, user_emb: Array2<f64>) -> Result<EmbeddingModel> {
        if user_emb.dim() != self.user_emb.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.user_emb.dim()),
                got: format!("{:?}", user_emb.dim()),
            });
        }
        if !user_emb.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidData(
                "replacement user embedding has non-finite entries".into(),
            ));
        }
        let mut out = self.clone();
        out.user_emb = user_emb;
        // Layer-0 state no longer reproduces the replaced matrix; drop it.
        out.state = None;
        Ok(out)
    }

    /// Scores of every item for one user.
    pub fn scores_for(&self, user: usize) -> Vec<f64> {
        let u = self.user_emb.row(user);
        self.item_emb.outer_iter().map(|v| u.dot(&v)).collect()
    }

    /// Top-k items for a user by dot-product score over the full catalog
    /// minus `exclude`. Ties break toward the lower item index; asking for
    /// more items than remain returns a truncated list.
    pub fn recommend_topk(&self, user: usize, k: usize, exclude: &[usize]) -> Vec<usize> {
        let scores = self.scores_for(user);
        let mut excluded = vec![false; self.n_items()];
        for &item in exclude {
            if item < excluded.len() {
                excluded[item] = true;
            }
        }
        top_k_items(&scores, &excluded, k)
    }
}
