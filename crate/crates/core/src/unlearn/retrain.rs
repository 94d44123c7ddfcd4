//! In-training baseline: retrain the recommender from scratch with the
//! distributional (MMD) penalty added to the recommendation loss.

use ndarray::Array2;

use crate::data::{AttributeTable, InteractionDataset};
use crate::recsys::{EmbeddingModel, ModelKind, TrainConfig};
use crate::Result;

use super::mmd::{mmd_eval, Bandwidth};

/// Train a model from scratch with `loss = recommendation loss +
/// lambda * MMD^2(group embeddings)`.
///
/// The penalty is applied full-batch once per epoch: after the epoch's SGD
/// pass, the current user embeddings take one gradient step on the MMD term
/// at the training learning rate. With `lambda = 0` the run is bit-identical
/// to plain training under the same seed. For LightGCN the penalty gradient
/// is computed on the propagated user embeddings and pulled back through the
/// propagation before updating layer-0 parameters.
pub fn retrain_with_d2d(
    dataset: &InteractionDataset,
    labels: &AttributeTable,
    cfg: &TrainConfig,
    kind: ModelKind,
    lambda: f64,
    bandwidth: Bandwidth,
) -> Result<EmbeddingModel> {
    if lambda != 0.0 {
        labels.require_both_groups()?;
    }
    let lr = cfg.learning_rate;
    // Penalty failures (degenerate bandwidth and the like) abort training;
    // the hook records them here because the trainer hook cannot early
    // return.
    let mut hook_error: Option<crate::Error> = None;

    let model = match kind {
        ModelKind::Mf => crate::recsys::mf::train_mf_with_hook(dataset, cfg, |_, user_emb, _| {
            if lambda == 0.0 || hook_error.is_some() {
                return;
            }
            match mmd_user_grad(user_emb, labels, bandwidth) {
                Ok(grad) => user_emb.scaled_add(-lr * lambda, &grad),
                Err(e) => hook_error = Some(e),
            }
        }),
        ModelKind::LightGcn => crate::recsys::lightgcn::train_lightgcn_with_hook(
            dataset,
            cfg,
            |_, adj, base_user, base_item| {
                if lambda == 0.0 || hook_error.is_some() {
                    return;
                }
                let (user_final, _) =
                    crate::recsys::lightgcn::propagate(adj, base_user, base_item, cfg.layers);
                match mmd_user_grad(&user_final, labels, bandwidth) {
                    Ok(grad) => {
                        let zero_item = Array2::zeros(base_item.raw_dim());
                        let (back_user, back_item) =
                            crate::recsys::lightgcn::propagate(adj, &grad, &zero_item, cfg.layers);
                        base_user.scaled_add(-lr * lambda, &back_user);
                        base_item.scaled_add(-lr * lambda, &back_item);
                    }
                    Err(e) => hook_error = Some(e),
                }
            },
        ),
    }?;
    match hook_error {
        Some(e) => Err(e),
        None => Ok(model),
    }
}

/// MMD gradient scattered back onto full user-embedding rows.
fn mmd_user_grad(
    user_emb: &Array2<f64>,
    labels: &AttributeTable,
    bandwidth: Bandwidth,
) -> Result<Array2<f64>> {
    let x = user_emb.select(ndarray::Axis(0), labels.group0());
    let y = user_emb.select(ndarray::Axis(0), labels.group1());
    let eval = mmd_eval(x.view(), y.view(), bandwidth)?;
    let mut grad = Array2::zeros(user_emb.raw_dim());
    for (slot, &row) in labels.group0().iter().enumerate() {
        grad.row_mut(row).assign(&eval.grad_x.row(slot));
    }
    for (slot, &row) in labels.group1().iter().enumerate() {
        grad.row_mut(row).assign(&eval.grad_y.row(slot));
    }
    Ok(grad)
}
