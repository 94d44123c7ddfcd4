//! Post-training attribute unlearning.
//!
//! The optimization target is the user-embedding matrix alone. The objective
//! is a two-component loss `L(theta) = l_u + alpha * l_r`: a
//! distinguishability term `l_u` (pairwise or distributional) pushing the two
//! attribute groups together, and a Frobenius anchor
//! `l_r = ||theta - theta*||_F^2` holding the embedding near its trained
//! state so recommendation behavior survives.

mod mmd;
mod retrain;
mod u2u;

pub use mmd::{median_heuristic, mmd_eval, mmd_grad, mmd_rbf, Bandwidth, MmdEval};
pub use retrain::retrain_with_d2d;
pub use u2u::{u2u_grad, u2u_loss, u2u_loss_bruteforce};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use crate::data::AttributeTable;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Which distinguishability loss drives the optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LossKind {
    /// Pairwise user-to-user loss with the Frobenius anchor.
    U2uReg,
    /// Distributional (MMD) loss with the Frobenius anchor.
    D2dReg,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::U2uReg => "u2u-r",
            LossKind::D2dReg => "d2d-r",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u2u-r" | "u2u" => Ok(LossKind::U2uReg),
            "d2d-r" | "d2d" => Ok(LossKind::D2dReg),
            other => Err(Error::InvalidConfig(format!(
                "unknown unlearning loss {other:?} (expected u2u-r or d2d-r)"
            ))),
        }
    }
}

/// Settings for one unlearning run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnlearnConfig {
    pub loss_kind: LossKind,
    /// Trade-off weight on the Frobenius anchor.
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub mmd_bandwidth: Bandwidth,
    /// Optional row mini-batching: each step samples this many users and
    /// optimizes the loss restricted to them. `None` (the default) runs
    /// full-batch gradient descent.
    pub batch_rows: Option<usize>,
    pub seed: u64,
}

impl UnlearnConfig {
    /// U2U-R defaults: alpha 1e-4, lr 0.001, 5000 epochs.
    pub fn u2u(seed: u64) -> Self {
        UnlearnConfig {
            loss_kind: LossKind::U2uReg,
            alpha: 1e-4,
            learning_rate: 0.001,
            epochs: 5000,
            mmd_bandwidth: Bandwidth::Median,
            batch_rows: None,
            seed,
        }
    }

    /// D2D-R defaults: alpha 1e-4, lr 0.001, 1000 epochs, median bandwidth.
    pub fn d2d(seed: u64) -> Self {
        UnlearnConfig {
            loss_kind: LossKind::D2dReg,
            alpha: 1e-4,
            learning_rate: 0.001,
            epochs: 1000,
            mmd_bandwidth: Bandwidth::Median,
            batch_rows: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig("alpha must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if let Some(b) = self.batch_rows {
            if b < 2 {
                return Err(Error::InvalidConfig("batch_rows must be >= 2".into()));
            }
        }
        Ok(())
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub lu: f64,
    pub lr: f64,
}

/// Output of [`unlearn`].
#[derive(Debug, Clone)]
pub struct UnlearnResult {
    pub theta: Array2<f64>,
    /// Loss at every epoch boundary: `epochs + 1` entries, the first being
    /// the loss of the untouched embedding.
    pub trace: Vec<LossTerms>,
    pub wall_time: Duration,
    pub config: UnlearnConfig,
}

impl UnlearnResult {
    pub fn final_loss(&self) -> LossTerms {
        *self.trace.last().expect("trace is never empty")
    }

    /// Write the trace as `epoch,total,lu,lr` CSV.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            writeln!(w, "epoch,total,lu,lr")?;
            for (epoch, t) in self.trace.iter().enumerate() {
                writeln!(w, "{},{},{},{}", epoch, t.total, t.lu, t.lr)?;
            }
            Ok(())
        })()
        .map_err(|e| Error::io(path, e))
    }

    /// Write run metadata as `key = value` lines.
    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let cfg = &self.config;
        (|| -> std::io::Result<()> {
            writeln!(w, "loss_kind = {}", cfg.loss_kind.as_str())?;
            writeln!(w, "alpha = {}", cfg.alpha)?;
            writeln!(w, "learning_rate = {}", cfg.learning_rate)?;
            writeln!(w, "epochs = {}", cfg.epochs)?;
            let bw = match cfg.mmd_bandwidth {
                Bandwidth::Median => "median".to_string(),
                Bandwidth::Fixed(s) => s.to_string(),
            };
            writeln!(w, "mmd_bandwidth = {bw}")?;
            match cfg.batch_rows {
                Some(b) => writeln!(w, "batch_rows = {b}")?,
                None => writeln!(w, "batch_rows = full")?,
            }
            writeln!(w, "seed = {}", cfg.seed)?;
            writeln!(w, "wall_time_s = {}", self.wall_time.as_secs_f64())?;
            writeln!(w, "final_total = {}", self.final_loss().total)?;
            Ok(())
        })()
        .map_err(|e| Error::io(path, e))
    }
}

/// Squared Frobenius distance `sum_ij (theta_ij - theta*_ij)^2`.
pub fn frobenius_reg(theta: &Array2<f64>, theta_star: &Array2<f64>) -> Result<f64> {
    if theta.dim() != theta_star.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", theta_star.dim()),
            got: format!("{:?}", theta.dim()),
        });
    }
    Ok(theta
        .iter()
        .zip(theta_star.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

fn distinguishability(
    theta: &Array2<f64>,
    labels: &AttributeTable,
    cfg: &UnlearnConfig,
) -> Result<f64> {
    match cfg.loss_kind {
        LossKind::U2uReg => u2u_loss(theta, labels),
        LossKind::D2dReg => {
            let (x, y) = group_rows(theta, labels);
            Ok(mmd_eval(x.view(), y.view(), cfg.mmd_bandwidth)?.loss)
        }
    }
}

/// Evaluate the two-component loss: `total = lu + alpha * lr`.
pub fn total_loss(
    theta: &Array2<f64>,
    theta_star: &Array2<f64>,
    labels: &AttributeTable,
    cfg: &UnlearnConfig,
) -> Result<LossTerms> {
    cfg.validate()?;
    let lr = frobenius_reg(theta, theta_star)?;
    let lu = distinguishability(theta, labels, cfg)?;
    Ok(LossTerms {
        total: lu + cfg.alpha * lr,
        lu,
        lr,
    })
}

fn group_rows(theta: &Array2<f64>, labels: &AttributeTable) -> (Array2<f64>, Array2<f64>) {
    (
        theta.select(Axis(0), labels.group0()),
        theta.select(Axis(0), labels.group1()),
    )
}

/// Distinguishability loss and its gradient with respect to every row.
///
/// The U2U gradient is scaled by `1/N`. The raw pair-sum U2U objective has a
/// Hessian whose top eigenvalue grows like 4N, so an unscaled step at the
/// default learning rate oscillates divergently once N exceeds a few
/// hundred; the per-user scaling keeps the contraction rate independent of
/// dataset size. Reported loss values stay unscaled.
fn loss_and_grad(
    theta: &Array2<f64>,
    labels: &AttributeTable,
    cfg: &UnlearnConfig,
) -> Result<(f64, Array2<f64>)> {
    match cfg.loss_kind {
        LossKind::U2uReg => {
            let lu = u2u_loss(theta, labels)?;
            let mut grad = u2u_grad(theta, labels)?;
            grad /= theta.nrows() as f64;
            Ok((lu, grad))
        }
        LossKind::D2dReg => {
            let (x, y) = group_rows(theta, labels);
            let eval = mmd_eval(x.view(), y.view(), cfg.mmd_bandwidth)?;
            let mut grad = Array2::zeros(theta.raw_dim());
            for (slot, &row) in labels.group0().iter().enumerate() {
                grad.row_mut(row).assign(&eval.grad_x.row(slot));
            }
            for (slot, &row) in labels.group1().iter().enumerate() {
                grad.row_mut(row).assign(&eval.grad_y.row(slot));
            }
            Ok((eval.loss, grad))
        }
    }
}

/// Gradient-descent unlearning of `theta_star`.
///
/// Starts from the trained embedding and iterates
/// `theta <- theta - lr * (grad l_u + 2 alpha (theta - theta*))` for
/// `cfg.epochs` steps, re-resolving the median MMD bandwidth every epoch.
/// The loss trace records `epochs + 1` entries. Deterministic for a fixed
/// `(theta_star, labels, cfg)`.
pub fn unlearn(
    theta_star: &Array2<f64>,
    labels: &AttributeTable,
    cfg: &UnlearnConfig,
) -> Result<UnlearnResult> {
    cfg.validate()?;
    labels.require_both_groups()?;
    if theta_star.nrows() != labels.n_users() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} embedding rows", labels.n_users()),
            got: format!("{}", theta_star.nrows()),
        });
    }
    if !theta_star.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidData(
            "initial embedding has non-finite entries".into(),
        ));
    }

    let start = Instant::now();
    let mut theta = theta_star.clone();
    let mut prev = theta.clone();
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let mut rng = rng_from_seed(cfg.seed);
    let lr = cfg.learning_rate;

    for epoch in 0..cfg.epochs {
        prev.assign(&theta);
        let terms = match cfg.batch_rows {
            None => {
                let (lu, grad_u) = loss_and_grad(&theta, labels, cfg)?;
                let lr_loss = frobenius_reg(&theta, theta_star)?;
                let terms = LossTerms {
                    total: lu + cfg.alpha * lr_loss,
                    lu,
                    lr: lr_loss,
                };
                if terms.total.is_finite() {
                    // theta - lr*grad_u - 2*lr*alpha*(theta - theta*)
                    ndarray::Zip::from(&mut theta)
                        .and(&grad_u)
                        .and(theta_star)
                        .for_each(|t, &g, &ts| {
                            *t -= lr * (g + 2.0 * cfg.alpha * (*t - ts));
                        });
                }
                terms
            }
            Some(batch) => {
                let terms = total_loss(&theta, theta_star, labels, cfg)?;
                if terms.total.is_finite() {
                    step_row_minibatch(&mut theta, theta_star, labels, cfg, batch, &mut rng)?;
                }
                terms
            }
        };
        if !terms.total.is_finite() || theta.iter().any(|v| !v.is_finite()) {
            // `prev` holds the iterate from before this epoch's update, which
            // is the last state known to be finite when the update overflowed.
            let last = if theta.iter().all(|v| v.is_finite()) {
                theta
            } else {
                prev
            };
            return Err(Error::UnlearnDiverged {
                epoch,
                last_finite: Box::new(last),
            });
        }
        trace.push(terms);
    }
    let final_terms = total_loss(&theta, theta_star, labels, cfg)?;
    if !final_terms.total.is_finite() {
        return Err(Error::UnlearnDiverged {
            epoch: cfg.epochs,
            last_finite: Box::new(theta),
        });
    }
    trace.push(final_terms);

    Ok(UnlearnResult {
        theta,
        trace,
        wall_time: start.elapsed(),
        config: cfg.clone(),
    })
}

/// One mini-batch step: sample `batch` rows (resampling until both groups
/// are represented), evaluate the loss restricted to those rows, update them.
fn step_row_minibatch(
    theta: &mut Array2<f64>,
    theta_star: &Array2<f64>,
    labels: &AttributeTable,
    cfg: &UnlearnConfig,
    batch: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<()> {
    let n = theta.nrows();
    let batch = batch.min(n);
    let mut rows: Vec<usize> = (0..n).collect();
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..100 {
        rows.shuffle(rng);
        let cand = &rows[..batch];
        let has0 = cand.iter().any(|&r| labels.label(r) == 0);
        let has1 = cand.iter().any(|&r| labels.label(r) == 1);
        if has0 && has1 {
            chosen = cand.to_vec();
            break;
        }
    }
    if chosen.is_empty() {
        return Err(Error::InvalidData(
            "could not sample a row batch containing both groups".into(),
        ));
    }
    let sub_theta = theta.select(Axis(0), &chosen);
    let sub_labels =
        AttributeTable::from_labels(chosen.iter().map(|&r| labels.label(r)).collect())?;
    let (_, grad) = loss_and_grad(&sub_theta, &sub_labels, cfg)?;
    let lr = cfg.learning_rate;
    for (slot, &row) in chosen.iter().enumerate() {
        for d in 0..theta.ncols() {
            let anchor = 2.0 * cfg.alpha * (theta[[row, d]] - theta_star[[row, d]]);
            theta[[row, d]] -= lr * (grad[[slot, d]] + anchor);
        }
    }
    Ok(())
}
