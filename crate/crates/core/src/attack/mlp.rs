//! Single-hidden-layer MLP attacker: K -> hidden (ReLU) -> 2-way softmax,
//! trained full-batch with an adaptive-moment step rule, cross-entropy loss
//! and an L2 penalty on the weights (not biases). Early stopping mirrors the
//! usual plateau rule: training stops once the loss has failed to improve by
//! `tol` for `patience` consecutive iterations.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::rng::rng_from_seed;
use crate::{Error, Result};

use super::Attacker;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub l2_weight: f64,
    pub max_iterations: usize,
    pub learning_rate: f64,
    pub tol: f64,
    pub patience: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(seed: u64) -> Self {
        MlpConfig {
            hidden: 100,
            l2_weight: 1.0,
            max_iterations: 1000,
            learning_rate: 1e-3,
            tol: 1e-4,
            patience: 10,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.max_iterations == 0 || self.patience == 0 {
            return Err(Error::InvalidConfig(
                "mlp hidden/max_iterations/patience must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("mlp learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MlpClassifier {
    pub(crate) w1: Array2<f64>, // K x H
    pub(crate) b1: Array1<f64>,
    pub(crate) w2: Array2<f64>, // H x 2
    pub(crate) b2: Array1<f64>,
    pub(crate) iterations_run: usize,
}

impl MlpClassifier {
    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut hidden = x.dot(&self.w1);
        for mut row in hidden.outer_iter_mut() {
            row += &self.b1;
            row.mapv_inplace(|v| v.max(0.0));
        }
        let mut logits = hidden.dot(&self.w2);
        for mut row in logits.outer_iter_mut() {
            row += &self.b2;
        }
        (hidden, logits)
    }
}

impl Attacker for MlpClassifier {
    fn predict_proba(&self, features: ArrayView2<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.w1.nrows() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} features", self.w1.nrows()),
                got: format!("{}", features.ncols()),
            });
        }
        let (_, logits) = self.forward(features);
        Ok(logits
            .outer_iter()
            .map(|row| softmax_p1(row[0], row[1]))
            .collect())
    }
}

fn softmax_p1(z0: f64, z1: f64) -> f64 {
    let m = z0.max(z1);
    let e0 = (z0 - m).exp();
    let e1 = (z1 - m).exp();
    e1 / (e0 + e1)
}

fn glorot(rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    m
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bias1 = 1.0 - B1.powi(self.t);
        let bias2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            let mhat = self.m[i] / bias1;
            let vhat = self.v[i] / bias2;
            params[i] -= lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}

/// Train the MLP attacker. Requires at least two examples of each class.
pub fn train_mlp_attacker(
    x: ArrayView2<f64>,
    y: &[u8],
    cfg: &MlpConfig,
) -> Result<MlpClassifier> {
    cfg.validate()?;
    check_training_labels(x, y)?;
    let n = x.nrows();
    let k = x.ncols();
    let h = cfg.hidden;

    let mut rng = rng_from_seed(cfg.seed);
    let mut clf = MlpClassifier {
        w1: glorot(k, h, &mut rng),
        b1: Array1::zeros(h),
        w2: glorot(h, 2, &mut rng),
        b2: Array1::zeros(2),
        iterations_run: 0,
    };

    let mut adam_w1 = Adam::new(k * h);
    let mut adam_b1 = Adam::new(h);
    let mut adam_w2 = Adam::new(h * 2);
    let mut adam_b2 = Adam::new(2);

    let inv_n = 1.0 / n as f64;
    let mut best_loss = f64::INFINITY;
    let mut no_improvement = 0usize;

    for iter in 0..cfg.max_iterations {
        let (hidden, logits) = clf.forward(x);
        // Softmax CE loss and logit gradients.
        let mut dlogits = Array2::<f64>::zeros((n, 2));
        let mut loss = 0.0;
        for i in 0..n {
            let z0 = logits[[i, 0]];
            let z1 = logits[[i, 1]];
            let m = z0.max(z1);
            let e0 = (z0 - m).exp();
            let e1 = (z1 - m).exp();
            let sum = e0 + e1;
            let p = [e0 / sum, e1 / sum];
            let yi = y[i] as usize;
            loss -= (p[yi].max(1e-300)).ln();
            dlogits[[i, 0]] = (p[0] - if yi == 0 { 1.0 } else { 0.0 }) * inv_n;
            dlogits[[i, 1]] = (p[1] - if yi == 1 { 1.0 } else { 0.0 }) * inv_n;
        }
        loss *= inv_n;
        // L2 penalty on weights, scaled by 1/(2n) like the reference tools.
        let sq = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>();
        loss += cfg.l2_weight / (2.0 * n as f64) * (sq(&clf.w1) + sq(&clf.w2));
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch: iter,
                msg: "MLP loss became non-finite".into(),
            });
        }

        // Backprop.
        let mut dw2 = hidden.t().dot(&dlogits);
        dw2.scaled_add(cfg.l2_weight * inv_n, &clf.w2);
        let db2 = dlogits.sum_axis(ndarray::Axis(0));
        let mut dhidden = dlogits.dot(&clf.w2.t());
        ndarray::Zip::from(&mut dhidden)
            .and(&hidden)
            .for_each(|d, &hval| {
                if hval <= 0.0 {
                    *d = 0.0;
                }
            });
        let mut dw1 = x.t().dot(&dhidden);
        dw1.scaled_add(cfg.l2_weight * inv_n, &clf.w1);
        let db1 = dhidden.sum_axis(ndarray::Axis(0));

        adam_w1.step(
            clf.w1.as_slice_mut().unwrap(),
            dw1.as_slice().unwrap(),
            cfg.learning_rate,
        );
        adam_b1.step(
            clf.b1.as_slice_mut().unwrap(),
            db1.as_slice().unwrap(),
            cfg.learning_rate,
        );
        adam_w2.step(
            clf.w2.as_slice_mut().unwrap(),
            dw2.as_slice().unwrap(),
            cfg.learning_rate,
        );
        adam_b2.step(
            clf.b2.as_slice_mut().unwrap(),
            db2.as_slice().unwrap(),
            cfg.learning_rate,
        );
        clf.iterations_run = iter + 1;

        // Plateau rule.
        if loss > best_loss - cfg.tol {
            no_improvement += 1;
            if no_improvement >= cfg.patience {
                break;
            }
        } else {
            no_improvement = 0;
        }
        best_loss = best_loss.min(loss);
    }
    Ok(clf)
}

pub(crate) fn check_training_labels(x: ArrayView2<f64>, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", x.nrows()),
            got: format!("{}", y.len()),
        });
    }
    let pos = y.iter().filter(|l| **l == 1).count();
    let neg = y.len() - pos;
    if pos < 2 || neg < 2 {
        return Err(Error::InvalidData(format!(
            "attacker training needs >= 2 examples per class (got {neg}/{pos})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn two_clusters(n_per: usize, gap: f64, std: f64, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = rng_from_seed(seed);
        let n = 2 * n_per;
        let mut x = Array2::zeros((n, 2));
        let mut y = vec![0u8; n];
        for i in 0..n {
            let c = (i >= n_per) as usize;
            y[i] = c as u8;
            let mean = if c == 0 { -gap / 2.0 } else { gap / 2.0 };
            for d in 0..2 {
                x[[i, d]] = mean + std * (rng.gen_range(0.0..1.0f64) - 0.5);
            }
        }
        (x, y)
    }

    #[test]
    fn separable_clusters_reach_perfect_training_accuracy() {
        let (x, y) = two_clusters(20, 2.0, 0.01, 3);
        let clf = train_mlp_attacker(x.view(), &y, &MlpConfig::new(1)).unwrap();
        let probs = clf.predict_proba(x.view()).unwrap();
        let correct = probs
            .iter()
            .zip(&y)
            .filter(|(p, l)| (**p >= 0.5) == (**l == 1))
            .count();
        assert_eq!(correct, y.len());
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = two_clusters(10, 1.0, 0.5, 9);
        let cfg = MlpConfig::new(4);
        let a = train_mlp_attacker(x.view(), &y, &cfg).unwrap();
        let b = train_mlp_attacker(x.view(), &y, &cfg).unwrap();
        assert_eq!(a.w1, b.w1);
        assert_eq!(a.w2, b.w2);
        assert_eq!(a.iterations_run, b.iterations_run);
    }

    #[test]
    fn zero_weights_predict_half_everywhere() {
        let clf = MlpClassifier {
            w1: Array2::zeros((3, 4)),
            b1: Array1::zeros(4),
            w2: Array2::zeros((4, 2)),
            b2: Array1::zeros(2),
            iterations_run: 0,
        };
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64);
        let probs = clf.predict_proba(x.view()).unwrap();
        assert!(probs.iter().all(|p| (*p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn feature_width_mismatch_errors() {
        let (x, y) = two_clusters(5, 1.0, 0.1, 2);
        let clf = train_mlp_attacker(x.view(), &y, &MlpConfig::new(1)).unwrap();
        let wrong = Array2::zeros((2, 7));
        assert!(clf.predict_proba(wrong.view()).is_err());
    }

    #[test]
    fn single_class_training_errors() {
        let x = Array2::zeros((4, 2));
        assert!(train_mlp_attacker(x.view(), &[0, 0, 0, 0], &MlpConfig::new(1)).is_err());
    }
}
