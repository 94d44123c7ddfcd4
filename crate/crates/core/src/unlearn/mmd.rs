//! Maximum mean discrepancy with a radial (Gaussian RBF) kernel.
//!
//! Biased V-statistic estimator:
//! `MMD^2 = mean k(X,X) + mean k(Y,Y) - 2 mean k(X,Y)` with
//! `k(a,b) = exp(-||a-b||^2 / (2 sigma^2))`, clamped at zero against
//! rounding. Gradients are the exact partial derivatives of the unclamped
//! estimator, with the bandwidth treated as a constant.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::{Error, Result};

/// Bandwidth selection for the RBF kernel.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Bandwidth {
    /// Median pairwise distance over the pooled sample, recomputed per call.
    Median,
    Fixed(f64),
}

/// Squared-distance block between two row sets, via Gram identities.
fn dist2_block(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Array2<f64> {
    let gram = x.dot(&y.t());
    let xsq: Array1<f64> = x.outer_iter().map(|r| r.dot(&r)).collect();
    let ysq: Array1<f64> = y.outer_iter().map(|r| r.dot(&r)).collect();
    let mut d = gram;
    d.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, v) in row.iter_mut().enumerate() {
                // Guard tiny negatives from cancellation.
                *v = (xsq[i] + ysq[j] - 2.0 * *v).max(0.0);
            }
        });
    d
}

/// Median pairwise Euclidean distance over the pooled rows of `x` and `y`
/// (each unordered pair once, no self-pairs). Errors when the median is zero,
/// which happens when more than half of the pooled points coincide.
pub fn median_heuristic(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    let dxx = dist2_block(x, x);
    let dyy = dist2_block(y, y);
    let dxy = dist2_block(x, y);
    median_from_blocks(&dxx, &dyy, &dxy)
}

fn median_from_blocks(
    dxx: &Array2<f64>,
    dyy: &Array2<f64>,
    dxy: &Array2<f64>,
) -> Result<f64> {
    let mut d2: Vec<f64> = Vec::new();
    for (block, square) in [(dxx, true), (dyy, true), (dxy, false)] {
        if square {
            let n = block.nrows();
            for i in 0..n {
                for j in (i + 1)..n {
                    d2.push(block[[i, j]]);
                }
            }
        } else {
            d2.extend(block.iter().copied());
        }
    }
    if d2.is_empty() {
        return Err(Error::InvalidData(
            "median bandwidth needs at least two pooled points".to_string(),
        ));
    }
    let len = d2.len();
    let upper_mid = {
        let (_, mid, _) = d2.select_nth_unstable_by(len / 2, f64::total_cmp);
        *mid
    };
    let sigma = if len % 2 == 1 {
        upper_mid.sqrt()
    } else {
        // Even count: average the square roots of the two middle values.
        // After select_nth the left partition holds everything <= the upper
        // middle, so its max is the lower middle.
        let lower_mid = d2[..len / 2]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        (lower_mid.sqrt() + upper_mid.sqrt()) / 2.0
    };
    if !(sigma > 0.0) {
        return Err(Error::InvalidData(
            "median pairwise distance is zero (points coincide); use a fixed bandwidth"
                .to_string(),
        ));
    }
    Ok(sigma)
}

/// One fused evaluation: bandwidth resolution, loss, and both gradients.
#[derive(Debug, Clone)]
pub struct MmdEval {
    pub sigma: f64,
    pub loss: f64,
    pub grad_x: Array2<f64>,
    pub grad_y: Array2<f64>,
}

fn check_groups(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<()> {
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::InvalidData(
            "MMD requires at least one point per group".to_string(),
        ));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} columns", x.ncols()),
            got: format!("{} columns", y.ncols()),
        });
    }
    Ok(())
}

/// Evaluate MMD^2 and its gradients in one pass over the kernel blocks.
pub fn mmd_eval(x: ArrayView2<f64>, y: ArrayView2<f64>, bandwidth: Bandwidth) -> Result<MmdEval> {
    check_groups(x, y)?;
    let mut kxx = dist2_block(x, x);
    let mut kyy = dist2_block(y, y);
    let mut kxy = dist2_block(x, y);
    let sigma = match bandwidth {
        Bandwidth::Median => median_from_blocks(&kxx, &kyy, &kxy)?,
        Bandwidth::Fixed(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "fixed MMD bandwidth must be positive and finite, got {s}"
                )));
            }
            s
        }
    };
    let inv = -0.5 / (sigma * sigma);
    for block in [&mut kxx, &mut kyy, &mut kxy] {
        block.par_mapv_inplace(|d2| (d2 * inv).exp());
    }

    let n1 = x.nrows() as f64;
    let n2 = y.nrows() as f64;
    let mean_xx = kxx.sum() / (n1 * n1);
    let mean_yy = kyy.sum() / (n2 * n2);
    let mean_xy = kxy.sum() / (n1 * n2);
    let loss = (mean_xx + mean_yy - 2.0 * mean_xy).max(0.0);

    // grad over a row p of X:
    //   (2/sigma^2) [ (Kxx theta_X - rowsum(Kxx) theta_Xp) / n1^2
    //               - (Kxy theta_Y - rowsum(Kxy) theta_Xp) / (n1 n2) ]
    let sx: Array1<f64> = kxx.sum_axis(Axis(1));
    let cx: Array1<f64> = kxy.sum_axis(Axis(1));
    let sy: Array1<f64> = kyy.sum_axis(Axis(1));
    let cy: Array1<f64> = kxy.sum_axis(Axis(0));
    let kxx_x = kxx.dot(&x);
    let kxy_y = kxy.dot(&y);
    let kyy_y = kyy.dot(&y);
    let kyx_x = kxy.t().dot(&x);

    let two_inv_sigma2 = 2.0 / (sigma * sigma);
    let mut grad_x = Array2::zeros(x.raw_dim());
    grad_x
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(p, mut row)| {
            let xp = x.row(p);
            for d in 0..row.len() {
                let same = (kxx_x[[p, d]] - sx[p] * xp[d]) / (n1 * n1);
                let cross = (kxy_y[[p, d]] - cx[p] * xp[d]) / (n1 * n2);
                row[d] = two_inv_sigma2 * (same - cross);
            }
        });
    let mut grad_y = Array2::zeros(y.raw_dim());
    grad_y
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(q, mut row)| {
            let yq = y.row(q);
            for d in 0..row.len() {
                let same = (kyy_y[[q, d]] - sy[q] * yq[d]) / (n2 * n2);
                let cross = (kyx_x[[q, d]] - cy[q] * yq[d]) / (n1 * n2);
                row[d] = two_inv_sigma2 * (same - cross);
            }
        });

    Ok(MmdEval {
        sigma,
        loss,
        grad_x,
        grad_y,
    })
}

/// Squared MMD between the row sets of `x` and `y`.
pub fn mmd_rbf(x: ArrayView2<f64>, y: ArrayView2<f64>, sigma: f64) -> Result<f64> {
    Ok(mmd_eval(x, y, Bandwidth::Fixed(sigma))?.loss)
}

/// Exact gradients of the V-statistic with respect to every row of `x`
/// and `y`.
pub fn mmd_grad(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    sigma: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let eval = mmd_eval(x, y, Bandwidth::Fixed(sigma))?;
    Ok((eval.grad_x, eval.grad_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_samples_give_zero() {
        let x = array![[0.1, 0.2], [0.3, -0.1], [1.0, 0.5]];
        let loss = mmd_rbf(x.view(), x.view(), 1.0).unwrap();
        assert!(loss.abs() < 1e-12);
        let (gx, gy) = mmd_grad(x.view(), x.view(), 1.0).unwrap();
        assert!(gx.iter().all(|g| g.abs() < 1e-12));
        assert!(gy.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn single_pair_closed_form() {
        // X = {0}, Y = {1}, sigma = 1: 2 - 2 exp(-1/2).
        let x = array![[0.0]];
        let y = array![[1.0]];
        let loss = mmd_rbf(x.view(), y.view(), 1.0).unwrap();
        let expected = 2.0 - 2.0 * (-0.5f64).exp();
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.786939).abs() < 1e-6);
    }

    #[test]
    fn symmetric_in_arguments() {
        let x = array![[0.0, 1.0], [2.0, -1.0]];
        let y = array![[0.5, 0.5], [1.5, 0.0], [-1.0, 2.0]];
        let a = mmd_rbf(x.view(), y.view(), 0.7).unwrap();
        let b = mmd_rbf(y.view(), x.view(), 0.7).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn single_pair_gradient_matches_hand_derivative() {
        // d/dx MMD^2 = 2 k(x,y) (x-y) / sigma^2 = -2 exp(-1/2) at x=0,y=1.
        let x = array![[0.0]];
        let y = array![[1.0]];
        let (gx, gy) = mmd_grad(x.view(), y.view(), 1.0).unwrap();
        let expected = -2.0 * (-0.5f64).exp();
        assert!((gx[[0, 0]] - expected).abs() < 1e-12, "{gx:?}");
        assert!((gy[[0, 0]] + expected).abs() < 1e-12, "{gy:?}");
    }

    #[test]
    fn empty_group_is_an_error() {
        let x = Array2::<f64>::zeros((0, 2));
        let y = array![[0.0, 1.0]];
        assert!(mmd_rbf(x.view(), y.view(), 1.0).is_err());
    }

    #[test]
    fn degenerate_median_advises_fixed_bandwidth() {
        let x = array![[1.0], [1.0], [1.0]];
        let y = array![[1.0], [1.0]];
        let err = mmd_eval(x.view(), y.view(), Bandwidth::Median).unwrap_err();
        assert!(err.to_string().contains("fixed bandwidth"), "{err}");
    }

    #[test]
    fn median_heuristic_simple_values() {
        // Points 0, 1, 3 pooled: distances 1, 3, 2 -> median 2.
        let x = array![[0.0], [1.0]];
        let y = array![[3.0]];
        let sigma = median_heuristic(x.view(), y.view()).unwrap();
        assert!((sigma - 2.0).abs() < 1e-12);
    }

    #[test]
    fn median_heuristic_even_count_averages_middles() {
        // Points 0, 1, 2: distances 1, 2, 1 -> sorted (1, 1, 2), odd count.
        // Points 0, 1, 2, 4: distances 1,2,4,1,3,2 -> sorted 1,1,2,2,3,4,
        // median = (2 + 2) / 2 = 2.
        let x = array![[0.0], [1.0]];
        let y = array![[2.0], [4.0]];
        let sigma = median_heuristic(x.view(), y.view()).unwrap();
        assert!((sigma - 2.0).abs() < 1e-12);
    }
}
