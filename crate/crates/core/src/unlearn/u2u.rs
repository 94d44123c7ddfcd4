//! Pairwise (user-to-user) distinguishability loss.
//!
//! The loss sums squared embedding distances over all ordered user pairs
//! whose attribute labels differ. The closed form below evaluates the same
//! quantity through group sums without materializing an N x N matrix, and
//! the brute-force variant is kept as its independently-checkable twin.

use ndarray::{Array1, Array2};

use crate::data::AttributeTable;
use crate::{Error, Result};

fn check_inputs(theta: &Array2<f64>, labels: &AttributeTable) -> Result<()> {
    if theta.nrows() != labels.n_users() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} embedding rows", labels.n_users()),
            got: format!("{}", theta.nrows()),
        });
    }
    labels.require_both_groups()
}

/// Reference evaluation: sum `||theta_i - theta_j||^2` over all ordered pairs
/// `(i, j)` with differing labels. Quadratic in N; used as the oracle for
/// [`u2u_loss`] and for small inputs.
pub fn u2u_loss_bruteforce(theta: &Array2<f64>, labels: &AttributeTable) -> Result<f64> {
    check_inputs(theta, labels)?;
    let n = theta.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels.label(i) != labels.label(j) {
                let diff = &theta.row(i) - &theta.row(j);
                sum += diff.dot(&diff);
            }
        }
    }
    Ok(sum)
}

/// Closed-form evaluation of the same ordered-pair sum:
/// `2 * (|S2| * sum_{i in S1} ||theta_i||^2 + |S1| * sum_{j in S2} ||theta_j||^2
///       - 2 * <sum_{S1} theta, sum_{S2} theta>)`.
pub fn u2u_loss(theta: &Array2<f64>, labels: &AttributeTable) -> Result<f64> {
    check_inputs(theta, labels)?;
    let k = theta.ncols();
    let mut sq0 = 0.0;
    let mut sq1 = 0.0;
    let mut sum0 = Array1::<f64>::zeros(k);
    let mut sum1 = Array1::<f64>::zeros(k);
    for &i in labels.group0() {
        let row = theta.row(i);
        sq0 += row.dot(&row);
        sum0 += &row;
    }
    for &j in labels.group1() {
        let row = theta.row(j);
        sq1 += row.dot(&row);
        sum1 += &row;
    }
    let (n0, n1) = labels.group_sizes();
    Ok(2.0 * (n1 as f64 * sq0 + n0 as f64 * sq1 - 2.0 * sum0.dot(&sum1)))
}

/// Exact gradient of [`u2u_loss`]: row `i` receives
/// `4 * (|S_other| * theta_i - sum_{j in other group} theta_j)`.
pub fn u2u_grad(theta: &Array2<f64>, labels: &AttributeTable) -> Result<Array2<f64>> {
    check_inputs(theta, labels)?;
    let k = theta.ncols();
    let mut sum0 = Array1::<f64>::zeros(k);
    let mut sum1 = Array1::<f64>::zeros(k);
    for &i in labels.group0() {
        sum0 += &theta.row(i);
    }
    for &j in labels.group1() {
        sum1 += &theta.row(j);
    }
    let (n0, n1) = labels.group_sizes();
    let mut grad = Array2::zeros(theta.raw_dim());
    for i in 0..theta.nrows() {
        let (n_other, sum_other) = if labels.label(i) == 0 {
            (n1 as f64, &sum1)
        } else {
            (n0 as f64, &sum0)
        };
        let mut row = grad.row_mut(i);
        row.assign(&theta.row(i));
        row *= 4.0 * n_other;
        row.scaled_add(-4.0, sum_other);
    }
    Ok(grad)
}
