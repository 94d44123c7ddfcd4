//! Two-component PCA projection with a deterministic sign convention.

use ndarray::{Array1, Array2, ArrayView2};

use crate::{Error, Result};

/// Projection onto the top two principal components.
#[derive(Debug, Clone)]
pub struct PcaProjection {
    /// N x 2 coordinates in component space.
    pub coords: Array2<f64>,
    /// Fewer than two meaningfully nonzero singular values; the second
    /// coordinate is zeroed.
    pub rank_deficient: bool,
    pub explained_variance: [f64; 2],
}

/// Project mean-centered rows onto their top two principal components.
///
/// Components are eigenvectors of the sample covariance; each is oriented so
/// its largest-magnitude loading is positive, which fixes the sign
/// deterministically.
pub fn pca_project(theta: ArrayView2<f64>) -> Result<PcaProjection> {
    let n = theta.nrows();
    let k = theta.ncols();
    if n < 2 {
        return Err(Error::InvalidData(
            "PCA requires at least two rows".to_string(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidData("PCA requires at least one column".into()));
    }

    let mean: Array1<f64> = theta.mean_axis(ndarray::Axis(0)).expect("n >= 2");
    let mut centered = theta.to_owned();
    for mut row in centered.outer_iter_mut() {
        row -= &mean;
    }
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let (eigenvalues, eigenvectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    let top = order[0];
    let second = order.get(1).copied();

    let scale = eigenvalues[top].abs().max(1e-300);
    let second_value = second.map(|s| eigenvalues[s]).unwrap_or(0.0);
    let rank_deficient = second_value <= 1e-12 * scale;

    let mut components = Array2::<f64>::zeros((k, 2));
    components.column_mut(0).assign(&oriented(&eigenvectors, top));
    if let Some(s) = second {
        if !rank_deficient {
            components.column_mut(1).assign(&oriented(&eigenvectors, s));
        }
    }

    let coords = centered.dot(&components);
    Ok(PcaProjection {
        coords,
        rank_deficient,
        explained_variance: [eigenvalues[top].max(0.0), if rank_deficient { 0.0 } else { second_value.max(0.0) }],
    })
}

/// Eigenvector column with the sign convention applied.
fn oriented(vectors: &Array2<f64>, col: usize) -> Array1<f64> {
    let v = vectors.column(col);
    let mut best = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv(|x| -x)
    } else {
        v.to_owned()
    }
}

/// Cyclic Jacobi eigendecomposition for small symmetric matrices. Returns
/// (eigenvalues, eigenvector columns).
fn jacobi_eigen(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut v = Array2::<f64>::eye(n);
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q] ] * a[[p, q]];
            }
        }
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = c * aip - s * aiq;
                    a[[i, q]] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[[p, j]];
                    let aqj = a[[q, j]];
                    a[[p, j]] = c * apj - s * aqj;
                    a[[q, j]] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }
    let eigenvalues = (0..n).map(|i| a[[i, i]]).collect();
    (eigenvalues, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_dimensional_centered_data_projects_losslessly() {
        let theta = array![
            [1.0, 0.5],
            [-1.0, -0.5],
            [2.0, -1.0],
            [-2.0, 1.0],
            [0.5, 0.25],
            [-0.5, -0.25]
        ];
        let proj = pca_project(theta.view()).unwrap();
        assert!(!proj.rank_deficient);
        // Pairwise distances are preserved exactly for K = 2 (rotation).
        for i in 0..theta.nrows() {
            for j in 0..theta.nrows() {
                let orig = (&theta.row(i) - &theta.row(j)).mapv(|x| x * x).sum();
                let proj_d = (&proj.coords.row(i) - &proj.coords.row(j))
                    .mapv(|x| x * x)
                    .sum();
                assert!((orig - proj_d).abs() < 1e-10, "{orig} vs {proj_d}");
            }
        }
    }

    #[test]
    fn rank_one_data_zeroes_second_coordinate() {
        // All rows are multiples of one direction.
        let base = [1.0, 2.0, -1.0];
        let mut theta = Array2::zeros((5, 3));
        for (i, scale) in [0.0, 1.0, 2.0, -1.0, 0.5].iter().enumerate() {
            for d in 0..3 {
                theta[[i, d]] = scale * base[d];
            }
        }
        let proj = pca_project(theta.view()).unwrap();
        assert!(proj.rank_deficient);
        for i in 0..5 {
            assert_eq!(proj.coords[[i, 1]], 0.0);
        }
    }

    #[test]
    fn first_component_carries_more_variance() {
        let (theta, _) = crate::synth::gaussian_groups(200, 6, 1.5, 1.0, 3);
        let proj = pca_project(theta.view()).unwrap();
        let var = |c: usize| {
            let col = proj.coords.column(c);
            let mean = col.sum() / col.len() as f64;
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64
        };
        assert!(var(0) >= var(1));
        assert!(proj.explained_variance[0] >= proj.explained_variance[1]);
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, _) = jacobi_eigen(a);
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        assert!((sorted[0] - 1.0).abs() < 1e-12);
        assert!((sorted[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_row_is_an_error() {
        let theta = array![[1.0, 2.0]];
        assert!(pca_project(theta.view()).is_err());
    }
}
