use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{check_rows, AnalysisError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d` orthonormal rows, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Sample variance (N - 1 denominator) along each component.
    pub explained_variance: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
    pub n_samples: usize,
}

impl PcaModel {
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }

    pub fn transform_one(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((ci, xi), mi)| ci * (xi - mi)).sum())
            .collect()
    }

    pub fn transform(&self, data: &[Vec<f64>]) -> Vec<Vec<f64>> {
        data.iter().map(|x| self.transform_one(x)).collect()
    }

    pub fn inverse_transform_one(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (zi, c) in z.iter().zip(&self.components) {
            for (xj, cj) in x.iter_mut().zip(c) {
                *xj += zi * cj;
            }
        }
        x
    }
}

/// Makes the largest-magnitude entry positive so the sign is reproducible.
fn fix_sign(v: &mut [f64]) {
    let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Eigenpairs sorted by decreasing eigenvalue; ties keep solver order.
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..eig.eigenvalues.len())
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Top-`d` principal components. Uses the `N x N` Gram matrix when there are fewer
/// samples than dimensions and the covariance otherwise.
pub fn pca_fit(data: &[Vec<f64>], d: usize) -> Result<PcaModel> {
    let dim = check_rows(data)?;
    let n = data.len();
    if d == 0 || d > n.min(dim) {
        return Err(AnalysisError::Contract(format!("PCA needs 1 <= d <= min(N, dim) = {}, got {d}", n.min(dim))));
    }
    let mean: Vec<f64> = (0..dim).map(|j| data.iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
    let denom = (n.max(2) - 1) as f64;
    let xc = DMatrix::from_fn(n, dim, |i, j| data[i][j] - mean[j]);
    let total_variance = xc.iter().map(|v| v * v).sum::<f64>() / denom;

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut variances = Vec::with_capacity(d);
    if dim <= n {
        let cov = xc.transpose() * &xc / denom;
        for (lambda, v) in sorted_eigen(cov).into_iter().take(d) {
            variances.push(lambda.max(0.0));
            components.push(v);
        }
    } else {
        let gram = &xc * xc.transpose() / denom;
        let tol = 1e-12 * total_variance.max(f64::MIN_POSITIVE);
        for (lambda, u) in sorted_eigen(gram).into_iter().take(d) {
            if lambda <= tol {
                break;
            }
            let u = nalgebra::DVector::from_vec(u);
            let mut v: Vec<f64> = (xc.transpose() * u).iter().copied().collect();
            normalize(&mut v);
            variances.push(lambda);
            components.push(v);
        }
        // rank-deficient data: complete with zero-variance directions
        let mut basis = 0;
        while components.len() < d {
            let mut v = vec![0.0; dim];
            v[basis] = 1.0;
            basis += 1;
            for c in &components {
                let dot: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(x, ci)| *x -= dot * ci);
            }
            if normalize(&mut v) > 1e-6 {
                components.push(v);
                variances.push(0.0);
            }
        }
    }
    for c in &mut components {
        fix_sign(c);
    }
    Ok(PcaModel { mean, components, explained_variance: variances, total_variance, n_samples: n })
}
