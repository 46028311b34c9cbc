//! Least squares on polynomial-expanded, standardized features.
//!
//! Expanded columns are centered and scaled to unit population variance, the
//! target is centered, and the system is solved through a Householder QR
//! followed by an SVD of the triangular factor. Singular values below a
//! relative tolerance are dropped, which yields the minimum-norm solution when
//! the design is rank deficient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::poly::PolynomialExpansion;
use super::{check_xy, LearnError};

/// Relative singular-value cutoff for the least-squares solve.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    expansion: PolynomialExpansion,
    /// Coefficients on standardized expanded columns.
    pub coefficients: Vec<f64>,
    /// Intercept in standardized space (the training mean of y).
    pub intercept: f64,
    pub column_means: Vec<f64>,
    pub column_scales: Vec<f64>,
    /// Residual standard deviation on the training data.
    pub residual_sigma: f64,
    pub rank: usize,
    /// Fewer rows than expanded columns plus intercept.
    pub underdetermined: bool,
}

impl LinearModel {
    pub fn degree(&self) -> usize {
        self.expansion.degree()
    }

    pub fn n_inputs(&self) -> usize {
        self.expansion.n_inputs()
    }

    pub fn expansion(&self) -> &PolynomialExpansion {
        &self.expansion
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnError> {
        let z = self.expansion.expand(x)?;
        let mut acc = self.intercept;
        for (j, v) in z.iter().enumerate() {
            acc += self.coefficients[j] * (v - self.column_means[j]) / self.column_scales[j];
        }
        Ok(acc)
    }

    /// Coefficients on the raw (unstandardized) expanded columns.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.column_scales)
            .map(|(c, s)| c / s)
            .collect()
    }

    pub fn raw_intercept(&self) -> f64 {
        self.intercept
            - self
                .raw_coefficients()
                .iter()
                .zip(&self.column_means)
                .map(|(c, m)| c * m)
                .sum::<f64>()
    }
}

pub fn fit_linreg(x: &[Vec<f64>], y: &[f64], degree: usize) -> Result<LinearModel, LearnError> {
    let d = check_xy(x, y.len())?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite(format!("target {i} is {}", y[i])));
    }
    let expansion = PolynomialExpansion::new(d, degree)?;
    let n = x.len();
    let p = expansion.len();
    let expanded: Vec<Vec<f64>> = x
        .iter()
        .map(|r| expansion.expand(r))
        .collect::<Result<_, _>>()?;
    if expanded.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite("expanded features overflow".into()));
    }

    let mut column_means = vec![0.0; p];
    let mut column_scales = vec![1.0; p];
    for j in 0..p {
        let mean = expanded.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = expanded.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        column_means[j] = mean;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            column_scales[j] = sd;
        }
    }
    let constant: Vec<bool> = (0..p)
        .map(|j| column_scales[j] == 1.0 && expanded.iter().all(|r| r[j] == column_means[j]))
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let z = DMatrix::from_fn(n, p, |i, j| {
        if constant[j] {
            0.0
        } else {
            (expanded[i][j] - column_means[j]) / column_scales[j]
        }
    });
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let (beta, rank) = if p == 0 {
        (DVector::zeros(0), 0)
    } else if n >= p {
        let qr = z.clone().qr();
        let r = qr.r();
        let mut qty = yc.clone();
        qr.q_tr_mul(&mut qty);
        let rhs = qty.rows(0, p).into_owned();
        min_norm_solve(r, rhs)?
    } else {
        min_norm_solve(z.clone(), yc.clone())?
    };

    let fitted = &z * &beta;
    let rss: f64 = fitted.iter().zip(yc.iter()).map(|(f, t)| (t - f).powi(2)).sum();
    let dof = (n as f64 - rank as f64 - 1.0).max(1.0);
    Ok(LinearModel {
        expansion,
        coefficients: beta.iter().copied().collect(),
        intercept: y_mean,
        column_means,
        column_scales,
        residual_sigma: (rss / dof).sqrt(),
        rank,
        underdetermined: n < p + 1,
    })
}

fn min_norm_solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<(DVector<f64>, usize), LearnError> {
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = max_sv * RANK_TOLERANCE;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank == 0 {
        return Ok((DVector::zeros(svd.v_t.as_ref().map_or(0, |v| v.ncols())), 0));
    }
    let beta = svd
        .solve(&b, tol)
        .map_err(|e| LearnError::Numerical(e.to_string()))?;
    Ok((beta, rank))
}
