//! Coding rate and rate reduction of representation matrices.
//!
//! A representation matrix `Z` is `d_z x n`, one representation per column.
//! The coding rate is
//!
//! ```text
//! R(Z) = 1/2 logdet(I + d_z / (n eps^2) Z Z^T)
//! ```
//!
//! with the natural logarithm. The log-determinant is taken from a Cholesky
//! factor of whichever of `Z Z^T` or `Z^T Z` is smaller, using
//! `det(I + a Z Z^T) = det(I + a Z^T Z)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_logdet, hcat, shifted_cholesky, singular_values};

/// Squared quantization precision `eps^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Precision(f64);

impl Precision {
    pub fn new(eps_sq: f64) -> Result<Self> {
        if eps_sq.is_finite() && eps_sq > 0.0 {
            Ok(Self(eps_sq))
        } else {
            Err(Error::InvalidInput(format!("eps^2 must be positive and finite, got {eps_sq}")))
        }
    }

    pub fn eps_sq(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Precision {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Precision> for f64 {
    fn from(p: Precision) -> f64 {
        p.0
    }
}

/// Assignment of the `n` columns of a matrix to `k` classes (labels are `0..k`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ClassPartition {
    /// Builds a partition with `k = max(label) + 1`; every class must be non-empty.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |&m| m + 1);
        Self::with_classes(labels, k)
    }

    pub fn with_classes(labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.is_empty() || k == 0 {
            return Err(Error::InvalidInput("partition needs at least one column and one class".into()));
        }
        let mut members = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::InvalidInput(format!("label {l} at column {i} is outside 0..{k}")));
            }
            members[l].push(i);
        }
        if let Some(j) = members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("class {j} has no columns")));
        }
        Ok(Self { labels, members })
    }

    /// Contiguous classes: the first `counts[0]` columns are class 0, and so on.
    pub fn contiguous(counts: &[usize]) -> Result<Self> {
        let labels = counts
            .iter()
            .enumerate()
            .flat_map(|(j, &c)| std::iter::repeat(j).take(c))
            .collect();
        Self::with_classes(labels, counts.len())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.members[class]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub(crate) fn check(&self, z: &DMatrix<f64>) -> Result<()> {
        if z.ncols() != self.n() {
            return Err(Error::PartitionMismatch { labels: self.n(), columns: z.ncols() });
        }
        Ok(())
    }

    /// Column blocks `Z_j`, in class order.
    pub fn split(&self, z: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        self.check(z)?;
        Ok(self.members.iter().map(|idx| z.select_columns(idx)).collect())
    }
}

fn validate(z: &DMatrix<f64>) -> Result<()> {
    if z.nrows() == 0 || z.ncols() == 0 {
        return Err(Error::InvalidInput(format!("representation matrix must be non-empty, got {}x{}", z.nrows(), z.ncols())));
    }
    if !crate::linalg::all_finite(z) {
        return Err(Error::InvalidInput("representation matrix has non-finite entries".into()));
    }
    Ok(())
}

fn alpha(z: &DMatrix<f64>, eps_sq: f64) -> f64 {
    z.nrows() as f64 / (z.ncols() as f64 * eps_sq)
}

/// Coding rate without validation. Non-finite input yields NaN.
pub(crate) fn rate_value(z: &DMatrix<f64>, eps_sq: f64) -> f64 {
    let a = alpha(z, eps_sq);
    let gram = if z.ncols() < z.nrows() { z.tr_mul(z) } else { z * z.transpose() };
    match shifted_cholesky(gram, a) {
        Some(chol) => 0.5 * cholesky_logdet(&chol),
        None => f64::NAN,
    }
}

/// Coding rate and its gradient `a (I + a Z Z^T)^{-1} Z` without validation.
pub(crate) fn rate_and_grad(z: &DMatrix<f64>, eps_sq: f64) -> (f64, DMatrix<f64>) {
    let a = alpha(z, eps_sq);
    if z.ncols() < z.nrows() {
        // a Z (I + a Z^T Z)^{-1}
        let Some(chol) = shifted_cholesky(z.tr_mul(z), a) else {
            return (f64::NAN, DMatrix::from_element(z.nrows(), z.ncols(), f64::NAN));
        };
        let value = 0.5 * cholesky_logdet(&chol);
        let grad = chol.solve(&z.transpose()).transpose() * a;
        (value, grad)
    } else {
        let Some(chol) = shifted_cholesky(z * z.transpose(), a) else {
            return (f64::NAN, DMatrix::from_element(z.nrows(), z.ncols(), f64::NAN));
        };
        let value = 0.5 * cholesky_logdet(&chol);
        let grad = chol.solve(z) * a;
        (value, grad)
    }
}

/// Terms of `Delta R(Z1, Z2)`: value, gradient in `Z1`, gradient in `Z2`. Assumes equal shapes.
pub(crate) fn pair_and_grads(z1: &DMatrix<f64>, z2: &DMatrix<f64>, eps_sq: f64) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let n = z1.ncols();
    let (r_joint, g_joint) = rate_and_grad(&hcat(z1, z2), eps_sq);
    let (r1, g1) = rate_and_grad(z1, eps_sq);
    let (r2, g2) = rate_and_grad(z2, eps_sq);
    let value = r_joint - 0.5 * r1 - 0.5 * r2;
    let d1 = g_joint.columns(0, n) - g1 * 0.5;
    let d2 = g_joint.columns(n, n) - g2 * 0.5;
    (value, d1, d2)
}

pub fn coding_rate(z: &DMatrix<f64>, p: Precision) -> Result<f64> {
    validate(z)?;
    Ok(rate_value(z, p.eps_sq()).max(0.0))
}

pub fn grad_coding_rate(z: &DMatrix<f64>, p: Precision) -> Result<DMatrix<f64>> {
    validate(z)?;
    Ok(rate_and_grad(z, p.eps_sq()).1)
}

/// `R(Z) - sum_j n_j / n R(Z_j)`.
pub fn rate_reduction_classwise(z: &DMatrix<f64>, part: &ClassPartition, p: Precision) -> Result<f64> {
    validate(z)?;
    let blocks = part.split(z)?;
    let n = z.ncols() as f64;
    let eps_sq = p.eps_sq();
    let within: f64 = blocks.iter().map(|b| b.ncols() as f64 / n * rate_value(b, eps_sq)).sum();
    Ok(rate_value(z, eps_sq) - within)
}

/// `R([Z1 Z2]) - R(Z1)/2 - R(Z2)/2` for two matrices of identical shape.
pub fn rate_reduction_pair(z1: &DMatrix<f64>, z2: &DMatrix<f64>, p: Precision) -> Result<f64> {
    validate(z1)?;
    validate(z2)?;
    if z1.shape() != z2.shape() {
        return Err(Error::shape(
            "rate_reduction_pair",
            format!("{}x{}", z1.nrows(), z1.ncols()),
            format!("{}x{}", z2.nrows(), z2.ncols()),
        ));
    }
    let eps_sq = p.eps_sq();
    Ok(rate_value(&hcat(z1, z2), eps_sq) - 0.5 * rate_value(z1, eps_sq) - 0.5 * rate_value(z2, eps_sq))
}

/// Upper bound on the classwise rate reduction from per-class singular values:
///
/// ```text
/// 1/(2n) sum_j sum_p [ n log(1 + d_z/(n eps^2) s_p^2) - n_j log(1 + d_z/(n_j eps^2) s_p^2) ]
/// ```
///
/// with `s_p = sigma_p(Z_j)`. Tight exactly when `Z_j^T Z_l = 0` for all `j != l`.
pub fn classwise_upper_bound(z: &DMatrix<f64>, part: &ClassPartition, p: Precision) -> Result<f64> {
    validate(z)?;
    let blocks = part.split(z)?;
    let d_z = z.nrows() as f64;
    let n = z.ncols() as f64;
    let eps_sq = p.eps_sq();
    let mut total = 0.0;
    for b in &blocks {
        let n_j = b.ncols() as f64;
        for s in singular_values(b) {
            let s2 = s * s;
            total += n * (d_z / (n * eps_sq) * s2).ln_1p() - n_j * (d_z / (n_j * eps_sq) * s2).ln_1p();
        }
    }
    Ok(total / (2.0 * n))
}
