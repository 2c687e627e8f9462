//! Small dense linear-algebra helpers shared by the rate, game and metric code.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Thin SVD with singular values in non-increasing order.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> SortedSvd {
    let svd = SVD::new(m.clone(), true, true);
    SortedSvd {
        u: svd.u.expect("u requested"),
        singular_values: svd.singular_values.iter().copied().collect(),
        v_t: svd.v_t.expect("v_t requested"),
    }
}

/// Singular values in non-increasing order (length `min(rows, cols)`).
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values strictly above `rel_tol * sigma_1`.
pub fn numerical_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    match singular_values.first() {
        Some(&s1) if s1 > 0.0 => singular_values.iter().filter(|&&s| s > rel_tol * s1).count(),
        _ => 0,
    }
}

/// Moore-Penrose pseudoinverse; singular values at or below `rel_tol * sigma_max` are dropped.
pub fn pseudoinverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return DMatrix::zeros(cols, rows);
    }
    let SortedSvd { u, singular_values, v_t } = svd(m);
    let cutoff = rel_tol * singular_values.first().copied().unwrap_or(0.0);
    let mut out = DMatrix::zeros(cols, rows);
    for (p, &s) in singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_p u_p^T / s
            let v = v_t.row(p).transpose();
            let uc = u.column(p);
            out.ger(1.0 / s, &v, &uc, 1.0);
        }
    }
    out
}

/// Polar factor `U V^T` of `m = U S V^T`.
pub fn polar_factor(m: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    if m.is_empty() {
        return Err(Error::InvalidInput("polar factor of an empty matrix".into()));
    }
    let SortedSvd { u, singular_values, v_t } = svd(m);
    let s_max = singular_values.first().copied().unwrap_or(0.0);
    let s_min = singular_values.last().copied().unwrap_or(0.0);
    if !(s_max > 0.0) || s_min < rank_tol * s_max {
        return Err(Error::RankDeficient { sigma_min: s_min, sigma_max: s_max });
    }
    Ok(u * v_t)
}

/// Orthonormal basis of the numerical column span of `m` (leading left singular vectors).
pub fn column_span_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if m.is_empty() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let SortedSvd { u, singular_values, .. } = svd(m);
    let r = numerical_rank(&singular_values, rel_tol);
    u.columns(0, r).into_owned()
}

/// `I + alpha * a` for a square `a`, factored.
pub(crate) fn shifted_cholesky(a: DMatrix<f64>, alpha: f64) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let n = a.nrows();
    let mut m = a * alpha;
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    Cholesky::new(m)
}

pub(crate) fn cholesky_logdet(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "hcat row mismatch");
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

pub fn hcat_all(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn column_norms(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudoinverse_of_zero_is_zero_transpose_shape() {
        let z = DMatrix::<f64>::zeros(3, 5);
        let p = pseudoinverse(&z, 1e-12);
        assert_eq!(p.shape(), (5, 3));
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_values_sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0]);
        let s = singular_values(&m);
        assert!((s[0] - 5.0).abs() < 1e-12 && (s[1] - 3.0).abs() < 1e-12 && (s[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_counts_relative_threshold() {
        assert_eq!(numerical_rank(&[10.0, 1.0, 1e-3, 1e-9], 1e-3), 2);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-3), 0);
    }
}
