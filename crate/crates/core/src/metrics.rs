//! Evaluation metrics and equilibrium verification.
//!
//! The verifier records every number it compares and the thresholds it
//! compared them against, so a report's verdict can be recomputed from the
//! report alone ([`EquilibriumReport::recompute_status`]).
//!
//! Spectral targets use squared singular values: an MSP equilibrium has
//! `sigma_p(F X_j)^2 = n_j / d_S_j` for `p <= d_S_j` (or the flat-top branch
//! with one smaller value). The literal unsquared comparison is recorded
//! alongside but never decides the verdict.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::games::{GameKind, LinearDecoder, LinearEncoder};
use crate::linalg::{column_span_basis, numerical_rank, singular_values};
use crate::rate::{ClassPartition, Precision};

/// `|cos angle(z_p, z_q)|` for every pair of columns. Zero columns give 0
/// everywhere, including the diagonal.
pub fn cosine_heatmap(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut unit = z.clone();
    let mut nonzero = vec![false; z.ncols()];
    for (mut c, nz) in unit.column_iter_mut().zip(nonzero.iter_mut()) {
        let norm = c.norm();
        if norm > 0.0 {
            c /= norm;
            *nz = true;
        }
    }
    let mut h = unit.tr_mul(&unit);
    h.apply(|v| *v = v.abs().min(1.0));
    for (p, &nz) in nonzero.iter().enumerate() {
        if nz {
            h[(p, p)] = 1.0;
        }
    }
    h
}

pub fn class_spectra(z: &DMatrix<f64>, part: &ClassPartition) -> Result<Vec<Vec<f64>>> {
    Ok(part.split(z)?.iter().map(singular_values).collect())
}

/// Distance of each column of `Z_j` to the span of `Zhat_j`, in column order of `z`.
pub fn alignment_residuals(z: &DMatrix<f64>, zhat: &DMatrix<f64>, part: &ClassPartition, rank_tol: f64) -> Result<Vec<f64>> {
    if z.shape() != zhat.shape() {
        return Err(Error::shape(
            "alignment_residuals",
            format!("{}x{}", z.nrows(), z.ncols()),
            format!("{}x{}", zhat.nrows(), zhat.ncols()),
        ));
    }
    part.check(z)?;
    let mut out = vec![0.0; z.ncols()];
    for j in 0..part.k() {
        let idx = part.members(j);
        let basis = column_span_basis(&zhat.select_columns(idx), rank_tol);
        for &i in idx {
            let col = z.column(i);
            let proj = &basis * (basis.transpose() * col);
            out[i] = (col - proj).norm();
        }
    }
    Ok(out)
}

/// Pairs closer than this in data space are skipped by [`isometry_ratios`].
pub const ISOMETRY_MIN_DISTANCE: f64 = 1e-12;

/// `||z_i - z_j|| / ||x_i - x_j||` over all unordered pairs `i < j`.
pub fn isometry_ratios(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Vec<f64> {
    assert_eq!(x.ncols(), z.ncols(), "isometry_ratios needs equal column counts");
    let n = x.ncols();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = (x.column(i) - x.column(j)).norm();
            if dx < ISOMETRY_MIN_DISTANCE {
                continue;
            }
            out.push((z.column(i) - z.column(j)).norm() / dx);
        }
    }
    out
}

/// Verifier tolerances. Missing keys take their [`Thresholds::trained`] values when deserialised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Singular value counts as nonzero above `rank_rel * sigma_1`.
    pub rank_rel: f64,
    /// Relative tolerance on `sigma_p^2` against `n_j / d_S_j`.
    pub spectral_rel: f64,
    /// Bound on the normalised cross-class Gram norm.
    pub orthogonality: f64,
    /// Bound on residual / column norm.
    pub alignment_rel: f64,
    /// SSP: relative tolerance on `sigma_p(FX) / sigma_p(X)` and on isometry ratios.
    pub isometry_rel: f64,
    /// SSP: fraction of isometry ratios that must fall within tolerance.
    pub isometry_fraction: f64,
    /// Partial success: `sigma_{d_S} / sigma_{d_S + 1}` must exceed this.
    pub dominance_ratio: f64,
    pub partial_orthogonality: f64,
    pub partial_alignment_rel: f64,
    /// Accept a partial verdict as success (for noisy data).
    pub accept_partial: bool,
}

impl Thresholds {
    /// Tolerances for trained pairs.
    pub fn trained() -> Self {
        Self {
            rank_rel: 1e-3,
            spectral_rel: 0.2,
            orthogonality: 0.05,
            alignment_rel: 0.05,
            isometry_rel: 0.01,
            isometry_fraction: 0.99,
            dominance_ratio: 3.0,
            partial_orthogonality: 0.2,
            partial_alignment_rel: 0.2,
            accept_partial: false,
        }
    }

    /// Tolerances for the analytic construction.
    pub fn oracle() -> Self {
        Self {
            spectral_rel: 1e-6,
            orthogonality: 1e-6,
            alignment_rel: 1e-6,
            isometry_rel: 1e-6,
            isometry_fraction: 1.0,
            ..Self::trained()
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::trained()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralBranch {
    /// All top `d_S_j` squared singular values equal `n_j / d_S_j`.
    Equal,
    /// Top `d_S_j - 1` equal inside `(n_j / d_S_j, n_j / (d_S_j - 1))`, last one positive.
    FlatTop,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Partial,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEvidence {
    pub class: usize,
    pub n_j: usize,
    pub d_s: usize,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// `n_j / d_S_j`, compared with squared singular values.
    pub target_squared: f64,
    /// Whether the unsquared reading `sigma_p = n_j / d_S_j` also holds.
    pub literal_reading_holds: bool,
    pub branch: SpectralBranch,
    /// `sigma_{d_S} / sigma_{d_S + 1}` (infinite when the latter is zero or absent).
    pub dominance_ratio: f64,
    /// SSP: `sigma_p(FX) / sigma_p(X)` for `p <= d_S`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data_singular_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossGram {
    pub a: usize,
    pub b: usize,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometrySummary {
    pub pairs: usize,
    pub within_tolerance: usize,
    pub fraction_within: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checks {
    pub injective: bool,
    /// MSP only; always true for SSP.
    pub discriminative: bool,
    pub consistent: bool,
    /// SSP only; always true for MSP.
    pub isometry: bool,
}

impl Checks {
    pub fn all(&self) -> bool {
        self.injective && self.discriminative && self.consistent && self.isometry
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub game: GameKind,
    pub status: Status,
    pub success: bool,
    pub thresholds: Thresholds,
    pub classes: Vec<ClassEvidence>,
    pub cross_grams: Vec<CrossGram>,
    pub max_cross_gram: f64,
    pub alignment_residuals: Vec<f64>,
    pub max_relative_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isometry: Option<IsometrySummary>,
    pub checks: Checks,
    pub partial_checks: Checks,
}

impl EquilibriumReport {
    /// Re-derives the checks and the verdict from the stored evidence.
    pub fn recompute_status(&self) -> (Checks, Checks, Status) {
        let t = &self.thresholds;
        let spectral_ok = |c: &ClassEvidence| c.rank == c.d_s && c.branch != SpectralBranch::None;
        let (checks, partial) = match self.game {
            GameKind::Msp => (
                Checks {
                    injective: self.classes.iter().all(spectral_ok),
                    discriminative: self.max_cross_gram < t.orthogonality,
                    consistent: self.max_relative_residual < t.alignment_rel,
                    isometry: true,
                },
                Checks {
                    injective: self.classes.iter().all(|c| c.dominance_ratio > t.dominance_ratio),
                    discriminative: self.max_cross_gram < t.partial_orthogonality,
                    consistent: self.max_relative_residual < t.partial_alignment_rel,
                    isometry: true,
                },
            ),
            GameKind::Ssp => {
                let sing_ok = self
                    .classes
                    .iter()
                    .all(|c| c.data_singular_ratio.iter().all(|r| (r - 1.0).abs() <= t.isometry_rel));
                let ratio_ok = self.isometry.as_ref().is_none_or(|s| s.fraction_within >= t.isometry_fraction);
                (
                    Checks {
                        injective: self.classes.iter().all(|c| c.rank == c.d_s),
                        discriminative: true,
                        consistent: self.max_relative_residual < t.alignment_rel,
                        isometry: sing_ok && ratio_ok,
                    },
                    Checks {
                        injective: self.classes.iter().all(|c| c.dominance_ratio > t.dominance_ratio),
                        discriminative: true,
                        consistent: self.max_relative_residual < t.partial_alignment_rel,
                        isometry: sing_ok,
                    },
                )
            }
        };
        let status = if checks.all() {
            Status::Pass
        } else if partial.all() {
            Status::Partial
        } else {
            Status::Fail
        };
        (checks, partial, status)
    }

    fn finalize(mut self) -> Self {
        let (checks, partial, status) = self.recompute_status();
        self.checks = checks;
        self.partial_checks = partial;
        self.status = status;
        self.success = status == Status::Pass || (status == Status::Partial && self.thresholds.accept_partial);
        self
    }
}

fn classify_branch(sq: &[f64], d: usize, target: f64, tol: f64, positive: f64) -> SpectralBranch {
    if sq.len() < d || d == 0 {
        return SpectralBranch::None;
    }
    let top = &sq[..d];
    if top.iter().all(|&s| (s - target).abs() <= tol * target) {
        return SpectralBranch::Equal;
    }
    // flat top of d - 1 values strictly between n_j/d and n_j/(d-1), last value positive
    let upper = if d == 1 { f64::INFINITY } else { target * d as f64 / (d - 1) as f64 };
    let head = &top[..d - 1];
    let last = top[d - 1];
    if head.is_empty() {
        return if last > positive { SpectralBranch::FlatTop } else { SpectralBranch::None };
    }
    let hi = head.iter().copied().fold(f64::MIN, f64::max);
    let lo = head.iter().copied().fold(f64::MAX, f64::min);
    let flat = hi - lo <= tol * lo;
    let inside = lo > target * (1.0 - tol) && hi < upper * (1.0 + tol);
    if flat && inside && last > positive && last < lo {
        SpectralBranch::FlatTop
    } else {
        SpectralBranch::None
    }
}

fn dominance(s: &[f64], d: usize) -> f64 {
    match (s.get(d.wrapping_sub(1)), s.get(d)) {
        (Some(&a), Some(&b)) if b > 0.0 => a / b,
        (Some(&a), _) if a > 0.0 => f64::INFINITY,
        _ => 0.0,
    }
}

fn encode(enc: &LinearEncoder, dec: &LinearDecoder, ds: &LabeledDataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let f = enc.matrix();
    let g = dec.matrix();
    if f.ncols() != ds.d_x() || g.shape() != (f.ncols(), f.nrows()) {
        return Err(Error::shape(
            "verify",
            format!("F d_z x {}, G {} x d_z", ds.d_x(), ds.d_x()),
            format!("F {}x{}, G {}x{}", f.nrows(), f.ncols(), g.nrows(), g.ncols()),
        ));
    }
    let z = f * &ds.x;
    let zhat = f * (g * &z);
    Ok((z, zhat))
}

fn relative_residuals(z: &DMatrix<f64>, resid: &[f64]) -> f64 {
    let scale = z.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    z.column_iter()
        .zip(resid)
        .filter(|(c, _)| c.norm() > 1e-12 * scale.max(f64::MIN_POSITIVE))
        .map(|(c, &r)| r / c.norm())
        .fold(0.0, f64::max)
}

fn class_evidence(z: &DMatrix<f64>, ds: &LabeledDataset, t: &Thresholds) -> Result<Vec<ClassEvidence>> {
    let spectra = class_spectra(z, &ds.partition)?;
    let counts = ds.partition.class_counts();
    Ok(spectra
        .into_iter()
        .enumerate()
        .map(|(j, s)| {
            let d = ds.subspace_dims()[j];
            let n_j = counts[j];
            let target = n_j as f64 / d as f64;
            let sq: Vec<f64> = s.iter().map(|v| v * v).collect();
            let positive = t.rank_rel * s.first().copied().unwrap_or(0.0);
            let rank = numerical_rank(&s, t.rank_rel);
            let literal = s.len() >= d && s[..d].iter().all(|&v| (v - target).abs() <= t.spectral_rel * target);
            ClassEvidence {
                class: j,
                n_j,
                d_s: d,
                rank,
                target_squared: target,
                literal_reading_holds: literal,
                branch: classify_branch(&sq, d, target, t.spectral_rel, positive * positive),
                dominance_ratio: dominance(&s, d),
                singular_values: s,
                data_singular_ratio: Vec::new(),
            }
        })
        .collect())
}

/// Checks injectivity (rank and spectrum), discrimination (cross-class
/// orthogonality) and consistency (alignment residuals) of an MSP pair.
pub fn verify_msp_equilibrium(
    enc: &LinearEncoder,
    dec: &LinearDecoder,
    ds: &LabeledDataset,
    _p: Precision,
    thresholds: &Thresholds,
) -> Result<EquilibriumReport> {
    let (z, zhat) = encode(enc, dec, ds)?;
    let classes = class_evidence(&z, ds, thresholds)?;
    let blocks = ds.partition.split(&z)?;
    let mut cross_grams = Vec::new();
    for a in 0..blocks.len() {
        for b in (a + 1)..blocks.len() {
            let denom = blocks[a].norm() * blocks[b].norm();
            let num = (blocks[a].transpose() * &blocks[b]).norm();
            let normalized = if denom > 0.0 { num / denom } else { 0.0 };
            cross_grams.push(CrossGram { a, b, normalized });
        }
    }
    let max_cross_gram = cross_grams.iter().map(|c| c.normalized).fold(0.0, f64::max);
    let residuals = alignment_residuals(&z, &zhat, &ds.partition, thresholds.rank_rel)?;
    let max_relative_residual = relative_residuals(&z, &residuals);
    let blank = Checks { injective: false, discriminative: false, consistent: false, isometry: false };
    Ok(EquilibriumReport {
        game: GameKind::Msp,
        status: Status::Fail,
        success: false,
        thresholds: *thresholds,
        classes,
        cross_grams,
        max_cross_gram,
        alignment_residuals: residuals,
        max_relative_residual,
        isometry: None,
        checks: blank,
        partial_checks: blank,
    }
    .finalize())
}

/// Checks rank preservation, isometry on the data span and consistency of an SSP pair.
pub fn verify_ssp_equilibrium(
    enc: &LinearEncoder,
    dec: &LinearDecoder,
    ds: &LabeledDataset,
    thresholds: &Thresholds,
) -> Result<EquilibriumReport> {
    if ds.k() != 1 {
        return Err(Error::InvalidInput(format!("SSP verification needs a single class, got k = {}", ds.k())));
    }
    let (z, zhat) = encode(enc, dec, ds)?;
    let mut classes = class_evidence(&z, ds, thresholds)?;
    let sx = singular_values(&ds.x);
    let d = ds.subspace_dims()[0];
    let sz = &classes[0].singular_values;
    classes[0].data_singular_ratio = (0..d.min(sz.len()).min(sx.len()))
        .map(|p| if sx[p] > 0.0 { sz[p] / sx[p] } else { 0.0 })
        .collect();

    let ratios = isometry_ratios(&ds.x, &z);
    let within = ratios.iter().filter(|r| (*r - 1.0).abs() <= thresholds.isometry_rel).count();
    let isometry = (!ratios.is_empty()).then(|| IsometrySummary {
        pairs: ratios.len(),
        within_tolerance: within,
        fraction_within: within as f64 / ratios.len() as f64,
        min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
    });

    let residuals = alignment_residuals(&z, &zhat, &ds.partition, thresholds.rank_rel)?;
    let max_relative_residual = relative_residuals(&z, &residuals);
    let blank = Checks { injective: false, discriminative: false, consistent: false, isometry: false };
    Ok(EquilibriumReport {
        game: GameKind::Ssp,
        status: Status::Fail,
        success: false,
        thresholds: *thresholds,
        classes,
        cross_grams: Vec::new(),
        max_cross_gram: 0.0,
        alignment_residuals: residuals,
        max_relative_residual,
        isometry,
        checks: blank,
        partial_checks: blank,
    }
    .finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_conventions() {
        let z = DMatrix::from_column_slice(2, 3, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
        let h = cosine_heatmap(&z);
        assert!((h[(0, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(h[(2, 2)], 0.0);
        assert_eq!(h[(0, 2)], 0.0);
        let e = DMatrix::<f64>::identity(2, 2);
        assert_eq!(cosine_heatmap(&e)[(0, 1)], 0.0);
    }

    #[test]
    fn spectra_of_orthonormal_and_zero_blocks() {
        let mut z = DMatrix::zeros(3, 4);
        z[(0, 0)] = 1.0;
        z[(1, 1)] = 1.0;
        let part = ClassPartition::contiguous(&[2, 2]).unwrap();
        let s = class_spectra(&z, &part).unwrap();
        assert!(s[0].iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(s[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residuals_identity_and_orthogonal_cases() {
        let part = ClassPartition::contiguous(&[2]).unwrap();
        let z = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let r = alignment_residuals(&z, &z, &part, 1e-3).unwrap();
        assert!(r.iter().all(|&v| v < 1e-14));
        let zhat = DMatrix::from_column_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let r = alignment_residuals(&z, &zhat, &part, 1e-3).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14);
        assert!(alignment_residuals(&z, &DMatrix::zeros(3, 3), &part, 1e-3).is_err());
    }

    #[test]
    fn isometry_ratio_examples() {
        let x = DMatrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64 * 0.3 + (j * j) as f64);
        assert!(isometry_ratios(&x, &x).iter().all(|r| (r - 1.0).abs() < 1e-14));
        assert!(isometry_ratios(&x, &(&x * 2.0)).iter().all(|r| (r - 2.0).abs() < 1e-14));
        let mut dup = x.clone();
        dup.set_column(1, &x.column(0).into_owned());
        assert_eq!(isometry_ratios(&dup, &dup).len(), 9);
    }

    #[test]
    fn branch_classification() {
        assert_eq!(classify_branch(&[10.0, 10.0, 10.0], 3, 10.0, 1e-6, 1e-9), SpectralBranch::Equal);
        // d = 3, target 10: flat top in (10, 15), smaller positive last
        assert_eq!(classify_branch(&[12.0, 12.0, 6.0], 3, 10.0, 1e-6, 1e-9), SpectralBranch::FlatTop);
        assert_eq!(classify_branch(&[20.0, 12.0, 6.0], 3, 10.0, 1e-6, 1e-9), SpectralBranch::None);
        assert_eq!(classify_branch(&[12.0, 12.0, 0.0], 3, 10.0, 1e-6, 1e-9), SpectralBranch::None);
    }
}
