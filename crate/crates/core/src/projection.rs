//! Euclidean projection of an encoder onto `{F : ||F X_j||_F^2 <= n_j for all j}`.
//!
//! Each constraint is `tr(F M_j F^T) <= n_j` with `M_j = X_j X_j^T`. The
//! projection onto one such set is `F (I + lambda M_j)^{-1}` where
//! `lambda >= 0` is the root of the (decreasing) constraint function; it is
//! evaluated in the eigenbasis of `M_j` and located by bisection. The
//! intersection is handled with Dykstra's alternating projections.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Relative residual accepted on the active constraint of a single-set projection.
pub const SINGLE_SET_TOL: f64 = 1e-10;
/// Relative violation accepted on the Dykstra output.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Safety cap on Dykstra sweeps. Nearly coincident active constraints (small, full-rank
/// class blocks) can need a few thousand sweeps; well-separated classes need a handful.
pub const MAX_SWEEPS: usize = 10_000;

/// One quadratic constraint `tr(F M F^T) <= bound`, stored as the eigenpairs of `M`.
#[derive(Debug, Clone)]
pub struct QuadraticConstraint {
    eigvecs: DMatrix<f64>,
    eigvals: Vec<f64>,
    bound: f64,
}

impl QuadraticConstraint {
    /// Constraint `||F X_j||_F^2 <= bound`.
    pub fn from_block(x_j: &DMatrix<f64>, bound: f64) -> Self {
        let m = x_j * x_j.transpose();
        let eig = SymmetricEigen::new(m);
        Self {
            eigvecs: eig.eigenvectors,
            eigvals: eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect(),
            bound,
        }
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn column_energy(&self, fv: &DMatrix<f64>) -> Vec<f64> {
        fv.column_iter().map(|c| c.norm_squared()).collect()
    }

    fn constraint_at(&self, energy: &[f64], lambda: f64) -> f64 {
        self.eigvals
            .iter()
            .zip(energy)
            .map(|(&mu, &c)| mu * c / (1.0 + lambda * mu).powi(2))
            .sum()
    }

    /// `tr(F M F^T)`.
    pub fn value(&self, f: &DMatrix<f64>) -> f64 {
        let fv = f * &self.eigvecs;
        self.constraint_at(&self.column_energy(&fv), 0.0)
    }

    /// Relative violation `max(0, (value - bound) / bound)`.
    pub fn violation(&self, f: &DMatrix<f64>) -> f64 {
        ((self.value(f) - self.bound) / self.bound).max(0.0)
    }

    /// Projection onto this single set.
    pub fn project(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let fv = f * &self.eigvecs;
        let energy = self.column_energy(&fv);
        if self.constraint_at(&energy, 0.0) <= self.bound {
            return f.clone();
        }
        let mut hi = 1.0;
        while self.constraint_at(&energy, hi) > self.bound {
            hi *= 2.0;
            if !hi.is_finite() {
                break;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let h_hi = self.constraint_at(&energy, hi);
            if self.bound - h_hi <= SINGLE_SET_TOL * self.bound {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.constraint_at(&energy, mid) > self.bound {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut scaled = fv;
        for (mut c, &mu) in scaled.column_iter_mut().zip(&self.eigvals) {
            c /= 1.0 + hi * mu;
        }
        scaled * self.eigvecs.transpose()
    }
}

/// The MSP encoder constraint set, one constraint per class.
#[derive(Debug, Clone)]
pub struct MspConstraintSet {
    sets: Vec<QuadraticConstraint>,
}

impl MspConstraintSet {
    pub fn from_dataset(ds: &LabeledDataset) -> Self {
        let sets = ds
            .class_blocks()
            .iter()
            .map(|x_j| QuadraticConstraint::from_block(x_j, x_j.ncols() as f64))
            .collect();
        Self { sets }
    }

    pub fn constraints(&self) -> &[QuadraticConstraint] {
        &self.sets
    }

    pub fn worst_violation(&self, f: &DMatrix<f64>) -> f64 {
        self.sets.iter().map(|s| s.violation(f)).fold(0.0, f64::max)
    }

    pub fn project(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.sets.len() == 1 {
            return Ok(self.sets[0].project(f));
        }
        let mut x = f.clone();
        let mut increments = vec![DMatrix::<f64>::zeros(f.nrows(), f.ncols()); self.sets.len()];
        for _ in 0..MAX_SWEEPS {
            let before = x.clone();
            for (set, inc) in self.sets.iter().zip(increments.iter_mut()) {
                let y = &x + &*inc;
                let p = set.project(&y);
                *inc = y - &p;
                x = p;
            }
            let moved = (&x - &before).norm();
            if self.worst_violation(&x) <= SINGLE_SET_TOL && moved <= 1e-10 * x.norm().max(1e-300) {
                return Ok(x);
            }
        }
        let worst = self.worst_violation(&x);
        if worst <= FEASIBILITY_TOL {
            Ok(x)
        } else {
            Err(Error::ProjectionDidNotConverge { sweeps: MAX_SWEEPS, worst_violation: worst })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_second_moment_gives_radial_scaling() {
        let set = QuadraticConstraint::from_block(&DMatrix::identity(2, 2), 1.0);
        let f = DMatrix::identity(2, 2) * 2.0;
        let p = set.project(&f);
        let expected = DMatrix::identity(2, 2) * (1.0 / 2f64.sqrt());
        assert!((p - expected).norm() < 1e-8);
    }

    #[test]
    fn feasible_point_is_untouched() {
        let x = DMatrix::from_fn(3, 4, |i, j| (i + 2 * j) as f64 * 0.1);
        let set = QuadraticConstraint::from_block(&x, 100.0);
        let f = DMatrix::from_fn(2, 3, |i, j| 0.1 * (i as f64 - j as f64));
        assert_eq!(set.project(&f), f);
    }

    #[test]
    fn kkt_form_of_single_projection() {
        // F - P = lambda P M for some lambda >= 0
        let x = DMatrix::from_fn(3, 5, |i, j| ((i * 5 + j) as f64 * 0.7).cos());
        let set = QuadraticConstraint::from_block(&x, 0.5);
        let f = DMatrix::from_fn(2, 3, |i, j| 1.0 + (i + j) as f64);
        let p = set.project(&f);
        assert!((set.value(&p) - 0.5).abs() < 1e-9);
        let m = &x * x.transpose();
        let lhs = &f - &p;
        let pm = &p * &m;
        let lambda = lhs.dot(&pm) / pm.norm_squared();
        assert!(lambda > 0.0);
        assert!((lhs - pm * lambda).norm() < 1e-8 * f.norm());
    }
}
