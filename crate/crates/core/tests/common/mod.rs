#![allow(dead_code)]

use ctrl_core::data::LabeledDataset;
use ctrl_core::rate::{ClassPartition, Precision};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn precision(rng: &mut impl Rng) -> Precision {
    Precision::new(rng.random_range(0.25..2.0)).unwrap()
}

/// Central differences of a scalar function of a matrix.
pub fn finite_difference(at: &DMatrix<f64>, h: f64, f: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(at.nrows(), at.ncols());
    let mut probe = at.clone();
    for i in 0..at.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        out[i] = (up - down) / (2.0 * h);
    }
    out
}

pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm()).max(1e-12);
    (a - b).norm() / scale
}

/// A random labelled dataset with `k` classes and at least one column per class.
pub fn random_dataset(d_x: usize, counts: &[usize], rng: &mut impl Rng) -> LabeledDataset {
    let n: usize = counts.iter().sum();
    let x = gaussian(d_x, n, rng);
    LabeledDataset::from_matrix(x, ClassPartition::contiguous(counts).unwrap()).unwrap()
}

/// Class blocks spanning mutually orthogonal coordinate subspaces.
pub fn cross_orthogonal(d: usize, dims: &[usize], counts: &[usize], rng: &mut impl Rng) -> (DMatrix<f64>, ClassPartition) {
    assert!(dims.iter().sum::<usize>() <= d);
    let n: usize = counts.iter().sum();
    let mut z = DMatrix::zeros(d, n);
    let (mut row, mut col) = (0, 0);
    for (&dim, &cnt) in dims.iter().zip(counts) {
        let block = gaussian(dim, cnt, rng);
        z.view_mut((row, col), (dim, cnt)).copy_from(&block);
        row += dim;
        col += cnt;
    }
    // mix with a random rotation so blocks are not axis aligned
    let q = gaussian(d, d, rng).qr().q();
    (q * z, ClassPartition::contiguous(counts).unwrap())
}
