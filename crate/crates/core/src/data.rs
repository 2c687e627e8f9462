//! Synthetic union-of-subspaces data.
//!
//! Generation recipe, for classes `j = 0..k`:
//!
//! 1. `Q` (`d_x x max_j d_S_j`) with orthonormal columns, the Q factor of a
//!    standard Gaussian matrix.
//! 2. `Q_j`: `d_S_j` columns of `Q` chosen uniformly without replacement.
//! 3. `Theta_j` (`d_x x d_x`), `xi_j` (`d_S_j x n_j`), `tau_j` (`d_x x n_j`)
//!    with i.i.d. standard normal entries.
//! 4. `B_j` = column-normalised `(I + nu Theta_j) Q_j`.
//! 5. `X_j = B_j xi_j + sqrt(sigma^2 / d_x) tau_j`.
//!
//! # Random streams
//!
//! Every matrix draws from its own ChaCha8 stream seeded with the config
//! seed: stream 0 is `Q`; class `j` uses stream `1 + 4j` for the column
//! selection, `2 + 4j` for `Theta_j`, `3 + 4j` for `xi_j` and `4 + 4j` for
//! `tau_j`. Gaussian matrices are filled in column-major order.
//!
//! # File format (schema `v1`)
//!
//! `<name>.csv` holds `X` transposed: header `x0..x{d_x-1}`, then one row per
//! sample in class order. `<name>.json` is the sidecar with `schema`, `d_x`,
//! `n`, `k`, `labels`, `class_counts`, `bases` (per class, a list of basis
//! columns) and the generating `config`.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, Provenance};
use crate::linalg::column_span_basis;
use crate::rate::ClassPartition;

pub const SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub n_per_class: Vec<usize>,
    pub d_x: usize,
    pub subspace_dims: Vec<usize>,
    pub nu: f64,
    pub sigma_sq: f64,
    pub seed: u64,
}

impl GenerationConfig {
    /// Three-class baseline: `n_j = 500`, `d_x = 50`, `d_S = [3, 4, 5]`.
    pub fn baseline(nu: f64, sigma_sq: f64, seed: u64) -> Self {
        Self {
            n_per_class: vec![500, 500, 500],
            d_x: 50,
            subspace_dims: vec![3, 4, 5],
            nu,
            sigma_sq,
            seed,
        }
    }

    /// Single-subspace baseline: `n = 500`, `d_x = 50`, `d_S = 10`, `nu = 0`.
    pub fn single_subspace_baseline(seed: u64) -> Self {
        Self {
            n_per_class: vec![500],
            d_x: 50,
            subspace_dims: vec![10],
            nu: 0.0,
            sigma_sq: 0.0,
            seed,
        }
    }

    pub fn k(&self) -> usize {
        self.n_per_class.len()
    }

    pub fn n(&self) -> usize {
        self.n_per_class.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_per_class.is_empty() {
            return bad("at least one class is required".into());
        }
        if self.n_per_class.len() != self.subspace_dims.len() {
            return bad(format!(
                "n_per_class has {} entries but subspace_dims has {}",
                self.n_per_class.len(),
                self.subspace_dims.len()
            ));
        }
        if self.d_x == 0 {
            return bad("d_x must be positive".into());
        }
        if let Some(j) = self.n_per_class.iter().position(|&n| n == 0) {
            return bad(format!("class {j} has n_j = 0"));
        }
        if let Some(j) = self.subspace_dims.iter().position(|&d| d == 0) {
            return bad(format!("class {j} has subspace dimension 0"));
        }
        if let Some((j, d)) = self.subspace_dims.iter().enumerate().find(|(_, &d)| d > self.d_x) {
            return bad(format!("class {j} has subspace dimension {d} > d_x = {}", self.d_x));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return bad(format!("nu must be finite and nonnegative, got {}", self.nu));
        }
        if !(self.sigma_sq.is_finite() && self.sigma_sq >= 0.0) {
            return bad(format!("sigma_sq must be finite and nonnegative, got {}", self.sigma_sq));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    /// `d_x x n`, columns sorted by class.
    pub x: DMatrix<f64>,
    pub partition: ClassPartition,
    /// Unit-norm ground-truth bases, one `d_x x d_S_j` matrix per class.
    pub bases: Vec<DMatrix<f64>>,
    pub config: GenerationConfig,
}

impl LabeledDataset {
    /// Wraps an arbitrary data matrix. Ground-truth bases are taken to be the
    /// column spans of the class blocks, and the recorded configuration
    /// reflects the class counts and span dimensions.
    pub fn from_matrix(x: DMatrix<f64>, partition: ClassPartition) -> Result<Self> {
        partition.check(&x)?;
        let bases: Vec<DMatrix<f64>> = (0..partition.k())
            .map(|j| column_span_basis(&x.select_columns(partition.members(j)), 1e-10))
            .collect();
        let config = GenerationConfig {
            n_per_class: partition.class_counts(),
            d_x: x.nrows(),
            subspace_dims: bases.iter().map(|b| b.ncols()).collect(),
            nu: 0.0,
            sigma_sq: 0.0,
            seed: 0,
        };
        Ok(Self { x, partition, bases, config })
    }

    pub fn d_x(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.partition.k()
    }

    pub fn subspace_dims(&self) -> &[usize] {
        &self.config.subspace_dims
    }

    pub fn class_block(&self, j: usize) -> DMatrix<f64> {
        self.x.select_columns(self.partition.members(j))
    }

    pub fn class_blocks(&self) -> Vec<DMatrix<f64>> {
        (0..self.k()).map(|j| self.class_block(j)).collect()
    }
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_vec(rows, cols, data)
}

pub fn generate(cfg: &GenerationConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let d_x = cfg.d_x;
    let d_max = *cfg.subspace_dims.iter().max().expect("validated non-empty");

    let g = gaussian_matrix(d_x, d_max, &mut stream_rng(cfg.seed, 0));
    let q = g.qr().q();

    let noise_scale = (cfg.sigma_sq / d_x as f64).sqrt();
    let mut blocks = Vec::with_capacity(cfg.k());
    let mut bases = Vec::with_capacity(cfg.k());
    for (j, (&n_j, &d_s)) in cfg.n_per_class.iter().zip(&cfg.subspace_dims).enumerate() {
        let base = 1 + 4 * j as u64;
        let picked = index::sample(&mut stream_rng(cfg.seed, base), d_max, d_s).into_vec();
        let q_j = q.select_columns(&picked);
        let theta = gaussian_matrix(d_x, d_x, &mut stream_rng(cfg.seed, base + 1));
        let xi = gaussian_matrix(d_s, n_j, &mut stream_rng(cfg.seed, base + 2));
        let tau = gaussian_matrix(d_x, n_j, &mut stream_rng(cfg.seed, base + 3));

        let mut basis = &q_j + theta * &q_j * cfg.nu;
        for mut c in basis.column_iter_mut() {
            let norm = c.norm();
            c /= norm;
        }
        let x_j = &basis * xi + tau * noise_scale;
        blocks.push(x_j);
        bases.push(basis);
    }

    let x = crate::linalg::hcat_all(&blocks);
    let partition = ClassPartition::contiguous(&cfg.n_per_class)?;
    Ok(LabeledDataset { x, partition, bases, config: cfg.clone() })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetSidecar {
    schema: String,
    d_x: usize,
    n: usize,
    k: usize,
    labels: Vec<usize>,
    class_counts: Vec<usize>,
    bases: Vec<Vec<Vec<f64>>>,
    config: GenerationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

/// Path of the JSON sidecar that accompanies a CSV data file.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn save_dataset<P: AsRef<Path>>(ds: &LabeledDataset, path: P) -> Result<()> {
    save_dataset_tagged(ds, path, None)
}

pub fn save_dataset_tagged<P: AsRef<Path>>(ds: &LabeledDataset, path: P, provenance: Option<&Provenance>) -> Result<()> {
    let path = path.as_ref();
    let header: Vec<String> = (0..ds.d_x()).map(|i| format!("x{i}")).collect();
    let rows = ds.x.column_iter().map(|c| c.iter().map(|&v| io::format_f64(v)).collect());
    io::write_csv(path, provenance, &header, rows)?;

    let sidecar = DatasetSidecar {
        schema: SCHEMA_VERSION.into(),
        d_x: ds.d_x(),
        n: ds.n(),
        k: ds.k(),
        labels: ds.partition.labels().to_vec(),
        class_counts: ds.partition.class_counts(),
        bases: ds
            .bases
            .iter()
            .map(|b| b.column_iter().map(|c| c.iter().copied().collect()).collect())
            .collect(),
        config: ds.config.clone(),
        provenance: provenance.cloned(),
    };
    io::write_json(sidecar_path(path), &sidecar)
}

pub fn load_dataset<P: AsRef<Path>>(path: P) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let side_path = sidecar_path(path);
    let side: DatasetSidecar = io::read_json(&side_path)?;
    let at = |field: &str, message: String| Error::parse(&side_path, 0, Some(field), message);
    if side.schema != SCHEMA_VERSION {
        return Err(at("schema", format!("unsupported schema {:?}", side.schema)));
    }
    if side.labels.len() != side.n {
        return Err(at("labels", format!("{} labels for n = {}", side.labels.len(), side.n)));
    }

    let csv = io::read_numeric_csv(path)?;
    if csv.header.len() != side.d_x {
        return Err(Error::parse(path, 1, None, format!("header has {} columns, sidecar d_x = {}", csv.header.len(), side.d_x)));
    }
    if csv.rows.len() != side.n {
        return Err(Error::parse(
            path,
            0,
            None,
            format!("file has {} sample rows, sidecar n = {}", csv.rows.len(), side.n),
        ));
    }
    let x = DMatrix::from_fn(side.d_x, side.n, |i, j| csv.rows[j][i]);
    let partition = ClassPartition::with_classes(side.labels, side.k).map_err(|e| at("labels", e.to_string()))?;
    if partition.class_counts() != side.class_counts {
        return Err(at("class_counts", "class_counts disagree with labels".into()));
    }
    if side.bases.len() != side.k {
        return Err(at("bases", format!("{} bases for k = {}", side.bases.len(), side.k)));
    }
    let mut bases = Vec::with_capacity(side.k);
    for (j, cols) in side.bases.iter().enumerate() {
        if cols.iter().any(|c| c.len() != side.d_x) {
            return Err(at("bases", format!("basis {j} has a column whose length is not d_x")));
        }
        let data: Vec<f64> = cols.iter().flatten().copied().collect();
        bases.push(DMatrix::from_vec(side.d_x, cols.len(), data));
    }
    side.config.validate()?;
    Ok(LabeledDataset { x, partition, bases, config: side.config })
}
