//! Encoder/decoder games over linear maps.
//!
//! Both games play an encoder `F` (`d_z x d_x`) against a decoder `G`
//! (`d_x x d_z`). With `Z_j = F X_j` and the closed-loop representation
//! `Zhat_j = F G F X_j`:
//!
//! * MSP: `u_enc = Delta R(FX | Pi) + sum_j Delta R(Z_j, Zhat_j)`, `u_dec = -sum_j Delta R(Z_j, Zhat_j)`,
//!   encoder constrained by `||F X_j||_F^2 <= n_j`.
//! * SSP (`k = 1`): `u_enc = R(FX) + Delta R(FX, FGFX)`, `u_dec = -Delta R(FX, FGFX)`,
//!   encoder and decoder semi-orthogonal.
//!
//! Gradients are analytic, assembled from the coding-rate gradient by the
//! chain rule through `Z_j` and `Zhat_j`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::io::{self, Provenance};
use crate::linalg::{self, hcat_all, numerical_rank, singular_values};
use crate::projection::MspConstraintSet;
use crate::rate::{pair_and_grads, rate_and_grad, rate_value, Precision};

/// Relative singular-value cutoff of the pseudoinverse decoder.
pub const PINV_RTOL: f64 = 1e-12;
/// Relative `sigma_min / sigma_max` below which the polar factor is refused.
pub const POLAR_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameKind {
    Msp,
    Ssp,
}

impl std::fmt::Display for GameKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GameKind::Msp => "msp",
            GameKind::Ssp => "ssp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub kind: GameKind,
    pub d_x: usize,
    pub d_z: usize,
    pub precision: Precision,
}

impl GameSpec {
    pub fn new(kind: GameKind, d_x: usize, d_z: usize, precision: Precision) -> Result<Self> {
        if d_x == 0 || d_z == 0 {
            return Err(Error::InvalidConfig(format!("d_x and d_z must be positive, got {d_x}, {d_z}")));
        }
        Ok(Self { kind, d_x, d_z, precision })
    }

    /// Checks that the game can be played on `ds`.
    pub fn bind(&self, ds: &LabeledDataset) -> Result<()> {
        if ds.d_x() != self.d_x {
            return Err(Error::shape("game binding", format!("d_x = {}", self.d_x), format!("d_x = {}", ds.d_x())));
        }
        match self.kind {
            GameKind::Msp if ds.k() < 2 => Err(Error::AssumptionViolated {
                assumption: "multiple classes".into(),
                detail: format!("the MSP game needs k >= 2, dataset has k = {}", ds.k()),
            }),
            GameKind::Ssp if ds.k() != 1 => Err(Error::AssumptionViolated {
                assumption: "single subspace".into(),
                detail: format!("the SSP game needs k = 1, dataset has k = {}", ds.k()),
            }),
            _ => Ok(()),
        }
    }
}

/// Encoder matrix `F` (`d_z x d_x`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder(DMatrix<f64>);

/// Decoder matrix `G` (`d_x x d_z`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDecoder(DMatrix<f64>);

macro_rules! linear_map {
    ($t:ident, $what:literal) => {
        impl $t {
            pub fn new(m: DMatrix<f64>) -> Result<Self> {
                if !linalg::all_finite(&m) {
                    return Err(Error::InvalidInput(concat!($what, " has non-finite entries").into()));
                }
                Ok(Self(m))
            }

            pub fn matrix(&self) -> &DMatrix<f64> {
                &self.0
            }

            pub fn into_inner(self) -> DMatrix<f64> {
                self.0
            }
        }
    };
}

linear_map!(LinearEncoder, "encoder");
linear_map!(LinearDecoder, "decoder");

fn check_shapes(spec: &GameSpec, f: &DMatrix<f64>, g: &DMatrix<f64>, ds: &LabeledDataset) -> Result<()> {
    if ds.d_x() != spec.d_x {
        return Err(Error::shape("dataset", format!("d_x = {}", spec.d_x), format!("d_x = {}", ds.d_x())));
    }
    if f.shape() != (spec.d_z, spec.d_x) {
        return Err(Error::shape("encoder", format!("{}x{}", spec.d_z, spec.d_x), format!("{}x{}", f.nrows(), f.ncols())));
    }
    if g.shape() != (spec.d_x, spec.d_z) {
        return Err(Error::shape("decoder", format!("{}x{}", spec.d_x, spec.d_z), format!("{}x{}", g.nrows(), g.ncols())));
    }
    Ok(())
}

/// Encoder utility and (optionally) its gradient in `F`, on raw class blocks.
pub(crate) fn encoder_objective(
    kind: GameKind,
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    blocks: &[DMatrix<f64>],
    eps_sq: f64,
    want_grad: bool,
) -> (f64, Option<DMatrix<f64>>) {
    let zs: Vec<DMatrix<f64>> = blocks.iter().map(|x| f * x).collect();
    let z = hcat_all(&zs);
    let n = z.ncols() as f64;
    let mut grad = want_grad.then(|| DMatrix::zeros(f.nrows(), f.ncols()));

    let (r_all, g_all) = rate_and_grad(&z, eps_sq);
    let mut value = r_all;
    if let Some(gr) = grad.as_mut() {
        let mut at = 0;
        for x in blocks {
            *gr += g_all.columns(at, x.ncols()) * x.transpose();
            at += x.ncols();
        }
    }

    let fg = f * g;
    for (x, z_j) in blocks.iter().zip(&zs) {
        if kind == GameKind::Msp {
            let w = x.ncols() as f64 / n;
            if let Some(gr) = grad.as_mut() {
                let (r_j, g_j) = rate_and_grad(z_j, eps_sq);
                value -= w * r_j;
                *gr -= g_j * x.transpose() * w;
            } else {
                value -= w * rate_value(z_j, eps_sq);
            }
        }
        let h = g * z_j;
        let zh = f * &h;
        let (pair, d_z, d_zh) = pair_and_grads(z_j, &zh, eps_sq);
        value += pair;
        if let Some(gr) = grad.as_mut() {
            // zh = F G F X: d/dF = d_zh (G F X)^T + (F G)^T d_zh X^T
            *gr += (d_z + fg.transpose() * &d_zh) * x.transpose() + d_zh * h.transpose();
        }
    }
    (value, grad)
}

/// Decoder utility and (optionally) its gradient in `G`, given the encoded blocks `Z_j = F X_j`.
pub(crate) fn decoder_objective(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    encoded: &[DMatrix<f64>],
    eps_sq: f64,
    want_grad: bool,
) -> (f64, Option<DMatrix<f64>>) {
    let mut value = 0.0;
    let mut grad = want_grad.then(|| DMatrix::zeros(g.nrows(), g.ncols()));
    let fg = f * g;
    for z_j in encoded {
        let zh = &fg * z_j;
        let (pair, _, d_zh) = pair_and_grads(z_j, &zh, eps_sq);
        value -= pair;
        if let Some(gr) = grad.as_mut() {
            // zh = F G Z: d/dG = F^T d_zh Z^T
            *gr -= f.transpose() * (d_zh * z_j.transpose());
        }
    }
    (value, grad)
}

pub(crate) fn encode_blocks(f: &DMatrix<f64>, blocks: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    blocks.iter().map(|x| f * x).collect()
}

pub fn encoder_utility(spec: &GameSpec, enc: &LinearEncoder, dec: &LinearDecoder, ds: &LabeledDataset) -> Result<f64> {
    check_shapes(spec, enc.matrix(), dec.matrix(), ds)?;
    let blocks = ds.class_blocks();
    Ok(encoder_objective(spec.kind, enc.matrix(), dec.matrix(), &blocks, spec.precision.eps_sq(), false).0)
}

pub fn decoder_utility(spec: &GameSpec, enc: &LinearEncoder, dec: &LinearDecoder, ds: &LabeledDataset) -> Result<f64> {
    check_shapes(spec, enc.matrix(), dec.matrix(), ds)?;
    let encoded = encode_blocks(enc.matrix(), &ds.class_blocks());
    Ok(decoder_objective(enc.matrix(), dec.matrix(), &encoded, spec.precision.eps_sq(), false).0)
}

/// Gradient of [`encoder_utility`] with respect to `F`.
pub fn encoder_gradient(spec: &GameSpec, enc: &LinearEncoder, dec: &LinearDecoder, ds: &LabeledDataset) -> Result<DMatrix<f64>> {
    check_shapes(spec, enc.matrix(), dec.matrix(), ds)?;
    let blocks = ds.class_blocks();
    let (_, g) = encoder_objective(spec.kind, enc.matrix(), dec.matrix(), &blocks, spec.precision.eps_sq(), true);
    Ok(g.expect("gradient requested"))
}

/// Gradient of [`decoder_utility`] with respect to `G`.
pub fn decoder_gradient(spec: &GameSpec, enc: &LinearEncoder, dec: &LinearDecoder, ds: &LabeledDataset) -> Result<DMatrix<f64>> {
    check_shapes(spec, enc.matrix(), dec.matrix(), ds)?;
    let encoded = encode_blocks(enc.matrix(), &ds.class_blocks());
    let (_, g) = decoder_objective(enc.matrix(), dec.matrix(), &encoded, spec.precision.eps_sq(), true);
    Ok(g.expect("gradient requested"))
}

pub fn pseudoinverse_decoder(enc: &LinearEncoder) -> LinearDecoder {
    LinearDecoder(linalg::pseudoinverse(enc.matrix(), PINV_RTOL))
}

pub fn project_encoder_msp(enc: &LinearEncoder, ds: &LabeledDataset) -> Result<LinearEncoder> {
    if enc.matrix().ncols() != ds.d_x() {
        return Err(Error::shape("encoder", format!("{} columns", ds.d_x()), format!("{} columns", enc.matrix().ncols())));
    }
    Ok(LinearEncoder(MspConstraintSet::from_dataset(ds).project(enc.matrix())?))
}

/// Nearest semi-orthogonal matrix (polar factor).
pub fn project_encoder_ssp(enc: &LinearEncoder) -> Result<LinearEncoder> {
    Ok(LinearEncoder(linalg::polar_factor(enc.matrix(), POLAR_RTOL)?))
}

/// Deviation from semi-orthogonality on the thinner side: `||F^T F - I||` or `||F F^T - I||`.
pub fn semi_orthogonality_error(m: &DMatrix<f64>) -> f64 {
    let (r, c) = m.shape();
    if r >= c {
        (m.tr_mul(m) - DMatrix::identity(c, c)).norm()
    } else {
        (m * m.transpose() - DMatrix::identity(r, r)).norm()
    }
}

/// Which MSP assumptions a dataset satisfies for a given `d_z` and precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub multiple_classes: bool,
    pub informative_data: bool,
    pub large_enough_representation: bool,
    pub incoherent_classes: bool,
    pub high_precision: bool,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.multiple_classes && self.informative_data && self.large_enough_representation && self.incoherent_classes && self.high_precision
    }
}

const ASSUMPTION_RANK_TOL: f64 = 1e-8;

pub fn check_msp_assumptions(ds: &LabeledDataset, d_z: usize, p: Precision) -> AssumptionReport {
    let dims = ds.subspace_dims();
    let total: usize = dims.iter().sum();
    let n = ds.n() as f64;

    let informative_data = (0..ds.k()).all(|j| {
        let x_j = ds.class_block(j);
        if numerical_rank(&singular_values(&x_j), ASSUMPTION_RANK_TOL) != dims[j] {
            return false;
        }
        // span(X_j) must contain the ground-truth basis
        let q = linalg::column_span_basis(&x_j, ASSUMPTION_RANK_TOL);
        let b = &ds.bases[j];
        (b - &q * (q.transpose() * b)).norm() <= 1e-8 * b.norm()
    });

    let stacked = hcat_all(&ds.bases);
    let incoherent_classes = numerical_rank(&singular_values(&stacked), ASSUMPTION_RANK_TOL) == total;

    let eps4 = p.eps_sq() * p.eps_sq();
    let high_precision = ds
        .partition
        .class_counts()
        .iter()
        .zip(dims)
        .all(|(&n_j, &d)| eps4 <= n_j as f64 / n * (d_z as f64 / d as f64).powi(2));

    AssumptionReport {
        multiple_classes: ds.k() >= 2,
        informative_data,
        large_enough_representation: total <= ds.d_x().min(d_z),
        incoherent_classes,
        high_precision,
    }
}

/// Analytic MSP equilibrium: class `j` is mapped onto its own block of
/// `d_S_j` coordinates of `R^{d_z}` with every squared singular value of
/// `F X_j` equal to `n_j / d_S_j`; the decoder is the pseudoinverse.
pub fn oracle_msp_encoder(ds: &LabeledDataset, d_z: usize, _p: Precision) -> Result<(LinearEncoder, LinearDecoder)> {
    let dims = ds.subspace_dims();
    let total: usize = dims.iter().sum();
    let room = ds.d_x().min(d_z);
    if total > room {
        return Err(Error::AssumptionViolated {
            assumption: "large enough representation space".into(),
            detail: format!("sum of subspace dimensions {total} exceeds min(d_x, d_z) = {room}"),
        });
    }

    let mut lefts = Vec::with_capacity(ds.k());
    let mut target = DMatrix::zeros(d_z, total);
    let mut offset = 0;
    for (j, &d) in dims.iter().enumerate() {
        let x_j = ds.class_block(j);
        let svd = linalg::svd(&x_j);
        let s = &svd.singular_values;
        if s.len() < d || !(s[d - 1] > ASSUMPTION_RANK_TOL * s[0]) {
            return Err(Error::AssumptionViolated {
                assumption: "informative data".into(),
                detail: format!("class {j} has fewer than {d} significant singular values"),
            });
        }
        let scale = (x_j.ncols() as f64 / d as f64).sqrt();
        for p in 0..d {
            target[(offset + p, offset + p)] = scale / s[p];
        }
        lefts.push(svd.u.columns(0, d).into_owned());
        offset += d;
    }

    let u = hcat_all(&lefts);
    let su = singular_values(&u);
    if numerical_rank(&su, ASSUMPTION_RANK_TOL) < total {
        return Err(Error::AssumptionViolated {
            assumption: "incoherent class data".into(),
            detail: "class subspaces are not linearly independent".into(),
        });
    }
    let f = target * linalg::pseudoinverse(&u, PINV_RTOL);
    let enc = LinearEncoder(f);
    let dec = pseudoinverse_decoder(&enc);
    Ok((enc, dec))
}

/// Semi-orthogonal SSP encoder whose row space contains the data span
/// (an isometry on it). Needs `d_S <= d_z <= d_x`.
pub fn oracle_ssp_encoder(ds: &LabeledDataset, d_z: usize) -> Result<(LinearEncoder, LinearDecoder)> {
    let span = linalg::column_span_basis(&ds.x, ASSUMPTION_RANK_TOL);
    let r = span.ncols();
    if r > d_z || d_z > ds.d_x() {
        return Err(Error::AssumptionViolated {
            assumption: "large enough representation space".into(),
            detail: format!("need rank {r} <= d_z = {d_z} <= d_x = {}", ds.d_x()),
        });
    }
    // complete the span basis with coordinate directions
    let mut cols = span.clone();
    let mut e = 0;
    while cols.ncols() < d_z {
        let mut v = nalgebra::DVector::zeros(ds.d_x());
        v[e] = 1.0;
        e += 1;
        let resid = &v - &cols * (cols.transpose() * &v);
        let norm = resid.norm();
        if norm > 1e-6 {
            let at = cols.ncols();
            cols = cols.insert_column(at, 0.0);
            let c = cols.ncols() - 1;
            cols.column_mut(c).copy_from(&(resid / norm));
        }
    }
    let f = cols.transpose();
    let g = f.transpose();
    Ok((LinearEncoder(f), LinearDecoder(g)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapRole {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapSidecar {
    schema: String,
    role: MapRole,
    game: GameKind,
    rows: usize,
    cols: usize,
    d_x: usize,
    d_z: usize,
    eps_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

fn save_map(path: &Path, role: MapRole, m: &DMatrix<f64>, spec: &GameSpec, provenance: Option<&Provenance>) -> Result<()> {
    io::write_matrix_rows(path, m, provenance)?;
    let side = MapSidecar {
        schema: SCHEMA_VERSION.into(),
        role,
        game: spec.kind,
        rows: m.nrows(),
        cols: m.ncols(),
        d_x: spec.d_x,
        d_z: spec.d_z,
        eps_sq: spec.precision.eps_sq(),
        provenance: provenance.cloned(),
    };
    io::write_json(crate::data::sidecar_path(path), &side)
}

fn load_map(path: &Path, role: MapRole) -> Result<(DMatrix<f64>, GameSpec)> {
    let side_path = crate::data::sidecar_path(path);
    let side: MapSidecar = io::read_json(&side_path)?;
    let at = |field: &str, message: String| Error::parse(&side_path, 0, Some(field), message);
    if side.schema != SCHEMA_VERSION {
        return Err(at("schema", format!("unsupported schema {:?}", side.schema)));
    }
    if side.role != role {
        return Err(at("role", format!("expected {role:?}, found {:?}", side.role)));
    }
    let m = io::read_matrix_rows(path)?;
    if m.shape() != (side.rows, side.cols) {
        return Err(Error::parse(
            path,
            0,
            None,
            format!("matrix is {}x{} but sidecar says {}x{}", m.nrows(), m.ncols(), side.rows, side.cols),
        ));
    }
    let precision = Precision::new(side.eps_sq).map_err(|e| at("eps_sq", e.to_string()))?;
    let spec = GameSpec::new(side.game, side.d_x, side.d_z, precision)?;
    Ok((m, spec))
}

pub fn save_encoder<P: AsRef<Path>>(path: P, enc: &LinearEncoder, spec: &GameSpec, provenance: Option<&Provenance>) -> Result<()> {
    save_map(path.as_ref(), MapRole::Encoder, enc.matrix(), spec, provenance)
}

pub fn save_decoder<P: AsRef<Path>>(path: P, dec: &LinearDecoder, spec: &GameSpec, provenance: Option<&Provenance>) -> Result<()> {
    save_map(path.as_ref(), MapRole::Decoder, dec.matrix(), spec, provenance)
}

pub fn load_encoder<P: AsRef<Path>>(path: P) -> Result<(LinearEncoder, GameSpec)> {
    let (m, spec) = load_map(path.as_ref(), MapRole::Encoder)?;
    Ok((LinearEncoder::new(m)?, spec))
}

pub fn load_decoder<P: AsRef<Path>>(path: P) -> Result<(LinearDecoder, GameSpec)> {
    let (m, spec) = load_map(path.as_ref(), MapRole::Decoder)?;
    Ok((LinearDecoder::new(m)?, spec))
}
