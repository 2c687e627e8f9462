//! Stochastic projected GDMax.
//!
//! Each outer iteration takes one encoder ascent step on a class-stratified
//! minibatch, projects the encoder back onto its constraint set, then runs
//! the decoder's inner ascent on the same minibatch. One epoch is
//! `ceil(n / b)` outer iterations.
//!
//! Random streams (ChaCha8, seeded with `TrainConfig::seed`): stream 0 draws
//! the initial encoder, stream 1 the per-epoch class permutations.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{gaussian_matrix, stream_rng, LabeledDataset};
use crate::error::{Error, Result};
use crate::games::{
    decoder_objective, encode_blocks, encoder_objective, semi_orthogonality_error, GameKind, GameSpec, LinearDecoder,
    LinearEncoder, POLAR_RTOL,
};
use crate::io::{self, Provenance};
use crate::linalg::{polar_factor, pseudoinverse};
use crate::optim::{AdamParams, Optimizer, OptimizerKind};
use crate::projection::MspConstraintSet;

/// Inner solve stops once the decoder gradient norm drops below this.
pub const INNER_GRAD_TOL: f64 = 1e-8;

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

fn default_betas() -> [f64; 2] {
    [0.9, 0.999]
}

fn default_adam_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub outer_epochs: usize,
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    pub inner_iters: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_betas")]
    pub adam_betas: [f64; 2],
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
}

impl TrainConfig {
    /// Encoder lr `1e-2`, decoder lr `1e-3`, 1000 inner steps, batch 50, two epochs, Adam.
    pub fn baseline(seed: u64) -> Self {
        Self {
            outer_epochs: 2,
            lr_encoder: 1e-2,
            lr_decoder: 1e-3,
            inner_iters: 1000,
            batch_size: 50,
            seed,
            optimizer: OptimizerKind::Adam,
            adam_betas: default_betas(),
            adam_eps: default_adam_eps(),
        }
    }

    pub fn adam_params(&self) -> AdamParams {
        AdamParams { beta1: self.adam_betas[0], beta2: self.adam_betas[1], eps: self.adam_eps }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.outer_epochs == 0 {
            return bad("outer_epochs must be positive".into());
        }
        if self.inner_iters == 0 {
            return bad("inner_iters must be at least 1".into());
        }
        if self.batch_size == 0 || self.batch_size > n {
            return bad(format!("batch_size must be in 1..={n}, got {}", self.batch_size));
        }
        for (name, lr) in [("lr_encoder", self.lr_encoder), ("lr_decoder", self.lr_decoder), ("adam_eps", self.adam_eps)] {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if self.adam_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return bad(format!("adam_betas must lie in [0, 1), got {:?}", self.adam_betas));
        }
        Ok(())
    }
}

/// Per-outer-step record. Utilities and violation are full-batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub encoder_utility: f64,
    pub decoder_utility: f64,
    pub worst_violation: f64,
    pub encoder_grad_norm: f64,
    pub decoder_grad_norm: f64,
    pub inner_steps: usize,
    /// Wall-clock seconds since training started. Not part of the CSV.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: [&'static str; 8] = [
        "step",
        "epoch",
        "encoder_utility",
        "decoder_utility",
        "worst_violation",
        "encoder_grad_norm",
        "decoder_grad_norm",
        "inner_steps",
    ];

    /// One row per outer step; timings are excluded so the file is reproducible.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P, provenance: Option<&Provenance>) -> Result<()> {
        let header: Vec<String> = Self::CSV_HEADER.iter().map(|s| s.to_string()).collect();
        let rows = self.steps.iter().map(|r| {
            vec![
                r.step.to_string(),
                r.epoch.to_string(),
                io::format_f64(r.encoder_utility),
                io::format_f64(r.decoder_utility),
                io::format_f64(r.worst_violation),
                io::format_f64(r.encoder_grad_norm),
                io::format_f64(r.decoder_grad_norm),
                r.inner_steps.to_string(),
            ]
        });
        io::write_csv(path, provenance, &header, rows)
    }

    pub fn elapsed_secs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.elapsed_secs).collect()
    }
}

/// Projection of an ambient gradient onto the tangent space of the
/// semi-orthogonal matrices at `m`.
fn stiefel_tangent(m: &DMatrix<f64>, grad: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() >= m.ncols() {
        let s = m.tr_mul(grad);
        grad - m * ((&s + s.transpose()) * 0.5)
    } else {
        let s = grad * m.transpose();
        grad - ((&s + s.transpose()) * 0.5) * m
    }
}

enum Feasible {
    Msp(MspConstraintSet),
    Ssp,
}

impl Feasible {
    fn for_game(kind: GameKind, ds: &LabeledDataset) -> Self {
        match kind {
            GameKind::Msp => Feasible::Msp(MspConstraintSet::from_dataset(ds)),
            GameKind::Ssp => Feasible::Ssp,
        }
    }

    fn project(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Feasible::Msp(set) => set.project(f),
            Feasible::Ssp => polar_factor(f, POLAR_RTOL),
        }
    }

    fn violation(&self, f: &DMatrix<f64>) -> f64 {
        match self {
            Feasible::Msp(set) => set.worst_violation(f),
            Feasible::Ssp => semi_orthogonality_error(f),
        }
    }
}

/// Outcome of an inner decoder solve.
#[derive(Debug, Clone)]
pub struct InnerSolve {
    pub decoder: LinearDecoder,
    pub steps: usize,
    pub initial_utility: f64,
    pub final_utility: f64,
    pub final_grad_norm: f64,
}

struct DecoderLoop<'a> {
    kind: GameKind,
    eps_sq: f64,
    lr: f64,
    iters: usize,
    optimizer: &'a mut Optimizer,
}

impl DecoderLoop<'_> {
    /// Ascent on `u_dec` from `g0`; returns the best iterate seen, so the
    /// utility never ends below its starting value.
    fn run(&mut self, f: &DMatrix<f64>, g0: &DMatrix<f64>, blocks: &[DMatrix<f64>]) -> Result<InnerSolve> {
        let encoded = encode_blocks(f, blocks);
        let mut g = g0.clone();
        let (v0, grad) = decoder_objective(f, &g, &encoded, self.eps_sq, true);
        let mut grad = grad.expect("gradient requested");
        if !v0.is_finite() {
            return Err(diverged(0, f, g0));
        }
        let mut best = (v0, g.clone(), grad.norm());
        let mut steps = 0;
        let mut grad_norm = grad.norm();
        while steps < self.iters && grad_norm >= INNER_GRAD_TOL {
            let direction = match self.kind {
                GameKind::Msp => grad.clone(),
                GameKind::Ssp => stiefel_tangent(&g, &grad),
            };
            g += self.optimizer.update(&direction, self.lr);
            if self.kind == GameKind::Ssp {
                g = polar_factor(&g, POLAR_RTOL)?;
            }
            steps += 1;
            let (v, next) = decoder_objective(f, &g, &encoded, self.eps_sq, true);
            grad = next.expect("gradient requested");
            if !v.is_finite() || !grad.iter().all(|x| x.is_finite()) {
                return Err(diverged(0, f, &best.1));
            }
            grad_norm = match self.kind {
                GameKind::Msp => grad.norm(),
                GameKind::Ssp => stiefel_tangent(&g, &grad).norm(),
            };
            if v > best.0 {
                best = (v, g.clone(), grad_norm);
            }
        }
        Ok(InnerSolve {
            decoder: LinearDecoder::new(best.1)?,
            steps,
            initial_utility: v0,
            final_utility: best.0,
            final_grad_norm: best.2,
        })
    }
}

fn diverged(step: usize, f: &DMatrix<f64>, g: &DMatrix<f64>) -> Error {
    Error::Diverged { step, last_encoder: Box::new(f.clone()), last_decoder: Box::new(g.clone()) }
}

fn check_pair(spec: &GameSpec, enc: &LinearEncoder, dec: &LinearDecoder, ds: &LabeledDataset) -> Result<()> {
    if ds.d_x() != spec.d_x || enc.matrix().shape() != (spec.d_z, spec.d_x) || dec.matrix().shape() != (spec.d_x, spec.d_z) {
        return Err(Error::shape(
            "inner decoder solve",
            format!("F {}x{}, G {}x{}", spec.d_z, spec.d_x, spec.d_x, spec.d_z),
            format!(
                "F {}x{}, G {}x{}",
                enc.matrix().nrows(),
                enc.matrix().ncols(),
                dec.matrix().nrows(),
                dec.matrix().ncols()
            ),
        ));
    }
    Ok(())
}

/// Runs up to `cfg.inner_iters` decoder steps on the whole of `ds` with a fresh optimizer.
pub fn inner_decoder_solve_detailed(
    spec: &GameSpec,
    enc: &LinearEncoder,
    dec0: &LinearDecoder,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<InnerSolve> {
    check_pair(spec, enc, dec0, ds)?;
    let mut optimizer = Optimizer::new(cfg.optimizer, spec.d_x, spec.d_z, cfg.adam_params());
    DecoderLoop {
        kind: spec.kind,
        eps_sq: spec.precision.eps_sq(),
        lr: cfg.lr_decoder,
        iters: cfg.inner_iters,
        optimizer: &mut optimizer,
    }
    .run(enc.matrix(), dec0.matrix(), &ds.class_blocks())
}

pub fn inner_decoder_solve(
    spec: &GameSpec,
    enc: &LinearEncoder,
    dec0: &LinearDecoder,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<LinearDecoder> {
    Ok(inner_decoder_solve_detailed(spec, enc, dec0, ds, cfg)?.decoder)
}

/// Per-class minibatch sizes `ceil(b n_j / n)`, capped at `n_j`.
pub fn stratified_batch_sizes(class_counts: &[usize], batch_size: usize) -> Vec<usize> {
    let n: usize = class_counts.iter().sum();
    class_counts.iter().map(|&n_j| (batch_size * n_j).div_ceil(n).clamp(1, n_j)).collect()
}

pub fn outer_steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

pub fn initial_pair(spec: &GameSpec, ds: &LabeledDataset, seed: u64) -> Result<(LinearEncoder, LinearDecoder)> {
    let feasible = Feasible::for_game(spec.kind, ds);
    let f0 = gaussian_matrix(spec.d_z, spec.d_x, &mut stream_rng(seed, 0)) / (spec.d_x as f64).sqrt();
    let f = feasible.project(&f0)?;
    let g = pseudoinverse(&f, crate::games::PINV_RTOL);
    Ok((LinearEncoder::new(f)?, LinearDecoder::new(g)?))
}

pub fn gdmax_train(spec: &GameSpec, ds: &LabeledDataset, cfg: &TrainConfig) -> Result<(LinearEncoder, LinearDecoder, TrainHistory)> {
    spec.bind(ds)?;
    cfg.validate(ds.n())?;
    let start = Instant::now();
    let eps_sq = spec.precision.eps_sq();
    let feasible = Feasible::for_game(spec.kind, ds);
    let full_blocks = ds.class_blocks();
    let counts = ds.partition.class_counts();
    let per_class = stratified_batch_sizes(&counts, cfg.batch_size);
    let per_epoch = outer_steps_per_epoch(ds.n(), cfg.batch_size);

    let (enc0, dec0) = initial_pair(spec, ds, cfg.seed)?;
    let mut f = enc0.into_inner();
    let mut g = dec0.into_inner();
    let mut enc_opt = Optimizer::new(cfg.optimizer, spec.d_z, spec.d_x, cfg.adam_params());
    let mut dec_opt = Optimizer::new(cfg.optimizer, spec.d_x, spec.d_z, cfg.adam_params());
    let mut shuffle_rng = stream_rng(cfg.seed, 1);
    let mut history = TrainHistory::default();
    let mut order: Vec<Vec<usize>> = counts.iter().map(|&c| (0..c).collect()).collect();

    let mut step = 0;
    for epoch in 0..cfg.outer_epochs {
        for o in order.iter_mut() {
            o.shuffle(&mut shuffle_rng);
        }
        for t in 0..per_epoch {
            let batch: Vec<DMatrix<f64>> = full_blocks
                .iter()
                .zip(&order)
                .zip(&per_class)
                .map(|((x_j, perm), &m_j)| {
                    let idx: Vec<usize> = (0..m_j).map(|i| perm[(t * m_j + i) % perm.len()]).collect();
                    x_j.select_columns(&idx)
                })
                .collect();

            let (_, grad) = encoder_objective(spec.kind, &f, &g, &batch, eps_sq, true);
            let mut grad = grad.expect("gradient requested");
            if spec.kind == GameKind::Ssp {
                grad = stiefel_tangent(&f, &grad);
            }
            let enc_grad_norm = grad.norm();
            if !enc_grad_norm.is_finite() {
                return Err(diverged(step, &f, &g));
            }
            let stepped = &f + enc_opt.update(&grad, cfg.lr_encoder);
            let f_next = feasible.project(&stepped)?;

            let inner = DecoderLoop {
                kind: spec.kind,
                eps_sq,
                lr: cfg.lr_decoder,
                iters: cfg.inner_iters,
                optimizer: &mut dec_opt,
            }
            .run(&f_next, &g, &batch)
            .map_err(|e| match e {
                Error::Diverged { .. } => diverged(step, &f, &g),
                other => other,
            })?;
            let g_next = inner.decoder.into_inner();

            let (u_enc, _) = encoder_objective(spec.kind, &f_next, &g_next, &full_blocks, eps_sq, false);
            let (u_dec, _) = decoder_objective(&f_next, &g_next, &encode_blocks(&f_next, &full_blocks), eps_sq, false);
            if !u_enc.is_finite() || !u_dec.is_finite() {
                return Err(diverged(step, &f, &g));
            }
            f = f_next;
            g = g_next;
            history.steps.push(StepRecord {
                step,
                epoch,
                encoder_utility: u_enc,
                decoder_utility: u_dec,
                worst_violation: feasible.violation(&f),
                encoder_grad_norm: enc_grad_norm,
                decoder_grad_norm: inner.final_grad_norm,
                inner_steps: inner.steps,
                elapsed_secs: start.elapsed().as_secs_f64(),
            });
            step += 1;
        }
    }
    Ok((LinearEncoder::new(f)?, LinearDecoder::new(g)?, history))
}
