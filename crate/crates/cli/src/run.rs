//! Subcommand implementations. Every artifact lives under `output_dir`:
//!
//! | file | written by |
//! |---|---|
//! | `config.toml` | every subcommand (resolved config) |
//! | `data.csv`, `data.json` | `generate` |
//! | `encoder.csv/.json`, `decoder.csv/.json`, `history.csv`, `timing.json` | `train` |
//! | `metrics.json` | `verify` |
//! | `report/*.csv`, `report/*.svg` | `report` |

use std::path::{Path, PathBuf};
use std::time::Instant;

use ctrl_core::data::{generate, load_dataset, save_dataset_tagged, LabeledDataset};
use ctrl_core::games::{load_decoder, load_encoder, save_decoder, save_encoder, GameKind, LinearDecoder, LinearEncoder};
use ctrl_core::io::{self, Provenance};
use ctrl_core::linalg::singular_values;
use ctrl_core::metrics::{
    alignment_residuals, class_spectra, cosine_heatmap, isometry_ratios, verify_msp_equilibrium, verify_ssp_equilibrium,
    EquilibriumReport, Status,
};
use ctrl_core::training::gdmax_train;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::{svg, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Generate,
    Train,
    Verify,
    Report,
    All,
}

/// What a subcommand concluded. Only `verify` and `all` produce a verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: Option<Status>,
    pub success: bool,
}

impl Outcome {
    fn done() -> Self {
        Self { status: None, success: true }
    }
}

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| runtime_io(&cfg.output_dir, e))?;
        Ok(Self { root: cfg.output_dir.clone() })
    }
    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
    fn report(&self) -> Result<PathBuf, CliError> {
        let dir = self.root.join("report");
        std::fs::create_dir_all(&dir).map_err(|e| runtime_io(&dir, e))?;
        Ok(dir)
    }
}

fn runtime_io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(ctrl_core::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn data_provenance(cfg: &ExperimentConfig) -> Provenance {
    Provenance { config_hash: cfg.hash(), seed: cfg.generation.seed }
}

fn run_provenance(cfg: &ExperimentConfig) -> Provenance {
    Provenance { config_hash: cfg.hash(), seed: cfg.train.seed }
}

fn write_resolved_config(cfg: &ExperimentConfig, layout: &Layout) -> Result<(), CliError> {
    let path = layout.path("config.toml");
    let text = format!("{}\n{}", run_provenance(cfg).comment(), cfg.to_toml());
    std::fs::write(&path, text).map_err(|e| runtime_io(&path, e))
}

fn load_data(layout: &Layout) -> Result<LabeledDataset, CliError> {
    let path = layout.path("data.csv");
    if !path.exists() {
        return Err(CliError::Missing(format!("{} (run `generate` first)", path.display())));
    }
    Ok(load_dataset(&path)?)
}

fn load_pair(layout: &Layout) -> Result<(LinearEncoder, LinearDecoder), CliError> {
    let (f, g) = (layout.path("encoder.csv"), layout.path("decoder.csv"));
    for p in [&f, &g] {
        if !p.exists() {
            return Err(CliError::Missing(format!("{} (run `train` first)", p.display())));
        }
    }
    Ok((load_encoder(&f)?.0, load_decoder(&g)?.0))
}

pub fn run_generate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let layout = Layout::new(cfg)?;
    write_resolved_config(cfg, &layout)?;
    let ds = generate(&cfg.generation)?;
    save_dataset_tagged(&ds, layout.path("data.csv"), Some(&data_provenance(cfg)))?;
    eprintln!("generate: n = {}, d_x = {}, k = {} -> {}", ds.n(), ds.d_x(), ds.k(), layout.path("data.csv").display());
    Ok(Outcome::done())
}

#[derive(Serialize)]
struct Timing<'a> {
    config_hash: &'a str,
    seed: u64,
    train_seconds: f64,
    step_elapsed_seconds: Vec<f64>,
}

pub fn run_train(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let layout = Layout::new(cfg)?;
    write_resolved_config(cfg, &layout)?;
    let ds = load_data(&layout)?;
    if ds.config != cfg.generation {
        return Err(CliError::Config(format!(
            "generation: {} was produced by a different generation config; rerun `generate`",
            layout.path("data.csv").display()
        )));
    }
    let spec = cfg.spec();
    let prov = run_provenance(cfg);
    let start = Instant::now();
    let (enc, dec, history) = gdmax_train(&spec, &ds, &cfg.train)?;
    let secs = start.elapsed().as_secs_f64();
    save_encoder(layout.path("encoder.csv"), &enc, &spec, Some(&prov))?;
    save_decoder(layout.path("decoder.csv"), &dec, &spec, Some(&prov))?;
    history.write_csv(layout.path("history.csv"), Some(&prov))?;
    io::write_json(
        layout.path("timing.json"),
        &Timing { config_hash: &prov.config_hash, seed: prov.seed, train_seconds: secs, step_elapsed_seconds: history.elapsed_secs() },
    )?;
    if let Some(last) = history.steps.last() {
        eprintln!(
            "train: {} steps in {secs:.1}s, u_enc = {:.6}, u_dec = {:.3e}",
            history.steps.len(),
            last.encoder_utility,
            last.decoder_utility
        );
    }
    Ok(Outcome::done())
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    report: &'a EquilibriumReport,
}

fn verify_pair(cfg: &ExperimentConfig, enc: &LinearEncoder, dec: &LinearDecoder, ds: &LabeledDataset) -> Result<EquilibriumReport, CliError> {
    Ok(match cfg.game.kind {
        GameKind::Msp => verify_msp_equilibrium(enc, dec, ds, cfg.spec().precision, &cfg.thresholds)?,
        GameKind::Ssp => verify_ssp_equilibrium(enc, dec, ds, &cfg.thresholds)?,
    })
}

pub fn run_verify(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let layout = Layout::new(cfg)?;
    write_resolved_config(cfg, &layout)?;
    let ds = load_data(&layout)?;
    let (enc, dec) = load_pair(&layout)?;
    let report = verify_pair(cfg, &enc, &dec, &ds)?;
    let prov = run_provenance(cfg);
    io::write_json(layout.path("metrics.json"), &MetricsFile { config_hash: &prov.config_hash, seed: prov.seed, report: &report })?;
    eprintln!(
        "verify: status = {:?}, checks = {:?}, max cross-Gram = {:.4}, max relative residual = {:.4}",
        report.status, report.checks, report.max_cross_gram, report.max_relative_residual
    );
    Ok(Outcome { status: Some(report.status), success: report.success })
}

fn fixed6(v: f64) -> String {
    format!("{v:.6}")
}

fn write_square(path: &Path, m: &DMatrix<f64>, prov: &Provenance) -> Result<(), CliError> {
    let header: Vec<String> = (0..m.ncols()).map(|c| format!("c{c}")).collect();
    let rows = m.row_iter().map(|r| r.iter().map(|&v| fixed6(v)).collect());
    Ok(io::write_csv(path, Some(prov), &header, rows)?)
}

fn write_text(path: &Path, text: String) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| runtime_io(path, e))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn run_report(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let layout = Layout::new(cfg)?;
    write_resolved_config(cfg, &layout)?;
    let dir = layout.report()?;
    let ds = load_data(&layout)?;
    let (enc, dec) = load_pair(&layout)?;
    let prov = run_provenance(cfg);
    let tag = prov.comment().trim_start_matches("# ").to_string();

    let z = enc.matrix() * &ds.x;
    let zhat = enc.matrix() * (dec.matrix() * &z);

    let h_data = cosine_heatmap(&ds.x);
    write_square(&dir.join("heatmap_data.csv"), &h_data, &prov)?;
    write_text(&dir.join("heatmap_data.svg"), svg::heatmap(&h_data, "|cos| between samples (data)", &tag))?;
    let h_repr = cosine_heatmap(&z);
    write_square(&dir.join("heatmap_repr.csv"), &h_repr, &prov)?;
    write_text(&dir.join("heatmap_repr.svg"), svg::heatmap(&h_repr, "|cos| between samples (representation)", &tag))?;

    let spectra = class_spectra(&z, &ds.partition)?;
    let data_spectra: Vec<Vec<f64>> = ds.class_blocks().iter().map(singular_values).collect();
    let mut rows = Vec::new();
    for (j, (s_z, s_x)) in spectra.iter().zip(&data_spectra).enumerate() {
        for p in 0..s_z.len().max(s_x.len()) {
            let get = |v: &Vec<f64>| v.get(p).map_or(String::new(), |&x| io::format_f64(x));
            rows.push(vec![j.to_string(), p.to_string(), get(s_z), get(s_x)]);
        }
    }
    io::write_csv(dir.join("spectra.csv"), Some(&prov), &strings(&["class", "index", "sigma_repr", "sigma_data"]), rows)?;
    let groups: Vec<(String, Vec<f64>)> = spectra.iter().enumerate().map(|(j, s)| (format!("class {j}"), s.clone())).collect();
    write_text(&dir.join("spectra.svg"), svg::bars(&groups, "singular values of each class representation", &tag))?;

    let residuals = alignment_residuals(&z, &zhat, &ds.partition, cfg.thresholds.rank_rel)?;
    let labels = ds.partition.labels();
    let rows = residuals.iter().enumerate().map(|(i, &r)| {
        let norm = z.column(i).norm();
        let rel = if norm > 0.0 { r / norm } else { 0.0 };
        vec![i.to_string(), labels[i].to_string(), io::format_f64(r), io::format_f64(rel)]
    });
    io::write_csv(dir.join("residuals.csv"), Some(&prov), &strings(&["sample", "class", "residual", "relative_residual"]), rows)?;
    write_text(&dir.join("residuals.svg"), svg::histogram(&residuals, 30, "alignment residuals", &tag))?;

    if cfg.game.kind == GameKind::Ssp {
        let ratios = isometry_ratios(&ds.x, &z);
        let rows = ratios.iter().map(|&r| vec![io::format_f64(r)]);
        io::write_csv(dir.join("isometry.csv"), Some(&prov), &strings(&["ratio"]), rows)?;
        write_text(&dir.join("isometry.svg"), svg::histogram(&ratios, 30, "isometry ratios", &tag))?;
    }
    eprintln!("report: written to {}", dir.display());
    Ok(Outcome::done())
}

pub fn run_all(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    run_generate(cfg)?;
    run_train(cfg)?;
    let verdict = run_verify(cfg)?;
    run_report(cfg)?;
    Ok(verdict)
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Generate => run_generate(cfg),
        Command::Train => run_train(cfg),
        Command::Verify => run_verify(cfg),
        Command::Report => run_report(cfg),
        Command::All => run_all(cfg),
    }
}

/// Result of one seed in a fan-out.
pub struct SeedRun {
    pub seed: u64,
    pub result: Result<Outcome, CliError>,
}

/// Runs `command` once per seed, each in `output_dir/seed-<seed>`, in parallel.
/// Writes `output_dir/seeds.csv` summarising the verdicts.
pub fn run_seeds(command: Command, cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<SeedRun>, CliError> {
    let runs: Vec<SeedRun> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone().with_seed(seed);
            c.output_dir = cfg.output_dir.join(format!("seed-{seed}"));
            SeedRun { seed, result: run(command, &c) }
        })
        .collect();
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| runtime_io(&cfg.output_dir, e))?;
    let rows = runs.iter().map(|r| {
        let (status, success, error) = match &r.result {
            Ok(o) => (o.status.map_or("none".to_string(), |s| format!("{s:?}").to_lowercase()), o.success.to_string(), String::new()),
            Err(e) => ("error".to_string(), "false".to_string(), e.to_string()),
        };
        vec![r.seed.to_string(), status, success, error]
    });
    let prov = Provenance { config_hash: cfg.hash(), seed: cfg.train.seed };
    io::write_csv(cfg.output_dir.join("seeds.csv"), Some(&prov), &strings(&["seed", "status", "success", "error"]), rows)?;
    Ok(runs)
}
