//! Experiment configuration (`schema = "v1"`), loaded from TOML.
//!
//! ```toml
//! schema = "v1"
//! output_dir = "runs/benign"
//!
//! [generation]
//! n_per_class = [500, 500, 500]
//! d_x = 50
//! subspace_dims = [3, 4, 5]
//! nu = 1e6
//! sigma_sq = 0.0
//! seed = 0
//!
//! [game]
//! kind = "msp"          # or "ssp"
//! d_z = 40
//! eps_sq = 1.0
//!
//! [train]
//! outer_epochs = 2
//! lr_encoder = 1e-2
//! lr_decoder = 1e-3
//! inner_iters = 1000
//! batch_size = 50
//! seed = 0
//! # optimizer = "adam" | "plain_gd", adam_betas = [0.9, 0.999], adam_eps = 1e-8
//!
//! [thresholds]          # optional, every key optional
//! accept_partial = false
//! ```

use std::path::{Path, PathBuf};

use ctrl_core::data::GenerationConfig;
use ctrl_core::games::{GameKind, GameSpec};
use ctrl_core::metrics::Thresholds;
use ctrl_core::rate::Precision;
use ctrl_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CONFIG_SCHEMA: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub kind: GameKind,
    pub d_z: usize,
    pub eps_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub generation: GenerationConfig,
    pub game: GameSection,
    pub train: TrainConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn invalid(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {message}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != CONFIG_SCHEMA {
            return Err(invalid("schema", format!("expected {CONFIG_SCHEMA:?}, found {:?}", self.schema)));
        }
        self.generation.validate().map_err(|e| invalid("generation", e))?;
        self.train.validate(self.generation.n()).map_err(|e| invalid("train", e))?;
        if self.game.d_z == 0 {
            return Err(invalid("game.d_z", "must be positive"));
        }
        Precision::new(self.game.eps_sq).map_err(|e| invalid("game.eps_sq", e))?;
        let k = self.generation.k();
        match self.game.kind {
            GameKind::Msp if k < 2 => return Err(invalid("game.kind", format!("msp needs at least two classes, generation has {k}"))),
            GameKind::Ssp if k != 1 => return Err(invalid("game.kind", format!("ssp needs exactly one class, generation has {k}"))),
            _ => {}
        }
        let t = &self.thresholds;
        for (key, v) in [
            ("thresholds.rank_rel", t.rank_rel),
            ("thresholds.spectral_rel", t.spectral_rel),
            ("thresholds.orthogonality", t.orthogonality),
            ("thresholds.alignment_rel", t.alignment_rel),
            ("thresholds.isometry_rel", t.isometry_rel),
            ("thresholds.dominance_ratio", t.dominance_ratio),
            ("thresholds.partial_orthogonality", t.partial_orthogonality),
            ("thresholds.partial_alignment_rel", t.partial_alignment_rel),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(key, format!("must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&t.isometry_fraction) {
            return Err(invalid("thresholds.isometry_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn spec(&self) -> GameSpec {
        let precision = Precision::new(self.game.eps_sq).expect("validated");
        GameSpec::new(self.game.kind, self.generation.d_x, self.game.d_z, precision).expect("validated")
    }

    /// Sets both the generation and the training seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.generation.seed = seed;
        self.train.seed = seed;
        self
    }

    /// SHA-256 of the canonical TOML form, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let text = toml::to_string(&canonical).expect("config serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema = "v1"
[generation]
n_per_class = [20, 20]
d_x = 8
subspace_dims = [2, 2]
nu = 1e6
sigma_sq = 0.0
seed = 1
[game]
kind = "msp"
d_z = 6
eps_sq = 1.0
[train]
outer_epochs = 1
lr_encoder = 1e-2
lr_decoder = 1e-3
inner_iters = 10
batch_size = 10
seed = 1
"#;

    fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::from_toml_str(text, Path::new("test.toml"))
    }

    #[test]
    fn parses_with_default_thresholds() {
        let cfg = parse(BASE).unwrap();
        assert_eq!(cfg.thresholds, Thresholds::trained());
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_name_the_key() {
        let err = parse(&BASE.replace("d_z = 6", "d_z = 6\ncolour = 1")).unwrap_err().to_string();
        assert!(err.contains("colour") && err.contains("test.toml"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_section() {
        let err = parse(&BASE.replace("batch_size = 10", "batch_size = 100")).unwrap_err().to_string();
        assert!(err.contains("train"), "{err}");
        let err = parse(&BASE.replace("kind = \"msp\"", "kind = \"ssp\"")).unwrap_err().to_string();
        assert!(err.contains("game.kind"), "{err}");
        assert!(parse(&BASE.replace("schema = \"v1\"", "schema = \"v2\"")).is_err());
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let a = parse(BASE).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), a.clone().with_seed(2).hash());
    }

    #[test]
    fn round_trips_through_toml() {
        let a = parse(BASE).unwrap();
        assert_eq!(parse(&a.to_toml()).unwrap(), a);
    }
}
