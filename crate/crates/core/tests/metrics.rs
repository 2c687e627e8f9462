mod common;

use common::*;
use ctrl_core::data::{generate, GenerationConfig};
use ctrl_core::games::*;
use ctrl_core::metrics::*;
use ctrl_core::rate::Precision;
use nalgebra::DMatrix;

#[test]
fn perturbed_oracle_fails_then_recomputes_consistently() {
    let ds = generate(&GenerationConfig::baseline(1e6, 0.0, 3)).unwrap();
    let p = Precision::new(1.0).unwrap();
    let (enc, dec) = oracle_msp_encoder(&ds, 40, p).unwrap();
    let mut r = rng(2);
    let bent = LinearEncoder::new(enc.matrix() + gaussian(40, 50, &mut r) * 0.05).unwrap();
    let report = verify_msp_equilibrium(&bent, &dec, &ds, p, &Thresholds::oracle()).unwrap();
    assert_ne!(report.status, Status::Pass);
    let json = serde_json::to_string(&report).unwrap();
    let back: EquilibriumReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.recompute_status().2, report.status);
}

#[test]
fn oracle_spectra_sit_on_the_squared_target() {
    let ds = generate(&GenerationConfig::baseline(1e6, 0.0, 1)).unwrap();
    let p = Precision::new(1.0).unwrap();
    let (enc, dec) = oracle_msp_encoder(&ds, 40, p).unwrap();
    let report = verify_msp_equilibrium(&enc, &dec, &ds, p, &Thresholds::oracle()).unwrap();
    for c in &report.classes {
        assert_eq!(c.branch, SpectralBranch::Equal);
        assert!(!c.literal_reading_holds);
        for s in &c.singular_values[..c.d_s] {
            assert!((s * s - c.target_squared).abs() < 1e-6 * c.target_squared);
        }
    }
}

#[test]
fn noisy_spectra_count_as_partial_when_dominant() {
    let t = Thresholds::trained();
    let mut report = EquilibriumReport {
        game: GameKind::Msp,
        status: Status::Fail,
        success: false,
        thresholds: t,
        classes: vec![ClassEvidence {
            class: 0,
            n_j: 10,
            d_s: 2,
            singular_values: vec![2.3, 2.2, 0.1],
            rank: 3,
            target_squared: 5.0,
            literal_reading_holds: false,
            branch: SpectralBranch::Equal,
            dominance_ratio: 22.0,
            data_singular_ratio: vec![],
        }],
        cross_grams: vec![],
        max_cross_gram: 0.1,
        alignment_residuals: vec![],
        max_relative_residual: 0.1,
        isometry: None,
        checks: Checks { injective: false, discriminative: false, consistent: false, isometry: false },
        partial_checks: Checks { injective: false, discriminative: false, consistent: false, isometry: false },
    };
    assert_eq!(report.recompute_status().2, Status::Partial);
    report.classes[0].dominance_ratio = 2.0;
    assert_eq!(report.recompute_status().2, Status::Fail);
}

#[test]
fn rotation_preserves_isometry_ratios() {
    let mut r = rng(7);
    let x = gaussian(5, 30, &mut r);
    let q = gaussian(5, 5, &mut r).qr().q();
    let ratios = isometry_ratios(&x, &(q * &x));
    assert_eq!(ratios.len(), 30 * 29 / 2);
    assert!(ratios.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn heatmap_is_symmetric_with_unit_diagonal() {
    let mut r = rng(8);
    let z = gaussian(4, 9, &mut r);
    let h = cosine_heatmap(&z);
    assert_eq!(h.shape(), (9, 9));
    assert!((&h - h.transpose()).norm() == 0.0);
    assert!((0..9).all(|i| (h[(i, i)] - 1.0).abs() < 1e-12));
    assert!(h.iter().all(|v| (0.0..=1.0).contains(v)));
    let _ = DMatrix::<f64>::zeros(1, 1);
}
