//! Analytic gradients against central finite differences.

mod common;

use common::*;
use ctrl_core::games::{decoder_gradient, decoder_utility, encoder_gradient, encoder_utility, GameKind, GameSpec, LinearDecoder, LinearEncoder};
use ctrl_core::rate::{coding_rate, grad_coding_rate};
use rand::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

#[test]
fn coding_rate_gradient_matches_differences() {
    let mut rng = rng(11);
    for _ in 0..50 {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(1..=12);
        let p = precision(&mut rng);
        let z = gaussian(d, n, &mut rng);
        let fd = finite_difference(&z, H, |m| coding_rate(m, p).unwrap());
        let an = grad_coding_rate(&z, p).unwrap();
        assert!(relative_error(&an, &fd) < TOL, "{d}x{n}: {}", relative_error(&an, &fd));
    }
}

#[test]
fn wide_and_tall_rates_agree_on_gradient_side() {
    // both Gram sides are exercised: d < n and d > n
    let mut rng = rng(12);
    let p = precision(&mut rng);
    for (d, n) in [(2, 9), (9, 2), (5, 5)] {
        let z = gaussian(d, n, &mut rng);
        let fd = finite_difference(&z, H, |m| coding_rate(m, p).unwrap());
        assert!(relative_error(&grad_coding_rate(&z, p).unwrap(), &fd) < TOL);
    }
}

fn utility_instances(kind: GameKind, seed: u64, count: usize) {
    let mut rng = rng(seed);
    for _ in 0..count {
        let d_x = rng.random_range(2..=12);
        let d_z = rng.random_range(1..=8);
        let counts: Vec<usize> = match kind {
            GameKind::Msp => vec![rng.random_range(1..=5), rng.random_range(1..=5)],
            GameKind::Ssp => vec![rng.random_range(2..=10)],
        };
        let ds = random_dataset(d_x, &counts, &mut rng);
        let spec = GameSpec::new(kind, d_x, d_z, precision(&mut rng)).unwrap();
        let f = gaussian(d_z, d_x, &mut rng) * 0.5;
        let g = gaussian(d_x, d_z, &mut rng) * 0.5;
        let dec = LinearDecoder::new(g.clone()).unwrap();
        let enc = LinearEncoder::new(f.clone()).unwrap();

        let fd_f = finite_difference(&f, H, |m| encoder_utility(&spec, &LinearEncoder::new(m.clone()).unwrap(), &dec, &ds).unwrap());
        let an_f = encoder_gradient(&spec, &enc, &dec, &ds).unwrap();
        assert!(relative_error(&an_f, &fd_f) < TOL, "{kind} encoder: {}", relative_error(&an_f, &fd_f));

        let fd_g = finite_difference(&g, H, |m| decoder_utility(&spec, &enc, &LinearDecoder::new(m.clone()).unwrap(), &ds).unwrap());
        let an_g = decoder_gradient(&spec, &enc, &dec, &ds).unwrap();
        assert!(relative_error(&an_g, &fd_g) < TOL, "{kind} decoder: {}", relative_error(&an_g, &fd_g));
    }
}

#[test]
fn msp_utility_gradients_match_differences() {
    utility_instances(GameKind::Msp, 21, 40);
}

#[test]
fn ssp_utility_gradients_match_differences() {
    utility_instances(GameKind::Ssp, 22, 40);
}
