mod common;

use common::{rdp_by_quadrature, REFERENCE_RDP};
use dpbias::dp::{calibrate_sigma, epsilon_for, rdp_subsampled_gaussian, AccountantState, SIGMA_TOLERANCE};

#[test]
fn closed_form_matches_independent_reference() {
    for (q, sigma, alpha, expect) in REFERENCE_RDP {
        let got = rdp_subsampled_gaussian(q, sigma, alpha).unwrap();
        let rel = (got - expect).abs() / expect;
        assert!(rel < 0.01, "q={q} sigma={sigma} alpha={alpha}: {got} vs {expect}");
    }
}

#[test]
fn closed_form_matches_quadrature() {
    for (q, sigma, alpha) in [
        (0.01, 1.0, 2.0),
        (0.05, 2.0, 4.5),
        (0.1, 0.7, 3.0),
        (0.02, 1.5, 12.25),
        (0.3, 3.0, 20.0),
        (0.0016, 0.66, 5.5),
        (0.2, 1.0, 1.25),
        (0.0016, 1.2, 1.5),
        (0.0016, 1.2, 1.25),
        (0.01, 1.0, 32.0),
    ] {
        let exact = rdp_subsampled_gaussian(q, sigma, alpha).unwrap();
        let quad = rdp_by_quadrature(q, sigma, alpha);
        let rel = (exact - quad).abs() / quad;
        assert!(rel < 1e-5, "q={q} sigma={sigma} alpha={alpha}: {exact} vs quadrature {quad}");
    }
}

#[test]
fn quadrature_oracle_recovers_full_batch_gaussian() {
    let (sigma, alpha) = (1.3, 6.0);
    let quad = rdp_by_quadrature(1.0 - 1e-12, sigma, alpha);
    assert!((quad - alpha / (2.0 * sigma * sigma)).abs() < 1e-6);
}

#[test]
fn full_batch_is_exact() {
    for (sigma, alpha) in [(0.5, 2.0), (1.0, 32.0), (3.0, 1.5), (0.8, 256.0)] {
        assert_eq!(rdp_subsampled_gaussian(1.0, sigma, alpha).unwrap(), alpha / (2.0 * sigma * sigma));
    }
}

#[test]
fn single_full_batch_step_epsilon() {
    // min over the grid of α/8 + ln(1e5)/(α-1) for σ = 2, q = 1
    let (eps, alpha) = epsilon_for(1.0, 2.0, 1, 1e-5).unwrap();
    let direct = dpbias::dp::default_orders()
        .into_iter()
        .map(|a| a / 8.0 + (1e5f64).ln() / (a - 1.0))
        .fold(f64::INFINITY, f64::min);
    assert!((eps - direct).abs() < 1e-12);
    assert_eq!(alpha, 10.5);
}

#[test]
fn composition_is_linear_in_steps() {
    let mut a = AccountantState::default();
    a.compose(0.01, 1.1, 40).unwrap();
    let mut b = AccountantState::default();
    for _ in 0..4 {
        b.compose(0.01, 1.1, 10).unwrap();
    }
    for (x, y) in a.rdp().iter().zip(b.rdp()) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }
    assert_eq!(a.steps(), 40);
}

#[test]
fn desk_calibration_round_trip() {
    let (q, steps, target, delta) = (16.0 / 10_000.0, 1875, 3.0, 1e-5);
    let sigma = calibrate_sigma(target, delta, q, steps).unwrap();
    assert!(epsilon_for(q, sigma, steps, delta).unwrap().0 <= target);
    assert!(epsilon_for(q, sigma - SIGMA_TOLERANCE, steps, delta).unwrap().0 > target);
    assert!((sigma - 0.6643516540527344).abs() < 1e-12);
}

