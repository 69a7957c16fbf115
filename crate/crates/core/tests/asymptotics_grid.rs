//! Closed forms, general quadratic form and lower bound on a random grid.

use erade_core::asymptotics::{crlb, dbcd_variance, sigma_closed, sigma_general};
use erade_core::{RandomStream, TargetAllocation, TargetParams};

const GRID: usize = 200;

fn grid(target: TargetAllocation, seed: u64) -> Vec<TargetParams> {
    let mut s = RandomStream::new(seed, 0);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * s.next_uniform();
    (0..GRID)
        .map(|_| match target.family() {
            Some(erade_core::ResponseKind::Binary) => TargetParams::Binary {
                p1: u(0.02, 0.98),
                p2: u(0.02, 0.98),
            },
            _ => TargetParams::Gaussian {
                mu1: u(0.1, 10.0),
                mu2: u(0.1, 10.0),
                tau1: u(0.1, 5.0),
                tau2: u(0.1, 5.0),
            },
        })
        .collect()
}

#[test]
fn closed_form_matches_general_form() {
    for (i, t) in TargetAllocation::ALL_ADAPTIVE.iter().enumerate() {
        for p in grid(*t, 100 + i as u64) {
            let g = sigma_general(t, &p).unwrap();
            let c = sigma_closed(t, &p).unwrap();
            assert!((c - g).abs() <= 1e-8 * (1.0 + g), "{t} {p:?}: closed {c} general {g}");
        }
    }
}

#[test]
fn general_form_attains_the_bound() {
    for (i, t) in TargetAllocation::ALL_ADAPTIVE.iter().enumerate() {
        for p in grid(*t, 200 + i as u64) {
            let g = sigma_general(t, &p).unwrap();
            let b = crlb(t, &p).unwrap();
            assert!((g - b).abs() <= 1e-12, "{t} {p:?}: {g} vs {b}");
        }
    }
}

#[test]
fn variance_is_invariant_under_arm_swap() {
    for (i, t) in TargetAllocation::ALL_ADAPTIVE.iter().enumerate() {
        for p in grid(*t, 300 + i as u64) {
            let a = sigma_general(t, &p).unwrap();
            let b = sigma_general(t, &p.swapped()).unwrap();
            assert!((a - b).abs() <= 1e-12, "{t} {p:?}");
        }
    }
}

#[test]
fn dbcd_is_strictly_less_efficient() {
    for (i, t) in TargetAllocation::ALL_ADAPTIVE.iter().enumerate() {
        for p in grid(*t, 400 + i as u64) {
            let g = sigma_general(t, &p).unwrap();
            let d = dbcd_variance(2.0, t, &p).unwrap();
            assert!(d > g, "{t} {p:?}: dbcd {d} general {g}");
        }
    }
}

/// Urn-target variance with the numerator squared.
fn urn_variance_squared_sum(p1: f64, p2: f64) -> f64 {
    let (q1, q2) = (1.0 - p1, 1.0 - p2);
    q1 * q2 * (p1 + p2).powi(2) / (2.0 - p1 - p2).powi(3)
}

#[test]
fn squared_urn_numerator_disagrees_with_tabulated_cells() {
    // (P1, P2, tabulated variance)
    for (p1, p2, table) in [(0.9, 0.7, 0.75), (0.9, 0.3, 0.16), (0.7, 0.5, 0.35)] {
        let tp = TargetParams::Binary { p1, p2 };
        let closed = sigma_closed(&TargetAllocation::Urn, &tp).unwrap();
        assert!((closed - table).abs() < 0.005 + 1e-12, "{p1} {p2}: {closed}");
        let squared = urn_variance_squared_sum(p1, p2);
        assert!((squared - table).abs() > 0.03, "{p1} {p2}: {squared}");
    }
    assert!((urn_variance_squared_sum(0.9, 0.7) - 1.2).abs() < 1e-12);
}

/// Zhang–Rosenberger variance keeping only the variance-estimation term.
fn zr_variance_without_mean_terms(mu1: f64, mu2: f64, tau1: f64, tau2: f64) -> f64 {
    let (a, b) = (tau1 * mu2.sqrt(), tau2 * mu1.sqrt());
    a * b / (2.0 * (a + b).powi(2))
}

#[test]
fn zr_variance_needs_mean_terms() {
    let t = TargetAllocation::ZrGaussian;
    for (mu1, mu2, tau1, tau2) in [(1.0, 2.0, 1.0, 1.5), (2.0, 2.0, 1.0, 1.0), (5.0, 3.0, 1.5, 2.5)] {
        let p = TargetParams::Gaussian { mu1, mu2, tau1, tau2 };
        let g = sigma_general(&t, &p).unwrap();
        let short = zr_variance_without_mean_terms(mu1, mu2, tau1, tau2);
        assert!(g - short > 1e-3, "{p:?}: {g} vs {short}");
        assert!((sigma_closed(&t, &p).unwrap() - g).abs() < 1e-12);
    }
    // equal means and variances: 1/8 from the variances, 1/(16 mu^2) tau^2 from the means
    let p = TargetParams::Gaussian { mu1: 2.0, mu2: 2.0, tau1: 1.0, tau2: 1.0 };
    let g = sigma_general(&t, &p).unwrap();
    assert!((g - (0.125 + 1.0 / 64.0)).abs() < 1e-14, "{g}");
}
