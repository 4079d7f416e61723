//! Lloyd-Max quantizer for a unit-variance real Gaussian.
//!
//! Gaussian partial moments have closed forms in terms of `erfc`, so the
//! centroid and distortion integrals need no quadrature:
//!
//! ```text
//! P(a < X < b)        = Phi(b) - Phi(a)
//! E[X; a < X < b]     = phi(a) - phi(b)
//! ```
//!
//! The iteration alternates the nearest-neighbour condition (thresholds are
//! midpoints of adjacent levels) and the centroid condition (levels are
//! conditional means), starting from the companding thresholds
//! `sqrt(3) * Phi^{-1}(i / N)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const MAX_ITERS: usize = 100_000;
const THRESHOLD_TOL: f64 = 1e-13;

fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }
}

/// Upper tail `P(X > x)`.
fn upper_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `P(a < X < b)` without cancellation in either tail.
fn mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        upper_tail(a) - upper_tail(b)
    } else if b <= 0.0 {
        upper_tail(-b) - upper_tail(-a)
    } else {
        1.0 - upper_tail(b) - upper_tail(-a)
    }
}

/// Inverse standard normal CDF by bisection; only used for initialisation.
fn inverse_cdf(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 - upper_tail(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Levels and thresholds of a converged Lloyd-Max quantizer.
#[derive(Debug, Clone)]
pub struct LloydMaxQuantizer {
    pub thresholds: Vec<f64>,
    pub levels: Vec<f64>,
    pub distortion: f64,
    pub iterations: usize,
}

fn centroids(thresholds: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = thresholds.len() + 1;
    let mut levels = Vec::with_capacity(n);
    let mut masses = Vec::with_capacity(n);
    for i in 0..n {
        let a = if i == 0 { f64::NEG_INFINITY } else { thresholds[i - 1] };
        let b = if i == n - 1 { f64::INFINITY } else { thresholds[i] };
        let p = mass(a, b);
        levels.push((pdf(a) - pdf(b)) / p);
        masses.push(p);
    }
    (levels, masses)
}

/// Runs Lloyd-Max for `levels` output points (`levels >= 2`).
pub fn lloyd_max(levels: usize) -> LloydMaxQuantizer {
    assert!(levels >= 2, "a quantizer needs at least two levels");
    let n = levels as f64;
    let mut thresholds: Vec<f64> = (1..levels)
        .map(|i| 3.0_f64.sqrt() * inverse_cdf(i as f64 / n))
        .collect();

    let mut iterations = 0;
    for it in 1..=MAX_ITERS {
        iterations = it;
        let (c, _) = centroids(&thresholds);
        let mut max_step = 0.0_f64;
        for (t, pair) in thresholds.iter_mut().zip(c.windows(2)) {
            let next = 0.5 * (pair[0] + pair[1]);
            max_step = max_step.max((next - *t).abs());
            *t = next;
        }
        if max_step < THRESHOLD_TOL {
            break;
        }
    }

    let (levels, masses) = centroids(&thresholds);
    let captured: f64 = levels.iter().zip(&masses).map(|(c, p)| p * c * c).sum();
    LloydMaxQuantizer {
        thresholds,
        levels,
        distortion: 1.0 - captured,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_quantizer_is_sign_times_mean_abs() {
        let q = lloyd_max(2);
        assert_eq!(q.thresholds.len(), 1);
        assert!(q.thresholds[0].abs() < 1e-15);
        let expected = (2.0 / PI).sqrt();
        assert!((q.levels[1] - expected).abs() < 1e-15);
        assert!((q.levels[0] + expected).abs() < 1e-15);
    }

    #[test]
    fn four_level_matches_classic_table() {
        // Max's table: thresholds 0, +-0.9816; levels +-0.4528, +-1.510; D = 0.1175.
        let q = lloyd_max(4);
        assert!((q.thresholds[2] - 0.9816).abs() < 1e-4);
        assert!((q.levels[2] - 0.4528).abs() < 1e-4);
        assert!((q.levels[3] - 1.510).abs() < 1e-3);
        assert!((q.distortion - 0.1175).abs() < 1e-4);
    }

    #[test]
    fn mass_is_accurate_in_both_tails() {
        assert!((mass(f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-15);
        assert!((mass(-10.0, -9.0) - mass(9.0, 10.0)).abs() < 1e-30);
        assert!((mass(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-14);
    }

    #[test]
    fn inverse_cdf_roundtrip() {
        for &p in &[0.01, 0.25, 0.5, 0.9] {
            let x = inverse_cdf(p);
            assert!((1.0 - upper_tail(x) - p).abs() < 1e-12);
        }
    }
}
