//! Fronthaul compression noise that uses the link capacity exactly.

use super::{MaxMinError, SolverSettings};
use crate::linalg::{hermitian_eigenvalues_desc, CMatrix};
use std::f64::consts::LN_2;

/// Non-zero spectrum of `F_m diag(eta) F_m^H`, clamped at zero, descending.
///
/// Taken from the smaller of `B^H B` and `B B^H` with
/// `B = F_m diag(sqrt(eta))` over the users with `eta > 0`, so structural
/// zero eigenvalues never show up as rounding noise.
pub fn signal_eigenvalues(f_m: &CMatrix, eta: &[f64]) -> Vec<f64> {
    let active: Vec<usize> = (0..eta.len()).filter(|&i| eta[i] > 0.0).collect();
    if active.is_empty() {
        return Vec::new();
    }
    let b = CMatrix::from_fn(f_m.nrows(), active.len(), |r, c| f_m[(r, active[c])] * eta[active[c]].sqrt());
    let gram = if active.len() < f_m.nrows() {
        b.adjoint() * &b
    } else {
        &b * b.adjoint()
    };
    hermitian_eigenvalues_desc(&gram).into_iter().map(|v| v.max(0.0)).collect()
}

/// `sum_i log2(1 + lambda_i / s^2)` written in `x = ln s^2`.
fn rate_at(lambda: &[f64], x: f64) -> f64 {
    let inv = (-x).exp();
    lambda.iter().map(|&l| (l * inv).ln_1p()).sum::<f64>() / LN_2
}

fn rate_slope(lambda: &[f64], x: f64) -> f64 {
    let inv = (-x).exp();
    -lambda
        .iter()
        .map(|&l| {
            let y = l * inv;
            y / (1.0 + y)
        })
        .sum::<f64>()
        / LN_2
}

/// `sigma_m >= 0` with `log2 det(I + F_m eta F_m^H / sigma_m^2) = capacity`.
///
/// Returns zero when the precoded signal vanishes or the capacity is infinite.
/// Newton's method on `ln sigma^2`, kept inside a sign-change bracket.
pub fn solve_sigma_for_capacity(
    f_m: &CMatrix,
    eta: &[f64],
    capacity: f64,
    settings: &SolverSettings,
) -> Result<f64, MaxMinError> {
    if capacity == f64::INFINITY {
        return Ok(0.0);
    }
    if !(capacity > 0.0) {
        return Err(MaxMinError::Numeric(format!("fronthaul capacity must be positive, got {capacity}")));
    }
    let all = signal_eigenvalues(f_m, eta);
    let top = all.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Ok(0.0);
    }
    let lambda: Vec<f64> = all.into_iter().filter(|&l| l > 1e-15 * top).collect();
    let g = |x: f64| rate_at(&lambda, x) - capacity;

    // Equal-eigenvalue guess.
    let n = lambda.len() as f64;
    let mean = lambda.iter().sum::<f64>() / n;
    let x0 = mean.ln() - (capacity / n * LN_2).exp_m1().ln();

    let bracket_fail = || MaxMinError::Numeric(format!("could not bracket the fronthaul noise for capacity {capacity}"));
    let (mut lo, mut hi) = (x0 - 1.0, x0 + 1.0);
    let mut step = 1.0;
    let mut tries = 0;
    while g(lo) <= 0.0 {
        step *= 2.0;
        lo -= step;
        tries += 1;
        if tries > 200 {
            return Err(bracket_fail());
        }
    }
    step = 1.0;
    tries = 0;
    while g(hi) >= 0.0 {
        step *= 2.0;
        hi += step;
        tries += 1;
        if tries > 200 {
            return Err(bracket_fail());
        }
    }

    let mut x = x0.clamp(lo, hi);
    for _ in 0..settings.max_root_iters {
        let value = g(x);
        if value == 0.0 {
            break;
        }
        if value > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = rate_slope(&lambda, x);
        let newton = x - value / slope;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let done = (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0);
        x = next;
        if done || hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }

    let residual = g(x).abs();
    if residual > settings.sigma_tol {
        return Err(MaxMinError::Numeric(format!(
            "fronthaul noise root finder stopped with |C_m - C| = {residual:.3e}"
        )));
    }
    Ok((0.5 * x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    fn diag(values: &[f64]) -> CMatrix {
        let n = values.len();
        CMatrix::from_fn(n, n, |r, c| if r == c { C64::new(values[r].sqrt(), 0.0) } else { C64::new(0.0, 0.0) })
    }

    #[test]
    fn scalar_closed_form() {
        let f = CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let s = solve_sigma_for_capacity(&f, &[3.0], 2.0, &SolverSettings::default()).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn zero_signal_gives_zero_noise() {
        let f = CMatrix::from_element(2, 2, C64::new(1.0, 0.5));
        assert_eq!(solve_sigma_for_capacity(&f, &[0.0, 0.0], 3.0, &SolverSettings::default()).unwrap(), 0.0);
    }

    #[test]
    fn infinite_capacity_gives_zero_noise() {
        let f = CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        assert_eq!(solve_sigma_for_capacity(&f, &[1.0], f64::INFINITY, &SolverSettings::default()).unwrap(), 0.0);
    }

    #[test]
    fn hits_capacity_on_unequal_eigenvalues() {
        let f = diag(&[1.0, 3.0, 1e-3]);
        for &cap in &[0.01, 1.0, 3.0, 16.0, 64.0, 256.0] {
            let s = solve_sigma_for_capacity(&f, &[1.0, 1.0, 1.0], cap, &SolverSettings::default()).unwrap();
            let rate: f64 = [1.0, 3.0, 1e-3].iter().map(|l: &f64| (1.0 + l / (s * s)).log2()).sum();
            assert!((rate - cap).abs() <= 1e-9, "cap {cap}: rate {rate}");
        }
    }
}
