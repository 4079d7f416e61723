//! Max-min SQNR power allocation for the cell-free ZF precoder under per-BS
//! power and fronthaul capacity constraints.
//!
//! For fixed fronthaul noise `sigma`, both numerator and denominator of every
//! user's SQNR are linear in the power coefficients `eta`. A common SQNR target
//! `t` therefore pins `eta` down through a `K x K` linear system, and the
//! target is feasible exactly when that solution is non-negative and meets the
//! power and fronthaul limits. Bisection over `t` solves the `eta` step; the
//! `sigma` step makes every fronthaul link run at capacity. Alternating the
//! two never decreases the achieved target.

mod sigma;

pub use sigma::{signal_eigenvalues, solve_sigma_for_capacity};

use std::f64::consts::LN_2;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::RfChains;
use crate::linalg::{frobenius, scale_columns, CMatrix};
use crate::precode::{EffectiveChannel, PrecoderSet};
use crate::quantize::QuantizationModel;

/// Allowed excess of `C_m` over `C` when checking feasibility.
pub const FRONTHAUL_SLACK: f64 = 1e-9;
/// Allowed relative excess of `P_m` over `P` when checking feasibility.
pub const POWER_SLACK: f64 = 1e-12;
/// Upper-bracket doublings before bisection gives up on finding an
/// infeasible target.
const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaxMinError {
    #[error("zero SQNR target is infeasible: {0}")]
    Initialization(Infeasible),
    #[error("fronthaul rate is unbounded at base station {bs}: zero compression noise with non-zero signal")]
    InfiniteRate { bs: usize },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("invalid solver settings: {0}")]
    Settings(String),
}

/// Why a target SQNR was rejected.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum Infeasible {
    #[error("the SQNR equality system is singular")]
    Singular,
    #[error("user {user} needs negative power {value:.3e}")]
    NegativeEta { user: usize, value: f64 },
    #[error("base station {bs} needs {power:.6e} W")]
    Power { bs: usize, power: f64 },
    #[error("base station {bs} needs fronthaul rate {rate:.6e}")]
    Fronthaul { bs: usize, rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Relative width of the final bisection bracket on `t`.
    pub bisection_tol: f64,
    /// Relative improvement of `t` below which AO stops.
    pub ao_tol: f64,
    /// Accuracy of `C_m = C` in the `sigma` step.
    pub sigma_tol: f64,
    pub max_bisection_iters: usize,
    pub max_ao_iters: usize,
    pub max_root_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            bisection_tol: 1e-6,
            ao_tol: 1e-7,
            sigma_tol: 1e-9,
            max_bisection_iters: 200,
            max_ao_iters: 100,
            max_root_iters: 100,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), MaxMinError> {
        let tols = [self.bisection_tol, self.ao_tol, self.sigma_tol];
        if tols.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(MaxMinError::Settings(format!("tolerances must be positive: {tols:?}")));
        }
        if self.max_bisection_iters == 0 || self.max_ao_iters == 0 || self.max_root_iters == 0 {
            return Err(MaxMinError::Settings("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Power coefficients per user, fronthaul noise deviations per base station,
/// and the max-min SQNR they achieve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub eta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub target: f64,
}

/// State after one AO iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AoIterate {
    /// Target returned by the `eta` step.
    pub t: f64,
    /// `max_m P_m` after the `sigma` step.
    pub max_power: f64,
    /// `max_m C_m` after the `sigma` step.
    pub max_fronthaul: f64,
    /// `sigma` after the `sigma` step.
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoOutcome {
    pub allocation: Allocation,
    pub trace: Vec<AoIterate>,
}

/// `u[k][i] = sum_j |h_k[j]|^2 |F[j,i]|^2`, the weight of `eta_i` in the DAC
/// distortion seen by user `k`.
fn distortion_weights(effective: &EffectiveChannel, precoders: &PrecoderSet) -> DMatrix<f64> {
    let k_total = effective.num_users();
    let h_abs2 = effective.stacked.map(|z| z.norm_sqr());
    let f_abs2 = precoders.full.map(|z| z.norm_sqr());
    let u = &h_abs2 * &f_abs2;
    debug_assert_eq!(u.shape(), (k_total, k_total));
    u
}

/// `||h_{k,m}||^2` as a `K x M` matrix.
fn link_gains(effective: &EffectiveChannel) -> DMatrix<f64> {
    DMatrix::from_fn(effective.num_users(), effective.num_bs(), |k, m| {
        effective.per_link[k][m].norm_squared()
    })
}

/// SQNR of every user with the ZF precoder (no inter-user interference):
///
/// ```text
/// (1-rho)^2 eta_k / ( rho(1-rho) sum_i u[k][i] eta_i
///                     + (1-rho) sum_m sigma_m^2 ||h_{k,m}||^2 + sigma^2 )
/// ```
pub fn sqnr_all(
    eta: &[f64],
    sigma: &[f64],
    effective: &EffectiveChannel,
    precoders: &PrecoderSet,
    quant: &QuantizationModel,
) -> Vec<f64> {
    SqnrModel::new(effective, precoders, quant).evaluate(eta, sigma)
}

/// `P_m = (1-rho)^2 tr(W F eta F^H W^H) + rho(1-rho) tr(W diag(F eta F^H) W^H)
///        + (1-rho) sigma_m^2 tr(W W^H)`.
///
/// `eta` holds the coefficients used at base station `m`.
pub fn bs_power(
    eta: &[f64],
    sigma_m: f64,
    m: usize,
    precoders: &PrecoderSet,
    rf: &RfChains,
    quant: &QuantizationModel,
) -> f64 {
    let rho = quant.rho;
    let w = &rf.bs_precoders[m];
    let f = &precoders.blocks[m];
    let signal = scale_columns(f, eta) * f.adjoint();
    let diag = CMatrix::from_diagonal(&signal.diagonal());
    let trace = |x: &CMatrix| (w * x * w.adjoint()).trace().re;
    let rf_energy = frobenius(w).powi(2);
    (1.0 - rho).powi(2) * trace(&signal) + rho * (1.0 - rho) * trace(&diag) + (1.0 - rho) * sigma_m * sigma_m * rf_energy
}

/// `C_m = log2 det(I + F_m eta F_m^H / sigma_m^2)`, via eigenvalues.
pub fn fronthaul_rate(eta: &[f64], sigma_m: f64, m: usize, precoders: &PrecoderSet) -> Result<f64, MaxMinError> {
    let lambda = signal_eigenvalues(&precoders.blocks[m], eta);
    let top = lambda.first().copied().unwrap_or(0.0);
    if sigma_m == 0.0 {
        return if top > 0.0 { Err(MaxMinError::InfiniteRate { bs: m }) } else { Ok(0.0) };
    }
    let s2 = sigma_m * sigma_m;
    Ok(lambda.iter().map(|&l| (l / s2).ln_1p()).sum::<f64>() / LN_2)
}

/// Precomputed linear coefficients of the ZF SQNR.
#[derive(Debug, Clone)]
struct SqnrModel {
    u: DMatrix<f64>,
    link_gain: DMatrix<f64>,
    rho: f64,
    awgn: f64,
}

impl SqnrModel {
    fn new(effective: &EffectiveChannel, precoders: &PrecoderSet, quant: &QuantizationModel) -> Self {
        Self {
            u: distortion_weights(effective, precoders),
            link_gain: link_gains(effective),
            rho: quant.rho,
            awgn: effective.awgn_var,
        }
    }

    /// Noise-only part of the denominator of user `k`.
    fn noise_floor(&self, k: usize, sigma: &[f64]) -> f64 {
        let fronthaul: f64 = sigma
            .iter()
            .enumerate()
            .map(|(m, s)| s * s * self.link_gain[(k, m)])
            .sum();
        (1.0 - self.rho) * fronthaul + self.awgn
    }

    fn evaluate(&self, eta: &[f64], sigma: &[f64]) -> Vec<f64> {
        let rho = self.rho;
        (0..eta.len())
            .map(|k| {
                let distortion: f64 = (0..eta.len()).map(|i| self.u[(k, i)] * eta[i]).sum();
                (1.0 - rho).powi(2) * eta[k] / (rho * (1.0 - rho) * distortion + self.noise_floor(k, sigma))
            })
            .collect()
    }
}

/// One max-min problem instance: a ZF precoder with fixed RF stage,
/// quantization model and per-BS limits.
#[derive(Debug, Clone)]
pub struct MaxMinProblem<'a> {
    precoders: &'a PrecoderSet,
    sqnr: SqnrModel,
    /// `power_coef[(m, i)]`: `dP_m / d eta_i`.
    power_coef: DMatrix<f64>,
    /// `tr(W_m W_m^H)`.
    rf_energy: Vec<f64>,
    rho: f64,
    power_budget: f64,
    capacity: f64,
}

impl<'a> MaxMinProblem<'a> {
    /// `capacity = f64::INFINITY` removes the fronthaul constraint.
    pub fn new(
        effective: &EffectiveChannel,
        precoders: &'a PrecoderSet,
        rf: &RfChains,
        quant: &QuantizationModel,
        power_budget: f64,
        capacity: f64,
    ) -> Self {
        let rho = quant.rho;
        let k_total = effective.num_users();
        let m_total = precoders.num_bs();
        let mut power_coef = DMatrix::zeros(m_total, k_total);
        let mut rf_energy = Vec::with_capacity(m_total);
        for (m, (f, w)) in precoders.blocks.iter().zip(&rf.bs_precoders).enumerate() {
            let column_energy: Vec<f64> = w.column_iter().map(|c| c.norm_squared()).collect();
            let wf = w * f;
            for i in 0..k_total {
                let through_rf = wf.column(i).norm_squared();
                let diagonal: f64 = f.column(i).iter().zip(&column_energy).map(|(z, e)| z.norm_sqr() * e).sum();
                power_coef[(m, i)] = (1.0 - rho).powi(2) * through_rf + rho * (1.0 - rho) * diagonal;
            }
            rf_energy.push(column_energy.iter().sum());
        }
        Self {
            precoders,
            sqnr: SqnrModel::new(effective, precoders, quant),
            power_coef,
            rf_energy,
            rho,
            power_budget,
            capacity,
        }
    }

    pub fn num_users(&self) -> usize {
        self.power_coef.ncols()
    }

    pub fn num_bs(&self) -> usize {
        self.power_coef.nrows()
    }

    pub fn sqnr_all(&self, eta: &[f64], sigma: &[f64]) -> Vec<f64> {
        self.sqnr.evaluate(eta, sigma)
    }

    pub fn min_sqnr(&self, eta: &[f64], sigma: &[f64]) -> f64 {
        self.sqnr_all(eta, sigma).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn bs_power(&self, eta: &[f64], sigma_m: f64, m: usize) -> f64 {
        let signal: f64 = self.power_coef.row(m).iter().zip(eta).map(|(c, e)| c * e).sum();
        signal + (1.0 - self.rho) * sigma_m * sigma_m * self.rf_energy[m]
    }

    pub fn fronthaul_rate(&self, eta: &[f64], sigma_m: f64, m: usize) -> Result<f64, MaxMinError> {
        fronthaul_rate(eta, sigma_m, m, self.precoders)
    }

    /// Solves `SQNR_k(eta, sigma) = t` for all `k` and checks the result
    /// against the power and fronthaul limits.
    pub fn solve_eta_for_target(&self, t: f64, sigma: &[f64]) -> Result<Vec<f64>, Infeasible> {
        let k_total = self.num_users();
        let rho = self.rho;
        let a = DMatrix::from_fn(k_total, k_total, |k, i| {
            let diag = if k == i { (1.0 - rho).powi(2) } else { 0.0 };
            diag - t * rho * (1.0 - rho) * self.sqnr.u[(k, i)]
        });
        let b = DVector::from_fn(k_total, |k, _| t * self.sqnr.noise_floor(k, sigma));
        let eta = a.lu().solve(&b).ok_or(Infeasible::Singular)?;
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Infeasible::Singular);
        }
        if let Some((user, &value)) = eta.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(Infeasible::NegativeEta { user, value });
        }
        let eta: Vec<f64> = eta.iter().copied().collect();

        for (m, &s) in sigma.iter().enumerate() {
            let power = self.bs_power(&eta, s, m);
            if power > self.power_budget * (1.0 + POWER_SLACK) {
                return Err(Infeasible::Power { bs: m, power });
            }
        }
        if self.capacity.is_finite() {
            for (m, &s) in sigma.iter().enumerate() {
                let rate = self.fronthaul_rate(&eta, s, m).unwrap_or(f64::INFINITY);
                if rate > self.capacity + FRONTHAUL_SLACK {
                    return Err(Infeasible::Fronthaul { bs: m, rate });
                }
            }
        }
        Ok(eta)
    }

    /// Max-min `eta` for fixed `sigma` by bisection on the common target.
    pub fn bisection_eta(&self, sigma: &[f64], settings: &SolverSettings) -> Result<(Vec<f64>, f64), MaxMinError> {
        self.bisection_from(sigma, settings, 0.0)
    }

    /// As [`bisection_eta`](Self::bisection_eta), starting from a target
    /// `floor` already known to be attainable (falls back to zero if it is not).
    pub fn bisection_from(
        &self,
        sigma: &[f64],
        settings: &SolverSettings,
        floor: f64,
    ) -> Result<(Vec<f64>, f64), MaxMinError> {
        let mut best = match self.solve_eta_for_target(floor, sigma) {
            Ok(eta) => (eta, floor),
            Err(_) if floor > 0.0 => {
                warn!("warm-start target {floor:.6e} is not feasible; restarting bisection from zero");
                let eta = self.solve_eta_for_target(0.0, sigma).map_err(MaxMinError::Initialization)?;
                (eta, 0.0)
            }
            Err(why) => return Err(MaxMinError::Initialization(why)),
        };

        let mut lo = best.1;
        let mut hi = if lo >= 1.0 { 2.0 * lo } else { 1.0 };
        let mut doublings = 0;
        while let Ok(eta) = self.solve_eta_for_target(hi, sigma) {
            best = (eta, hi);
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings >= MAX_DOUBLINGS {
                warn!("SQNR target still feasible after {MAX_DOUBLINGS} doublings (t = {lo:.3e})");
                return Ok(best);
            }
        }

        for _ in 0..settings.max_bisection_iters {
            if hi - lo <= settings.bisection_tol * lo.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            match self.solve_eta_for_target(mid, sigma) {
                Ok(eta) => {
                    best = (eta, mid);
                    lo = mid;
                }
                Err(_) => hi = mid,
            }
        }
        Ok(best)
    }

    fn solve_sigma(&self, eta: &[f64], settings: &SolverSettings) -> Result<Vec<f64>, MaxMinError> {
        self.precoders
            .blocks
            .iter()
            .map(|f_m| solve_sigma_for_capacity(f_m, eta, self.capacity, settings))
            .collect()
    }

    fn snapshot(&self, t: f64, eta: &[f64], sigma: &[f64]) -> AoIterate {
        let mut max_power = 0.0_f64;
        let mut max_fronthaul = 0.0_f64;
        for (m, &s) in sigma.iter().enumerate() {
            max_power = max_power.max(self.bs_power(eta, s, m));
            if self.capacity.is_finite() {
                max_fronthaul = max_fronthaul.max(self.fronthaul_rate(eta, s, m).unwrap_or(f64::INFINITY));
            }
        }
        AoIterate {
            t,
            max_power,
            max_fronthaul,
            sigma: sigma.to_vec(),
        }
    }

    /// Alternating optimisation over `eta` (bisection) and `sigma` (capacity
    /// equality).
    ///
    /// Starts from uniform `eta` at half the power budget and the matching
    /// capacity-achieving `sigma`, capped so that a zero target stays
    /// power-feasible.
    pub fn ao_solve(&self, settings: &SolverSettings) -> Result<AoOutcome, MaxMinError> {
        settings.validate()?;
        let m_total = self.num_bs();
        let k_total = self.num_users();

        if self.capacity == f64::INFINITY {
            let sigma = vec![0.0; m_total];
            let (eta, t) = self.bisection_eta(&sigma, settings)?;
            let trace = vec![self.snapshot(t, &eta, &sigma)];
            let target = self.min_sqnr(&eta, &sigma);
            return Ok(AoOutcome {
                allocation: Allocation { eta, sigma, target },
                trace,
            });
        }

        let peak_unit_power = (0..m_total)
            .map(|m| self.power_coef.row(m).sum())
            .fold(0.0_f64, f64::max);
        if !(peak_unit_power > 0.0) {
            return Err(MaxMinError::Numeric("precoder carries no power at any base station".into()));
        }
        let eta0 = vec![0.5 * self.power_budget / peak_unit_power; k_total];
        let mut sigma = self.solve_sigma(&eta0, settings)?;
        for (m, s) in sigma.iter_mut().enumerate() {
            let cap = 0.5 * (self.power_budget / ((1.0 - self.rho) * self.rf_energy[m])).sqrt();
            *s = s.min(cap);
        }

        let mut trace = Vec::new();
        let mut t_prev = 0.0;
        let mut eta = vec![0.0; k_total];
        for it in 0..settings.max_ao_iters {
            let (next_eta, t) = self.bisection_from(&sigma, settings, t_prev)?;
            let next_sigma = self.solve_sigma(&next_eta, settings)?;
            // C_m(eta, sigma_old) <= C, so the capacity-equality sigma can only
            // shrink; clamp away rounding.
            for (s, next) in sigma.iter_mut().zip(next_sigma) {
                *s = next.min(*s);
            }
            eta = next_eta;
            trace.push(self.snapshot(t, &eta, &sigma));
            let improvement = t - t_prev;
            t_prev = t;
            if it > 0 && improvement <= settings.ao_tol * t.max(1.0) {
                break;
            }
        }

        let target = self.min_sqnr(&eta, &sigma);
        Ok(AoOutcome {
            allocation: Allocation { eta, sigma, target },
            trace,
        })
    }
}
