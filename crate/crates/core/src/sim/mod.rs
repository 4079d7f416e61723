//! Monte-Carlo orchestration, rate CDFs and energy efficiency.

mod output;

pub use output::{config_from_manifest, emit_results, format_sig, OutputFormat, EE_DEFINITION};

use std::path::PathBuf;
use std::sync::Once;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{design_rf_chains, draw_channel, nearest_bs_assignment, ChannelError};
use crate::config::{ConfigError, Mode, SystemConfig};
use crate::maxmin::{self, Allocation, AoIterate, MaxMinError, MaxMinProblem};
use crate::precode::{
    broadcast_eta, effective_channel, general_rate_bounds, smallcell_full_power_scaling, smallcell_precoders,
    zf_precoder, PrecodeError, PrecoderKind,
};
use crate::quantize::{QuantizationModel, QuantizeError, Resolution};

/// A run fails when more than this fraction of its trials are flagged.
pub const MAX_FLAGGED_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error("{flagged} of {trials} trials failed (first: trial {first_trial}: {first_error})")]
    TooManyFlagged {
        flagged: usize,
        trials: usize,
        first_trial: usize,
        first_error: String,
    },
    #[error("cannot aggregate an empty sample")]
    Empty,
    #[error("total power consumption is zero")]
    ZeroConsumption,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// Why a single trial was flagged.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrialError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Precode(#[from] PrecodeError),
    #[error(transparent)]
    MaxMin(#[from] MaxMinError),
    #[error("energy efficiency: {0}")]
    Consumption(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub trial: usize,
    /// Per-user rate lower bounds, bps/Hz.
    pub rates: Vec<f64>,
    /// Transmit power per base station, Watts.
    pub bs_power: Vec<f64>,
    /// Fronthaul rate per base station at the solution, bps/Hz. Zero for
    /// small cells and for unlimited fronthaul.
    pub fronthaul_used: Vec<f64>,
    /// Watts.
    pub total_consumption: f64,
    /// Bits/Joule.
    pub ee_per_user: f64,
    /// Cell-free max-min solution.
    pub allocation: Option<Allocation>,
    pub solver_trace: Vec<AoIterate>,
    /// Base stations whose RF precoder had to be padded.
    pub rank_deficient_bs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedTrial {
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Resolved configuration the run used.
    pub config: SystemConfig,
    /// Successful trials in index order.
    pub metrics: Vec<TrialMetrics>,
    pub flagged: Vec<FlaggedTrial>,
}

impl RunReport {
    /// Per-user rates of every successful trial, in trial order.
    pub fn pooled_rates(&self) -> Vec<f64> {
        self.metrics.iter().flat_map(|m| m.rates.iter().copied()).collect()
    }

    pub fn mean_ee(&self) -> Result<f64, SimError> {
        if self.metrics.is_empty() {
            return Err(SimError::Empty);
        }
        Ok(self.metrics.iter().map(|m| m.ee_per_user).sum::<f64>() / self.metrics.len() as f64)
    }

    pub fn median_rate(&self) -> Result<f64, SimError> {
        median(&self.pooled_rates())
    }
}

/// Power consumption and per-user energy efficiency of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyEfficiency {
    pub total_consumption: f64,
    pub ee_per_user: f64,
}

/// Random stream of trial `index`: ChaCha8 keyed by the run seed, one stream
/// per trial, so results do not depend on scheduling.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs trial `index` of `config`.
pub fn run_trial(config: &SystemConfig, index: usize) -> Result<TrialMetrics, TrialError> {
    let quant = QuantizationModel::new(config.b).map_err(PrecodeError::from)?;
    let mut rng = trial_rng(config.seed, index);
    let channel = draw_channel(config, &mut rng)?;
    let assignment = nearest_bs_assignment(&channel.bs_positions, &channel.ue_positions)?;
    let rf = design_rf_chains(&channel, &assignment, config.n_rf)?;
    let effective = effective_channel(&channel, &rf, config.awgn_var());
    let m_total = config.m;

    let kind = match config.mode {
        Mode::Cellfree => PrecoderKind::CellfreeZf,
        Mode::SmallcellMrt => PrecoderKind::SmallcellMrt,
        Mode::SmallcellZf => PrecoderKind::SmallcellZf,
        Mode::SmallcellRzf => PrecoderKind::SmallcellRzf,
    };

    let (rates, bs_power, fronthaul_used, allocation, solver_trace) = if kind == PrecoderKind::CellfreeZf {
        let precoders = zf_precoder(&effective)?;
        let problem = MaxMinProblem::new(&effective, &precoders, &rf, &quant, config.p, config.c);
        let outcome = problem.ao_solve(&config.solver)?;
        let alloc = outcome.allocation;
        let eta = broadcast_eta(&alloc.eta, m_total);
        let rates = general_rate_bounds(&effective, &precoders, &eta, &alloc.sigma, &quant)?;
        let power: Vec<f64> = (0..m_total).map(|m| problem.bs_power(&alloc.eta, alloc.sigma[m], m)).collect();
        let fronthaul = if config.fronthaul_unlimited() {
            vec![0.0; m_total]
        } else {
            (0..m_total)
                .map(|m| problem.fronthaul_rate(&alloc.eta, alloc.sigma[m], m))
                .collect::<Result<Vec<_>, _>>()?
        };
        (rates, power, fronthaul, Some(alloc), outcome.trace)
    } else {
        let precoders = smallcell_precoders(&effective, &assignment.served, kind, config.effective_rzf_alpha())?;
        let eta = smallcell_full_power_scaling(&precoders, &rf, &assignment.served, &quant, config.p)?;
        let sigma = vec![0.0; m_total];
        let rates = general_rate_bounds(&effective, &precoders, &eta, &sigma, &quant)?;
        let power: Vec<f64> = (0..m_total)
            .map(|m| {
                let eta_m: Vec<f64> = eta.row(m).iter().copied().collect();
                maxmin::bs_power(&eta_m, 0.0, m, &precoders, &rf, &quant)
            })
            .collect();
        (rates, power, vec![0.0; m_total], None, Vec::new())
    };

    let ee = energy_efficiency(&rates, &bs_power, &fronthaul_used, config)
        .map_err(|e| TrialError::Consumption(e.to_string()))?;
    Ok(TrialMetrics {
        trial: index,
        rates,
        bs_power,
        fronthaul_used,
        total_consumption: ee.total_consumption,
        ee_per_user: ee.ee_per_user,
        allocation,
        solver_trace,
        rank_deficient_bs: rf.warnings.len(),
    })
}

/// Runs every trial of `config` in parallel. Failed trials are flagged; the
/// run fails if more than 5% of them are.
pub fn run_trials(config: &SystemConfig) -> Result<RunReport, SimError> {
    config.validate()?;
    QuantizationModel::new(config.b)?;
    let config = config.resolved();

    let outcomes: Vec<Result<TrialMetrics, TrialError>> =
        (0..config.trials).into_par_iter().map(|i| run_trial(&config, i)).collect();

    let mut metrics = Vec::with_capacity(outcomes.len());
    let mut flagged = Vec::new();
    for (trial, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(m) => metrics.push(m),
            Err(e) => {
                warn!("trial {trial} flagged: {e}");
                flagged.push(FlaggedTrial {
                    trial,
                    error: e.to_string(),
                });
            }
        }
    }
    info!(
        "{} mode, B = {}, C = {}: {} trials, {} flagged",
        config.mode,
        config.b,
        config.c,
        config.trials,
        flagged.len()
    );

    if flagged.len() as f64 > MAX_FLAGGED_FRACTION * config.trials as f64 {
        let first = &flagged[0];
        return Err(SimError::TooManyFlagged {
            flagged: flagged.len(),
            trials: config.trials,
            first_trial: first.trial,
            first_error: first.error.clone(),
        });
    }
    Ok(RunReport {
        config,
        metrics,
        flagged,
    })
}

/// Empirical CDF over `samples`: one `(value, fraction)` point per sample,
/// sorted by value. Tied samples share the fraction of the last of them.
pub fn aggregate_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>, SimError> {
    if samples.is_empty() {
        return Err(SimError::Empty);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out = vec![(0.0, 0.0); n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let frac = (j + 1) as f64 / n as f64;
        for (slot, &v) in out[i..=j].iter_mut().zip(&sorted[i..=j]) {
            *slot = (v, frac);
        }
        i = j + 1;
    }
    Ok(out)
}

pub fn median(samples: &[f64]) -> Result<f64, SimError> {
    if samples.is_empty() {
        return Err(SimError::Empty);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

static INFINITE_DAC_WARNING: Once = Once::new();

/// Total consumption
///
/// ```text
/// sum_m [ P_m / pa_efficiency + N_RF (p_rf_chain + 2 (a 2^B + b B))
///         + p_fixed_bs + fronthaul_watts_per_bpshz * C_m ]
/// ```
///
/// and `W * sum_k rate_k / (K * consumption)`. Ideal DACs are charged as
/// `power_model.b_cap` bits.
pub fn energy_efficiency(
    rates: &[f64],
    bs_power: &[f64],
    fronthaul_used: &[f64],
    config: &SystemConfig,
) -> Result<EnergyEfficiency, SimError> {
    if rates.is_empty() {
        return Err(SimError::Empty);
    }
    let pm = &config.power_model;
    let bits = match config.b {
        Resolution::Bits(b) => b,
        Resolution::Infinite => {
            INFINITE_DAC_WARNING.call_once(|| {
                warn!("ideal DACs are charged as {} bits in the power model", pm.b_cap);
            });
            pm.b_cap
        }
    };
    let bits = f64::from(bits);
    let dac = pm.dac_coeff_exp * bits.exp2() + pm.dac_coeff_lin * bits;
    let per_bs_hardware = config.n_rf as f64 * (pm.p_rf_chain + 2.0 * dac) + pm.p_fixed_bs;
    let total: f64 = bs_power
        .iter()
        .zip(fronthaul_used)
        .map(|(p, c)| p / pm.pa_efficiency + per_bs_hardware + pm.fronthaul_watts_per_bpshz * c)
        .sum();
    if !(total > 0.0) {
        return Err(SimError::ZeroConsumption);
    }
    let sum_rate: f64 = rates.iter().sum();
    Ok(EnergyEfficiency {
        total_consumption: total,
        ee_per_user: config.w * sum_rate / (rates.len() as f64 * total),
    })
}
