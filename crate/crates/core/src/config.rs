//! Scenario, hardware and solver parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ArrayGeometry, PathLossModel};
use crate::maxmin::SolverSettings;
use crate::quantize::Resolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("K = {k} users cannot be split evenly over M = {m} base stations")]
    UnevenUsers { k: usize, m: usize },
    #[error("cell-free ZF needs M * N_RF >= K (got {available} < {k})")]
    TooFewRfChains { available: usize, k: usize },
    #[error("small-cell ZF needs K/M <= N_RF (got {per_bs} > {n_rf})")]
    TooManyLocalUsers { per_bs: usize, n_rf: usize },
    #[error("parameter `{name}` must be {requirement} (got {value})")]
    Invalid {
        name: &'static str,
        requirement: &'static str,
        value: String,
    },
}

fn invalid(name: &'static str, requirement: &'static str, value: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        name,
        requirement,
        value: value.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Cellfree,
    SmallcellMrt,
    SmallcellZf,
    SmallcellRzf,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cellfree => "cellfree",
            Mode::SmallcellMrt => "smallcell-mrt",
            Mode::SmallcellZf => "smallcell-zf",
            Mode::SmallcellRzf => "smallcell-rzf",
        }
    }

    pub fn is_cellfree(self) -> bool {
        self == Mode::Cellfree
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Mode::Cellfree, Mode::SmallcellMrt, Mode::SmallcellZf, Mode::SmallcellRzf]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// Power consumption model used for energy efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerModel {
    pub pa_efficiency: f64,
    /// Watts per RF chain.
    pub p_rf_chain: f64,
    /// Watts multiplying `2^B` per DAC.
    pub dac_coeff_exp: f64,
    /// Watts multiplying `B` per DAC.
    pub dac_coeff_lin: f64,
    /// Fixed Watts per base station.
    pub p_fixed_bs: f64,
    /// Watts per bps/Hz of fronthaul rate.
    pub fronthaul_watts_per_bpshz: f64,
    /// Bit count charged for ideal DACs.
    pub b_cap: u32,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            pa_efficiency: 0.4,
            p_rf_chain: 0.2,
            dac_coeff_exp: 1e-4,
            dac_coeff_lin: 1e-3,
            p_fixed_bs: 1.0,
            fronthaul_watts_per_bpshz: 0.02,
            b_cap: 12,
        }
    }
}

/// Everything that determines a simulation run.
///
/// Field names double as configuration-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of base stations.
    pub m: usize,
    /// Number of users.
    pub k: usize,
    /// Base-station array.
    pub n_bs: ArrayGeometry,
    /// RF chains per base station.
    pub n_rf: usize,
    /// User array.
    pub n_ue: ArrayGeometry,
    /// Carrier frequency in Hz (informational; path loss uses `path_loss`).
    pub f_c: f64,
    /// Bandwidth in Hz.
    pub w: f64,
    /// Per-base-station transmit power budget in Watts.
    pub p: f64,
    /// Noise power spectral density in W/Hz.
    pub n0: f64,
    /// Inter-site distance in meters.
    pub isd: f64,
    pub paths_per_link: usize,
    /// DAC resolution.
    pub b: Resolution,
    /// Fronthaul capacity in bps/Hz; `inf` disables the constraint.
    pub c: f64,
    pub mode: Mode,
    /// RZF regularisation; defaults to `(K/M) * N0 * W / P`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rzf_alpha: Option<f64>,
    pub seed: u64,
    pub trials: usize,
    pub solver: SolverSettings,
    pub power_model: PowerModel,
    pub path_loss: PathLossModel,
}

/// `dBm -> W`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            m: 4,
            k: 8,
            n_bs: ArrayGeometry::half_wavelength(4, 4),
            n_rf: 4,
            n_ue: ArrayGeometry::half_wavelength(2, 1),
            f_c: 30e9,
            w: 80e6,
            p: dbm_to_watts(33.0),
            n0: dbm_to_watts(-174.0),
            isd: 200.0,
            paths_per_link: 4,
            b: Resolution::Bits(4),
            c: 64.0,
            mode: Mode::Cellfree,
            rzf_alpha: None,
            seed: 1,
            trials: 50,
            solver: SolverSettings::default(),
            power_model: PowerModel::default(),
            path_loss: PathLossModel::default(),
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, "finite and > 0", v))
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, "finite and >= 0", v))
    }
}

impl SystemConfig {
    /// Parses a TOML configuration; missing keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml_string(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    /// Users per base station.
    pub fn users_per_bs(&self) -> usize {
        self.k / self.m
    }

    /// AWGN variance `N0 W` at a unit-norm combiner output.
    pub fn awgn_var(&self) -> f64 {
        self.n0 * self.w
    }

    pub fn fronthaul_unlimited(&self) -> bool {
        self.c == f64::INFINITY
    }

    pub fn effective_rzf_alpha(&self) -> f64 {
        self.rzf_alpha
            .unwrap_or_else(|| self.users_per_bs() as f64 * self.awgn_var() / self.p)
    }

    /// Copy with every defaulted quantity made explicit.
    pub fn resolved(&self) -> Self {
        Self {
            rzf_alpha: Some(self.effective_rzf_alpha()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.m == 0 {
            return Err(invalid("m", ">= 1", self.m));
        }
        if self.k == 0 {
            return Err(invalid("k", ">= 1", self.k));
        }
        if !self.k.is_multiple_of(self.m) {
            return Err(ConfigError::UnevenUsers { k: self.k, m: self.m });
        }
        for (name, g) in [("n_bs", &self.n_bs), ("n_ue", &self.n_ue)] {
            if g.validate().is_err() {
                return Err(invalid(name, "a non-empty array with positive spacing", format!("{g:?}")));
            }
        }
        if self.n_rf == 0 || self.n_rf > self.n_bs.antennas() {
            return Err(invalid("n_rf", "between 1 and the base-station antenna count", self.n_rf));
        }
        if self.paths_per_link == 0 {
            return Err(invalid("paths_per_link", ">= 1", self.paths_per_link));
        }
        if self.trials == 0 {
            return Err(invalid("trials", ">= 1", self.trials));
        }
        if self.b == Resolution::Bits(0) {
            return Err(invalid("b", ">= 1 or inf", self.b));
        }
        if !(self.c > 0.0) {
            return Err(invalid("c", "> 0 or inf", self.c));
        }
        positive("f_c", self.f_c)?;
        positive("w", self.w)?;
        positive("p", self.p)?;
        positive("n0", self.n0)?;
        positive("isd", self.isd)?;
        if let Some(alpha) = self.rzf_alpha {
            non_negative("rzf_alpha", alpha)?;
        }
        match self.mode {
            Mode::Cellfree if self.m * self.n_rf < self.k => {
                return Err(ConfigError::TooFewRfChains {
                    available: self.m * self.n_rf,
                    k: self.k,
                })
            }
            Mode::SmallcellZf if self.users_per_bs() > self.n_rf => {
                return Err(ConfigError::TooManyLocalUsers {
                    per_bs: self.users_per_bs(),
                    n_rf: self.n_rf,
                })
            }
            _ => {}
        }

        let pm = &self.power_model;
        if !(pm.pa_efficiency > 0.0 && pm.pa_efficiency <= 1.0) {
            return Err(invalid("power_model.pa_efficiency", "in (0, 1]", pm.pa_efficiency));
        }
        non_negative("power_model.p_rf_chain", pm.p_rf_chain)?;
        non_negative("power_model.dac_coeff_exp", pm.dac_coeff_exp)?;
        non_negative("power_model.dac_coeff_lin", pm.dac_coeff_lin)?;
        non_negative("power_model.p_fixed_bs", pm.p_fixed_bs)?;
        non_negative("power_model.fronthaul_watts_per_bpshz", pm.fronthaul_watts_per_bpshz)?;

        positive("path_loss.d0", self.path_loss.d0)?;
        non_negative("path_loss.exponent", self.path_loss.exponent)?;

        self.solver
            .validate()
            .map_err(|e| invalid("solver", "valid tolerances and iteration caps", e))
    }
}
