//! Result files: run manifest, rate CDF and energy-efficiency summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use serde::Serialize;

use super::{aggregate_cdf, RunReport, SimError};
use crate::config::SystemConfig;

/// Stated in every manifest.
pub const EE_DEFINITION: &str =
    "ee_bits_per_joule = W * sum_k rate_k / (K * total_consumption), averaged over successful trials; \
     total_consumption = sum_m [P_m / pa_efficiency + N_RF (p_rf_chain + 2 (dac_coeff_exp 2^B + dac_coeff_lin B)) \
     + p_fixed_bs + fronthaul_watts_per_bpshz C_m]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    /// JSON.
    Structured,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "structured" | "json" => Ok(Self::Structured),
            other => Err(format!("unknown output format `{other}` (expected csv or structured)")),
        }
    }
}

/// `%.{digits}g`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn sig12(x: f64) -> String {
    format_sig(x, 12)
}

/// Value as printed, parsed back.
fn rounded(x: f64) -> f64 {
    sig12(x).parse().unwrap_or(x)
}

fn version_string() -> String {
    let pkg = env!("CARGO_PKG_VERSION");
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .map_or_else(|| pkg.to_string(), |g| format!("{pkg}+{g}"))
}

#[derive(Serialize)]
struct Manifest<'a> {
    run: RunInfo,
    config: &'a SystemConfig,
}

#[derive(Serialize)]
struct RunInfo {
    version: String,
    ee_definition: &'static str,
    successful_trials: usize,
    flagged_trials: Vec<usize>,
}

#[derive(Serialize)]
struct CdfRow<'a> {
    mode: &'a str,
    bits: String,
    fronthaul_bpshz: String,
    rate_bpshz: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct EeRow<'a> {
    mode: &'a str,
    bits: String,
    fronthaul_bpshz: String,
    ee_bits_per_joule: f64,
}

fn write(path: PathBuf, contents: String) -> Result<PathBuf, SimError> {
    fs::write(&path, contents).map_err(|source| SimError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Parses the `[config]` table of a manifest written by [`emit_results`].
pub fn config_from_manifest(text: &str) -> Result<SystemConfig, SimError> {
    #[derive(serde::Deserialize)]
    struct Partial {
        config: SystemConfig,
    }
    toml::from_str::<Partial>(text)
        .map(|p| p.config)
        .map_err(|e| SimError::Serialize(e.to_string()))
}

/// Writes `manifest.toml` plus `cdf` and `ee` tables (`.csv` or `.json`)
/// into `dir`, creating it if needed. Returns the written paths.
pub fn emit_results(report: &RunReport, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>, SimError> {
    fs::create_dir_all(dir).map_err(|source| SimError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let config = &report.config;

    let manifest = Manifest {
        run: RunInfo {
            version: version_string(),
            ee_definition: EE_DEFINITION,
            successful_trials: report.metrics.len(),
            flagged_trials: report.flagged.iter().map(|f| f.trial).collect(),
        },
        config,
    };
    let manifest = toml::to_string(&manifest).map_err(|e| SimError::Serialize(e.to_string()))?;
    let mut paths = vec![write(dir.join("manifest.toml"), manifest)?];

    let mode = config.mode.as_str();
    let bits = config.b.to_string();
    let fronthaul = sig12(config.c);
    let cdf = aggregate_cdf(&report.pooled_rates())?;
    let ee = report.mean_ee()?;

    match format {
        OutputFormat::Csv => {
            let mut text = String::from("mode,bits,fronthaul_bpshz,rate_bpshz,cdf\n");
            for (rate, frac) in &cdf {
                writeln!(text, "{mode},{bits},{fronthaul},{},{}", sig12(*rate), sig12(*frac)).unwrap();
            }
            paths.push(write(dir.join("cdf.csv"), text)?);
            let text = format!("mode,bits,fronthaul_bpshz,ee_bits_per_joule\n{mode},{bits},{fronthaul},{}\n", sig12(ee));
            paths.push(write(dir.join("ee.csv"), text)?);
        }
        OutputFormat::Structured => {
            let rows: Vec<CdfRow> = cdf
                .iter()
                .map(|&(rate, frac)| CdfRow {
                    mode,
                    bits: bits.clone(),
                    fronthaul_bpshz: fronthaul.clone(),
                    rate_bpshz: rounded(rate),
                    cdf: rounded(frac),
                })
                .collect();
            let text = serde_json::to_string_pretty(&rows).map_err(|e| SimError::Serialize(e.to_string()))?;
            paths.push(write(dir.join("cdf.json"), text)?);
            let row = [EeRow {
                mode,
                bits,
                fronthaul_bpshz: fronthaul,
                ee_bits_per_joule: rounded(ee),
            }];
            let text = serde_json::to_string_pretty(&row).map_err(|e| SimError::Serialize(e.to_string()))?;
            paths.push(write(dir.join("ee.json"), text)?);
        }
    }
    Ok(paths)
}
