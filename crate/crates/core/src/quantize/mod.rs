//! Additive quantization noise model (AQNM) for B-bit DACs, fronthaul
//! compression noise statistics, and the worst-case Gaussian rate bound.

pub mod lloyd_max;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg::{CMatrix, C64};

/// Resolutions up to this many bits use the exact Lloyd-Max distortion.
pub const EXACT_TABLE_BITS: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizeError {
    #[error("invalid DAC resolution {0}: at least one bit is required")]
    InvalidResolution(u32),
    #[error("negative power coefficient {value} at index {index}")]
    NegativePower { index: usize, value: f64 },
    #[error("negative fronthaul noise deviation {0}")]
    NegativeSigma(f64),
    #[error("dimension mismatch: {0}")]
    SizeMismatch(String),
    #[error("negative SQNR {0}")]
    NegativeSqnr(f64),
}

/// DAC resolution in bits per real dimension, or an ideal (infinite) DAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resolution {
    Bits(u32),
    Infinite,
}

impl Resolution {
    pub fn is_infinite(self) -> bool {
        matches!(self, Resolution::Infinite)
    }

    /// Bit count, substituting `cap` for an infinite resolution.
    pub fn bits_or(self, cap: u32) -> u32 {
        match self {
            Resolution::Bits(b) => b,
            Resolution::Infinite => cap,
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Bits(b) => write!(f, "{b}"),
            Resolution::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Resolution::Infinite),
            other => other
                .parse::<u32>()
                .map(Resolution::Bits)
                .map_err(|_| format!("expected a bit count or `inf`, got `{s}`")),
        }
    }
}

impl Serialize for Resolution {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Resolution::Bits(b) => serializer.serialize_u32(*b),
            Resolution::Infinite => serializer.serialize_f64(f64::INFINITY),
        }
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ResolutionVisitor;

        impl Visitor<'_> for ResolutionVisitor {
            type Value = Resolution;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive bit count or inf")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Resolution, E> {
                u32::try_from(v)
                    .map(Resolution::Bits)
                    .map_err(|_| E::custom(format!("bit count {v} out of range")))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Resolution, E> {
                u64::try_from(v)
                    .map_err(|_| E::custom(format!("negative bit count {v}")))
                    .and_then(|v| self.visit_u64(v))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Resolution, E> {
                if v == f64::INFINITY {
                    Ok(Resolution::Infinite)
                } else if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(Resolution::Bits(v as u32))
                } else {
                    Err(E::custom(format!("invalid bit count {v}")))
                }
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Resolution, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(ResolutionVisitor)
    }
}

/// DAC resolution together with its distortion factor `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizationModel {
    pub bits: Resolution,
    pub rho: f64,
}

impl QuantizationModel {
    pub fn new(bits: Resolution) -> Result<Self, QuantizeError> {
        Ok(Self {
            bits,
            rho: distortion_factor(bits)?,
        })
    }

    /// Ideal DACs (`rho = 0`).
    pub fn ideal() -> Self {
        Self {
            bits: Resolution::Infinite,
            rho: 0.0,
        }
    }
}

/// High-resolution approximation `pi * sqrt(3) / 2 * 2^(-2B)`.
pub fn high_resolution_approximation(bits: u32) -> f64 {
    std::f64::consts::PI * 3.0_f64.sqrt() / 2.0 * 2.0_f64.powi(-2 * bits as i32)
}

fn exact_table() -> &'static [f64; EXACT_TABLE_BITS as usize] {
    static TABLE: OnceLock<[f64; EXACT_TABLE_BITS as usize]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [0.0; EXACT_TABLE_BITS as usize];
        for (b, slot) in table.iter_mut().enumerate() {
            *slot = lloyd_max::lloyd_max(1usize << (b + 1)).distortion;
        }
        table
    })
}

/// Normalised MSE of the `2^B`-level Lloyd-Max quantizer on a unit Gaussian.
///
/// Exact (cached) for `B <= 8`, the high-resolution approximation above that,
/// and zero for ideal DACs.
pub fn distortion_factor(bits: Resolution) -> Result<f64, QuantizeError> {
    match bits {
        Resolution::Infinite => Ok(0.0),
        Resolution::Bits(0) => Err(QuantizeError::InvalidResolution(0)),
        Resolution::Bits(b) if b <= EXACT_TABLE_BITS => Ok(exact_table()[(b - 1) as usize]),
        Resolution::Bits(b) => Ok(high_resolution_approximation(b)),
    }
}

/// Second moment of the aggregate DAC + fronthaul noise at one base station:
/// `rho (1 - rho) diag(F eta F^H) + (1 - rho) sigma^2 I`.
///
/// `eta` holds the per-user power coefficients used at this base station.
pub fn aggregate_noise_cov(
    f_m: &CMatrix,
    eta: &[f64],
    sigma_m: f64,
    rho: f64,
) -> Result<CMatrix, QuantizeError> {
    if eta.len() != f_m.ncols() {
        return Err(QuantizeError::SizeMismatch(format!(
            "precoder has {} columns but {} power coefficients were given",
            f_m.ncols(),
            eta.len()
        )));
    }
    if let Some((index, &value)) = eta.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(QuantizeError::NegativePower { index, value });
    }
    if sigma_m < 0.0 {
        return Err(QuantizeError::NegativeSigma(sigma_m));
    }
    let n_rf = f_m.nrows();
    let mut cov = CMatrix::zeros(n_rf, n_rf);
    for r in 0..n_rf {
        let signal: f64 = f_m.row(r).iter().zip(eta).map(|(f, e)| f.norm_sqr() * e).sum();
        cov[(r, r)] = C64::new(rho * (1.0 - rho) * signal + (1.0 - rho) * sigma_m * sigma_m, 0.0);
    }
    Ok(cov)
}

/// Block-diagonal assembly of the per-base-station noise covariances.
pub fn stacked_noise_cov(blocks: &[CMatrix]) -> Result<CMatrix, QuantizeError> {
    let Some(first) = blocks.first() else {
        return Err(QuantizeError::SizeMismatch("no covariance blocks".into()));
    };
    let n = first.nrows();
    if let Some(bad) = blocks.iter().position(|b| b.nrows() != n || b.ncols() != n) {
        return Err(QuantizeError::SizeMismatch(format!(
            "block {bad} is {}x{}, expected {n}x{n}",
            blocks[bad].nrows(),
            blocks[bad].ncols()
        )));
    }
    let total = n * blocks.len();
    let mut out = CMatrix::zeros(total, total);
    for (i, block) in blocks.iter().enumerate() {
        out.view_mut((i * n, i * n), (n, n)).copy_from(block);
    }
    Ok(out)
}

/// Worst-case-noise achievable rate `log2(1 + sqnr)`.
pub fn rate_lower_bound(sqnr: f64) -> Result<f64, QuantizeError> {
    if sqnr < 0.0 || sqnr.is_nan() {
        return Err(QuantizeError::NegativeSqnr(sqnr));
    }
    Ok(sqnr.ln_1p() / std::f64::consts::LN_2)
}
