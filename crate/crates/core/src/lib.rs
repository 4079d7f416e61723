//! Downlink cell-free mmWave massive MIMO with limited-capacity fronthaul and
//! low-resolution DACs.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: UPA steering vectors, geometric multipath channels, and the
//!   fixed RF combiner/precoder design (SVD + alternating projection).
//! - [`quantize`]: the additive quantization noise model (distortion factor,
//!   aggregate noise covariances, worst-case Gaussian rate bound).
//! - [`precode`]: effective channels, the cell-free ZF precoder, small-cell
//!   MRT/ZF/RZF baselines and the generic SINQR rate evaluator.
//! - [`maxmin`]: SQNR/power/fronthaul evaluators, the linear-system
//!   feasibility test, bisection, the fronthaul-noise root finder and the
//!   alternating optimisation loop.
//! - [`sim`]: configuration, Monte-Carlo orchestration, CDF/energy-efficiency
//!   aggregation and result files.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod linalg;
pub mod maxmin;
pub mod precode;
pub mod quantize;
pub mod sim;

pub use config::{Mode, PowerModel, SystemConfig};
pub use linalg::{CMatrix, CVector, C64};
pub use quantize::{QuantizationModel, Resolution};
