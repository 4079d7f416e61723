//! Geometric multipath mmWave channels over a planar deployment and the fixed
//! RF stage (user combiners and base-station RF precoders).

mod projection;
mod rf;

pub use projection::{
    alternating_projection, alternating_projection_traced, project_constant_modulus, project_semi_unitary,
    ProjectionTrace, AP_MAX_ITERS, AP_TOL,
};
pub use rf::{design_combiners, design_rf_chains, design_rf_precoders, RankWarning, RfChains};

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SystemConfig;
use crate::linalg::{CMatrix, CVector, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid array geometry {n_horizontal}x{n_vertical} with spacing {spacing}")]
    InvalidGeometry {
        n_horizontal: usize,
        n_vertical: usize,
        spacing: f64,
    },
    #[error("semi-unitary projection of a rank-deficient {rows}x{cols} matrix")]
    DegenerateProjection { rows: usize, cols: usize },
    #[error("channel between user {user} and base station {bs} is zero")]
    DegenerateChannel { user: usize, bs: usize },
    #[error("cannot split {users} users evenly over {stations} base stations")]
    UnevenAssignment { users: usize, stations: usize },
}

/// Uniform planar array: `n_horizontal` columns by `n_vertical` rows with
/// element spacing in carrier wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub n_horizontal: usize,
    pub n_vertical: usize,
    pub spacing: f64,
}

impl ArrayGeometry {
    pub fn new(n_horizontal: usize, n_vertical: usize, spacing: f64) -> Result<Self, ChannelError> {
        let g = Self {
            n_horizontal,
            n_vertical,
            spacing,
        };
        g.validate()?;
        Ok(g)
    }

    /// Half-wavelength spaced array.
    pub fn half_wavelength(n_horizontal: usize, n_vertical: usize) -> Self {
        Self {
            n_horizontal,
            n_vertical,
            spacing: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.n_horizontal == 0 || self.n_vertical == 0 || !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(ChannelError::InvalidGeometry {
                n_horizontal: self.n_horizontal,
                n_vertical: self.n_vertical,
                spacing: self.spacing,
            });
        }
        Ok(())
    }

    pub fn antennas(&self) -> usize {
        self.n_horizontal * self.n_vertical
    }
}

/// Array response for the element at column `p`, row `q`:
/// `exp(j 2 pi d (p sin(el) sin(az) + q cos(el)))`, flattened as `q * n_h + p`.
pub fn upa_response(geometry: &ArrayGeometry, azimuth: f64, elevation: f64) -> Result<CVector, ChannelError> {
    geometry.validate()?;
    let n_h = geometry.n_horizontal;
    let horizontal = elevation.sin() * azimuth.sin();
    let vertical = elevation.cos();
    let k = 2.0 * PI * geometry.spacing;
    Ok(CVector::from_fn(geometry.antennas(), |idx, _| {
        let (q, p) = (idx / n_h, idx % n_h);
        C64::from_polar(1.0, k * (p as f64 * horizontal + q as f64 * vertical))
    }))
}

/// One propagation path between a base station and a user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: C64,
    pub aoa_azimuth: f64,
    pub aoa_elevation: f64,
    pub aod_azimuth: f64,
    pub aod_elevation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Log-distance path loss `PL(d) = pl0_db + 10 exponent log10(d / d0)` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossModel {
    pub pl0_db: f64,
    pub d0: f64,
    pub exponent: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            pl0_db: 61.4,
            d0: 1.0,
            exponent: 2.8,
        }
    }
}

impl PathLossModel {
    /// Linear power gain `10^(-PL/10)`; distances below `d0` are clamped to `d0`.
    pub fn linear_gain(&self, distance: f64) -> f64 {
        let d = distance.max(self.d0);
        let pl_db = self.pl0_db + 10.0 * self.exponent * (d / self.d0).log10();
        10f64.powf(-pl_db / 10.0)
    }
}

/// Sum of `gain * a_UE(aoa) a_BS(aod)^H` over the paths of one link.
pub fn assemble_link(ue: &ArrayGeometry, bs: &ArrayGeometry, paths: &[PathParams]) -> Result<CMatrix, ChannelError> {
    let mut h = CMatrix::zeros(ue.antennas(), bs.antennas());
    for path in paths {
        let a_ue = upa_response(ue, path.aoa_azimuth, path.aoa_elevation)?;
        let a_bs = upa_response(bs, path.aod_azimuth, path.aod_elevation)?;
        h += (a_ue * a_bs.adjoint()) * path.gain;
    }
    Ok(h)
}

/// Paths and assembled `N_UE x N_BS` matrices for every (user, base station) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub ue_array: ArrayGeometry,
    pub bs_array: ArrayGeometry,
    /// `paths[k][m]`
    pub paths: Vec<Vec<Vec<PathParams>>>,
    /// `matrices[k][m]`
    pub matrices: Vec<Vec<CMatrix>>,
    pub bs_positions: Vec<Position>,
    pub ue_positions: Vec<Position>,
}

impl ChannelRealization {
    pub fn from_paths(
        ue_array: ArrayGeometry,
        bs_array: ArrayGeometry,
        paths: Vec<Vec<Vec<PathParams>>>,
        bs_positions: Vec<Position>,
        ue_positions: Vec<Position>,
    ) -> Result<Self, ChannelError> {
        let matrices = paths
            .iter()
            .map(|per_bs| {
                per_bs
                    .iter()
                    .map(|link| assemble_link(&ue_array, &bs_array, link))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            ue_array,
            bs_array,
            paths,
            matrices,
            bs_positions,
            ue_positions,
        })
    }

    pub fn num_users(&self) -> usize {
        self.matrices.len()
    }

    pub fn num_bs(&self) -> usize {
        self.bs_positions.len()
    }
}

/// Base stations on a staggered (hexagonal-like) grid with spacing `isd`.
pub fn bs_grid(m: usize, isd: f64) -> Vec<Position> {
    let cols = (m as f64).sqrt().ceil().max(1.0) as usize;
    let row_pitch = isd * 3f64.sqrt() / 2.0;
    (0..m)
        .map(|i| {
            let (row, col) = (i / cols, i % cols);
            let offset = if row % 2 == 1 { isd / 2.0 } else { 0.0 };
            Position::new(col as f64 * isd + offset, row as f64 * row_pitch)
        })
        .collect()
}

/// Axis-aligned deployment area: the base-station hull padded by `isd / 2`.
fn deployment_area(bs: &[Position], isd: f64) -> (Position, Position) {
    let pad = isd / 2.0;
    let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&Position) -> f64| bs.iter().map(sel).fold(init, f);
    let min = Position::new(
        fold(f64::min, f64::INFINITY, |p| p.x) - pad,
        fold(f64::min, f64::INFINITY, |p| p.y) - pad,
    );
    let max = Position::new(
        fold(f64::max, f64::NEG_INFINITY, |p| p.x) + pad,
        fold(f64::max, f64::NEG_INFINITY, |p| p.y) + pad,
    );
    (min, max)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(scale * re, scale * im)
}

/// Draws one deployment and its multipath channels.
pub fn draw_channel<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<ChannelRealization, ChannelError> {
    let bs_positions = bs_grid(config.m, config.isd);
    let (lo, hi) = deployment_area(&bs_positions, config.isd);
    let ue_positions: Vec<Position> = (0..config.k)
        .map(|_| Position::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y)))
        .collect();

    let paths_per_link = config.paths_per_link;
    let paths = ue_positions
        .iter()
        .map(|ue| {
            bs_positions
                .iter()
                .map(|bs| {
                    let variance = config.path_loss.linear_gain(ue.distance(bs)) / paths_per_link as f64;
                    (0..paths_per_link)
                        .map(|_| PathParams {
                            gain: complex_gaussian(rng, variance),
                            aoa_azimuth: rng.random_range(-PI..=PI),
                            aoa_elevation: rng.random_range(0.0..=PI),
                            aod_azimuth: rng.random_range(-PI..=PI),
                            aod_elevation: rng.random_range(0.0..=PI),
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    ChannelRealization::from_paths(config.n_ue, config.n_bs, paths, bs_positions, ue_positions)
}

/// Nearest base station per user (for combiner design) and capacity-limited
/// serving sets of exactly `K/M` users per base station.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// `nearest[k]`: geometrically nearest base station of user `k`.
    pub nearest: Vec<usize>,
    /// `served[m]`: users served by base station `m`, ascending.
    pub served: Vec<Vec<usize>>,
}

/// Users are visited in order of distance to their nearest base station and
/// placed at the closest base station that still has room.
pub fn nearest_bs_assignment(bs: &[Position], users: &[Position]) -> Result<Assignment, ChannelError> {
    let (m, k) = (bs.len(), users.len());
    if m == 0 || k % m != 0 {
        return Err(ChannelError::UnevenAssignment { users: k, stations: m });
    }
    let capacity = k / m;

    let rankings: Vec<Vec<usize>> = users
        .iter()
        .map(|u| {
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| u.distance(&bs[a]).total_cmp(&u.distance(&bs[b])).then(a.cmp(&b)));
            order
        })
        .collect();
    let nearest: Vec<usize> = rankings.iter().map(|r| r[0]).collect();

    let mut visit: Vec<usize> = (0..k).collect();
    visit.sort_by(|&a, &b| {
        let da = users[a].distance(&bs[nearest[a]]);
        let db = users[b].distance(&bs[nearest[b]]);
        da.total_cmp(&db).then(a.cmp(&b))
    });

    let mut served = vec![Vec::with_capacity(capacity); m];
    for user in visit {
        let station = rankings[user]
            .iter()
            .copied()
            .find(|&s| served[s].len() < capacity)
            .expect("total capacity equals the number of users");
        served[station].push(user);
    }
    for list in &mut served {
        list.sort_unstable();
    }
    Ok(Assignment { nearest, served })
}
