#![allow(dead_code)]

use cellfree::channel::{design_rf_chains, draw_channel, nearest_bs_assignment, RfChains};
use cellfree::precode::{effective_channel, zf_precoder, EffectiveChannel, PrecoderSet};
use cellfree::sim::trial_rng;
use cellfree::{CMatrix, SystemConfig, C64};
use rand::Rng;

pub struct Instance {
    pub effective: EffectiveChannel,
    pub rf: RfChains,
    pub precoders: PrecoderSet,
    pub served: Vec<Vec<usize>>,
}

/// The cell-free pipeline of trial `index` up to the ZF precoder. `None` if
/// the precoder was rejected.
pub fn desk_instance(config: &SystemConfig, index: usize) -> Option<Instance> {
    let mut rng = trial_rng(config.seed, index);
    let channel = draw_channel(config, &mut rng).unwrap();
    let assignment = nearest_bs_assignment(&channel.bs_positions, &channel.ue_positions).unwrap();
    let rf = design_rf_chains(&channel, &assignment, config.n_rf).unwrap();
    let effective = effective_channel(&channel, &rf, config.awgn_var());
    let precoders = zf_precoder(&effective).ok()?;
    Some(Instance {
        effective,
        rf,
        precoders,
        served: assignment.served,
    })
}

pub fn complex_gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let normal = rand_distr::StandardNormal;
    CMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample::<f64, _>(normal), rng.sample::<f64, _>(normal)) / 2f64.sqrt()
    })
}

/// `log2 det(I + F diag(eta) F^H / s^2)` through an LU determinant of the
/// smaller side, `det(I + B B^H / s^2) = det(I + B^H B / s^2)`.
pub fn log2_det_rate(f: &CMatrix, eta: &[f64], s: f64) -> f64 {
    let b = CMatrix::from_fn(f.nrows(), f.ncols(), |r, c| f[(r, c)] * eta[c].sqrt());
    let gram = if f.ncols() < f.nrows() { b.adjoint() * &b } else { &b * b.adjoint() };
    let n = gram.nrows();
    (CMatrix::identity(n, n) + gram / C64::new(s * s, 0.0)).determinant().norm().log2()
}

/// `||W f||^2` summed with the DAC-distortion term, from explicit entries.
pub fn power_oracle(w: &CMatrix, f: &CMatrix, eta: &[f64], sigma: f64, rho: f64) -> f64 {
    let (n_bs, n_rf) = w.shape();
    let mut total = 0.0;
    for i in 0..f.ncols() {
        for a in 0..n_bs {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..n_rf {
                acc += w[(a, r)] * f[(r, i)];
            }
            total += (1.0 - rho).powi(2) * eta[i] * acc.norm_sqr();
        }
        for r in 0..n_rf {
            let col: f64 = (0..n_bs).map(|a| w[(a, r)].norm_sqr()).sum();
            total += rho * (1.0 - rho) * eta[i] * f[(r, i)].norm_sqr() * col;
        }
    }
    let rf: f64 = w.iter().map(|z| z.norm_sqr()).sum();
    total + (1.0 - rho) * sigma * sigma * rf
}
