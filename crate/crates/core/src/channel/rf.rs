//! Fixed RF combiners (users) and RF precoders (base stations).

use log::debug;

use super::projection::{alternating_projection, AP_MAX_ITERS, AP_TOL};
use super::{Assignment, ChannelError, ChannelRealization};
use crate::linalg::{hermitian_eigen_desc, svd_sorted, CMatrix, CVector, C64};

/// A base station whose effective RF channel had fewer than `N_RF`
/// significant singular values; the remaining columns were filled from the
/// trailing singular subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankWarning {
    pub bs: usize,
    pub rank: usize,
    pub n_rf: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfChains {
    /// `W_m`, `N_BS x N_RF`, entries of modulus `1/sqrt(N_BS)`.
    pub bs_precoders: Vec<CMatrix>,
    /// `w_k`, length `N_UE`, entries of modulus `1/sqrt(N_UE)`.
    pub ue_combiners: Vec<CVector>,
    pub warnings: Vec<RankWarning>,
}

/// Rotates a vector so its first non-negligible entry is real and positive.
fn canonical_phase(mut v: CVector) -> CVector {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(lead) = v.iter().find(|z| z.norm() > 1e-12 * scale).copied() {
        let rot = lead.conj() / lead.norm();
        v *= rot;
    }
    v
}

/// `w_k`: dominant left singular vector of the channel to the nearest base
/// station, projected to constant modulus `1/sqrt(N_UE)`.
pub fn design_combiners(channel: &ChannelRealization, assignment: &Assignment) -> Result<Vec<CVector>, ChannelError> {
    let n_ue = channel.ue_array.antennas();
    let target = 1.0 / (n_ue as f64).sqrt();
    assignment
        .nearest
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let h = &channel.matrices[k][m];
            let svd = svd_sorted(h);
            if !(svd.singular_values[0] > 0.0) {
                return Err(ChannelError::DegenerateChannel { user: k, bs: m });
            }
            let u0 = canonical_phase(svd.u.column(0).into_owned());
            let start = CMatrix::from_column_slice(n_ue, 1, u0.as_slice());
            let w = alternating_projection(&start, target, AP_MAX_ITERS, AP_TOL)?;
            Ok(w.column(0).into_owned())
        })
        .collect()
}

/// `W_m`: top-`N_RF` right singular vectors of the stacked effective RF
/// channel `[H_{k,m}^H w_k ...]^H` over the users served by base station `m`,
/// projected to constant modulus `1/sqrt(N_BS)`.
pub fn design_rf_precoders(
    channel: &ChannelRealization,
    combiners: &[CVector],
    assignment: &Assignment,
    n_rf: usize,
) -> Result<(Vec<CMatrix>, Vec<RankWarning>), ChannelError> {
    let n_bs = channel.bs_array.antennas();
    let target = 1.0 / (n_bs as f64).sqrt();
    let mut warnings = Vec::new();
    let mut precoders = Vec::with_capacity(assignment.served.len());

    for (m, users) in assignment.served.iter().enumerate() {
        let rows = CMatrix::from_fn(users.len(), n_bs, |i, c| {
            let k = users[i];
            let h = &channel.matrices[k][m];
            let w = &combiners[k];
            (0..h.nrows()).map(|r| w[r].conj() * h[(r, c)]).sum::<C64>()
        });

        // Right singular vectors, including the null space when rank < N_RF.
        let (eigenvalues, vectors) = hermitian_eigen_desc(&(rows.adjoint() * &rows));
        let top = eigenvalues[0].max(0.0);
        let rank = eigenvalues.iter().filter(|&&v| v > 1e-12 * top && top > 0.0).count();
        if rank < n_rf {
            debug!("base station {m}: effective RF channel rank {rank} < N_RF = {n_rf}, padding");
            warnings.push(RankWarning { bs: m, rank, n_rf });
        }

        let mut start = CMatrix::zeros(n_bs, n_rf);
        for c in 0..n_rf {
            let v = canonical_phase(vectors.column(c).into_owned());
            start.set_column(c, &v);
        }
        precoders.push(alternating_projection(&start, target, AP_MAX_ITERS, AP_TOL)?);
    }
    Ok((precoders, warnings))
}

/// Combiners followed by RF precoders.
pub fn design_rf_chains(
    channel: &ChannelRealization,
    assignment: &Assignment,
    n_rf: usize,
) -> Result<RfChains, ChannelError> {
    let ue_combiners = design_combiners(channel, assignment)?;
    let (bs_precoders, warnings) = design_rf_precoders(channel, &ue_combiners, assignment, n_rf)?;
    Ok(RfChains {
        bs_precoders,
        ue_combiners,
        warnings,
    })
}
