//! Effective channels, the cell-free ZF precoder, small-cell baselines and the
//! generic per-user rate lower bound.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::channel::{ChannelRealization, RfChains};
use crate::linalg::{hermitian_eigenvalues_desc, CMatrix, CVector, C64};
use crate::maxmin;
use crate::quantize::{aggregate_noise_cov, rate_lower_bound, stacked_noise_cov, QuantizationModel, QuantizeError};

/// Gram matrices with a larger condition number are rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e12;
/// Above this condition number the right inverse is taken via QR.
const SVD_FALLBACK_CONDITION: f64 = 1e8;
/// Accepted ZF precoders satisfy `||H F - I||_F <= ZF_RESIDUAL_TOL`.
pub const ZF_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecodeError {
    #[error("precoder is singular: {reason}")]
    Singular { reason: String },
    #[error("base station {bs} has an all-zero precoder and cannot be scaled to full power")]
    Degenerate { bs: usize },
    #[error("dimension mismatch: {0}")]
    SizeMismatch(String),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
}

/// Baseband channel seen through the RF stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    /// `per_link[k][m] = W_m^H H_{k,m}^H w_k`, length `N_RF`.
    pub per_link: Vec<Vec<CVector>>,
    /// `K x (M N_RF)`, row `k` is `[h_{k,1}^H ... h_{k,M}^H]`.
    pub stacked: CMatrix,
    /// `N0 W ||w_k||^2`.
    pub awgn_var: f64,
}

impl EffectiveChannel {
    pub fn from_per_link(per_link: Vec<Vec<CVector>>, awgn_var: f64) -> Self {
        let k = per_link.len();
        let m = per_link.first().map_or(0, Vec::len);
        let n_rf = per_link.first().and_then(|r| r.first()).map_or(0, |v| v.len());
        let stacked = CMatrix::from_fn(k, m * n_rf, |row, col| per_link[row][col / n_rf][col % n_rf].conj());
        Self {
            per_link,
            stacked,
            awgn_var,
        }
    }

    pub fn num_users(&self) -> usize {
        self.stacked.nrows()
    }

    pub fn num_bs(&self) -> usize {
        self.per_link.first().map_or(0, Vec::len)
    }

    pub fn n_rf(&self) -> usize {
        self.per_link.first().and_then(|r| r.first()).map_or(0, |v| v.len())
    }

    /// `h_k`, the stacked per-link vectors of user `k` (length `M N_RF`).
    pub fn user_vector(&self, k: usize) -> CVector {
        self.stacked.row(k).adjoint()
    }
}

/// `h_{k,m} = W_m^H H_{k,m}^H w_k`. Combiners are unit norm, so the AWGN
/// variance is `noise_power * ||w_k||^2 = noise_power`.
pub fn effective_channel(channel: &ChannelRealization, rf: &RfChains, noise_power: f64) -> EffectiveChannel {
    let per_link = channel
        .matrices
        .iter()
        .zip(&rf.ue_combiners)
        .map(|(per_bs, w)| {
            per_bs
                .iter()
                .zip(&rf.bs_precoders)
                .map(|(h, w_m)| w_m.adjoint() * (h.adjoint() * w))
                .collect()
        })
        .collect();
    let norm_sq = rf.ue_combiners.iter().map(|w| w.norm_squared()).fold(0.0, f64::max);
    EffectiveChannel::from_per_link(per_link, noise_power * norm_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrecoderKind {
    CellfreeZf,
    SmallcellMrt,
    SmallcellZf,
    SmallcellRzf,
}

/// Stacked baseband precoder `F` (`M N_RF x K`) and its per-BS blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub full: CMatrix,
    /// `F_m`, `N_RF x K`.
    pub blocks: Vec<CMatrix>,
    pub kind: PrecoderKind,
}

impl PrecoderSet {
    pub fn from_full(full: CMatrix, n_rf: usize, kind: PrecoderKind) -> Self {
        let m = full.nrows() / n_rf;
        let blocks = (0..m).map(|i| full.rows(i * n_rf, n_rf).into_owned()).collect();
        Self { full, blocks, kind }
    }

    pub fn from_blocks(blocks: Vec<CMatrix>, kind: PrecoderKind) -> Self {
        let n_rf = blocks.first().map_or(0, |b| b.nrows());
        let k = blocks.first().map_or(0, |b| b.ncols());
        let mut full = CMatrix::zeros(n_rf * blocks.len(), k);
        for (i, b) in blocks.iter().enumerate() {
            full.rows_mut(i * n_rf, n_rf).copy_from(b);
        }
        Self { full, blocks, kind }
    }

    pub fn num_bs(&self) -> usize {
        self.blocks.len()
    }
}

fn condition_number(gram: &CMatrix) -> f64 {
    let eig = hermitian_eigenvalues_desc(gram);
    let (max, min) = (eig[0], eig[eig.len() - 1]);
    if min <= 0.0 || !(max > 0.0) {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Minimum-norm right inverse `H^H (H H^H)^{-1}` of a full-row-rank `H`.
fn right_inverse(h: &CMatrix) -> Result<CMatrix, PrecodeError> {
    let (rows, cols) = h.shape();
    if rows > cols {
        return Err(PrecodeError::Singular {
            reason: format!("{rows}x{cols} channel cannot have full row rank"),
        });
    }
    let gram = h * h.adjoint();
    let cond = condition_number(&gram);
    if cond > MAX_GRAM_CONDITION {
        return Err(PrecodeError::Singular {
            reason: format!("Gram matrix condition number {cond:.3e} exceeds {MAX_GRAM_CONDITION:.0e}"),
        });
    }
    if cond <= SVD_FALLBACK_CONDITION {
        if let Some(chol) = gram.clone().cholesky() {
            return Ok(h.adjoint() * chol.inverse());
        }
    }
    // H^H = Q R gives H = R^H Q^H and the right inverse Q R^{-H}.
    let qr = h.adjoint().qr();
    let r_adj = qr.r().adjoint();
    let r_inv_adj = r_adj
        .solve_lower_triangular(&CMatrix::identity(rows, rows))
        .ok_or_else(|| PrecodeError::Singular {
            reason: "triangular factor is singular".into(),
        })?;
    Ok(qr.q() * r_inv_adj)
}

/// Cell-free ZF: `F` is the pseudoinverse of the stacked effective channel.
pub fn zf_precoder(effective: &EffectiveChannel) -> Result<PrecoderSet, PrecodeError> {
    let h = &effective.stacked;
    let f = right_inverse(h)?;
    let residual = crate::linalg::frobenius(&(h * &f - CMatrix::identity(h.nrows(), h.nrows())));
    if !(residual <= ZF_RESIDUAL_TOL) {
        return Err(PrecodeError::Singular {
            reason: format!("ZF residual {residual:.3e} exceeds {ZF_RESIDUAL_TOL:.0e}"),
        });
    }
    Ok(PrecoderSet::from_full(f, effective.n_rf(), PrecoderKind::CellfreeZf))
}

/// Per-BS baselines. Each base station precodes only for `served[m]` using its
/// local channel `H_loc` (rows `h_{k,m}^H`); other users get zero columns.
pub fn smallcell_precoders(
    effective: &EffectiveChannel,
    served: &[Vec<usize>],
    kind: PrecoderKind,
    regularization: f64,
) -> Result<PrecoderSet, PrecodeError> {
    if served.len() != effective.num_bs() {
        return Err(PrecodeError::SizeMismatch(format!(
            "{} serving sets for {} base stations",
            served.len(),
            effective.num_bs()
        )));
    }
    let n_rf = effective.n_rf();
    let k_total = effective.num_users();
    let mut blocks = Vec::with_capacity(served.len());
    for (m, users) in served.iter().enumerate() {
        let h_loc = CMatrix::from_fn(users.len(), n_rf, |i, r| effective.per_link[users[i]][m][r].conj());
        let f_loc = match kind {
            PrecoderKind::SmallcellMrt => h_loc.adjoint(),
            PrecoderKind::SmallcellZf => right_inverse(&h_loc).map_err(|e| PrecodeError::Singular {
                reason: format!("base station {m}: {e}"),
            })?,
            PrecoderKind::SmallcellRzf => {
                let mut gram = &h_loc * h_loc.adjoint();
                for i in 0..users.len() {
                    gram[(i, i)] += C64::new(regularization, 0.0);
                }
                let inv = gram.try_inverse().ok_or_else(|| PrecodeError::Singular {
                    reason: format!("base station {m}: regularised Gram matrix is singular"),
                })?;
                h_loc.adjoint() * inv
            }
            PrecoderKind::CellfreeZf => {
                return Err(PrecodeError::SizeMismatch("cell-free ZF is not a small-cell precoder".into()))
            }
        };
        let mut block = CMatrix::zeros(n_rf, k_total);
        for (i, &k) in users.iter().enumerate() {
            block.set_column(k, &f_loc.column(i));
        }
        blocks.push(block);
    }
    Ok(PrecoderSet::from_blocks(blocks, kind))
}

/// Per-(m,k) power coefficients with every base station using `eta`.
pub fn broadcast_eta(eta: &[f64], num_bs: usize) -> DMatrix<f64> {
    DMatrix::from_fn(num_bs, eta.len(), |_, k| eta[k])
}

/// SINQR of every user under the worst-case Gaussian noise assumption, with
/// inter-user interference and the aggregate DAC/fronthaul noise.
///
/// `eta` is `M x K` (`eta[(m, k)]` is the coefficient of user `k` at BS `m`).
pub fn general_sinqr(
    effective: &EffectiveChannel,
    precoders: &PrecoderSet,
    eta: &DMatrix<f64>,
    sigma: &[f64],
    quant: &QuantizationModel,
) -> Result<Vec<f64>, PrecodeError> {
    let (m_total, k_total) = (effective.num_bs(), effective.num_users());
    if eta.shape() != (m_total, k_total) || sigma.len() != m_total || precoders.num_bs() != m_total {
        return Err(PrecodeError::SizeMismatch(format!(
            "eta {:?}, sigma {}, precoder blocks {} for M = {m_total}, K = {k_total}",
            eta.shape(),
            sigma.len(),
            precoders.num_bs()
        )));
    }
    let rho = quant.rho;
    let gain = (1.0 - rho) * (1.0 - rho);

    let covs = precoders
        .blocks
        .iter()
        .enumerate()
        .map(|(m, f_m)| {
            let eta_m: Vec<f64> = eta.row(m).iter().copied().collect();
            aggregate_noise_cov(f_m, &eta_m, sigma[m], rho)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let c_q = stacked_noise_cov(&covs)?;

    let sqrt_eta = eta.map(f64::sqrt);
    let mut out = Vec::with_capacity(k_total);
    for k in 0..k_total {
        // a[i] = sum_m h_{k,m}^H f_{m,i} sqrt(eta_{m,i})
        let amplitude = |i: usize| -> C64 {
            (0..m_total)
                .map(|m| {
                    let h = &effective.per_link[k][m];
                    let f = precoders.blocks[m].column(i);
                    h.dotc(&f) * sqrt_eta[(m, i)]
                })
                .sum()
        };
        let desired = gain * amplitude(k).norm_sqr();
        let interference: f64 = (0..k_total).filter(|&i| i != k).map(|i| gain * amplitude(i).norm_sqr()).sum();
        let h_k = effective.user_vector(k);
        let quant_noise = h_k.dotc(&(&c_q * &h_k)).re;
        out.push(desired / (interference + quant_noise + effective.awgn_var));
    }
    Ok(out)
}

/// Per-user achievable rate lower bounds `log2(1 + SINQR_k)` in bps/Hz.
pub fn general_rate_bounds(
    effective: &EffectiveChannel,
    precoders: &PrecoderSet,
    eta: &DMatrix<f64>,
    sigma: &[f64],
    quant: &QuantizationModel,
) -> Result<Vec<f64>, PrecodeError> {
    general_sinqr(effective, precoders, eta, sigma, quant)?
        .into_iter()
        .map(|s| rate_lower_bound(s).map_err(PrecodeError::from))
        .collect()
}

/// Full-power scaling for small-cell precoders: every served user of base
/// station `m` gets the same coefficient, chosen so that `P_m = power_budget`
/// with no fronthaul noise.
pub fn smallcell_full_power_scaling(
    precoders: &PrecoderSet,
    rf: &RfChains,
    served: &[Vec<usize>],
    quant: &QuantizationModel,
    power_budget: f64,
) -> Result<DMatrix<f64>, PrecodeError> {
    let k_total = precoders.full.ncols();
    let mut eta = DMatrix::zeros(precoders.num_bs(), k_total);
    for (m, users) in served.iter().enumerate() {
        let mut unit = vec![0.0; k_total];
        for &k in users {
            unit[k] = 1.0;
        }
        let p_unit = maxmin::bs_power(&unit, 0.0, m, precoders, rf, quant);
        if !(p_unit > 0.0) {
            return Err(PrecodeError::Degenerate { bs: m });
        }
        let level = power_budget / p_unit;
        for &k in users {
            eta[(m, k)] = level;
        }
    }
    Ok(eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn scalar_effective(h: &[C64], awgn: f64) -> EffectiveChannel {
        // K users, M = 1, N_RF = 1
        let per_link = h.iter().map(|&v| vec![CVector::from_element(1, v)]).collect();
        EffectiveChannel::from_per_link(per_link, awgn)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(rows, cols, |_, _| c(next(), next()))
    }

    fn effective_from_stacked(stacked: &CMatrix, m: usize, awgn: f64) -> EffectiveChannel {
        let n_rf = stacked.ncols() / m;
        let per_link = (0..stacked.nrows())
            .map(|k| {
                (0..m)
                    .map(|b| CVector::from_fn(n_rf, |r, _| stacked[(k, b * n_rf + r)].conj()))
                    .collect()
            })
            .collect();
        EffectiveChannel::from_per_link(per_link, awgn)
    }

    #[test]
    fn stacked_rows_are_conjugated_links() {
        let s = random_matrix(3, 8, 1);
        let eff = effective_from_stacked(&s, 2, 1.0);
        assert_eq!(eff.stacked, s);
        for k in 0..3 {
            let e_k = CVector::from_fn(3, |i, _| if i == k { c(1.0, 0.0) } else { c(0.0, 0.0) });
            let row = s.transpose() * e_k;
            for m in 0..2 {
                for r in 0..4 {
                    assert_eq!(row[m * 4 + r], eff.per_link[k][m][r].conj());
                }
            }
        }
    }

    #[test]
    fn zf_identity_and_scaled_identity() {
        let eff = effective_from_stacked(&CMatrix::identity(4, 4), 2, 1.0);
        let f = zf_precoder(&eff).unwrap();
        assert!(frobenius(&(f.full - CMatrix::identity(4, 4))) < 1e-14);

        let eff = effective_from_stacked(&CMatrix::identity(4, 4).scale(2.0), 2, 1.0);
        let f = zf_precoder(&eff).unwrap();
        assert!(frobenius(&(f.full - CMatrix::identity(4, 4).scale(0.5))) < 1e-14);
    }

    #[test]
    fn zf_random_residual_and_blocks() {
        let h = random_matrix(4, 8, 42);
        let eff = effective_from_stacked(&h, 2, 1.0);
        let f = zf_precoder(&eff).unwrap();
        assert!(frobenius(&(&h * &f.full - CMatrix::identity(4, 4))) <= 1e-10);
        let rebuilt = PrecoderSet::from_blocks(f.blocks.clone(), f.kind);
        assert_eq!(rebuilt.full, f.full);
    }

    #[test]
    fn zf_rejects_rank_deficient_channel() {
        let mut h = random_matrix(3, 4, 5);
        let row0 = h.row(0).into_owned();
        h.set_row(2, &row0);
        let eff = effective_from_stacked(&h, 2, 1.0);
        assert!(matches!(zf_precoder(&eff), Err(PrecodeError::Singular { .. })));

        let tall = effective_from_stacked(&random_matrix(5, 4, 6), 2, 1.0);
        assert!(matches!(zf_precoder(&tall), Err(PrecodeError::Singular { .. })));
    }

    #[test]
    fn zf_svd_fallback_on_poor_conditioning() {
        let mut h = random_matrix(2, 4, 9);
        let row0 = h.row(0).into_owned();
        let perturbed = &row0 + h.row(1).scale(1e-5);
        h.set_row(1, &perturbed);
        let eff = effective_from_stacked(&h, 2, 1.0);
        let f = zf_precoder(&eff).unwrap();
        assert!(frobenius(&(&h * &f.full - CMatrix::identity(2, 2))) <= ZF_RESIDUAL_TOL);
    }

    #[test]
    fn mrt_single_row() {
        let eff = scalar_effective(&[c(0.6, 0.8)], 1.0);
        let f = smallcell_precoders(&eff, &[vec![0]], PrecoderKind::SmallcellMrt, 0.0).unwrap();
        // H_loc = [h^H] = [0.6 - 0.8j]; F_loc = H_loc^H = [0.6 + 0.8j]
        assert!((f.full[(0, 0)] - c(0.6, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn rzf_scalar_identity() {
        let h = c(0.3, -1.2);
        let alpha = 0.7;
        let eff = scalar_effective(&[h], 1.0);
        let f = smallcell_precoders(&eff, &[vec![0]], PrecoderKind::SmallcellRzf, alpha).unwrap();
        // H_loc = conj(h); F = h / (|h|^2 + alpha)
        let expected = h / (h.norm_sqr() + alpha);
        assert!((f.full[(0, 0)] - expected).norm() < 1e-15);
    }

    #[test]
    fn rzf_tends_to_zf() {
        let h = random_matrix(2, 4, 17);
        let eff = effective_from_stacked(&h, 1, 1.0);
        let served = vec![vec![0, 1]];
        let zf = smallcell_precoders(&eff, &served, PrecoderKind::SmallcellZf, 0.0).unwrap();
        let rzf = smallcell_precoders(&eff, &served, PrecoderKind::SmallcellRzf, 1e-10).unwrap();
        assert!(frobenius(&(zf.full - rzf.full)) < 1e-6);
    }

    #[test]
    fn smallcell_unserved_users_get_zero_columns() {
        let h = random_matrix(4, 8, 3);
        let eff = effective_from_stacked(&h, 2, 1.0);
        let served = vec![vec![0, 2], vec![1, 3]];
        let f = smallcell_precoders(&eff, &served, PrecoderKind::SmallcellZf, 0.0).unwrap();
        for k in [1, 3] {
            assert!(f.blocks[0].column(k).iter().all(|z| *z == c(0.0, 0.0)));
        }
        for k in [0, 2] {
            assert!(f.blocks[1].column(k).iter().all(|z| *z == c(0.0, 0.0)));
        }
        // local ZF nulls the other served user at the same BS
        let h0 = &eff.per_link[0][0];
        assert!(h0.dotc(&f.blocks[0].column(2)).norm() < 1e-12);
        assert!((h0.dotc(&f.blocks[0].column(0)) - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn sinqr_two_user_mrt_example() {
        // K = 2, M = 1, h = [1, 1], MRT f = [1, 1], eta = 1, rho = 0, sigma2 = 1.
        let eff = scalar_effective(&[c(1.0, 0.0), c(1.0, 0.0)], 1.0);
        let f = smallcell_precoders(&eff, &[vec![0, 1]], PrecoderKind::SmallcellMrt, 0.0).unwrap();
        let eta = DMatrix::from_element(1, 2, 1.0);
        let s = general_sinqr(&eff, &f, &eta, &[0.0], &QuantizationModel::ideal()).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15);
        let r = general_rate_bounds(&eff, &f, &eta, &[0.0], &QuantizationModel::ideal()).unwrap();
        assert!((r[0] - 1.5f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn zf_without_distortion_gives_eta_over_noise() {
        let h = random_matrix(3, 6, 77);
        let eff = effective_from_stacked(&h, 2, 0.25);
        let f = zf_precoder(&eff).unwrap();
        let eta_k = [0.5, 1.0, 2.0];
        let eta = broadcast_eta(&eta_k, 2);
        let r = general_rate_bounds(&eff, &f, &eta, &[0.0, 0.0], &QuantizationModel::ideal()).unwrap();
        for k in 0..3 {
            assert!((r[k] - (1.0 + eta_k[k] / 0.25).log2()).abs() < 1e-9);
        }
    }

    #[test]
    fn single_user_has_no_interference() {
        let eff = scalar_effective(&[c(2.0, 0.0)], 1.0);
        let f = PrecoderSet::from_full(CMatrix::from_element(1, 1, c(0.5, 0.0)), 1, PrecoderKind::CellfreeZf);
        let quant = QuantizationModel { bits: crate::Resolution::Bits(1), rho: 0.5 };
        let eta = DMatrix::from_element(1, 1, 1.0);
        let s = general_sinqr(&eff, &f, &eta, &[1.0], &quant).unwrap();
        // desired 0.25, quant: |h|^2 * (0.25 * 0.25 + 0.5) = 4 * 0.5625
        assert!((s[0] - 0.25 / (2.25 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn negative_eta_rejected() {
        let eff = scalar_effective(&[c(1.0, 0.0)], 1.0);
        let f = PrecoderSet::from_full(CMatrix::identity(1, 1), 1, PrecoderKind::CellfreeZf);
        let eta = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(
            general_sinqr(&eff, &f, &eta, &[0.0], &QuantizationModel::ideal()),
            Err(PrecodeError::Quantize(QuantizeError::NegativePower { .. }))
        ));
    }
}
