//! Projections onto the constant-modulus and semi-unitary sets, and the
//! alternating projection between them.

use super::ChannelError;
use crate::linalg::{frobenius, svd_sorted, CMatrix, C64};

pub const AP_MAX_ITERS: usize = 200;
pub const AP_TOL: f64 = 1e-8;

/// Nearest point with every entry of modulus `target_modulus`. Zero entries
/// map to phase zero.
pub fn project_constant_modulus(x: &CMatrix, target_modulus: f64) -> CMatrix {
    x.map(|z| {
        let r = z.norm();
        if r == 0.0 {
            C64::new(target_modulus, 0.0)
        } else {
            z * (target_modulus / r)
        }
    })
}

/// Nearest matrix with orthonormal columns: `U V^H` from the compact SVD.
pub fn project_semi_unitary(x: &CMatrix) -> Result<CMatrix, ChannelError> {
    let (rows, cols) = x.shape();
    let degenerate = ChannelError::DegenerateProjection { rows, cols };
    if rows < cols || cols == 0 {
        return Err(degenerate);
    }
    let svd = svd_sorted(x);
    let s_max = svd.singular_values[0];
    let s_min = svd.singular_values[cols - 1];
    if !(s_max > 0.0) || s_min <= 1e-12 * s_max {
        return Err(degenerate);
    }
    Ok(&svd.u * svd.v.adjoint())
}

/// Output of [`alternating_projection_traced`].
#[derive(Debug, Clone)]
pub struct ProjectionTrace {
    /// Last constant-modulus iterate.
    pub matrix: CMatrix,
    /// Frobenius distance between the constant-modulus iterate and its
    /// semi-unitary projection, one entry per iteration.
    pub distances: Vec<f64>,
    pub iterations: usize,
}

/// Alternates constant-modulus and semi-unitary projections from `x0` until
/// successive semi-unitary iterates move by at most `tol`.
pub fn alternating_projection_traced(
    x0: &CMatrix,
    target_modulus: f64,
    max_iters: usize,
    tol: f64,
) -> Result<ProjectionTrace, ChannelError> {
    let mut semi_unitary = x0.clone();
    let mut constant_modulus = project_constant_modulus(x0, target_modulus);
    let mut distances = Vec::new();
    let mut iterations = 0;
    for it in 1..=max_iters.max(1) {
        iterations = it;
        constant_modulus = project_constant_modulus(&semi_unitary, target_modulus);
        let next = project_semi_unitary(&constant_modulus)?;
        distances.push(frobenius(&(&constant_modulus - &next)));
        let step = frobenius(&(&next - &semi_unitary));
        semi_unitary = next;
        if step <= tol {
            break;
        }
    }
    Ok(ProjectionTrace {
        matrix: constant_modulus,
        distances,
        iterations,
    })
}

/// Constant-modulus RF matrix near the semi-unitary start `x0`.
pub fn alternating_projection(
    x0: &CMatrix,
    target_modulus: f64,
    max_iters: usize,
    tol: f64,
) -> Result<CMatrix, ChannelError> {
    alternating_projection_traced(x0, target_modulus, max_iters, tol).map(|t| t.matrix)
}
