//! Working correlation structures R(rho), the working covariance
//! V = A^{1/2} R A^{1/2}, and moment estimation of rho from standardized
//! residuals.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Margin kept between an estimated rho and the boundary of its validity
/// range.
pub const RHO_CLAMP_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Independence,
    Exchangeable,
    Ar1,
}

/// A working correlation family together with its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub kind: CorrelationKind,
    pub rho: f64,
}

impl CorrelationSpec {
    pub fn independence() -> Self {
        CorrelationSpec { kind: CorrelationKind::Independence, rho: 0.0 }
    }

    /// Validity range of rho for a cluster of size m.
    fn rho_valid(kind: CorrelationKind, rho: f64, m: usize) -> bool {
        match kind {
            CorrelationKind::Independence => true,
            CorrelationKind::Exchangeable => {
                if m <= 1 {
                    rho.abs() < 1.0
                } else {
                    rho < 1.0 && rho > -1.0 / (m as f64 - 1.0)
                }
            }
            CorrelationKind::Ar1 => rho.abs() < 1.0,
        }
    }
}

/// Build the m x m working correlation matrix.
pub fn build_correlation(spec: &CorrelationSpec, m: usize) -> Result<DMatrix<f64>> {
    if !CorrelationSpec::rho_valid(spec.kind, spec.rho, m) {
        return Err(Error::InvalidCorrelation { rho: spec.rho, m });
    }
    let mut r = DMatrix::identity(m, m);
    match spec.kind {
        CorrelationKind::Independence => {}
        CorrelationKind::Exchangeable => {
            for j in 0..m {
                for k in 0..m {
                    if j != k {
                        r[(j, k)] = spec.rho;
                    }
                }
            }
        }
        CorrelationKind::Ar1 => {
            for j in 0..m {
                for k in 0..m {
                    if j != k {
                        r[(j, k)] = spec.rho.powi((j as i32 - k as i32).abs());
                    }
                }
            }
        }
    }
    Ok(r)
}

/// Inverse of the working correlation matrix via Cholesky.
pub fn correlation_inverse(spec: &CorrelationSpec, m: usize) -> Result<DMatrix<f64>> {
    let r = build_correlation(spec, m)?;
    match r.clone().cholesky() {
        Some(chol) => Ok(chol.inverse()),
        None => Err(Error::SingularCorrelation { m, rho: spec.rho }),
    }
}

/// Working covariance V = A^{1/2} R A^{1/2} for a diagonal variance vector.
pub fn build_v(spec: &CorrelationSpec, a_diag: &[f64]) -> Result<DMatrix<f64>> {
    for (i, &a) in a_diag.iter().enumerate() {
        if a <= 0.0 {
            return Err(Error::NonpositiveVariance { index: i, value: a });
        }
    }
    let m = a_diag.len();
    let r = build_correlation(spec, m)?;
    let mut v = r;
    for j in 0..m {
        for k in 0..m {
            v[(j, k)] *= (a_diag[j] * a_diag[k]).sqrt();
        }
    }
    Ok(v)
}

/// A moment estimate of rho together with a degeneracy flag set when no
/// subject contributed a residual pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub value: f64,
    pub degenerate: bool,
}

/// Moment estimator of rho from per-subject standardized residual vectors.
///
/// Exchangeable averages all within-subject pairwise products; AR1 uses the
/// lag-1 pairs. Both are divided by the overall residual second moment and
/// clamped into the validity range with a small margin. The divisor is the
/// raw pair count, with no adjustment for estimated parameters.
pub fn estimate_rho(kind: CorrelationKind, residuals: &[Vec<f64>]) -> RhoEstimate {
    if matches!(kind, CorrelationKind::Independence) {
        return RhoEstimate { value: 0.0, degenerate: false };
    }
    let mut second_moment = 0.0;
    let mut n_obs = 0usize;
    let mut cross = 0.0;
    let mut n_pairs = 0usize;
    let mut m_max = 1usize;
    for r in residuals {
        m_max = m_max.max(r.len());
        for &e in r {
            second_moment += e * e;
            n_obs += 1;
        }
        match kind {
            CorrelationKind::Exchangeable => {
                for j in 0..r.len() {
                    for k in (j + 1)..r.len() {
                        cross += r[j] * r[k];
                        n_pairs += 1;
                    }
                }
            }
            CorrelationKind::Ar1 => {
                for j in 1..r.len() {
                    cross += r[j - 1] * r[j];
                    n_pairs += 1;
                }
            }
            CorrelationKind::Independence => unreachable!(),
        }
    }
    if n_pairs == 0 || n_obs == 0 || second_moment == 0.0 {
        return RhoEstimate { value: 0.0, degenerate: true };
    }
    let raw = (cross / n_pairs as f64) / (second_moment / n_obs as f64);
    let (lo, hi) = match kind {
        CorrelationKind::Exchangeable => {
            let lo = if m_max <= 1 { -1.0 } else { -1.0 / (m_max as f64 - 1.0) };
            (lo, 1.0)
        }
        CorrelationKind::Ar1 => (-1.0, 1.0),
        CorrelationKind::Independence => unreachable!(),
    };
    RhoEstimate {
        value: raw.clamp(lo + RHO_CLAMP_MARGIN, hi - RHO_CLAMP_MARGIN),
        degenerate: false,
    }
}
