//! Linear precoders: the rate-splitting common beam and the ZF baseline.

use super::PrecodeError;
use crate::linalg::{svd, CMat, CVec, LinalgError, C64, RANK_TOL};

/// `p_c = √(α_c·P_t)·v₁`, with `v₁` the dominant right singular vector of the
/// `K×M` matrix `Ḡᴴ` (`g_bar` is passed `M×K`).
pub fn common_precoder(g_bar: &CMat, alpha_c: f64, p_t: f64) -> Result<CVec, PrecodeError> {
    if !(0.0..1.0).contains(&alpha_c) {
        return Err(PrecodeError::InvalidSplit { alpha_c });
    }
    let m = g_bar.rows();
    if alpha_c == 0.0 {
        return Ok(vec![C64::new(0.0, 0.0); m]);
    }
    let f = svd(&g_bar.adjoint())?;
    let amp = (alpha_c * p_t).sqrt();
    let v1 = f.v.col(0);
    // v₁ is unit norm up to rounding; renormalize so ‖p_c‖² hits the target.
    let n = crate::linalg::norm(&v1);
    Ok(v1.iter().map(|z| z * (amp / n)).collect())
}

/// Channel-inversion ZF `P = Ḡ(ḠᴴḠ)⁻¹` scaled to `p_t − common_power`.
///
/// Returns the precoder and its scaling `β` (receivers divide by `β`).
pub fn linear_zf_precoder(
    g_bar: &CMat,
    p_t: f64,
    common_power: f64,
) -> Result<(CMat, f64), PrecodeError> {
    if !(common_power < p_t) {
        return Err(PrecodeError::PowerExhausted { common_power, p_t });
    }
    let gram = g_bar.adjoint().matmul(g_bar);
    let gram_inv = hermitian_pd_inverse(&gram)?;
    let p0 = g_bar.matmul(&gram_inv);
    let beta = ((p_t - common_power) / p0.norm_fro_sqr()).sqrt();
    Ok((p0.scale(beta), beta))
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky `A = R Rᴴ`.
fn hermitian_pd_inverse(a: &CMat) -> Result<CMat, LinalgError> {
    let n = a.rows();
    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let mut r = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for p in 0..j {
            d -= r[(j, p)].norm_sqr();
        }
        // Pivots are squared residuals, so roundoff is relative to the trace.
        if !(d > RANK_TOL * trace) {
            return Err(LinalgError::RankDeficient {
                row: j,
                residual: d.max(0.0).sqrt(),
            });
        }
        let djj = d.sqrt();
        r[(j, j)] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= r[(i, p)] * r[(j, p)].conj();
            }
            r[(i, j)] = s / djj;
        }
    }
    // Solve R y = e_j, then Rᴴ z = y.
    let mut inv = CMat::zeros(n, n);
    for col in 0..n {
        let mut y = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut s = if i == col {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            };
            for p in 0..i {
                s -= r[(i, p)] * y[p];
            }
            y[i] = s / r[(i, i)];
        }
        let mut z = vec![C64::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in i + 1..n {
                s -= r[(p, i)].conj() * z[p];
            }
            z[i] = s / r[(i, i)];
        }
        inv.set_col(col, &z);
    }
    Ok(inv)
}
