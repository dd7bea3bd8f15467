//! LQ factorization `a = l q` computed as the adjoint of a Householder QR of `aᴴ`.

use super::{CMat, LinalgError, C64, RANK_TOL};

/// `a = l·q` with `l` lower triangular (real nonnegative diagonal) and `q`
/// having orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LqFactors {
    pub l: CMat,
    pub q: CMat,
}

/// Factorizes a `K×M` matrix with `K ≤ M` and full row rank.
///
/// A row is declared dependent when its residual after removing the span of
/// the preceding rows drops below `RANK_TOL·‖a‖_F`.
pub fn lq_decompose(a: &CMat) -> Result<LqFactors, LinalgError> {
    let (k, m) = a.shape();
    if k == 0 || m == 0 {
        return Err(LinalgError::Empty);
    }
    if k > m {
        return Err(LinalgError::DimensionMismatch {
            expected: (m, m),
            got: (k, m),
        });
    }
    let scale = a.norm_fro();

    // Work on the M×K matrix aᴴ; reflectors zero the subdiagonal of each column.
    let mut r = a.adjoint();
    let mut reflectors: Vec<Vec<C64>> = Vec::with_capacity(k);

    for j in 0..k {
        let x: Vec<C64> = (j..m).map(|i| r[(i, j)]).collect();
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(xnorm > RANK_TOL * scale) {
            return Err(LinalgError::RankDeficient {
                row: j,
                residual: xnorm,
            });
        }
        // alpha = -e^{i arg x0} ‖x‖ avoids cancellation in v0 = x0 - alpha.
        let phase = if x[0].norm() > 0.0 {
            x[0] / x[0].norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let alpha = -phase * xnorm;
        let mut v = x;
        v[0] -= alpha;
        let vnorm_sqr: f64 = v.iter().map(|z| z.norm_sqr()).sum();

        // Apply H = I - 2 v vᴴ / (vᴴ v) to the trailing columns.
        for c in j + 1..k {
            let proj: C64 = v
                .iter()
                .enumerate()
                .map(|(t, vt)| vt.conj() * r[(j + t, c)])
                .sum::<C64>()
                * (2.0 / vnorm_sqr);
            for (t, vt) in v.iter().enumerate() {
                r[(j + t, c)] -= vt * proj;
            }
        }
        r[(j, j)] = alpha;
        for i in j + 1..m {
            r[(i, j)] = C64::new(0.0, 0.0);
        }
        reflectors.push(v);
    }

    // Thin Q (M×K) = H_0 H_1 ... H_{K-1} applied to the first K unit vectors.
    let mut q = CMat::zeros(m, k);
    for i in 0..k {
        q[(i, i)] = C64::new(1.0, 0.0);
    }
    for (j, v) in reflectors.iter().enumerate().rev() {
        let vnorm_sqr: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        for c in 0..k {
            let proj: C64 = v
                .iter()
                .enumerate()
                .map(|(t, vt)| vt.conj() * q[(j + t, c)])
                .sum::<C64>()
                * (2.0 / vnorm_sqr);
            for (t, vt) in v.iter().enumerate() {
                q[(j + t, c)] -= vt * proj;
            }
        }
    }

    // Rotate phases so that diag(R) is real and nonnegative.
    for j in 0..k {
        let d = r[(j, j)];
        let mag = d.norm();
        let phase = if mag > 0.0 {
            d / mag
        } else {
            C64::new(1.0, 0.0)
        };
        for c in j..k {
            r[(j, c)] *= phase.conj();
        }
        r[(j, j)] = C64::new(mag, 0.0);
        for i in 0..m {
            q[(i, j)] *= phase;
        }
    }

    // a = (Q R)ᴴ = Rᴴ Qᴴ.
    let r_top = CMat::from_fn(k, k, |i, j| {
        if i <= j {
            r[(i, j)]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(LqFactors {
        l: r_top.adjoint(),
        q: q.adjoint(),
    })
}
