use super::{CMat, CVec, LinalgError, C64, SINGULAR_DIAG_TOL};

/// Forward substitution for `l·x = b`. Only the lower triangle of `l` is read.
pub fn solve_lower_triangular(l: &CMat, b: &[C64]) -> Result<CVec, LinalgError> {
    let n = l.rows();
    if l.cols() != n || b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: (n, n),
            got: (l.cols(), b.len()),
        });
    }
    let mut x = Vec::with_capacity(n);
    for k in 0..n {
        let d = l[(k, k)];
        if d.norm() <= SINGULAR_DIAG_TOL {
            return Err(LinalgError::SingularDiagonal { index: k });
        }
        let acc: C64 = (0..k).map(|j| l[(k, j)] * x[j]).sum();
        x.push((b[k] - acc) / d);
    }
    Ok(x)
}

/// Inverse of a lower-triangular matrix, column by column.
pub fn invert_lower_triangular(l: &CMat) -> Result<CMat, LinalgError> {
    let n = l.rows();
    let mut inv = CMat::zeros(n, n);
    let mut e = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        e.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        e[j] = C64::new(1.0, 0.0);
        let col = solve_lower_triangular(l, &e)?;
        for i in 0..n {
            // The inverse is lower triangular; keep the zeros exact.
            inv[(i, j)] = if i >= j { col[i] } else { C64::new(0.0, 0.0) };
        }
    }
    Ok(inv)
}
