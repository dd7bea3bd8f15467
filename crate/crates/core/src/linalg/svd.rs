//! Thin SVD by one-sided (Hestenes) Jacobi rotations.

use super::{inner, norm, CMat, LinalgError, C64, SVD_SWEEP_FACTOR};

/// `a = u·diag(sigma)·vᴴ`, thin: `u` is `rows×r`, `v` is `cols×r` with
/// `r = min(rows, cols)`, and `sigma` is sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v: CMat,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> CMat {
        let mut us = self.u.clone();
        for j in 0..us.cols() {
            for i in 0..us.rows() {
                us[(i, j)] *= self.sigma[j];
            }
        }
        us.matmul(&self.v.adjoint())
    }
}

pub fn svd(a: &CMat) -> Result<SvdFactors, LinalgError> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(LinalgError::Empty);
    }
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        let f = jacobi_tall(&a.adjoint())?;
        Ok(SvdFactors {
            u: f.v,
            sigma: f.sigma,
            v: f.u,
        })
    }
}

/// Orthogonalizes the columns of `a` (rows ≥ cols) by plane rotations: `a·v = w`
/// with mutually orthogonal columns of `w`.
fn jacobi_tall(a: &CMat) -> Result<SvdFactors, LinalgError> {
    let (m, n) = a.shape();
    let mut w: Vec<Vec<C64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            e
        })
        .collect();

    let tol = f64::EPSILON * m as f64;
    let max_sweeps = SVD_SWEEP_FACTOR * m.max(n);
    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == max_sweeps {
            return Err(LinalgError::NoConvergence { sweeps });
        }
        sweeps += 1;
        converged = true;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha: f64 = w[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = w[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma = inner(&w[p], &w[q]);
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                // Reduce to a real rotation between w_p and e^{-iφ} w_q.
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s, phase);
                rotate(&mut v, p, q, c, s, phase);
            }
        }
    }

    let mut sigma: Vec<f64> = w.iter().map(|col| norm(col)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    sigma = order.iter().map(|&i| sigma[i]).collect();
    let w: Vec<Vec<C64>> = order.iter().map(|&i| w[i].clone()).collect();
    let v: Vec<Vec<C64>> = order.iter().map(|&i| v[i].clone()).collect();

    // Columns whose norm is negligible carry no direction; complete them to an
    // orthonormal set instead.
    let floor = sigma[0] * 1e-13;
    let mut u_cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    for (j, col) in w.iter().enumerate() {
        if sigma[j] > floor && sigma[j] > 0.0 {
            u_cols.push(col.iter().map(|z| z / sigma[j]).collect());
        } else {
            u_cols.push(complete_basis(&u_cols, m));
        }
    }

    let mut u = CMat::zeros(m, n);
    let mut vm = CMat::zeros(n, n);
    for j in 0..n {
        u.set_col(j, &u_cols[j]);
        vm.set_col(j, &v[j]);
    }
    Ok(SvdFactors { u, sigma, v: vm })
}

/// `x_p ← c·x_p − s·e^{-iφ}·x_q`, `x_q ← s·e^{iφ}·x_p + c·x_q`.
fn rotate(cols: &mut [Vec<C64>], p: usize, q: usize, c: f64, s: f64, phase: C64) {
    let (head, tail) = cols.split_at_mut(q);
    let xp = &mut head[p];
    let xq = &mut tail[0];
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let bp = *b * phase.conj();
        let new_a = *a * c - bp * s;
        let new_b = (*a * s + bp * c) * phase;
        *a = new_a;
        *b = new_b;
    }
}

/// Returns a unit vector orthogonal to every vector in `basis`.
fn complete_basis(basis: &[Vec<C64>], m: usize) -> Vec<C64> {
    let mut best: Option<Vec<C64>> = None;
    let mut best_norm = -1.0;
    for e in 0..m {
        let mut x = vec![C64::new(0.0, 0.0); m];
        x[e] = C64::new(1.0, 0.0);
        // Two Gram-Schmidt passes for stability.
        for _ in 0..2 {
            for b in basis {
                let proj = inner(b, &x);
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi -= bi * proj;
                }
            }
        }
        let nx = norm(&x);
        if nx > best_norm {
            best_norm = nx;
            best = Some(x);
        }
        if nx > 0.5 {
            break;
        }
    }
    let x = best.expect("m > 0");
    x.iter().map(|z| z / best_norm).collect()
}
