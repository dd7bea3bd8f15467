//! Zero-forcing Tomlinson-Harashima precoding.
//!
//! The ordered channel estimate `A` (`K×M`) is factorized as `A = L·Q`. With
//! `C = diag(l_kk)` the feedback filter is unit lower triangular:
//!
//! * centralized: `B = L·C⁻¹`, transmit `x = β·Qᴴ·C⁻¹·v`, so `A·x = β·š`;
//! * decentralized: `B = C⁻¹·L`, transmit `x = β·Qᴴ·v`, so `A·x = β·C·š`
//!   and receiver `k` divides by `β·l_kk`.
//!
//! Here `v` are the modulo outputs of the feedback loop and `š = B·v = s + d`.

use serde::{Deserialize, Serialize};

use super::PrecodeError;
use crate::linalg::{invert_lower_triangular, lq_decompose, CMat, CVec, C64};

/// Default modulo constant for unit-energy QPSK.
pub const DEFAULT_LAMBDA: f64 = 2.0 * std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThpStructure {
    Centralized,
    Decentralized,
}

/// Power scaling for the centralized structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerNormalization {
    /// `β² = P / Σ_k l_kk⁻²`: exact transmit power when `E[v vᴴ] = I`.
    #[default]
    Diagonal,
    /// `β² = P / ‖L⁻¹‖_F²`: normalizes the map applied to `š` instead.
    TraceExact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThpFilters {
    /// `F = Qᴴ`, `M×K`.
    pub feedforward: CMat,
    /// Unit lower-triangular `K×K`.
    pub feedback: CMat,
    /// `l_kk`, real and positive.
    pub scaling: Vec<f64>,
    /// Lower factor `L` of the ordered channel.
    pub lower: CMat,
    pub structure: ThpStructure,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedSymbols {
    /// Modulo-loop outputs, inside the box `[−λ/2, λ/2)²`.
    pub v: CVec,
    /// Perturbation, a Gaussian integer multiple of λ per entry.
    pub d: CVec,
    /// `s + d`, equal to `B·v` up to rounding.
    pub s_check: CVec,
}

/// Symmetric modulo reduction into `[−λ/2, λ/2)` in both components.
pub fn modulo(x: C64, lambda: f64) -> C64 {
    modulo_with_offset(x, lambda).0
}

/// Also returns the Gaussian integer `(n_re, n_im)` that was subtracted.
pub fn modulo_with_offset(x: C64, lambda: f64) -> (C64, (f64, f64)) {
    let (re, nr) = reduce(x.re, lambda);
    let (im, ni) = reduce(x.im, lambda);
    (C64::new(re, im), (nr, ni))
}

fn reduce(x: f64, lambda: f64) -> (f64, f64) {
    let mut n = (x / lambda + 0.5).floor();
    let mut r = x - n * lambda;
    // Rounding in x - nλ can land exactly on the open edge.
    let half = 0.5 * lambda;
    if r >= half {
        r -= lambda;
        n += 1.0;
    } else if r < -half {
        r += lambda;
        n -= 1.0;
    }
    (r, n)
}

/// Builds the THP filter triple and power scaling for one ordering.
///
/// `ordered` is the `K×M` channel estimate with rows in transmit order;
/// `common_power` is `‖p_c‖²` already taken from `p_t`.
pub fn build_thp_filters(
    ordered: &CMat,
    structure: ThpStructure,
    common_power: f64,
    p_t: f64,
    normalization: PowerNormalization,
) -> Result<ThpFilters, PrecodeError> {
    if !(common_power < p_t) {
        return Err(PrecodeError::PowerExhausted { common_power, p_t });
    }
    let lq = lq_decompose(ordered)?;
    let k = ordered.rows();
    let scaling: Vec<f64> = (0..k).map(|i| lq.l[(i, i)].re).collect();

    let mut feedback = CMat::zeros(k, k);
    for i in 0..k {
        for j in 0..i {
            let div = match structure {
                ThpStructure::Centralized => scaling[j],
                ThpStructure::Decentralized => scaling[i],
            };
            feedback[(i, j)] = lq.l[(i, j)] / div;
        }
        feedback[(i, i)] = C64::new(1.0, 0.0);
    }

    let budget = p_t - common_power;
    let beta = match (structure, normalization) {
        (ThpStructure::Decentralized, _) => (budget / k as f64).sqrt(),
        (ThpStructure::Centralized, PowerNormalization::Diagonal) => {
            let denom: f64 = scaling.iter().map(|l| 1.0 / (l * l)).sum();
            (budget / denom).sqrt()
        }
        (ThpStructure::Centralized, PowerNormalization::TraceExact) => {
            let denom = invert_lower_triangular(&lq.l)?.norm_fro_sqr();
            (budget / denom).sqrt()
        }
    };

    Ok(ThpFilters {
        feedforward: lq.q.adjoint(),
        feedback,
        scaling,
        lower: lq.l,
        structure,
        beta,
    })
}

/// Runs the successive feedback loop `v_k = M(s_k − Σ_{j<k} B_kj v_j)`.
pub fn thp_encode(s: &[C64], filters: &ThpFilters, lambda: f64) -> PerturbedSymbols {
    let k = s.len();
    assert_eq!(k, filters.feedback.rows(), "symbol count must equal K");
    let mut v = Vec::with_capacity(k);
    let mut d = Vec::with_capacity(k);
    for i in 0..k {
        let interference: C64 = (0..i).map(|j| filters.feedback[(i, j)] * v[j]).sum();
        let (out, (nr, ni)) = modulo_with_offset(s[i] - interference, lambda);
        v.push(out);
        d.push(C64::new(-nr * lambda, -ni * lambda));
    }
    let s_check = s.iter().zip(&d).map(|(a, b)| a + b).collect();
    PerturbedSymbols { v, d, s_check }
}

/// Net private maps of a THP precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateMaps {
    /// Applied to the modulo outputs `v`; its Frobenius norm is the transmit power.
    pub transmit: CMat,
    /// Applied to `š`; `A·effective` is `β·I` (centralized) or `β·C` (decentralized).
    pub effective: CMat,
}

pub fn assemble_private_precoder(filters: &ThpFilters) -> Result<PrivateMaps, PrecodeError> {
    let k = filters.scaling.len();
    let beta = filters.beta;
    let transmit = match filters.structure {
        ThpStructure::Centralized => CMat::from_fn(filters.feedforward.rows(), k, |m, j| {
            filters.feedforward[(m, j)] * (beta / filters.scaling[j])
        }),
        ThpStructure::Decentralized => filters.feedforward.scale(beta),
    };
    let b_inv = invert_lower_triangular(&filters.feedback)?;
    let effective = transmit.matmul(&b_inv);
    Ok(PrivateMaps {
        transmit,
        effective,
    })
}

/// Per-stream receiver normalization: `1/β` or `1/(β·l_kk)`.
pub fn receiver_gains(filters: &ThpFilters) -> Vec<f64> {
    match filters.structure {
        ThpStructure::Centralized => vec![1.0 / filters.beta; filters.scaling.len()],
        ThpStructure::Decentralized => filters
            .scaling
            .iter()
            .map(|l| 1.0 / (filters.beta * l))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn modulo_reference_values() {
        let lam = DEFAULT_LAMBDA;
        let y = modulo(c(3.0, 0.0), lam);
        assert!((y.re - (3.0 - lam)).abs() < 1e-15);
        assert!((y.re - 0.171_572_875_253_809_9).abs() < 1e-12);
        assert_eq!(y.im, 0.0);
        let inside = c(0.7, -1.2);
        assert_eq!(modulo(inside, lam), inside);
    }

    #[test]
    fn modulo_half_open_edges() {
        let lam = 2.0;
        assert_eq!(modulo(c(1.0, -1.0), lam), c(-1.0, -1.0));
        assert_eq!(modulo(c(-1.0, 1.0), lam), c(-1.0, -1.0));
    }

    #[test]
    fn identity_channel_filters() {
        let k = 3;
        let f = build_thp_filters(
            &CMat::identity(k),
            ThpStructure::Centralized,
            0.5,
            3.5,
            PowerNormalization::Diagonal,
        )
        .unwrap();
        let g = build_thp_filters(
            &CMat::identity(k),
            ThpStructure::Decentralized,
            0.5,
            3.5,
            PowerNormalization::Diagonal,
        )
        .unwrap();
        for filt in [&f, &g] {
            assert!(filt.feedforward.sub(&CMat::identity(k)).norm_fro() < 1e-14);
            assert!(filt.feedback.sub(&CMat::identity(k)).norm_fro() < 1e-14);
            assert_eq!(filt.scaling, vec![1.0; k]);
            assert!((filt.beta - 1.0).abs() < 1e-15);
        }
        let maps = assemble_private_precoder(&f).unwrap();
        assert!(maps.effective.sub(&CMat::identity(k)).norm_fro() < 1e-14);
    }

    #[test]
    fn power_exhausted() {
        let err = build_thp_filters(
            &CMat::identity(2),
            ThpStructure::Decentralized,
            2.0,
            2.0,
            PowerNormalization::Diagonal,
        );
        assert!(matches!(err, Err(PrecodeError::PowerExhausted { .. })));
    }

    #[test]
    fn two_user_loop_by_hand() {
        let lam = DEFAULT_LAMBDA;
        let filters = ThpFilters {
            feedforward: CMat::identity(2),
            feedback: CMat::from_real_rows(&[&[1.0, 0.0], &[0.9, 1.0]]),
            scaling: vec![1.0, 1.0],
            lower: CMat::identity(2),
            structure: ThpStructure::Centralized,
            beta: 1.0,
        };
        let s = vec![c(1.0, 1.0), c(1.0, 1.0)];
        let out = thp_encode(&s, &filters, lam);
        // v1 = s1 (inside the box); s2 − 0.9·v1 = 0.1 + 0.1j, also inside.
        assert_eq!(out.v[0], c(1.0, 1.0));
        assert!((out.v[1] - c(0.1, 0.1)).norm() < 1e-15);
        assert_eq!(out.d, vec![c(0.0, 0.0), c(0.0, 0.0)]);

        let s = vec![c(1.0, 1.0), c(-1.0, 1.0)];
        let out = thp_encode(&s, &filters, lam);
        // −1 − 0.9 = −1.9 < −√2 → wraps to −1.9 + 2√2; imag 0.1 stays.
        assert!((out.v[1] - c(-1.9 + lam, 0.1)).norm() < 1e-15);
        assert_eq!(out.d[1], c(lam, 0.0));
    }
}
