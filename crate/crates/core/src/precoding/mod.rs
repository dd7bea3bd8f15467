//! Rate-splitting transmit precoders.
//!
//! The common stream is always linearly precoded; private streams use either
//! channel-inversion ZF or THP over an ordered, AP-selected channel estimate.

mod linear;
mod thp;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm_sqr, CMat, CVec, LinalgError, C64};

pub use linear::{common_precoder, linear_zf_precoder};
pub use thp::{
    assemble_private_precoder, build_thp_filters, modulo, modulo_with_offset, receiver_gains,
    thp_encode, PerturbedSymbols, PowerNormalization, PrivateMaps, ThpFilters, ThpStructure,
    DEFAULT_LAMBDA,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrecodeError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("common power {common_power:e} leaves nothing of P_t = {p_t:e}")]
    PowerExhausted { common_power: f64, p_t: f64 },
    #[error("common power fraction must lie in [0, 1), got {alpha_c}")]
    InvalidSplit { alpha_c: f64 },
}

/// How the private streams are precoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrivateScheme {
    LinearZf,
    Thp(ThpStructure),
}

/// A complete rate-splitting precoder for one channel estimate and ordering.
///
/// Stream `i` carries user `order[i]`'s private symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct RsPrecoder {
    pub p_common: CVec,
    pub common_power: f64,
    /// `M×K` map applied to the transmitted private symbols (modulo outputs
    /// for THP, data symbols for ZF).
    pub private: CMat,
    /// `M×K` map applied to the information-bearing symbols (`š` for THP).
    pub effective: CMat,
    /// Receiver-side normalization per stream.
    pub receiver_gain: Vec<f64>,
    pub order: Vec<usize>,
    pub scheme: PrivateScheme,
    pub filters: Option<ThpFilters>,
}

impl RsPrecoder {
    /// `‖p_c‖² + ‖P‖_F²` under unit-power transmitted symbols.
    pub fn transmit_power(&self) -> f64 {
        self.common_power + self.private.norm_fro_sqr()
    }

    pub fn num_streams(&self) -> usize {
        self.order.len()
    }
}

/// Builds the private part for the rows of `Ḡᴴ` taken in `order`, on top of
/// an already chosen common beam.
pub fn build_rs_precoder(
    g_bar: &CMat,
    order: &[usize],
    scheme: PrivateScheme,
    p_common: &[C64],
    p_t: f64,
    normalization: PowerNormalization,
) -> Result<RsPrecoder, PrecodeError> {
    let common_power = norm_sqr(p_common);
    let ordered_h = g_bar.adjoint().permute_rows(order);
    match scheme {
        PrivateScheme::LinearZf => {
            let (p, beta) = linear_zf_precoder(&ordered_h.adjoint(), p_t, common_power)?;
            Ok(RsPrecoder {
                p_common: p_common.to_vec(),
                common_power,
                effective: p.clone(),
                private: p,
                receiver_gain: vec![1.0 / beta; order.len()],
                order: order.to_vec(),
                scheme,
                filters: None,
            })
        }
        PrivateScheme::Thp(structure) => {
            let filters =
                build_thp_filters(&ordered_h, structure, common_power, p_t, normalization)?;
            let maps = assemble_private_precoder(&filters)?;
            Ok(RsPrecoder {
                p_common: p_common.to_vec(),
                common_power,
                private: maps.transmit,
                effective: maps.effective,
                receiver_gain: receiver_gains(&filters),
                order: order.to_vec(),
                scheme,
                filters: Some(filters),
            })
        }
    }
}

/// Unit-energy QPSK symbol.
pub fn qpsk_symbol<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let im = if rng.random::<bool>() { 1.0 } else { -1.0 };
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Average `‖x‖²` over `n` random QPSK frames pushed through the actual
/// transmit chain, including the modulo loop for THP.
pub fn empirical_transmit_power<R: Rng + ?Sized>(
    precoder: &RsPrecoder,
    lambda: f64,
    n: usize,
    rng: &mut R,
) -> f64 {
    let k = precoder.num_streams();
    let m = precoder.private.rows();
    let mut total = 0.0;
    for _ in 0..n {
        let s_c = qpsk_symbol(rng);
        let s: CVec = (0..k).map(|_| qpsk_symbol(rng)).collect();
        let sent = match &precoder.filters {
            Some(f) => thp_encode(&s, f, lambda).v,
            None => s,
        };
        let mut x = precoder.private.matvec(&sent);
        for (xi, pc) in x.iter_mut().zip(&precoder.p_common) {
            *xi += pc * s_c;
        }
        debug_assert_eq!(x.len(), m);
        total += norm_sqr(&x);
    }
    total / n as f64
}
