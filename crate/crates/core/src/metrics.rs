//! SINRs and rates from first-principles effective channels.
//!
//! Receiver of stream `i` (user `u = order[i]`) sees, after its normalization
//! `r_i`, the common coefficient `r_i·g_uᴴ·p_c`, the private row
//! `r_i·g_uᴴ·E` (with `E` the map applied to the information-bearing symbols)
//! and noise of standard deviation `r_i·σ_n`. The common stream is decoded
//! first with all private streams as noise, then removed perfectly.

use crate::linalg::{CMat, C64};
use crate::precoding::RsPrecoder;

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannels {
    /// Per stream (transmit order).
    pub h_common: Vec<C64>,
    /// Row `i`: receiver of stream `i`; column `j`: stream `j`.
    pub h_private: CMat,
    pub noise_gain: Vec<f64>,
    pub order: Vec<usize>,
}

/// Rates and SINRs, indexed by user.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub gamma_common: Vec<f64>,
    pub gamma_private: Vec<f64>,
    pub r_common: Vec<f64>,
    pub r_private: Vec<f64>,
    pub sum_private: f64,
    pub common_floor: f64,
    pub total: f64,
}

impl RateReport {
    /// Fills the derived fields from per-user rates.
    pub fn from_parts(
        gamma_common: Vec<f64>,
        gamma_private: Vec<f64>,
        r_common: Vec<f64>,
        r_private: Vec<f64>,
    ) -> Self {
        let sum_private = r_private.iter().sum();
        let common_floor = r_common.iter().copied().fold(f64::INFINITY, f64::min);
        let common_floor = if common_floor.is_finite() {
            common_floor
        } else {
            0.0
        };
        Self {
            gamma_common,
            gamma_private,
            r_common,
            r_private,
            sum_private,
            common_floor,
            total: common_floor + sum_private,
        }
    }
}

pub fn rate(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

pub fn effective_channels(
    g_true: &CMat,
    precoder: &RsPrecoder,
    noise_var: f64,
) -> EffectiveChannels {
    let k = precoder.num_streams();
    let sigma = noise_var.sqrt();
    let ordered = g_true.adjoint().permute_rows(&precoder.order);
    let mut h_private = ordered.matmul(&precoder.effective);
    let mut h_common = ordered.matvec(&precoder.p_common);
    for i in 0..k {
        let r = precoder.receiver_gain[i];
        h_common[i] *= r;
        for z in h_private.row_mut(i) {
            *z *= r;
        }
    }
    let noise_gain = precoder.receiver_gain.iter().map(|r| r * sigma).collect();
    EffectiveChannels {
        h_common,
        h_private,
        noise_gain,
        order: precoder.order.clone(),
    }
}

/// SINR of the common stream at the receiver of stream `i`.
pub fn sinr_common(eff: &EffectiveChannels, i: usize) -> f64 {
    let interference: f64 = eff.h_private.row(i).iter().map(|z| z.norm_sqr()).sum();
    eff.h_common[i].norm_sqr() / (interference + eff.noise_gain[i].powi(2))
}

/// SINR of private stream `i` after the common stream has been removed.
pub fn sinr_private(eff: &EffectiveChannels, i: usize) -> f64 {
    let row = eff.h_private.row(i);
    let interference: f64 = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, z)| z.norm_sqr())
        .sum();
    row[i].norm_sqr() / (interference + eff.noise_gain[i].powi(2))
}

/// Instantaneous rates for one true channel.
pub fn instantaneous_rates(g_true: &CMat, precoder: &RsPrecoder, noise_var: f64) -> RateReport {
    let eff = effective_channels(g_true, precoder, noise_var);
    let k = eff.order.len();
    let mut gc = vec![0.0; k];
    let mut gp = vec![0.0; k];
    for (i, &user) in eff.order.iter().enumerate() {
        gc[user] = sinr_common(&eff, i);
        gp[user] = sinr_private(&eff, i);
    }
    let rc = gc.iter().map(|&g| rate(g)).collect();
    let rp = gp.iter().map(|&g| rate(g)).collect();
    RateReport::from_parts(gc, gp, rc, rp)
}

/// Entrywise mean of instantaneous reports, with the common floor taken on
/// the per-user averages. Panics on an empty slice.
pub fn mean_report(reports: &[RateReport]) -> RateReport {
    assert!(!reports.is_empty(), "need at least one report");
    let k = reports[0].r_common.len();
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&RateReport) -> &Vec<f64>| -> Vec<f64> {
        (0..k)
            .map(|u| reports.iter().map(|r| f(r)[u]).sum::<f64>() / n)
            .collect()
    };
    RateReport::from_parts(
        mean(&|r| &r.gamma_common),
        mean(&|r| &r.gamma_private),
        mean(&|r| &r.r_common),
        mean(&|r| &r.r_private),
    )
}

/// Conditional average rates given the estimate behind `precoder`.
pub fn average_rates(error_samples: &[CMat], precoder: &RsPrecoder, noise_var: f64) -> RateReport {
    let reports: Vec<RateReport> = error_samples
        .iter()
        .map(|g| instantaneous_rates(g, precoder, noise_var))
        .collect();
    mean_report(&reports)
}

/// Ergodic sum rate over per-estimate averaged reports: the mean over
/// estimates of the common floor plus the sum-private rate.
pub fn esr(reports: &[RateReport]) -> f64 {
    esr_with_std_err(reports).0
}

/// ESR together with the standard error of the per-estimate totals.
pub fn esr_with_std_err(reports: &[RateReport]) -> (f64, f64) {
    let totals: Vec<f64> = reports.iter().map(|r| r.total).collect();
    mean_and_std_err(&totals)
}

pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n > 0, "need at least one value");
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoding::PrivateScheme;

    fn eff(h_common: Vec<C64>, rows: &[&[f64]], noise: Vec<f64>) -> EffectiveChannels {
        let order = (0..rows.len()).collect();
        EffectiveChannels {
            h_common,
            h_private: CMat::from_real_rows(rows),
            noise_gain: noise,
            order,
        }
    }

    #[test]
    fn private_sinr_by_hand() {
        let e = eff(
            vec![C64::new(0.0, 0.0); 2],
            &[&[1.0, 0.1], &[0.0, 1.0]],
            vec![1.0, 1.0],
        );
        assert!((sinr_private(&e, 0) - 1.0 / 1.01).abs() < 1e-15);
        assert_eq!(sinr_private(&e, 1), 1.0);
        assert_eq!(sinr_common(&e, 0), 0.0);
    }

    #[test]
    fn common_sinr_by_hand() {
        // Unit private row, unit noise, K = 2: γ_c = |h_c|² / (1 + 1).
        let e = eff(
            vec![C64::new(2.0, 0.0), C64::new(0.0, 1.0)],
            &[&[1.0, 0.0], &[0.0, 1.0]],
            vec![1.0, 1.0],
        );
        assert_eq!(sinr_common(&e, 0), 2.0);
        assert_eq!(sinr_common(&e, 1), 0.5);
        let e2 = eff(
            vec![C64::new(4.0, 0.0), C64::new(0.0, 2.0)],
            &[&[1.0, 0.0], &[0.0, 1.0]],
            vec![1.0, 1.0],
        );
        assert_eq!(sinr_common(&e2, 0), 4.0 * sinr_common(&e, 0));
        let zero_desired = eff(
            vec![C64::new(0.0, 0.0); 2],
            &[&[0.0, 1.0], &[0.0, 1.0]],
            vec![1.0, 1.0],
        );
        assert_eq!(sinr_private(&zero_desired, 0), 0.0);
    }

    #[test]
    fn zero_sinr_gives_zero_rate() {
        assert_eq!(rate(0.0), 0.0);
        assert_eq!(rate(1.0), 1.0);
    }

    #[test]
    fn esr_composition() {
        let mk = |floor: f64, private: f64| {
            RateReport::from_parts(vec![0.0], vec![0.0], vec![floor], vec![private])
        };
        let reports = [mk(1.0, 4.0), mk(3.0, 6.0)];
        assert_eq!(esr(&reports), 7.0);
        let equal = RateReport::from_parts(vec![0.0; 3], vec![0.0; 3], vec![2.0; 3], vec![1.0; 3]);
        assert_eq!(equal.common_floor, 2.0);
        assert_eq!(equal.total, 5.0);
    }

    #[test]
    fn single_sample_average_is_instantaneous() {
        let g = CMat::from_fn(4, 2, |m, k| {
            C64::new((m + k) as f64 * 0.3 + 0.1, (m as f64 - k as f64) * 0.2)
        });
        let pc = vec![C64::new(0.1, 0.0); 4];
        let p = crate::precoding::build_rs_precoder(
            &g,
            &[0, 1],
            PrivateScheme::LinearZf,
            &pc,
            2.0,
            Default::default(),
        )
        .unwrap();
        let inst = instantaneous_rates(&g, &p, 0.01);
        let avg = average_rates(std::slice::from_ref(&g), &p, 0.01);
        assert_eq!(inst, avg);
    }

    #[test]
    fn std_err_of_constant_is_zero() {
        assert_eq!(mean_and_std_err(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, se) = mean_and_std_err(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }
}
