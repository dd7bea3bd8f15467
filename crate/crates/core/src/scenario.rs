//! Network geometry and large-scale propagation.
//!
//! Distances are in meters, frequencies in MHz, powers in watts. The path
//! loss follows a three-slope model on top of a Hata-style attenuation
//! constant, and shadowing is log-normal.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CMat;

/// Boltzmann constant in J/K, at the precision used for the noise budget.
pub const BOLTZMANN: f64 = 1.381e-23;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("channel has (near) zero energy: Tr(GᴴG) = {trace:e}")]
    ZeroChannel { trace: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_aps: usize,
    pub num_users: usize,
    pub side_m: f64,
    pub freq_mhz: f64,
    pub ap_height_m: f64,
    pub user_height_m: f64,
    pub d0_m: f64,
    pub d1_m: f64,
    pub shadow_sigma_db: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub noise_temp_k: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_aps: 12,
            num_users: 3,
            side_m: 400.0,
            freq_mhz: 1900.0,
            ap_height_m: 15.0,
            user_height_m: 1.65,
            d0_m: 10.0,
            d1_m: 50.0,
            shadow_sigma_db: 8.0,
            bandwidth_hz: 50e6,
            noise_figure_db: 10.0,
            noise_temp_k: 290.0,
        }
    }
}

impl ScenarioConfig {
    /// Returns the name of the first violated invariant, if any.
    pub fn check(&self) -> Result<(), String> {
        if self.num_users < 1 {
            return Err("num_users must be at least 1".into());
        }
        if self.num_aps <= self.num_users {
            return Err(format!(
                "num_aps ({}) must exceed num_users ({})",
                self.num_aps, self.num_users
            ));
        }
        let positive = [
            ("side_m", self.side_m),
            ("freq_mhz", self.freq_mhz),
            ("ap_height_m", self.ap_height_m),
            ("user_height_m", self.user_height_m),
            ("d0_m", self.d0_m),
            ("d1_m", self.d1_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_temp_k", self.noise_temp_k),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if !(self.shadow_sigma_db >= 0.0 && self.shadow_sigma_db.is_finite()) {
            return Err(format!(
                "shadow_sigma_db must be nonnegative, got {}",
                self.shadow_sigma_db
            ));
        }
        if !self.noise_figure_db.is_finite() {
            return Err("noise_figure_db must be finite".into());
        }
        if self.d0_m >= self.d1_m {
            return Err(format!(
                "d0_m ({}) must be smaller than d1_m ({})",
                self.d0_m, self.d1_m
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub ap_positions: Vec<(f64, f64)>,
    pub user_positions: Vec<(f64, f64)>,
}

impl Geometry {
    pub fn distance(&self, ap: usize, user: usize) -> f64 {
        let (ax, ay) = self.ap_positions[ap];
        let (ux, uy) = self.user_positions[user];
        (ax - ux).hypot(ay - uy)
    }
}

/// Large-scale fading, AP-major: entry `(m, k)` is stored at `m * num_users + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    pub num_aps: usize,
    pub num_users: usize,
    /// Linear-scale coefficients ζ.
    pub zeta: Vec<f64>,
    /// Deterministic path-loss part in dB, same layout as `zeta`.
    pub path_loss_db: Vec<f64>,
}

impl LargeScale {
    pub fn get(&self, ap: usize, user: usize) -> f64 {
        self.zeta[ap * self.num_users + user]
    }

    /// Builds a large-scale matrix directly from linear values (AP-major).
    pub fn from_linear(num_aps: usize, num_users: usize, zeta: Vec<f64>) -> Self {
        assert_eq!(zeta.len(), num_aps * num_users);
        let path_loss_db = zeta.iter().map(|z| 10.0 * z.log10()).collect();
        Self {
            num_aps,
            num_users,
            zeta,
            path_loss_db,
        }
    }

    pub fn uniform(num_aps: usize, num_users: usize, value: f64) -> Self {
        Self::from_linear(num_aps, num_users, vec![value; num_aps * num_users])
    }
}

/// Attenuation constant `L` in dB.
pub fn attenuation_db(cfg: &ScenarioConfig) -> f64 {
    let lf = cfg.freq_mhz.log10();
    46.3 + 33.9 * lf - 13.82 * cfg.ap_height_m.log10() - (1.1 * lf - 0.7) * cfg.user_height_m
        + (1.56 * lf - 0.8)
}

/// Three-slope path loss in dB (a negative number) at distance `d_m`.
///
/// `d = d1` belongs to the middle slope and `d = d0` to the flat one.
pub fn path_loss_db(d_m: f64, cfg: &ScenarioConfig) -> f64 {
    let l = attenuation_db(cfg);
    if d_m > cfg.d1_m {
        -l - 35.0 * d_m.log10()
    } else if d_m > cfg.d0_m {
        -l - 15.0 * cfg.d1_m.log10() - 20.0 * d_m.log10()
    } else {
        -l - 15.0 * cfg.d1_m.log10() - 20.0 * cfg.d0_m.log10()
    }
}

/// Thermal noise power `T_o·k_B·B·N_f` in watts.
pub fn noise_variance_w(cfg: &ScenarioConfig) -> f64 {
    let nf = 10f64.powf(cfg.noise_figure_db / 10.0);
    cfg.noise_temp_k * BOLTZMANN * cfg.bandwidth_hz * nf
}

pub fn sample_geometry<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Geometry {
    let mut point = || {
        (
            rng.random::<f64>() * cfg.side_m,
            rng.random::<f64>() * cfg.side_m,
        )
    };
    let ap_positions = (0..cfg.num_aps).map(|_| point()).collect();
    let user_positions = (0..cfg.num_users).map(|_| point()).collect();
    Geometry {
        ap_positions,
        user_positions,
    }
}

/// Path loss plus i.i.d. log-normal shadowing for a given geometry.
pub fn sample_large_scale<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    geometry: &Geometry,
    rng: &mut R,
) -> LargeScale {
    let (m, k) = (geometry.ap_positions.len(), geometry.user_positions.len());
    let mut zeta = Vec::with_capacity(m * k);
    let mut path_loss = Vec::with_capacity(m * k);
    for ap in 0..m {
        for user in 0..k {
            let pl = path_loss_db(geometry.distance(ap, user), cfg);
            let z: f64 = rng.sample(StandardNormal);
            zeta.push(10f64.powf((pl + cfg.shadow_sigma_db * z) / 10.0));
            path_loss.push(pl);
        }
    }
    LargeScale {
        num_aps: m,
        num_users: k,
        zeta,
        path_loss_db: path_loss,
    }
}

pub fn sample_scenario<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> (Geometry, LargeScale) {
    let geometry = sample_geometry(cfg, rng);
    let large = sample_large_scale(cfg, &geometry, rng);
    (geometry, large)
}

/// Total transmit power giving `SNR = P_t·Tr(GᴴG) / (M·K·σ_n²)`.
pub fn transmit_power_for_snr(
    target_snr_db: f64,
    g_true: &CMat,
    noise_var: f64,
) -> Result<f64, ScenarioError> {
    let trace = g_true.norm_fro_sqr();
    if trace < 1e-300 {
        return Err(ScenarioError::ZeroChannel { trace });
    }
    let (m, k) = g_true.shape();
    let snr = 10f64.powf(target_snr_db / 10.0);
    Ok(snr * (m * k) as f64 * noise_var / trace)
}

/// Inverse of [`transmit_power_for_snr`], in dB.
pub fn snr_db(p_t: f64, g_true: &CMat, noise_var: f64) -> f64 {
    let (m, k) = g_true.shape();
    10.0 * (p_t * g_true.norm_fro_sqr() / ((m * k) as f64 * noise_var)).log10()
}
