//! Small-scale fading, imperfect CSIT and AP selection.
//!
//! The estimate follows `ĝ = √ζ (√(1−σ_e²)·h + σ_e·h̃)` entrywise with `h`, `h̃`
//! i.i.d. CN(0,1). Given an estimate, true channels are drawn from the exact
//! conditional law of `(h, h̃)` on the line fixed by that identity.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{CMat, C64};
use crate::scenario::LargeScale;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("CSIT error variance must lie in [0, 1), got {sigma_e2}")]
    DegenerateModel { sigma_e2: f64 },
    #[error("cluster size {size} outside [1, {num_aps}]")]
    ClusterSize { size: usize, num_aps: usize },
}

/// One network snapshot's channels. All matrices are `M×K` (column k = user k).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub g_true: CMat,
    pub g_hat: CMat,
    pub sigma_e2: f64,
    /// Sorted AP indices serving each user.
    pub clusters: Vec<Vec<usize>>,
    /// `g_hat` masked to the clusters.
    pub g_bar: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueChannel {
    /// Unit-variance small-scale fading.
    pub h: CMat,
    /// `√ζ · h`.
    pub g: CMat,
}

/// Components of one draw consistent with a given estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDraw {
    pub h: CMat,
    pub h_tilde: CMat,
    pub g: CMat,
}

fn check_sigma(sigma_e2: f64) -> Result<(), ChannelError> {
    if (0.0..1.0).contains(&sigma_e2) {
        Ok(())
    } else {
        Err(ChannelError::DegenerateModel { sigma_e2 })
    }
}

/// Circularly symmetric CN(0,1): real and imaginary parts each N(0, 1/2).
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn draw_cn_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| sample_cn(rng))
}

pub fn draw_true_channel<R: Rng + ?Sized>(zeta: &LargeScale, rng: &mut R) -> TrueChannel {
    let h = draw_cn_matrix(zeta.num_aps, zeta.num_users, rng);
    let g = CMat::from_fn(zeta.num_aps, zeta.num_users, |m, k| {
        h[(m, k)] * zeta.get(m, k).sqrt()
    });
    TrueChannel { h, g }
}

/// Deterministic estimate map for given fading and error components.
pub fn estimate_from_components(
    h: &CMat,
    h_tilde: &CMat,
    zeta: &LargeScale,
    sigma_e2: f64,
) -> CMat {
    let a = (1.0 - sigma_e2).sqrt();
    let s = sigma_e2.sqrt();
    CMat::from_fn(h.rows(), h.cols(), |m, k| {
        (h[(m, k)] * a + h_tilde[(m, k)] * s) * zeta.get(m, k).sqrt()
    })
}

/// Draws a fresh error `h̃` and returns the corresponding estimate.
pub fn corrupt_csit<R: Rng + ?Sized>(
    h: &CMat,
    zeta: &LargeScale,
    sigma_e2: f64,
    rng: &mut R,
) -> Result<CMat, ChannelError> {
    check_sigma(sigma_e2)?;
    let h_tilde = draw_cn_matrix(h.rows(), h.cols(), rng);
    Ok(estimate_from_components(h, &h_tilde, zeta, sigma_e2))
}

/// Per user, the `cluster_size` APs with the largest ζ (ties: lower index
/// first), and the estimate masked to those APs.
pub fn select_aps(
    g_hat: &CMat,
    zeta: &LargeScale,
    cluster_size: usize,
) -> Result<(Vec<Vec<usize>>, CMat), ChannelError> {
    let (m, k) = g_hat.shape();
    if cluster_size == 0 || cluster_size > m {
        return Err(ChannelError::ClusterSize {
            size: cluster_size,
            num_aps: m,
        });
    }
    let mut clusters = Vec::with_capacity(k);
    let mut g_bar = CMat::zeros(m, k);
    for user in 0..k {
        let mut aps: Vec<usize> = (0..m).collect();
        aps.sort_by(|&a, &b| {
            zeta.get(b, user)
                .total_cmp(&zeta.get(a, user))
                .then(a.cmp(&b))
        });
        let mut chosen = aps[..cluster_size].to_vec();
        chosen.sort_unstable();
        for &ap in &chosen {
            g_bar[(ap, user)] = g_hat[(ap, user)];
        }
        clusters.push(chosen);
    }
    Ok((clusters, g_bar))
}

/// One draw of `(h, h̃)` given the estimate.
///
/// With `a = √(1−σ_e²)`, `s = σ_e` and `y = ĝ/√ζ`, the pair is Gaussian on the
/// line `a·h + s·h̃ = y`: `h = a·y + s·w`, `h̃ = s·y − a·w`, `w ~ CN(0,1)`.
/// Hence `E[g|ĝ] = a·ĝ` and `Var[g|ĝ] = ζ·σ_e²`.
pub fn conditional_draw<R: Rng + ?Sized>(
    g_hat: &CMat,
    zeta: &LargeScale,
    sigma_e2: f64,
    rng: &mut R,
) -> Result<ConditionalDraw, ChannelError> {
    check_sigma(sigma_e2)?;
    let innovation = draw_cn_matrix(g_hat.rows(), g_hat.cols(), rng);
    conditional_from_innovation(g_hat, zeta, sigma_e2, &innovation)
}

/// [`conditional_draw`] with the CN(0,1) innovation `w` supplied, so the same
/// innovations can be reused across error variances.
pub fn conditional_from_innovation(
    g_hat: &CMat,
    zeta: &LargeScale,
    sigma_e2: f64,
    innovation: &CMat,
) -> Result<ConditionalDraw, ChannelError> {
    check_sigma(sigma_e2)?;
    let a = (1.0 - sigma_e2).sqrt();
    let s = sigma_e2.sqrt();
    let (m, k) = g_hat.shape();
    assert_eq!(innovation.shape(), (m, k));
    let mut h = CMat::zeros(m, k);
    let mut h_tilde = CMat::zeros(m, k);
    let mut g = CMat::zeros(m, k);
    for ap in 0..m {
        for user in 0..k {
            let w = innovation[(ap, user)];
            let sz = zeta.get(ap, user).sqrt();
            let gh = g_hat[(ap, user)];
            let y = gh / sz;
            h[(ap, user)] = y * a + w * s;
            h_tilde[(ap, user)] = y * s - w * a;
            g[(ap, user)] = gh * a + w * (s * sz);
        }
    }
    Ok(ConditionalDraw { h, h_tilde, g })
}

/// `count` true channels drawn conditionally on the estimate.
pub fn conditional_true_channels<R: Rng + ?Sized>(
    g_hat: &CMat,
    zeta: &LargeScale,
    sigma_e2: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<CMat>, ChannelError> {
    (0..count)
        .map(|_| conditional_draw(g_hat, zeta, sigma_e2, rng).map(|d| d.g))
        .collect()
}

/// Draws a complete snapshot: true channel, estimate, and clustered estimate.
pub fn draw_channel_set<R: Rng + ?Sized>(
    zeta: &LargeScale,
    sigma_e2: f64,
    cluster_size: usize,
    rng: &mut R,
) -> Result<ChannelSet, ChannelError> {
    let truth = draw_true_channel(zeta, rng);
    let g_hat = corrupt_csit(&truth.h, zeta, sigma_e2, rng)?;
    let (clusters, g_bar) = select_aps(&g_hat, zeta, cluster_size)?;
    Ok(ChannelSet {
        g_true: truth.g,
        g_hat,
        sigma_e2,
        clusters,
        g_bar,
    })
}
