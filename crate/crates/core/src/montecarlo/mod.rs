//! Experiment orchestration.
//!
//! Every estimate index `e` owns a network snapshot: geometry, large-scale
//! fading, small-scale fading `h`, estimation error `h̃` and the innovations
//! used to draw true channels given the estimate. These draws depend only on
//! `(master_seed, e, attempt)`, so all schemes and all grid points consume the
//! same randomness and comparisons between them are paired.
//!
//! Estimates are evaluated in parallel and reduced in index order, so the
//! output does not depend on the worker count.

mod seed;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use seed::seed_stream;

use crate::channel::{
    conditional_from_innovation, draw_cn_matrix, estimate_from_components, select_aps,
};
use crate::linalg::CMat;
use crate::metrics::mean_and_std_err;
use crate::multibranch::{choose_among, evaluate_branches, make_patterns};
use crate::precoding::{
    common_precoder, empirical_transmit_power, PowerNormalization, PrivateScheme, ThpStructure,
    DEFAULT_LAMBDA,
};
use crate::scenario::{
    noise_variance_w, sample_geometry, sample_large_scale, transmit_power_for_snr, LargeScale,
    ScenarioConfig,
};

/// Snapshot redraws allowed per estimate before the run fails.
pub const MAX_RETRIES: usize = 10;

/// Stream purposes under `[estimate, attempt, purpose]`.
const STREAM_GEOMETRY: u64 = 0;
const STREAM_FADING: u64 = 1;
const STREAM_ERRORS: u64 = 2;
const STREAM_POWER_PROBE: u64 = 3;
/// Path of the shared snapshot when geometry is frozen.
const FROZEN_PATH: [u64; 2] = [u64::MAX, STREAM_GEOMETRY];

/// Symbols pushed through the transmit chain when measuring realized power.
const POWER_PROBE_FRAMES: usize = 256;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("estimate {estimate} failed at grid point {grid} after {attempts} attempts: {reason}")]
    TrialFailed {
        estimate: usize,
        grid: usize,
        attempts: usize,
        reason: String,
    },
    #[error("could not start worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Linear ZF without a common stream.
    #[serde(rename = "linearZF")]
    LinearZf,
    #[serde(rename = "RS-linearZF")]
    RsLinearZf,
    #[serde(rename = "RS-cTHP")]
    RsCthp,
    #[serde(rename = "RS-dTHP")]
    RsDthp,
    #[serde(rename = "MB-RS-cTHP")]
    MbRsCthp,
    #[serde(rename = "MB-RS-dTHP")]
    MbRsDthp,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::LinearZf,
        Scheme::RsLinearZf,
        Scheme::RsCthp,
        Scheme::RsDthp,
        Scheme::MbRsCthp,
        Scheme::MbRsDthp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::LinearZf => "linearZF",
            Scheme::RsLinearZf => "RS-linearZF",
            Scheme::RsCthp => "RS-cTHP",
            Scheme::RsDthp => "RS-dTHP",
            Scheme::MbRsCthp => "MB-RS-cTHP",
            Scheme::MbRsDthp => "MB-RS-dTHP",
        }
    }

    pub fn private_scheme(self) -> PrivateScheme {
        match self {
            Scheme::LinearZf | Scheme::RsLinearZf => PrivateScheme::LinearZf,
            Scheme::RsCthp | Scheme::MbRsCthp => PrivateScheme::Thp(ThpStructure::Centralized),
            Scheme::RsDthp | Scheme::MbRsDthp => PrivateScheme::Thp(ThpStructure::Decentralized),
        }
    }

    pub fn rate_splitting(self) -> bool {
        self != Scheme::LinearZf
    }

    pub fn multibranch(self) -> bool {
        matches!(self, Scheme::MbRsCthp | Scheme::MbRsDthp)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sch| sch.name() == s)
            .ok_or_else(|| format!("unknown scheme {s:?}"))
    }
}

/// How the common-stream power fraction `α_c` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase", deny_unknown_fields)]
pub enum AlphaPolicy {
    Fixed {
        value: f64,
    },
    /// Pick the candidate with the highest ESR on the first `pilot_estimates`
    /// snapshots, using a single branch.
    Grid {
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pilot_estimates: Option<usize>,
    },
}

impl Default for AlphaPolicy {
    fn default() -> Self {
        AlphaPolicy::Grid {
            values: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            pilot_estimates: None,
        }
    }
}

impl AlphaPolicy {
    fn pilot_estimates(&self, n_estimates: usize) -> usize {
        match self {
            AlphaPolicy::Fixed { .. } => 0,
            AlphaPolicy::Grid {
                pilot_estimates, ..
            } => pilot_estimates
                .unwrap_or((n_estimates / 5).max(1))
                .min(n_estimates),
        }
    }
}

/// Applies an α policy given an ESR evaluator: a fixed value is returned as
/// is; a grid returns the best candidate, the smallest one on ties.
pub fn choose_alpha_c(policy: &AlphaPolicy, mut evaluate: impl FnMut(f64) -> f64) -> f64 {
    match policy {
        AlphaPolicy::Fixed { value } => *value,
        AlphaPolicy::Grid { values, .. } => {
            let mut candidates = values.clone();
            candidates.sort_by(f64::total_cmp);
            let mut best = candidates[0];
            let mut best_score = evaluate(best);
            for &alpha in &candidates[1..] {
                let score = evaluate(alpha);
                if score > best_score {
                    best = alpha;
                    best_score = score;
                }
            }
            best
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub cluster_size: usize,
    pub snr_db: Vec<f64>,
    pub sigma_e2: Vec<f64>,
    /// Branch counts evaluated for the multi-branch schemes.
    pub branch_counts: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub n_estimates: usize,
    pub n_error_samples: usize,
    pub lambda: f64,
    pub power_normalization: PowerNormalization,
    /// Use one geometry and large-scale draw for all estimates.
    pub freeze_geometry: bool,
    pub scenario: ScenarioConfig,
    pub alpha_c: AlphaPolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            cluster_size: 6,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            sigma_e2: vec![0.15],
            branch_counts: vec![1, 2, 3, 4],
            schemes: Scheme::ALL.to_vec(),
            n_estimates: 100,
            n_error_samples: 100,
            lambda: DEFAULT_LAMBDA,
            power_normalization: PowerNormalization::default(),
            freeze_geometry: false,
            scenario: ScenarioConfig::default(),
            alpha_c: AlphaPolicy::default(),
        }
    }
}

impl ExperimentConfig {
    /// Returns a description of the first violated invariant.
    pub fn validate(&self) -> Result<(), String> {
        self.scenario.check()?;
        let m = self.scenario.num_aps;
        let k = self.scenario.num_users;
        if self.cluster_size < 1 || self.cluster_size > m {
            return Err(format!(
                "cluster_size ({}) must lie in [1, num_aps = {m}]",
                self.cluster_size
            ));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|x| !x.is_finite()) {
            return Err("snr_db must be a nonempty list of finite values".into());
        }
        if self.sigma_e2.is_empty() || self.sigma_e2.iter().any(|s| !(0.0..1.0).contains(s)) {
            return Err("sigma_e2 must be a nonempty list of values in [0, 1)".into());
        }
        if self.branch_counts.is_empty() || self.branch_counts.iter().any(|&l| l < 1 || l > k + 1) {
            return Err(format!(
                "branch_counts must be a nonempty list of values in [1, num_users + 1 = {}]",
                k + 1
            ));
        }
        if self.schemes.is_empty() {
            return Err("schemes must not be empty".into());
        }
        let mut seen = self.schemes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return Err("schemes must not repeat".into());
        }
        if self.n_estimates < 1 || self.n_error_samples < 1 {
            return Err("n_estimates and n_error_samples must be at least 1".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err("lambda must be positive".into());
        }
        match &self.alpha_c {
            AlphaPolicy::Fixed { value } => {
                if !(0.0..1.0).contains(value) {
                    return Err(format!("alpha_c value must lie in [0, 1), got {value}"));
                }
            }
            AlphaPolicy::Grid {
                values,
                pilot_estimates,
            } => {
                if values.is_empty() || values.iter().any(|v| !(0.0..1.0).contains(v)) {
                    return Err("alpha_c values must be a nonempty list in [0, 1)".into());
                }
                if *pilot_estimates == Some(0) {
                    return Err("alpha_c pilot_estimates must be at least 1".into());
                }
            }
        }
        Ok(())
    }

    /// Grid points, σ_e² outer and SNR inner.
    pub fn grid(&self) -> Vec<GridPoint> {
        self.sigma_e2
            .iter()
            .flat_map(|&sigma_e2| {
                self.snr_db
                    .iter()
                    .map(move |&snr_db| GridPoint { snr_db, sigma_e2 })
            })
            .collect()
    }

    fn branch_counts_for(&self, scheme: Scheme) -> Vec<usize> {
        if scheme.multibranch() {
            let mut counts = self.branch_counts.clone();
            counts.sort_unstable();
            counts.dedup();
            counts
        } else {
            vec![1]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub snr_db: f64,
    pub sigma_e2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub sigma_e2: f64,
    pub branches: usize,
    pub alpha_c: f64,
    pub esr: f64,
    pub std_err: f64,
    /// Compute time attributed to this row's scheme and grid point.
    pub wall_time_s: f64,
}

/// Per-estimate values behind a row, in estimate order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RowSamples {
    pub total: Vec<f64>,
    pub common_floor: Vec<f64>,
    pub sum_private: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    pub snr_db: f64,
    pub sigma_e2: f64,
    pub trials: usize,
    pub retries: usize,
    pub rate_evaluations: u64,
    pub alpha_pilot_evaluations: u64,
    /// Largest `(‖p_c‖² + ‖P‖_F²) / P_t` over every precoder built here.
    pub max_power_ratio: f64,
    /// Measured `E‖x‖² / P_t` with QPSK through the full transmit chain, on
    /// the first estimate, per scheme.
    pub realized_power_ratio: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Sorted by scheme name, then SNR, σ_e², branch count.
    pub rows: Vec<ResultRow>,
    /// Parallel to `rows`.
    pub samples: Vec<RowSamples>,
    pub grid_stats: Vec<GridStats>,
    pub wall_time_s: f64,
}

/// One unit of work per estimate: a scheme at a grid point with a fixed α.
#[derive(Debug, Clone)]
struct Job {
    grid: usize,
    scheme: Scheme,
    alpha: f64,
    /// Ascending; the largest determines how many branches are built.
    branch_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
struct JobOutcome {
    /// Per branch count: (total, common floor, sum private).
    per_count: Vec<(f64, f64, f64)>,
    max_power_ratio: f64,
    rate_evaluations: u64,
    realized_power_ratio: Option<f64>,
    compute_s: f64,
}

#[derive(Debug)]
struct EstimateOutcome {
    jobs: Vec<JobOutcome>,
    /// Grid index that forced each redraw.
    failures: Vec<usize>,
}

struct Snapshot {
    large: LargeScale,
    h: CMat,
    h_tilde: CMat,
    innovations: Vec<CMat>,
}

/// The channels one trial sees at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialChannels {
    pub large: LargeScale,
    pub g_true: CMat,
    pub g_hat: CMat,
    /// `g_hat` restricted to the serving clusters.
    pub g_bar: CMat,
    pub p_t: f64,
    pub noise_var: f64,
    /// True channels drawn given `g_hat`, used for rate averaging.
    pub samples: Vec<CMat>,
}

/// Rebuilds the channels of `(estimate, attempt)` at a grid point exactly as
/// the runner does.
pub fn trial_channels(
    cfg: &ExperimentConfig,
    estimate: usize,
    attempt: usize,
    point: GridPoint,
) -> Result<TrialChannels, String> {
    let runner = Runner::new(cfg);
    let snap = runner.snapshot(estimate, attempt);
    runner.instance(&snap, point)
}

/// Chosen α per (grid index, scheme).
type AlphaTable = BTreeMap<(usize, Scheme), f64>;

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    grid: Vec<GridPoint>,
    noise_var: f64,
    frozen: Option<LargeScale>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        let frozen = cfg.freeze_geometry.then(|| {
            let mut rng = seed_stream(cfg.master_seed, &FROZEN_PATH);
            let geometry = sample_geometry(&cfg.scenario, &mut rng);
            sample_large_scale(&cfg.scenario, &geometry, &mut rng)
        });
        Self {
            cfg,
            grid: cfg.grid(),
            noise_var: noise_variance_w(&cfg.scenario),
            frozen,
        }
    }

    fn snapshot(&self, estimate: usize, attempt: usize) -> Snapshot {
        let (e, a) = (estimate as u64, attempt as u64);
        let large = match &self.frozen {
            Some(large) => large.clone(),
            None => {
                let mut rng = seed_stream(self.cfg.master_seed, &[e, a, STREAM_GEOMETRY]);
                let geometry = sample_geometry(&self.cfg.scenario, &mut rng);
                sample_large_scale(&self.cfg.scenario, &geometry, &mut rng)
            }
        };
        let (m, k) = (self.cfg.scenario.num_aps, self.cfg.scenario.num_users);
        let mut rng = seed_stream(self.cfg.master_seed, &[e, a, STREAM_FADING]);
        let h = draw_cn_matrix(m, k, &mut rng);
        let h_tilde = draw_cn_matrix(m, k, &mut rng);
        let mut rng = seed_stream(self.cfg.master_seed, &[e, a, STREAM_ERRORS]);
        let innovations = (0..self.cfg.n_error_samples)
            .map(|_| draw_cn_matrix(m, k, &mut rng))
            .collect();
        Snapshot {
            large,
            h,
            h_tilde,
            innovations,
        }
    }

    fn instance(&self, snap: &Snapshot, point: GridPoint) -> Result<TrialChannels, String> {
        let zeta = &snap.large;
        let g_true = CMat::from_fn(snap.h.rows(), snap.h.cols(), |m, k| {
            snap.h[(m, k)] * zeta.get(m, k).sqrt()
        });
        let g_hat = estimate_from_components(&snap.h, &snap.h_tilde, zeta, point.sigma_e2);
        let (_, g_bar) =
            select_aps(&g_hat, zeta, self.cfg.cluster_size).map_err(|e| e.to_string())?;
        let p_t = transmit_power_for_snr(point.snr_db, &g_true, self.noise_var)
            .map_err(|e| e.to_string())?;
        let samples = snap
            .innovations
            .iter()
            .map(|w| conditional_from_innovation(&g_hat, zeta, point.sigma_e2, w).map(|d| d.g))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Ok(TrialChannels {
            large: zeta.clone(),
            g_true,
            g_hat,
            g_bar,
            p_t,
            noise_var: self.noise_var,
            samples,
        })
    }

    fn run_job(
        &self,
        job: &Job,
        inst: &TrialChannels,
        probe: Option<&mut dyn rand::RngCore>,
    ) -> Result<JobOutcome, String> {
        let started = Instant::now();
        let k = self.cfg.scenario.num_users;
        let alpha = if job.scheme.rate_splitting() {
            job.alpha
        } else {
            0.0
        };
        let p_common = common_precoder(&inst.g_bar, alpha, inst.p_t).map_err(|e| e.to_string())?;
        let max_count = *job.branch_counts.last().expect("nonempty branch counts");
        let patterns = make_patterns(k, max_count).map_err(|e| e.to_string())?;
        let evaluated = evaluate_branches(
            &inst.g_bar,
            &patterns,
            job.scheme.private_scheme(),
            &p_common,
            inst.p_t,
            self.cfg.power_normalization,
            &inst.samples,
            self.noise_var,
        );
        let max_power_ratio = evaluated
            .iter()
            .filter_map(|b| b.as_ref().ok())
            .map(|b| b.precoder.transmit_power() / inst.p_t)
            .fold(0.0, f64::max);

        let mut per_count = Vec::with_capacity(job.branch_counts.len());
        let mut last_best = 0;
        for &count in &job.branch_counts {
            let (_, best) =
                choose_among(&patterns, &evaluated, count).map_err(|e| e.to_string())?;
            let report = &evaluated[best].as_ref().expect("viable").report;
            per_count.push((report.total, report.common_floor, report.sum_private));
            last_best = best;
        }

        let realized_power_ratio = probe.map(|rng| {
            let precoder = &evaluated[last_best].as_ref().expect("viable").precoder;
            empirical_transmit_power(precoder, self.cfg.lambda, POWER_PROBE_FRAMES, rng) / inst.p_t
        });

        Ok(JobOutcome {
            per_count,
            max_power_ratio,
            rate_evaluations: (self.cfg.n_error_samples * patterns.len()) as u64,
            realized_power_ratio,
            compute_s: started.elapsed().as_secs_f64(),
        })
    }

    fn evaluate(
        &self,
        estimate: usize,
        attempt: usize,
        jobs: &[Job],
    ) -> Result<Vec<JobOutcome>, (usize, String)> {
        let snap = self.snapshot(estimate, attempt);
        let mut instances: Vec<Option<TrialChannels>> =
            (0..self.grid.len()).map(|_| None).collect();
        let mut outcomes = Vec::with_capacity(jobs.len());
        for (j, job) in jobs.iter().enumerate() {
            if instances[job.grid].is_none() {
                let inst = self
                    .instance(&snap, self.grid[job.grid])
                    .map_err(|e| (job.grid, e))?;
                instances[job.grid] = Some(inst);
            }
            let inst = instances[job.grid].as_ref().expect("just built");
            let mut probe_rng;
            let probe: Option<&mut dyn rand::RngCore> = if estimate == 0 {
                probe_rng = seed_stream(
                    self.cfg.master_seed,
                    &[
                        estimate as u64,
                        attempt as u64,
                        STREAM_POWER_PROBE,
                        j as u64,
                    ],
                );
                Some(&mut probe_rng)
            } else {
                None
            };
            outcomes.push(self.run_job(job, inst, probe).map_err(|e| (job.grid, e))?);
        }
        Ok(outcomes)
    }

    fn evaluate_with_retries(
        &self,
        estimate: usize,
        jobs: &[Job],
    ) -> Result<EstimateOutcome, SimError> {
        let mut failures = Vec::new();
        for attempt in 0..=MAX_RETRIES {
            match self.evaluate(estimate, attempt, jobs) {
                Ok(outcomes) => {
                    return Ok(EstimateOutcome {
                        jobs: outcomes,
                        failures,
                    })
                }
                Err((grid, reason)) => {
                    if attempt == MAX_RETRIES {
                        return Err(SimError::TrialFailed {
                            estimate,
                            grid,
                            attempts: attempt + 1,
                            reason,
                        });
                    }
                    failures.push(grid);
                }
            }
        }
        unreachable!("loop returns on the last attempt")
    }

    fn evaluate_all(
        &self,
        estimates: usize,
        jobs: &[Job],
    ) -> Result<Vec<EstimateOutcome>, SimError> {
        (0..estimates)
            .into_par_iter()
            .map(|e| self.evaluate_with_retries(e, jobs))
            .collect()
    }

    /// Chosen α per grid point and scheme, plus pilot rate evaluations per grid point.
    fn choose_alphas(&self) -> Result<(AlphaTable, Vec<u64>), SimError> {
        let mut chosen = BTreeMap::new();
        let mut pilot_evals = vec![0u64; self.grid.len()];
        let candidates = match &self.cfg.alpha_c {
            AlphaPolicy::Fixed { value } => {
                for g in 0..self.grid.len() {
                    for &s in &self.cfg.schemes {
                        chosen.insert((g, s), if s.rate_splitting() { *value } else { 0.0 });
                    }
                }
                return Ok((chosen, pilot_evals));
            }
            AlphaPolicy::Grid { values, .. } => values.clone(),
        };

        let mut jobs = Vec::new();
        for g in 0..self.grid.len() {
            for &scheme in &self.cfg.schemes {
                if !scheme.rate_splitting() {
                    chosen.insert((g, scheme), 0.0);
                    continue;
                }
                for &alpha in &candidates {
                    jobs.push(Job {
                        grid: g,
                        scheme,
                        alpha,
                        branch_counts: vec![1],
                    });
                }
            }
        }
        if jobs.is_empty() {
            return Ok((chosen, pilot_evals));
        }
        let pilot = self.cfg.alpha_c.pilot_estimates(self.cfg.n_estimates);
        let outcomes = self.evaluate_all(pilot, &jobs)?;
        let mut pilot_esr: BTreeMap<(usize, Scheme), Vec<(f64, f64)>> = BTreeMap::new();
        for (j, job) in jobs.iter().enumerate() {
            let mean = outcomes
                .iter()
                .map(|o| o.jobs[j].per_count[0].0)
                .sum::<f64>()
                / pilot as f64;
            pilot_evals[job.grid] += outcomes
                .iter()
                .map(|o| o.jobs[j].rate_evaluations)
                .sum::<u64>();
            pilot_esr
                .entry((job.grid, job.scheme))
                .or_default()
                .push((job.alpha, mean));
        }
        for (key, scored) in pilot_esr {
            let alpha = choose_alpha_c(&self.cfg.alpha_c, |a| {
                scored
                    .iter()
                    .find(|(cand, _)| *cand == a)
                    .map(|(_, esr)| *esr)
                    .expect("every candidate was evaluated")
            });
            chosen.insert(key, alpha);
        }
        Ok((chosen, pilot_evals))
    }
}

/// Runs the configured experiment on `threads` workers (0 = all cores).
pub fn run_experiment(
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<ExperimentOutput, SimError> {
    cfg.validate().map_err(SimError::ConfigInvalid)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::ThreadPool(e.to_string()))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &ExperimentConfig) -> Result<ExperimentOutput, SimError> {
    let started = Instant::now();
    let runner = Runner::new(cfg);
    let (alphas, pilot_evals) = runner.choose_alphas()?;

    let mut jobs = Vec::new();
    for g in 0..runner.grid.len() {
        for &scheme in &cfg.schemes {
            jobs.push(Job {
                grid: g,
                scheme,
                alpha: alphas[&(g, scheme)],
                branch_counts: cfg.branch_counts_for(scheme),
            });
        }
    }
    let outcomes = runner.evaluate_all(cfg.n_estimates, &jobs)?;

    let mut grid_stats: Vec<GridStats> = runner
        .grid
        .iter()
        .enumerate()
        .map(|(g, p)| GridStats {
            snr_db: p.snr_db,
            sigma_e2: p.sigma_e2,
            trials: cfg.n_estimates,
            retries: 0,
            rate_evaluations: 0,
            alpha_pilot_evaluations: pilot_evals[g],
            max_power_ratio: 0.0,
            realized_power_ratio: BTreeMap::new(),
        })
        .collect();
    for outcome in &outcomes {
        for &g in &outcome.failures {
            grid_stats[g].retries += 1;
        }
    }

    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (j, job) in jobs.iter().enumerate() {
        let stats = &mut grid_stats[job.grid];
        let mut compute_s = 0.0;
        for outcome in &outcomes {
            let o = &outcome.jobs[j];
            stats.rate_evaluations += o.rate_evaluations;
            stats.max_power_ratio = stats.max_power_ratio.max(o.max_power_ratio);
            if let Some(r) = o.realized_power_ratio {
                stats
                    .realized_power_ratio
                    .insert(job.scheme.name().to_string(), r);
            }
            compute_s += o.compute_s;
        }
        for (c, &count) in job.branch_counts.iter().enumerate() {
            let mut s = RowSamples::default();
            for outcome in &outcomes {
                let (total, floor, private) = outcome.jobs[j].per_count[c];
                s.total.push(total);
                s.common_floor.push(floor);
                s.sum_private.push(private);
            }
            let (esr, std_err) = mean_and_std_err(&s.total);
            let point = runner.grid[job.grid];
            rows.push(ResultRow {
                scheme: job.scheme,
                snr_db: point.snr_db,
                sigma_e2: point.sigma_e2,
                branches: count,
                alpha_c: job.alpha,
                esr,
                std_err,
                wall_time_s: compute_s,
            });
            samples.push(s);
        }
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| compare_rows(&rows[a], &rows[b]));
    let rows = order.iter().map(|&i| rows[i].clone()).collect();
    let samples = order.iter().map(|&i| samples[i].clone()).collect();

    Ok(ExperimentOutput {
        rows,
        samples,
        grid_stats,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Stable result order: scheme name, then SNR, σ_e², branch count.
pub fn compare_rows(a: &ResultRow, b: &ResultRow) -> std::cmp::Ordering {
    a.scheme
        .name()
        .cmp(b.scheme.name())
        .then(a.snr_db.total_cmp(&b.snr_db))
        .then(a.sigma_e2.total_cmp(&b.sigma_e2))
        .then(a.branches.cmp(&b.branches))
}

/// Draws a uniform f64 from a stream; exposed for stream-independence checks.
pub fn uniform_from_stream<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random()
}
