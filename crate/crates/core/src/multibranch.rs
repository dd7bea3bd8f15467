//! Multi-branch user ordering.
//!
//! Branch 1 keeps the natural order. Branch `l ≥ 2` keeps the first `q = l − 2`
//! users in place and reverses the rest. The transmitter evaluates every
//! branch on the same conditional error samples and keeps the one with the
//! highest average sum-private rate.

use thiserror::Error;

use crate::linalg::{CMat, C64};
use crate::metrics::{average_rates, RateReport};
use crate::precoding::{
    build_rs_precoder, PowerNormalization, PrecodeError, PrivateScheme, RsPrecoder,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BranchError {
    #[error("{requested} branches requested but at most K+1 = {max} are distinct in form")]
    TooManyBranches { requested: usize, max: usize },
    #[error("at least one branch is required")]
    NoBranches,
    #[error("every branch failed; first failure: {0}")]
    NoViableBranch(PrecodeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchPattern {
    /// 1-based branch index.
    pub index: usize,
    /// Row `i` of the ordered channel is row `perm[i]` of the original.
    pub perm: Vec<usize>,
}

impl BranchPattern {
    pub fn identity(k: usize) -> Self {
        Self {
            index: 1,
            perm: (0..k).collect(),
        }
    }

    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        inv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchChoice {
    pub chosen: BranchPattern,
    /// Average sum-private rate per branch; `-inf` for branches that failed.
    pub scores: Vec<f64>,
}

impl BranchChoice {
    pub fn best_score(&self) -> f64 {
        self.scores[self.chosen.index - 1]
    }
}

pub fn make_patterns(k: usize, num_branches: usize) -> Result<Vec<BranchPattern>, BranchError> {
    if num_branches == 0 {
        return Err(BranchError::NoBranches);
    }
    if num_branches > k + 1 {
        return Err(BranchError::TooManyBranches {
            requested: num_branches,
            max: k + 1,
        });
    }
    Ok((1..=num_branches)
        .map(|l| {
            if l == 1 {
                return BranchPattern::identity(k);
            }
            let q = l - 2;
            let perm = (0..q).chain((q..k).rev()).collect();
            BranchPattern { index: l, perm }
        })
        .collect())
}

/// Reorders the rows of a `K×M` matrix.
pub fn apply_pattern(rows: &CMat, pattern: &BranchPattern) -> CMat {
    rows.permute_rows(&pattern.perm)
}

/// Index of the largest score, earliest on ties.
pub fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// A branch's precoder and its averaged rates over the error samples.
#[derive(Debug, Clone)]
pub struct EvaluatedBranch {
    pub precoder: RsPrecoder,
    pub report: RateReport,
}

/// Outcome of branch selection: the choice, its precoder and its averaged rates.
#[derive(Debug, Clone)]
pub struct SelectedBranch {
    pub choice: BranchChoice,
    pub precoder: RsPrecoder,
    pub report: RateReport,
}

/// Builds and scores every pattern on the same error samples.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_branches(
    g_bar: &CMat,
    patterns: &[BranchPattern],
    scheme: PrivateScheme,
    p_common: &[C64],
    p_t: f64,
    normalization: PowerNormalization,
    error_samples: &[CMat],
    noise_var: f64,
) -> Vec<Result<EvaluatedBranch, PrecodeError>> {
    patterns
        .iter()
        .map(|pattern| {
            let precoder =
                build_rs_precoder(g_bar, &pattern.perm, scheme, p_common, p_t, normalization)?;
            let report = average_rates(error_samples, &precoder, noise_var);
            Ok(EvaluatedBranch { precoder, report })
        })
        .collect()
}

/// Picks the best of the first `num_branches` evaluated branches.
pub fn choose_among(
    patterns: &[BranchPattern],
    evaluated: &[Result<EvaluatedBranch, PrecodeError>],
    num_branches: usize,
) -> Result<(BranchChoice, usize), BranchError> {
    if num_branches == 0 || patterns.is_empty() {
        return Err(BranchError::NoBranches);
    }
    let scores: Vec<f64> = evaluated[..num_branches]
        .iter()
        .map(|e| {
            e.as_ref()
                .map_or(f64::NEG_INFINITY, |b| b.report.sum_private)
        })
        .collect();
    let best = argmax_first(&scores);
    if let Err(e) = &evaluated[best] {
        let first = evaluated[..num_branches]
            .iter()
            .find_map(|r| r.as_ref().err())
            .unwrap_or(e);
        return Err(BranchError::NoViableBranch(first.clone()));
    }
    Ok((
        BranchChoice {
            chosen: patterns[best].clone(),
            scores,
        },
        best,
    ))
}

/// Evaluates every pattern on the same error samples and keeps the best.
#[allow(clippy::too_many_arguments)]
pub fn select_branch(
    g_bar: &CMat,
    patterns: &[BranchPattern],
    scheme: PrivateScheme,
    p_common: &[C64],
    p_t: f64,
    normalization: PowerNormalization,
    error_samples: &[CMat],
    noise_var: f64,
) -> Result<SelectedBranch, BranchError> {
    if patterns.is_empty() {
        return Err(BranchError::NoBranches);
    }
    let mut evaluated = evaluate_branches(
        g_bar,
        patterns,
        scheme,
        p_common,
        p_t,
        normalization,
        error_samples,
        noise_var,
    );
    let (choice, best) = choose_among(patterns, &evaluated, patterns.len())?;
    let branch = evaluated
        .swap_remove(best)
        .expect("chosen branch is viable");
    Ok(SelectedBranch {
        choice,
        precoder: branch.precoder,
        report: branch.report,
    })
}
