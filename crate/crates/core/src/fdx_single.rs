//! Single-step multi-resolution FDX threshold.
//!
//! For every transformation `g` the critical value
//! `s_g = sup{t : R(t, gX) / (R(t, X) v 1) > gamma}` is located on the grid
//! of discontinuities (the union of the observed and the `g`-transformed
//! statistics); the threshold `q` is the exact `(1 - alpha)` order statistic
//! of the `s_g`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::{upper_quantile, AnalysisConfig, RejectionSet, StatMatrix};
use crate::error::{Error, Result};

/// `numerator / (denominator v 1) > gamma`, without dividing.
#[inline]
pub(crate) fn ratio_exceeds(numerator: usize, denominator: usize, gamma: f64) -> bool {
    numerator as f64 > gamma * denominator.max(1) as f64
}

pub(crate) fn sorted_desc(row: &[f64]) -> Vec<f64> {
    let mut v = row.to_vec();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v
}

/// A row sorted in descending order, keeping the column index of each value.
pub(crate) fn indexed_desc(row: &[f64]) -> Vec<(f64, usize)> {
    let mut v: Vec<(f64, usize)> = row.iter().copied().zip(0..).collect();
    v.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    v
}

/// Grid sweep shared by the full-set and subset critical values.
///
/// Walks the distinct grid values from the top. At each value `v` the counts
/// hold the entries strictly above `v`, so the first `v` where the ratio
/// exceeds `gamma` is `s^-`; the answer is the grid value just above it
/// (`+inf` when `s^-` is the grid maximum). If no grid value qualifies,
/// `s^- = -inf` and the answer is the grid minimum.
pub(crate) fn sweep_critical_value(
    obs_desc: &[f64],
    g_desc: &[(f64, usize)],
    counts_toward_numerator: impl Fn(usize) -> bool,
    gamma: f64,
) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut r_obs, mut r_g) = (0usize, 0usize);
    let mut above: Option<f64> = None;
    loop {
        let v = match (obs_desc.get(i), g_desc.get(j)) {
            (None, None) => break,
            (Some(&a), None) => a,
            (None, Some(&(b, _))) => b,
            (Some(&a), Some(&(b, _))) => a.max(b),
        };
        if ratio_exceeds(r_g, r_obs, gamma) {
            return above.unwrap_or(f64::INFINITY);
        }
        while i < obs_desc.len() && obs_desc[i] == v {
            r_obs += 1;
            i += 1;
        }
        while j < g_desc.len() && g_desc[j].0 == v {
            if counts_toward_numerator(g_desc[j].1) {
                r_g += 1;
            }
            j += 1;
        }
        above = Some(v);
    }
    above.expect("grid is nonempty")
}

/// Number of distinct values in the union of two descending rows.
fn grid_size(obs_desc: &[f64], g_desc: &[(f64, usize)]) -> usize {
    let mut merged: Vec<f64> = obs_desc.iter().copied().chain(g_desc.iter().map(|p| p.0)).collect();
    merged.sort_unstable_by(f64::total_cmp);
    merged.dedup();
    merged.len()
}

/// Critical value `s_g` for one transformation.
pub fn s_g_grid(stats_obs: &[f64], stats_g: &[f64], gamma: f64) -> f64 {
    sweep_critical_value(&sorted_desc(stats_obs), &indexed_desc(stats_g), |_| true, gamma)
}

/// Pre-sorted rows, reused across critical-value evaluations.
pub(crate) struct SortedMatrix {
    pub obs_desc: Vec<f64>,
    pub rows: Vec<Vec<(f64, usize)>>,
}

impl SortedMatrix {
    pub fn new(stats: &StatMatrix) -> Self {
        Self {
            obs_desc: sorted_desc(stats.observed()),
            rows: stats.rows().collect::<Vec<_>>().par_iter().map(|r| indexed_desc(r)).collect(),
        }
    }

    /// Critical values of every transformation, numerator restricted by
    /// `include`.
    pub fn critical_values(&self, include: &(impl Fn(usize) -> bool + Sync), gamma: f64) -> Vec<f64> {
        self.rows
            .par_iter()
            .map(|row| sweep_critical_value(&self.obs_desc, row, include, gamma))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleStepResult {
    pub q: f64,
    /// Critical value per transformation; index 0 is the identity.
    pub s_values: Vec<f64>,
    pub rejections: RejectionSet,
    /// Distinct grid points per transformation.
    pub grid_sizes: Vec<usize>,
}

pub fn single_step(stats: &StatMatrix, cfg: &AnalysisConfig) -> Result<SingleStepResult> {
    cfg.validate()?;
    if stats.d() < 1 {
        return Err(Error::InvalidMatrix("no transformations".into()));
    }
    let sorted = SortedMatrix::new(stats);
    let s_values = sorted.critical_values(&|_| true, cfg.gamma);
    let grid_sizes = sorted.rows.iter().map(|r| grid_size(&sorted.obs_desc, r)).collect();
    let q = upper_quantile(&s_values, cfg.alpha)?;
    Ok(SingleStepResult { q, rejections: RejectionSet::above(stats.observed(), q), s_values, grid_sizes })
}

/// Single-step method on a matrix of p-values (row 0 observed).
///
/// Runs on the negated matrix; the reported threshold is `q_pv = -q` and
/// hypotheses with `P_i(X) < q_pv` are rejected.
pub fn single_step_pvalues(pmat: &StatMatrix, cfg: &AnalysisConfig) -> Result<SingleStepResult> {
    let negated = negate_matrix(pmat)?;
    let res = single_step(&negated, cfg)?;
    let q_pv = -res.q;
    Ok(SingleStepResult {
        q: q_pv,
        s_values: res.s_values.iter().map(|s| -s).collect(),
        rejections: RejectionSet::below(pmat.observed(), q_pv),
        grid_sizes: res.grid_sizes,
    })
}

/// Entrywise `-p` for a p-value matrix.
pub fn negate_matrix(pmat: &StatMatrix) -> Result<StatMatrix> {
    let negated = crate::stats::negate_pvalues(pmat.as_slice())?;
    StatMatrix::new(pmat.d(), pmat.m(), negated)
}
