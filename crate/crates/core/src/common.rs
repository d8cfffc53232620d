//! Shared domain types: the resampled statistic matrix, analysis settings,
//! rejection sets, and the exact counting/quantile primitives every
//! procedure is built on.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when turning `(1 - alpha) * d` into an integer rank, so that
/// decimal inputs such as `alpha = 0.7` do not pick up a spurious extra rank
/// from binary rounding.
pub const RANK_EPS: f64 = 1e-9;

/// Resampled test statistics: `d` transformations (rows) by `m` hypotheses
/// (columns), stored row-major. Row 0 holds the observed statistics.
///
/// Entries may be `+inf` (degenerate-variance sentinel) but never NaN or
/// `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatMatrix {
    d: usize,
    m: usize,
    values: Vec<f64>,
}

impl StatMatrix {
    pub fn new(d: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidMatrix("need at least one row (the identity)".into()));
        }
        if m < 2 {
            return Err(Error::InvalidMatrix(format!("need at least two hypotheses, got {m}")));
        }
        if values.len() != d * m {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {d}x{m} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::InvalidMatrix(format!(
                "entry ({}, {}) is {}",
                pos / m,
                pos % m,
                values[pos]
            )));
        }
        Ok(Self { d, m, values })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(g) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::DimensionMismatch(format!(
                "row {g} has {} entries, expected {m}",
                rows[g].len()
            )));
        }
        Self::new(d, m, rows.into_iter().flatten().collect())
    }

    /// Number of transformations, including the identity.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of hypotheses.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, g: usize) -> &[f64] {
        &self.values[g * self.m..(g + 1) * self.m]
    }

    /// The observed statistics `T_i(X)`.
    pub fn observed(&self) -> &[f64] {
        self.row(0)
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.m)
    }

    pub fn get(&self, g: usize, i: usize) -> f64 {
        self.values[g * self.m + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` entrywise. The result is re-validated.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.d, self.m, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Cells holding the `+inf` sentinel.
    pub fn infinite_cells(&self) -> usize {
        self.values.iter().filter(|v| v.is_infinite()).count()
    }

    /// Smallest `d` for which a `(1 - alpha)` quantile can fall strictly
    /// below the largest critical value, i.e. `ceil(1 / alpha)`.
    pub fn min_rows_for(alpha: f64) -> usize {
        (1.0 / alpha - RANK_EPS).ceil().max(1.0) as usize
    }

    pub fn can_reject(&self, alpha: f64) -> bool {
        self.d >= Self::min_rows_for(alpha)
    }
}

/// Settings shared by every procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Random subsets drawn per step by the approximate sequential method.
    pub combos_per_step: usize,
    pub seed: u64,
    /// Largest number of subsets the exact sequential method will enumerate
    /// in a single step.
    pub exact_combo_limit: u64,
    /// Optional cap on the number of refinement steps.
    pub max_steps: Option<usize>,
}

impl AnalysisConfig {
    pub const DEFAULT_COMBOS_PER_STEP: usize = 25;
    pub const DEFAULT_EXACT_COMBO_LIMIT: u64 = 100_000;

    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            gamma,
            combos_per_step: Self::DEFAULT_COMBOS_PER_STEP,
            seed: 0,
            exact_combo_limit: Self::DEFAULT_EXACT_COMBO_LIMIT,
            max_steps: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_combos_per_step(mut self, combos: usize) -> Self {
        self.combos_per_step = combos;
        self
    }

    pub fn with_exact_combo_limit(mut self, limit: u64) -> Self {
        self.exact_combo_limit = limit;
        self
    }

    pub fn with_max_steps(mut self, max_steps: Option<usize>) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha)?;
        validate_gamma(self.gamma)?;
        if self.combos_per_step == 0 {
            return Err(Error::InvalidPlan("combos_per_step must be positive".into()));
        }
        if self.exact_combo_limit == 0 {
            return Err(Error::InvalidPlan("exact_combo_limit must be positive".into()));
        }
        Ok(())
    }
}

pub fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

pub fn validate_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidGamma(gamma))
    }
}

/// Which side of the threshold counts as a rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `T_i(X) > threshold` (test statistics).
    Above,
    /// `P_i(X) < threshold` (p-values).
    Below,
}

/// Hypotheses rejected at a threshold. Indices are zero-based and sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionSet {
    pub threshold: f64,
    pub direction: Direction,
    pub indices: Vec<usize>,
}

impl RejectionSet {
    /// `{i : observed[i] > threshold}`.
    pub fn above(observed: &[f64], threshold: f64) -> Self {
        let indices = (0..observed.len()).filter(|&i| observed[i] > threshold).collect();
        Self { threshold, direction: Direction::Above, indices }
    }

    /// `{i : observed[i] < threshold}`.
    pub fn below(observed: &[f64], threshold: f64) -> Self {
        let indices = (0..observed.len()).filter(|&i| observed[i] < threshold).collect();
        Self { threshold, direction: Direction::Below, indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn is_subset_of(&self, other: &RejectionSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    /// Membership mask of length `m`.
    pub fn mask(&self, m: usize) -> Vec<bool> {
        let mut mask = vec![false; m];
        for &i in &self.indices {
            mask[i] = true;
        }
        mask
    }
}

/// `R(t, x) = #{i : row[i] > t}`.
pub fn count_exceed(row: &[f64], t: f64) -> usize {
    row.iter().filter(|&&v| v > t).count()
}

/// False discovery proportion `V / (R v 1)`; `is_true_null[i]` marks the
/// hypotheses that actually hold.
pub fn fdp_of(rejected: &RejectionSet, is_true_null: &[bool]) -> f64 {
    let v = rejected.indices.iter().filter(|&&i| is_true_null[i]).count();
    v as f64 / rejected.len().max(1) as f64
}

/// Fault-injection hook for `selftest`: shifts every quantile rank up by one.
#[doc(hidden)]
pub static QUANTILE_OFF_BY_ONE: AtomicBool = AtomicBool::new(false);

/// Rank `k = ceil((1 - alpha) * d)` of the upper quantile, clamped to `1..=d`.
pub fn quantile_rank(d: usize, alpha: f64) -> usize {
    let k = ((1.0 - alpha) * d as f64 - RANK_EPS).ceil();
    let k = (k.max(1.0) as usize).min(d);
    if QUANTILE_OFF_BY_ONE.load(Ordering::Relaxed) {
        (k + 1).min(d)
    } else {
        k
    }
}

/// Exact `(1 - alpha)`-quantile: the smallest `t` such that at least a
/// `(1 - alpha)` fraction of `values` is `<= t`, i.e. the `k`-th order
/// statistic with `k = ceil((1 - alpha) * d)`. No interpolation.
pub fn upper_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    validate_alpha(alpha)?;
    let k = quantile_rank(values.len(), alpha);
    let mut sorted = values.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}
