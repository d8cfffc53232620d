//! Resampling maxT, single-step and step-down, plus the predicate that
//! checks the few-rejections coincidence with the FDX procedure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::{upper_quantile, validate_alpha, RejectionSet, StatMatrix};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxTStep {
    pub step: usize,
    pub threshold: f64,
    /// Rejections at this step's threshold.
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxTResult {
    pub q0: f64,
    pub q_lim: f64,
    /// Step 0 is the single-step threshold.
    pub steps: Vec<MaxTStep>,
    pub rejections_single: RejectionSet,
    pub rejections_seq: RejectionSet,
    /// Per-transformation maxima over all hypotheses.
    pub row_maxima: Vec<f64>,
}

/// Maximum over the hypotheses where `keep[i]`; `-inf` if none.
fn row_maxima(stats: &StatMatrix, keep: &[bool]) -> Vec<f64> {
    let rows: Vec<&[f64]> = stats.rows().collect();
    rows.par_iter()
        .map(|r| r.iter().zip(keep).filter(|(_, &k)| k).map(|(&v, _)| v).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// `Q0` = `(1 - alpha)` quantile of the row maxima; rejects `T_i(X) > Q0`.
pub fn maxt_single(stats: &StatMatrix, alpha: f64) -> Result<(f64, RejectionSet)> {
    validate_alpha(alpha)?;
    let q0 = upper_quantile(&row_maxima(stats, &vec![true; stats.m()]), alpha)?;
    Ok((q0, RejectionSet::above(stats.observed(), q0)))
}

/// Step-down maxT: `Q_j` uses maxima over the hypotheses not rejected at
/// step `j - 1`. Stops when `Q_j` stops decreasing or everything is
/// rejected (the maximum over an empty complement would be `-inf`; the
/// previous threshold is kept).
pub fn maxt_sequential(stats: &StatMatrix, alpha: f64) -> Result<MaxTResult> {
    validate_alpha(alpha)?;
    let m = stats.m();
    let obs = stats.observed();
    let maxima = row_maxima(stats, &vec![true; m]);
    let q0 = upper_quantile(&maxima, alpha)?;
    let single = RejectionSet::above(obs, q0);
    let mut steps = vec![MaxTStep { step: 0, threshold: q0, rejected: single.len() }];
    let mut current = q0;
    for step in 1.. {
        let keep: Vec<bool> = obs.iter().map(|&v| v <= current).collect();
        if !keep.iter().any(|&k| k) {
            break;
        }
        let next = upper_quantile(&row_maxima(stats, &keep), alpha)?;
        let rejected = obs.iter().filter(|&&v| v > next).count();
        steps.push(MaxTStep { step, threshold: next, rejected });
        if next >= current {
            break;
        }
        current = next;
    }
    Ok(MaxTResult {
        q0,
        q_lim: current,
        steps,
        rejections_single: single,
        rejections_seq: RejectionSet::above(obs, current),
        row_maxima: maxima,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Violation,
}

/// Checks that the FDX and maxT rejection sets agree whenever either
/// rejects fewer than `1 / gamma` hypotheses, and that both or neither
/// reject something.
pub fn coincidence_check(fdx: &RejectionSet, mx: &RejectionSet, gamma: f64) -> Verdict {
    let few = |r: &RejectionSet| (r.len() as f64) * gamma < 1.0;
    let differ = fdx.indices != mx.indices;
    if ((few(fdx) || few(mx)) && differ) || fdx.is_empty() != mx.is_empty() {
        Verdict::Violation
    } else {
        Verdict::Consistent
    }
}
