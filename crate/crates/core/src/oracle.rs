//! Brute-force reference computations.
//!
//! These evaluate the defining formulas directly (interval scans, literal
//! min-set quantiles, full subset enumeration) and share no code path with
//! the grid sweeps in [`crate::fdx_single`] and [`crate::fdx_seq`]. They back
//! the property tests and the `selftest` subcommand.

use itertools::Itertools;

use crate::common::{count_exceed, RejectionSet, StatMatrix, RANK_EPS};

fn probe_between(a: f64, b: f64) -> f64 {
    if b == f64::INFINITY {
        if a + 1.0 > a {
            a + 1.0
        } else {
            f64::MAX
        }
    } else {
        a + (b - a) / 2.0
    }
}

/// `sup{t : |I ∩ R(t, gX)| / (R(t, X) v 1) > gamma}` by scanning every
/// constancy interval of the step function.
///
/// The intervals are `(-inf, x_1)`, `[x_j, x_{j+1})` and `[x_k, inf)` over the
/// sorted distinct grid; each is probed at one interior point and the
/// supremum is the right end of the last qualifying interval. `subset`
/// restricts the numerator (`None` = all hypotheses). When no interval
/// qualifies the grid minimum is returned, the convention shared with the
/// grid formula.
pub fn midpoint_sup(stats_obs: &[f64], stats_g: &[f64], subset: Option<&[bool]>, gamma: f64) -> f64 {
    let mut grid: Vec<f64> = stats_obs.iter().chain(stats_g).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let qualifies = |t: f64| {
        let num = stats_g
            .iter()
            .enumerate()
            .filter(|&(i, &v)| subset.is_none_or(|s| s[i]) && v > t)
            .count();
        let den = count_exceed(stats_obs, t).max(1);
        num as f64 / den as f64 > gamma
    };
    let k = grid.len();
    let mut sup = None;
    if qualifies(f64::NEG_INFINITY) {
        sup = Some(grid[0]);
    }
    for j in 0..k {
        let probe = if j + 1 < k { probe_between(grid[j], grid[j + 1]) } else { grid[j] };
        if qualifies(probe) {
            sup = Some(if j + 1 < k { grid[j + 1] } else { f64::INFINITY });
        }
    }
    sup.unwrap_or(grid[0])
}

/// `min{t in values : #{s <= t} >= (1 - alpha) |values|}`.
pub fn brute_quantile(values: &[f64], alpha: f64) -> f64 {
    let need = (1.0 - alpha) * values.len() as f64 - RANK_EPS;
    values
        .iter()
        .copied()
        .filter(|&t| values.iter().filter(|&&s| s <= t).count() as f64 >= need)
        .fold(f64::INFINITY, f64::min)
}

/// Single-step threshold computed from the interval-scan oracle.
pub fn single_step_q(stats: &StatMatrix, alpha: f64, gamma: f64) -> f64 {
    let s: Vec<f64> = stats.rows().map(|r| midpoint_sup(stats.observed(), r, None, gamma)).collect();
    brute_quantile(&s, alpha)
}

/// Direct p-value formulation: left-continuous ratio with `R(t) = #{P < t}`,
/// `s^- = min` of the qualifying grid points (`+inf` if none),
/// `s_g = max{t in grid : t < s^-}`, and the threshold is the largest `t`
/// with `#{g : s_g >= t} >= (1 - alpha) d`. Rejects `P_i(X) < q`.
pub fn pvalue_direct(pmat: &StatMatrix, alpha: f64, gamma: f64) -> RejectionSet {
    let obs = pmat.observed();
    let below = |row: &[f64], t: f64| row.iter().filter(|&&p| p < t).count();
    let s: Vec<f64> = pmat
        .rows()
        .map(|row| {
            let mut grid: Vec<f64> = obs.iter().chain(row).copied().collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let s_minus = grid
                .iter()
                .copied()
                .find(|&t| below(row, t) as f64 / below(obs, t).max(1) as f64 > gamma)
                .unwrap_or(f64::INFINITY);
            grid.iter().copied().filter(|&t| t < s_minus).fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let need = (1.0 - alpha) * s.len() as f64 - RANK_EPS;
    let q = s
        .iter()
        .copied()
        .filter(|&t| s.iter().filter(|&&v| v >= t).count() as f64 >= need)
        .fold(f64::NEG_INFINITY, f64::max);
    RejectionSet::below(obs, q)
}

/// `ceil((1 - gamma) * r)` with the same rounding slack as quantile ranks.
pub fn b_size(r: usize, gamma: f64) -> usize {
    (((1.0 - gamma) * r as f64) - RANK_EPS).ceil().max(0.0) as usize
}

/// Exact sequential threshold by enumerating every subset at every step
/// with the interval-scan oracle. Exponential; small inputs only.
///
/// Stops when everything is rejected or the threshold stops decreasing.
pub fn sequential_exhaustive(stats: &StatMatrix, alpha: f64, gamma: f64) -> f64 {
    let m = stats.m();
    let obs = stats.observed();
    let mut q = single_step_q(stats, alpha, gamma);
    loop {
        let rejected: Vec<usize> = (0..m).filter(|&i| obs[i] > q).collect();
        if rejected.len() == m {
            return q;
        }
        let b = b_size(rejected.len(), gamma);
        let next = rejected
            .iter()
            .copied()
            .combinations(b)
            .map(|complement| {
                let mut keep = vec![true; m];
                for i in complement {
                    keep[i] = false;
                }
                let s: Vec<f64> = stats.rows().map(|r| midpoint_sup(obs, r, Some(&keep), gamma)).collect();
                brute_quantile(&s, alpha)
            })
            .fold(f64::NEG_INFINITY, f64::max)
            .min(q);
        if next == q {
            return q;
        }
        q = next;
    }
}

/// Sequential maxT threshold straight from its definition.
pub fn maxt_sequential_q(stats: &StatMatrix, alpha: f64) -> f64 {
    let m = stats.m();
    let obs = stats.observed();
    let maxima = |keep: &dyn Fn(usize) -> bool| -> Vec<f64> {
        stats
            .rows()
            .map(|r| (0..m).filter(|&i| keep(i)).map(|i| r[i]).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    };
    let mut q = brute_quantile(&maxima(&|_| true), alpha);
    loop {
        if (0..m).all(|i| obs[i] > q) {
            return q;
        }
        let next = brute_quantile(&maxima(&|i| obs[i] <= q), alpha);
        if next >= q {
            return q;
        }
        q = next;
    }
}
