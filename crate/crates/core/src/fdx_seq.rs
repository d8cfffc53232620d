//! Sequential refinement of the single-step threshold.
//!
//! Step `i` rejects `R(q_{i-1})`, sets `B_i = ceil((1 - gamma) R(q_{i-1}))`
//! and considers every subset `I` whose complement is a `B_i`-subset of the
//! current rejections. `q_i` is the largest `(1 - alpha)` quantile of the
//! subset-restricted critical values. The exact variant enumerates all such
//! subsets; the approximate variant maximises over `M` uniform draws.

use std::collections::HashSet;

use itertools::Itertools;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::{upper_quantile, AnalysisConfig, RejectionSet, StatMatrix, RANK_EPS};
use crate::error::{Error, Result};
use crate::fdx_single::{indexed_desc, single_step, sorted_desc, sweep_critical_value, SingleStepResult, SortedMatrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqMode {
    Exact,
    Approximate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqStep {
    pub step: usize,
    /// `B_i`, the number of current rejections assumed false.
    pub b: usize,
    pub threshold: f64,
    /// Subsets evaluated in this step (draws, for the approximate mode).
    pub combos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialResult {
    pub single: SingleStepResult,
    pub q_lim: f64,
    pub steps: Vec<SeqStep>,
    pub mode: SeqMode,
    pub rejections: RejectionSet,
}

/// `ceil((1 - gamma) * r)`.
pub fn false_count(r: usize, gamma: f64) -> usize {
    (((1.0 - gamma) * r as f64) - RANK_EPS).ceil().max(0.0) as usize
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for j in 0..k {
        match acc.checked_mul(n - j) {
            Some(v) => acc = v / (j + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Critical value with the numerator restricted to hypotheses where
/// `subset[i]` is true. The grid is still the full union of both rows.
pub fn s_g_subset_grid(stats_obs: &[f64], stats_g: &[f64], subset: &[bool], gamma: f64) -> f64 {
    sweep_critical_value(&sorted_desc(stats_obs), &indexed_desc(stats_g), |i| subset[i], gamma)
}

/// Threshold for one subset, given the complement (hypotheses dropped from
/// the numerator).
fn subset_quantile(sorted: &SortedMatrix, m: usize, complement: &[usize], cfg: &AnalysisConfig) -> Result<f64> {
    let mut keep = vec![true; m];
    for &i in complement {
        keep[i] = false;
    }
    let s = sorted.critical_values(&|i: usize| keep[i], cfg.gamma);
    upper_quantile(&s, cfg.alpha)
}

/// Supplies the complements to evaluate at a step, given the current
/// rejections and `B`. Returns the complements and the number of draws made.
type Chooser<'a> = dyn Fn(usize, &[usize], usize) -> Result<(Vec<Vec<usize>>, usize)> + 'a;

fn refine(stats: &StatMatrix, cfg: &AnalysisConfig, mode: SeqMode, choose: &Chooser<'_>) -> Result<SequentialResult> {
    let single = single_step(stats, cfg)?;
    let sorted = SortedMatrix::new(stats);
    let m = stats.m();
    let obs = stats.observed();
    let mut current = single.q;
    let mut steps = Vec::new();
    for step in 1.. {
        if cfg.max_steps.is_some_and(|cap| step > cap) {
            break;
        }
        let rejected: Vec<usize> = (0..m).filter(|&i| obs[i] > current).collect();
        // Everything rejected: no refinement can add rejections.
        if rejected.len() == m {
            break;
        }
        let b = false_count(rejected.len(), cfg.gamma);
        let (complements, combos) = choose(step, &rejected, b)?;
        let candidate = complements
            .par_iter()
            .map(|c| subset_quantile(&sorted, m, c, cfg))
            .try_reduce(|| f64::NEG_INFINITY, |a, b| Ok(a.max(b)))?;
        // Candidates can rise once earlier rejections re-enter a subset.
        let threshold = candidate.min(current);
        steps.push(SeqStep { step, b, threshold, combos });
        let decreased = threshold < current;
        current = threshold;
        if !decreased {
            break;
        }
    }
    Ok(SequentialResult { rejections: RejectionSet::above(obs, current), q_lim: current, single, steps, mode })
}

/// Exact sequential threshold `q_lim`, enumerating every subset per step.
///
/// Fails with [`Error::EnumerationInfeasible`] as soon as a step would need
/// more than `cfg.exact_combo_limit` subsets.
pub fn sequential_exact(stats: &StatMatrix, cfg: &AnalysisConfig) -> Result<SequentialResult> {
    let limit = cfg.exact_combo_limit;
    refine(stats, cfg, SeqMode::Exact, &|step, rejected, b| {
        let combos = binomial(rejected.len(), b);
        if combos > u128::from(limit) {
            return Err(Error::EnumerationInfeasible { step, combos, limit });
        }
        let all: Vec<Vec<usize>> = rejected.iter().copied().combinations(b).collect();
        let n = all.len();
        Ok((all, n))
    })
}

fn draw_complement(seed: u64, step: usize, draw: usize, rejected: &[usize], b: usize) -> Vec<usize> {
    let mut rng = rng::stream(seed, &[step as u64, draw as u64]);
    let mut c: Vec<usize> = index::sample(&mut rng, rejected.len(), b).into_iter().map(|k| rejected[k]).collect();
    c.sort_unstable();
    c
}

/// Randomised approximation `q̂_lim`: each step maximises over
/// `cfg.combos_per_step` uniform draws (with replacement) of the subsets.
/// Stops once the threshold no longer strictly decreases; thresholds are
/// clamped to be non-increasing, as in the exact mode.
pub fn sequential_approx(stats: &StatMatrix, cfg: &AnalysisConfig) -> Result<SequentialResult> {
    let draws = cfg.combos_per_step;
    let seed = cfg.seed;
    refine(stats, cfg, SeqMode::Approximate, &|step, rejected, b| {
        let all = (0..draws).map(|k| draw_complement(seed, step, k, rejected, b)).collect();
        Ok((all, draws))
    })
}

/// Approximate mode with draws continued until every subset has been seen.
/// Coincides with the exact mode; used to cross-check the two.
#[doc(hidden)]
pub fn sequential_approx_full_coverage(stats: &StatMatrix, cfg: &AnalysisConfig) -> Result<SequentialResult> {
    let seed = cfg.seed;
    let limit = cfg.exact_combo_limit;
    refine(stats, cfg, SeqMode::Approximate, &|step, rejected, b| {
        let total = binomial(rejected.len(), b);
        if total > u128::from(limit) {
            return Err(Error::EnumerationInfeasible { step, combos: total, limit });
        }
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut draws = 0;
        while (seen.len() as u128) < total {
            seen.insert(draw_complement(seed, step, draws, rejected, b));
            draws += 1;
        }
        let mut all: Vec<Vec<usize>> = seen.into_iter().collect();
        all.sort_unstable();
        Ok((all, draws))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdx_single::s_g_grid;
    use crate::maxt::maxt_sequential;
    use crate::oracle;
    use proptest::prelude::*;

    fn cfg(alpha: f64, gamma: f64) -> AnalysisConfig {
        AnalysisConfig::new(alpha, gamma).unwrap()
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(40, 4), 91_390);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(200, 100), u128::MAX);
    }

    #[test]
    fn false_count_values() {
        assert_eq!(false_count(4, 0.5), 2);
        assert_eq!(false_count(9, 0.1), 9);
        assert_eq!(false_count(10, 0.1), 9);
        assert_eq!(false_count(7, 0.0), 7);
        assert_eq!(false_count(0, 0.3), 0);
    }

    #[test]
    fn subset_examples() {
        let obs = [5.0, 3.0, 1.0];
        let g = [4.0, 2.0, 0.5];
        assert_eq!(s_g_subset_grid(&obs, &g, &[true; 3], 0.3), s_g_grid(&obs, &g, 0.3));
        assert_eq!(s_g_subset_grid(&obs, &g, &[false; 3], 0.3), 0.5);
        let sub = [false, true, true];
        let expected = oracle::midpoint_sup(&obs, &g, Some(&sub), 0.3);
        // At t in [1, 2) the ratio is 1/2; at t in [2, 3) it is 0.
        assert_eq!(expected, 2.0);
        assert_eq!(s_g_subset_grid(&obs, &g, &sub, 0.3), expected);
    }

    #[test]
    fn no_single_step_rejections_is_a_fixed_point() {
        let sm = StatMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 0.5]]).unwrap();
        let r = sequential_exact(&sm, &cfg(0.4, 0.2)).unwrap();
        assert!(r.single.rejections.is_empty());
        assert_eq!(r.q_lim, r.single.q);
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.steps[0].b, 0);
        assert_eq!(r.steps[0].combos, 1);
    }

    fn small_instance() -> StatMatrix {
        // m = 6, d = 8: hypotheses 0..3 carry signal in the observed row.
        let obs = vec![9.1, 8.3, 7.2, 6.4, 0.7, 1.9];
        let mut rows = vec![obs];
        let noise = [
            [1.1, 0.4, 2.2, 0.3, 1.5, 0.9],
            [0.2, 1.8, 0.6, 2.7, 0.1, 1.2],
            [2.4, 0.8, 1.3, 0.5, 3.3, 0.15],
            [0.35, 2.9, 0.45, 1.6, 0.25, 2.1],
            [1.7, 0.05, 2.6, 0.95, 1.05, 0.55],
            [0.65, 1.45, 0.12, 3.05, 2.35, 0.85],
            [2.05, 1.25, 1.95, 0.75, 0.42, 2.55],
        ];
        rows.extend(noise.iter().map(|r| r.to_vec()));
        StatMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn small_instance_matches_exhaustive() {
        let sm = small_instance();
        let c = cfg(0.25, 0.5);
        let single = crate::fdx_single::single_step(&sm, &c).unwrap();
        let r0 = single.rejections.len();
        assert_eq!(r0, 5);
        assert_eq!(false_count(r0, 0.5), 3);
        let r = sequential_exact(&sm, &c).unwrap();
        assert_eq!(r.steps[0].combos, 10);
        assert_eq!(r.q_lim, oracle::sequential_exhaustive(&sm, 0.25, 0.5));
        assert!(r.q_lim <= r.single.q);
    }

    #[test]
    fn infeasible_enumeration_is_refused() {
        let sm = small_instance();
        let c = cfg(0.25, 0.5).with_exact_combo_limit(9);
        assert!(matches!(sequential_exact(&sm, &c), Err(Error::EnumerationInfeasible { step: 1, combos: 10, limit: 9 })));
        assert!(sequential_exact(&sm, &c.with_exact_combo_limit(10)).is_ok());
    }

    #[test]
    fn later_candidates_can_exceed_the_previous_threshold() {
        let sm = StatMatrix::new(
            5,
            5,
            vec![
                0.0, 11.38, 8.33, 9.0, 9.97, -7.91, 9.25, -6.79, -3.51, -8.4, 0.52, 3.09, 2.81, -2.34, -0.89, 4.63, -3.58,
                -3.47, 2.68, -1.87, 0.39, -6.68, 4.92, 5.75, 5.74,
            ],
        )
        .unwrap();
        let c = cfg(0.2, 0.25);
        let r = sequential_exact(&sm, &c).unwrap();
        assert_eq!(r.single.q, 9.25);
        assert_eq!(r.steps.iter().map(|s| (s.b, s.threshold)).collect::<Vec<_>>(), vec![(2, 4.92), (3, 4.92)]);
        // Unclamped, the second step would return to the single-step value.
        let obs = sm.observed();
        let sorted = SortedMatrix::new(&sm);
        let rejected: Vec<usize> = (0..5).filter(|&i| obs[i] > 4.92).collect();
        let raw = rejected
            .iter()
            .copied()
            .combinations(3)
            .map(|comp| subset_quantile(&sorted, 5, &comp, &c).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(raw, 9.25);
        assert_eq!(sequential_approx_full_coverage(&sm, &c).unwrap().q_lim, r.q_lim);
    }

    #[test]
    fn max_steps_caps_refinement() {
        let sm = small_instance();
        let c = cfg(0.25, 0.5).with_max_steps(Some(1));
        let r = sequential_approx(&sm, &c).unwrap();
        assert!(r.steps.len() <= 1);
    }

    #[test]
    fn approx_is_deterministic() {
        let sm = small_instance();
        let c = cfg(0.25, 0.5).with_seed(11).with_combos_per_step(3);
        assert_eq!(sequential_approx(&sm, &c).unwrap(), sequential_approx(&sm, &c).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn subset_grid_matches_oracle(
            inst in oracle::strategy::tie_free_matrix(2..=10, 2..=12),
            mask in prop::collection::vec(any::<bool>(), 12),
            gamma in prop::sample::select(vec![0.0, 0.1, 0.25, 0.5]),
        ) {
            let sub = &mask[..inst.m()];
            for g in 0..inst.d() {
                prop_assert_eq!(
                    s_g_subset_grid(inst.observed(), inst.row(g), sub, gamma),
                    oracle::midpoint_sup(inst.observed(), inst.row(g), Some(sub), gamma)
                );
            }
        }

        #[test]
        fn exact_matches_exhaustive_oracle(
            inst in oracle::strategy::tie_free_matrix(4..=10, 2..=8),
            gamma in prop::sample::select(vec![0.1, 0.25, 0.5]),
            alpha in prop::sample::select(vec![0.1, 0.25, 0.5]),
        ) {
            let r = sequential_exact(&inst, &cfg(alpha, gamma)).unwrap();
            prop_assert_eq!(r.q_lim, oracle::sequential_exhaustive(&inst, alpha, gamma));
        }

        #[test]
        fn sequential_invariants(
            inst in oracle::strategy::tie_free_matrix(2..=16, 2..=10),
            gamma in prop::sample::select(vec![0.0, 0.1, 0.2, 0.5]),
            alpha in prop::sample::select(vec![0.1, 0.2, 0.5]),
            seed in any::<u64>(),
        ) {
            let c = cfg(alpha, gamma).with_seed(seed).with_combos_per_step(4);
            let exact = sequential_exact(&inst, &c).unwrap();
            let approx = sequential_approx(&inst, &c).unwrap();
            for r in [&exact, &approx] {
                prop_assert!(r.q_lim <= r.single.q);
                prop_assert!(r.single.rejections.is_subset_of(&r.rejections));
                prop_assert_eq!(r.rejections.threshold, r.q_lim);
                let grid = {
                    let mut v = inst.as_slice().to_vec();
                    v.sort_by(f64::total_cmp);
                    v.dedup();
                    v.len()
                };
                prop_assert!(r.steps.len() <= grid);
            }
            let mut prev = exact.single.q;
            for s in &exact.steps {
                prop_assert!(s.threshold <= prev);
                prev = s.threshold;
            }
            // Every step but the last strictly decreases.
            for r in [&exact, &approx] {
                let mut prev = r.single.q;
                for s in r.steps.iter().take(r.steps.len().saturating_sub(1)) {
                    prop_assert!(s.threshold < prev);
                    prev = s.threshold;
                }
            }
        }

        #[test]
        fn full_coverage_approx_equals_exact(
            inst in oracle::strategy::tie_free_matrix(4..=12, 2..=9),
            gamma in prop::sample::select(vec![0.1, 0.25, 0.5]),
            seed in any::<u64>(),
        ) {
            let c = cfg(0.2, gamma).with_seed(seed).with_exact_combo_limit(30);
            if let Ok(exact) = sequential_exact(&inst, &c) {
                let approx = sequential_approx_full_coverage(&inst, &c).unwrap();
                prop_assert_eq!(approx.q_lim, exact.q_lim);
                prop_assert_eq!(approx.rejections.indices, exact.rejections.indices);
            }
        }

        #[test]
        fn gamma_zero_equals_sequential_maxt(
            inst in oracle::strategy::tie_free_matrix(2..=20, 2..=15),
            alpha in prop::sample::select(vec![0.05, 0.1, 0.2, 0.5]),
            seed in any::<u64>(),
        ) {
            let c = cfg(alpha, 0.0).with_seed(seed).with_combos_per_step(1);
            let mx = maxt_sequential(&inst, alpha).unwrap();
            let exact = sequential_exact(&inst, &c).unwrap();
            let approx = sequential_approx(&inst, &c).unwrap();
            prop_assert_eq!(exact.q_lim, mx.q_lim);
            prop_assert_eq!(&exact.rejections.indices, &mx.rejections_seq.indices);
            prop_assert_eq!(approx.q_lim, mx.q_lim);
            prop_assert_eq!(&approx.rejections.indices, &mx.rejections_seq.indices);
        }
    }
}
