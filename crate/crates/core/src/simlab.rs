//! Simulation lab: equicorrelated two-group data, label permutations and
//! empirical FDX / power summaries per method.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::{AnalysisConfig, RejectionSet};
use crate::error::{Error, Result};
use crate::fdx_seq::{sequential_approx, sequential_exact};
use crate::fdx_single::{ratio_exceeds, single_step};
use crate::maxt::maxt_sequential;
use crate::resampling::{build_stat_matrix, draw_transforms, Dataset, Design, Engine, ResamplePlan};
use crate::rng;
use crate::stats::StatisticPlugin;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDesign {
    pub n_per_group: usize,
    pub m: usize,
    pub rho: f64,
    /// Fraction of true null hypotheses.
    pub pi0: f64,
    pub d_signal: f64,
    pub replicates: usize,
    /// Rows of the statistic matrix, identity included.
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub seed: u64,
    #[serde(default = "default_combos")]
    pub combos_per_step: usize,
}

fn default_permutations() -> usize {
    50
}

fn default_combos() -> usize {
    25
}

impl SimDesign {
    pub fn m_false(&self) -> usize {
        ((1.0 - self.pi0) * self.m as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDesign(msg));
        if self.n_per_group < 2 {
            return bad(format!("n_per_group must be at least 2, got {}", self.n_per_group));
        }
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must be in [0,1), got {}", self.rho));
        }
        if !(self.pi0 > 0.0 && self.pi0 <= 1.0) {
            return bad(format!("pi0 must be in (0,1], got {}", self.pi0));
        }
        if !(self.d_signal >= 0.0 && self.d_signal.is_finite()) {
            return bad(format!("d_signal must be a nonnegative number, got {}", self.d_signal));
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        if self.permutations < 2 {
            return bad(format!("permutations must be at least 2, got {}", self.permutations));
        }
        if self.combos_per_step == 0 {
            return bad("combos_per_step must be positive".into());
        }
        AnalysisConfig::new(self.alpha, self.gamma).map(|_| ())
    }

    fn config(&self, replicate: usize) -> Result<AnalysisConfig> {
        Ok(AnalysisConfig::new(self.alpha, self.gamma)?
            .with_seed(rng::derive_seed(self.seed, &[replicate as u64, 2]))
            .with_combos_per_step(self.combos_per_step))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FdxSingle,
    FdxSeqExact,
    FdxSeqApprox,
    MaxtSingle,
    MaxtSeq,
}

impl Method {
    pub const ALL: [Method; 5] = [Self::FdxSingle, Self::FdxSeqExact, Self::FdxSeqApprox, Self::MaxtSingle, Self::MaxtSeq];

    pub fn name(self) -> &'static str {
        match self {
            Self::FdxSingle => "fdx_single",
            Self::FdxSeqExact => "fdx_seq_exact",
            Self::FdxSeqApprox => "fdx_seq_approx",
            Self::MaxtSingle => "maxt_single",
            Self::MaxtSeq => "maxt_seq",
        }
    }
}

/// Two-group data for one replicate. The first `n_per_group` rows form the
/// first group; the signal sits in its first `m_false` columns. Returns the
/// dataset and the true-null mask.
pub fn gen_two_group(design: &SimDesign, replicate: usize) -> Result<(Dataset, Vec<bool>)> {
    design.validate()?;
    let (k, m) = (design.n_per_group, design.m);
    let n = 2 * k;
    let m_false = design.m_false();
    let (a, b) = (design.rho.sqrt(), (1.0 - design.rho).sqrt());
    let mut rng = rng::stream(design.seed, &[replicate as u64, 0]);
    let mut data = Vec::with_capacity(n * m);
    for row in 0..n {
        let shared: f64 = rng.sample(StandardNormal);
        for col in 0..m {
            let z: f64 = rng.sample(StandardNormal);
            let signal = if row < k && col < m_false { design.d_signal } else { 0.0 };
            data.push(a * shared + b * z + signal);
        }
    }
    let labels = (0..n).map(|r| r < k).collect();
    let truth = (0..m).map(|c| c >= m_false).collect();
    Ok((Dataset::new(n, m, data, Design::TwoGroup { labels })?, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: Method,
    pub q: f64,
    pub r: usize,
    pub v: usize,
    pub fdp: f64,
    /// Some threshold `t >= q` has `FDP(t) > gamma`.
    pub simultaneous_violation: bool,
    /// One-based indices, kept for rejection-set comparisons.
    pub rejected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Mean fraction of false hypotheses rejected; NaN without false
    /// hypotheses.
    pub power: f64,
    pub fdx_rate: f64,
    pub simul_fdx_rate: f64,
    pub se_power: f64,
    pub se_fdx: f64,
    pub mean_rejections: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub design: SimDesign,
    /// Ordered by replicate, then by method.
    pub records: Vec<ReplicateRecord>,
    pub summaries: Vec<MethodSummary>,
}

impl SimOutcome {
    pub fn records_for(&self, method: Method) -> impl Iterator<Item = &ReplicateRecord> + '_ {
        self.records.iter().filter(move |r| r.method == method)
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

/// Whether `FDP(t) > gamma` for some `t >= q`. Only thresholds at observed
/// values matter since `FDP` is constant in between.
pub fn simultaneous_violation(observed: &[f64], is_true_null: &[bool], q: f64, gamma: f64) -> bool {
    let mut order: Vec<usize> = (0..observed.len()).filter(|&i| observed[i] > q).collect();
    order.sort_unstable_by(|&a, &b| observed[b].total_cmp(&observed[a]));
    let mut v = 0;
    for (pos, &i) in order.iter().enumerate() {
        v += usize::from(is_true_null[i]);
        let closes_tie_block = order.get(pos + 1).is_none_or(|&j| observed[j] < observed[i]);
        if closes_tie_block && ratio_exceeds(v, pos + 1, gamma) {
            return true;
        }
    }
    false
}

fn record(replicate: usize, method: Method, q: f64, rs: &RejectionSet, obs: &[f64], truth: &[bool], gamma: f64) -> ReplicateRecord {
    let v = rs.indices.iter().filter(|&&i| truth[i]).count();
    ReplicateRecord {
        replicate,
        method,
        q,
        r: rs.len(),
        v,
        fdp: v as f64 / rs.len().max(1) as f64,
        simultaneous_violation: simultaneous_violation(obs, truth, q, gamma),
        rejected: rs.indices.iter().map(|i| i + 1).collect(),
    }
}

fn run_replicate(design: &SimDesign, methods: &[Method], replicate: usize) -> Result<Vec<ReplicateRecord>> {
    let (ds, truth) = gen_two_group(design, replicate)?;
    let plan = ResamplePlan::new(
        Engine::LabelPermutation,
        design.permutations - 1,
        rng::derive_seed(design.seed, &[replicate as u64, 1]),
    );
    let transforms = draw_transforms(&plan, ds.n())?;
    let stats = build_stat_matrix(&ds, &transforms, StatisticPlugin::default())?;
    let cfg = design.config(replicate)?;
    let obs = stats.observed();
    let needs_maxt = methods.iter().any(|m| matches!(m, Method::MaxtSingle | Method::MaxtSeq));
    let maxt = if needs_maxt { Some(maxt_sequential(&stats, cfg.alpha)?) } else { None };
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        // FWER procedures are judged against the same gamma for comparability.
        let (q, rs) = match method {
            Method::FdxSingle => {
                let r = single_step(&stats, &cfg)?;
                (r.q, r.rejections)
            }
            Method::FdxSeqExact => {
                let r = sequential_exact(&stats, &cfg)?;
                (r.q_lim, r.rejections)
            }
            Method::FdxSeqApprox => {
                let r = sequential_approx(&stats, &cfg)?;
                (r.q_lim, r.rejections)
            }
            Method::MaxtSingle => {
                let r = maxt.as_ref().expect("computed above");
                (r.q0, r.rejections_single.clone())
            }
            Method::MaxtSeq => {
                let r = maxt.as_ref().expect("computed above");
                (r.q_lim, r.rejections_seq.clone())
            }
        };
        out.push(record(replicate, method, q, &rs, obs, &truth, cfg.gamma));
    }
    Ok(out)
}

fn summarise(design: &SimDesign, method: Method, records: &[&ReplicateRecord]) -> MethodSummary {
    let n = records.len() as f64;
    let m_false = design.m_false();
    let fdx = records.iter().filter(|r| r.fdp > design.gamma).count() as f64 / n;
    let simul = records.iter().filter(|r| r.simultaneous_violation).count() as f64 / n;
    let (power, se_power) = if m_false == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let fractions: Vec<f64> = records.iter().map(|r| (r.r - r.v) as f64 / m_false as f64).collect();
        let mean = fractions.iter().sum::<f64>() / n;
        let var = if records.len() > 1 {
            fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, (var / n).sqrt())
    };
    MethodSummary {
        method,
        power,
        fdx_rate: fdx,
        simul_fdx_rate: simul,
        se_power,
        se_fdx: (fdx * (1.0 - fdx) / n).sqrt(),
        mean_rejections: records.iter().map(|r| r.r as f64).sum::<f64>() / n,
    }
}

/// Runs every replicate (in parallel, each on its own seed-derived streams)
/// and aggregates per method in a fixed order.
pub fn run_study(design: &SimDesign, methods: &[Method]) -> Result<SimOutcome> {
    design.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidDesign("no methods selected".into()));
    }
    let per_rep: Vec<Vec<ReplicateRecord>> = (0..design.replicates)
        .into_par_iter()
        .map(|rep| run_replicate(design, methods, rep))
        .collect::<Result<_>>()?;
    let records: Vec<ReplicateRecord> = per_rep.into_iter().flatten().collect();
    let summaries = methods
        .iter()
        .map(|&m| summarise(design, m, &records.iter().filter(|r| r.method == m).collect::<Vec<_>>()))
        .collect();
    Ok(SimOutcome { design: design.clone(), records, summaries })
}

pub const PLOT_HEADER: &str =
    "n_per_group,m,rho,pi0,d_signal,replicates,permutations,alpha,gamma,seed,method,power,fdx_rate,simul_fdx_rate,se_power,se_fdx";

/// Plot-data CSV text: one row per (design cell, method).
pub fn plot_data(outcomes: &[SimOutcome]) -> String {
    let mut s = String::from(PLOT_HEADER);
    s.push('\n');
    for o in outcomes {
        let d = &o.design;
        for m in &o.summaries {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                d.n_per_group,
                d.m,
                d.rho,
                d.pi0,
                d.d_signal,
                d.replicates,
                d.permutations,
                d.alpha,
                d.gamma,
                d.seed,
                m.method.name(),
                m.power,
                m.fdx_rate,
                m.simul_fdx_rate,
                m.se_power,
                m.se_fdx
            )
            .expect("writing to a String");
        }
    }
    s
}

pub fn emit_plot_data(outcomes: &[SimOutcome], path: &Path) -> std::io::Result<()> {
    if outcomes.is_empty() {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "no simulation outcomes"));
    }
    std::fs::write(path, plot_data(outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design() -> SimDesign {
        SimDesign {
            n_per_group: 10,
            m: 20,
            rho: 0.0,
            pi0: 0.8,
            d_signal: 1.0,
            replicates: 8,
            permutations: 30,
            alpha: 0.1,
            gamma: 0.1,
            seed: 11,
            combos_per_step: 25,
        }
    }

    fn corr(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    }

    fn pairs(d: &SimDesign, reps: usize) -> (Vec<f64>, Vec<f64>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for rep in 0..reps {
            let (ds, _) = gen_two_group(d, rep).unwrap();
            for row in 0..ds.n() {
                x.push(ds.get(row, 0));
                y.push(ds.get(row, 1));
            }
        }
        (x, y)
    }

    #[test]
    fn generator_layout() {
        let d = design();
        let (ds, truth) = gen_two_group(&d, 3).unwrap();
        assert_eq!((ds.n(), ds.m()), (20, 20));
        assert_eq!(truth.iter().filter(|&&t| !t).count(), 4);
        assert!(truth[..4].iter().all(|&t| !t));
        assert_eq!(gen_two_group(&d, 3).unwrap().0, ds);
        assert_ne!(gen_two_group(&d, 4).unwrap().0, ds);
    }

    #[test]
    fn within_row_correlation() {
        let mut d = design();
        d.m = 2;
        d.pi0 = 1.0;
        d.rho = 0.9;
        let (x, y) = pairs(&d, 500);
        assert!((corr(&x, &y) - 0.9).abs() < 0.02);
        d.rho = 0.0;
        let (x, y) = pairs(&d, 500);
        // 10^4 draws: sd of the sample correlation is about 0.01
        assert!(corr(&x, &y).abs() < 0.05);
    }

    #[test]
    fn bad_designs() {
        let mut d = design();
        d.rho = 1.0;
        assert!(matches!(gen_two_group(&d, 0), Err(Error::InvalidDesign(_))));
        let mut d = design();
        d.pi0 = 0.0;
        assert!(d.validate().is_err());
        let mut d = design();
        d.gamma = 1.0;
        assert!(d.validate().is_err());
    }

    #[test]
    fn violation_flag() {
        let obs = [5.0, 4.0, 3.0, 2.0, 1.0];
        let truth = [false, true, false, false, true];
        assert!(simultaneous_violation(&obs, &truth, 0.0, 0.3));
        assert!(!simultaneous_violation(&obs, &truth, 4.5, 0.3));
        assert!(!simultaneous_violation(&obs, &truth, 0.0, 0.5));
        // ties: {5, 4, 4} has one null in three
        let obs = [5.0, 4.0, 4.0];
        let truth = [false, true, false];
        assert!(!simultaneous_violation(&obs, &truth, 0.0, 0.4));
    }

    #[test]
    fn study_basics() {
        let d = design();
        let out = run_study(&d, &Method::ALL).unwrap();
        assert_eq!(out.records.len(), d.replicates * 5);
        for s in &out.summaries {
            assert!((0.0..=1.0).contains(&s.power));
            assert!((0.0..=1.0).contains(&s.fdx_rate));
            assert!(s.simul_fdx_rate >= s.fdx_rate);
        }
        for rep in 0..d.replicates {
            let r = |m| out.records.iter().find(|r| r.replicate == rep && r.method == m).unwrap().r;
            assert!(r(Method::FdxSeqExact) >= r(Method::FdxSingle));
            assert!(r(Method::MaxtSeq) >= r(Method::MaxtSingle));
        }
        assert_eq!(run_study(&d, &Method::ALL).unwrap(), out);
    }

    #[test]
    fn gamma_zero_matches_maxt() {
        let mut d = design();
        d.gamma = 0.0;
        let out = run_study(&d, &[Method::FdxSingle, Method::MaxtSingle]).unwrap();
        let a: Vec<_> = out.records_for(Method::FdxSingle).map(|r| &r.rejected).collect();
        let b: Vec<_> = out.records_for(Method::MaxtSingle).map(|r| &r.rejected).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn plot_rows() {
        let out = run_study(&design(), &[Method::FdxSingle, Method::MaxtSingle]).unwrap();
        let text = plot_data(std::slice::from_ref(&out));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], PLOT_HEADER);
        assert!(lines[1].contains(",fdx_single,"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plot.csv");
        emit_plot_data(&[out], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), text);
        assert!(emit_plot_data(&[], &p).is_err());
    }
}
