//! Simultaneous top-k statements and the JSON report document.
//!
//! With probability at least `1 - alpha`, for every threshold `t >= q` at
//! most `floor(gamma * R(t))` of the `R(t)` hypotheses above `t` are true
//! nulls. The zoom table lists these bounds for every achievable `k`.

use serde::{Serialize, Serializer};

use crate::common::{count_exceed, upper_quantile, Direction, RejectionSet, RANK_EPS};
use crate::fdx_seq::{SeqMode, SequentialResult};
use crate::fdx_single::SingleStepResult;
use crate::maxt::MaxTResult;

pub const SCHEMA_VERSION: u32 = 1;

/// A real that serialises as a JSON number when finite and as the string
/// `"inf"` / `"-inf"` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsonReal(pub f64);

impl Serialize for JsonReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            v if v.is_finite() => s.serialize_f64(v),
            v if v == f64::INFINITY => s.serialize_str("inf"),
            v if v == f64::NEG_INFINITY => s.serialize_str("-inf"),
            _ => s.serialize_str("nan"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoomRow {
    pub k: usize,
    /// The k-th most significant observed value (a p-value for p-value
    /// input).
    pub stat: JsonReal,
    /// At most this many of the top `k` are true nulls.
    pub v_bound: usize,
    /// `v_bound / k`, never above `gamma`.
    pub fdp_bound: f64,
    pub all_false: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoomTable {
    pub gamma: f64,
    pub q: JsonReal,
    /// Sorted by `k`, descending.
    pub rows: Vec<ZoomRow>,
}

/// `floor(gamma * k)`.
pub fn v_bound(k: usize, gamma: f64) -> usize {
    (gamma * k as f64 + RANK_EPS).floor() as usize
}

/// Zoom table for statistics where larger is more significant. Only counts
/// `k = R(t)` reachable by some `t >= q` are listed.
pub fn zoom_table(stats_obs: &[f64], q: f64, gamma: f64) -> ZoomTable {
    let mut desc = stats_obs.to_vec();
    desc.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut ks: Vec<usize> = std::iter::once(q)
        .chain(stats_obs.iter().copied().filter(|&v| v >= q))
        .map(|t| count_exceed(stats_obs, t))
        .filter(|&k| k > 0)
        .collect();
    ks.sort_unstable_by(|a, b| b.cmp(a));
    ks.dedup();
    let rows = ks
        .into_iter()
        .map(|k| {
            let v = v_bound(k, gamma);
            ZoomRow { k, stat: JsonReal(desc[k - 1]), v_bound: v, fdp_bound: v as f64 / k as f64, all_false: v == 0 }
        })
        .collect();
    ZoomTable { gamma, q: JsonReal(q), rows }
}

/// Zoom table for a rejection set in either orientation. For p-values the
/// table is built on `-p` and reported back on the p-value scale.
pub fn zoom_for(observed: &[f64], rejections: &RejectionSet, gamma: f64) -> ZoomTable {
    match rejections.direction {
        Direction::Above => zoom_table(observed, rejections.threshold, gamma),
        Direction::Below => {
            let neg: Vec<f64> = observed.iter().map(|v| -v).collect();
            let mut t = zoom_table(&neg, -rejections.threshold, gamma);
            t.q = JsonReal(rejections.threshold);
            for r in &mut t.rows {
                r.stat = JsonReal(-r.stat.0);
            }
            t
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Analysis<'a> {
    Single(&'a SingleStepResult),
    Sequential(&'a SequentialResult),
    MaxT { result: &'a MaxTResult, sequential: bool },
}

impl Analysis<'_> {
    pub fn method(&self) -> &'static str {
        match self {
            Self::Single(_) => "fdx-single",
            Self::Sequential(r) if r.mode == SeqMode::Exact => "fdx-seq-exact",
            Self::Sequential(_) => "fdx-seq",
            Self::MaxT { sequential: false, .. } => "maxt",
            Self::MaxT { sequential: true, .. } => "maxt-seq",
        }
    }

    pub fn rejections(&self) -> &RejectionSet {
        match self {
            Self::Single(r) => &r.rejections,
            Self::Sequential(r) => &r.rejections,
            Self::MaxT { result, sequential: false } => &result.rejections_single,
            Self::MaxT { result, sequential: true } => &result.rejections_seq,
        }
    }

    /// Per-transformation critical values (row maxima for maxT).
    fn critical_values(&self) -> &[f64] {
        match self {
            Self::Single(r) => &r.s_values,
            Self::Sequential(r) => &r.single.s_values,
            Self::MaxT { result, .. } => &result.row_maxima,
        }
    }

    fn steps(&self) -> Vec<ReportStep> {
        match self {
            Self::Single(_) | Self::MaxT { sequential: false, .. } => Vec::new(),
            Self::Sequential(r) => r
                .steps
                .iter()
                .map(|s| ReportStep { step: s.step, threshold: JsonReal(s.threshold), b: Some(s.b), combos: Some(s.combos), rejected: None })
                .collect(),
            Self::MaxT { result, sequential: true } => result
                .steps
                .iter()
                .map(|s| ReportStep { step: s.step, threshold: JsonReal(s.threshold), b: None, combos: None, rejected: Some(s.rejected) })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub alpha: f64,
    pub gamma: f64,
    pub seed: Option<u64>,
    pub d: usize,
    pub m: usize,
    pub input_kind: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SQuantiles {
    pub min: JsonReal,
    pub median: JsonReal,
    pub max: JsonReal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportStep {
    pub step: usize,
    pub threshold: JsonReal,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combos: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<SeqMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_kind: Option<String>,
    pub alpha: f64,
    pub gamma: f64,
    pub seed: Option<u64>,
    pub d: usize,
    pub m: usize,
    pub q: JsonReal,
    pub direction: Direction,
    pub no_rejections: bool,
    /// One-based hypothesis indices.
    pub rejected: Vec<usize>,
    pub zoom: Vec<ZoomRow>,
    pub s_quantiles: SQuantiles,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<ReportStep>,
}

impl Report {
    /// Re-expresses a report computed on `-p` on the p-value scale.
    pub fn into_pvalue_scale(mut self) -> Self {
        let neg = |r: JsonReal| JsonReal(-r.0);
        self.q = neg(self.q);
        self.direction = Direction::Below;
        for z in &mut self.zoom {
            z.stat = neg(z.stat);
        }
        let SQuantiles { min, median, max } = self.s_quantiles;
        self.s_quantiles = SQuantiles { min: neg(max), median: neg(median), max: neg(min) };
        for s in &mut self.steps {
            s.threshold = neg(s.threshold);
        }
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

pub fn render_report(meta: &ReportMeta, analysis: Analysis<'_>, table: &ZoomTable) -> Report {
    let rejections = analysis.rejections();
    let crit = analysis.critical_values();
    let quantile = |a: f64| JsonReal(upper_quantile(crit, a).unwrap_or(f64::NAN));
    let s_quantiles = SQuantiles {
        min: JsonReal(crit.iter().copied().fold(f64::INFINITY, f64::min)),
        median: quantile(0.5),
        max: JsonReal(crit.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    };
    Report {
        schema_version: SCHEMA_VERSION,
        method: analysis.method().to_string(),
        mode: match analysis {
            Analysis::Sequential(r) => Some(r.mode),
            _ => None,
        },
        input_kind: meta.input_kind.clone(),
        alpha: meta.alpha,
        gamma: meta.gamma,
        seed: meta.seed,
        d: meta.d,
        m: meta.m,
        q: JsonReal(rejections.threshold),
        direction: rejections.direction,
        no_rejections: rejections.is_empty(),
        rejected: rejections.indices.iter().map(|i| i + 1).collect(),
        zoom: table.rows.clone(),
        s_quantiles,
        steps: analysis.steps(),
    }
}
