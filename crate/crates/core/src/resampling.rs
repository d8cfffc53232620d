//! Transformation draws (identity first, then random group elements) and
//! materialisation of the statistic matrix `T_i(gX)`.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::StatMatrix;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{abs_mean, abs_pearson, abs_two_sample_t, StatisticPlugin};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// `labels[k]` is true for observations in the first group.
    TwoGroup { labels: Vec<bool> },
    OneSample,
    Response { y: Vec<f64> },
}

/// Raw data: `n` observations (rows) by `m` variables (columns), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    m: usize,
    data: Vec<f64>,
    design: Design,
}

impl Dataset {
    pub fn new(n: usize, m: usize, data: Vec<f64>, design: Design) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidDataset(format!("empty {n}x{m} data matrix")));
        }
        if data.len() != n * m {
            return Err(Error::DimensionMismatch(format!("{} values for a {n}x{m} data matrix", data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite value at row {}, column {}", pos / m, pos % m)));
        }
        match &design {
            Design::TwoGroup { labels } => {
                if labels.len() != n {
                    return Err(Error::DimensionMismatch(format!("{} labels for {n} observations", labels.len())));
                }
                if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                    return Err(Error::InvalidDataset("labels must contain both groups".into()));
                }
            }
            Design::Response { y } => {
                if y.len() != n {
                    return Err(Error::DimensionMismatch(format!("response has {} values for {n} observations", y.len())));
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidDataset("non-finite response value".into()));
                }
            }
            Design::OneSample => {}
        }
        Ok(Self { n, m, data, design })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.m + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, col)).collect()
    }

    fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.m).map(|c| self.column(c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    LabelPermutation,
    SignFlip,
    ResponsePermutation,
}

impl Engine {
    pub fn for_design(design: &Design) -> Self {
        match design {
            Design::TwoGroup { .. } => Self::LabelPermutation,
            Design::OneSample => Self::SignFlip,
            Design::Response { .. } => Self::ResponsePermutation,
        }
    }

    fn compatible(&self, design: &Design) -> bool {
        *self == Self::for_design(design)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub engine: Engine,
    /// Number of random (non-identity) draws `B`.
    pub count: usize,
    pub with_replacement: bool,
    pub seed: u64,
}

impl ResamplePlan {
    pub fn new(engine: Engine, count: usize, seed: u64) -> Self {
        Self { engine, count, with_replacement: true, seed }
    }
}

/// A group element acting on the observation axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Transform {
    /// Observation `k` takes the label/response of observation `perm[k]`.
    Permutation(Vec<usize>),
    /// Observation `k` is multiplied by `signs[k]`.
    SignFlip(Vec<i8>),
}

impl Transform {
    pub fn identity(engine: Engine, n: usize) -> Self {
        match engine {
            Engine::SignFlip => Self::SignFlip(vec![1; n]),
            Engine::LabelPermutation | Engine::ResponsePermutation => Self::Permutation((0..n).collect()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Permutation(p) => p.len(),
            Self::SignFlip(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Self::Permutation(p) => p.iter().enumerate().all(|(k, &v)| k == v),
            Self::SignFlip(s) => s.iter().all(|&e| e == 1),
        }
    }

    fn permute<T: Copy>(perm: &[usize], xs: &[T]) -> Vec<T> {
        perm.iter().map(|&k| xs[k]).collect()
    }
}

fn random_element(engine: Engine, n: usize, rng: &mut impl Rng) -> Transform {
    match engine {
        Engine::SignFlip => Transform::SignFlip((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()),
        Engine::LabelPermutation | Engine::ResponsePermutation => {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            Transform::Permutation(p)
        }
    }
}

/// `|G|` saturated at `u128::MAX`.
fn group_order(engine: Engine, n: usize) -> u128 {
    match engine {
        Engine::SignFlip => 1u128.checked_shl(n as u32).unwrap_or(u128::MAX),
        Engine::LabelPermutation | Engine::ResponsePermutation => {
            (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k)).unwrap_or(u128::MAX)
        }
    }
}

/// Identity followed by `plan.count` random group elements.
///
/// With replacement, draw `j` comes from its own stream keyed by
/// `(seed, j)`. Without replacement, draws skip the identity and earlier
/// draws, using one sequential stream.
pub fn draw_transforms(plan: &ResamplePlan, n: usize) -> Result<Vec<Transform>> {
    if n == 0 {
        return Err(Error::InvalidPlan("cannot resample zero observations".into()));
    }
    if plan.count == 0 {
        return Err(Error::InvalidPlan("at least one random transformation is required".into()));
    }
    let mut out = Vec::with_capacity(plan.count + 1);
    out.push(Transform::identity(plan.engine, n));
    if plan.with_replacement {
        out.extend((1..=plan.count).map(|j| random_element(plan.engine, n, &mut rng::stream(plan.seed, &[j as u64]))));
        return Ok(out);
    }
    let available = group_order(plan.engine, n) - 1;
    if (plan.count as u128) > available {
        return Err(Error::InvalidPlan(format!(
            "{} distinct draws requested but the group has only {available} non-identity elements",
            plan.count
        )));
    }
    let mut rng = rng::stream(plan.seed, &[u64::MAX]);
    let mut seen: HashSet<Transform> = HashSet::new();
    seen.insert(out[0].clone());
    while out.len() <= plan.count {
        let t = random_element(plan.engine, n, &mut rng);
        if seen.insert(t.clone()) {
            out.push(t);
        }
    }
    Ok(out)
}

fn check_statistic(design: &Design, statistic: StatisticPlugin) -> Result<()> {
    let ok = matches!(
        (design, statistic),
        (Design::TwoGroup { .. }, StatisticPlugin::AbsTwoSampleT { .. })
            | (Design::OneSample, StatisticPlugin::AbsMean)
            | (Design::Response { .. }, StatisticPlugin::AbsPearson)
    );
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidStatistic(format!("statistic {} does not fit design {design:?}", statistic.name())))
    }
}

fn row_statistics(columns: &[Vec<f64>], design: &Design, t: &Transform, statistic: StatisticPlugin) -> Result<Vec<f64>> {
    match (design, t, statistic) {
        (Design::TwoGroup { labels }, Transform::Permutation(p), StatisticPlugin::AbsTwoSampleT { equal_variance }) => {
            let labels = Transform::permute(p, labels);
            columns.iter().map(|c| abs_two_sample_t(c, &labels, equal_variance)).collect()
        }
        (Design::Response { y }, Transform::Permutation(p), StatisticPlugin::AbsPearson) => {
            let y = Transform::permute(p, y);
            columns.iter().map(|c| abs_pearson(c, &y)).collect()
        }
        (Design::OneSample, Transform::SignFlip(s), StatisticPlugin::AbsMean) => columns
            .iter()
            .map(|c| {
                let flipped: Vec<f64> = c.iter().zip(s).map(|(&x, &e)| x * f64::from(e)).collect();
                abs_mean(&flipped)
            })
            .collect(),
        _ => Err(Error::InvalidPlan("transformation kind does not fit the dataset design".into())),
    }
}

/// Observed statistics `T_i(X)`.
pub fn observed_statistics(ds: &Dataset, statistic: StatisticPlugin) -> Result<Vec<f64>> {
    check_statistic(&ds.design, statistic)?;
    let engine = Engine::for_design(&ds.design);
    row_statistics(&ds.columns(), &ds.design, &Transform::identity(engine, ds.n), statistic)
}

/// Row `g`, column `i` holds the statistic of column `i` under
/// `transforms[g]`. Rows are evaluated in parallel and assembled in order.
pub fn build_stat_matrix(ds: &Dataset, transforms: &[Transform], statistic: StatisticPlugin) -> Result<StatMatrix> {
    check_statistic(&ds.design, statistic)?;
    let first = transforms.first().ok_or_else(|| Error::InvalidPlan("no transformations".into()))?;
    if !first.is_identity() {
        return Err(Error::InvalidPlan("the first transformation must be the identity".into()));
    }
    if let Some(g) = transforms.iter().position(|t| t.len() != ds.n) {
        return Err(Error::DimensionMismatch(format!(
            "transformation {g} acts on {} observations, dataset has {}",
            transforms[g].len(),
            ds.n
        )));
    }
    let engine = Engine::for_design(&ds.design);
    let kind_ok = transforms.iter().all(|t| match t {
        Transform::SignFlip(_) => engine == Engine::SignFlip,
        Transform::Permutation(_) => engine != Engine::SignFlip,
    });
    if !kind_ok || !engine.compatible(&ds.design) {
        return Err(Error::InvalidPlan("transformation kind does not fit the dataset design".into()));
    }
    let columns = ds.columns();
    let rows: Vec<Vec<f64>> = transforms
        .par_iter()
        .map(|t| row_statistics(&columns, &ds.design, t, statistic))
        .collect::<Result<_>>()?;
    StatMatrix::from_rows(rows)
}
