//! Test-statistic plugins. Each maps one (possibly transformed) data column
//! to a single real statistic where larger means more evidence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticPlugin {
    /// `|t|` of the two-sample t-test; pooled variance unless
    /// `equal_variance` is false (Welch).
    AbsTwoSampleT { equal_variance: bool },
    /// `|corr(column, y)|`.
    AbsPearson,
    /// `|mean(column)|`, for sign-flipping designs.
    AbsMean,
    /// Input is already a p-value matrix; statistics are `-p`.
    NegPValuePassthrough,
}

impl Default for StatisticPlugin {
    fn default() -> Self {
        Self::AbsTwoSampleT { equal_variance: true }
    }
}

impl StatisticPlugin {
    pub fn name(&self) -> &'static str {
        match self {
            Self::AbsTwoSampleT { equal_variance: true } => "abs_two_sample_t",
            Self::AbsTwoSampleT { equal_variance: false } => "abs_welch_t",
            Self::AbsPearson => "abs_pearson",
            Self::AbsMean => "abs_mean",
            Self::NegPValuePassthrough => "neg_p_value_passthrough",
        }
    }
}

fn mean_and_ss(xs: impl Iterator<Item = f64> + Clone) -> (usize, f64, f64) {
    let (n, sum) = xs.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    let mean = sum / n as f64;
    let ss = xs.map(|x| (x - mean) * (x - mean)).sum();
    (n, mean, ss)
}

/// Absolute two-sample t statistic. `labels[k]` is true for observations in
/// the first group.
///
/// A zero standard error yields `0` when the group means agree and `+inf`
/// otherwise.
pub fn abs_two_sample_t(column: &[f64], labels: &[bool], equal_variance: bool) -> Result<f64> {
    if column.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "column has {} values but {} labels",
            column.len(),
            labels.len()
        )));
    }
    let first = column.iter().zip(labels).filter(|(_, &l)| l).map(|(&x, _)| x);
    let second = column.iter().zip(labels).filter(|(_, &l)| !l).map(|(&x, _)| x);
    let (na, mean_a, ss_a) = mean_and_ss(first);
    let (nb, mean_b, ss_b) = mean_and_ss(second);
    if na == 0 || nb == 0 {
        return Err(Error::InvalidStatistic("both groups must be nonempty".into()));
    }
    let (na, nb) = (na as f64, nb as f64);
    let se = if equal_variance {
        if na + nb < 3.0 {
            return Err(Error::InvalidStatistic("pooled variance needs at least three observations".into()));
        }
        let pooled = (ss_a + ss_b) / (na + nb - 2.0);
        (pooled * (1.0 / na + 1.0 / nb)).sqrt()
    } else {
        if na < 2.0 || nb < 2.0 {
            return Err(Error::InvalidStatistic("Welch variance needs two observations per group".into()));
        }
        (ss_a / (na - 1.0) / na + ss_b / (nb - 1.0) / nb).sqrt()
    };
    let diff = mean_a - mean_b;
    if se == 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((diff / se).abs())
}

/// Absolute Pearson correlation.
pub fn abs_pearson(column: &[f64], y: &[f64]) -> Result<f64> {
    if column.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "column has {} values, response has {}",
            column.len(),
            y.len()
        )));
    }
    let (_, mx, sxx) = mean_and_ss(column.iter().copied());
    let (_, my, syy) = mean_and_ss(y.iter().copied());
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateCorrelation);
    }
    let sxy: f64 = column.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    Ok((sxy / (sxx * syy).sqrt()).abs().min(1.0))
}

pub fn abs_mean(column: &[f64]) -> Result<f64> {
    if column.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok((column.iter().sum::<f64>() / column.len() as f64).abs())
}

/// Entrywise `-p`. Every entry must lie in `(0, 1]`.
pub fn negate_pvalues(p: &[f64]) -> Result<Vec<f64>> {
    p.iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 && value <= 1.0 {
                Ok(-value)
            } else {
                Err(Error::PValueOutOfRange { index, value })
            }
        })
        .collect()
}
