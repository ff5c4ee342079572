//! The six correctness-based diversity metrics.
//!
//! Every metric works on binary correctness rows (one per team member) that
//! have already been restricted to a negative-sample set. Raw values follow
//! each metric's own orientation; [`normalize`] flips BD, KW and GD so that a
//! lower normalized score always means a more diverse team.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::CorrectnessMatrix;
use crate::sampling::{NegativeSampleSet, NegativeScheme};
use crate::teaming::EnsembleTeam;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricId {
    /// Cohen's kappa, averaged over pairs.
    Ck,
    /// Yule's Q statistic, averaged over pairs.
    Qs,
    /// Binary disagreement, averaged over pairs.
    Bd,
    /// Fleiss' kappa.
    Fk,
    /// Kohavi-Wolpert variance.
    Kw,
    /// Generalized diversity.
    Gd,
}

impl MetricId {
    pub const ALL: [MetricId; 6] = [
        MetricId::Ck,
        MetricId::Qs,
        MetricId::Bd,
        MetricId::Fk,
        MetricId::Kw,
        MetricId::Gd,
    ];

    pub fn is_pairwise(self) -> bool {
        matches!(self, MetricId::Ck | MetricId::Qs | MetricId::Bd)
    }

    /// Whether a larger raw value means more diversity.
    pub fn higher_is_diverse(self) -> bool {
        matches!(self, MetricId::Bd | MetricId::Kw | MetricId::Gd)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Ck => "CK",
            MetricId::Qs => "QS",
            MetricId::Bd => "BD",
            MetricId::Fk => "FK",
            MetricId::Kw => "KW",
            MetricId::Gd => "GD",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ck" => Ok(MetricId::Ck),
            "qs" => Ok(MetricId::Qs),
            "bd" => Ok(MetricId::Bd),
            "fk" => Ok(MetricId::Fk),
            "kw" => Ok(MetricId::Kw),
            "gd" => Ok(MetricId::Gd),
            other => Err(Error::InvalidArgument(format!(
                "unknown metric {other:?} (expected ck, qs, bd, fk, kw or gd)"
            ))),
        }
    }
}

/// 2x2 contingency counts for a pair of correctness rows: `nab` counts samples
/// where the first row is `a` and the second is `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairCounts {
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }
}

pub fn pair_counts(wi: &[bool], wj: &[bool]) -> Result<PairCounts> {
    if wi.len() != wj.len() {
        return Err(Error::DimensionMismatch {
            subject: "correctness pair".into(),
            expected: wi.len(),
            found: wj.len(),
        });
    }
    if wi.is_empty() {
        return Err(Error::InvalidArgument("correctness rows are empty".into()));
    }
    let mut pc = PairCounts::default();
    for (&a, &b) in wi.iter().zip(wj) {
        match (a, b) {
            (true, true) => pc.n11 += 1,
            (true, false) => pc.n10 += 1,
            (false, true) => pc.n01 += 1,
            (false, false) => pc.n00 += 1,
        }
    }
    Ok(pc)
}

/// Zero when the chance-agreement denominator vanishes.
pub fn cohens_kappa(pc: &PairCounts) -> f64 {
    let (n11, n10, n01, n00) = (pc.n11 as f64, pc.n10 as f64, pc.n01 as f64, pc.n00 as f64);
    let denom = (n11 + n10) * (n01 + n00) + (n11 + n01) * (n10 + n00);
    if denom == 0.0 {
        return 0.0;
    }
    2.0 * (n11 * n00 - n01 * n10) / denom
}

/// Zero when `n11*n00 + n01*n10` vanishes.
pub fn q_statistics(pc: &PairCounts) -> f64 {
    let same = pc.n11 as f64 * pc.n00 as f64;
    let cross = pc.n01 as f64 * pc.n10 as f64;
    let denom = same + cross;
    if denom == 0.0 {
        return 0.0;
    }
    (same - cross) / denom
}

pub fn binary_disagreement(pc: &PairCounts) -> f64 {
    let total = pc.total();
    if total == 0 {
        return 0.0;
    }
    (pc.n01 + pc.n10) as f64 / total as f64
}

fn check_team_rows<R: AsRef<[bool]>>(rows: &[R]) -> Result<usize> {
    if rows.len() < 2 {
        return Err(Error::InvalidTeam(format!(
            "diversity needs at least 2 members, got {}",
            rows.len()
        )));
    }
    let n = rows[0].as_ref().len();
    if n == 0 {
        return Err(Error::InvalidArgument("correctness rows are empty".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.as_ref().len() != n) {
        return Err(Error::DimensionMismatch {
            subject: "team correctness rows".into(),
            expected: n,
            found: bad.as_ref().len(),
        });
    }
    Ok(n)
}

/// Mean of a pairwise metric over all unordered member pairs.
pub fn pairwise_average<R: AsRef<[bool]>>(metric: MetricId, rows: &[R]) -> Result<f64> {
    let pair_fn: fn(&PairCounts) -> f64 = match metric {
        MetricId::Ck => cohens_kappa,
        MetricId::Qs => q_statistics,
        MetricId::Bd => binary_disagreement,
        other => {
            return Err(Error::InvalidArgument(format!(
                "{other} is not a pairwise metric"
            )))
        }
    };
    check_team_rows(rows)?;
    let s = rows.len();
    let mut sum = 0.0;
    for i in 0..s - 1 {
        for j in i + 1..s {
            sum += pair_fn(&pair_counts(rows[i].as_ref(), rows[j].as_ref())?);
        }
    }
    Ok(sum * 2.0 / (s * (s - 1)) as f64)
}

/// Number of members correct on each sample.
fn correct_counts<R: AsRef<[bool]>>(rows: &[R], n: usize) -> Vec<usize> {
    let mut l = vec![0usize; n];
    for row in rows {
        for (lk, &ok) in l.iter_mut().zip(row.as_ref()) {
            *lk += ok as usize;
        }
    }
    l
}

/// One when the mean accuracy is exactly 0 or 1.
pub fn fleiss_kappa<R: AsRef<[bool]>>(rows: &[R]) -> Result<f64> {
    let n = check_team_rows(rows)?;
    let s = rows.len();
    let l = correct_counts(rows, n);
    let p_bar = l.iter().sum::<usize>() as f64 / (n * s) as f64;
    let spread = p_bar * (1.0 - p_bar);
    if spread == 0.0 {
        return Ok(1.0);
    }
    let disagreement: usize = l.iter().map(|&lk| lk * (s - lk)).sum();
    let numer = disagreement as f64 / s as f64;
    Ok(1.0 - numer / (n as f64 * (s - 1) as f64 * spread))
}

pub fn kw_variance<R: AsRef<[bool]>>(rows: &[R]) -> Result<f64> {
    let n = check_team_rows(rows)?;
    let s = rows.len();
    let l = correct_counts(rows, n);
    let disagreement: usize = l.iter().map(|&lk| lk * (s - lk)).sum();
    Ok(disagreement as f64 / (n * s * s) as f64)
}

/// One when the team never fails on any sample.
pub fn generalized_diversity<R: AsRef<[bool]>>(rows: &[R]) -> Result<f64> {
    let n = check_team_rows(rows)?;
    let s = rows.len();
    let l = correct_counts(rows, n);
    // failures[i] = number of samples on which exactly i members fail
    let mut failures = vec![0usize; s + 1];
    for lk in l {
        failures[s - lk] += 1;
    }
    let (sf, nf) = (s as f64, n as f64);
    let mut p1 = 0.0;
    let mut p2 = 0.0;
    for (i, &count) in failures.iter().enumerate().skip(1) {
        let p_i = count as f64 / nf;
        let i = i as f64;
        p1 += i / sf * p_i;
        p2 += i * (i - 1.0) / (sf * (sf - 1.0)) * p_i;
    }
    if p1 == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - p2 / p1)
}

/// Raw metric value on team rows.
pub fn raw_metric<R: AsRef<[bool]>>(metric: MetricId, rows: &[R]) -> Result<f64> {
    match metric {
        MetricId::Ck | MetricId::Qs | MetricId::Bd => pairwise_average(metric, rows),
        MetricId::Fk => fleiss_kappa(rows),
        MetricId::Kw => kw_variance(rows),
        MetricId::Gd => generalized_diversity(rows),
    }
}

pub fn normalize(metric: MetricId, raw: f64) -> f64 {
    if metric.higher_is_diverse() {
        1.0 - raw
    } else {
        raw
    }
}

/// Normalized score of `members` over the `samples` columns of `corr`.
pub fn team_score(
    metric: MetricId,
    members: &[usize],
    corr: &CorrectnessMatrix,
    samples: &[usize],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyNegatives {
            scheme: "given".into(),
        });
    }
    let rows = corr.restrict(members, samples);
    Ok(normalize(metric, raw_metric(metric, &rows)?))
}

/// Where a score's negative samples came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeContext {
    pub scheme: NegativeScheme,
    pub sample_count: usize,
    pub seed: u64,
}

impl From<&NegativeSampleSet> for NegativeContext {
    fn from(neg: &NegativeSampleSet) -> Self {
        Self {
            scheme: neg.scheme,
            sample_count: neg.indices.len(),
            seed: neg.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityScore {
    pub metric: MetricId,
    pub raw: f64,
    pub normalized: f64,
    pub team: EnsembleTeam,
    pub context: NegativeContext,
}

pub fn diversity_score(
    metric: MetricId,
    team: &EnsembleTeam,
    corr: &CorrectnessMatrix,
    neg: &NegativeSampleSet,
) -> Result<DiversityScore> {
    if neg.is_empty() {
        return Err(Error::EmptyNegatives {
            scheme: neg.scheme.to_string(),
        });
    }
    if let Some(&bad) = team.members().iter().find(|&&m| m >= corr.num_models()) {
        return Err(Error::InvalidTeam(format!(
            "member {bad} not in pool of {}",
            corr.num_models()
        )));
    }
    let rows = corr.restrict(team.members(), &neg.indices);
    let raw = raw_metric(metric, &rows)?;
    Ok(DiversityScore {
        metric,
        raw,
        normalized: normalize(metric, raw),
        team: team.clone(),
        context: neg.into(),
    })
}
