//! Diversity-based pruning of the candidate set.
//!
//! Three selectors are provided:
//!
//! * **Q**: one negative-sample set for the whole pool, keep every team whose
//!   normalized score is strictly below the mean score.
//! * **FQ**: every model takes a turn as the focal model. Teams of a fixed size
//!   that contain the focal model are scored on the focal model's own negatives,
//!   and a two-cluster split of those scores yields a cutoff per
//!   `(focal, size)` cell. A team survives when its members' cells accept it
//!   (see [`FqMode`]).
//! * **EQ**: intersection of several FQ selections.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diversity::{team_score, MetricId};
use crate::error::{Error, Result};
use crate::pool::CorrectnessMatrix;
use crate::sampling::{
    focal_seed, negatives_focal, sample_subset, NegativeSampleSet, NegativeScheme,
};
use crate::teaming::{CandidateSet, EnsembleTeam};

/// Metrics fused by EQ unless told otherwise.
pub const DEFAULT_EQ_METRICS: [MetricId; 3] = [MetricId::Bd, MetricId::Kw, MetricId::Gd];

/// How per-focal accept/prune verdicts combine into one decision for a team.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FqMode {
    /// Every member's cell must accept the team.
    #[default]
    All,
    /// At least one member's cell accepts it.
    Any,
    /// More than half of the members' cells accept it.
    Majority,
}

impl FromStr for FqMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(FqMode::All),
            "any" => Ok(FqMode::Any),
            "majority" => Ok(FqMode::Majority),
            other => Err(Error::InvalidArgument(format!(
                "unknown FQ mode {other:?} (expected all, any or majority)"
            ))),
        }
    }
}

impl fmt::Display for FqMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FqMode::All => "all",
            FqMode::Any => "any",
            FqMode::Majority => "majority",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SelectionMethod {
    Baseline,
    Q { metric: MetricId },
    Fq { metric: MetricId, mode: FqMode },
    Eq { metrics: Vec<MetricId> },
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionMethod::Baseline => f.write_str("Baseline"),
            SelectionMethod::Q { metric } => write!(f, "Q-Ensemble ({metric})"),
            SelectionMethod::Fq { metric, mode } => match mode {
                FqMode::All => write!(f, "FQ-Ensemble ({metric})"),
                mode => write!(f, "FQ-Ensemble ({metric}, {mode})"),
            },
            SelectionMethod::Eq { metrics } => {
                let names: Vec<&str> = metrics.iter().map(|m| m.as_str()).collect();
                write!(f, "EQ-Ensemble ({})", names.join("+"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleScope {
    Global,
    PerFocalSize { focal: usize, size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    pub metric: MetricId,
    pub scope: RuleScope,
    /// Teams scoring strictly below this normalized value are kept.
    pub cutoff: f64,
    /// A cell with too few teams or a single distinct score keeps everything.
    #[serde(default)]
    pub degenerate: bool,
}

impl SelectionRule {
    pub fn accepts(&self, score: f64) -> bool {
        self.degenerate || score < self.cutoff
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSet {
    pub method: SelectionMethod,
    /// Mean-score threshold, for Q selections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub teams: Vec<EnsembleTeam>,
    /// Normalized diversity per team; `None` where no score applies.
    pub scores: Vec<Option<f64>>,
}

impl SelectedSet {
    pub fn baseline(cands: &CandidateSet) -> Self {
        Self {
            method: SelectionMethod::Baseline,
            threshold: None,
            teams: cands.teams.clone(),
            scores: vec![None; cands.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.teams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teams.is_empty()
    }

    /// Report label, e.g. `Q-Ensemble (GD<0.476)`.
    pub fn label(&self) -> String {
        match (&self.method, self.threshold) {
            (SelectionMethod::Q { metric }, Some(t)) => format!("Q-Ensemble ({metric}<{t:.3})"),
            (method, _) => method.to_string(),
        }
    }
}

/// Normalized score of every candidate on one negative-sample set, in candidate order.
pub fn score_candidates(
    metric: MetricId,
    cands: &CandidateSet,
    corr: &CorrectnessMatrix,
    neg: &NegativeSampleSet,
) -> Result<Vec<f64>> {
    if neg.is_empty() {
        return Err(Error::EmptyNegatives {
            scheme: neg.scheme.to_string(),
        });
    }
    cands
        .teams
        .par_iter()
        .map(|team| team_score(metric, team.members(), corr, &neg.indices))
        .collect()
}

/// Keeps every team whose score is strictly below the mean of all scores.
pub fn mean_threshold(
    metric: MetricId,
    cands: &CandidateSet,
    scores: &[f64],
) -> Result<(SelectedSet, SelectionRule)> {
    if cands.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if scores.len() != cands.len() {
        return Err(Error::DimensionMismatch {
            subject: "candidate scores".into(),
            expected: cands.len(),
            found: scores.len(),
        });
    }
    // Shifted by the minimum so that equal scores give an exact mean.
    let base = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let theta = base + scores.iter().map(|q| q - base).sum::<f64>() / scores.len() as f64;
    let (teams, kept): (Vec<_>, Vec<_>) = cands
        .teams
        .iter()
        .zip(scores)
        .filter(|(_, &q)| q < theta)
        .map(|(t, &q)| (t.clone(), Some(q)))
        .unzip();
    let selected = SelectedSet {
        method: SelectionMethod::Q { metric },
        threshold: Some(theta),
        teams,
        scores: kept,
    };
    let rule = SelectionRule {
        metric,
        scope: RuleScope::Global,
        cutoff: theta,
        degenerate: false,
    };
    Ok((selected, rule))
}

/// Mean-threshold selection over one shared negative-sample set.
pub fn q_select(
    metric: MetricId,
    cands: &CandidateSet,
    corr: &CorrectnessMatrix,
    neg: &NegativeSampleSet,
) -> Result<(SelectedSet, SelectionRule)> {
    if cands.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let scores = score_candidates(metric, cands, corr, neg)?;
    mean_threshold(metric, cands, &scores)
}

/// Outcome of splitting 1-D scores into a low (keep) and a high (prune) cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinarySplit {
    pub cutoff: f64,
    pub low_max: f64,
    pub high_min: f64,
    pub low_count: usize,
    pub iterations: usize,
}

/// Two-means clustering of scalar scores.
///
/// Centroids start at the minimum and maximum; Lloyd steps repeat until the
/// assignment stops changing. The cutoff is the midpoint between the largest
/// low-cluster score and the smallest high-cluster score. Returns `None` when
/// fewer than two distinct values exist.
pub fn two_means_split(scores: &[f64]) -> Option<BinarySplit> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (&lo, &hi) = (sorted.first()?, sorted.last()?);
    if lo >= hi {
        return None;
    }
    // In 1-D with ordered centroids each assignment is a prefix of the sorted
    // scores, so it is tracked as the size of that prefix.
    let (mut c_low, mut c_high) = (lo, hi);
    let mut low_count = usize::MAX;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next = sorted.partition_point(|&v| (v - c_low).abs() <= (c_high - v).abs());
        if next == low_count {
            break;
        }
        low_count = next;
        let (low, high) = sorted.split_at(low_count);
        c_low = low.iter().sum::<f64>() / low.len() as f64;
        c_high = high.iter().sum::<f64>() / high.len() as f64;
        if iterations > sorted.len() {
            break;
        }
    }
    let low_max = sorted[low_count - 1];
    let high_min = sorted[low_count];
    Some(BinarySplit {
        cutoff: (low_max + high_min) / 2.0,
        low_max,
        high_min,
        low_count,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub size: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            size: crate::sampling::DEFAULT_SAMPLE_SIZE,
            seed: 0,
        }
    }
}

/// Per-focal normalized scores of every candidate containing that focal model.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalScores {
    pub metric: MetricId,
    pub pool_size: usize,
    /// `None` for a focal model with no negatives.
    pub negatives: Vec<Option<NegativeSampleSet>>,
    /// `scores[focal][team]`, `None` when the team lacks the focal model.
    scores: Vec<Vec<Option<f64>>>,
}

impl FocalScores {
    pub fn compute(
        metric: MetricId,
        cands: &CandidateSet,
        corr: &CorrectnessMatrix,
        cfg: SampleConfig,
    ) -> Result<Self> {
        let m = cands.pool_size;
        if m != corr.num_models() {
            return Err(Error::DimensionMismatch {
                subject: "candidate pool size".into(),
                expected: corr.num_models(),
                found: m,
            });
        }
        let per_focal: Vec<(Option<NegativeSampleSet>, Vec<Option<f64>>)> = (0..m)
            .into_par_iter()
            .map(|focal| {
                let full = match negatives_focal(corr, focal) {
                    Ok(full) => full,
                    Err(Error::EmptyNegatives { .. }) => {
                        return Ok((None, vec![None; cands.len()]))
                    }
                    Err(e) => return Err(e),
                };
                let neg = sample_subset(
                    NegativeScheme::FocalModel(focal),
                    &full,
                    cfg.size,
                    focal_seed(cfg.seed, focal),
                )?;
                let scores = cands
                    .teams
                    .par_iter()
                    .map(|team| {
                        if team.contains(focal) {
                            team_score(metric, team.members(), corr, &neg.indices).map(Some)
                        } else {
                            Ok(None)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((Some(neg), scores))
            })
            .collect::<Result<_>>()?;
        let (negatives, scores) = per_focal.into_iter().unzip();
        Ok(Self {
            metric,
            pool_size: m,
            negatives,
            scores,
        })
    }

    pub fn score(&self, focal: usize, team_index: usize) -> Option<f64> {
        self.scores[focal][team_index]
    }

    /// Mean over the member focals that produced a score.
    pub fn mean_member_score(&self, team: &EnsembleTeam, team_index: usize) -> Option<f64> {
        let vals: Vec<f64> = team
            .members()
            .iter()
            .filter_map(|&f| self.score(f, team_index))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// One rule per `(focal, size)` cell, for every size in `2..=M`.
pub fn learn_fq_rules(scores: &FocalScores, cands: &CandidateSet) -> Vec<SelectionRule> {
    let m = scores.pool_size;
    let cells: Vec<(usize, usize)> = (0..m)
        .flat_map(|focal| (2..=m).map(move |size| (focal, size)))
        .collect();
    cells
        .par_iter()
        .map(|&(focal, size)| {
            let cell: Vec<f64> = cands
                .teams
                .iter()
                .enumerate()
                .filter(|(_, t)| t.size() == size)
                .filter_map(|(idx, _)| scores.score(focal, idx))
                .collect();
            let scope = RuleScope::PerFocalSize { focal, size };
            let split = if cell.len() >= 2 {
                two_means_split(&cell)
            } else {
                None
            };
            match split {
                Some(split) => SelectionRule {
                    metric: scores.metric,
                    scope,
                    cutoff: split.cutoff,
                    degenerate: false,
                },
                None => SelectionRule {
                    metric: scores.metric,
                    scope,
                    cutoff: cell
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max)
                        .max(0.0),
                    degenerate: true,
                },
            }
        })
        .collect()
}

/// Applies per-focal rules to every candidate.
pub fn fq_select(
    cands: &CandidateSet,
    scores: &FocalScores,
    rules: &[SelectionRule],
    mode: FqMode,
) -> Result<SelectedSet> {
    let mut by_cell: HashMap<(usize, usize), &SelectionRule> = HashMap::new();
    for rule in rules {
        if rule.metric != scores.metric {
            return Err(Error::InvalidArgument(format!(
                "rule for {} applied to {} scores",
                rule.metric, scores.metric
            )));
        }
        if let RuleScope::PerFocalSize { focal, size } = rule.scope {
            by_cell.insert((focal, size), rule);
        }
    }

    let verdicts: Vec<Option<Option<f64>>> = cands
        .teams
        .par_iter()
        .enumerate()
        .map(|(idx, team)| {
            let s = team.size();
            let mut accepted = 0;
            for &focal in team.members() {
                let rule = by_cell
                    .get(&(focal, s))
                    .ok_or(Error::MissingRule { focal, size: s })?;
                let ok = match scores.score(focal, idx) {
                    Some(score) => rule.accepts(score),
                    // focal model never fails: nothing to judge on
                    None => true,
                };
                accepted += ok as usize;
            }
            let keep = match mode {
                FqMode::All => accepted == s,
                FqMode::Any => accepted >= 1,
                FqMode::Majority => 2 * accepted > s,
            };
            Ok(keep.then(|| scores.mean_member_score(team, idx)))
        })
        .collect::<Result<_>>()?;

    let (teams, kept) = cands
        .teams
        .iter()
        .zip(verdicts)
        .filter_map(|(t, v)| v.map(|score| (t.clone(), score)))
        .unzip();
    Ok(SelectedSet {
        method: SelectionMethod::Fq {
            metric: scores.metric,
            mode,
        },
        threshold: None,
        teams,
        scores: kept,
    })
}

/// Teams present in every input, in the order of the first input.
pub fn eq_fuse(sets: &[SelectedSet]) -> Result<SelectedSet> {
    if sets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fusion needs at least 2 selections, got {}",
            sets.len()
        )));
    }
    let lookups: Vec<HashMap<&EnsembleTeam, Option<f64>>> = sets
        .iter()
        .map(|s| s.teams.iter().zip(s.scores.iter().copied()).collect())
        .collect();
    let mut teams = Vec::new();
    let mut scores = Vec::new();
    for team in &sets[0].teams {
        let hits: Option<Vec<Option<f64>>> = lookups.iter().map(|l| l.get(team).copied()).collect();
        if let Some(hits) = hits {
            let vals: Vec<f64> = hits.into_iter().flatten().collect();
            teams.push(team.clone());
            scores.push((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64));
        }
    }
    let metrics = sets
        .iter()
        .map(|s| match &s.method {
            SelectionMethod::Q { metric } | SelectionMethod::Fq { metric, .. } => Ok(*metric),
            other => Err(Error::InvalidArgument(format!(
                "cannot fuse a {other} selection"
            ))),
        })
        .collect::<Result<_>>()?;
    Ok(SelectedSet {
        method: SelectionMethod::Eq { metrics },
        threshold: None,
        teams,
        scores,
    })
}

/// Serialized form of an FQ rule, for storing learned cutoffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub metric: MetricId,
    pub focal: usize,
    pub size: usize,
    pub cutoff: f64,
    #[serde(default)]
    pub degenerate: bool,
}

pub fn rules_to_records(rules: &[SelectionRule]) -> Vec<RuleRecord> {
    rules
        .iter()
        .filter_map(|r| match r.scope {
            RuleScope::PerFocalSize { focal, size } => Some(RuleRecord {
                metric: r.metric,
                focal,
                size,
                cutoff: r.cutoff,
                degenerate: r.degenerate,
            }),
            RuleScope::Global => None,
        })
        .collect()
}

pub fn rules_from_records(records: &[RuleRecord]) -> Result<Vec<SelectionRule>> {
    records
        .iter()
        .map(|r| {
            if !r.cutoff.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "rule ({}, {}) has a non-finite cutoff",
                    r.focal, r.size
                )));
            }
            if r.size < 2 {
                return Err(Error::InvalidArgument(format!(
                    "rule ({}, {}) has team size below 2",
                    r.focal, r.size
                )));
            }
            Ok(SelectionRule {
                metric: r.metric,
                scope: RuleScope::PerFocalSize {
                    focal: r.focal,
                    size: r.size,
                },
                cutoff: r.cutoff,
                degenerate: r.degenerate,
            })
        })
        .collect()
}
