//! Combining member predictions into one ensemble prediction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{argmax, PredictionPool, ProbMatrix};
use crate::teaming::EnsembleTeam;

pub const DEFAULT_GAMMA: f64 = -0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConsensusMethod {
    /// Average of member probability rows.
    #[default]
    Soft,
    /// A class needs more than half of the votes, otherwise abstain.
    Majority,
    /// Most votes wins, ties to the lowest class.
    Plurality,
    /// Probability rows weighted by penalty-trained member weights.
    Boosting { gamma: f64 },
}

impl ConsensusMethod {
    pub fn boosting(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(ConsensusMethod::Boosting { gamma })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConsensusMethod::Soft => "soft",
            ConsensusMethod::Majority => "majority",
            ConsensusMethod::Plurality => "plurality",
            ConsensusMethod::Boosting { .. } => "boosting",
        }
    }
}

impl fmt::Display for ConsensusMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsensusMethod::Boosting { gamma } => write!(f, "boosting(gamma={gamma})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for ConsensusMethod {
    type Err = Error;

    /// `boosting` takes the default gamma.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "soft" => Ok(ConsensusMethod::Soft),
            "majority" => Ok(ConsensusMethod::Majority),
            "plurality" => Ok(ConsensusMethod::Plurality),
            "boosting" => Ok(ConsensusMethod::Boosting {
                gamma: DEFAULT_GAMMA,
            }),
            other => Err(Error::InvalidArgument(format!(
                "unknown consensus method {other:?} (expected soft, majority, plurality or boosting)"
            ))),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma < 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "boosting penalty gamma must be negative, got {gamma}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    /// Predicted class per sample; `None` is an abstention.
    pub classes: Vec<Option<usize>>,
    /// Combined probability rows, for the probability-based methods.
    #[serde(skip)]
    pub probs: Option<ProbMatrix>,
}

impl EnsemblePrediction {
    pub fn num_abstentions(&self) -> usize {
        self.classes.iter().filter(|c| c.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberWeights {
    pub weights: Vec<f64>,
}

impl MemberWeights {
    pub fn uniform(size: usize) -> Self {
        Self {
            weights: vec![1.0 / size as f64; size],
        }
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "member weights must be non-negative: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "member weights sum to {sum}, not 1"
            )));
        }
        Ok(Self { weights })
    }
}

fn check_team(team: &EnsembleTeam, pool: &PredictionPool) -> Result<()> {
    match team.members().iter().find(|&&m| m >= pool.num_models()) {
        Some(bad) => Err(Error::InvalidTeam(format!(
            "member {bad} not in pool of {}",
            pool.num_models()
        ))),
        None => Ok(()),
    }
}

fn member_probs<'a>(
    team: &EnsembleTeam,
    pool: &'a PredictionPool,
    method: &'static str,
) -> Result<Vec<&'a ProbMatrix>> {
    check_team(team, pool)?;
    team.members()
        .iter()
        .map(|&m| {
            pool.model(m)
                .probs
                .as_ref()
                .ok_or(Error::MissingProbabilities { model: m, method })
        })
        .collect()
}

/// `sum_i scale_i * P_i`, row by row, with the argmax of each combined row.
fn combine(members: &[&ProbMatrix], scales: &[f64], num_classes: usize) -> EnsemblePrediction {
    let n = members[0].num_rows();
    let mut data = vec![0.0; n * num_classes];
    for (probs, &scale) in members.iter().zip(scales) {
        for (acc, &p) in data.iter_mut().zip(probs.as_flat()) {
            *acc += scale * p;
        }
    }
    let classes = data
        .chunks_exact(num_classes)
        .map(|row| Some(argmax(row)))
        .collect();
    EnsemblePrediction {
        classes,
        probs: Some(ProbMatrix::from_flat(num_classes, data).expect("rows are whole")),
    }
}

pub fn soft_vote(team: &EnsembleTeam, pool: &PredictionPool) -> Result<EnsemblePrediction> {
    let members = member_probs(team, pool, "soft")?;
    let scale = 1.0 / members.len() as f64;
    Ok(combine(
        &members,
        &vec![scale; members.len()],
        pool.num_classes(),
    ))
}

fn vote_counts(team: &EnsembleTeam, pool: &PredictionPool) -> Result<Vec<Vec<usize>>> {
    check_team(team, pool)?;
    let c = pool.num_classes();
    let mut counts = vec![vec![0usize; c]; pool.num_samples()];
    for &m in team.members() {
        for (row, &label) in counts.iter_mut().zip(&pool.model(m).pred_labels) {
            row[label] += 1;
        }
    }
    Ok(counts)
}

/// Class with strictly more than half of `votes` in total, if any.
pub fn majority_of(counts: &[usize]) -> Option<usize> {
    let total: usize = counts.iter().sum();
    counts.iter().position(|&c| 2 * c > total)
}

/// Class with the most votes; ties go to the lowest class index.
pub fn plurality_of(counts: &[usize]) -> usize {
    let mut best = 0;
    for (j, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = j;
        }
    }
    best
}

pub fn majority_vote(team: &EnsembleTeam, pool: &PredictionPool) -> Result<EnsemblePrediction> {
    let classes = vote_counts(team, pool)?
        .iter()
        .map(|row| majority_of(row))
        .collect();
    Ok(EnsemblePrediction {
        classes,
        probs: None,
    })
}

pub fn plurality_vote(team: &EnsembleTeam, pool: &PredictionPool) -> Result<EnsemblePrediction> {
    let classes = vote_counts(team, pool)?
        .iter()
        .map(|row| Some(plurality_of(row)))
        .collect();
    Ok(EnsemblePrediction {
        classes,
        probs: None,
    })
}

/// Learns member weights by penalizing each wrong prediction with `e^gamma`.
///
/// Weights start at `1/S`; samples are visited in the given order and the
/// weights are renormalized after every sample.
pub fn boosting_weights(
    team: &EnsembleTeam,
    pool: &PredictionPool,
    train: &[usize],
    gamma: f64,
) -> Result<MemberWeights> {
    check_gamma(gamma)?;
    check_team(team, pool)?;
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "boosting needs training samples".into(),
        ));
    }
    if let Some(&bad) = train.iter().find(|&&k| k >= pool.num_samples()) {
        return Err(Error::InvalidArgument(format!(
            "training index {bad} outside {} samples",
            pool.num_samples()
        )));
    }
    let penalty = gamma.exp();
    let s = team.size();
    let mut w = vec![1.0 / s as f64; s];
    let labels = pool.labels();
    for &k in train {
        let mut changed = false;
        for (wi, &m) in w.iter_mut().zip(team.members()) {
            if pool.model(m).pred_labels[k] != labels[k] {
                *wi *= penalty;
                changed = true;
            }
        }
        if changed {
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= sum);
        }
    }
    Ok(MemberWeights { weights: w })
}

/// Weighted soft voting: `(1/S) * sum_i w_i * P_i`.
pub fn boosting_vote(
    team: &EnsembleTeam,
    pool: &PredictionPool,
    weights: &MemberWeights,
) -> Result<EnsemblePrediction> {
    let members = member_probs(team, pool, "boosting")?;
    if weights.weights.len() != members.len() {
        return Err(Error::DimensionMismatch {
            subject: "member weights".into(),
            expected: members.len(),
            found: weights.weights.len(),
        });
    }
    let s = members.len() as f64;
    let scales: Vec<f64> = weights.weights.iter().map(|w| w / s).collect();
    Ok(combine(&members, &scales, pool.num_classes()))
}

/// Runs `method`; boosting trains on `train`, or on every sample when `None`.
pub fn ensemble_predict(
    team: &EnsembleTeam,
    pool: &PredictionPool,
    method: ConsensusMethod,
    train: Option<&[usize]>,
) -> Result<EnsemblePrediction> {
    match method {
        ConsensusMethod::Soft => soft_vote(team, pool),
        ConsensusMethod::Majority => majority_vote(team, pool),
        ConsensusMethod::Plurality => plurality_vote(team, pool),
        ConsensusMethod::Boosting { gamma } => {
            let all: Vec<usize>;
            let train = match train {
                Some(t) => t,
                None => {
                    all = (0..pool.num_samples()).collect();
                    &all
                }
            };
            let weights = boosting_weights(team, pool, train, gamma)?;
            boosting_vote(team, pool, &weights)
        }
    }
}

/// Fraction of samples predicted correctly; abstentions count as wrong.
pub fn ensemble_accuracy(pred: &EnsemblePrediction, labels: &[usize]) -> Result<f64> {
    if pred.classes.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            subject: "ensemble prediction".into(),
            expected: labels.len(),
            found: pred.classes.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no samples to score".into()));
    }
    let hits = pred
        .classes
        .iter()
        .zip(labels)
        .filter(|(p, y)| **p == Some(**y))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}
