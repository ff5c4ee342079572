//! End-to-end pipelines: select and report over a whole pool, or answer a
//! query about one team and its sub-teams.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusMethod;
use crate::diversity::{team_score, MetricId};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_teams, SetReport, TeamEvaluation};
use crate::pool::{CorrectnessMatrix, PredictionPool};
use crate::sampling::{NegativeSampleSet, NegativeScheme, DEFAULT_SAMPLE_SIZE};
use crate::selection::{
    eq_fuse, fq_select, learn_fq_rules, q_select, rules_to_records, FocalScores, FqMode,
    RuleRecord, SampleConfig, SelectedSet, SelectionRule, DEFAULT_EQ_METRICS,
};
use crate::teaming::{enumerate_teams, CandidateSet, EnsembleTeam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Q,
    Fq,
    Eq,
}

impl FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "q" => Ok(MethodChoice::Q),
            "fq" => Ok(MethodChoice::Fq),
            "eq" => Ok(MethodChoice::Eq),
            other => Err(Error::InvalidArgument(format!(
                "unknown selection method {other:?} (expected q, fq or eq)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub method: MethodChoice,
    /// Metric for Q and FQ.
    pub metric: MetricId,
    pub eq_metrics: Vec<MetricId>,
    pub fq_mode: FqMode,
    /// Negative set used by Q selection.
    pub q_scheme: NegativeScheme,
    pub sample_size: usize,
    pub seed: u64,
    pub consensus: ConsensusMethod,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            method: MethodChoice::Eq,
            metric: MetricId::Gd,
            eq_metrics: DEFAULT_EQ_METRICS.to_vec(),
            fq_mode: FqMode::All,
            q_scheme: NegativeScheme::AnyModel,
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed: 0,
            consensus: ConsensusMethod::Soft,
        }
    }
}

impl PipelineConfig {
    fn sample(&self) -> SampleConfig {
        SampleConfig {
            size: self.sample_size,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub selected: SelectedSet,
    pub rules: Vec<SelectionRule>,
}

/// FQ selection with freshly learned rules.
pub fn fq_pipeline(
    metric: MetricId,
    cands: &CandidateSet,
    corr: &CorrectnessMatrix,
    sample: SampleConfig,
    mode: FqMode,
) -> Result<Selection> {
    let scores = FocalScores::compute(metric, cands, corr, sample)?;
    let rules = learn_fq_rules(&scores, cands);
    let selected = fq_select(cands, &scores, &rules, mode)?;
    Ok(Selection { selected, rules })
}

pub fn select(
    cands: &CandidateSet,
    corr: &CorrectnessMatrix,
    cfg: &PipelineConfig,
) -> Result<Selection> {
    match cfg.method {
        MethodChoice::Q => {
            let neg = NegativeSampleSet::draw(corr, cfg.q_scheme, cfg.sample_size, cfg.seed)?;
            let (selected, rule) = q_select(cfg.metric, cands, corr, &neg)?;
            Ok(Selection {
                selected,
                rules: vec![rule],
            })
        }
        MethodChoice::Fq => fq_pipeline(cfg.metric, cands, corr, cfg.sample(), cfg.fq_mode),
        MethodChoice::Eq => {
            let parts = cfg
                .eq_metrics
                .iter()
                .map(|&m| fq_pipeline(m, cands, corr, cfg.sample(), cfg.fq_mode))
                .collect::<Result<Vec<_>>>()?;
            let sets: Vec<SelectedSet> = parts.iter().map(|p| p.selected.clone()).collect();
            let selected = eq_fuse(&sets)?;
            let rules = parts.into_iter().flat_map(|p| p.rules).collect();
            Ok(Selection { selected, rules })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedEntry {
    pub team: String,
    pub score: Option<f64>,
    pub ensemble_accuracy: f64,
    pub beats_members: bool,
    pub beats_pool: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub dataset: String,
    pub pool_size: usize,
    pub num_samples: usize,
    pub config: PipelineConfig,
    pub method: String,
    /// Mean threshold for Q selections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub rules: Vec<RuleRecord>,
    pub selected: Vec<SelectedEntry>,
    pub baseline: SetReport,
    pub report: SetReport,
}

fn p_max(corr: &CorrectnessMatrix) -> f64 {
    corr.accuracies()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Runs the full pipeline: enumerate, score, select, evaluate, report.
pub fn recommend(pool: &PredictionPool, cfg: &PipelineConfig) -> Result<Recommendation> {
    let corr = pool.correctness();
    let cands = enumerate_teams(pool.num_models(), None)?;
    let selection = select(&cands, &corr, cfg)?;

    // Every candidate is evaluated once; selected teams reuse those results.
    let evals = evaluate_teams(&cands.teams, pool, &corr, cfg.consensus)?;
    let baseline = SetReport::from_evaluations("Baseline", cands.len(), p_max(&corr), &evals);
    let index: std::collections::HashMap<&EnsembleTeam, usize> = cands
        .teams
        .iter()
        .enumerate()
        .map(|(i, t)| (t, i))
        .collect();
    let chosen: Vec<TeamEvaluation> = selection
        .selected
        .teams
        .iter()
        .map(|t| evals[index[t]].clone())
        .collect();
    let report = SetReport::from_evaluations(
        selection.selected.label(),
        cands.len(),
        p_max(&corr),
        &chosen,
    );
    let selected = chosen
        .iter()
        .zip(&selection.selected.scores)
        .map(|(e, &score)| SelectedEntry {
            team: e.label.clone(),
            score,
            ensemble_accuracy: e.ensemble_accuracy,
            beats_members: e.beats_members,
            beats_pool: e.beats_pool,
        })
        .collect();

    Ok(Recommendation {
        dataset: pool.dataset_name().to_string(),
        pool_size: pool.num_models(),
        num_samples: pool.num_samples(),
        config: cfg.clone(),
        method: selection.selected.label(),
        threshold: selection.selected.threshold,
        rules: rules_to_records(&selection.rules),
        selected,
        baseline,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: MetricId,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEntry {
    /// Canonical form in the original pool's model ids.
    pub team: String,
    pub evaluation: TeamEvaluation,
    pub diversity: Vec<MetricValue>,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub query: String,
    pub method: String,
    pub entries: Vec<QueryEntry>,
    pub all_sub_teams: SetReport,
    pub selected: SetReport,
}

/// Treats the queried team's models as their own pool: scores every sub-team
/// of size two or more under all six metrics, runs the configured selection
/// over those sub-teams, and reports quality flags against the full pool.
pub fn query(
    pool: &PredictionPool,
    team: &EnsembleTeam,
    cfg: &PipelineConfig,
) -> Result<QueryReport> {
    let sub = pool.subpool(team.members())?;
    let sub_corr = sub.correctness();
    let cands = enumerate_teams(sub.num_models(), None)?;
    let selection = select(&cands, &sub_corr, cfg)?;
    let neg = NegativeSampleSet::draw(
        &sub_corr,
        NegativeScheme::AnyModel,
        cfg.sample_size,
        cfg.seed,
    )?;

    let original = |t: &EnsembleTeam| -> EnsembleTeam {
        EnsembleTeam::new(t.members().iter().map(|&i| team.members()[i]).collect())
            .expect("sub-team of a valid team")
    };
    let full_corr = pool.correctness();
    let mapped: Vec<EnsembleTeam> = cands.iter().map(original).collect();
    let evals = evaluate_teams(&mapped, pool, &full_corr, cfg.consensus)?;

    let mut entries = Vec::with_capacity(cands.len());
    for ((local, evaluation), global) in cands.iter().zip(evals).zip(&mapped) {
        let diversity = MetricId::ALL
            .iter()
            .map(|&metric| {
                team_score(metric, local.members(), &sub_corr, &neg.indices)
                    .map(|normalized| MetricValue { metric, normalized })
            })
            .collect::<Result<_>>()?;
        entries.push(QueryEntry {
            team: global.canonical(pool.num_models()),
            evaluation,
            diversity,
            selected: selection.selected.teams.contains(local),
        });
    }

    let pool_best = p_max(&full_corr);
    let all_evals: Vec<TeamEvaluation> = entries.iter().map(|e| e.evaluation.clone()).collect();
    let chosen: Vec<TeamEvaluation> = entries
        .iter()
        .filter(|e| e.selected)
        .map(|e| e.evaluation.clone())
        .collect();
    Ok(QueryReport {
        query: team.canonical(pool.num_models()),
        method: selection.selected.label(),
        all_sub_teams: SetReport::from_evaluations(
            "All sub-teams",
            cands.len(),
            pool_best,
            &all_evals,
        ),
        selected: SetReport::from_evaluations(
            selection.selected.label(),
            cands.len(),
            pool_best,
            &chosen,
        ),
        entries,
    })
}
