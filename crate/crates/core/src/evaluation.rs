//! Ensemble quality criteria and set-level reports.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{ensemble_accuracy, ensemble_predict, ConsensusMethod};
use crate::diversity::DiversityScore;
use crate::error::{Error, Result};
use crate::pool::{CorrectnessMatrix, PredictionPool};
use crate::teaming::EnsembleTeam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamEvaluation {
    pub team: EnsembleTeam,
    pub label: String,
    pub ensemble_accuracy: f64,
    /// Best single-member accuracy (m_max).
    pub member_max_accuracy: f64,
    pub member_max_id: usize,
    /// Best accuracy over the whole pool (p_max).
    pub pool_max_accuracy: f64,
    pub improvement: f64,
    pub beats_members: bool,
    pub beats_pool: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diversity: Option<DiversityScore>,
}

fn best_model(accuracies: &[f64], ids: impl Iterator<Item = usize>) -> (usize, f64) {
    let mut best: Option<(usize, f64)> = None;
    for id in ids {
        let acc = accuracies[id];
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((id, acc));
        }
    }
    best.expect("at least one model")
}

pub fn evaluate_team(
    team: &EnsembleTeam,
    pool: &PredictionPool,
    corr: &CorrectnessMatrix,
    method: ConsensusMethod,
) -> Result<TeamEvaluation> {
    if team.size() < 2 {
        return Err(Error::InvalidTeam("teams need at least 2 members".into()));
    }
    let pred = ensemble_predict(team, pool, method, None)?;
    let acc = ensemble_accuracy(&pred, pool.labels())?;
    let (member_max_id, m_max) = best_model(corr.accuracies(), team.members().iter().copied());
    let (_, p_max) = best_model(corr.accuracies(), 0..corr.num_models());
    Ok(TeamEvaluation {
        team: team.clone(),
        label: team.canonical(pool.num_models()),
        ensemble_accuracy: acc,
        member_max_accuracy: m_max,
        member_max_id,
        pool_max_accuracy: p_max,
        improvement: acc - m_max,
        beats_members: acc >= m_max,
        beats_pool: acc >= p_max,
        diversity: None,
    })
}

/// Evaluates teams in parallel; output order follows `teams`.
pub fn evaluate_teams(
    teams: &[EnsembleTeam],
    pool: &PredictionPool,
    corr: &CorrectnessMatrix,
    method: ConsensusMethod,
) -> Result<Vec<TeamEvaluation>> {
    teams
        .par_iter()
        .map(|t| evaluate_team(t, pool, corr, method))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl AccuracyStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Self {
            min,
            max,
            // summation rounding can push a constant set's mean past its bounds
            mean: mean.clamp(min, max),
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestTeam {
    pub team: String,
    pub accuracy: f64,
}

/// Aggregate statistics over a team set. Accuracies are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    pub method: String,
    /// Size of the candidate set the teams were drawn from (#EnsSet).
    pub candidate_count: usize,
    /// Number of teams in this set (#GEnsSet).
    pub count: usize,
    pub accuracy: Option<AccuracyStats>,
    pub beats_members_count: usize,
    pub beats_members_fraction: f64,
    pub beats_pool_count: usize,
    pub beats_pool_fraction: f64,
    pub pool_max_accuracy: f64,
    pub best: Option<BestTeam>,
}

impl SetReport {
    pub fn from_evaluations(
        method: impl Into<String>,
        candidate_count: usize,
        pool_max_accuracy: f64,
        evals: &[TeamEvaluation],
    ) -> Self {
        let count = evals.len();
        let accs: Vec<f64> = evals.iter().map(|e| e.ensemble_accuracy).collect();
        let beats_members_count = evals.iter().filter(|e| e.beats_members).count();
        let beats_pool_count = evals.iter().filter(|e| e.beats_pool).count();
        let fraction = |c: usize| {
            if count == 0 {
                0.0
            } else {
                c as f64 / count as f64
            }
        };
        // highest accuracy, ties to the smallest canonical string
        let best = evals
            .iter()
            .min_by(|a, b| {
                b.ensemble_accuracy
                    .total_cmp(&a.ensemble_accuracy)
                    .then_with(|| a.label.cmp(&b.label))
            })
            .map(|e| BestTeam {
                team: e.label.clone(),
                accuracy: e.ensemble_accuracy,
            });
        Self {
            method: method.into(),
            candidate_count,
            count,
            accuracy: AccuracyStats::from_values(&accs),
            beats_members_count,
            beats_members_fraction: fraction(beats_members_count),
            beats_pool_count,
            beats_pool_fraction: fraction(beats_pool_count),
            pool_max_accuracy,
            best,
        }
    }

    pub fn to_row(&self) -> ReportRow {
        let pct2 = |x: f64| format!("{:.2}", 100.0 * x);
        let (range, avg, std) = match &self.accuracy {
            Some(a) => (
                format!("{}~{}", pct2(a.min), pct2(a.max)),
                pct2(a.mean),
                format!("{:.4}", 100.0 * a.std),
            ),
            None => ("-".into(), "-".into(), "-".into()),
        };
        ReportRow {
            method: self.method.clone(),
            candidates: self.candidate_count.to_string(),
            selected: self.count.to_string(),
            range,
            avg,
            std,
            beats_members: self.beats_members_count.to_string(),
            beats_members_pct: format_percent(self.beats_members_fraction),
            beats_pool: self.beats_pool_count.to_string(),
            beats_pool_pct: format_percent(self.beats_pool_fraction),
            best_team: self.best.as_ref().map_or("-".into(), |b| b.team.clone()),
            best_acc: self.best.as_ref().map_or("-".into(), |b| pct2(b.accuracy)),
        }
    }
}

pub fn evaluate_set(
    method: impl Into<String>,
    candidate_count: usize,
    teams: &[EnsembleTeam],
    pool: &PredictionPool,
    corr: &CorrectnessMatrix,
    consensus: ConsensusMethod,
) -> Result<SetReport> {
    let evals = evaluate_teams(teams, pool, corr, consensus)?;
    let (_, p_max) = best_model(corr.accuracies(), 0..corr.num_models());
    Ok(SetReport::from_evaluations(
        method,
        candidate_count,
        p_max,
        &evals,
    ))
}

/// `0.251012...` renders as `25.10%`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.2}%", 100.0 * fraction)
}

/// Presentation strings for one report line, in table column order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportRow {
    pub method: String,
    pub candidates: String,
    pub selected: String,
    pub range: String,
    pub avg: String,
    pub std: String,
    pub beats_members: String,
    pub beats_members_pct: String,
    pub beats_pool: String,
    pub beats_pool_pct: String,
    pub best_team: String,
    pub best_acc: String,
}

impl ReportRow {
    pub const HEADER: [&'static str; 12] = [
        "Methods",
        "#EnsSet",
        "#GEnsSet",
        "Ensemble Acc Range (%)",
        "Ensemble Acc Avg (%)",
        "STD",
        "# (Acc >= m_max)",
        "% (Acc >= m_max)",
        "# (Acc >= p_max)",
        "% (Acc >= p_max)",
        "Best Team",
        "Best Acc (%)",
    ];

    pub fn fields(&self) -> [&str; 12] {
        [
            &self.method,
            &self.candidates,
            &self.selected,
            &self.range,
            &self.avg,
            &self.std,
            &self.beats_members,
            &self.beats_members_pct,
            &self.beats_pool,
            &self.beats_pool_pct,
            &self.best_team,
            &self.best_acc,
        ]
    }
}

pub fn write_csv<W: Write>(reports: &[SetReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ReportRow::HEADER)?;
    for r in reports {
        w.write_record(r.to_row().fields())?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Fixed-width text table.
pub fn render_table(reports: &[SetReport]) -> String {
    let rows: Vec<ReportRow> = reports.iter().map(SetReport::to_row).collect();
    let mut widths: Vec<usize> = ReportRow::HEADER.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, f) in widths.iter_mut().zip(row.fields()) {
            *w = (*w).max(f.len());
        }
    }
    let line = |fields: [&str; 12]| {
        let cells: Vec<String> = fields
            .iter()
            .zip(&widths)
            .map(|(f, w)| format!("{f:<w$}"))
            .collect();
        cells.join(" | ").trim_end().to_string()
    };
    let mut out = line(ReportRow::HEADER);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 3 * (widths.len() - 1)));
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row.fields()));
        out.push('\n');
    }
    out
}
