use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ensel::consensus::{boosting_vote, boosting_weights, ensemble_accuracy, ensemble_predict};
use ensel::diversity::{diversity_score, DiversityScore};
use ensel::evaluation::{evaluate_teams, render_table, write_csv, SetReport, TeamEvaluation};
use ensel::pool::{load_pool, read_label_file, write_pool};
use ensel::sampling::{focal_seed, NegativeSampleSet, NegativeScheme, SchemeKind};
use ensel::selection::{
    eq_fuse, fq_select, rules_from_records, rules_to_records, FocalScores, RuleRecord,
    SampleConfig, SelectedSet,
};
use ensel::synth::{generate_pool, SynthConfig};
use ensel::teaming::{enumerate_teams, CandidateSet, EnsembleTeam};
use ensel::workflow::{self, MethodChoice, PipelineConfig, Selection};
use ensel::{ConsensusMethod, CorrectnessMatrix, Error, MetricId, PredictionPool};
use serde::{Deserialize, Serialize};

use crate::output::{self, fixed, opt_fixed};
use crate::{Failure, Format, Globals, SelectionArgs, VotingArgs};

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn load(g: &Globals) -> Result<PredictionPool, Failure> {
    let path = g
        .pool
        .as_ref()
        .ok_or_else(|| usage("this command needs --pool"))?;
    Ok(load_pool(path)?)
}

fn seed(g: &Globals) -> u64 {
    g.seed.unwrap_or(0)
}

fn parse_team(text: &str, pool_size: usize) -> Result<EnsembleTeam, Failure> {
    EnsembleTeam::parse(text, pool_size).map_err(|e| usage(e.to_string()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())).into())
}

fn voting(method: ConsensusMethod, gamma: Option<f64>) -> Result<ConsensusMethod, Failure> {
    match (method, gamma) {
        (ConsensusMethod::Boosting { .. }, Some(gamma)) => {
            ConsensusMethod::boosting(gamma).map_err(|e| usage(e.to_string()))
        }
        (_, Some(_)) => Err(usage("--gamma only applies to boosting")),
        (method, None) => Ok(method),
    }
}

fn pipeline_config(
    g: &Globals,
    sel: &SelectionArgs,
    consensus: ConsensusMethod,
) -> Result<PipelineConfig, Failure> {
    let q_scheme = match sel.sampling {
        SchemeKind::Any => NegativeScheme::AnyModel,
        SchemeKind::All => NegativeScheme::AllModels,
        SchemeKind::Focal => return Err(usage("--sampling for selection must be any or all")),
    };
    if sel.eq_metrics.len() < 2 {
        return Err(usage("--eq-metrics needs at least two metrics"));
    }
    if sel.sample_size == 0 {
        return Err(usage("--sample-size must be positive"));
    }
    Ok(PipelineConfig {
        method: sel.method,
        metric: sel.metric,
        eq_metrics: sel.eq_metrics.clone(),
        fq_mode: sel.fq_mode,
        q_scheme,
        sample_size: sel.sample_size,
        seed: seed(g),
        consensus,
    })
}

fn pool_max(corr: &CorrectnessMatrix) -> f64 {
    corr.accuracies()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Serialize)]
struct SynthSummary {
    manifest: PathBuf,
    models: usize,
    samples: usize,
    classes: usize,
    seed: u64,
}

pub fn synth(g: &Globals, config: &Path, out_dir: &Path) -> Outcome {
    let mut cfg: SynthConfig = read_json(config)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let pool = generate_pool(&cfg)?;
    let manifest = write_pool(&pool, out_dir)?;
    let summary = SynthSummary {
        manifest,
        models: pool.num_models(),
        samples: pool.num_samples(),
        classes: pool.num_classes(),
        seed: cfg.seed,
    };
    let row = vec![
        summary.manifest.display().to_string(),
        summary.models.to_string(),
        summary.samples.to_string(),
        summary.classes.to_string(),
        summary.seed.to_string(),
    ];
    let header = ["manifest", "models", "samples", "classes", "seed"];
    output::emit(
        g,
        &output::render(g, Format::Table, &summary, &header, &[row])?,
    )
}

#[derive(Serialize)]
struct Enumeration {
    pool_size: usize,
    team_size: Option<usize>,
    count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    teams: Option<Vec<String>>,
}

pub fn enumerate(
    g: &Globals,
    pool_size: Option<usize>,
    team_size: Option<usize>,
    list: bool,
) -> Outcome {
    let m = match (pool_size, &g.pool) {
        (Some(m), _) => m,
        (None, Some(_)) => load(g)?.num_models(),
        (None, None) => return Err(usage("enumerate needs --pool-size or --pool")),
    };
    let cands = enumerate_teams(m, team_size.map(|s| s..=s))?;
    let names: Vec<String> = cands.iter().map(|t| t.canonical(m)).collect();
    let text = match output::format(g, Format::Table) {
        Format::Json => output::json(&Enumeration {
            pool_size: m,
            team_size,
            count: cands.len(),
            teams: list.then_some(names),
        })?,
        Format::Csv if list => {
            let rows: Vec<Vec<String>> = names.into_iter().map(|n| vec![n]).collect();
            output::csv(&["team"], &rows)?
        }
        Format::Csv => output::csv(
            &["pool_size", "team_size", "count"],
            &[vec![
                m.to_string(),
                team_size.map(|s| s.to_string()).unwrap_or_default(),
                cands.len().to_string(),
            ]],
        )?,
        Format::Table => {
            let mut text = format!("{}\n", cands.len());
            if list {
                for n in names {
                    text.push_str(&n);
                    text.push('\n');
                }
            }
            text
        }
    };
    output::emit(g, &text)
}

pub fn diversity(
    g: &Globals,
    metric: MetricId,
    team: Option<&str>,
    sampling: SchemeKind,
    focal: Option<usize>,
    sample_size: usize,
) -> Outcome {
    let pool = load(g)?;
    let m = pool.num_models();
    if sample_size == 0 {
        return Err(usage("--sample-size must be positive"));
    }
    let scheme = match (sampling, focal) {
        (SchemeKind::Focal, Some(f)) if f < m => NegativeScheme::FocalModel(f),
        (SchemeKind::Focal, Some(f)) => {
            return Err(usage(format!("focal model {f} not in pool of {m}")))
        }
        (SchemeKind::Focal, None) => return Err(usage("--sampling focal needs --focal")),
        (_, Some(_)) => return Err(usage("--focal only applies to --sampling focal")),
        (SchemeKind::Any, None) => NegativeScheme::AnyModel,
        (SchemeKind::All, None) => NegativeScheme::AllModels,
    };
    // same per-focal seed derivation as FQ selection
    let draw_seed = match scheme {
        NegativeScheme::FocalModel(f) => focal_seed(seed(g), f),
        _ => seed(g),
    };
    let corr = pool.correctness();
    let neg = NegativeSampleSet::draw(&corr, scheme, sample_size, draw_seed)?;
    let teams: Vec<EnsembleTeam> = match team {
        Some(t) => vec![parse_team(t, m)?],
        None => enumerate_teams(m, None)?
            .teams
            .into_iter()
            .filter(|t| focal.is_none_or(|f| t.contains(f)))
            .collect(),
    };
    let scores = teams
        .iter()
        .map(|t| diversity_score(metric, t, &corr, &neg))
        .collect::<ensel::Result<Vec<DiversityScore>>>()?;
    let rows: Vec<Vec<String>> = scores
        .iter()
        .map(|s| {
            vec![
                s.team.canonical(m),
                s.metric.to_string(),
                fixed(s.raw),
                fixed(s.normalized),
                s.context.scheme.to_string(),
                s.context.sample_count.to_string(),
            ]
        })
        .collect();
    let header = ["team", "metric", "raw", "normalized", "scheme", "samples"];
    output::emit(
        g,
        &output::render(g, Format::Table, &scores, &header, &rows)?,
    )
}

/// What `select` writes and `report --in` reads back.
#[derive(Debug, Serialize, Deserialize)]
struct SelectOutput {
    dataset: String,
    pool_size: usize,
    method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    candidates: usize,
    teams: Vec<String>,
    scores: Vec<Option<f64>>,
}

fn select_with_rules(
    cands: &CandidateSet,
    corr: &CorrectnessMatrix,
    cfg: &PipelineConfig,
    records: &[RuleRecord],
) -> Result<Selection, Failure> {
    let metrics = match cfg.method {
        MethodChoice::Q => return Err(usage("--rules-in applies to fq and eq only")),
        MethodChoice::Fq => vec![cfg.metric],
        MethodChoice::Eq => cfg.eq_metrics.clone(),
    };
    let sample = SampleConfig {
        size: cfg.sample_size,
        seed: cfg.seed,
    };
    let all_rules = rules_from_records(records)?;
    let mut sets = Vec::new();
    let mut used = Vec::new();
    for metric in metrics {
        let rules: Vec<_> = all_rules
            .iter()
            .filter(|r| r.metric == metric)
            .cloned()
            .collect();
        let scores = FocalScores::compute(metric, cands, corr, sample)?;
        sets.push(fq_select(cands, &scores, &rules, cfg.fq_mode)?);
        used.extend(rules);
    }
    let selected = if sets.len() == 1 {
        sets.pop().expect("one set")
    } else {
        eq_fuse(&sets)?
    };
    Ok(Selection {
        selected,
        rules: used,
    })
}

pub fn select(
    g: &Globals,
    args: &SelectionArgs,
    rules_out: Option<&Path>,
    rules_in: Option<&Path>,
) -> Outcome {
    let cfg = pipeline_config(g, args, ConsensusMethod::Soft)?;
    if rules_out.is_some() && cfg.method == MethodChoice::Q {
        return Err(usage("--rules-out applies to fq and eq only"));
    }
    let pool = load(g)?;
    let corr = pool.correctness();
    let m = pool.num_models();
    let cands = enumerate_teams(m, None)?;
    let selection = match rules_in {
        Some(path) => select_with_rules(&cands, &corr, &cfg, &read_json::<Vec<RuleRecord>>(path)?)?,
        None => workflow::select(&cands, &corr, &cfg)?,
    };
    if let Some(path) = rules_out {
        let text = output::json(&rules_to_records(&selection.rules))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    let SelectedSet {
        threshold,
        teams,
        scores,
        ..
    } = &selection.selected;
    let doc = SelectOutput {
        dataset: pool.dataset_name().to_string(),
        pool_size: m,
        method: selection.selected.label(),
        threshold: *threshold,
        candidates: cands.len(),
        teams: teams.iter().map(|t| t.canonical(m)).collect(),
        scores: scores.clone(),
    };
    let rows: Vec<Vec<String>> = doc
        .teams
        .iter()
        .zip(&doc.scores)
        .map(|(t, s)| vec![t.clone(), opt_fixed(*s)])
        .collect();
    output::emit(
        g,
        &output::render(g, Format::Json, &doc, &["team", "score"], &rows)?,
    )
}

#[derive(Serialize)]
struct ConsensusOutput {
    team: String,
    method: String,
    accuracy: f64,
    /// Accuracy on the samples outside `--train-indices`.
    #[serde(skip_serializing_if = "Option::is_none")]
    heldout_accuracy: Option<f64>,
    member_max_accuracy: f64,
    member_max_id: usize,
    pool_max_accuracy: f64,
    improvement: f64,
    beats_members: bool,
    beats_pool: bool,
    abstentions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

pub fn consensus(
    g: &Globals,
    team: &str,
    method: ConsensusMethod,
    gamma: Option<f64>,
    train_indices: Option<&Path>,
) -> Outcome {
    let method = voting(method, gamma)?;
    let pool = load(g)?;
    let team = parse_team(team, pool.num_models())?;
    let corr = pool.correctness();
    let labels = pool.labels();

    let (pred, weights, heldout) = match (method, train_indices) {
        (ConsensusMethod::Boosting { gamma }, train) => {
            let all: Vec<usize> = (0..pool.num_samples()).collect();
            let train = match train {
                Some(path) => read_label_file(path)?,
                None => all.clone(),
            };
            let w = boosting_weights(&team, &pool, &train, gamma)?;
            let pred = boosting_vote(&team, &pool, &w)?;
            let mut in_train = vec![false; pool.num_samples()];
            train.iter().for_each(|&k| in_train[k] = true);
            let rest: Vec<usize> = all.into_iter().filter(|&k| !in_train[k]).collect();
            let heldout = (!rest.is_empty()).then(|| {
                let hits = rest
                    .iter()
                    .filter(|&&k| pred.classes[k] == Some(labels[k]))
                    .count();
                hits as f64 / rest.len() as f64
            });
            (pred, Some(w.weights), heldout)
        }
        (_, Some(_)) => return Err(usage("--train-indices only applies to boosting")),
        (method, None) => (ensemble_predict(&team, &pool, method, None)?, None, None),
    };
    let accuracy = ensemble_accuracy(&pred, labels)?;
    let (member_max_id, m_max) = team.members().iter().map(|&i| (i, corr.accuracy(i))).fold(
        (usize::MAX, f64::NEG_INFINITY),
        |best, cur| if cur.1 > best.1 { cur } else { best },
    );
    let p_max = pool_max(&corr);
    let out = ConsensusOutput {
        team: team.canonical(pool.num_models()),
        method: method.to_string(),
        accuracy,
        heldout_accuracy: heldout,
        member_max_accuracy: m_max,
        member_max_id,
        pool_max_accuracy: p_max,
        improvement: accuracy - m_max,
        beats_members: accuracy >= m_max,
        beats_pool: accuracy >= p_max,
        abstentions: pred.num_abstentions(),
        weights,
    };
    let header = [
        "team",
        "method",
        "accuracy",
        "m_max",
        "p_max",
        "beats_members",
        "beats_pool",
        "abstentions",
    ];
    let row = vec![
        out.team.clone(),
        out.method.clone(),
        fixed(out.accuracy),
        fixed(out.member_max_accuracy),
        fixed(out.pool_max_accuracy),
        out.beats_members.to_string(),
        out.beats_pool.to_string(),
        out.abstentions.to_string(),
    ];
    output::emit(g, &output::render(g, Format::Table, &out, &header, &[row])?)
}

fn emit_reports(g: &Globals, reports: &[SetReport], default: Format) -> Outcome {
    let text = match output::format(g, default) {
        Format::Json => output::json(&reports)?,
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(reports, &mut buf)?;
            String::from_utf8(buf).expect("csv output is utf-8")
        }
        Format::Table => render_table(reports),
    };
    output::emit(g, &text)
}

pub fn report(g: &Globals, input: &Path, args: &VotingArgs) -> Outcome {
    let method = voting(args.consensus, args.gamma)?;
    let doc: SelectOutput = read_json(input)?;
    let pool = load(g)?;
    let m = pool.num_models();
    if doc.pool_size != m {
        return Err(Error::DimensionMismatch {
            subject: format!("pool size recorded in {}", input.display()),
            expected: m,
            found: doc.pool_size,
        }
        .into());
    }
    let corr = pool.correctness();
    let cands = enumerate_teams(m, None)?;
    let evals = evaluate_teams(&cands.teams, &pool, &corr, method)?;
    let index: HashMap<&EnsembleTeam, usize> = cands
        .teams
        .iter()
        .enumerate()
        .map(|(i, t)| (t, i))
        .collect();
    let chosen = doc
        .teams
        .iter()
        .map(|text| {
            let team = EnsembleTeam::parse(text, m)?;
            Ok(evals[index[&team]].clone())
        })
        .collect::<ensel::Result<Vec<TeamEvaluation>>>()?;
    let p_max = pool_max(&corr);
    let reports = [
        SetReport::from_evaluations("Baseline", cands.len(), p_max, &evals),
        SetReport::from_evaluations(doc.method, cands.len(), p_max, &chosen),
    ];
    emit_reports(g, &reports, Format::Table)
}

pub fn recommend(g: &Globals, sel: &SelectionArgs, args: &VotingArgs) -> Outcome {
    let cfg = pipeline_config(g, sel, voting(args.consensus, args.gamma)?)?;
    let pool = load(g)?;
    let rec = workflow::recommend(&pool, &cfg)?;
    let reports = [rec.baseline.clone(), rec.report.clone()];
    let text = match output::format(g, Format::Json) {
        Format::Json => output::json(&rec)?,
        Format::Csv => return emit_reports(g, &reports, Format::Csv),
        Format::Table => {
            let rows: Vec<Vec<String>> = rec
                .selected
                .iter()
                .map(|e| {
                    vec![
                        e.team.clone(),
                        opt_fixed(e.score),
                        fixed(e.ensemble_accuracy),
                        e.beats_members.to_string(),
                        e.beats_pool.to_string(),
                    ]
                })
                .collect();
            let header = ["team", "score", "accuracy", "beats_members", "beats_pool"];
            format!(
                "{}\n{}",
                render_table(&reports),
                output::table(&header, &rows)
            )
        }
    };
    output::emit(g, &text)
}

pub fn query(g: &Globals, team: &str, sel: &SelectionArgs, args: &VotingArgs) -> Outcome {
    let cfg = pipeline_config(g, sel, voting(args.consensus, args.gamma)?)?;
    let pool = load(g)?;
    let team = parse_team(team, pool.num_models())?;
    let rep = workflow::query(&pool, &team, &cfg)?;

    let mut header = vec![
        "team",
        "accuracy",
        "m_max",
        "beats_members",
        "beats_pool",
        "selected",
    ];
    header.extend(MetricId::ALL.iter().map(|m| m.as_str()));
    let rows: Vec<Vec<String>> = rep
        .entries
        .iter()
        .map(|e| {
            let mut row = vec![
                e.team.clone(),
                fixed(e.evaluation.ensemble_accuracy),
                fixed(e.evaluation.member_max_accuracy),
                e.evaluation.beats_members.to_string(),
                e.evaluation.beats_pool.to_string(),
                e.selected.to_string(),
            ];
            row.extend(e.diversity.iter().map(|d| fixed(d.normalized)));
            row
        })
        .collect();
    let text = match output::format(g, Format::Table) {
        Format::Json => output::json(&rep)?,
        Format::Csv => output::csv(&header, &rows)?,
        Format::Table => format!(
            "{}\n{}",
            output::table(&header, &rows),
            render_table(&[rep.all_sub_teams.clone(), rep.selected.clone()])
        ),
    };
    output::emit(g, &text)
}
