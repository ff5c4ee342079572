//! Recorded base-model predictions and the derived correctness matrix.
//!
//! A pool is loaded from a JSON manifest that points at plain-text label files
//! (one class index per line) and optional headerless CSV probability files.
//! Relative paths in the manifest resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of a probability row sum from 1.
pub const PROB_ROW_TOLERANCE: f64 = 1e-6;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Dense row-major `N x C` matrix of class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    num_classes: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    pub fn from_rows(num_classes: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * num_classes);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != num_classes {
                return Err(Error::DimensionMismatch {
                    subject: format!("probability row {k}"),
                    expected: num_classes,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { num_classes, data })
    }

    pub fn from_flat(num_classes: usize, data: Vec<f64>) -> Result<Self> {
        if num_classes == 0 || !data.len().is_multiple_of(num_classes) {
            return Err(Error::DimensionMismatch {
                subject: "flat probability buffer".into(),
                expected: num_classes,
                found: data.len(),
            });
        }
        Ok(Self { num_classes, data })
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.num_classes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.num_classes..(k + 1) * self.num_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.num_classes)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRecord {
    pub id: usize,
    pub name: String,
    pub pred_labels: Vec<usize>,
    pub probs: Option<ProbMatrix>,
}

impl ModelRecord {
    pub fn new(id: usize, name: impl Into<String>, pred_labels: Vec<usize>) -> Self {
        Self {
            id,
            name: name.into(),
            pred_labels,
            probs: None,
        }
    }

    pub fn with_probs(mut self, probs: ProbMatrix) -> Self {
        self.probs = Some(probs);
        self
    }
}

/// Validated predictions of `M >= 2` models on one shared sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPool {
    dataset_name: String,
    num_classes: usize,
    labels: Vec<usize>,
    models: Vec<ModelRecord>,
}

impl PredictionPool {
    pub fn new(
        dataset_name: impl Into<String>,
        num_classes: usize,
        labels: Vec<usize>,
        models: Vec<ModelRecord>,
    ) -> Result<Self> {
        let pool = Self {
            dataset_name: dataset_name.into(),
            num_classes,
            labels,
            models,
        };
        pool.validate()?;
        Ok(pool)
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidPool("num_classes must be positive".into()));
        }
        if self.labels.is_empty() {
            return Err(Error::InvalidPool("pool has no samples".into()));
        }
        if self.models.len() < 2 {
            return Err(Error::InvalidPool(format!(
                "a pool needs at least 2 models, found {}",
                self.models.len()
            )));
        }
        check_labels("ground-truth labels", &self.labels, self.num_classes)?;

        let n = self.labels.len();
        for (i, model) in self.models.iter().enumerate() {
            if model.id != i {
                return Err(Error::InvalidPool(format!(
                    "model ids must be 0..M-1 in order; position {i} has id {}",
                    model.id
                )));
            }
            let subject = format!("model {i} ({}) predictions", model.name);
            if model.pred_labels.len() != n {
                return Err(Error::DimensionMismatch {
                    subject,
                    expected: n,
                    found: model.pred_labels.len(),
                });
            }
            check_labels(&subject, &model.pred_labels, self.num_classes)?;
            if let Some(probs) = &model.probs {
                check_probs(
                    &format!("model {i} ({}) probabilities", model.name),
                    probs,
                    &model.pred_labels,
                    self.num_classes,
                )?;
            }
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> &str {
        &self.dataset_name
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_models(&self) -> usize {
        self.models.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn models(&self) -> &[ModelRecord] {
        &self.models
    }

    pub fn model(&self, id: usize) -> &ModelRecord {
        &self.models[id]
    }

    /// Builds the pool restricted to `ids`, renumbered `0..ids.len()`.
    pub fn subpool(&self, ids: &[usize]) -> Result<Self> {
        let mut models = Vec::with_capacity(ids.len());
        for (new_id, &id) in ids.iter().enumerate() {
            let src = self.models.get(id).ok_or_else(|| {
                Error::InvalidTeam(format!("model {id} not in pool of {}", self.num_models()))
            })?;
            let mut record = src.clone();
            record.id = new_id;
            models.push(record);
        }
        Self::new(
            self.dataset_name.clone(),
            self.num_classes,
            self.labels.clone(),
            models,
        )
    }

    pub fn correctness(&self) -> CorrectnessMatrix {
        CorrectnessMatrix::from_pool(self)
    }
}

fn check_labels(subject: &str, labels: &[usize], num_classes: usize) -> Result<()> {
    match labels.iter().position(|&l| l >= num_classes) {
        Some(row) => Err(Error::LabelOutOfRange {
            subject: subject.to_string(),
            row,
            label: labels[row],
            num_classes,
        }),
        None => Ok(()),
    }
}

fn check_probs(
    subject: &str,
    probs: &ProbMatrix,
    pred_labels: &[usize],
    num_classes: usize,
) -> Result<()> {
    if probs.num_classes() != num_classes {
        return Err(Error::DimensionMismatch {
            subject: format!("{subject} columns"),
            expected: num_classes,
            found: probs.num_classes(),
        });
    }
    if probs.num_rows() != pred_labels.len() {
        return Err(Error::DimensionMismatch {
            subject: format!("{subject} rows"),
            expected: pred_labels.len(),
            found: probs.num_rows(),
        });
    }
    for (k, row) in probs.rows().enumerate() {
        let err = |reason: String| Error::Probability {
            subject: subject.to_string(),
            row: k,
            reason,
        };
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(err(format!("entry {v} outside [0, 1]")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > PROB_ROW_TOLERANCE {
            return Err(err(format!("row sums to {sum}, not 1")));
        }
        let top = argmax(row);
        if top != pred_labels[k] {
            return Err(err(format!(
                "argmax is class {top} but the predicted label is {}",
                pred_labels[k]
            )));
        }
    }
    Ok(())
}

/// Binary `M x N` matrix: `omega[i][k]` is true when model `i` gets sample `k` right.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessMatrix {
    omega: Vec<Vec<bool>>,
    accuracies: Vec<f64>,
}

impl CorrectnessMatrix {
    pub fn from_pool(pool: &PredictionPool) -> Self {
        let rows = pool
            .models()
            .iter()
            .map(|m| {
                m.pred_labels
                    .iter()
                    .zip(pool.labels())
                    .map(|(p, y)| p == y)
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Wraps raw rows. All rows must share one non-zero length.
    pub fn from_rows(omega: Vec<Vec<bool>>) -> Self {
        let accuracies = omega
            .iter()
            .map(|row| {
                let hits = row.iter().filter(|&&c| c).count();
                hits as f64 / row.len() as f64
            })
            .collect();
        Self { omega, accuracies }
    }

    pub fn num_models(&self) -> usize {
        self.omega.len()
    }

    pub fn num_samples(&self) -> usize {
        self.omega.first().map_or(0, Vec::len)
    }

    pub fn row(&self, model: usize) -> &[bool] {
        &self.omega[model]
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.omega
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.accuracies
    }

    pub fn accuracy(&self, model: usize) -> f64 {
        self.accuracies[model]
    }

    /// Rows of `members`, keeping only the columns listed in `samples`.
    pub fn restrict(&self, members: &[usize], samples: &[usize]) -> Vec<Vec<bool>> {
        members
            .iter()
            .map(|&i| samples.iter().map(|&k| self.omega[i][k]).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub dataset: String,
    pub num_classes: usize,
    pub labels: PathBuf,
    pub models: Vec<ManifestModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestModel {
    pub id: usize,
    pub name: String,
    pub pred_labels: PathBuf,
    #[serde(default)]
    pub probs: Option<PathBuf>,
}

pub fn load_pool(manifest_path: impl AsRef<Path>) -> Result<PredictionPool> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Manifest {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let labels_path = resolve(&manifest.labels);
    let labels = read_label_file(&labels_path)?;
    let n = labels.len();

    let mut models = Vec::with_capacity(manifest.models.len());
    for entry in &manifest.models {
        let pred_path = resolve(&entry.pred_labels);
        let pred_labels = read_label_file(&pred_path)?;
        if pred_labels.len() != n {
            return Err(Error::DimensionMismatch {
                subject: format!(
                    "model {} ({}) in {}",
                    entry.id,
                    entry.name,
                    pred_path.display()
                ),
                expected: n,
                found: pred_labels.len(),
            });
        }
        let mut record = ModelRecord::new(entry.id, entry.name.clone(), pred_labels);
        if let Some(p) = &entry.probs {
            let probs_path = resolve(p);
            let probs = read_prob_file(&probs_path, manifest.num_classes)?;
            check_probs(
                &format!(
                    "model {} ({}) in {}",
                    entry.id,
                    entry.name,
                    probs_path.display()
                ),
                &probs,
                &record.pred_labels,
                manifest.num_classes,
            )?;
            record.probs = Some(probs);
        }
        models.push(record);
    }
    PredictionPool::new(manifest.dataset, manifest.num_classes, labels, models)
}

/// Writes `manifest.json` plus one file per vector into `dir`, returning the manifest path.
pub fn write_pool(pool: &PredictionPool, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    write_label_file(&dir.join("labels.txt"), pool.labels())?;
    let mut entries = Vec::with_capacity(pool.num_models());
    for model in pool.models() {
        let pred_name = format!("model_{}_pred.txt", model.id);
        write_label_file(&dir.join(&pred_name), &model.pred_labels)?;
        let probs = match &model.probs {
            Some(probs) => {
                let name = format!("model_{}_probs.csv", model.id);
                write_prob_file(&dir.join(&name), probs)?;
                Some(PathBuf::from(name))
            }
            None => None,
        };
        entries.push(ManifestModel {
            id: model.id,
            name: model.name.clone(),
            pred_labels: PathBuf::from(pred_name),
            probs,
        });
    }
    let manifest = Manifest {
        dataset: pool.dataset_name().to_string(),
        num_classes: pool.num_classes(),
        labels: PathBuf::from("labels.txt"),
        models: entries,
    };
    let path = dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_label_file(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(path, &text)
}

/// One non-negative integer per line. Trailing blank lines are ignored.
pub fn parse_labels(path: &Path, text: &str) -> Result<Vec<usize>> {
    let lines: Vec<&str> = text.lines().collect();
    let end = lines
        .iter()
        .rposition(|l| !l.trim().is_empty())
        .map_or(0, |p| p + 1);
    lines[..end]
        .iter()
        .enumerate()
        .map(|(k, line)| {
            line.trim().parse::<usize>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message: format!("expected a class index, got {:?}: {e}", line.trim()),
            })
        })
        .collect()
}

fn write_label_file(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_prob_file(path: &Path, num_classes: usize) -> Result<ProbMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("{other:?}"),
            },
        })?;
    let mut data = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message: e.to_string(),
        })?;
        if record.len() != num_classes {
            return Err(Error::Probability {
                subject: path.display().to_string(),
                row: k,
                reason: format!("expected {num_classes} columns, found {}", record.len()),
            });
        }
        for field in record.iter() {
            let v = field.parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message: format!("bad probability {field:?}: {e}"),
            })?;
            data.push(v);
        }
    }
    ProbMatrix::from_flat(num_classes, data)
}

fn write_prob_file(path: &Path, probs: &ProbMatrix) -> Result<()> {
    let mut out = String::new();
    for row in probs.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // `{}` on f64 is the shortest representation that round-trips.
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_model_pool() -> PredictionPool {
        PredictionPool::new(
            "toy",
            2,
            vec![1, 1],
            vec![
                ModelRecord::new(0, "a", vec![1, 0]),
                ModelRecord::new(1, "b", vec![1, 1]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn correctness_by_definition() {
        let corr = two_model_pool().correctness();
        assert_eq!(corr.row(0), &[true, false]);
        assert_eq!(corr.accuracy(0), 0.5);
        assert_eq!(corr.row(1), &[true, true]);
        assert_eq!(corr.accuracy(1), 1.0);
    }

    #[test]
    fn fixture_row_accuracy() {
        let row = [1, 1, 1, 1, 0, 0, 1, 0, 1, 1].map(|b| b == 1).to_vec();
        let corr = CorrectnessMatrix::from_rows(vec![row.clone(), row]);
        assert!((corr.accuracy(0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.1, 0.2, 0.7]), 2);
    }

    #[test]
    fn rejects_single_model() {
        let err = PredictionPool::new("x", 2, vec![0], vec![ModelRecord::new(0, "a", vec![0])]);
        assert!(matches!(err, Err(Error::InvalidPool(_))));
    }

    #[test]
    fn rejects_label_out_of_range() {
        let err = PredictionPool::new(
            "x",
            2,
            vec![0, 1],
            vec![
                ModelRecord::new(0, "a", vec![0, 2]),
                ModelRecord::new(1, "b", vec![0, 1]),
            ],
        );
        match err {
            Err(Error::LabelOutOfRange { row, label, .. }) => {
                assert_eq!((row, label), (1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unnormalized_probs() {
        let probs = ProbMatrix::from_rows(2, &[vec![0.7, 0.7]]).unwrap();
        let err = PredictionPool::new(
            "x",
            2,
            vec![0],
            vec![
                ModelRecord::new(0, "a", vec![0]).with_probs(probs),
                ModelRecord::new(1, "b", vec![0]),
            ],
        );
        assert!(matches!(err, Err(Error::Probability { row: 0, .. })));
    }

    #[test]
    fn rejects_argmax_disagreeing_with_label() {
        let probs = ProbMatrix::from_rows(2, &[vec![0.5, 0.5]]).unwrap();
        let err = PredictionPool::new(
            "x",
            2,
            vec![0],
            vec![
                ModelRecord::new(0, "a", vec![1]).with_probs(probs),
                ModelRecord::new(1, "b", vec![0]),
            ],
        );
        assert!(matches!(err, Err(Error::Probability { .. })));
    }

    #[test]
    fn rejects_non_contiguous_ids() {
        let err = PredictionPool::new(
            "x",
            2,
            vec![0],
            vec![
                ModelRecord::new(0, "a", vec![0]),
                ModelRecord::new(2, "b", vec![0]),
            ],
        );
        assert!(matches!(err, Err(Error::InvalidPool(_))));
    }

    #[test]
    fn label_parsing_reports_line() {
        let err = parse_labels(Path::new("f.txt"), "0\n1\nx\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert_eq!(
            parse_labels(Path::new("f"), "0\n1\n\n").unwrap(),
            vec![0, 1]
        );
    }
}
