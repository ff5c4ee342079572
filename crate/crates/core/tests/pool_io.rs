use std::fs;

use ensel::pool::{load_pool, write_pool};
use ensel::synth::{generate_pool, SynthConfig};
use ensel::{Error, ModelRecord, PredictionPool};
use proptest::prelude::*;

fn write(dir: &std::path::Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn two_model_dir(model1_pred: &str, model1_probs: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "labels.txt", "0\n1\n1\n0\n");
    write(dir.path(), "m0.txt", "0\n1\n0\n0\n");
    write(dir.path(), "m0.csv", "0.9,0.1\n0.2,0.8\n0.6,0.4\n0.7,0.3\n");
    write(dir.path(), "m1.txt", model1_pred);
    write(dir.path(), "m1.csv", model1_probs);
    write(
        dir.path(),
        "manifest.json",
        r#"{"dataset": "tiny", "num_classes": 2, "labels": "labels.txt",
            "models": [
              {"id": 0, "name": "a", "pred_labels": "m0.txt", "probs": "m0.csv"},
              {"id": 1, "name": "b", "pred_labels": "m1.txt", "probs": "m1.csv"}
            ]}"#,
    );
    dir
}

#[test]
fn loads_minimal_manifest() {
    let dir = two_model_dir("1\n1\n1\n1\n", "0.3,0.7\n0.1,0.9\n0.4,0.6\n0.5,0.5\n");
    // the last row ties, and the tie goes to class 0, which disagrees with label 1
    let err = load_pool(dir.path().join("manifest.json")).unwrap_err();
    assert!(matches!(err, Error::Probability { .. }), "{err}");

    write(
        dir.path(),
        "m1.csv",
        "0.3,0.7\n0.1,0.9\n0.4,0.6\n0.45,0.55\n",
    );
    let pool = load_pool(dir.path().join("manifest.json")).unwrap();
    assert_eq!(pool.num_models(), 2);
    assert_eq!(pool.num_samples(), 4);
    assert_eq!(pool.correctness().accuracies(), &[0.75, 0.5]);
}

#[test]
fn short_model_file_names_the_model() {
    let dir = two_model_dir("1\n1\n1\n1\n0\n", "0.3,0.7\n0.1,0.9\n0.4,0.6\n0.4,0.6\n");
    let err = load_pool(dir.path().join("manifest.json")).unwrap_err();
    match &err {
        Error::DimensionMismatch {
            subject,
            expected,
            found,
        } => {
            assert!(subject.contains("model 1"), "{subject}");
            assert_eq!((*expected, *found), (4, 5));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn rejects_rows_that_do_not_sum_to_one() {
    let dir = two_model_dir("1\n1\n1\n1\n", "0.3,0.7\n0.3,0.7\n0.7,0.7\n0.4,0.6\n");
    let err = load_pool(dir.path().join("manifest.json")).unwrap_err();
    assert!(matches!(err, Error::Probability { row: 2, .. }), "{err}");
    assert!(err.to_string().contains("m1.csv"), "{err}");
}

#[test]
fn bad_label_line_reports_location() {
    let dir = two_model_dir("1\nx\n1\n1\n", "0.3,0.7\n0.1,0.9\n0.4,0.6\n0.4,0.6\n");
    let err = load_pool(dir.path().join("manifest.json")).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
}

#[test]
fn synthetic_pool_round_trips_through_files() {
    let cfg = SynthConfig {
        num_models: 4,
        accuracies: vec![0.9, 0.8, 0.7, 0.6],
        ..SynthConfig::cifar10_like(300, 5)
    };
    let pool = generate_pool(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_pool(&pool, dir.path()).unwrap();
    let back = load_pool(&manifest).unwrap();
    assert_eq!(back, pool);
}

#[test]
fn labels_only_pool_round_trips() {
    let labels = vec![0, 1, 2, 1];
    let models = vec![
        ModelRecord::new(0, "x", vec![0, 1, 2, 2]),
        ModelRecord::new(1, "y", vec![1, 1, 2, 1]),
    ];
    let pool = PredictionPool::new("labels-only", 3, labels, models).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let back = load_pool(write_pool(&pool, dir.path()).unwrap()).unwrap();
    assert_eq!(back, pool);
    assert!(back.models().iter().all(|m| m.probs.is_none()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn permuting_models_permutes_correctness_rows(
        seed in any::<u64>(),
        perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let cfg = SynthConfig {
            num_models: 5,
            accuracies: vec![0.9, 0.8, 0.85, 0.6, 0.7],
            ..SynthConfig::cifar10_like(120, seed)
        };
        let pool = generate_pool(&cfg).unwrap();
        let shuffled: Vec<ModelRecord> = perm
            .iter()
            .enumerate()
            .map(|(new_id, &old)| ModelRecord { id: new_id, ..pool.model(old).clone() })
            .collect();
        let other = PredictionPool::new("p", 10, pool.labels().to_vec(), shuffled).unwrap();
        let (a, b) = (pool.correctness(), other.correctness());
        for (new_id, &old) in perm.iter().enumerate() {
            prop_assert_eq!(b.row(new_id), a.row(old));
        }
        prop_assert_eq!(pool.correctness(), a);
    }
}
