mod common;

use common::{crate_dir, read_json, shipped, temp_dir, with_absolute_paths};
use textlab::archive::{ArchiveError, ModelArchive, BEST_WEIGHTS_FILE};
use textlab::registry::default_registry;
use textlab::training::{evaluate, prepare, train, LOG_FILE, METRICS_FILE};
use textlab::Error;

const SHORT: &str = r#"{"trainer.num_epochs": 3}"#;

#[test]
fn training_writes_its_records() {
    let dir = temp_dir();
    let outcome = train(&shipped("classifier", SHORT), dir.path()).unwrap();
    assert_eq!(outcome.epochs_run(), 3);
    assert_eq!(outcome.metric, "accuracy");
    assert_eq!(std::fs::read_to_string(dir.path().join("config.json")).unwrap(), outcome.config);
    assert!(outcome.config.contains(r#""num_epochs": 3"#), "{}", outcome.config);

    let metrics = read_json(&dir.path().join(METRICS_FILE));
    let epochs = metrics.as_array().unwrap();
    assert_eq!(epochs.len(), 3);
    for (i, (row, record)) in epochs.iter().zip(&outcome.history).enumerate() {
        assert_eq!(row["epoch"], i + 1);
        assert_eq!(row["training_loss"].as_f64(), Some(record.training_loss));
        assert!(row["validation_accuracy"].as_f64().is_some() && row["validation_loss"].as_f64().is_some());
    }
    for name in [LOG_FILE, BEST_WEIGHTS_FILE, "weights_epoch_1.bin", "weights_epoch_3.bin", "vocabulary", "model.tar.gz"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let best = outcome.history.iter().map(|r| r.validation.as_ref().unwrap()["accuracy"]).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(outcome.best_value(), best);
    assert_eq!(outcome.history[outcome.best_epoch - 1].validation.as_ref().unwrap()["accuracy"], best);
}

#[test]
fn seeds_control_the_run() {
    let (a, b, c) = (temp_dir(), temp_dir(), temp_dir());
    let first = train(&shipped("tagger", SHORT), a.path()).unwrap();
    let again = train(&shipped("tagger", SHORT), b.path()).unwrap();
    let other = train(&shipped("tagger", r#"{"trainer.num_epochs": 3, "trainer.seed": 99}"#), c.path()).unwrap();
    assert_eq!(first.epoch_losses(), again.epoch_losses());
    assert_ne!(first.epoch_losses(), other.epoch_losses());
    assert_eq!(std::fs::read(&first.archive).unwrap(), std::fs::read(&again.archive).unwrap());
}

#[test]
fn training_metrics_select_without_validation() {
    let dir = temp_dir();
    let outcome = train(&shipped("pair_classifier", r#"{"trainer.num_epochs": 2, "validation_data_path": null}"#), dir.path()).unwrap();
    assert!(outcome.history.iter().all(|r| r.validation.is_none()));
    assert_eq!(&outcome.best_metrics, &outcome.history[outcome.best_epoch - 1].training);
    assert!(!read_json(&dir.path().join(METRICS_FILE))[0].as_object().unwrap().contains_key("validation_loss"));
}

#[test]
fn patience_stops_a_flat_run() {
    let dir = temp_dir();
    let overrides = r#"{"trainer": {"num_epochs": 10, "patience": 2, "optimizer": {"type": "sgd", "lr": 1e-12}}}"#;
    let outcome = train(&shipped("classifier", overrides), dir.path()).unwrap();
    assert_eq!(outcome.epochs_run(), 3);
    assert_eq!(outcome.best_epoch, 1);
}

#[test]
fn evaluation_matches_the_best_epoch() {
    let dir = temp_dir();
    let outcome = train(&shipped("span_selector", SHORT), dir.path()).unwrap();
    let metrics = evaluate(&outcome.archive, &crate_dir().join("data/spans_validation.jsonl")).unwrap();
    for (key, value) in &outcome.best_metrics {
        assert!((metrics[key] - value).abs() < 1e-12, "{key}");
    }
    let archive = ModelArchive::read(&outcome.archive).unwrap();
    assert_eq!(archive.config, outcome.config);
    let reread = ModelArchive::from_bytes(&archive.to_bytes().unwrap()).unwrap();
    assert_eq!(reread.weights, archive.weights);
}

fn prepare_error(name: &str, overrides: &str) -> Error {
    prepare(default_registry(), &shipped(name, overrides)).err().unwrap()
}

fn configuration_path(e: Error) -> String {
    match e {
        Error::Configuration(c) => c.path,
        other => panic!("expected a configuration error, got {other}"),
    }
}

#[test]
fn configuration_errors_before_training() {
    let cases = [
        (r#"{"trainer.optimizer.type": "adagrad"}"#, "trainer.optimizer.type"),
        (r#"{"trainer.optimizer.lr": -1}"#, "trainer.optimizer.lr"),
        (r#"{"trainer.optimizer": {"type": "adam", "lr": 0.1, "beta1": 1.5}}"#, "trainer.optimizer.beta1"),
        (r#"{"vocabulary": {"min_count": {"tokens": "two"}}}"#, "vocabulary.min_count.tokens"),
        (r#"{"vocabulary": {"max_size": 3}}"#, "vocabulary.max_size"),
        (r#"{"validation_data_path": 4}"#, "validation_data_path"),
        (r#"{"extra": true}"#, "extra"),
    ];
    for (overrides, path) in cases {
        assert_eq!(configuration_path(prepare_error("classifier", overrides)), path, "{overrides}");
    }
    let pairs =
        r#"{"dataset_reader": {"type": "pair_classification"}, "train_data_path": "data/pairs_train.jsonl", "validation_data_path": null}"#;
    let err = prepare(default_registry(), &with_absolute_paths(&common::shipped_text("classifier"), pairs)).err().unwrap();
    assert!(err.to_string().contains("'pair_classification'"), "{err}");
    assert_eq!(configuration_path(err), "model.type");
    let missing = with_absolute_paths(&common::shipped_text("classifier"), r#"{"train_data_path": "/nonexistent/train.jsonl"}"#);
    assert!(matches!(prepare(default_registry(), &missing).err().unwrap(), Error::Data(_) | Error::Io { .. }));
}

#[test]
fn min_count_shrinks_the_vocabulary() {
    let full = prepare(default_registry(), &shipped("classifier", "{}")).unwrap();
    let pruned = prepare(default_registry(), &shipped("classifier", r#"{"vocabulary": {"min_count": {"tokens": 1000}}}"#)).unwrap();
    assert!(full.vocab.size("tokens") > 2);
    assert_eq!(pruned.vocab.size("tokens"), 2);
    assert!(pruned.store.num_scalars() < full.store.num_scalars());
}

#[test]
fn missing_archive_is_an_error() {
    let err = ModelArchive::read(&crate_dir().join("no_such_model.tar.gz")).err().unwrap();
    assert!(matches!(err, Error::Archive(ArchiveError::Io { .. }) | Error::Io { .. }), "{err}");
}
