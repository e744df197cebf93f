#![allow(dead_code)]

use std::path::{Path, PathBuf};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use textlab::config::{merge_overrides, parse_config, ConfigValue};
use textlab::data::readers::build_reader;
use textlab::data::{index_instance, pad_batch, Batch, DatasetReader, IndexedInstance, Instance, Vocabulary};
use textlab::models::{build_model, Model};
use textlab::registry::{default_registry, Abstraction, BuildContext, Params};
use textlab::tensor::ParamStore;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn config_path(name: &str) -> PathBuf {
    crate_dir().join("configs").join(format!("{name}.json"))
}

pub const SHIPPED_CONFIGS: &[&str] = &["classifier", "classifier_char_cnn", "tagger", "span_selector", "pair_classifier"];

pub fn shipped_text(name: &str) -> String {
    std::fs::read_to_string(config_path(name)).unwrap()
}

/// A shipped config with data paths made absolute and `overrides` merged on top.
pub fn shipped(name: &str, overrides: &str) -> ConfigValue {
    with_absolute_paths(&shipped_text(name), overrides)
}

/// Parses config text, resolving its data paths against the crate directory.
pub fn with_absolute_paths(text: &str, overrides: &str) -> ConfigValue {
    let mut config = parse_config(text).unwrap();
    let mut paths = Vec::new();
    for key in ["train_data_path", "validation_data_path"] {
        if let Some(p) = config.get(key).and_then(ConfigValue::as_str) {
            paths.push((key, ConfigValue::string(crate_dir().join(p).display().to_string())));
        }
    }
    config = merge_overrides(&config, &ConfigValue::object(paths)).unwrap();
    merge_overrides(&config, &parse_config(overrides).unwrap()).unwrap()
}

pub fn json(text: &str) -> ConfigValue {
    parse_config(text).unwrap()
}

/// Builds one component from a JSON object, with parameters registered in
/// `store`.
pub fn build<T: Abstraction + ?Sized + 'static>(
    config: &str,
    path: &str,
    vocab: &Vocabulary,
    store: &mut ParamStore,
    seed: u64,
) -> Result<Box<T>, textlab::ConfigurationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctx = BuildContext { registry: default_registry(), vocab, params: store, rng: &mut rng };
    ctx.build::<T>(Params::new(json(config), path)?)
}

pub fn reader(config: &str) -> Box<dyn DatasetReader> {
    build_reader(default_registry(), Params::new(json(config), "dataset_reader").unwrap()).unwrap()
}

pub fn instances(reader: &dyn DatasetReader, rows: &[Value]) -> Vec<Instance> {
    rows.iter().map(|r| reader.text_to_instance(r, true).unwrap()).collect()
}

/// A model built from its `model` section over a vocabulary of `data`.
pub struct Built {
    pub model: Box<dyn Model>,
    pub store: ParamStore,
    pub vocab: Vocabulary,
    pub indexed: Vec<IndexedInstance>,
}

pub fn build_model_over(model: &str, data: &[Instance], seed: u64) -> Built {
    let vocab = Vocabulary::from_instances(data, &Default::default());
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = build_model(default_registry(), Params::new(json(model), "model").unwrap(), &vocab, &mut store, &mut rng).unwrap();
    let indexed = data.iter().map(|i| index_instance(i, &vocab).unwrap()).collect();
    Built { model, store, vocab, indexed }
}

pub fn batch(indexed: &[IndexedInstance], picks: &[usize]) -> Batch {
    pad_batch(&picks.iter().map(|&i| indexed[i].clone()).collect::<Vec<_>>()).unwrap()
}

/// One small smooth model per task, with its reader and a data generator.
pub struct TaskCase {
    pub name: &'static str,
    pub reader: &'static str,
    pub model: &'static str,
    pub rows: fn(usize, u64) -> Vec<Value>,
}

pub const MODEL_CASES: &[TaskCase] = &[
    TaskCase {
        name: "classifier",
        reader: r#"{"type": "classification"}"#,
        model: r#"{"type": "classifier", "embedder": {"type": "embedding", "embedding_dim": 4},
                   "encoder": {"type": "final_state", "encoder": {"type": "lstm", "input_dim": 4, "hidden_size": 3, "bidirectional": true}}}"#,
        rows: textlab::toy::keyword_classification,
    },
    TaskCase {
        name: "tagger",
        reader: r#"{"type": "tagging"}"#,
        model: r#"{"type": "tagger", "embedder": {"type": "embedding", "embedding_dim": 4},
                   "encoder": {"type": "gru", "input_dim": 4, "hidden_size": 3, "bidirectional": true}}"#,
        rows: textlab::toy::copy_tagging,
    },
    TaskCase {
        name: "span_selector",
        reader: r#"{"type": "span_selection"}"#,
        model: r#"{"type": "span_selector", "embedder": {"type": "embedding", "embedding_dim": 4},
                   "question_encoder": {"type": "mean_pooler"},
                   "passage_encoder": {"type": "rnn", "input_dim": 4, "hidden_size": 3, "bidirectional": true},
                   "end_encoder": {"type": "lstm", "input_dim": 10, "hidden_size": 2}}"#,
        rows: textlab::toy::marker_spans,
    },
    TaskCase {
        name: "pair_classifier",
        reader: r#"{"type": "pair_classification"}"#,
        model: r#"{"type": "pair_classifier", "embedder": {"type": "embedding", "embedding_dim": 4},
                   "encoder": {"type": "final_state", "encoder": {"type": "gru", "input_dim": 4, "hidden_size": 3}}}"#,
        rows: textlab::toy::word_overlap_pairs,
    },
];

pub fn temp_dir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Random configuration trees: finite numbers, arbitrary strings, unique keys.
pub fn config_tree() -> impl Strategy<Value = ConfigValue> {
    let number = prop_oneof![any::<i32>().prop_map(f64::from), any::<f64>().prop_filter("finite", |x| x.is_finite()), (-1e6..1e6f64),];
    let leaf = prop_oneof![
        Just(ConfigValue::null()),
        any::<bool>().prop_map(ConfigValue::bool),
        number.prop_map(ConfigValue::number),
        any::<String>().prop_map(ConfigValue::string),
        "[a-z_\\\\\"\n\t/]{0,6}".prop_map(ConfigValue::string),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(ConfigValue::array),
            prop::collection::btree_map(any::<String>(), inner, 0..6).prop_map(ConfigValue::object),
        ]
    })
}
