//! Registers a new seq2vec encoder under a name of its own and trains a
//! classifier that selects it from config.
//!
//! ```sh
//! cargo run --example registry_custom_component
//! ```

use std::path::Path;

use serde_json::json;
use textlab::config::{merge_overrides, parse_config, ConfigValue};
use textlab::nn::Seq2VecEncoder;
use textlab::predictor::Predictor;
use textlab::registry::{BuildContext, Registry};
use textlab::tensor::{Mask, PoolKind, Scope, TensorError, Var};
use textlab::training::train_with;
use textlab::{ConfigurationError, Params};

/// Max pooling followed by tanh.
struct SquashedMax;

impl Seq2VecEncoder for SquashedMax {
    fn input_dim(&self) -> Option<usize> {
        None
    }

    fn output_dim(&self, input_dim: usize) -> usize {
        input_dim
    }

    fn forward<'t>(&self, _: Scope<'t>, x: Var<'t>, mask: &Mask) -> Result<Var<'t>, TensorError> {
        Ok(x.masked_pool(PoolKind::Max, mask)?.tanh())
    }
}

fn squashed_max(params: &mut Params, _: &mut BuildContext<'_>) -> Result<Box<dyn Seq2VecEncoder>, ConfigurationError> {
    params.assert_empty()?;
    Ok(Box::new(SquashedMax))
}

fn main() -> textlab::Result<()> {
    let mut registry = Registry::with_builtins();
    registry.register::<dyn Seq2VecEncoder>("squashed_max", squashed_max).expect("fresh name");

    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let config = parse_config(
        r#"{
            "dataset_reader": {"type": "classification", "lowercase": true},
            "train_data_path": "data/classification_train.jsonl",
            "validation_data_path": "data/classification_validation.jsonl",
            "model": {
                "type": "classifier",
                "embedder": {"type": "embedding", "embedding_dim": 8},
                "encoder": {"type": "squashed_max"}
            },
            "trainer": {"num_epochs": 15, "batch_size": 8, "seed": 1, "optimizer": {"type": "adam", "lr": 0.01}}
        }"#,
    )?;
    let paths = ConfigValue::object([
        ("train_data_path", ConfigValue::string(root.join("data/classification_train.jsonl").display().to_string())),
        ("validation_data_path", ConfigValue::string(root.join("data/classification_validation.jsonl").display().to_string())),
    ]);
    let config = merge_overrides(&config, &paths)?;

    let dir = std::env::temp_dir().join("textlab-custom-component");
    let outcome = train_with(&registry, &config, &dir)?;
    println!("{} = {:.3} at epoch {}", outcome.metric, outcome.best_value(), outcome.best_epoch);

    let predictor = Predictor::from_archive_with(&outcome.archive, &registry)?;
    let result = predictor.predict_json(&json!({"text": "the ending was wonderful"}))?;
    println!("{}", result["label"]);
    Ok(())
}
