//! Trains the shipped keyword classifier, reloads the archive and predicts
//! a few sentences.
//!
//! ```sh
//! cargo run --example train_classifier
//! ```

use std::path::Path;

use serde_json::json;
use textlab::config::{merge_overrides, parse_config, ConfigValue};
use textlab::predictor::Predictor;
use textlab::training::{evaluate, train};

fn main() -> textlab::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let validation = root.join("data/classification_validation.jsonl");
    let config = parse_config(&std::fs::read_to_string(root.join("configs/classifier.json")).expect("shipped config"))?;
    let config = merge_overrides(
        &config,
        &ConfigValue::object([
            ("train_data_path", ConfigValue::string(root.join("data/classification_train.jsonl").display().to_string())),
            ("validation_data_path", ConfigValue::string(validation.display().to_string())),
        ]),
    )?;

    let outcome = train(&config, &std::env::temp_dir().join("textlab-classifier"))?;
    for record in &outcome.history {
        println!("epoch {:>2}: loss {:.4}", record.epoch, record.training_loss);
    }
    println!("best epoch {}: {:?}", outcome.best_epoch, outcome.best_metrics);
    println!("reloaded: {:?}", evaluate(&outcome.archive, &validation)?);

    let predictor = Predictor::from_archive(&outcome.archive)?;
    for text in ["a great movie", "the plot was terrible"] {
        let result = predictor.predict_json(&json!({"text": text}))?;
        println!("{text:?} -> {} {}", result["label"], result["probabilities"]);
    }
    Ok(())
}
