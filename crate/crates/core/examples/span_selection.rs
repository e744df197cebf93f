//! Trains the span selector on marked passages and decodes a new one.
//!
//! ```sh
//! cargo run --example span_selection
//! ```

use std::path::Path;

use serde_json::json;
use textlab::config::{merge_overrides, parse_config, ConfigValue};
use textlab::predictor::Predictor;
use textlab::training::train;

fn main() -> textlab::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let config = parse_config(&std::fs::read_to_string(root.join("configs/span_selector.json")).expect("shipped config"))?;
    let config = merge_overrides(
        &config,
        &ConfigValue::object([
            ("train_data_path", ConfigValue::string(root.join("data/spans_train.jsonl").display().to_string())),
            ("validation_data_path", ConfigValue::string(root.join("data/spans_validation.jsonl").display().to_string())),
        ]),
    )?;
    let outcome = train(&config, &std::env::temp_dir().join("textlab-spans"))?;
    println!("exact match {:.3}, f1 {:.3}", outcome.best_metrics["exact_match"], outcome.best_metrics["f1"]);

    let predictor = Predictor::from_archive(&outcome.archive)?;
    let input = json!({"question": "which words are marked", "passage": "the movie <s> plot was very </s> and it felt"});
    let result = predictor.predict_json(&input)?;
    println!("span {} -> {:?}", result["span"], result["answer"]);
    Ok(())
}
