//! Trains the tagger three times, changing only the recurrent cell through
//! an override.
//!
//! ```sh
//! cargo run --example encoder_swap
//! ```

use std::path::Path;

use textlab::cli::load_experiment;
use textlab::config::{merge_overrides, ConfigValue};
use textlab::training::train;

fn main() -> textlab::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let paths = ConfigValue::object([
        ("train_data_path", ConfigValue::string(root.join("data/tagging_train.jsonl").display().to_string())),
        ("validation_data_path", ConfigValue::string(root.join("data/tagging_validation.jsonl").display().to_string())),
    ]);
    for cell in ["rnn", "gru", "lstm"] {
        let overrides = format!(r#"{{"model.encoder.type": "{cell}"}}"#);
        let config = merge_overrides(&load_experiment(&root.join("configs/tagger.json"), Some(&overrides), None)?, &paths)?;
        let outcome = train(&config, &std::env::temp_dir().join(format!("textlab-tagger-{cell}")))?;
        let best = &outcome.best_metrics;
        println!("{cell:>4}: accuracy {:.3}, span_f1 {:.3} (epoch {})", best["accuracy"], best["span_f1"], outcome.best_epoch);
    }
    Ok(())
}
