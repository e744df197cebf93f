//! Trains a small classifier and serves it. Try:
//!
//! ```sh
//! cargo run --example serve_demo -- 8000
//! curl localhost:8000/info
//! curl -d '{"text": "a wonderful story"}' localhost:8000/predict
//! ```
//!
//! A second argument names a directory of static files to host alongside.

use std::path::{Path, PathBuf};

use textlab::config::{merge_overrides, parse_config, ConfigValue};
use textlab::predictor::Predictor;
use textlab::service::{serve, ServeOptions};
use textlab::training::train;

fn main() -> textlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let port = args.next().map_or(8000, |p| p.parse().expect("port number"));
    let static_dir = args.next().map(PathBuf::from);

    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let config = parse_config(&std::fs::read_to_string(root.join("configs/classifier.json")).expect("shipped config"))?;
    let config = merge_overrides(
        &config,
        &ConfigValue::object([
            ("train_data_path", ConfigValue::string(root.join("data/classification_train.jsonl").display().to_string())),
            ("validation_data_path", ConfigValue::string(root.join("data/classification_validation.jsonl").display().to_string())),
        ]),
    )?;
    let outcome = train(&config, &std::env::temp_dir().join("textlab-serve-demo"))?;

    let handle = serve(Predictor::from_archive(&outcome.archive)?, ServeOptions { port, static_dir, ..ServeOptions::default() })?;
    println!("serving on {}", handle.url());
    handle.wait();
    Ok(())
}
