//! Loads a shipped config, applies dotted overrides and shows how a bad key
//! is reported.
//!
//! ```sh
//! cargo run --example config_overrides
//! ```

use std::path::Path;

use textlab::config::{canonical_serialize, merge_overrides, parse_config};
use textlab::registry::default_registry;
use textlab::training::prepare;

fn main() -> textlab::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(root.join("configs/classifier.json")).expect("shipped config");
    let base = parse_config(&text)?;

    let overrides = parse_config(r#"{"model.encoder.encoder.type": "gru", "trainer": {"num_epochs": 3}}"#)?;
    let merged = merge_overrides(&base, &overrides)?;
    println!("{}", canonical_serialize(&merged));

    let typo = parse_config(r#"{"model.encoder.encoder.hiden_size": 4}"#)?;
    match prepare(default_registry(), &merge_overrides(&merged, &typo)?) {
        Err(textlab::Error::Configuration(e)) => println!("\nrejected at {}: {}", e.path, e.message),
        Err(e) => println!("\nfailed: {e}"),
        Ok(_) => println!("\nunexpectedly accepted"),
    }
    Ok(())
}
