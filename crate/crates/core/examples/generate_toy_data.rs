//! Regenerates the JSONL files under `data/` used by the shipped configs.
//!
//! ```sh
//! cargo run --example generate_toy_data -- data
//! ```

use std::path::PathBuf;

use textlab::toy;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir)?;
    let sets = [
        ("classification", toy::keyword_classification(64, 1), toy::keyword_classification(32, 2)),
        ("tagging", toy::copy_tagging(100, 3), toy::copy_tagging(40, 4)),
        ("spans", toy::marker_spans(120, 5), toy::marker_spans(40, 6)),
        ("pairs", toy::word_overlap_pairs(80, 7), toy::word_overlap_pairs(40, 8)),
    ];
    for (name, train, validation) in sets {
        toy::write_jsonl(&dir.join(format!("{name}_train.jsonl")), &train)?;
        toy::write_jsonl(&dir.join(format!("{name}_validation.jsonl")), &validation)?;
        println!("{name}: {} train, {} validation", train.len(), validation.len());
    }
    let inputs: Vec<_> = toy::keyword_classification(4, 9)
        .into_iter()
        .map(|mut row| {
            row.as_object_mut().expect("object").remove("label");
            row
        })
        .collect();
    toy::write_jsonl(&dir.join("classification_inputs.jsonl"), &inputs)?;
    Ok(())
}
