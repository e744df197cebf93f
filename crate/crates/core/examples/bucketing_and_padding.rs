//! Reads the tagging data, groups it into length buckets and prints what one
//! padded batch looks like.
//!
//! ```sh
//! cargo run --example bucketing_and_padding
//! ```

use std::path::Path;

use textlab::config::parse_config;
use textlab::data::readers::build_reader;
use textlab::data::{index_instance, make_buckets, Vocabulary};
use textlab::registry::default_registry;
use textlab::Params;

fn main() -> textlab::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let reader = build_reader(default_registry(), Params::new(parse_config(r#"{"type": "tagging"}"#)?, "dataset_reader")?)?;
    let instances = reader.read(&root.join("data/tagging_train.jsonl"))?;
    let vocab = Vocabulary::from_instances(&instances, &Default::default());
    let indexed = instances.iter().map(|i| index_instance(i, &vocab)).collect::<Result<Vec<_>, _>>()?;

    let batches = make_buckets(&indexed, 8, reader.sort_field(), 42)?;
    for batch in &batches {
        let text = batch.text(reader.sort_field())?;
        println!("batch of {:>2}, lengths {:?}", batch.size, text.lengths);
    }

    let text = batches[0].text(reader.sort_field())?;
    println!("\nword ids, one row per instance ({} padded to {}):", text.batch, text.seq_len);
    for (row, mask) in text.word_ids.chunks(text.seq_len).zip(text.mask.data().chunks(text.seq_len)) {
        let cells: Vec<String> = row.iter().zip(mask).map(|(id, &m)| if m { format!("{id:>3}") } else { "  .".into() }).collect();
        println!("{}", cells.join(""));
    }
    Ok(())
}
