//! Seeded synthetic datasets for each task, small enough to learn in seconds.

use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const FILLER: &[&str] = &["the", "a", "movie", "plot", "was", "and", "it", "felt", "very", "quite", "story", "ending", "actors", "scene"];
const POSITIVE: &[&str] = &["good", "great", "excellent", "wonderful"];
const NEGATIVE: &[&str] = &["bad", "awful", "poor", "terrible"];

const PEOPLE: &[&str] = &["alice", "bob", "carol", "dave", "erin"];
const PLACES: &[&str] = &["paris", "rome", "oslo", "lima", "cairo"];
const OTHER: &[&str] = &["went", "to", "saw", "in", "with", "and", "met", "the", "visited", "from"];

fn filler(rng: &mut ChaCha8Rng, len: usize) -> Vec<&'static str> {
    (0..len).map(|_| *FILLER.choose(rng).expect("non-empty")).collect()
}

/// Sentences of filler words with exactly one sentiment keyword; the keyword
/// alone decides `positive` or `negative`. Classes alternate.
pub fn keyword_classification(n: usize, seed: u64) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (keywords, label) = if i % 2 == 0 { (POSITIVE, "positive") } else { (NEGATIVE, "negative") };
            let len = rng.random_range(3..=8);
            let mut words = filler(&mut rng, len);
            let at = rng.random_range(0..=words.len());
            words.insert(at, keywords.choose(&mut rng).expect("non-empty"));
            json!({"text": words.join(" "), "label": label})
        })
        .collect()
}

/// Token sequences whose tag is a function of the token: person names are
/// `B-PER`, place names `B-LOC`, everything else `O`.
pub fn copy_tagging(n: usize, seed: u64) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(3..=9);
            let (tokens, tags): (Vec<&str>, Vec<&str>) = (0..len)
                .map(|_| match rng.random_range(0..4) {
                    0 => (*PEOPLE.choose(&mut rng).expect("non-empty"), "B-PER"),
                    1 => (*PLACES.choose(&mut rng).expect("non-empty"), "B-LOC"),
                    _ => (*OTHER.choose(&mut rng).expect("non-empty"), "O"),
                })
                .unzip();
            json!({"tokens": tokens, "tags": tags})
        })
        .collect()
}

/// Passages of filler words with one `<s> ... </s>` pair around a run of one
/// to three words. The gold span covers exactly the words between the
/// markers.
pub fn marker_spans(n: usize, seed: u64) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let before = rng.random_range(0..=4);
            let inside = rng.random_range(1..=3);
            let after = rng.random_range(0..=4);
            let mut words = filler(&mut rng, before);
            words.push("<s>");
            words.extend(filler(&mut rng, inside));
            words.push("</s>");
            words.extend(filler(&mut rng, after));
            let start = before + 1;
            json!({"question": "which words are marked", "passage": words.join(" "), "span": [start, start + inside - 1]})
        })
        .collect()
}

/// Sentence pairs labelled `yes` when the one-word hypothesis occurs in the
/// premise, `no` otherwise. Labels alternate.
pub fn word_overlap_pairs(n: usize, seed: u64) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let premise: Vec<&str> = {
                let len = rng.random_range(3..=6);
                let mut pool: Vec<&str> = PEOPLE.iter().chain(PLACES).copied().collect();
                let mut out = Vec::new();
                for _ in 0..len {
                    let k = rng.random_range(0..pool.len());
                    out.push(pool.swap_remove(k));
                }
                out
            };
            let (hypothesis, label) = if i % 2 == 0 {
                (*premise.choose(&mut rng).expect("non-empty"), "yes")
            } else {
                let absent: Vec<&str> = PEOPLE.iter().chain(PLACES).copied().filter(|w| !premise.contains(w)).collect();
                (*absent.choose(&mut rng).expect("premise never uses every word"), "no")
            };
            json!({"premise": premise.join(" "), "hypothesis": hypothesis, "label": label})
        })
        .collect()
}

/// Writes one compact JSON object per line.
pub fn write_jsonl(path: &Path, rows: &[Value]) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in rows {
        writeln!(file, "{row}")?;
    }
    file.flush()
}
