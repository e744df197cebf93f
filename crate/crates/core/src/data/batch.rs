use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{CHARACTERS, TOKENS};
use super::{DataError, Field, Instance, Vocabulary};
use crate::tensor::Mask;

/// A field after vocabulary lookup.
#[derive(Debug, Clone, PartialEq)]
pub enum IndexedField {
    Text { word_ids: Vec<usize>, char_ids: Vec<Vec<usize>> },
    Label(usize),
    Tags { ids: Vec<usize>, aligned_to: String },
    Span { start: usize, end: usize },
    Index(usize),
    Metadata(serde_json::Value),
}

impl IndexedField {
    fn kind(&self) -> &'static str {
        match self {
            IndexedField::Text { .. } => "text",
            IndexedField::Label(_) => "label",
            IndexedField::Tags { .. } => "sequence_label",
            IndexedField::Span { .. } => "span",
            IndexedField::Index(_) => "index",
            IndexedField::Metadata(_) => "metadata",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndexedInstance {
    pub fields: BTreeMap<String, IndexedField>,
}

impl IndexedInstance {
    /// Token count of a text field.
    pub fn text_len(&self, name: &str) -> Result<usize, DataError> {
        match self.fields.get(name) {
            Some(IndexedField::Text { word_ids, .. }) => Ok(word_ids.len()),
            Some(_) => Err(DataError::NotATextField(name.to_string())),
            None => Err(DataError::MissingField { field: name.to_string() }),
        }
    }
}

pub fn index_instance(instance: &Instance, vocab: &Vocabulary) -> Result<IndexedInstance, DataError> {
    let label_id = |ns: &str, label: &str| {
        vocab.token_to_id(ns, label).ok_or_else(|| DataError::UnknownLabel { namespace: ns.to_string(), label: label.to_string() })
    };
    let mut fields = BTreeMap::new();
    for (name, field) in instance.fields() {
        let indexed = match field {
            Field::Text(text) => IndexedField::Text {
                word_ids: text.tokens.iter().map(|t| vocab.index_token(TOKENS, t.text()).unwrap_or(1)).collect(),
                char_ids: text
                    .tokens
                    .iter()
                    .map(|t| t.chars().map(|c| vocab.index_token(CHARACTERS, &c.to_string()).unwrap_or(1)).collect())
                    .collect(),
            },
            Field::Label(label) => IndexedField::Label(label_id(&label.namespace, &label.label)?),
            Field::SequenceLabel(tags) => IndexedField::Tags {
                ids: tags.tags.iter().map(|t| label_id(&tags.namespace, t)).collect::<Result<_, _>>()?,
                aligned_to: tags.aligned_to.clone(),
            },
            Field::Span { start, end, .. } => IndexedField::Span { start: *start, end: *end },
            Field::Index(index) => IndexedField::Index(index.index),
            Field::Metadata(value) => IndexedField::Metadata(value.clone()),
        };
        fields.insert(name.clone(), indexed);
    }
    Ok(IndexedInstance { fields })
}

/// Padded ids for one text field: word ids `[B, T]`, character ids `[B, T, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextArray {
    pub batch: usize,
    pub seq_len: usize,
    pub char_len: usize,
    pub word_ids: Vec<usize>,
    pub char_ids: Vec<usize>,
    pub mask: Mask,
    pub char_mask: Mask,
    pub lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagArray {
    pub ids: Vec<usize>,
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldArray {
    Text(TextArray),
    Label(Vec<usize>),
    Tags(TagArray),
    Span(Vec<(usize, usize)>),
    Index(Vec<usize>),
    Metadata(Vec<serde_json::Value>),
}

/// Padded arrays for a group of instances, keyed by field name.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub arrays: BTreeMap<String, FieldArray>,
}

macro_rules! accessor {
    ($name:ident, $variant:ident, $ty:ty, $expected:literal) => {
        pub fn $name(&self, field: &str) -> Result<&$ty, DataError> {
            match self.arrays.get(field) {
                Some(FieldArray::$variant(v)) => Ok(v),
                Some(_) => Err(DataError::InvalidField { field: field.to_string(), expected: $expected.to_string() }),
                None => Err(DataError::MissingField { field: field.to_string() }),
            }
        }
    };
}

impl Batch {
    accessor!(text, Text, TextArray, "a text field");
    accessor!(labels, Label, Vec<usize>, "a label field");
    accessor!(tags, Tags, TagArray, "a sequence label field");
    accessor!(spans, Span, Vec<(usize, usize)>, "a span field");
    accessor!(indices, Index, Vec<usize>, "an index field");
    accessor!(metadata, Metadata, Vec<serde_json::Value>, "a metadata field");

    pub fn has(&self, field: &str) -> bool {
        self.arrays.contains_key(field)
    }
}

fn pad_text(rows: &[(&Vec<usize>, &Vec<Vec<usize>>)]) -> TextArray {
    let batch = rows.len();
    let lengths: Vec<usize> = rows.iter().map(|(w, _)| w.len()).collect();
    let seq_len = lengths.iter().copied().max().unwrap_or(0);
    let char_len = rows.iter().flat_map(|(_, c)| c.iter().map(Vec::len)).max().unwrap_or(0);
    let mut word_ids = vec![0; batch * seq_len];
    let mut char_ids = vec![0; batch * seq_len * char_len];
    let mut char_mask = vec![false; batch * seq_len * char_len];
    for (b, (words, chars)) in rows.iter().enumerate() {
        word_ids[b * seq_len..b * seq_len + words.len()].copy_from_slice(words);
        for (t, token) in chars.iter().enumerate() {
            let base = (b * seq_len + t) * char_len;
            char_ids[base..base + token.len()].copy_from_slice(token);
            char_mask[base..base + token.len()].iter_mut().for_each(|m| *m = true);
        }
    }
    TextArray {
        batch,
        seq_len,
        char_len,
        word_ids,
        char_ids,
        mask: Mask::from_lengths(&lengths, seq_len),
        char_mask: Mask::new(vec![batch, seq_len, char_len], char_mask).expect("sized above"),
        lengths,
    }
}

/// Pads every field to the per-batch maximum length with id 0 and produces
/// the matching masks. All instances must share one schema.
pub fn pad_batch(instances: &[IndexedInstance]) -> Result<Batch, DataError> {
    let first = instances.first().ok_or(DataError::EmptyBatch)?;
    for (i, inst) in instances.iter().enumerate().skip(1) {
        let same = inst.fields.len() == first.fields.len()
            && inst.fields.iter().zip(&first.fields).all(|((n1, f1), (n2, f2))| n1 == n2 && f1.kind() == f2.kind());
        if !same {
            let names = |x: &IndexedInstance| x.fields.iter().map(|(n, f)| format!("{n}:{}", f.kind())).collect::<Vec<_>>();
            return Err(DataError::SchemaMismatch(format!(
                "instance {i} has fields {:?} but instance 0 has {:?}",
                names(inst),
                names(first)
            )));
        }
    }
    let mut arrays = BTreeMap::new();
    for (name, proto) in &first.fields {
        let column = instances.iter().map(|inst| &inst.fields[name]);
        let array = match proto {
            IndexedField::Text { .. } => FieldArray::Text(pad_text(
                &column
                    .map(|f| match f {
                        IndexedField::Text { word_ids, char_ids } => (word_ids, char_ids),
                        _ => unreachable!("schema checked"),
                    })
                    .collect::<Vec<_>>(),
            )),
            IndexedField::Label(_) => FieldArray::Label(column.map(|f| if let IndexedField::Label(l) = f { *l } else { 0 }).collect()),
            IndexedField::Tags { .. } => {
                let rows: Vec<&Vec<usize>> =
                    column.map(|f| if let IndexedField::Tags { ids, .. } = f { ids } else { unreachable!("schema checked") }).collect();
                let lengths: Vec<usize> = rows.iter().map(|r| r.len()).collect();
                let t = lengths.iter().copied().max().unwrap_or(0);
                let mut ids = vec![0; rows.len() * t];
                for (b, row) in rows.iter().enumerate() {
                    ids[b * t..b * t + row.len()].copy_from_slice(row);
                }
                FieldArray::Tags(TagArray { ids, mask: Mask::from_lengths(&lengths, t) })
            }
            IndexedField::Span { .. } => {
                FieldArray::Span(column.map(|f| if let IndexedField::Span { start, end } = f { (*start, *end) } else { (0, 0) }).collect())
            }
            IndexedField::Index(_) => FieldArray::Index(column.map(|f| if let IndexedField::Index(i) = f { *i } else { 0 }).collect()),
            IndexedField::Metadata(_) => FieldArray::Metadata(
                column.map(|f| if let IndexedField::Metadata(v) = f { v.clone() } else { serde_json::Value::Null }).collect(),
            ),
        };
        arrays.insert(name.clone(), array);
    }
    Ok(Batch { size: instances.len(), arrays })
}

/// Groups indices into batches of similar length: a stable sort by length,
/// consecutive chunks of `batch_size`, then a seeded shuffle of chunk order.
pub fn bucket_indices(lengths: &[usize], batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>, DataError> {
    if batch_size == 0 {
        return Err(DataError::InvalidBatchSize);
    }
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&i| lengths[i]);
    let mut groups: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(groups)
}

/// Length-bucketed batches sorted on the named text field.
pub fn make_buckets(instances: &[IndexedInstance], batch_size: usize, sort_field: &str, seed: u64) -> Result<Vec<Batch>, DataError> {
    let lengths = instances.iter().map(|inst| inst.text_len(sort_field)).collect::<Result<Vec<_>, _>>()?;
    bucket_indices(&lengths, batch_size, seed)?
        .into_iter()
        .map(|group| pad_batch(&group.iter().map(|&i| instances[i].clone()).collect::<Vec<_>>()))
        .collect()
}

/// Batches in input order.
pub fn sequential_batches(instances: &[IndexedInstance], batch_size: usize) -> Result<Vec<Batch>, DataError> {
    if batch_size == 0 {
        return Err(DataError::InvalidBatchSize);
    }
    instances.chunks(batch_size).map(pad_batch).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{IndexField, LabelField, SequenceLabelField, TextField};

    fn vocab_for(instances: &[Instance]) -> Vocabulary {
        Vocabulary::from_instances(instances, &BTreeMap::new())
    }

    fn tagged(words: &[&str], tags: &[&str]) -> Instance {
        Instance::new([
            ("tokens", Field::Text(TextField::from_strs(words).unwrap())),
            (
                "tags",
                Field::SequenceLabel(SequenceLabelField {
                    tags: tags.iter().map(|s| s.to_string()).collect(),
                    aligned_to: "tokens".into(),
                    namespace: "tag_labels".into(),
                }),
            ),
        ])
        .unwrap()
    }

    #[test]
    fn pads_words_and_characters() {
        let data = [tagged(&["ab", "a"], &["X", "Y"]), tagged(&["b"], &["Y"])];
        let vocab = vocab_for(&data);
        let indexed: Vec<_> = data.iter().map(|i| index_instance(i, &vocab).unwrap()).collect();
        let batch = pad_batch(&indexed).unwrap();
        let text = batch.text("tokens").unwrap();
        let (ab, a, b) =
            (vocab.token_to_id(TOKENS, "ab").unwrap(), vocab.token_to_id(TOKENS, "a").unwrap(), vocab.token_to_id(TOKENS, "b").unwrap());
        assert_eq!(text.word_ids, vec![ab, a, b, 0]);
        assert_eq!(format!("{:?}", text.mask), "Mask { shape: [2, 2], bits: \"1110\" }");
        let (ca, cb) = (vocab.token_to_id(CHARACTERS, "a").unwrap(), vocab.token_to_id(CHARACTERS, "b").unwrap());
        assert_eq!((text.seq_len, text.char_len), (2, 2));
        assert_eq!(text.char_ids, vec![ca, cb, ca, 0, cb, 0, 0, 0]);
        assert_eq!(text.char_mask.data(), &[true, true, true, false, true, false, false, false]);
        let tags = batch.tags("tags").unwrap();
        let (x, y) = (vocab.token_to_id("tag_labels", "X").unwrap(), vocab.token_to_id("tag_labels", "Y").unwrap());
        assert_eq!(tags.ids, vec![x, y, y, 0]);
        assert_eq!(tags.mask, text.mask);
    }

    #[test]
    fn accessors_report_kind_errors() {
        let data = [tagged(&["a"], &["X"])];
        let vocab = vocab_for(&data);
        let batch = pad_batch(&[index_instance(&data[0], &vocab).unwrap()]).unwrap();
        assert!(matches!(batch.labels("tokens"), Err(DataError::InvalidField { .. })));
        assert!(matches!(batch.spans("nope"), Err(DataError::MissingField { .. })));
        assert!(batch.has("tags"));
    }

    #[test]
    fn schema_mismatch_and_empty() {
        let a = tagged(&["a"], &["X"]);
        let b = Instance::new([("tokens", Field::Text(TextField::from_strs(&["a"]).unwrap()))]).unwrap();
        let vocab = vocab_for(std::slice::from_ref(&a));
        let err = pad_batch(&[index_instance(&a, &vocab).unwrap(), index_instance(&b, &vocab).unwrap()]).unwrap_err();
        assert!(matches!(err, DataError::SchemaMismatch(_)));
        assert!(matches!(pad_batch(&[]), Err(DataError::EmptyBatch)));
    }

    #[test]
    fn unknown_labels_fail_indexing() {
        let vocab = vocab_for(&[tagged(&["a"], &["X"])]);
        let err = index_instance(&tagged(&["a"], &["Z"]), &vocab).unwrap_err();
        assert!(matches!(err, DataError::UnknownLabel { ref label, .. } if label == "Z"));
        let unknown_word = index_instance(&tagged(&["q"], &["X"]), &vocab).unwrap();
        assert_eq!(unknown_word.fields["tokens"], IndexedField::Text { word_ids: vec![1], char_ids: vec![vec![1]] });
    }

    #[test]
    fn other_field_kinds_batch() {
        let inst = |label: &str, s: usize| {
            Instance::new([
                ("p", Field::Text(TextField::from_strs(&["a", "b", "c"]).unwrap())),
                ("l", Field::Label(LabelField::new(label, "class_labels"))),
                ("s", Field::span(s, 2, "p")),
                ("i", Field::Index(IndexField { index: s, over: "p".into() })),
                ("m", Field::Metadata(serde_json::json!({"k": s}))),
            ])
            .unwrap()
        };
        let data = [inst("x", 0), inst("y", 1)];
        let vocab = vocab_for(&data);
        let idx: Vec<_> = data.iter().map(|i| index_instance(i, &vocab).unwrap()).collect();
        let batch = pad_batch(&idx).unwrap();
        assert_eq!(batch.size, 2);
        assert_eq!(batch.spans("s").unwrap(), &vec![(0, 2), (1, 2)]);
        assert_eq!(batch.indices("i").unwrap(), &vec![0, 1]);
        assert_eq!(batch.labels("l").unwrap().len(), 2);
        assert_eq!(batch.metadata("m").unwrap()[1], serde_json::json!({"k": 1}));
        assert!(matches!(idx[0].text_len("l"), Err(DataError::NotATextField(_))));
    }

    #[test]
    fn bucketing_groups_similar_lengths() {
        let lengths = [5, 1, 3, 2, 4, 6];
        let groups = bucket_indices(&lengths, 2, 7).unwrap();
        let mut sorted: Vec<Vec<usize>> = groups
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.sort();
                g
            })
            .collect();
        sorted.sort();
        assert_eq!(sorted, vec![vec![0, 5], vec![1, 3], vec![2, 4]]);
        assert_eq!(bucket_indices(&lengths, 2, 7).unwrap(), groups);
        assert!(matches!(bucket_indices(&lengths, 0, 7), Err(DataError::InvalidBatchSize)));
        assert!(bucket_indices(&[], 3, 0).unwrap().is_empty());
    }

    #[test]
    fn buckets_and_sequential_batches() {
        let data: Vec<Instance> = (1..=5).map(|n| tagged(&vec!["w"; n], &vec!["X"; n])).collect();
        let vocab = vocab_for(&data);
        let idx: Vec<_> = data.iter().map(|i| index_instance(i, &vocab).unwrap()).collect();
        let buckets = make_buckets(&idx, 2, "tokens", 3).unwrap();
        assert_eq!(buckets.iter().map(|b| b.size).sum::<usize>(), 5);
        assert!(matches!(make_buckets(&idx, 2, "tags", 3), Err(DataError::NotATextField(_))));
        assert!(matches!(make_buckets(&idx, 2, "zzz", 3), Err(DataError::MissingField { .. })));
        let seq = sequential_batches(&idx, 2).unwrap();
        assert_eq!(
            seq.iter().map(|b| b.text("tokens").unwrap().lengths.clone()).collect::<Vec<_>>(),
            vec![vec![1, 2], vec![3, 4], vec![5]]
        );
        assert!(sequential_batches(&idx, 0).is_err());
    }
}
