mod common;

use std::collections::BTreeMap;

use common::config_tree;
use proptest::prelude::*;
use textlab::archive::{decode_weights, encode_weights};
use textlab::config::{canonical_serialize, merge_overrides, parse_config, ConfigValue};
use textlab::data::{bucket_indices, index_instance, pad_batch, Field, Instance, TextField, Vocabulary, PADDING_TOKEN, UNKNOWN_TOKEN};
use textlab::models::{best_span, bio_segments};
use textlab::tensor::{Mask, Tape, Tensor};
use textlab::training::EarlyStopping;

fn object_tree() -> impl Strategy<Value = ConfigValue> {
    prop::collection::btree_map("[a-d]{1,2}", config_tree(), 0..5).prop_map(ConfigValue::object)
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-e]{1,4}", 1..8)
}

proptest! {
    #[test]
    fn canonical_form_roundtrips(value in config_tree()) {
        let text = canonical_serialize(&value);
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &value);
        prop_assert_eq!(canonical_serialize(&back), text);
    }

    #[test]
    fn empty_overrides_are_identity(base in object_tree()) {
        prop_assert_eq!(merge_overrides(&base, &ConfigValue::empty_object()).unwrap(), base);
    }

    #[test]
    fn merging_twice_changes_nothing(base in object_tree(), overrides in object_tree()) {
        let once = merge_overrides(&base, &overrides);
        if let Ok(once) = once {
            prop_assert_eq!(merge_overrides(&once, &overrides).unwrap(), once.clone());
            for (key, value) in overrides.as_object().unwrap() {
                if !value.is_object() {
                    prop_assert_eq!(once.get(key).unwrap(), value);
                }
            }
        }
    }

    #[test]
    fn buckets_conserve_instances(lengths in prop::collection::vec(0usize..40, 0..200), size in 1usize..20, seed in any::<u64>()) {
        let groups = bucket_indices(&lengths, size, seed).unwrap();
        let mut flat = groups.concat();
        flat.sort_unstable();
        prop_assert_eq!(flat, (0..lengths.len()).collect::<Vec<_>>());
        prop_assert!(groups.iter().all(|g| !g.is_empty() && g.len() <= size));
        prop_assert_eq!(groups.iter().filter(|g| g.len() < size).count(), usize::from(lengths.len() % size != 0));
        for g in &groups {
            let ls: Vec<usize> = g.iter().map(|&i| lengths[i]).collect();
            prop_assert!(ls.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(g.windows(2).all(|w| lengths[w[0]] < lengths[w[1]] || w[0] < w[1]));
        }
    }

    #[test]
    fn padding_uses_id_zero_under_a_false_mask(sentences in prop::collection::vec(words(), 1..6)) {
        let data: Vec<Instance> = sentences
            .iter()
            .map(|w| Instance::new([("tokens", Field::Text(TextField::from_strs(w).unwrap()))]).unwrap())
            .collect();
        let vocab = Vocabulary::from_instances(&data, &BTreeMap::new());
        let indexed: Vec<_> = data.iter().map(|i| index_instance(i, &vocab).unwrap()).collect();
        let batch = pad_batch(&indexed).unwrap();
        let text = batch.text("tokens").unwrap();
        let lengths: Vec<usize> = sentences.iter().map(Vec::len).collect();
        prop_assert_eq!(&text.lengths, &lengths);
        prop_assert_eq!(text.mask.row_counts(), lengths.clone());
        for (b, w) in sentences.iter().enumerate() {
            for t in 0..text.seq_len {
                let id = text.word_ids[b * text.seq_len + t];
                let real = text.mask.data()[b * text.seq_len + t];
                prop_assert_eq!(real, t < w.len());
                if real {
                    prop_assert_eq!(vocab.id_to_token("tokens", id), Some(w[t].as_str()));
                } else {
                    prop_assert_eq!(id, 0);
                }
                for c in 0..text.char_len {
                    let k = (b * text.seq_len + t) * text.char_len + c;
                    let real_char = real && c < w[t].chars().count();
                    prop_assert_eq!(text.char_mask.data()[k], real_char);
                    if !real_char {
                        prop_assert_eq!(text.char_ids[k], 0);
                    }
                }
            }
        }
    }

    #[test]
    fn masked_softmax_is_a_distribution(
        rows in prop::collection::vec(prop::collection::vec((-30.0..30.0f64, any::<bool>()), 5), 1..5),
    ) {
        let n = rows.len();
        let logits = Tensor::new(vec![n, 5], rows.iter().flatten().map(|p| p.0).collect()).unwrap();
        let mut keep: Vec<bool> = rows.iter().flatten().map(|p| p.1).collect();
        for r in 0..n {
            keep[r * 5] = true;
        }
        let mask = Mask::new(vec![n, 5], keep.clone()).unwrap();
        let tape = Tape::new();
        let probs = tape.leaf(logits).masked_softmax(&mask).unwrap().value();
        for r in 0..n {
            let row = &probs.data()[r * 5..(r + 1) * 5];
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (c, &p) in row.iter().enumerate() {
                prop_assert!(p >= 0.0);
                if !keep[r * 5 + c] {
                    prop_assert_eq!(p, 0.0);
                }
            }
        }
    }

    #[test]
    fn vocabulary_files_roundtrip(tokens in prop::collection::btree_map("[a-z@]{1,6}", 1usize..9, 0..30),
                                  labels in prop::collection::btree_set("[A-Z]{1,3}", 1..5)) {
        let mut counts = BTreeMap::new();
        counts.insert("tokens".to_string(), tokens);
        counts.insert("class_labels".to_string(), labels.into_iter().map(|l| (l, 1)).collect());
        let vocab = Vocabulary::from_counts(&counts, &BTreeMap::new());
        prop_assert_eq!(vocab.id_to_token("tokens", 0), Some(PADDING_TOKEN));
        prop_assert_eq!(vocab.id_to_token("tokens", 1), Some(UNKNOWN_TOKEN));
        let back = Vocabulary::from_files(vocab.to_files().unwrap()).unwrap();
        prop_assert_eq!(back, vocab);
    }

    #[test]
    fn weights_roundtrip_bitwise(tensors in prop::collection::vec(
        (prop::collection::vec(1usize..4, 0..3), any::<u64>()), 0..5)) {
        let named: Vec<(String, Tensor)> = tensors
            .iter()
            .enumerate()
            .map(|(i, (shape, bits))| {
                let n: usize = shape.iter().product();
                let data = (0..n as u64).map(|k| f64::from_bits(bits.wrapping_add(k.wrapping_mul(0x9e37_79b9_7f4a_7c15)))).collect();
                (format!("p{i}.weight"), Tensor::new(shape.clone(), data).unwrap())
            })
            .collect();
        let bytes = encode_weights(named.iter().map(|(n, t)| (n.as_str(), t)));
        let back = decode_weights(&bytes).unwrap();
        prop_assert_eq!(back.len(), named.len());
        for ((n1, t1), (n2, t2)) in named.iter().zip(&back) {
            prop_assert_eq!(n1, n2);
            prop_assert_eq!(t1.shape(), t2.shape());
            let b1: Vec<u64> = t1.data().iter().map(|x| x.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(b1, b2);
        }
        for cut in 0..bytes.len() {
            prop_assert!(decode_weights(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn bio_segments_are_disjoint_and_typed(tags in prop::collection::vec(prop_oneof!["O", "B-A", "I-A", "B-B", "I-B"], 0..12)) {
        let segments = bio_segments(&tags);
        let mut covered = vec![false; tags.len()];
        for (s, e, kind) in &segments {
            prop_assert!(s <= e && *e < tags.len());
            let suffix = format!("-{kind}");
            prop_assert!(tags[*s].ends_with(&suffix));
            for (i, seen) in covered.iter_mut().enumerate().take(e + 1).skip(*s) {
                prop_assert!(!*seen);
                *seen = true;
                prop_assert_ne!(&tags[i], "O");
            }
        }
        for (i, tag) in tags.iter().enumerate() {
            prop_assert_eq!(covered[i], tag != "O");
        }
    }

    #[test]
    fn best_span_is_the_first_maximum(start in prop::collection::vec(0.0..1.0f64, 1..9), seed in any::<u64>()) {
        let end: Vec<f64> = start.iter().enumerate().map(|(i, _)| ((seed >> (i % 60)) & 7) as f64 / 7.0).collect();
        let (s, e) = best_span(&start, &end);
        prop_assert!(s <= e && e < start.len());
        let mut best = (0, 0);
        for i in 0..start.len() {
            for j in i..start.len() {
                if start[i] * end[j] > start[best.0] * end[best.1] {
                    best = (i, j);
                }
            }
        }
        prop_assert_eq!((s, e), best);
    }

    #[test]
    fn early_stopping_tracks_the_first_maximum(values in prop::collection::vec(0.0..1.0f64, 1..20), patience in 1usize..5) {
        let mut stopping = EarlyStopping::new(Some(patience));
        let mut seen = Vec::new();
        for &v in &values {
            stopping.observe(v);
            seen.push(v);
            let best = seen.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(stopping.best(), Some(best));
            prop_assert_eq!(stopping.best_epoch(), seen.iter().position(|&x| x == best).unwrap() + 1);
            prop_assert_eq!(stopping.should_stop(), seen.len() - stopping.best_epoch() >= patience);
        }
    }
}
