mod common;

use std::collections::BTreeMap;

use common::build;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textlab::data::{index_instance, pad_batch, Field, Instance, TextField, Vocabulary};
use textlab::nn::{Seq2SeqEncoder, Seq2VecEncoder, SpanExtractor, TokenEmbedder};
use textlab::tensor::{Mask, ParamStore, Scope, Tape, Tensor};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn param<'a>(store: &'a ParamStore, name: &str) -> &'a [f64] {
    store.value(store.id(name).unwrap_or_else(|| panic!("no parameter {name}"))).data()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `x · W + b` for a row vector `x` and row-major `W` of shape `[x.len(), n]`.
fn affine(x: &[f64], w: &[f64], b: Option<&[f64]>, n: usize) -> Vec<f64> {
    (0..n).map(|j| x.iter().enumerate().map(|(k, xk)| xk * w[k * n + j]).sum::<f64>() + b.map_or(0.0, |b| b[j])).collect()
}

/// One direction of a recurrent cell, step by step over `xs`.
fn run_cell(cell: &str, store: &ParamStore, prefix: &str, xs: &[Vec<f64>], h_size: usize) -> Vec<Vec<f64>> {
    let gates = match cell {
        "rnn" => 1,
        "gru" => 3,
        _ => 4,
    };
    let g = gates * h_size;
    let (w_in, w_h, bias) = (
        param(store, &format!("{prefix}.input_weight")),
        param(store, &format!("{prefix}.hidden_weight")),
        param(store, &format!("{prefix}.bias")),
    );
    let (mut h, mut c) = (vec![0.0; h_size], vec![0.0; h_size]);
    let mut out = Vec::new();
    for x in xs {
        let px = affine(x, w_in, Some(bias), g);
        let ph = affine(&h, w_h, None, g);
        h = match cell {
            "rnn" => (0..h_size).map(|j| (px[j] + ph[j]).tanh()).collect(),
            "gru" => (0..h_size)
                .map(|j| {
                    let r = sigmoid(px[j] + ph[j]);
                    let z = sigmoid(px[h_size + j] + ph[h_size + j]);
                    let n = (px[2 * h_size + j] + r * ph[2 * h_size + j]).tanh();
                    (1.0 - z) * n + z * h[j]
                })
                .collect(),
            _ => {
                let pre: Vec<f64> = px.iter().zip(&ph).map(|(a, b)| a + b).collect();
                let mut next = vec![0.0; h_size];
                for j in 0..h_size {
                    let (i, f) = (sigmoid(pre[j]), sigmoid(pre[h_size + j]));
                    let (cand, o) = (pre[2 * h_size + j].tanh(), sigmoid(pre[3 * h_size + j]));
                    c[j] = f * c[j] + i * cand;
                    next[j] = o * c[j].tanh();
                }
                next
            }
        };
        out.push(h.clone());
    }
    out
}

fn encode(encoder: &dyn Seq2SeqEncoder, store: &ParamStore, x: &Tensor, lengths: &[usize]) -> Tensor {
    let tape = Tape::new();
    let mask = Mask::from_lengths(lengths, x.shape()[1]);
    let out = encoder.forward(Scope::new(&tape, store), tape.leaf(x.clone()), &mask).unwrap();
    (*out.value()).clone()
}

#[test]
fn recurrent_cells_match_a_stepwise_oracle() {
    for cell in ["rnn", "gru", "lstm"] {
        for bidirectional in [false, true] {
            let mut store = ParamStore::new();
            let config = format!(r#"{{"type": "{cell}", "input_dim": 3, "hidden_size": 4, "bidirectional": {bidirectional}}}"#);
            let encoder = build::<dyn Seq2SeqEncoder>(&config, "encoder", &Vocabulary::new(), &mut store, 11).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let x = random(&mut rng, &[2, 5, 3]);
            let lengths = [5, 2];
            let got = encode(encoder.as_ref(), &store, &x, &lengths);
            let width = if bidirectional { 8 } else { 4 };
            assert_eq!(got.shape(), &[2, 5, width]);
            for (b, &len) in lengths.iter().enumerate() {
                let xs: Vec<Vec<f64>> = (0..len).map(|t| x.data()[(b * 5 + t) * 3..(b * 5 + t + 1) * 3].to_vec()).collect();
                let fwd = run_cell(cell, &store, "encoder.forward", &xs, 4);
                let reversed: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
                let bwd = if bidirectional { run_cell(cell, &store, "encoder.backward", &reversed, 4) } else { Vec::new() };
                for t in 0..5 {
                    let row = &got.data()[(b * 5 + t) * width..(b * 5 + t + 1) * width];
                    let want: Vec<f64> = if t >= len {
                        vec![0.0; width]
                    } else if bidirectional {
                        fwd[t].iter().chain(&bwd[len - 1 - t]).copied().collect()
                    } else {
                        fwd[t].clone()
                    };
                    for (g, w) in row.iter().zip(&want) {
                        assert!((g - w).abs() < 1e-12, "{cell} bi={bidirectional} b={b} t={t}: {g} vs {w}");
                    }
                }
            }
        }
    }
}

#[test]
fn recurrent_outputs_ignore_padding() {
    for cell in ["rnn", "gru", "lstm"] {
        let mut store = ParamStore::new();
        let config = format!(r#"{{"type": "{cell}", "input_dim": 2, "hidden_size": 3, "bidirectional": true}}"#);
        let encoder = build::<dyn Seq2SeqEncoder>(&config, "encoder", &Vocabulary::new(), &mut store, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let joint = random(&mut rng, &[2, 3, 2]);
        let together = encode(encoder.as_ref(), &store, &joint, &[3, 1]);
        let first = Tensor::new(vec![1, 3, 2], joint.data()[..6].to_vec()).unwrap();
        let second = Tensor::new(vec![1, 1, 2], joint.data()[6..8].to_vec()).unwrap();
        let alone = [encode(encoder.as_ref(), &store, &first, &[3]), encode(encoder.as_ref(), &store, &second, &[1])];
        assert!(together.data()[..18].iter().zip(alone[0].data()).all(|(a, b)| (a - b).abs() < 1e-12), "{cell}");
        assert!(together.data()[18..24].iter().zip(alone[1].data()).all(|(a, b)| (a - b).abs() < 1e-12), "{cell}");
        assert!(together.data()[24..].iter().all(|&v| v == 0.0), "{cell}");
    }
}

#[test]
fn lstm_forget_bias_starts_at_one() {
    let mut store = ParamStore::new();
    build::<dyn Seq2SeqEncoder>(r#"{"type": "lstm", "input_dim": 2, "hidden_size": 3}"#, "e", &Vocabulary::new(), &mut store, 0).unwrap();
    assert_eq!(param(&store, "e.forward.bias"), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

fn text_instance(words: &[&str]) -> Instance {
    Instance::new([("tokens", Field::Text(TextField::from_strs(words).unwrap()))]).unwrap()
}

#[test]
fn character_cnn_matches_direct_convolution() {
    let data = [text_instance(&["abcd", "a", "dcb"])];
    let vocab = Vocabulary::from_instances(&data, &BTreeMap::new());
    let mut store = ParamStore::new();
    let config = r#"{"type": "character_cnn", "embedding_dim": 3, "num_filters": 2, "ngram_filter_sizes": [2, 3]}"#;
    let embedder = build::<dyn TokenEmbedder>(config, "embedder", &vocab, &mut store, 4).unwrap();
    assert_eq!(embedder.output_dim(), 4);
    let batch = pad_batch(&[index_instance(&data[0], &vocab).unwrap()]).unwrap();
    let text = batch.text("tokens").unwrap();
    let tape = Tape::new();
    let got = embedder.forward(Scope::new(&tape, &store), text).unwrap().value();
    assert_eq!(got.shape(), &[1, 3, 4]);

    let table = param(&store, "embedder.char_weight");
    for (t, word) in ["abcd", "a", "dcb"].iter().enumerate() {
        let ids: Vec<usize> = word.chars().map(|ch| vocab.token_to_id("characters", &ch.to_string()).unwrap()).collect();
        let mut want = Vec::new();
        for w in [2usize, 3] {
            let (weights, bias) = (param(&store, &format!("embedder.conv{w}.weight")), param(&store, &format!("embedder.conv{w}.bias")));
            let mut padded = ids.clone();
            padded.resize(ids.len().max(w), 0);
            for f in 0..2 {
                let mut best = f64::NEG_INFINITY;
                for p in 0..=padded.len() - w {
                    let mut acc = bias[f];
                    for j in 0..w {
                        for k in 0..3 {
                            acc += table[padded[p + j] * 3 + k] * weights[(j * 3 + k) * 2 + f];
                        }
                    }
                    best = best.max(acc.max(0.0));
                }
                want.push(best);
            }
        }
        let row = &got.data()[t * 4..(t + 1) * 4];
        for (g, w) in row.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "{word}: {row:?} vs {want:?}");
        }
    }
}

#[test]
fn embedding_rows_and_concat_order() {
    let data = [text_instance(&["x", "y", "x"])];
    let vocab = Vocabulary::from_instances(&data, &BTreeMap::new());
    let mut store = ParamStore::new();
    let config = r#"{"type": "concat", "embedders": [
        {"type": "embedding", "embedding_dim": 2},
        {"type": "character_cnn", "embedding_dim": 2, "num_filters": 1, "ngram_filter_sizes": [1]}]}"#;
    let embedder = build::<dyn TokenEmbedder>(config, "embedder", &vocab, &mut store, 1).unwrap();
    assert!(store.id("embedder.embedders.0.weight").is_some() && store.id("embedder.embedders.1.char_weight").is_some());
    let batch = pad_batch(&[index_instance(&data[0], &vocab).unwrap()]).unwrap();
    let text = batch.text("tokens").unwrap();
    let tape = Tape::new();
    let got = embedder.forward(Scope::new(&tape, &store), text).unwrap().value();
    assert_eq!(got.shape(), &[1, 3, 3]);
    let table = param(&store, "embedder.embedders.0.weight");
    for (t, &id) in text.word_ids.iter().enumerate() {
        assert_eq!(&got.data()[t * 3..t * 3 + 2], &table[id * 2..id * 2 + 2]);
    }
    assert_eq!(&got.data()[0..3], &got.data()[6..9]);
}

#[test]
fn pretrained_vectors_overwrite_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.txt");
    std::fs::write(&path, "x 0.5 -1 2\nnot_in_vocab 9 9 9\n\n").unwrap();
    let vocab = Vocabulary::from_instances(&[text_instance(&["x", "y"])], &BTreeMap::new());
    let mut store = ParamStore::new();
    let config = format!(r#"{{"type": "embedding", "embedding_dim": 3, "pretrained_file": "{}"}}"#, path.display());
    build::<dyn TokenEmbedder>(&config, "embedder", &vocab, &mut store, 0).unwrap();
    let id = vocab.token_to_id("tokens", "x").unwrap();
    assert_eq!(&param(&store, "embedder.weight")[id * 3..id * 3 + 3], &[0.5, -1.0, 2.0]);

    std::fs::write(&path, "x 1 2\n").unwrap();
    let err = build::<dyn TokenEmbedder>(&config, "embedder", &vocab, &mut ParamStore::new(), 0).err().unwrap();
    assert_eq!(err.path, "embedder.pretrained_file");
    assert!(err.to_string().contains("expected 3 finite values"), "{err}");
    let missing = r#"{"type": "embedding", "embedding_dim": 3, "pretrained_file": "/nonexistent/vectors.txt"}"#;
    let err = build::<dyn TokenEmbedder>(missing, "embedder", &vocab, &mut ParamStore::new(), 0).err().unwrap();
    assert_eq!(err.path, "embedder.pretrained_file");
}

fn pool(config: &str, x: &Tensor, lengths: &[usize]) -> Tensor {
    let mut store = ParamStore::new();
    let encoder = build::<dyn Seq2VecEncoder>(config, "encoder", &Vocabulary::new(), &mut store, 0).unwrap();
    let tape = Tape::new();
    let mask = Mask::from_lengths(lengths, x.shape()[1]);
    let out = encoder.forward(Scope::new(&tape, &store), tape.leaf(x.clone()), &mask).unwrap();
    (*out.value()).clone()
}

#[test]
fn poolers_match_loops_over_real_positions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&mut rng, &[3, 4, 2]);
    let lengths = [4, 1, 3];
    let mean = pool(r#"{"type": "mean_pooler"}"#, &x, &lengths);
    let max = pool(r#"{"type": "max_pooler", "input_dim": 2}"#, &x, &lengths);
    for (b, &len) in lengths.iter().enumerate() {
        for d in 0..2 {
            let column: Vec<f64> = (0..len).map(|t| x.data()[(b * 4 + t) * 2 + d]).collect();
            let want_mean = column.iter().sum::<f64>() / len as f64;
            let want_max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((mean.data()[b * 2 + d] - want_mean).abs() < 1e-12);
            assert_eq!(max.data()[b * 2 + d], want_max);
        }
    }
}

#[test]
fn cnn_encoder_ignores_padding_and_short_rows() {
    let config = r#"{"type": "cnn", "input_dim": 2, "num_filters": 3, "ngram_filter_sizes": [1, 3]}"#;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&mut rng, &[2, 4, 2]);
    let both = pool(config, &x, &[4, 2]);
    assert_eq!(both.shape(), &[2, 6]);
    let second = Tensor::new(vec![1, 2, 2], x.data()[8..12].to_vec()).unwrap();
    let alone = pool(config, &second, &[2]);
    for (a, b) in both.data()[6..].iter().zip(alone.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn final_state_reads_last_forward_and_first_backward() {
    let mut store = ParamStore::new();
    let seq = r#"{"type": "gru", "input_dim": 2, "hidden_size": 2, "bidirectional": true}"#;
    let config = format!(r#"{{"type": "final_state", "encoder": {seq}}}"#);
    let encoder = build::<dyn Seq2VecEncoder>(&config, "encoder", &Vocabulary::new(), &mut store, 6).unwrap();
    assert_eq!(encoder.input_dim(), Some(2));
    assert_eq!(encoder.output_dim(2), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, &[2, 3, 2]);
    let tape = Tape::new();
    let mask = Mask::from_lengths(&[3, 2], 3);
    let scope = Scope::new(&tape, &store);
    let got = encoder.forward(scope, tape.leaf(x.clone()), &mask).unwrap().value();

    let inner = build::<dyn Seq2SeqEncoder>(seq, "encoder.encoder", &Vocabulary::new(), &mut ParamStore::new(), 0).unwrap();
    let full = inner.forward(scope, tape.leaf(x), &mask).unwrap().value();
    for (b, len) in [(0usize, 3usize), (1, 2)] {
        let last = &full.data()[(b * 3 + len - 1) * 4..(b * 3 + len) * 4];
        let first = &full.data()[b * 3 * 4..(b * 3 + 1) * 4];
        assert_eq!(&got.data()[b * 4..b * 4 + 2], &last[..2]);
        assert_eq!(&got.data()[b * 4 + 2..b * 4 + 4], &first[2..]);
    }

    let empty = Mask::from_lengths(&[3, 0], 3);
    let tape = Tape::new();
    assert!(encoder.forward(Scope::new(&tape, &store), tape.leaf(Tensor::zeros(&[2, 3, 2])), &empty).is_err());
}

#[test]
fn span_extractor_matches_direct_indexing() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random(&mut rng, &[2, 5, 3]);
    let lengths = [5, 3];
    let spans = [(0, 4), (2, 2), (1, 0), (0, 2), (1, 2), (9, 9)];
    let live = [true, true, false, true, true, false];
    let span_mask = Mask::new(vec![2, 3], live.to_vec()).unwrap();
    for (name, width) in [("concat", 6), ("diff", 3), ("concat+diff", 9)] {
        let config = format!(r#"{{"type": "endpoint", "input_dim": 3, "combination": "{name}"}}"#);
        let extractor = build::<dyn SpanExtractor>(&config, "span", &Vocabulary::new(), &mut ParamStore::new(), 0).unwrap();
        assert_eq!(extractor.output_dim(), width);
        let tape = Tape::new();
        let got = extractor.forward(tape.leaf(x.clone()), &spans, &span_mask, &Mask::from_lengths(&lengths, 5)).unwrap().value();
        assert_eq!(got.shape(), &[2, 3, width]);
        for (i, &(s, e)) in spans.iter().enumerate() {
            let b = i / 3;
            let row = &got.data()[i * width..(i + 1) * width];
            if !live[i] {
                assert!(row.iter().all(|&v| v == 0.0));
                continue;
            }
            let a = &x.data()[(b * 5 + s) * 3..(b * 5 + s + 1) * 3];
            let z = &x.data()[(b * 5 + e) * 3..(b * 5 + e + 1) * 3];
            let diff: Vec<f64> = z.iter().zip(a).map(|(z, a)| z - a).collect();
            let want: Vec<f64> = match name {
                "concat" => a.iter().chain(z).copied().collect(),
                "diff" => diff,
                _ => a.iter().chain(z).chain(&diff).copied().collect(),
            };
            assert_eq!(row, want.as_slice(), "{name} span {i}");
        }
    }
    let extractor =
        build::<dyn SpanExtractor>(r#"{"type": "endpoint", "input_dim": 3}"#, "span", &Vocabulary::new(), &mut ParamStore::new(), 0)
            .unwrap();
    let tape = Tape::new();
    let past_end = [(0, 1), (2, 3), (0, 0), (0, 0), (0, 0), (0, 0)];
    let one_live = Mask::new(vec![2, 3], vec![true, true, false, false, false, false]).unwrap();
    assert!(extractor.forward(tape.leaf(x), &past_end, &one_live, &Mask::from_lengths(&[3, 3], 5)).is_err());
}

#[test]
fn component_config_errors_name_their_keys() {
    let vocab = Vocabulary::new();
    let cases = [
        (r#"{"type": "gru", "input_dim": 0, "hidden_size": 2}"#, "enc.input_dim"),
        (r#"{"type": "gru", "input_dim": 2}"#, "enc.hidden_size"),
        (r#"{"type": "gru", "input_dim": 2, "hidden_size": 2, "bidirectional": "yes"}"#, "enc.bidirectional"),
        (r#"{"type": "transformer", "input_dim": 2}"#, "enc.type"),
        (r#"{"input_dim": 2}"#, "enc.type"),
    ];
    for (config, path) in cases {
        let err = build::<dyn Seq2SeqEncoder>(config, "enc", &vocab, &mut ParamStore::new(), 0).err().unwrap();
        assert_eq!(err.path, path, "{config}: {err}");
        assert!(err.to_string().contains(&format!("'{path}'")));
    }
    let err = build::<dyn Seq2VecEncoder>(
        r#"{"type": "cnn", "input_dim": 2, "num_filters": 2, "ngram_filter_sizes": []}"#,
        "enc",
        &vocab,
        &mut ParamStore::new(),
        0,
    )
    .err()
    .unwrap();
    assert_eq!(err.path, "enc.ngram_filter_sizes");
    let err =
        build::<dyn SpanExtractor>(r#"{"type": "endpoint", "input_dim": 2, "combination": "sum"}"#, "s", &vocab, &mut ParamStore::new(), 0)
            .err()
            .unwrap();
    assert_eq!(err.path, "s.combination");
    let err = build::<dyn TokenEmbedder>(r#"{"type": "concat", "embedders": []}"#, "e", &vocab, &mut ParamStore::new(), 0).err().unwrap();
    assert_eq!(err.path, "e.embedders");
    let err =
        build::<dyn TokenEmbedder>(r#"{"type": "concat", "embedders": [{"type": "embedding"}]}"#, "e", &vocab, &mut ParamStore::new(), 0)
            .err()
            .unwrap();
    assert_eq!(err.path, "e.embedders.0.embedding_dim");
}
