//! JSON-lines dataset readers, one per task schema.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{DataError, Field, Instance, LabelField, SequenceLabelField, TextField, Token, Tokenizer, Vocabulary};
use crate::registry::{Abstraction, BuildContext, ConfigurationError, Params, RegistrationError, Registry};
use crate::tensor::ParamStore;

pub const CLASS_LABELS: &str = "class_labels";
pub const TAG_LABELS: &str = "tag_labels";

/// Kind of an input value in a task schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Text,
    TokenList,
}

impl InputKind {
    fn name(self) -> &'static str {
        match self {
            InputKind::Text => "text",
            InputKind::TokenList => "token_list",
        }
    }
}

/// Turns task-schema JSON objects into [`Instance`]s.
pub trait DatasetReader: Send + Sync {
    /// Task name as reported to clients, e.g. `"classification"`.
    fn task(&self) -> &'static str;

    /// Fields a prediction request must provide.
    fn inputs(&self) -> &'static [(&'static str, InputKind)];

    /// Fields only present in labelled data.
    fn gold_fields(&self) -> &'static [&'static str];

    /// Text field used for length bucketing.
    fn sort_field(&self) -> &'static str;

    fn text_to_instance(&self, json: &Value, with_gold: bool) -> Result<Instance, DataError>;

    /// Reads a labelled JSONL file; blank lines are skipped.
    fn read(&self, path: &Path) -> Result<Vec<Instance>, DataError> {
        let display = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: display.clone(), source })?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fail = |message: String| DataError::Json { path: display.clone(), line: i + 1, message };
            let value: Value = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
            out.push(self.text_to_instance(&value, true).map_err(|e| fail(e.to_string()))?);
        }
        Ok(out)
    }

    /// Description of the request layout for clients.
    fn schema(&self) -> Value {
        json!({
            "task": self.task(),
            "inputs": self.inputs().iter().map(|(name, kind)| json!({"name": name, "kind": kind.name()})).collect::<Vec<_>>(),
            "gold": self.gold_fields(),
        })
    }
}

impl Abstraction for dyn DatasetReader {
    const NAME: &'static str = "dataset_reader";
}

/// Builds a reader outside of model construction.
pub fn build_reader(registry: &Registry, params: Params) -> Result<Box<dyn DatasetReader>, ConfigurationError> {
    let vocab = Vocabulary::new();
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = BuildContext { registry, vocab: &vocab, params: &mut store, rng: &mut rng };
    registry.instantiate::<dyn DatasetReader>(params, &mut ctx)
}

fn object(json: &Value) -> Result<&serde_json::Map<String, Value>, DataError> {
    json.as_object().ok_or_else(|| DataError::InvalidField { field: "(root)".into(), expected: "a JSON object".into() })
}

fn field<'a>(json: &'a Value, name: &str) -> Result<&'a Value, DataError> {
    object(json)?.get(name).ok_or_else(|| DataError::MissingField { field: name.to_string() })
}

fn invalid(name: &str, expected: &str) -> DataError {
    DataError::InvalidField { field: name.to_string(), expected: expected.to_string() }
}

fn string<'a>(json: &'a Value, name: &str) -> Result<&'a str, DataError> {
    field(json, name)?.as_str().ok_or_else(|| invalid(name, "a string"))
}

fn tokenized(tokenizer: &Tokenizer, json: &Value, name: &str) -> Result<TextField, DataError> {
    let tokens = tokenizer.tokenize(string(json, name)?);
    if tokens.is_empty() {
        return Err(invalid(name, "a string with at least one token"));
    }
    Ok(TextField::new(tokens))
}

fn string_list(json: &Value, name: &str) -> Result<Vec<String>, DataError> {
    let expected = "a non-empty list of non-empty strings without whitespace";
    let items = field(json, name)?.as_array().ok_or_else(|| invalid(name, expected))?;
    if items.is_empty() {
        return Err(invalid(name, expected));
    }
    items
        .iter()
        .map(|v| match v.as_str() {
            Some(s) if !s.is_empty() && !s.chars().any(char::is_whitespace) => Ok(s.to_string()),
            _ => Err(invalid(name, expected)),
        })
        .collect()
}

fn words(text: &TextField) -> Value {
    Value::from(text.tokens.iter().map(Token::text).collect::<Vec<_>>())
}

pub struct ClassificationReader {
    tokenizer: Tokenizer,
}

impl DatasetReader for ClassificationReader {
    fn task(&self) -> &'static str {
        "classification"
    }

    fn inputs(&self) -> &'static [(&'static str, InputKind)] {
        &[("text", InputKind::Text)]
    }

    fn gold_fields(&self) -> &'static [&'static str] {
        &["label"]
    }

    fn sort_field(&self) -> &'static str {
        "tokens"
    }

    fn text_to_instance(&self, json: &Value, with_gold: bool) -> Result<Instance, DataError> {
        let tokens = tokenized(&self.tokenizer, json, "text")?;
        let mut fields = vec![("metadata", Field::Metadata(json!({ "tokens": words(&tokens) }))), ("tokens", Field::Text(tokens))];
        if with_gold {
            fields.push(("label", Field::Label(LabelField::new(string(json, "label")?, CLASS_LABELS))));
        }
        Instance::new(fields)
    }
}

pub struct TaggingReader {
    lowercase: bool,
}

impl DatasetReader for TaggingReader {
    fn task(&self) -> &'static str {
        "tagging"
    }

    fn inputs(&self) -> &'static [(&'static str, InputKind)] {
        &[("tokens", InputKind::TokenList)]
    }

    fn gold_fields(&self) -> &'static [&'static str] {
        &["tags"]
    }

    fn sort_field(&self) -> &'static str {
        "tokens"
    }

    fn text_to_instance(&self, json: &Value, with_gold: bool) -> Result<Instance, DataError> {
        let raw = string_list(json, "tokens")?;
        let tokens =
            raw.iter().map(|w| Token::new(if self.lowercase { w.to_lowercase() } else { w.clone() })).collect::<Result<Vec<_>, _>>()?;
        let mut fields = vec![("metadata", Field::Metadata(json!({ "tokens": raw }))), ("tokens", Field::Text(TextField::new(tokens)))];
        if with_gold {
            let tags = string_list(json, "tags")?;
            fields.push((
                "tags",
                Field::SequenceLabel(SequenceLabelField { tags, aligned_to: "tokens".into(), namespace: TAG_LABELS.into() }),
            ));
        }
        Instance::new(fields)
    }
}

pub struct SpanSelectionReader {
    tokenizer: Tokenizer,
}

impl DatasetReader for SpanSelectionReader {
    fn task(&self) -> &'static str {
        "span_selection"
    }

    fn inputs(&self) -> &'static [(&'static str, InputKind)] {
        &[("question", InputKind::Text), ("passage", InputKind::Text)]
    }

    fn gold_fields(&self) -> &'static [&'static str] {
        &["span"]
    }

    fn sort_field(&self) -> &'static str {
        "passage"
    }

    fn text_to_instance(&self, json: &Value, with_gold: bool) -> Result<Instance, DataError> {
        let question = tokenized(&self.tokenizer, json, "question")?;
        let passage = tokenized(&self.tokenizer, json, "passage")?;
        let mut fields = vec![
            ("metadata", Field::Metadata(json!({ "passage_tokens": words(&passage) }))),
            ("question", Field::Text(question)),
            ("passage", Field::Text(passage)),
        ];
        if with_gold {
            let expected = "a [start, end] pair of token indices";
            let pair = field(json, "span")?.as_array().filter(|a| a.len() == 2).ok_or_else(|| invalid("span", expected))?;
            let index = |v: &Value| v.as_u64().map(|x| x as usize).ok_or_else(|| invalid("span", expected));
            fields.push(("span", Field::span(index(&pair[0])?, index(&pair[1])?, "passage")));
        }
        Instance::new(fields)
    }
}

pub struct PairClassificationReader {
    tokenizer: Tokenizer,
}

impl DatasetReader for PairClassificationReader {
    fn task(&self) -> &'static str {
        "pair_classification"
    }

    fn inputs(&self) -> &'static [(&'static str, InputKind)] {
        &[("premise", InputKind::Text), ("hypothesis", InputKind::Text)]
    }

    fn gold_fields(&self) -> &'static [&'static str] {
        &["label"]
    }

    fn sort_field(&self) -> &'static str {
        "premise"
    }

    fn text_to_instance(&self, json: &Value, with_gold: bool) -> Result<Instance, DataError> {
        let premise = tokenized(&self.tokenizer, json, "premise")?;
        let hypothesis = tokenized(&self.tokenizer, json, "hypothesis")?;
        let mut fields = vec![
            ("metadata", Field::Metadata(json!({ "premise_tokens": words(&premise), "hypothesis_tokens": words(&hypothesis) }))),
            ("premise", Field::Text(premise)),
            ("hypothesis", Field::Text(hypothesis)),
        ];
        if with_gold {
            fields.push(("label", Field::Label(LabelField::new(string(json, "label")?, CLASS_LABELS))));
        }
        Instance::new(fields)
    }
}

type ReaderResult = Result<Box<dyn DatasetReader>, ConfigurationError>;

fn tokenizer(params: &mut Params) -> Result<Tokenizer, ConfigurationError> {
    Ok(Tokenizer::new(params.pop_bool("lowercase", Some(false))?))
}

fn classification(params: &mut Params, _: &mut BuildContext<'_>) -> ReaderResult {
    Ok(Box::new(ClassificationReader { tokenizer: tokenizer(params)? }))
}

fn tagging(params: &mut Params, _: &mut BuildContext<'_>) -> ReaderResult {
    Ok(Box::new(TaggingReader { lowercase: params.pop_bool("lowercase", Some(false))? }))
}

fn span_selection(params: &mut Params, _: &mut BuildContext<'_>) -> ReaderResult {
    Ok(Box::new(SpanSelectionReader { tokenizer: tokenizer(params)? }))
}

fn pair_classification(params: &mut Params, _: &mut BuildContext<'_>) -> ReaderResult {
    Ok(Box::new(PairClassificationReader { tokenizer: tokenizer(params)? }))
}

pub(crate) fn register(registry: &mut Registry) -> Result<(), RegistrationError> {
    registry.register::<dyn DatasetReader>("classification", classification)?;
    registry.register::<dyn DatasetReader>("tagging", tagging)?;
    registry.register::<dyn DatasetReader>("span_selection", span_selection)?;
    registry.register::<dyn DatasetReader>("pair_classification", pair_classification)
}
