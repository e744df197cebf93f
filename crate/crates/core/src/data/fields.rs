use std::collections::BTreeMap;

use super::DataError;

const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')', '[', ']'];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token {
    text: String,
}

impl Token {
    pub fn new(text: impl Into<String>) -> Result<Self, DataError> {
        let text = text.into();
        if text.is_empty() {
            return Err(DataError::EmptyToken);
        }
        Ok(Token { text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.text.chars()
    }
}

/// Whitespace tokenizer that also splits leading and trailing punctuation
/// into separate tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tokenizer {
    pub lowercase: bool,
}

impl Tokenizer {
    pub fn new(lowercase: bool) -> Self {
        Tokenizer { lowercase }
    }

    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let word = if self.lowercase { word.to_lowercase() } else { word.to_string() };
            let chars: Vec<char> = word.chars().collect();
            let lead = chars.iter().take_while(|c| PUNCTUATION.contains(c)).count();
            let trail = chars[lead..].iter().rev().take_while(|c| PUNCTUATION.contains(c)).count();
            let push = |out: &mut Vec<Token>, s: String| out.push(Token { text: s });
            chars[..lead].iter().for_each(|c| push(&mut out, c.to_string()));
            if lead + trail < chars.len() {
                push(&mut out, chars[lead..chars.len() - trail].iter().collect());
            }
            chars[chars.len() - trail..].iter().for_each(|c| push(&mut out, c.to_string()));
        }
        out
    }
}

/// Tokenizes with the default (case-preserving) settings.
pub fn tokenize(text: &str) -> Vec<Token> {
    Tokenizer::default().tokenize(text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextField {
    pub tokens: Vec<Token>,
}

impl TextField {
    pub fn new(tokens: Vec<Token>) -> Self {
        TextField { tokens }
    }

    pub fn from_strs<S: AsRef<str>>(words: &[S]) -> Result<Self, DataError> {
        words.iter().map(|w| Token::new(w.as_ref())).collect::<Result<_, _>>().map(TextField::new)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelField {
    pub label: String,
    pub namespace: String,
}

impl LabelField {
    pub fn new(label: impl Into<String>, namespace: impl Into<String>) -> Self {
        LabelField { label: label.into(), namespace: namespace.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceLabelField {
    pub tags: Vec<String>,
    /// Name of the text field these tags align with.
    pub aligned_to: String,
    pub namespace: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexField {
    pub index: usize,
    pub over: String,
}

/// One model input array's worth of an example.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Text(TextField),
    Label(LabelField),
    SequenceLabel(SequenceLabelField),
    /// `(start, end)` inclusive, over the named text field.
    Span {
        start: usize,
        end: usize,
        over: String,
    },
    Index(IndexField),
    /// Carried through batching but never turned into an array.
    Metadata(serde_json::Value),
}

impl Field {
    pub fn kind(&self) -> &'static str {
        match self {
            Field::Text(_) => "text",
            Field::Label(_) => "label",
            Field::SequenceLabel(_) => "sequence_label",
            Field::Span { .. } => "span",
            Field::Index(_) => "index",
            Field::Metadata(_) => "metadata",
        }
    }

    pub fn span(start: usize, end: usize, over: impl Into<String>) -> Field {
        Field::Span { start, end, over: over.into() }
    }
}

/// A named collection of fields; one training or prediction example.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Instance {
    fields: BTreeMap<String, Field>,
}

impl Instance {
    /// Builds an instance and checks every alignment reference.
    pub fn new<S: Into<String>>(fields: impl IntoIterator<Item = (S, Field)>) -> Result<Self, DataError> {
        let mut out = BTreeMap::new();
        for (name, field) in fields {
            let name = name.into();
            if out.contains_key(&name) {
                return Err(DataError::DuplicateField(name));
            }
            out.insert(name, field);
        }
        let instance = Instance { fields: out };
        instance.validate()?;
        Ok(instance)
    }

    pub fn fields(&self) -> &BTreeMap<String, Field> {
        &self.fields
    }

    pub fn get(&self, name: &str) -> Option<&Field> {
        self.fields.get(name)
    }

    pub fn text(&self, name: &str) -> Option<&TextField> {
        match self.fields.get(name) {
            Some(Field::Text(t)) => Some(t),
            _ => None,
        }
    }

    fn text_len(&self, field: &str, target: &str) -> Result<usize, DataError> {
        self.text(target)
            .map(TextField::len)
            .ok_or_else(|| DataError::UnresolvedReference { field: field.to_string(), target: target.to_string() })
    }

    fn validate(&self) -> Result<(), DataError> {
        for (name, field) in &self.fields {
            match field {
                Field::SequenceLabel(f) => {
                    let len = self.text_len(name, &f.aligned_to)?;
                    if f.tags.len() != len {
                        return Err(DataError::LengthMismatch { field: name.clone(), expected: len, found: f.tags.len() });
                    }
                }
                Field::Span { start, end, over } => {
                    let len = self.text_len(name, over)?;
                    if start > end || *end >= len {
                        return Err(DataError::SpanOutOfRange { field: name.clone(), start: *start, end: *end, len });
                    }
                }
                Field::Index(f) => {
                    let len = self.text_len(name, &f.over)?;
                    if f.index >= len {
                        return Err(DataError::IndexOutOfRange { field: name.clone(), index: f.index, len });
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
