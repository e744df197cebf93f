//! The experiment configuration language: JSON plus `//` and `#` line comments.
//!
//! Parsed documents are trees of [`ConfigValue`]s that remember where in the
//! source text each node came from, so configuration errors can point at it.

mod canonical;
mod merge;
mod parser;

use std::fmt;

pub use canonical::canonical_serialize;
pub use merge::{merge_overrides, MergeError};
pub use parser::{parse_config, ParseError};

/// A (line, column) source location, both 1-based.
///
/// Nodes that were built in code rather than parsed carry [`Span::SYNTHETIC`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub const SYNTHETIC: Span = Span { line: 0, column: 0 };

    pub fn new(line: u32, column: u32) -> Self {
        Span { line, column }
    }

    pub fn is_synthetic(&self) -> bool {
        *self == Span::SYNTHETIC
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_synthetic() {
            write!(f, "<generated>")
        } else {
            write!(f, "line {}, column {}", self.line, self.column)
        }
    }
}

#[derive(Debug, Clone)]
pub enum ValueKind {
    Null,
    Bool(bool),
    /// Always finite.
    Number(f64),
    String(String),
    Array(Vec<ConfigValue>),
    /// Keys are unique; insertion order is kept.
    Object(Vec<(String, ConfigValue)>),
}

/// One node of a configuration tree.
///
/// Equality is structural: spans are ignored and object keys compare as a map.
#[derive(Debug, Clone)]
pub struct ConfigValue {
    pub kind: ValueKind,
    pub span: Span,
}

impl ConfigValue {
    pub fn new(kind: ValueKind) -> Self {
        ConfigValue { kind, span: Span::SYNTHETIC }
    }

    pub fn with_span(kind: ValueKind, span: Span) -> Self {
        ConfigValue { kind, span }
    }

    pub fn null() -> Self {
        Self::new(ValueKind::Null)
    }

    pub fn bool(b: bool) -> Self {
        Self::new(ValueKind::Bool(b))
    }

    /// Panics on non-finite input, which the tree never holds.
    pub fn number(n: f64) -> Self {
        assert!(n.is_finite(), "configuration numbers must be finite");
        Self::new(ValueKind::Number(n))
    }

    pub fn string(s: impl Into<String>) -> Self {
        Self::new(ValueKind::String(s.into()))
    }

    pub fn array(items: Vec<ConfigValue>) -> Self {
        Self::new(ValueKind::Array(items))
    }

    /// Builds an object; later duplicates of a key replace earlier ones.
    pub fn object<K: Into<String>>(entries: impl IntoIterator<Item = (K, ConfigValue)>) -> Self {
        let mut out: Vec<(String, ConfigValue)> = Vec::new();
        for (k, v) in entries {
            let k = k.into();
            match out.iter_mut().find(|(existing, _)| *existing == k) {
                Some(slot) => slot.1 = v,
                None => out.push((k, v)),
            }
        }
        Self::new(ValueKind::Object(out))
    }

    pub fn empty_object() -> Self {
        Self::new(ValueKind::Object(Vec::new()))
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ValueKind::Null => "null",
            ValueKind::Bool(_) => "boolean",
            ValueKind::Number(_) => "number",
            ValueKind::String(_) => "string",
            ValueKind::Array(_) => "array",
            ValueKind::Object(_) => "object",
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self.kind, ValueKind::Null)
    }

    pub fn is_object(&self) -> bool {
        matches!(self.kind, ValueKind::Object(_))
    }

    pub fn as_object(&self) -> Option<&[(String, ConfigValue)]> {
        match &self.kind {
            ValueKind::Object(entries) => Some(entries),
            _ => None,
        }
    }

    pub fn as_object_mut(&mut self) -> Option<&mut Vec<(String, ConfigValue)>> {
        match &mut self.kind {
            ValueKind::Object(entries) => Some(entries),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[ConfigValue]> {
        match &self.kind {
            ValueKind::Array(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match &self.kind {
            ValueKind::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self.kind {
            ValueKind::Number(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self.kind {
            ValueKind::Bool(b) => Some(b),
            _ => None,
        }
    }

    /// Integer view of a number; `None` unless the value is integral.
    pub fn as_i64(&self) -> Option<i64> {
        match self.kind {
            ValueKind::Number(n) if n.fract() == 0.0 && n.abs() < 9.007_199_254_740_992e15 => Some(n as i64),
            _ => None,
        }
    }

    /// Object member lookup.
    pub fn get(&self, key: &str) -> Option<&ConfigValue> {
        self.as_object()?.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Follows a dotted path such as `trainer.optimizer.lr`.
    pub fn get_path(&self, dotted: &str) -> Option<&ConfigValue> {
        dotted.split('.').try_fold(self, |node, key| node.get(key))
    }

    /// Converts to a `serde_json::Value`, e.g. for embedding a config in a
    /// JSON response.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        match &self.kind {
            ValueKind::Null => J::Null,
            ValueKind::Bool(b) => J::Bool(*b),
            ValueKind::Number(n) => match self.as_i64() {
                Some(i) => J::from(i),
                None => serde_json::Number::from_f64(*n).map(J::Number).unwrap_or(J::Null),
            },
            ValueKind::String(s) => J::String(s.clone()),
            ValueKind::Array(items) => J::Array(items.iter().map(ConfigValue::to_json).collect()),
            ValueKind::Object(entries) => J::Object(entries.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()),
        }
    }
}

impl PartialEq for ConfigValue {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (ValueKind::Null, ValueKind::Null) => true,
            (ValueKind::Bool(a), ValueKind::Bool(b)) => a == b,
            (ValueKind::Number(a), ValueKind::Number(b)) => a == b,
            (ValueKind::String(a), ValueKind::String(b)) => a == b,
            (ValueKind::Array(a), ValueKind::Array(b)) => a == b,
            (ValueKind::Object(a), ValueKind::Object(b)) => {
                a.len() == b.len() && a.iter().all(|(k, v)| b.iter().any(|(k2, v2)| k == k2 && v == v2))
            }
            _ => false,
        }
    }
}

impl fmt::Display for ConfigValue {
    /// Compact single-line JSON, used in log lines.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl std::str::FromStr for ConfigValue {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_config(s)
    }
}
