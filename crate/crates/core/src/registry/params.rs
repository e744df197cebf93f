use std::collections::BTreeSet;
use std::fmt;

use crate::config::{ConfigValue, Span, ValueKind};

/// Raised for any invalid, missing, unknown, or leftover configuration
/// parameter. `path` is the full dotted path from the experiment root.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigurationError {
    pub path: String,
    pub message: String,
}

impl ConfigurationError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigurationError { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigurationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "configuration error: {}", self.message)
        } else {
            write!(f, "configuration error at '{}': {}", self.path, self.message)
        }
    }
}

/// A configuration object being consumed by a component constructor.
///
/// Every key must be popped exactly once; [`Params::assert_empty`] reports
/// whatever was left over, which is how misspelled keys are caught.
#[derive(Debug, Clone)]
pub struct Params {
    entries: Vec<(String, ConfigValue)>,
    consumed: BTreeSet<String>,
    path: String,
    span: Span,
}

impl Params {
    /// Wraps an object found at `path` (empty for the experiment root).
    pub fn new(value: ConfigValue, path: impl Into<String>) -> Result<Self, ConfigurationError> {
        let path = path.into();
        let span = value.span;
        match value.kind {
            ValueKind::Object(entries) => Ok(Params { entries, consumed: BTreeSet::new(), path, span }),
            _ => Err(ConfigurationError::new(path, format!("expected an object, found {}{}", value.kind_name(), located(span)))),
        }
    }

    pub fn root(value: ConfigValue) -> Result<Self, ConfigurationError> {
        Self::new(value, "")
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    /// Full dotted path of a key inside this object.
    pub fn key_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    pub fn error(&self, key: &str, message: impl Into<String>) -> ConfigurationError {
        ConfigurationError::new(self.key_path(key), message)
    }

    pub fn contains(&self, key: &str) -> bool {
        !self.consumed.contains(key) && self.entries.iter().any(|(k, _)| k == key)
    }

    /// Keys not yet consumed, in document order.
    pub fn remaining_keys(&self) -> Vec<&str> {
        self.entries.iter().map(|(k, _)| k.as_str()).filter(|k| !self.consumed.contains(*k)).collect()
    }

    /// Pops a key that may be absent.
    pub fn pop_opt(&mut self, key: &str) -> Result<Option<ConfigValue>, ConfigurationError> {
        if self.consumed.contains(key) {
            return Err(self.error(key, format!("key '{key}' was already consumed")));
        }
        let found = self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
        if let Some(value) = &found {
            self.consumed.insert(key.to_string());
            log::info!(target: "textlab::params", "{} = {}", self.key_path(key), value);
        }
        Ok(found)
    }

    /// Pops a key, falling back to `default`; absent key without a default
    /// is a configuration error.
    pub fn pop(&mut self, key: &str, default: Option<ConfigValue>) -> Result<ConfigValue, ConfigurationError> {
        match self.pop_opt(key)? {
            Some(value) => Ok(value),
            None => match default {
                Some(value) => {
                    log::info!(target: "textlab::params", "{} = {} (default)", self.key_path(key), value);
                    self.consumed.insert(key.to_string());
                    Ok(value)
                }
                None => Err(self.error(key, format!("key '{key}' is required{}", located(self.span)))),
            },
        }
    }

    fn typed<T>(
        &mut self,
        key: &str,
        default: Option<T>,
        expected: &str,
        extract: impl Fn(&ConfigValue) -> Option<T>,
        show: impl Fn(&T) -> ConfigValue,
    ) -> Result<T, ConfigurationError> {
        match self.pop_opt(key)? {
            Some(value) => extract(&value)
                .ok_or_else(|| self.error(key, format!("expected {expected}, found {}{}", describe(&value), located(value.span)))),
            None => match default {
                Some(d) => {
                    log::info!(target: "textlab::params", "{} = {} (default)", self.key_path(key), show(&d));
                    self.consumed.insert(key.to_string());
                    Ok(d)
                }
                None => Err(self.error(key, format!("key '{key}' is required{}", located(self.span)))),
            },
        }
    }

    pub fn pop_int(&mut self, key: &str, default: Option<i64>) -> Result<i64, ConfigurationError> {
        self.typed(key, default, "an integer", ConfigValue::as_i64, |v| ConfigValue::number(*v as f64))
    }

    /// A non-negative integer.
    pub fn pop_usize(&mut self, key: &str, default: Option<usize>) -> Result<usize, ConfigurationError> {
        self.typed(
            key,
            default,
            "a non-negative integer",
            |v| v.as_i64().and_then(|i| usize::try_from(i).ok()),
            |v| ConfigValue::number(*v as f64),
        )
    }

    pub fn pop_float(&mut self, key: &str, default: Option<f64>) -> Result<f64, ConfigurationError> {
        self.typed(key, default, "a number", ConfigValue::as_f64, |v| ConfigValue::number(*v))
    }

    pub fn pop_bool(&mut self, key: &str, default: Option<bool>) -> Result<bool, ConfigurationError> {
        self.typed(key, default, "a boolean", ConfigValue::as_bool, |v| ConfigValue::bool(*v))
    }

    pub fn pop_string(&mut self, key: &str, default: Option<&str>) -> Result<String, ConfigurationError> {
        self.typed(key, default.map(str::to_string), "a string", |v| v.as_str().map(str::to_string), |v| ConfigValue::string(v.clone()))
    }

    /// A string restricted to `choices`.
    pub fn pop_choice(&mut self, key: &str, choices: &[&str], default: Option<&str>) -> Result<String, ConfigurationError> {
        let value = self.pop_string(key, default)?;
        if choices.contains(&value.as_str()) {
            Ok(value)
        } else {
            Err(self.error(key, format!("'{value}' is not one of {}", choices.join(", "))))
        }
    }

    pub fn pop_usize_list(&mut self, key: &str, default: Option<Vec<usize>>) -> Result<Vec<usize>, ConfigurationError> {
        self.typed(
            key,
            default,
            "a list of non-negative integers",
            |v| v.as_array()?.iter().map(|x| x.as_i64().and_then(|i| usize::try_from(i).ok())).collect(),
            |v| ConfigValue::array(v.iter().map(|x| ConfigValue::number(*x as f64)).collect()),
        )
    }

    /// A nested object, as its own `Params` with an extended path.
    pub fn pop_params(&mut self, key: &str) -> Result<Params, ConfigurationError> {
        let value = self.pop(key, None)?;
        Params::new(value, self.key_path(key))
    }

    pub fn pop_params_opt(&mut self, key: &str) -> Result<Option<Params>, ConfigurationError> {
        match self.pop_opt(key)? {
            None => Ok(None),
            Some(value) if matches!(value.kind, ValueKind::Null) => Ok(None),
            Some(value) => Params::new(value, self.key_path(key)).map(Some),
        }
    }

    /// A list of nested objects; elements get paths like `embedders.0`.
    pub fn pop_params_list(&mut self, key: &str) -> Result<Vec<Params>, ConfigurationError> {
        let value = self.pop(key, None)?;
        let base = self.key_path(key);
        match value.kind {
            ValueKind::Array(items) => items.into_iter().enumerate().map(|(i, item)| Params::new(item, format!("{base}.{i}"))).collect(),
            _ => Err(ConfigurationError::new(base, format!("expected a list of objects, found {}", value.kind_name()))),
        }
    }

    /// Map from string keys to non-negative integers, e.g. per-namespace
    /// minimum counts.
    pub fn pop_usize_map(&mut self, key: &str) -> Result<Vec<(String, usize)>, ConfigurationError> {
        let Some(mut sub) = self.pop_params_opt(key)? else {
            return Ok(Vec::new());
        };
        let keys: Vec<String> = sub.remaining_keys().into_iter().map(str::to_string).collect();
        keys.into_iter().map(|k| sub.pop_usize(&k, None).map(|v| (k, v))).collect()
    }

    /// Fails listing every key that was never consumed.
    pub fn assert_empty(&self) -> Result<(), ConfigurationError> {
        let leftover = self.remaining_keys();
        if leftover.is_empty() {
            return Ok(());
        }
        let full: Vec<String> = leftover.iter().map(|k| format!("'{}'", self.key_path(k))).collect();
        Err(ConfigurationError::new(
            self.key_path(leftover[0]),
            format!("unexpected key(s) {} (misspelled or unsupported parameter)", full.join(", ")),
        ))
    }
}

fn located(span: Span) -> String {
    if span.is_synthetic() {
        String::new()
    } else {
        format!(" ({span})")
    }
}

fn describe(value: &ConfigValue) -> String {
    match value.kind {
        ValueKind::Number(_) | ValueKind::Bool(_) | ValueKind::Null => format!("{} {}", value.kind_name(), value),
        _ => value.kind_name().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn params(text: &str, path: &str) -> Params {
        Params::new(parse_config(text).unwrap(), path).unwrap()
    }

    #[test]
    fn pop_int_reads_value() {
        let mut p = params(r#"{"hidden_size": 64}"#, "model.encoder");
        assert_eq!(p.pop_int("hidden_size", None).unwrap(), 64);
        p.assert_empty().unwrap();
    }

    #[test]
    fn missing_required_key_names_full_path() {
        let mut p = params("{}", "model.encoder");
        let err = p.pop_int("hidden_size", None).unwrap_err();
        assert_eq!(err.path, "model.encoder.hidden_size");
        assert!(err.to_string().contains("model.encoder.hidden_size"));
        assert!(err.message.contains("required"));
    }

    #[test]
    fn integrality_checked() {
        let mut p = params(r#"{"hidden_size": 64.5}"#, "m");
        let err = p.pop_int("hidden_size", None).unwrap_err();
        assert!(err.message.contains("expected an integer"), "{err}");
        assert!(err.message.contains("64.5"));
        assert!(err.message.contains("line 1"));
        let mut p = params(r#"{"n": -1}"#, "m");
        assert!(p.pop_usize("n", None).is_err());
    }

    #[test]
    fn defaults_apply_and_consume() {
        let mut p = params("{}", "");
        assert_eq!(p.pop_float("lr", Some(0.1)).unwrap(), 0.1);
        assert!(p.pop_bool("flag", Some(true)).unwrap());
        assert_eq!(p.pop_string("name", Some("x")).unwrap(), "x");
        assert_eq!(p.pop_usize_list("w", Some(vec![2, 3])).unwrap(), vec![2, 3]);
        assert_eq!(p.pop("raw", Some(ConfigValue::null())).unwrap(), ConfigValue::null());
        assert!(p.pop_opt("absent").unwrap().is_none());
        let err = p.pop_float("lr", None).unwrap_err();
        assert!(err.message.contains("already consumed"));
    }

    #[test]
    fn key_consumed_at_most_once() {
        let mut p = params(r#"{"a": 1}"#, "x");
        p.pop_int("a", None).unwrap();
        assert!(p.pop_int("a", None).unwrap_err().message.contains("already consumed"));
        assert!(!p.contains("a"));
    }

    #[test]
    fn kind_mismatches() {
        let mut p = params(r#"{"a": "s", "b": 1, "c": [1, "x"], "d": true, "e": {}}"#, "");
        assert!(p.pop_float("a", None).unwrap_err().message.contains("found string"));
        assert!(p.pop_string("b", None).unwrap_err().message.contains("found number 1"));
        assert!(p.pop_usize_list("c", None).is_err());
        assert!(p.pop_int("d", None).unwrap_err().message.contains("boolean true"));
        assert!(p.pop_bool("e", None).unwrap_err().message.contains("object"));
    }

    #[test]
    fn leftover_keys_reported_with_paths() {
        let mut p = params(r#"{"type": "lstm", "hidden_size": 8, "bidirectionall": true}"#, "model.encoder");
        p.pop_string("type", None).unwrap();
        p.pop_usize("hidden_size", None).unwrap();
        let err = p.assert_empty().unwrap_err();
        assert_eq!(err.path, "model.encoder.bidirectionall");
        assert!(err.message.contains("'model.encoder.bidirectionall'"));
    }

    #[test]
    fn nested_params_extend_path() {
        let mut p = params(r#"{"a": {"b": {"c": 1}}, "l": [{"x": 1}, {"y": 2}], "n": null}"#, "root");
        let mut a = p.pop_params("a").unwrap();
        let mut b = a.pop_params("b").unwrap();
        assert_eq!(b.path(), "root.a.b");
        assert_eq!(b.error("c", "bad").path, "root.a.b.c");
        b.pop_int("c", None).unwrap();
        let list = p.pop_params_list("l").unwrap();
        assert_eq!(list[1].path(), "root.l.1");
        assert!(p.pop_params_opt("n").unwrap().is_none());
        assert!(p.pop_params_opt("absent").unwrap().is_none());
    }

    #[test]
    fn nested_params_must_be_objects() {
        let mut p = params(r#"{"a": 3, "l": 4, "m": [1]}"#, "");
        assert_eq!(p.pop_params("a").unwrap_err().path, "a");
        assert!(p.pop_params_list("l").unwrap_err().message.contains("list of objects"));
        assert_eq!(p.pop_params_list("m").unwrap_err().path, "m.0");
    }

    #[test]
    fn choices_and_maps() {
        let mut p = params(r#"{"k": "diff", "bad": "other", "counts": {"tokens": 2, "characters": 1}}"#, "x");
        assert_eq!(p.pop_choice("k", &["concat", "diff"], None).unwrap(), "diff");
        assert!(p.pop_choice("bad", &["concat"], None).unwrap_err().message.contains("not one of"));
        assert_eq!(p.pop_usize_map("counts").unwrap(), vec![("tokens".to_string(), 2), ("characters".to_string(), 1)]);
        assert!(p.pop_usize_map("absent").unwrap().is_empty());
    }

    #[test]
    fn root_must_be_object() {
        let err = Params::root(ConfigValue::number(1.0)).unwrap_err();
        assert!(err.message.contains("expected an object"));
        assert_eq!(err.to_string(), "configuration error: expected an object, found number");
    }
}
