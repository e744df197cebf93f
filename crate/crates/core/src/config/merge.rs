use super::{ConfigValue, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MergeError {
    #[error("overrides must be an object, found {0}")]
    NotAnObject(&'static str),
    #[error("override path '{path}' traverses a {found} in the base config")]
    TraversesNonObject { path: String, found: &'static str },
    #[error("override key '{0}' has an empty path segment")]
    EmptySegment(String),
}

/// Deep-merges `overrides` into `base`.
///
/// Keys of `overrides` may be dotted paths (`"trainer.num_epochs"`), which are
/// expanded to nested objects first. Objects merge recursively; every other
/// override value replaces what was in `base`.
pub fn merge_overrides(base: &ConfigValue, overrides: &ConfigValue) -> Result<ConfigValue, MergeError> {
    if !base.is_object() {
        return Err(MergeError::NotAnObject(base.kind_name()));
    }
    let expanded = expand_dotted(overrides)?;
    let mut merged = base.clone();
    merge_into(&mut merged, expanded, "")?;
    Ok(merged)
}

fn expand_dotted(value: &ConfigValue) -> Result<ConfigValue, MergeError> {
    let entries = value.as_object().ok_or(MergeError::NotAnObject(value.kind_name()))?;
    let mut out = ConfigValue::with_span(ValueKind::Object(Vec::new()), value.span);
    for (key, child) in entries {
        if key.split('.').any(str::is_empty) {
            return Err(MergeError::EmptySegment(key.clone()));
        }
        let child = if child.is_object() { expand_dotted(child)? } else { child.clone() };
        let nested = key.rsplit('.').fold(child, |acc, segment| ConfigValue::object([(segment, acc)]));
        merge_into(&mut out, nested, "")?;
    }
    Ok(out)
}

fn merge_into(target: &mut ConfigValue, source: ConfigValue, prefix: &str) -> Result<(), MergeError> {
    let ValueKind::Object(source_entries) = source.kind else {
        unreachable!("merge_into is only called with object sources");
    };
    let target_entries = target.as_object_mut().expect("merge target is an object");
    for (key, value) in source_entries {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match target_entries.iter_mut().find(|(k, _)| *k == key) {
            None => target_entries.push((key, value)),
            Some((_, existing)) if value.is_object() => match existing.kind {
                ValueKind::Object(_) => merge_into(existing, value, &path)?,
                ValueKind::Null => *existing = value,
                _ => return Err(MergeError::TraversesNonObject { path, found: existing.kind_name() }),
            },
            Some((_, existing)) => *existing = value,
        }
    }
    Ok(())
}
