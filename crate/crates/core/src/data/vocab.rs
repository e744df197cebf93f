use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::{DataError, Field, Instance};

pub const PADDING_TOKEN: &str = "@@PADDING@@";
pub const UNKNOWN_TOKEN: &str = "@@UNKNOWN@@";
pub const TOKENS: &str = "tokens";
pub const CHARACTERS: &str = "characters";

/// Label namespaces hold closed label sets: no padding, no unknown entry.
pub fn is_label_namespace(name: &str) -> bool {
    name.ends_with("_labels")
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Namespace {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Namespace {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Namespace { tokens, index }
    }

    fn reserved() -> Self {
        Self::from_tokens(vec![PADDING_TOKEN.to_string(), UNKNOWN_TOKEN.to_string()])
    }
}

/// Per-namespace bidirectional token/id mappings.
///
/// Non-label namespaces reserve id 0 for padding and id 1 for unknown tokens.
/// Remaining entries are ordered by descending count, ties broken
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    namespaces: BTreeMap<String, Namespace>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary::default()
    }

    /// Builds from raw counts. Namespaces absent from `min_count` keep every
    /// token seen at least once.
    pub fn from_counts(counts: &BTreeMap<String, BTreeMap<String, usize>>, min_count: &BTreeMap<String, usize>) -> Self {
        let mut namespaces = BTreeMap::new();
        for (ns, tokens) in counts {
            let threshold = min_count.get(ns).copied().unwrap_or(1).max(1);
            let mut kept: Vec<(&String, usize)> = tokens.iter().filter(|(_, &c)| c >= threshold).map(|(t, &c)| (t, c)).collect();
            kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            let mut list = if is_label_namespace(ns) { Vec::new() } else { vec![PADDING_TOKEN.to_string(), UNKNOWN_TOKEN.to_string()] };
            list.extend(kept.into_iter().map(|(t, _)| t.clone()).filter(|t| t != PADDING_TOKEN && t != UNKNOWN_TOKEN));
            namespaces.insert(ns.clone(), Namespace::from_tokens(list));
        }
        for ns in [TOKENS, CHARACTERS] {
            namespaces.entry(ns.to_string()).or_insert_with(Namespace::reserved);
        }
        Vocabulary { namespaces }
    }

    /// Counts word tokens, characters and labels across instances.
    pub fn from_instances<'a>(instances: impl IntoIterator<Item = &'a Instance>, min_count: &BTreeMap<String, usize>) -> Self {
        Self::from_counts(&count_instances(instances), min_count)
    }

    pub fn namespaces(&self) -> impl Iterator<Item = &str> {
        self.namespaces.keys().map(String::as_str)
    }

    /// Number of ids in a namespace. Unseen non-label namespaces still have
    /// their two reserved entries.
    pub fn size(&self, namespace: &str) -> usize {
        match self.namespaces.get(namespace) {
            Some(ns) => ns.tokens.len(),
            None if is_label_namespace(namespace) => 0,
            None => 2,
        }
    }

    pub fn token_to_id(&self, namespace: &str, token: &str) -> Option<usize> {
        self.namespaces.get(namespace).and_then(|ns| ns.index.get(token).copied())
    }

    /// Id of a token, mapping unseen tokens to the unknown id in non-label
    /// namespaces.
    pub fn index_token(&self, namespace: &str, token: &str) -> Option<usize> {
        match self.token_to_id(namespace, token) {
            Some(id) => Some(id),
            None if is_label_namespace(namespace) => None,
            None => Some(1),
        }
    }

    pub fn id_to_token(&self, namespace: &str, id: usize) -> Option<&str> {
        match self.namespaces.get(namespace) {
            Some(ns) => ns.tokens.get(id).map(String::as_str),
            None if !is_label_namespace(namespace) => [PADDING_TOKEN, UNKNOWN_TOKEN].get(id).copied(),
            None => None,
        }
    }

    /// All entries of a namespace in id order.
    pub fn tokens(&self, namespace: &str) -> Vec<&str> {
        (0..self.size(namespace)).filter_map(|i| self.id_to_token(namespace, i)).collect()
    }

    /// `(namespace, file body)` pairs, one entry per line in id order.
    pub fn to_files(&self) -> Result<Vec<(String, String)>, DataError> {
        let mut out = Vec::new();
        for (name, ns) in &self.namespaces {
            if name.is_empty() || name.contains(['/', '\\', '\n']) || name.starts_with('.') {
                return Err(DataError::Vocabulary(format!("namespace name '{name}' cannot be used as a file name")));
            }
            if let Some(bad) = ns.tokens.iter().find(|t| t.is_empty() || t.contains(['\n', '\r'])) {
                return Err(DataError::Vocabulary(format!("entry {bad:?} in '{name}' cannot be written one per line")));
            }
            let body: String = ns.tokens.iter().map(|t| format!("{t}\n")).collect();
            out.push((name.clone(), body));
        }
        Ok(out)
    }

    /// Inverse of [`Vocabulary::to_files`].
    pub fn from_files(files: impl IntoIterator<Item = (String, String)>) -> Result<Self, DataError> {
        let mut namespaces = BTreeMap::new();
        for (name, text) in files {
            let tokens: Vec<String> = text.lines().map(str::to_string).collect();
            if !is_label_namespace(&name) && (tokens.len() < 2 || tokens[0] != PADDING_TOKEN || tokens[1] != UNKNOWN_TOKEN) {
                return Err(DataError::Vocabulary(format!("namespace '{name}' must start with {PADDING_TOKEN} and {UNKNOWN_TOKEN}")));
            }
            namespaces.insert(name, Namespace::from_tokens(tokens));
        }
        Ok(Vocabulary { namespaces })
    }

    /// Writes `<dir>/<namespace>.txt` for every namespace.
    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        let files = self.to_files()?;
        fs::create_dir_all(dir).map_err(io_error(dir))?;
        for (name, body) in files {
            let path = dir.join(format!("{name}.txt"));
            fs::write(&path, body).map_err(io_error(&path))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(io_error(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        let mut files = Vec::new();
        for path in paths {
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            files.push((name, fs::read_to_string(&path).map_err(io_error(&path))?));
        }
        Self::from_files(files)
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> DataError {
    let path = path.display().to_string();
    move |source| DataError::Io { path, source }
}

fn count_instances<'a>(instances: impl IntoIterator<Item = &'a Instance>) -> BTreeMap<String, BTreeMap<String, usize>> {
    let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut bump = |ns: &str, token: String| *counts.entry(ns.to_string()).or_default().entry(token).or_default() += 1;
    for instance in instances {
        for field in instance.fields().values() {
            match field {
                Field::Text(text) => {
                    for token in &text.tokens {
                        bump(TOKENS, token.text().to_string());
                        token.chars().for_each(|c| bump(CHARACTERS, c.to_string()));
                    }
                }
                Field::Label(label) => bump(&label.namespace, label.label.clone()),
                Field::SequenceLabel(tags) => tags.tags.iter().for_each(|t| bump(&tags.namespace, t.clone())),
                _ => {}
            }
        }
    }
    counts
}
