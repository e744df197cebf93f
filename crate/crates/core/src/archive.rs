//! Weight files and packed model archives.
//!
//! A weight file is `NLPW`, a little-endian `u32` format version and a `u32`
//! tensor count, followed per tensor by a `u16` name length, the UTF-8 name, a
//! `u8` rank, one `u32` per dimension and the row-major data as `f64`s.
//!
//! A model archive is a gzip-compressed tar holding `config.json`,
//! `vocabulary/<namespace>.txt` and `weights_best.bin`. Archives are written
//! with zeroed timestamps and sorted entries so identical runs produce
//! identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::{Compression, GzBuilder};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_config, ConfigValue, ValueKind};
use crate::data::readers::build_reader;
use crate::data::{DatasetReader, Vocabulary};
use crate::error::{Error, Result};
use crate::models::{build_model, Model};
use crate::registry::{default_registry, Params, Registry};
use crate::tensor::{ParamStore, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"NLPW";
pub const WEIGHTS_VERSION: u32 = 1;

pub const CONFIG_FILE: &str = "config.json";
pub const VOCABULARY_DIR: &str = "vocabulary";
pub const BEST_WEIGHTS_FILE: &str = "weights_best.bin";
pub const ARCHIVE_FILE: &str = "model.tar.gz";

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("not a weight file: expected magic bytes \"NLPW\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported weight format version {0} (expected {WEIGHTS_VERSION})")]
    UnsupportedVersion(u32),
    #[error("weight file truncated in tensor '{tensor}'")]
    Truncated { tensor: String },
    #[error("corrupt weight file: {0}")]
    Corrupt(String),
    #[error("archive has no '{0}'")]
    Missing(String),
    #[error("weights do not match the model: {0}")]
    Mismatch(String),
    #[error("could not read archive '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError {
    let path = path.display().to_string();
    move |source| ArchiveError::Io { path, source }
}

/// Serializes named tensors in the given order.
pub fn encode_weights<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.rank() as u8);
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for x in tensor.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, tensor: &str) -> Result<&'a [u8], ArchiveError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ArchiveError::Truncated { tensor: tensor.to_string() })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, tensor: &str) -> Result<u32, ArchiveError> {
        Ok(u32::from_le_bytes(self.take(4, tensor)?.try_into().expect("4 bytes")))
    }
}

/// Parses a weight file, checking magic and version before anything else.
pub fn decode_weights(bytes: &[u8]) -> Result<Vec<(String, Tensor)>, ArchiveError> {
    if bytes.len() < 4 || &bytes[..4] != WEIGHTS_MAGIC {
        return Err(ArchiveError::BadMagic { found: bytes[..bytes.len().min(4)].to_vec() });
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let header = "(header)";
    let version = cur.u32(header)?;
    if version != WEIGHTS_VERSION {
        return Err(ArchiveError::UnsupportedVersion(version));
    }
    let count = cur.u32(header)?;
    let mut out = Vec::new();
    for i in 0..count {
        let placeholder = format!("#{i}");
        let len = u16::from_le_bytes(cur.take(2, &placeholder)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(cur.take(len, &placeholder)?)
            .map_err(|_| ArchiveError::Corrupt(format!("tensor {placeholder} has a non-UTF-8 name")))?
            .to_string();
        let rank = cur.take(1, &name)?[0] as usize;
        let shape = (0..rank).map(|_| cur.u32(&name).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let numel = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let bytes_needed = numel.and_then(|n| n.checked_mul(8)).ok_or_else(|| ArchiveError::Truncated { tensor: name.clone() })?;
        let data = cur.take(bytes_needed, &name)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let tensor = Tensor::new(shape, data).map_err(|e| ArchiveError::Corrupt(e.to_string()))?;
        out.push((name, tensor));
    }
    if cur.pos != bytes.len() {
        return Err(ArchiveError::Corrupt(format!("{} unexpected trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(out)
}

pub fn write_weights(path: &Path, store: &ParamStore) -> Result<(), ArchiveError> {
    fs::write(path, encode_weights(store.named_values())).map_err(io(path))
}

pub fn read_weights(path: &Path) -> Result<Vec<(String, Tensor)>, ArchiveError> {
    decode_weights(&fs::read(path).map_err(io(path))?)
}

/// Copies weights into a store whose parameter names and shapes must match
/// exactly.
pub fn load_weights_into(store: &mut ParamStore, weights: &[(String, Tensor)]) -> Result<(), ArchiveError> {
    if weights.len() != store.len() {
        return Err(ArchiveError::Mismatch(format!("{} tensors for a model with {} parameters", weights.len(), store.len())));
    }
    for (name, tensor) in weights {
        let id = store.id(name).ok_or_else(|| ArchiveError::Mismatch(format!("unknown parameter '{name}'")))?;
        store
            .set_value(id, tensor.clone())
            .map_err(|_| ArchiveError::Mismatch(format!("parameter '{name}' has shape {:?}", tensor.shape())))?;
    }
    Ok(())
}

/// The contents of a packed model archive.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    /// Canonical configuration text, exactly as recorded at training time.
    pub config: String,
    pub vocab: Vocabulary,
    pub weights: Vec<(String, Tensor)>,
}

/// A model rebuilt from an archive, ready for evaluation or prediction.
pub struct LoadedModel {
    pub config: String,
    pub model_type: String,
    pub reader: Box<dyn DatasetReader>,
    pub model: Box<dyn Model>,
    pub store: ParamStore,
    pub vocab: Vocabulary,
    pub batch_size: usize,
}

fn tar_entry(builder: &mut tar::Builder<impl Write>, path: &str, data: &[u8]) -> std::io::Result<()> {
    let mut header = tar::Header::new_gnu();
    header.set_size(data.len() as u64);
    header.set_mode(0o644);
    header.set_mtime(0);
    header.set_uid(0);
    header.set_gid(0);
    header.set_cksum();
    builder.append_data(&mut header, path, data)
}

fn strip_pretrained(value: &mut ConfigValue) {
    match &mut value.kind {
        ValueKind::Object(entries) => {
            entries.retain(|(k, _)| k != "pretrained_file");
            entries.iter_mut().for_each(|(_, v)| strip_pretrained(v));
        }
        ValueKind::Array(items) => items.iter_mut().for_each(strip_pretrained),
        _ => {}
    }
}

impl ModelArchive {
    /// Collects `config.json`, `vocabulary/` and `weights_best.bin` from a
    /// serialization directory.
    pub fn from_serialization_dir(dir: &Path) -> Result<Self> {
        let weights = read_weights(&dir.join(BEST_WEIGHTS_FILE))?;
        let config_path = dir.join(CONFIG_FILE);
        let config = fs::read_to_string(&config_path).map_err(io(&config_path))?;
        let vocab = Vocabulary::load(&dir.join(VOCABULARY_DIR))?;
        Ok(ModelArchive { config, vocab, weights })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let files = self.vocab.to_files()?;
        let wrap = |e: std::io::Error| Error::io("could not pack archive", e);
        let encoder = GzBuilder::new().mtime(0).write(Vec::new(), Compression::default());
        let mut builder = tar::Builder::new(encoder);
        tar_entry(&mut builder, CONFIG_FILE, self.config.as_bytes()).map_err(wrap)?;
        for (name, body) in &files {
            tar_entry(&mut builder, &format!("{VOCABULARY_DIR}/{name}.txt"), body.as_bytes()).map_err(wrap)?;
        }
        let weights = encode_weights(self.weights.iter().map(|(n, t)| (n.as_str(), t)));
        tar_entry(&mut builder, BEST_WEIGHTS_FILE, &weights).map_err(wrap)?;
        builder.into_inner().and_then(|gz| gz.finish()).map_err(wrap)
    }

    /// Unpacks an archive. The weight file is decoded (and its magic and
    /// version checked) before the configuration or vocabulary is touched.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let corrupt = |e: std::io::Error| ArchiveError::Corrupt(format!("not a gzip-compressed tar archive: {e}"));
        let mut archive = tar::Archive::new(GzDecoder::new(bytes));
        for entry in archive.entries().map_err(corrupt)? {
            let mut entry = entry.map_err(corrupt)?;
            let path = entry.path().map_err(corrupt)?.to_string_lossy().into_owned();
            let mut data = Vec::new();
            entry.read_to_end(&mut data).map_err(corrupt)?;
            entries.insert(path, data);
        }
        let take = |name: &str| entries.get(name).ok_or_else(|| ArchiveError::Missing(name.to_string()));
        let weights = decode_weights(take(BEST_WEIGHTS_FILE)?)?;
        let config =
            String::from_utf8(take(CONFIG_FILE)?.clone()).map_err(|_| ArchiveError::Corrupt(format!("{CONFIG_FILE} is not UTF-8")))?;
        let prefix = format!("{VOCABULARY_DIR}/");
        let mut files = Vec::new();
        for (path, data) in &entries {
            if let Some(name) = path.strip_prefix(&prefix).and_then(|n| n.strip_suffix(".txt")) {
                let text = String::from_utf8(data.clone()).map_err(|_| ArchiveError::Corrupt(format!("{path} is not UTF-8")))?;
                files.push((name.to_string(), text));
            }
        }
        if files.is_empty() {
            return Err(ArchiveError::Missing(prefix).into());
        }
        Ok(ModelArchive { config, vocab: Vocabulary::from_files(files)?, weights })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| io(path)(e).into())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(io(path))?)
    }

    pub fn load_model(&self) -> Result<LoadedModel> {
        self.load_model_with(default_registry())
    }

    /// Rebuilds reader and model from the recorded configuration and loads
    /// the stored weights into them.
    pub fn load_model_with(&self, registry: &Registry) -> Result<LoadedModel> {
        let config = parse_config(&self.config)?;
        let mut root = Params::root(config.clone())?;
        let reader = build_reader(registry, root.pop_params("dataset_reader")?)?;
        let mut model_config = root.pop("model", None)?;
        strip_pretrained(&mut model_config);
        let model_type = model_config.get("type").and_then(ConfigValue::as_str).unwrap_or_default().to_string();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = build_model(registry, Params::new(model_config, "model")?, &self.vocab, &mut store, &mut rng)?;
        load_weights_into(&mut store, &self.weights)?;
        let batch_size = config
            .get_path("trainer.batch_size")
            .and_then(ConfigValue::as_i64)
            .and_then(|b| usize::try_from(b).ok())
            .filter(|&b| b > 0)
            .unwrap_or(crate::training::DEFAULT_BATCH_SIZE);
        Ok(LoadedModel { config: self.config.clone(), model_type, reader, model, store, vocab: self.vocab.clone(), batch_size })
    }
}

/// Packs a finished serialization directory into `<dir>/model.tar.gz`.
pub fn write_archive(dir: &Path) -> Result<PathBuf> {
    let path = dir.join(ARCHIVE_FILE);
    ModelArchive::from_serialization_dir(dir)?.write(&path)?;
    Ok(path)
}

pub fn read_archive(path: &Path) -> Result<ModelArchive> {
    ModelArchive::read(path)
}
