use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::Optimizer;
use crate::archive::{self, write_weights, ModelArchive, BEST_WEIGHTS_FILE, CONFIG_FILE, VOCABULARY_DIR};
use crate::config::{canonical_serialize, ConfigValue};
use crate::data::readers::build_reader;
use crate::data::{index_instance, make_buckets, sequential_batches, DatasetReader, IndexedInstance, Instance, Vocabulary};
use crate::error::{Error, Result};
use crate::models::{build_model, Model};
use crate::registry::{default_registry, BuildContext, ConfigurationError, Params, Registry};
use crate::tensor::{ParamStore, Scope, Tape};

pub const DEFAULT_BATCH_SIZE: usize = 32;
/// Gradients are rescaled so their global L2 norm never exceeds this.
pub const GRAD_CLIP_NORM: f64 = 5.0;
pub const METRICS_FILE: &str = "metrics.json";
pub const LOG_FILE: &str = "stdout.log";

/// The `trainer` section of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub num_epochs: usize,
    pub batch_size: usize,
    pub patience: Option<usize>,
    pub seed: u64,
    /// Still-unbuilt `optimizer` object.
    pub optimizer: ConfigValue,
}

impl TrainerConfig {
    pub fn from_params(mut params: Params) -> Result<Self, ConfigurationError> {
        let num_epochs = params.pop_usize("num_epochs", None)?;
        if num_epochs == 0 {
            return Err(params.error("num_epochs", "must be at least 1"));
        }
        let batch_size = params.pop_usize("batch_size", Some(DEFAULT_BATCH_SIZE))?;
        if batch_size == 0 {
            return Err(params.error("batch_size", "must be at least 1"));
        }
        let patience = match params.pop_opt("patience")? {
            Some(v) if !v.is_null() => {
                let p = v.as_i64().filter(|&p| p >= 1);
                Some(p.ok_or_else(|| params.error("patience", "must be an integer >= 1"))? as usize)
            }
            _ => None,
        };
        let seed = params.pop_int("seed", Some(0))?;
        let seed = u64::try_from(seed).map_err(|_| params.error("seed", "must be non-negative"))?;
        let optimizer = params.pop("optimizer", None)?;
        if !optimizer.is_object() {
            return Err(params.error("optimizer", format!("expected an object, found {}", optimizer.kind_name())));
        }
        params.assert_empty()?;
        Ok(TrainerConfig { num_epochs, batch_size, patience, seed, optimizer })
    }
}

/// Tracks the best value of a higher-is-better metric and counts epochs
/// without improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: Option<usize>,
    best: Option<f64>,
    best_epoch: usize,
    epochs: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: Option<usize>) -> Self {
        EarlyStopping { patience, best: None, best_epoch: 0, epochs: 0, stale: 0 }
    }

    /// Records one epoch's metric; returns whether it is a new best. Only a
    /// strict increase counts as improvement.
    pub fn observe(&mut self, value: f64) -> bool {
        self.epochs += 1;
        if self.best.is_none_or(|b| value > b) {
            self.best = Some(value);
            self.best_epoch = self.epochs;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience.is_some_and(|p| self.stale >= p)
    }

    /// 1-based epoch of the best value so far (0 before any epoch).
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

/// Metrics of one finished epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub training_loss: f64,
    pub training: BTreeMap<String, f64>,
    pub validation_loss: Option<f64>,
    pub validation: Option<BTreeMap<String, f64>>,
}

impl EpochRecord {
    /// Flat map as written to `metrics.json`.
    pub fn to_json(&self) -> Value {
        let mut out = Map::new();
        out.insert("epoch".into(), json!(self.epoch));
        out.insert("training_loss".into(), json!(self.training_loss));
        for (k, v) in &self.training {
            out.insert(format!("training_{k}"), json!(v));
        }
        if let Some(loss) = self.validation_loss {
            out.insert("validation_loss".into(), json!(loss));
        }
        for (k, v) in self.validation.iter().flatten() {
            out.insert(format!("validation_{k}"), json!(v));
        }
        Value::Object(out)
    }

    /// Validation metrics when there were any, else training metrics.
    pub fn selection_metrics(&self) -> &BTreeMap<String, f64> {
        self.validation.as_ref().unwrap_or(&self.training)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub serialization_dir: PathBuf,
    pub archive: PathBuf,
    /// Canonical configuration that was run.
    pub config: String,
    pub metric: String,
    pub best_epoch: usize,
    pub best_metrics: BTreeMap<String, f64>,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }

    pub fn epoch_losses(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.training_loss).collect()
    }

    pub fn best_value(&self) -> f64 {
        self.best_metrics[&self.metric]
    }
}

struct RunLog(File);

impl RunLog {
    fn line(&mut self, message: &str) -> Result<()> {
        log::info!("{message}");
        writeln!(self.0, "{message}").map_err(|e| Error::io("could not write training log", e))
    }
}

/// Metrics and mean per-instance loss of `model` over `instances`, batched in
/// order without shuffling.
pub fn evaluate_instances(
    model: &dyn Model,
    store: &ParamStore,
    instances: &[IndexedInstance],
    batch_size: usize,
) -> Result<(BTreeMap<String, f64>, f64)> {
    let mut metrics = model.new_metrics();
    let mut loss_sum = 0.0;
    for batch in sequential_batches(instances, batch_size)? {
        let tape = Tape::new();
        let out = model.forward(Scope::new(&tape, store), &batch, true)?;
        loss_sum += out.instance_losses.iter().sum::<f64>();
        metrics.update(&out.predictions, &batch)?;
    }
    let mut values = metrics.values();
    let loss = if instances.is_empty() { 0.0 } else { loss_sum / instances.len() as f64 };
    values.insert("loss".into(), loss);
    Ok((values, loss))
}

fn index_all(instances: &[Instance], vocab: &Vocabulary) -> Result<Vec<IndexedInstance>> {
    Ok(instances.iter().map(|i| index_instance(i, vocab)).collect::<Result<_, _>>()?)
}

/// Everything an experiment needs before its first epoch: every key of the
/// configuration has been consumed and every component built.
pub struct Experiment {
    /// Canonical text of the configuration.
    pub config: String,
    pub reader: Box<dyn DatasetReader>,
    pub train_data: Vec<Instance>,
    pub validation_data: Option<Vec<Instance>>,
    pub vocab: Vocabulary,
    pub model: Box<dyn Model>,
    pub store: ParamStore,
    pub optimizer: Box<dyn Optimizer>,
    pub trainer: TrainerConfig,
}

/// Resolves a configuration into an [`Experiment`]. Any configuration error
/// surfaces here, before anything is written.
pub fn prepare(registry: &Registry, config: &ConfigValue) -> Result<Experiment> {
    let canonical = canonical_serialize(config);
    let mut root = Params::root(config.clone())?;
    let reader = build_reader(registry, root.pop_params("dataset_reader")?)?;
    let train_path = root.pop_string("train_data_path", None)?;
    let validation_path = match root.pop_opt("validation_data_path")? {
        Some(v) if !v.is_null() => {
            Some(v.as_str().map(str::to_string).ok_or_else(|| root.error("validation_data_path", "expected a string"))?)
        }
        _ => None,
    };
    let min_count: BTreeMap<String, usize> = match root.pop_params_opt("vocabulary")? {
        Some(mut vocab_params) => {
            let counts = vocab_params.pop_usize_map("min_count")?;
            vocab_params.assert_empty()?;
            counts.into_iter().collect()
        }
        None => BTreeMap::new(),
    };
    let model_params = root.pop_params("model")?;
    let trainer = TrainerConfig::from_params(root.pop_params("trainer")?)?;
    root.assert_empty()?;

    let train_data = reader.read(Path::new(&train_path))?;
    let validation_data = validation_path.as_ref().map(|p| reader.read(Path::new(p))).transpose()?;
    let vocab = Vocabulary::from_instances(train_data.iter().chain(validation_data.iter().flatten()), &min_count);

    let mut rng = ChaCha8Rng::seed_from_u64(trainer.seed);
    let mut store = ParamStore::new();
    let model = build_model(registry, model_params, &vocab, &mut store, &mut rng)?;
    if model.task() != reader.task() {
        return Err(ConfigurationError::new(
            "model.type",
            format!("model handles task '{}' but the dataset_reader produces '{}'", model.task(), reader.task()),
        )
        .into());
    }
    let optimizer = {
        let mut scratch = ParamStore::new();
        let mut ctx = BuildContext { registry, vocab: &vocab, params: &mut scratch, rng: &mut rng };
        ctx.build::<dyn Optimizer>(Params::new(trainer.optimizer.clone(), "trainer.optimizer")?)?
    };
    Ok(Experiment { config: canonical, reader, train_data, validation_data, vocab, model, store, optimizer, trainer })
}

/// Runs an experiment with the built-in registry.
pub fn train(config: &ConfigValue, serialization_dir: &Path) -> Result<TrainOutcome> {
    train_with(default_registry(), config, serialization_dir)
}

/// Runs an experiment, writing everything it produces under
/// `serialization_dir`, and packs the best epoch's weights into
/// `model.tar.gz` there.
pub fn train_with(registry: &Registry, config: &ConfigValue, serialization_dir: &Path) -> Result<TrainOutcome> {
    let Experiment { config: canonical, reader, train_data, validation_data, vocab, model, mut store, mut optimizer, trainer } =
        prepare(registry, config)?;

    fs::create_dir_all(serialization_dir).map_err(|e| Error::io_path("create", serialization_dir, e))?;
    fs::write(serialization_dir.join(CONFIG_FILE), &canonical).map_err(|e| Error::io_path("write", serialization_dir, e))?;
    let log_path = serialization_dir.join(LOG_FILE);
    let mut log = RunLog(File::create(&log_path).map_err(|e| Error::io_path("create", &log_path, e))?);
    log.line("configuration:")?;
    log.line(&canonical)?;
    log.line(&format!("read {} training and {} validation instances", train_data.len(), validation_data.as_ref().map_or(0, Vec::len)))?;
    log.line(&format!("model has {} parameters in {} tensors", store.num_scalars(), store.len()))?;

    let train_indexed = index_all(&train_data, &vocab)?;
    let validation_indexed = validation_data.as_ref().map(|d| index_all(d, &vocab)).transpose()?;
    vocab.save(&serialization_dir.join(VOCABULARY_DIR))?;

    let metric = model.validation_metric().to_string();
    let mut stopping = EarlyStopping::new(trainer.patience);
    let mut history: Vec<EpochRecord> = Vec::new();
    for epoch in 1..=trainer.num_epochs {
        let batches = make_buckets(&train_indexed, trainer.batch_size, reader.sort_field(), trainer.seed.wrapping_add(epoch as u64))?;
        let mut metrics = model.new_metrics();
        let mut loss_sum = 0.0;
        for batch in &batches {
            let tape = Tape::new();
            let out = model.forward(Scope::new(&tape, &store), batch, true)?;
            let loss = out.loss.expect("loss requested");
            let grads = tape.backward(loss)?;
            loss_sum += out.instance_losses.iter().sum::<f64>();
            metrics.update(&out.predictions, batch)?;
            drop(out);
            store.zero_grad();
            grads.accumulate_into(&mut store);
            store.clip_grad_norm(GRAD_CLIP_NORM);
            optimizer.step(&mut store);
        }
        let training_loss = loss_sum / train_indexed.len().max(1) as f64;
        let (validation, validation_loss) = match &validation_indexed {
            Some(v) => {
                let (m, l) = evaluate_instances(model.as_ref(), &store, v, trainer.batch_size)?;
                (Some(m), Some(l))
            }
            None => (None, None),
        };
        let record = EpochRecord { epoch, training_loss, training: metrics.values(), validation_loss, validation };
        write_weights(&serialization_dir.join(format!("weights_epoch_{epoch}.bin")), &store)?;
        let value = record.selection_metrics().get(&metric).copied().unwrap_or(f64::NAN);
        if stopping.observe(value) {
            write_weights(&serialization_dir.join(BEST_WEIGHTS_FILE), &store)?;
        }
        log.line(&format!("epoch {epoch}: {}", record.to_json()))?;
        history.push(record);
        let all: Vec<Value> = history.iter().map(EpochRecord::to_json).collect();
        let metrics_path = serialization_dir.join(METRICS_FILE);
        fs::write(&metrics_path, serde_json::to_string_pretty(&all).expect("json"))
            .map_err(|e| Error::io_path("write", &metrics_path, e))?;
        if stopping.should_stop() {
            log.line(&format!("no improvement in {metric} for {} epochs; stopping", trainer.patience.unwrap_or(0)))?;
            break;
        }
    }
    let best_epoch = stopping.best_epoch().max(1);
    let best_metrics = history[best_epoch - 1].selection_metrics().clone();
    log.line(&format!("best epoch {best_epoch}: {metric} = {}", best_metrics.get(&metric).copied().unwrap_or(f64::NAN)))?;
    let archive = archive::write_archive(serialization_dir)?;
    Ok(TrainOutcome {
        serialization_dir: serialization_dir.to_path_buf(),
        archive,
        config: canonical,
        metric,
        best_epoch,
        best_metrics,
        history,
    })
}

/// Metrics of an archived model over a labelled data file.
pub fn evaluate(archive_path: &Path, data_path: &Path) -> Result<BTreeMap<String, f64>> {
    let loaded = ModelArchive::read(archive_path)?.load_model()?;
    let instances = loaded.reader.read(data_path)?;
    let indexed = index_all(&instances, &loaded.vocab)?;
    Ok(evaluate_instances(loaded.model.as_ref(), &loaded.store, &indexed, loaded.batch_size)?.0)
}
