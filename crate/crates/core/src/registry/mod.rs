//! String-to-component resolution.
//!
//! Each abstraction (token embedder, seq2seq encoder, model, ...) is a trait
//! object type implementing [`Abstraction`]. A [`Registry`] maps
//! `(abstraction, name)` pairs to factories; [`Registry::instantiate`] pops the
//! `type` key from a [`Params`] object, dispatches to the factory, and insists
//! that the factory consumed every other key.

mod params;

use std::any::Any;
use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use rand_chacha::ChaCha8Rng;

pub use params::{ConfigurationError, Params};

use crate::data::Vocabulary;
use crate::tensor::ParamStore;

/// A family of interchangeable components selected by a config `type` key.
pub trait Abstraction {
    const NAME: &'static str;
}

/// Builds a component from its (already `type`-stripped) parameters.
pub type Factory<T> = fn(&mut Params, &mut BuildContext<'_>) -> Result<Box<T>, ConfigurationError>;

/// Everything a factory may draw on besides its own parameters.
pub struct BuildContext<'a> {
    pub registry: &'a Registry,
    pub vocab: &'a Vocabulary,
    /// New parameter tensors are registered here.
    pub params: &'a mut ParamStore,
    /// Seeded source for parameter initialization.
    pub rng: &'a mut ChaCha8Rng,
}

impl BuildContext<'_> {
    /// Instantiates a nested component through the same registry.
    pub fn build<T: Abstraction + ?Sized + 'static>(&mut self, params: Params) -> Result<Box<T>, ConfigurationError> {
        let registry = self.registry;
        registry.instantiate::<T>(params, self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistrationError {
    #[error("'{name}' is already registered as a {abstraction}")]
    Duplicate { abstraction: String, name: String },
    #[error("cannot register an empty name for {abstraction}")]
    EmptyName { abstraction: String },
}

#[derive(Default)]
pub struct Registry {
    entries: BTreeMap<(String, String), Box<dyn Any + Send + Sync>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding every built-in component.
    pub fn with_builtins() -> Self {
        let mut registry = Registry::new();
        for register in BUILTIN_MANIFEST {
            register(&mut registry).expect("built-in manifest has no duplicate names");
        }
        registry
    }

    pub fn register<T: Abstraction + ?Sized + 'static>(&mut self, name: &str, factory: Factory<T>) -> Result<(), RegistrationError> {
        if name.is_empty() {
            return Err(RegistrationError::EmptyName { abstraction: T::NAME.to_string() });
        }
        let key = (T::NAME.to_string(), name.to_string());
        if self.entries.contains_key(&key) {
            return Err(RegistrationError::Duplicate { abstraction: key.0, name: key.1 });
        }
        self.entries.insert(key, Box::new(factory));
        Ok(())
    }

    pub fn contains(&self, abstraction: &str, name: &str) -> bool {
        self.entries.contains_key(&(abstraction.to_string(), name.to_string()))
    }

    /// Names registered under one abstraction, sorted.
    pub fn names(&self, abstraction: &str) -> Vec<&str> {
        self.entries.keys().filter(|(a, _)| a == abstraction).map(|(_, n)| n.as_str()).collect()
    }

    pub fn factory<T: Abstraction + ?Sized + 'static>(&self, name: &str) -> Option<Factory<T>> {
        self.entries.get(&(T::NAME.to_string(), name.to_string()))?.downcast_ref::<Factory<T>>().copied()
    }

    /// Pops `type`, runs the matching factory, then checks for leftover keys.
    pub fn instantiate<T: Abstraction + ?Sized + 'static>(
        &self,
        mut params: Params,
        ctx: &mut BuildContext<'_>,
    ) -> Result<Box<T>, ConfigurationError> {
        if !params.contains("type") {
            return Err(params.error("type", "key 'type' is required"));
        }
        let name = params.pop_string("type", None)?;
        let factory = self.factory::<T>(&name).ok_or_else(|| {
            let known = self.names(T::NAME);
            params.error(
                "type",
                format!(
                    "unknown {} type '{}'; registered: {}",
                    T::NAME,
                    name,
                    if known.is_empty() { "(none)".to_string() } else { known.join(", ") }
                ),
            )
        })?;
        let component = factory(&mut params, ctx)?;
        params.assert_empty()?;
        Ok(component)
    }
}

type Registration = fn(&mut Registry) -> Result<(), RegistrationError>;

const BUILTIN_MANIFEST: &[Registration] =
    &[crate::data::register_builtins, crate::nn::register_builtins, crate::models::register_builtins, crate::training::register_builtins];

static DEFAULT: Lazy<Registry> = Lazy::new(Registry::with_builtins);

/// The process-wide registry of built-in components, frozen after first use.
pub fn default_registry() -> &'static Registry {
    &DEFAULT
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::nn::{Seq2SeqEncoder, Seq2VecEncoder};
    use rand::SeedableRng;

    fn with_context<R>(registry: &Registry, f: impl FnOnce(&mut BuildContext<'_>) -> R) -> R {
        let vocab = Vocabulary::default();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = BuildContext { registry, vocab: &vocab, params: &mut store, rng: &mut rng };
        f(&mut ctx)
    }

    fn params(text: &str) -> Params {
        Params::new(parse_config(text).unwrap(), "model.encoder").unwrap()
    }

    #[test]
    fn register_then_resolve() {
        let mut registry = Registry::new();
        let mean = default_registry().factory::<dyn Seq2VecEncoder>("mean_pooler").unwrap();
        registry.register::<dyn Seq2VecEncoder>("mean_pooler", mean).unwrap();
        let enc = with_context(&registry, |ctx| ctx.build::<dyn Seq2VecEncoder>(params(r#"{"type": "mean_pooler"}"#))).unwrap();
        assert_eq!(enc.output_dim(5), 5);
    }

    #[test]
    fn duplicate_registration_fails() {
        let mut registry = Registry::new();
        let mean = default_registry().factory::<dyn Seq2VecEncoder>("mean_pooler").unwrap();
        registry.register::<dyn Seq2VecEncoder>("mean_pooler", mean).unwrap();
        let err = registry.register::<dyn Seq2VecEncoder>("mean_pooler", mean).unwrap_err();
        assert_eq!(err, RegistrationError::Duplicate { abstraction: "seq2vec_encoder".into(), name: "mean_pooler".into() });
        assert!(matches!(registry.register::<dyn Seq2VecEncoder>("", mean), Err(RegistrationError::EmptyName { .. })));
    }

    #[test]
    fn namespaces_are_independent() {
        let mut registry = Registry::new();
        let gru = default_registry().factory::<dyn Seq2SeqEncoder>("gru").unwrap();
        registry.register::<dyn Seq2SeqEncoder>("gru", gru).unwrap();
        assert!(registry.contains("seq2seq_encoder", "gru"));
        assert!(!registry.contains("seq2vec_encoder", "gru"));
        let err = with_context(&registry, |ctx| ctx.build::<dyn Seq2VecEncoder>(params(r#"{"type": "gru"}"#))).err().unwrap();
        assert!(err.message.contains("unknown seq2vec_encoder type 'gru'"), "{err}");
        assert!(err.message.contains("(none)"));
    }

    #[test]
    fn unknown_type_lists_registered_names() {
        let err =
            with_context(default_registry(), |ctx| ctx.build::<dyn Seq2SeqEncoder>(params(r#"{"type": "transformer"}"#))).err().unwrap();
        assert_eq!(err.path, "model.encoder.type");
        assert!(err.message.contains("gru, lstm, rnn"), "{err}");
    }

    #[test]
    fn missing_type() {
        let err = with_context(default_registry(), |ctx| ctx.build::<dyn Seq2VecEncoder>(params("{}"))).err().unwrap();
        assert_eq!(err.path, "model.encoder.type");
        assert!(err.message.contains("key 'type' is required"));
    }

    #[test]
    fn misspelled_key_is_reported() {
        let err = with_context(default_registry(), |ctx| {
            ctx.build::<dyn Seq2SeqEncoder>(params(r#"{"type": "lstm", "input_dim": 4, "hidden_size": 8, "bidirectionall": true}"#))
        })
        .err()
        .unwrap();
        assert!(err.to_string().contains("model.encoder.bidirectionall"), "{err}");
    }

    #[test]
    fn builtin_names() {
        let r = default_registry();
        assert_eq!(r.names("token_embedder"), vec!["character_cnn", "concat", "embedding"]);
        assert_eq!(r.names("seq2seq_encoder"), vec!["gru", "lstm", "rnn"]);
        assert_eq!(r.names("seq2vec_encoder"), vec!["cnn", "final_state", "max_pooler", "mean_pooler"]);
        assert_eq!(r.names("span_extractor"), vec!["endpoint"]);
        assert_eq!(r.names("model"), vec!["classifier", "pair_classifier", "span_selector", "tagger"]);
        assert_eq!(r.names("optimizer"), vec!["adam", "sgd"]);
        assert_eq!(r.names("dataset_reader"), vec!["classification", "pair_classification", "span_selection", "tagging"]);
    }

    #[test]
    fn lookups_are_pure() {
        let a = default_registry().factory::<dyn Seq2SeqEncoder>("lstm").unwrap();
        let b = default_registry().factory::<dyn Seq2SeqEncoder>("lstm").unwrap();
        assert!(std::ptr::fn_addr_eq(a, b));
    }
}
