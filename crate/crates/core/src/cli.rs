//! The `textlab` command line.
//!
//! ```text
//! textlab train <config> -s <dir> [--overrides <string>] [--seed <int>]
//! textlab evaluate <archive> <data>
//! textlab predict <archive> <input.jsonl> [--output <path>]
//! textlab serve <archive> --port <int> [--static <dir>]
//! ```
//!
//! Exit status is 0 on success, 1 when the command fails and 2 on a usage
//! error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{merge_overrides, parse_config, ConfigValue};
use crate::error::{Error, Result};
use crate::predictor::Predictor;
use crate::service::{serve, ServeOptions};
use crate::training::{evaluate, train};

#[derive(Debug, Parser)]
#[command(name = "textlab", version, about = "Train, evaluate and serve models described by experiment configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and pack it into <dir>/model.tar.gz.
    Train {
        config: PathBuf,
        #[arg(short = 's', value_name = "DIR")]
        serialization_dir: PathBuf,
        /// Configuration document merged over the file, e.g. '{"trainer.num_epochs": 1}'.
        #[arg(long)]
        overrides: Option<String>,
        /// Replaces trainer.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print metrics of an archived model on a labelled JSONL file.
    Evaluate { archive: PathBuf, data: PathBuf },
    /// Predict every line of a JSONL file; output lines match input lines.
    Predict {
        archive: PathBuf,
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Serve /info and /predict over HTTP.
    Serve {
        archive: PathBuf,
        #[arg(long)]
        port: u16,
        /// Directory of static files served for other GET requests.
        #[arg(long = "static", value_name = "DIR")]
        static_dir: Option<PathBuf>,
    },
}

/// Reads a config file and applies `--overrides` and `--seed` on top.
pub fn load_experiment(path: &Path, overrides: Option<&str>, seed: Option<u64>) -> Result<ConfigValue> {
    let text = fs::read_to_string(path).map_err(|e| Error::io_path("read config", path, e))?;
    let mut config = parse_config(&text)?;
    if let Some(overrides) = overrides {
        config = merge_overrides(&config, &parse_config(overrides)?)?;
    }
    if let Some(seed) = seed {
        let patch = ConfigValue::object([("trainer.seed", ConfigValue::number(seed as f64))]);
        config = merge_overrides(&config, &patch)?;
    }
    Ok(config)
}

fn predict_lines(predictor: &Predictor, input: &str) -> (Vec<String>, usize) {
    let mut failures = 0;
    let lines = input
        .lines()
        .map(|line| {
            if line.trim().is_empty() {
                return String::new();
            }
            let result = serde_json::from_str::<Value>(line).map_err(|e| (format!("invalid JSON: {e}"), None)).and_then(|v| {
                predictor.predict_json(&v).map_err(|e| {
                    let field = if let Error::Data(d) = &e { d.field().map(str::to_string) } else { None };
                    (e.to_string(), field)
                })
            });
            match result {
                Ok(v) => v.to_string(),
                Err((message, field)) => {
                    failures += 1;
                    json!({"error": message, "field": field}).to_string()
                }
            }
        })
        .collect();
    (lines, failures)
}

fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    let write_err = |e| Error::io("could not write output", e);
    match command {
        Command::Train { config, serialization_dir, overrides, seed } => {
            let experiment = load_experiment(&config, overrides.as_deref(), seed)?;
            let outcome = train(&experiment, &serialization_dir)?;
            writeln!(out, "best epoch {} of {}: {} = {}", outcome.best_epoch, outcome.epochs_run(), outcome.metric, outcome.best_value())
                .map_err(write_err)?;
            writeln!(out, "archive written to {}", outcome.archive.display()).map_err(write_err)?;
        }
        Command::Evaluate { archive, data } => {
            let metrics = evaluate(&archive, &data)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&metrics).expect("json")).map_err(write_err)?;
        }
        Command::Predict { archive, input, output } => {
            let predictor = Predictor::from_archive(&archive)?;
            let text = fs::read_to_string(&input).map_err(|e| Error::io_path("read", &input, e))?;
            let (lines, failures) = predict_lines(&predictor, &text);
            let body: String = lines.iter().map(|l| format!("{l}\n")).collect();
            match output {
                Some(path) => fs::write(&path, body).map_err(|e| Error::io_path("write", &path, e))?,
                None => out.write_all(body.as_bytes()).map_err(write_err)?,
            }
            if failures > 0 {
                return Err(Error::Data(crate::data::DataError::InvalidField {
                    field: input.display().to_string(),
                    expected: format!("valid prediction requests on every line ({failures} failed)"),
                }));
            }
        }
        Command::Serve { archive, port, static_dir } => {
            let predictor = Predictor::from_archive(&archive)?;
            let handle = serve(predictor, ServeOptions { port, static_dir, ..ServeOptions::default() })?;
            writeln!(out, "serving on {}", handle.url()).map_err(write_err)?;
            out.flush().map_err(write_err)?;
            handle.wait();
        }
    }
    Ok(())
}

/// Runs the CLI against explicit output streams and returns the exit status.
pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    2
                }
            };
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_cli_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}
