//! Config files: a layer spec (where the command needs one) plus an
//! optional `"experiment"` object with command-specific settings.

use std::fs;
use std::path::Path;

use photonic::layer::LayerSpec;
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Splits a config document into its `"experiment"` section and the rest.
pub fn split_experiment(mut doc: Value) -> CliResult<(Value, Value)> {
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| CliError::Config("top level must be a JSON object".into()))?;
    let experiment = obj
        .remove("experiment")
        .unwrap_or_else(|| Value::Object(Default::default()));
    Ok((doc, experiment))
}

pub fn layer_spec(rest: Value) -> CliResult<LayerSpec> {
    let spec: LayerSpec =
        serde_json::from_value(rest).map_err(|e| CliError::Config(format!("layer spec: {e}")))?;
    spec.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}

pub fn experiment<T: DeserializeOwned + Default>(section: Value) -> CliResult<T> {
    if section.as_object().is_some_and(|o| o.is_empty()) {
        return Ok(T::default());
    }
    serde_json::from_value(section).map_err(|e| CliError::Config(format!("experiment: {e}")))
}

/// Loads only the experiment section of an optional config file.
pub fn experiment_only<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let (_, section) = split_experiment(read_json(p)?)?;
            experiment(section)
        }
    }
}

/// Writes the primary result to `out` or standard output.
pub fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}
