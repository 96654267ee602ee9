use std::time::Instant;

use photonic::layer::{LayerSpec, LayerState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::Format;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    /// Feature rows. Defaults to a single empty row.
    #[serde(default)]
    pub inputs: Option<Vec<Vec<f64>>>,
    /// Explicit trainable values; otherwise the circuit's declared initial values.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    /// Draw trainable values uniformly from `[0, 2pi)` using the run seed.
    #[serde(default)]
    pub random_theta: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub labels: Vec<String>,
    pub theta: Vec<f64>,
    pub outputs: Vec<Vec<f64>>,
    pub graph_builds: u64,
}

impl SimulateReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes") + "\n",
            Format::Csv => {
                let header: Vec<String> = self.labels.iter().map(|l| csv_field(l)).collect();
                let mut out = header.join(",") + "\n";
                for row in &self.outputs {
                    let cells: Vec<String> = row
                        .iter()
                        .map(|v| photonic::measurement::fmt_f64(*v))
                        .collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
        }
    }
}

/// Quotes a CSV field when it contains a separator, quote or newline.
fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

pub fn simulate(
    spec: LayerSpec,
    settings: &SimulateSettings,
    seed: u64,
) -> CliResult<SimulateReport> {
    let theta = match (&settings.theta, settings.random_theta) {
        (Some(_), true) => {
            return Err(CliError::Config(
                "give either theta or random_theta, not both".into(),
            ));
        }
        (Some(t), false) => t.clone(),
        (None, true) => spec
            .circuit
            .random_theta(&mut ChaCha8Rng::seed_from_u64(seed)),
        (None, false) => spec.circuit.initial_theta(),
    };
    let inputs = settings.inputs.clone().unwrap_or_else(|| vec![Vec::new()]);
    let layer = LayerState::with_theta(spec, theta).map_err(|e| CliError::Config(e.to_string()))?;

    let start = Instant::now();
    let outputs = layer.forward(&inputs)?;
    eprintln!(
        "simulate: {} row(s), {} outputs each, {:.3} ms",
        outputs.len(),
        layer.output_dim(),
        start.elapsed().as_secs_f64() * 1e3
    );
    Ok(SimulateReport {
        labels: layer.output_labels(),
        theta: layer.theta().to_vec(),
        outputs,
        graph_builds: layer.graph_builds(),
    })
}
