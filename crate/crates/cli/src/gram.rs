use std::f64::consts::TAU;

use photonic::circuit::ParamCircuit;
use photonic::kernel::{gram_to_csv, FidelityKernel, KernelSpec};
use photonic::FockState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::Format;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GramSettings {
    /// Feature rows. When absent, `count` rows are drawn uniformly from
    /// `[0, 2pi)` per feature using the run seed.
    pub points: Option<Vec<Vec<f64>>>,
    pub count: usize,
    pub theta: Option<Vec<f64>>,
    pub cache_states: bool,
}

impl Default for GramSettings {
    fn default() -> Self {
        GramSettings {
            points: None,
            count: 40,
            theta: None,
            cache_states: true,
        }
    }
}

#[derive(Debug, Deserialize)]
struct KernelDoc {
    circuit: ParamCircuit,
    input_state: FockState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramReport {
    pub points: Vec<Vec<f64>>,
    pub gram: Vec<Vec<f64>>,
}

impl GramReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => gram_to_csv(&self.gram),
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes") + "\n",
        }
    }
}

pub fn kernel_from_config(rest: Value) -> CliResult<KernelSpec> {
    let doc: KernelDoc =
        serde_json::from_value(rest).map_err(|e| CliError::Config(format!("kernel spec: {e}")))?;
    if doc.input_state.modes() != doc.circuit.modes() {
        return Err(CliError::Config(
            "input_state width differs from circuit".into(),
        ));
    }
    Ok(KernelSpec {
        circuit: doc.circuit,
        input_state: doc.input_state,
        cache_states: true,
    })
}

pub fn kernel_gram(
    mut spec: KernelSpec,
    settings: &GramSettings,
    seed: u64,
) -> CliResult<GramReport> {
    spec.cache_states = settings.cache_states;
    let features = spec.circuit.input_feature_count();
    let points = match &settings.points {
        Some(p) => p.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..settings.count)
                .map(|_| (0..features).map(|_| rng.random_range(0.0..TAU)).collect())
                .collect()
        }
    };
    let kernel = match &settings.theta {
        Some(t) => FidelityKernel::with_theta(spec, t.clone()),
        None => FidelityKernel::new(spec),
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    let gram = kernel.gram(&points, None)?;
    Ok(GramReport { points, gram })
}
