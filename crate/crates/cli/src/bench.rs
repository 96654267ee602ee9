use std::time::Instant;

use photonic::circuit::universal_mesh;
use photonic::layer::{LayerSpec, LayerState};
use photonic::FockState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub modes: usize,
    pub photons: usize,
    pub batch: usize,
    pub repeats: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            modes: 10,
            photons: 5,
            batch: 1,
            repeats: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub modes: usize,
    pub photons: usize,
    pub batch: usize,
    pub repeats: usize,
    pub output_states: usize,
    pub build_count: u64,
    /// Graph construction alone.
    pub build_seconds: f64,
    /// The first forward call, excluding construction.
    pub first_forward_seconds: f64,
    /// Every later forward call, one per repeat, each with fresh parameters.
    pub forward_seconds: Vec<f64>,
    pub forward_mean: f64,
    pub forward_variance: f64,
    pub forward_min: f64,
    pub forward_median: f64,
}

/// Photons spread one per mode from mode 0, wrapping around.
fn spread_input(m: usize, n: usize) -> FockState {
    let mut occ = vec![0u8; m];
    for p in 0..n {
        occ[p % m] += 1;
    }
    FockState::new(occ)
}

/// Times a universal mesh layer. The first repeat is the cold call; the
/// remaining ones reuse the same transition graph with new parameters.
pub fn bench(settings: &BenchSettings, seed: u64) -> CliResult<BenchReport> {
    if settings.modes == 0 || settings.photons == 0 || settings.batch == 0 || settings.repeats < 2 {
        return Err(CliError::Usage(
            "bench needs modes, photons and batch >= 1 and repeats >= 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let circuit = universal_mesh(settings.modes, "W");
    let spec = LayerSpec::new(circuit, spread_input(settings.modes, settings.photons));
    let rows = vec![Vec::new(); settings.batch];

    let start = Instant::now();
    let mut layer = LayerState::new(spec)?;
    let build_seconds = start.elapsed().as_secs_f64();
    let theta = layer.spec().circuit.random_theta(&mut rng);
    layer.set_theta(&theta)?;
    let start = Instant::now();
    let out = layer.forward(&rows)?;
    let first_forward_seconds = start.elapsed().as_secs_f64();

    let mut forward_seconds = Vec::with_capacity(settings.repeats - 1);
    for _ in 1..settings.repeats {
        let theta = layer.spec().circuit.random_theta(&mut rng);
        layer.set_theta(&theta)?;
        let start = Instant::now();
        std::hint::black_box(layer.forward(&rows)?);
        forward_seconds.push(start.elapsed().as_secs_f64());
    }

    let k = forward_seconds.len() as f64;
    let mean = forward_seconds.iter().sum::<f64>() / k;
    let variance = forward_seconds
        .iter()
        .map(|t| (t - mean).powi(2))
        .sum::<f64>()
        / k;
    let mut sorted = forward_seconds.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchReport {
        modes: settings.modes,
        photons: settings.photons,
        batch: settings.batch,
        repeats: settings.repeats,
        output_states: out[0].len(),
        build_count: layer.graph_builds(),
        build_seconds,
        first_forward_seconds,
        forward_mean: mean,
        forward_variance: variance,
        forward_min: sorted[0],
        forward_median: sorted[sorted.len() / 2],
        forward_seconds,
    })
}
