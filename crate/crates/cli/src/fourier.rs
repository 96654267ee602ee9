//! Fitting a truncated Fourier series with a three-mode sandwich circuit:
//! trainable mesh, one data-dependent phase on mode 0, trainable mesh, then
//! a linear readout of the output probabilities.

use std::f64::consts::TAU;

use photonic::circuit::{universal_mesh, ParamCircuit};
use photonic::layer::{LayerSpec, LayerState};
use photonic::measurement::fmt_f64;
use photonic::train::{adam_step, mse_loss, AdamConfig, AdamState, Linear};
use photonic::FockState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::Format;

pub const MODES: usize = 3;
pub const MAX_PHOTONS: usize = 6;

/// `constant + sum_k cos[k-1] cos(kx) + sin[k-1] sin(kx)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierTarget {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl FourierTarget {
    /// Coefficients drawn uniformly from `[-0.5, 0.5]`.
    pub fn random<R: Rng>(degree: usize, rng: &mut R) -> Self {
        let mut draw = || rng.random_range(-0.5..=0.5);
        FourierTarget {
            constant: draw(),
            cos: (0..degree).map(|_| draw()).collect(),
            sin: (0..degree).map(|_| draw()).collect(),
        }
    }

    pub fn degree(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut y = self.constant;
        for (k, c) in self.cos.iter().enumerate() {
            y += c * ((k + 1) as f64 * x).cos();
        }
        for (k, s) in self.sin.iter().enumerate() {
            y += s * ((k + 1) as f64 * x).sin();
        }
        y
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourierSettings {
    pub photons: usize,
    pub steps: usize,
    pub lr: f64,
    pub grid: usize,
    /// Random degree-3 target (seeded) when absent.
    pub target: Option<FourierTarget>,
}

impl Default for FourierSettings {
    fn default() -> Self {
        FourierSettings {
            photons: 3,
            steps: 2000,
            lr: 0.005,
            grid: 64,
            target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FourierFit {
    pub photons: usize,
    pub input_state: FockState,
    pub target: FourierTarget,
    pub steps: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub fit: Vec<f64>,
    pub mse: f64,
    pub best_mse: f64,
    pub theta: Vec<f64>,
    pub readout: Linear,
}

impl FourierFit {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut out = String::from("x,target,fit\n");
                for i in 0..self.xs.len() {
                    out.push_str(&format!(
                        "{},{},{}\n",
                        fmt_f64(self.xs[i]),
                        fmt_f64(self.ys[i]),
                        fmt_f64(self.fit[i])
                    ));
                }
                out
            }
            Format::Json => serde_json::to_string_pretty(self).expect("fit serializes") + "\n",
        }
    }
}

/// Photons placed round-robin over the three modes, starting at mode 0.
pub fn round_robin_input(photons: usize) -> FockState {
    let mut occ = vec![0u8; MODES];
    for p in 0..photons {
        occ[p % MODES] += 1;
    }
    FockState::new(occ)
}

pub fn sandwich_circuit() -> ParamCircuit {
    let mut c = universal_mesh(MODES, "W1");
    c.add_angle_encoding(&[0], "x", 1.0).expect("mode 0 exists");
    c.append(&universal_mesh(MODES, "W2")).expect("same width");
    c
}

fn predict(probs: &[Vec<f64>], readout: &Linear) -> photonic::Result<Vec<f64>> {
    probs
        .iter()
        .map(|p| readout.forward(p).map(|y| y[0]))
        .collect()
}

pub fn fit_fourier(settings: &FourierSettings, seed: u64) -> CliResult<FourierFit> {
    if settings.photons == 0 || settings.photons > MAX_PHOTONS {
        return Err(CliError::Usage(format!(
            "photons must be in 1..={MAX_PHOTONS}, got {}",
            settings.photons
        )));
    }
    if settings.grid < 2 {
        return Err(CliError::Usage("grid needs at least two points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = match &settings.target {
        Some(t) => t.clone(),
        None => FourierTarget::random(3, &mut rng),
    };
    let xs: Vec<f64> = (0..settings.grid)
        .map(|i| TAU * i as f64 / settings.grid as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| target.eval(x)).collect();
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();

    let input = round_robin_input(settings.photons);
    let spec = LayerSpec::new(sandwich_circuit(), input.clone());
    let theta = spec.circuit.random_theta(&mut rng);
    let mut layer = LayerState::with_theta(spec, theta)?;
    let dim = layer.output_dim();
    let theta_len = layer.theta().len();

    let mut readout = Linear::zeros(dim, 1);
    let normal = Normal::new(0.0, 0.5).expect("valid std");
    for w in readout.weights.iter_mut() {
        *w = normal.sample(&mut rng);
    }
    readout.bias[0] = ys.iter().sum::<f64>() / ys.len() as f64;

    // Parameter vector: circuit values, then readout weights and bias.
    let mut params: Vec<f64> = layer.theta().to_vec();
    params.extend(readout.params());
    let cfg = AdamConfig::with_lr(settings.lr);
    let mut adam = AdamState::new(params.len());
    let mut best = f64::INFINITY;

    for _ in 0..settings.steps {
        let probs = layer.forward_train(&rows)?;
        let (loss, d_pred) = mse_loss(&predict(&probs, &readout)?, &ys)?;
        best = best.min(loss);

        let mut grads = vec![0.0; params.len()];
        let mut upstream = Vec::with_capacity(rows.len());
        for (p, &g) in probs.iter().zip(&d_pred) {
            upstream.push(readout.backward(p, &[g], &mut grads[theta_len..])?);
        }
        let (d_theta, _) = layer.backward(&rows, &upstream)?;
        grads[..theta_len].copy_from_slice(&d_theta);
        adam_step(&mut params, &grads, &mut adam, &cfg)?;
        layer.set_theta(&params[..theta_len])?;
        readout.set_params(&params[theta_len..])?;
    }

    let fit = predict(&layer.forward(&rows)?, &readout)?;
    let (mse, _) = mse_loss(&fit, &ys)?;
    Ok(FourierFit {
        photons: settings.photons,
        input_state: input,
        target,
        steps: settings.steps,
        xs,
        ys,
        fit,
        mse,
        best_mse: best.min(mse),
        theta: layer.theta().to_vec(),
        readout,
    })
}
