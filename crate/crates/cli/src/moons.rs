//! Two interleaved half circles, classified by the three-mode layer with
//! both features phase-encoded between two trainable meshes. The output
//! probabilities feed a trainable two-logit linear readout.

use std::f64::consts::PI;

use photonic::circuit::{universal_mesh, ParamCircuit};
use photonic::layer::{LayerSpec, LayerState};
use photonic::measurement::fmt_f64;
use photonic::train::{adam_step, softmax_cross_entropy, AdamConfig, AdamState, Linear};
use photonic::FockState;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoonsSettings {
    pub samples: usize,
    pub noise: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub test_fraction: f64,
    pub grid: usize,
    /// Standard deviation of the initial readout weights (biases start at 0).
    pub readout_init_std: f64,
}

impl Default for MoonsSettings {
    fn default() -> Self {
        MoonsSettings {
            samples: 200,
            noise: 0.1,
            epochs: 200,
            lr: 0.05,
            batch_size: 32,
            test_fraction: 0.25,
            grid: 100,
            readout_init_std: 1.0,
        }
    }
}

/// Points and labels. The first half (rounded up) is class 0.
pub fn make_moons<R: Rng>(
    samples: usize,
    noise: f64,
    rng: &mut R,
) -> CliResult<(Vec<[f64; 2]>, Vec<usize>)> {
    let gauss = Normal::new(0.0, noise).map_err(|e| CliError::Usage(format!("noise: {e}")))?;
    let upper = samples.div_ceil(2);
    let mut points = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let t = rng.random_range(0.0..=PI);
        let (label, base) = if i < upper {
            (0, [t.cos(), t.sin()])
        } else {
            (1, [1.0 - t.cos(), 0.5 - t.sin()])
        };
        points.push([base[0] + gauss.sample(rng), base[1] + gauss.sample(rng)]);
        labels.push(label);
    }
    Ok((points, labels))
}

/// Per-dimension affine map onto `[0, pi]`, fitted on the training points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseScaler {
    pub low: [f64; 2],
    pub high: [f64; 2],
}

impl PhaseScaler {
    pub fn fit(points: &[[f64; 2]]) -> Self {
        let mut low = [f64::INFINITY; 2];
        let mut high = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                low[d] = low[d].min(p[d]);
                high[d] = high[d].max(p[d]);
            }
        }
        PhaseScaler { low, high }
    }

    pub fn apply(&self, p: &[f64; 2]) -> Vec<f64> {
        (0..2)
            .map(|d| {
                let span = self.high[d] - self.low[d];
                if span > 0.0 {
                    PI * (p[d] - self.low[d]) / span
                } else {
                    0.0
                }
            })
            .collect()
    }
}

pub fn moons_circuit() -> ParamCircuit {
    let mut c = universal_mesh(3, "W1");
    c.add_angle_encoding(&[0, 1], "x_", 1.0)
        .expect("modes exist");
    c.append(&universal_mesh(3, "W2")).expect("same width");
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoonsReport {
    pub samples: usize,
    pub noise: f64,
    pub epochs: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
    pub scaler: PhaseScaler,
    pub theta: Vec<f64>,
    pub readout: Linear,
    /// Class-1 probability on a regular grid over the data's bounding box,
    /// row-major with the first coordinate varying fastest.
    #[serde(skip)]
    pub grid: Vec<[f64; 3]>,
}

impl MoonsReport {
    pub fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn grid_csv(&self) -> String {
        let mut out = String::from("x1,x2,p_class1\n");
        for [a, b, p] in &self.grid {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_f64(*a),
                fmt_f64(*b),
                fmt_f64(*p)
            ));
        }
        out
    }
}

struct Classifier {
    layer: LayerState,
    readout: Linear,
}

impl Classifier {
    fn logits(&self, xs: &[Vec<f64>]) -> CliResult<Vec<Vec<f64>>> {
        let probs = self.layer.forward(xs)?;
        Ok(probs
            .iter()
            .map(|p| self.readout.forward(p))
            .collect::<photonic::Result<_>>()?)
    }

    fn accuracy(&self, xs: &[Vec<f64>], labels: &[usize]) -> CliResult<f64> {
        if xs.is_empty() {
            return Ok(0.0);
        }
        let logits = self.logits(xs)?;
        let hits = logits
            .iter()
            .zip(labels)
            .filter(|(z, &l)| (z[1] > z[0]) == (l == 1))
            .count();
        Ok(hits as f64 / xs.len() as f64)
    }

    fn mean_loss(&self, xs: &[Vec<f64>], labels: &[usize]) -> CliResult<f64> {
        let mut total = 0.0;
        for (z, &l) in self.logits(xs)?.iter().zip(labels) {
            total += softmax_cross_entropy(z, l)?.0;
        }
        Ok(total / xs.len().max(1) as f64)
    }

    /// Probability of class 1 under the softmax of the readout.
    fn class1_probability(&self, xs: &[Vec<f64>]) -> CliResult<Vec<f64>> {
        Ok(self
            .logits(xs)?
            .iter()
            .map(|z| 1.0 / (1.0 + (z[0] - z[1]).exp()))
            .collect())
    }
}

pub fn classify_moons(settings: &MoonsSettings, seed: u64) -> CliResult<MoonsReport> {
    if settings.samples < 4 {
        return Err(CliError::Usage("need at least four samples".into()));
    }
    if !(0.0..1.0).contains(&settings.test_fraction) {
        return Err(CliError::Usage("test_fraction must be in [0, 1)".into()));
    }
    if settings.batch_size == 0 {
        return Err(CliError::Usage("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (points, labels) = make_moons(settings.samples, settings.noise, &mut rng)?;

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut rng);
    let test_size = ((points.len() as f64) * settings.test_fraction).round() as usize;
    let (test_idx, train_idx) = order.split_at(test_size);

    let train_points: Vec<[f64; 2]> = train_idx.iter().map(|&i| points[i]).collect();
    let scaler = PhaseScaler::fit(&train_points);
    let encode = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            idx.iter().map(|&i| scaler.apply(&points[i])).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (train_x, train_y) = encode(train_idx);
    let (test_x, test_y) = encode(test_idx);

    let spec = LayerSpec::new(moons_circuit(), FockState::new(vec![1, 1, 1]));
    let theta = spec.circuit.random_theta(&mut rng);
    let layer = LayerState::with_theta(spec, theta)?;
    let theta_len = layer.theta().len();
    let mut readout = Linear::zeros(layer.output_dim(), 2);
    let init = Normal::new(0.0, settings.readout_init_std)
        .map_err(|e| CliError::Usage(format!("readout_init_std: {e}")))?;
    for w in readout.weights.iter_mut() {
        *w = init.sample(&mut rng);
    }
    let mut clf = Classifier { layer, readout };

    let cfg = AdamConfig::with_lr(settings.lr);
    let mut params = clf.layer.theta().to_vec();
    params.extend(clf.readout.params());
    let mut adam = AdamState::new(params.len());
    let mut batch_order: Vec<usize> = (0..train_x.len()).collect();
    for _ in 0..settings.epochs {
        batch_order.shuffle(&mut rng);
        for chunk in batch_order.chunks(settings.batch_size) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| train_x[i].clone()).collect();
            let probs = clf.layer.forward_train(&xs)?;
            let scale = 1.0 / chunk.len() as f64;
            let mut grads = vec![0.0; params.len()];
            let mut upstream = Vec::with_capacity(chunk.len());
            for (p, &i) in probs.iter().zip(chunk) {
                let (_, dz) = softmax_cross_entropy(&clf.readout.forward(p)?, train_y[i])?;
                let dz: Vec<f64> = dz.iter().map(|g| g * scale).collect();
                upstream.push(clf.readout.backward(p, &dz, &mut grads[theta_len..])?);
            }
            let (d_theta, _) = clf.layer.backward(&xs, &upstream)?;
            grads[..theta_len].copy_from_slice(&d_theta);
            adam_step(&mut params, &grads, &mut adam, &cfg)?;
            clf.layer.set_theta(&params[..theta_len])?;
            clf.readout.set_params(&params[theta_len..])?;
        }
    }

    let grid = decision_grid(&clf, &scaler, &points, settings.grid)?;
    Ok(MoonsReport {
        samples: settings.samples,
        noise: settings.noise,
        epochs: settings.epochs,
        seed,
        train_size: train_x.len(),
        test_size: test_x.len(),
        train_accuracy: clf.accuracy(&train_x, &train_y)?,
        test_accuracy: clf.accuracy(&test_x, &test_y)?,
        final_loss: clf.mean_loss(&train_x, &train_y)?,
        scaler,
        theta: params[..theta_len].to_vec(),
        readout: clf.readout.clone(),
        grid,
    })
}

fn decision_grid(
    clf: &Classifier,
    scaler: &PhaseScaler,
    points: &[[f64; 2]],
    n: usize,
) -> CliResult<Vec<[f64; 3]>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let bounds = PhaseScaler::fit(points);
    let margin = 0.25;
    let axis = |d: usize| -> Vec<f64> {
        let (lo, hi) = (bounds.low[d] - margin, bounds.high[d] + margin);
        (0..n)
            .map(|i| {
                if n == 1 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    };
    let (ax, ay) = (axis(0), axis(1));
    let coords: Vec<[f64; 2]> = ay
        .iter()
        .flat_map(|&y| ax.iter().map(move |&x| [x, y]))
        .collect();
    let xs: Vec<Vec<f64>> = coords.iter().map(|p| scaler.apply(p)).collect();
    let p1 = clf.class1_probability(&xs)?;
    Ok(coords
        .iter()
        .zip(p1)
        .map(|(c, p)| [c[0], c[1], p])
        .collect())
}
