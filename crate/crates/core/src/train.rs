//! Adam, the losses the bundled experiments need, and a dense readout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

/// First/second moment estimates and step count. Serializable so a run can
/// be resumed bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::LengthMismatch(params.len(), grads.len()));
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::LengthMismatch(params.len(), state.m.len()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch(pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect();
    Ok((loss, grad))
}

/// Assignment of output coordinates to classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGrouping {
    pub class_of: Vec<usize>,
    pub classes: usize,
}

impl ClassGrouping {
    pub fn new(class_of: Vec<usize>, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::BadGrouping("zero classes".into()));
        }
        if let Some(&bad) = class_of.iter().find(|&&c| c >= classes) {
            return Err(Error::BadGrouping(format!("class {bad} >= {classes}")));
        }
        for c in 0..classes {
            if !class_of.contains(&c) {
                return Err(Error::BadGrouping(format!("class {c} owns no outputs")));
            }
        }
        Ok(ClassGrouping { class_of, classes })
    }

    /// Two classes split by the parity of the first occupied mode of each
    /// output key (even -> 0, odd -> 1).
    pub fn leading_mode_parity<K: AsRef<[u8]>>(keys: &[K]) -> Result<Self> {
        let class_of = keys
            .iter()
            .map(|k| {
                k.as_ref()
                    .iter()
                    .position(|&o| o > 0)
                    .map_or(0, |mode| mode % 2)
            })
            .collect();
        Self::new(class_of, 2)
    }

    /// Probability mass per class.
    pub fn class_mass(&self, probs: &[f64]) -> Vec<f64> {
        let mut mass = vec![0.0; self.classes];
        for (&c, &p) in self.class_of.iter().zip(probs) {
            mass[c] += p;
        }
        mass
    }
}

const MASS_FLOOR: f64 = 1e-12;

/// `-ln(mass of the labeled class)` and its gradient with respect to each
/// output coordinate.
pub fn cross_entropy_from_probs(
    probs: &[f64],
    grouping: &ClassGrouping,
    label: usize,
) -> Result<(f64, Vec<f64>)> {
    if probs.len() != grouping.class_of.len() {
        return Err(Error::BadGrouping(format!(
            "{} outputs but grouping covers {}",
            probs.len(),
            grouping.class_of.len()
        )));
    }
    if label >= grouping.classes {
        return Err(Error::BadGrouping(format!(
            "label {label} >= {}",
            grouping.classes
        )));
    }
    let mass = grouping.class_mass(probs)[label].max(MASS_FLOOR);
    let grad = grouping
        .class_of
        .iter()
        .map(|&c| if c == label { -1.0 / mass } else { 0.0 })
        .collect();
    Ok((-mass.ln(), grad))
}

/// `-ln softmax(logits)[label]` and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::BadGrouping(format!(
            "label {label} >= {} logits",
            logits.len()
        )));
    }
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() + top - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Dense affine readout `y = W p + b` with `W` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Weights followed by biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch(params.len(), self.param_count()));
        }
        let (w, b) = params.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        Ok(())
    }

    pub fn forward(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.inputs {
            return Err(Error::LengthMismatch(p.len(), self.inputs));
        }
        Ok(self
            .weights
            .chunks(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(p).map(|(w, x)| w * x).sum::<f64>())
            .collect())
    }

    /// Adds `dL/dparams` (same layout as [`Self::params`]) into `grad` and
    /// returns `dL/dp`.
    pub fn backward(&self, p: &[f64], dy: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        if p.len() != self.inputs || dy.len() != self.outputs || grad.len() != self.param_count() {
            return Err(Error::LengthMismatch(dy.len(), self.outputs));
        }
        let (gw, gb) = grad.split_at_mut(self.weights.len());
        let mut dp = vec![0.0; self.inputs];
        for (o, &d) in dy.iter().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                gw[o * self.inputs + i] += d * p[i];
                dp[i] += d * row[i];
            }
            gb[o] += d;
        }
        Ok(dp)
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut s = AdamState::new(3);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &[3.0, -0.5, 100.0], &mut s, &cfg).unwrap();
        assert!((p[0] + cfg.lr).abs() < 1e-8);
        assert!((p[1] - cfg.lr).abs() < 1e-7);
        assert!((p[2] + cfg.lr).abs() < 1e-8);
    }

    #[test]
    fn quadratic_bowl() {
        let mut p = vec![1.0, 1.0];
        let mut s = AdamState::new(2);
        let cfg = AdamConfig::with_lr(0.05);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
            adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        }
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "norm={norm}");
    }

    #[test]
    fn adam_state_resumes_bit_exactly() {
        let cfg = AdamConfig::with_lr(0.1);
        let grads = |p: &[f64]| -> Vec<f64> { p.iter().map(|v| v.sin() + 0.3).collect() };
        let mut p1 = vec![0.2, -0.7, 1.4];
        let mut s1 = AdamState::new(3);
        for _ in 0..10 {
            let g = grads(&p1);
            adam_step(&mut p1, &g, &mut s1, &cfg).unwrap();
        }
        let saved = serde_json::to_string(&s1).unwrap();
        let mut p2 = p1.clone();
        let mut s2: AdamState = serde_json::from_str(&saved).unwrap();
        for _ in 0..10 {
            let g = grads(&p1);
            adam_step(&mut p1, &g, &mut s1, &cfg).unwrap();
            let g = grads(&p2);
            adam_step(&mut p2, &g, &mut s2, &cfg).unwrap();
        }
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn adam_length_mismatch() {
        let mut p = vec![0.0; 2];
        let mut s = AdamState::new(2);
        assert!(matches!(
            adam_step(&mut p, &[1.0], &mut s, &AdamConfig::default()),
            Err(Error::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn mse_examples() {
        let (l, g) = mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((l, g), (0.0, vec![0.0, 0.0]));
        let (l, _) = mse_loss(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(l, 1.0);
        let pred = [0.3, -1.2, 2.5];
        let target = [0.1, 0.4, 2.0];
        let (_, g) = mse_loss(&pred, &target).unwrap();
        for i in 0..3 {
            let fd = central_diff(|p| mse_loss(p, &target).unwrap().0, &pred, i, 1e-6);
            assert!((g[i] - fd).abs() <= 1e-7 * fd.abs().max(1.0));
        }
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let grouping = ClassGrouping::new(vec![0, 1, 0, 1], 2).unwrap();
        let (l, _) = cross_entropy_from_probs(&[0.5, 0.0, 0.5, 0.0], &grouping, 0).unwrap();
        assert_eq!(l, 0.0);
        let (l, _) = cross_entropy_from_probs(&[0.25; 4], &grouping, 1).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);

        let probs = [0.1, 0.2, 0.3, 0.4];
        for label in 0..2 {
            let (_, g) = cross_entropy_from_probs(&probs, &grouping, label).unwrap();
            for i in 0..4 {
                let fd = central_diff(
                    |p| cross_entropy_from_probs(p, &grouping, label).unwrap().0,
                    &probs,
                    i,
                    1e-6,
                );
                assert!(
                    (g[i] - fd).abs() <= 1e-7 * fd.abs().max(1.0),
                    "i={i} {} {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn grouping_validation() {
        assert!(matches!(
            ClassGrouping::new(vec![0, 0], 2),
            Err(Error::BadGrouping(_))
        ));
        assert!(matches!(
            ClassGrouping::new(vec![0, 2], 2),
            Err(Error::BadGrouping(_))
        ));
        let g = ClassGrouping::new(vec![0, 1], 2).unwrap();
        assert!(cross_entropy_from_probs(&[0.5, 0.5, 0.0], &g, 0).is_err());
        assert!(cross_entropy_from_probs(&[0.5, 0.5], &g, 2).is_err());
    }

    #[test]
    fn softmax_cross_entropy_values_and_gradient() {
        let (l, g) = softmax_cross_entropy(&[0.0, 0.0], 1).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, vec![0.5, -0.5]);
        // Large logits stay finite.
        let (l, _) = softmax_cross_entropy(&[1000.0, -1000.0], 0).unwrap();
        assert!(l.abs() < 1e-12);

        let z = [0.3, -1.1, 2.0];
        for label in 0..3 {
            let (_, g) = softmax_cross_entropy(&z, label).unwrap();
            for i in 0..3 {
                let fd = central_diff(|v| softmax_cross_entropy(v, label).unwrap().0, &z, i, 1e-6);
                assert!((g[i] - fd).abs() < 1e-8);
            }
        }
        assert!(softmax_cross_entropy(&z, 3).is_err());
    }

    #[test]
    fn linear_gradients() {
        let mut lin = Linear::zeros(3, 2);
        lin.set_params(&[0.5, -1.0, 2.0, 0.1, 0.2, -0.3, 0.7, -0.4])
            .unwrap();
        let p = [0.2, 0.9, -0.5];
        assert_eq!(lin.forward(&p).unwrap().len(), 2);
        let dy = [1.5, -0.25];
        let objective = |lin: &Linear, p: &[f64]| -> f64 {
            lin.forward(p)
                .unwrap()
                .iter()
                .zip(&dy)
                .map(|(y, d)| y * d)
                .sum()
        };
        let mut grad = vec![0.0; lin.param_count()];
        let dp = lin.backward(&p, &dy, &mut grad).unwrap();
        let params = lin.params();
        for i in 0..params.len() {
            let fd = central_diff(
                |q| {
                    let mut l = lin.clone();
                    l.set_params(q).unwrap();
                    objective(&l, &p)
                },
                &params,
                i,
                1e-6,
            );
            assert!((grad[i] - fd).abs() < 1e-8);
        }
        for i in 0..3 {
            let fd = central_diff(|q| objective(&lin, q), &p, i, 1e-6);
            assert!((dp[i] - fd).abs() < 1e-8);
        }
        assert!(lin.set_params(&[0.0; 3]).is_err());
    }

    #[test]
    fn parity_grouping() {
        let keys: Vec<Vec<u8>> = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        let g = ClassGrouping::leading_mode_parity(&keys).unwrap();
        assert_eq!(g.class_of, vec![0, 1, 0]);
    }
}
