//! Classical readout of amplitude vectors: detectors, marginals and
//! computation-space projection.
//!
//! Keyed outputs are always ordered lexicographically descending on the key,
//! which for PNR keys coincides with the Fock basis order.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockState};
use crate::slos::AmplitudeVector;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementStrategy {
    Probabilities,
    PerModeExpectation,
    Amplitudes,
    /// Marginal over the listed modes (sorted, distinct, strict subset).
    Partial(Vec<usize>),
}

impl MeasurementStrategy {
    pub fn validate(&self, m: usize) -> Result<()> {
        if let MeasurementStrategy::Partial(modes) = self {
            check_modes(modes, m)?;
            if modes.len() == m {
                return Err(Error::InvalidModes(
                    "partial measurement must leave at least one mode unmeasured".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Pnr,
    Threshold,
}

impl Detector {
    /// What the detector reports for `count` photons.
    #[inline]
    pub fn reading(self, count: u8) -> u8 {
        match self {
            Detector::Pnr => count,
            Detector::Threshold => count.min(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComputationSpace {
    Fock,
    Unbunched,
}

fn check_modes(modes: &[usize], m: usize) -> Result<()> {
    if modes.is_empty() {
        return Err(Error::InvalidModes("no modes listed".into()));
    }
    if let Some(&bad) = modes.iter().find(|&&x| x >= m) {
        return Err(Error::InvalidModes(format!(
            "mode {bad} out of range for {m} modes"
        )));
    }
    if modes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidModes(
            "modes must be sorted and distinct".into(),
        ));
    }
    Ok(())
}

/// A probability distribution over integer-vector outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedDistribution {
    pub keys: Vec<Vec<u8>>,
    pub values: Vec<f64>,
}

impl KeyedDistribution {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn get(&self, key: &[u8]) -> Option<f64> {
        self.keys
            .iter()
            .position(|k| k == key)
            .map(|i| self.values[i])
    }

    /// `{"[0,1,1]": 2.5000000000000000e-1, ...}` in key order, 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{");
        for (i, (k, v)) in self.keys.iter().zip(&self.values).enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "\"{}\":{}", FockState::new(k.clone()), fmt_f64(*v));
        }
        out.push('}');
        out
    }
}

/// 17-significant-digit decimal form that JSON and CSV readers accept.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Precomputed assignment of basis states to output bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    pub keys: Vec<Vec<u8>>,
    /// `slot_of[i]` is the bin of the `i`-th input state.
    pub slot_of: Vec<usize>,
}

impl Binning {
    pub fn new<'a, I, F>(states: I, key: F) -> Self
    where
        I: IntoIterator<Item = &'a FockState>,
        F: Fn(&FockState) -> Vec<u8>,
    {
        let raw: Vec<Vec<u8>> = states.into_iter().map(key).collect();
        let mut keys = raw.clone();
        keys.sort_unstable_by(|a, b| b.cmp(a));
        keys.dedup();
        let slot_of = raw
            .iter()
            .map(|k| {
                keys.binary_search_by(|probe| k.cmp(probe))
                    .expect("key present")
            })
            .collect();
        Binning { keys, slot_of }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Sums `p` into bins, visiting inputs in index order.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.keys.len()];
        for (&slot, &v) in self.slot_of.iter().zip(p) {
            out[slot] += v;
        }
        out
    }

    pub fn distribution(&self, p: &[f64]) -> KeyedDistribution {
        KeyedDistribution {
            keys: self.keys.clone(),
            values: self.apply(p),
        }
    }
}

/// Key produced by a detector on the listed modes.
pub fn detector_key(s: &FockState, detector: Detector, modes: Option<&[usize]>) -> Vec<u8> {
    match modes {
        Some(ms) => ms
            .iter()
            .map(|&i| detector.reading(s.occupations()[i]))
            .collect(),
        None => s
            .occupations()
            .iter()
            .map(|&o| detector.reading(o))
            .collect(),
    }
}

pub fn probabilities(a: &AmplitudeVector) -> Vec<f64> {
    a.values.iter().map(|z| z.norm_sqr()).collect()
}

fn check_len(p: &[f64], basis: &FockBasis) -> Result<()> {
    if p.len() != basis.size() {
        return Err(Error::LengthMismatch(p.len(), basis.size()));
    }
    Ok(())
}

/// Regroups a PNR distribution according to the detector model.
pub fn apply_detector(
    p: &[f64],
    basis: &FockBasis,
    detector: Detector,
) -> Result<KeyedDistribution> {
    check_len(p, basis)?;
    let states = basis.states();
    Ok(Binning::new(&states, |s| detector_key(s, detector, None)).distribution(p))
}

/// Expected photon number per mode (or click probability for threshold detectors).
pub fn per_mode_expectation(p: &[f64], basis: &FockBasis, detector: Detector) -> Result<Vec<f64>> {
    check_len(p, basis)?;
    let mut out = vec![0.0; basis.modes()];
    for (s, &pt) in basis.iter().zip(p) {
        for (e, &o) in out.iter_mut().zip(s.occupations()) {
            *e += pt * detector.reading(o) as f64;
        }
    }
    Ok(out)
}

/// Marginal over `measured_modes`; keys are PNR occupations of those modes.
///
/// Any nonempty sorted subset is accepted here, including all modes.
pub fn marginal(
    p: &[f64],
    basis: &FockBasis,
    measured_modes: &[usize],
) -> Result<KeyedDistribution> {
    marginal_with(p, basis, measured_modes, Detector::Pnr)
}

pub fn marginal_with(
    p: &[f64],
    basis: &FockBasis,
    measured_modes: &[usize],
    detector: Detector,
) -> Result<KeyedDistribution> {
    check_len(p, basis)?;
    check_modes(measured_modes, basis.modes())?;
    let states = basis.states();
    Ok(Binning::new(&states, |s| detector_key(s, detector, Some(measured_modes))).distribution(p))
}

/// Amplitudes restricted to states with at most one photon per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct UnbunchedState {
    pub states: Vec<FockState>,
    /// Full-basis rank of each kept state.
    pub ranks: Vec<usize>,
    pub values: Vec<Complex64>,
}

/// Ranks of the unbunched states of `basis`, in basis order.
pub fn unbunched_ranks(basis: &FockBasis) -> Vec<usize> {
    basis
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_unbunched())
        .map(|(i, _)| i)
        .collect()
}

/// Post-selects onto the unbunched subspace, renormalizing. Returns the
/// projected state and the probability of landing there.
pub fn project_unbunched(a: &AmplitudeVector) -> Result<(UnbunchedState, f64)> {
    if a.basis.photons() > a.basis.modes() {
        return Err(Error::InvalidSpec(format!(
            "unbunched space needs n <= m, got n={} m={}",
            a.basis.photons(),
            a.basis.modes()
        )));
    }
    let ranks = unbunched_ranks(&a.basis);
    let success: f64 = ranks.iter().map(|&r| a.values[r].norm_sqr()).sum();
    if success < 1e-300 {
        return Err(Error::NullProjection);
    }
    let scale = 1.0 / success.sqrt();
    let states = ranks
        .iter()
        .map(|&r| a.basis.unrank(r))
        .collect::<Result<Vec<_>>>()?;
    let values = ranks.iter().map(|&r| a.values[r] * scale).collect();
    Ok((
        UnbunchedState {
            states,
            ranks,
            values,
        },
        success,
    ))
}
