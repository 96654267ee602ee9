//! The differentiable quantum layer.
//!
//! A [`LayerState`] maps a batch of feature rows to a batch of real output
//! vectors: compile the circuit for `(theta, x)`, evolve the input over the
//! cached transition graph, optionally post-select onto the unbunched space,
//! then read out according to the measurement strategy and detector.
//! [`LayerState::backward`] runs the same chain in reverse.
//!
//! Amplitude-encoded inputs are handled by linearity: each basis component
//! of the input is evolved over its own graph and the outputs are summed.
//! That costs one evolution per nonzero component, so it is only practical
//! for small sectors.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::ParamCircuit;
use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockState};
use crate::measurement::{
    detector_key, unbunched_ranks, Binning, ComputationSpace, Detector, MeasurementStrategy,
};
use crate::slos::{AmplitudeVector, ForwardCache, ForwardOptions, TransitionGraph, Workspace};
use crate::CMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmplitudeSector {
    pub photons: usize,
}

/// What enters the circuit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerInput {
    Fock(FockState),
    /// Rows of the batch are amplitude vectors over this photon sector.
    AmplitudeEncoded {
        amplitude_encoded: AmplitudeSector,
    },
}

fn default_strategy() -> MeasurementStrategy {
    MeasurementStrategy::Probabilities
}

fn default_detector() -> Detector {
    Detector::Pnr
}

fn default_space() -> ComputationSpace {
    ComputationSpace::Fock
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub circuit: ParamCircuit,
    pub input_state: LayerInput,
    #[serde(default = "default_strategy")]
    pub strategy: MeasurementStrategy,
    #[serde(default = "default_detector")]
    pub detector: Detector,
    #[serde(default = "default_space")]
    pub space: ComputationSpace,
}

impl LayerSpec {
    pub fn new(circuit: ParamCircuit, input: FockState) -> Self {
        LayerSpec {
            circuit,
            input_state: LayerInput::Fock(input),
            strategy: MeasurementStrategy::Probabilities,
            detector: Detector::Pnr,
            space: ComputationSpace::Fock,
        }
    }

    pub fn with_strategy(mut self, strategy: MeasurementStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_detector(mut self, detector: Detector) -> Self {
        self.detector = detector;
        self
    }

    pub fn with_space(mut self, space: ComputationSpace) -> Self {
        self.space = space;
        self
    }

    pub fn modes(&self) -> usize {
        self.circuit.modes()
    }

    pub fn photons(&self) -> usize {
        match &self.input_state {
            LayerInput::Fock(s) => s.photon_count(),
            LayerInput::AmplitudeEncoded { amplitude_encoded } => amplitude_encoded.photons,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.modes();
        let n = self.photons();
        if let LayerInput::Fock(s) = &self.input_state {
            if s.modes() != m {
                return Err(Error::InvalidSpec(format!(
                    "input state has {} modes, circuit has {m}",
                    s.modes()
                )));
            }
        } else if self.circuit.input_feature_count() > 0 {
            return Err(Error::InvalidSpec(
                "amplitude-encoded layers cannot also bind angle-encoded features".into(),
            ));
        }
        if n == 0 {
            return Err(Error::InvalidSpec(
                "layer input needs at least one photon".into(),
            ));
        }
        if self.space == ComputationSpace::Unbunched && n > m {
            return Err(Error::InvalidSpec(format!(
                "unbunched space needs n <= m, got n={n} m={m}"
            )));
        }
        self.strategy
            .validate(m)
            .map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: LayerSpec =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("layer spec serialization is infallible")
    }
}

#[derive(Debug, Clone)]
enum ReadoutKind {
    Bins(Binning),
    Expectation,
    Amplitudes,
}

/// Everything about the output that can be fixed before running the circuit.
#[derive(Debug, Clone)]
struct Readout {
    detector: Detector,
    /// States of the computation space, with their full-basis ranks.
    states: Vec<FockState>,
    ranks: Vec<usize>,
    unbunched: bool,
    kind: ReadoutKind,
}

impl Readout {
    fn new(spec: &LayerSpec) -> Result<Self> {
        let basis = FockBasis::new(spec.modes(), spec.photons())?;
        let unbunched = spec.space == ComputationSpace::Unbunched;
        let ranks: Vec<usize> = if unbunched {
            unbunched_ranks(&basis)
        } else {
            (0..basis.size()).collect()
        };
        let states = ranks
            .iter()
            .map(|&r| basis.unrank(r))
            .collect::<Result<Vec<_>>>()?;
        let detector = spec.detector;
        let kind = match &spec.strategy {
            MeasurementStrategy::Probabilities => {
                ReadoutKind::Bins(Binning::new(&states, |s| detector_key(s, detector, None)))
            }
            MeasurementStrategy::Partial(modes) => ReadoutKind::Bins(Binning::new(&states, |s| {
                detector_key(s, detector, Some(modes))
            })),
            MeasurementStrategy::PerModeExpectation => ReadoutKind::Expectation,
            MeasurementStrategy::Amplitudes => ReadoutKind::Amplitudes,
        };
        Ok(Readout {
            detector,
            states,
            ranks,
            unbunched,
            kind,
        })
    }

    fn dim(&self) -> usize {
        match &self.kind {
            ReadoutKind::Bins(b) => b.len(),
            ReadoutKind::Expectation => self.states.first().map_or(0, FockState::modes),
            ReadoutKind::Amplitudes => 2 * self.states.len(),
        }
    }

    fn labels(&self) -> Vec<String> {
        match &self.kind {
            ReadoutKind::Bins(b) => b
                .keys
                .iter()
                .map(|k| FockState::new(k.clone()).to_string())
                .collect(),
            ReadoutKind::Expectation => (0..self.dim()).map(|i| format!("mode{i}")).collect(),
            ReadoutKind::Amplitudes => self
                .states
                .iter()
                .flat_map(|s| [format!("re{s}"), format!("im{s}")])
                .collect(),
        }
    }

    /// Space projection: returns the amplitudes over `states` and, for the
    /// unbunched space, the pre-normalization norm.
    fn project(&self, a: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
        let v: Vec<Complex64> = self.ranks.iter().map(|&r| a[r]).collect();
        if !self.unbunched {
            return Ok((v, 1.0));
        }
        let success: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if success < 1e-300 {
            return Err(Error::NullProjection);
        }
        let norm = success.sqrt();
        Ok((v.into_iter().map(|z| z / norm).collect(), norm))
    }

    fn output(&self, v: &[Complex64]) -> Vec<f64> {
        match &self.kind {
            ReadoutKind::Bins(b) => {
                let p: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
                b.apply(&p)
            }
            ReadoutKind::Expectation => {
                let mut e = vec![0.0; self.dim()];
                for (s, z) in self.states.iter().zip(v) {
                    let p = z.norm_sqr();
                    for (ei, &o) in e.iter_mut().zip(s.occupations()) {
                        *ei += p * self.detector.reading(o) as f64;
                    }
                }
                e
            }
            ReadoutKind::Amplitudes => v.iter().flat_map(|z| [z.re, z.im]).collect(),
        }
    }

    /// `dL/dv` (real-pair) from `dL/doutput`.
    fn output_adjoint(&self, v: &[Complex64], upstream: &[f64]) -> Vec<Complex64> {
        match &self.kind {
            ReadoutKind::Bins(b) => v
                .iter()
                .zip(&b.slot_of)
                .map(|(z, &slot)| z * (2.0 * upstream[slot]))
                .collect(),
            ReadoutKind::Expectation => v
                .iter()
                .zip(&self.states)
                .map(|(z, s)| {
                    let dp: f64 = s
                        .occupations()
                        .iter()
                        .zip(upstream)
                        .map(|(&o, &g)| g * self.detector.reading(o) as f64)
                        .sum();
                    z * (2.0 * dp)
                })
                .collect(),
            ReadoutKind::Amplitudes => upstream
                .chunks_exact(2)
                .map(|g| Complex64::new(g[0], g[1]))
                .collect(),
        }
    }

    /// Pulls `dL/dv` back through the space projection onto the full basis.
    fn project_adjoint(
        &self,
        v: &[Complex64],
        norm: f64,
        g_v: &[Complex64],
        full: usize,
    ) -> Vec<Complex64> {
        let mut g = vec![Complex64::new(0.0, 0.0); full];
        if !self.unbunched {
            for (&r, &gv) in self.ranks.iter().zip(g_v) {
                g[r] = gv;
            }
            return g;
        }
        // v = a / |a| restricted: dL/da = (g_v - v Re<v, g_v>) / |a|
        let radial: f64 = v.iter().zip(g_v).map(|(z, gz)| (z.conj() * gz).re).sum();
        for ((&r, &z), &gv) in self.ranks.iter().zip(v).zip(g_v) {
            g[r] = (gv - z * radial) / norm;
        }
        g
    }
}

/// Number of output coordinates, determined without running the circuit.
pub fn output_dim(spec: &LayerSpec) -> Result<usize> {
    spec.validate()?;
    Ok(Readout::new(spec)?.dim())
}

/// One evolved component of the input (a single Fock state for Fock inputs).
#[derive(Debug, Clone)]
struct ComponentRecord {
    input_rank: usize,
    weight: f64,
    amplitudes: Vec<Complex64>,
    cache: ForwardCache,
}

#[derive(Debug, Clone)]
struct RowRecord {
    u: CMatrix,
    components: Vec<ComponentRecord>,
    input_norm: f64,
    v: Vec<Complex64>,
    norm: f64,
}

#[derive(Debug, Clone)]
struct TrainRecord {
    theta: Vec<f64>,
    x: Vec<Vec<f64>>,
    rows: Vec<RowRecord>,
}

/// A [`LayerSpec`] with current trainable values and cached transition graphs.
#[derive(Debug)]
pub struct LayerState {
    spec: LayerSpec,
    theta: Vec<f64>,
    readout: Readout,
    basis: FockBasis,
    graph: Option<TransitionGraph>,
    sector_graphs: Vec<OnceLock<TransitionGraph>>,
    builds: AtomicU64,
    record: Option<TrainRecord>,
}

impl LayerState {
    /// Uses the initial values declared on the circuit's trainable sources.
    pub fn new(spec: LayerSpec) -> Result<Self> {
        let theta = spec.circuit.initial_theta();
        Self::with_theta(spec, theta)
    }

    pub fn with_theta(spec: LayerSpec, theta: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if theta.len() != spec.circuit.trainable_count() {
            return Err(Error::ArityMismatch {
                what: "trainable parameters",
                expected: spec.circuit.trainable_count(),
                got: theta.len(),
            });
        }
        let readout = Readout::new(&spec)?;
        let basis = FockBasis::new(spec.modes(), spec.photons())?;
        let mut state = LayerState {
            spec,
            theta,
            readout,
            sector_graphs: Vec::new(),
            basis,
            graph: None,
            builds: AtomicU64::new(0),
            record: None,
        };
        match &state.spec.input_state {
            LayerInput::Fock(s) => {
                let g = TransitionGraph::build(state.spec.modes(), s)?;
                state.builds.fetch_add(1, Ordering::Relaxed);
                state.graph = Some(g);
            }
            LayerInput::AmplitudeEncoded { .. } => {
                state.sector_graphs = (0..state.basis.size()).map(|_| OnceLock::new()).collect();
            }
        }
        Ok(state)
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::ArityMismatch {
                what: "trainable parameters",
                expected: self.theta.len(),
                got: theta.len(),
            });
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    /// Transition graphs built by this layer so far.
    pub fn graph_builds(&self) -> u64 {
        self.builds.load(Ordering::Relaxed)
    }

    /// Replaces the Fock input, rebuilding the graph only if it changed.
    pub fn set_input_state(&mut self, input: FockState) -> Result<()> {
        if self.spec.input_state == LayerInput::Fock(input.clone()) {
            return Ok(());
        }
        let mut spec = self.spec.clone();
        spec.input_state = LayerInput::Fock(input.clone());
        spec.validate()?;
        let readout = Readout::new(&spec)?;
        let graph = TransitionGraph::build(spec.modes(), &input)?;
        self.builds.fetch_add(1, Ordering::Relaxed);
        self.basis = FockBasis::new(spec.modes(), spec.photons())?;
        self.spec = spec;
        self.readout = readout;
        self.graph = Some(graph);
        self.sector_graphs.clear();
        self.record = None;
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.readout.dim()
    }

    pub fn output_labels(&self) -> Vec<String> {
        self.readout.labels()
    }

    fn sector_graph(&self, rank: usize) -> Result<&TransitionGraph> {
        if let Some(g) = self.sector_graphs[rank].get() {
            return Ok(g);
        }
        let s = self.basis.unrank(rank)?;
        let g = TransitionGraph::build(self.spec.modes(), &s)?;
        if self.sector_graphs[rank].set(g).is_ok() {
            self.builds.fetch_add(1, Ordering::Relaxed);
        }
        Ok(self.sector_graphs[rank].get().expect("just initialized"))
    }

    fn row_unitary(&self, x: &[f64]) -> Result<CMatrix> {
        match self.spec.input_state {
            LayerInput::Fock(_) => {
                let need = self.spec.circuit.input_feature_count();
                if x.len() != need {
                    return Err(Error::ArityMismatch {
                        what: "input features",
                        expected: need,
                        got: x.len(),
                    });
                }
                self.spec.circuit.compile_unitary(&self.theta, x)
            }
            LayerInput::AmplitudeEncoded { .. } => {
                self.spec.circuit.compile_unitary(&self.theta, &[])
            }
        }
    }

    /// `(input rank, weight)` pairs and the input norm for one row.
    fn row_components(&self, x: &[f64], keep_zeros: bool) -> Result<(Vec<(usize, f64)>, f64)> {
        match &self.spec.input_state {
            LayerInput::Fock(s) => Ok((vec![(self.basis.rank(s)?, 1.0)], 1.0)),
            LayerInput::AmplitudeEncoded { .. } => {
                if x.len() > self.basis.size() {
                    return Err(Error::TooLong {
                        len: x.len(),
                        size: self.basis.size(),
                    });
                }
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 || !norm.is_finite() {
                    return Err(Error::ZeroNorm);
                }
                Ok((
                    x.iter()
                        .enumerate()
                        .filter(|(_, &v)| keep_zeros || v != 0.0)
                        .map(|(i, &v)| (i, v / norm))
                        .collect(),
                    norm,
                ))
            }
        }
    }

    fn graph_for(&self, rank: usize) -> Result<&TransitionGraph> {
        match &self.graph {
            Some(g) => Ok(g),
            None => self.sector_graph(rank),
        }
    }

    fn forward_row(&self, x: &[f64], ws: &mut Workspace) -> Result<Vec<f64>> {
        let u = self.row_unitary(x)?;
        let (components, _) = self.row_components(x, false)?;
        let mut total = vec![Complex64::new(0.0, 0.0); self.basis.size()];
        for (rank, weight) in components {
            let a = self
                .graph_for(rank)?
                .forward_with(&u, ForwardOptions::default(), ws)?;
            for (t, z) in total.iter_mut().zip(&a.values) {
                *t += z * weight;
            }
        }
        let (v, _) = self.readout.project(&total)?;
        Ok(self.readout.output(&v))
    }

    fn forward_row_cached(&self, x: &[f64]) -> Result<(Vec<f64>, RowRecord)> {
        let u = self.row_unitary(x)?;
        let (components, input_norm) = self.row_components(x, true)?;
        let mut total = vec![Complex64::new(0.0, 0.0); self.basis.size()];
        let mut records = Vec::with_capacity(components.len());
        for (rank, weight) in components {
            let (a, cache) = self
                .graph_for(rank)?
                .forward_cached(&u, ForwardOptions::default())?;
            for (t, z) in total.iter_mut().zip(&a.values) {
                *t += z * weight;
            }
            records.push(ComponentRecord {
                input_rank: rank,
                weight,
                amplitudes: a.values,
                cache,
            });
        }
        let (v, norm) = self.readout.project(&total)?;
        let out = self.readout.output(&v);
        Ok((
            out,
            RowRecord {
                u,
                components: records,
                input_norm,
                v,
                norm,
            },
        ))
    }

    /// Inference pass; rows run in parallel, no intermediates retained.
    pub fn forward(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.par_iter()
            .enumerate()
            .map_init(Workspace::default, |ws, (i, x)| {
                self.forward_row(x, ws).map_err(|e| e.at_row(i))
            })
            .collect()
    }

    /// Training pass; retains what [`Self::backward`] needs for this exact `(theta, xs)`.
    pub fn forward_train(&mut self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let results: Vec<(Vec<f64>, RowRecord)> = xs
            .par_iter()
            .enumerate()
            .map(|(i, x)| self.forward_row_cached(x).map_err(|e| e.at_row(i)))
            .collect::<Result<_>>()?;
        let (outs, rows): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        self.record = Some(TrainRecord {
            theta: self.theta.clone(),
            x: xs.to_vec(),
            rows,
        });
        Ok(outs)
    }

    fn backward_row(
        &self,
        x: &[f64],
        rec: &RowRecord,
        upstream: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if upstream.len() != self.readout.dim() {
            return Err(Error::LengthMismatch(upstream.len(), self.readout.dim()));
        }
        let g_v = self.readout.output_adjoint(&rec.v, upstream);
        let g_a = self
            .readout
            .project_adjoint(&rec.v, rec.norm, &g_v, self.basis.size());
        let mut g_u = CMatrix::zeros(self.spec.modes(), self.spec.modes());
        let mut g_weights = Vec::with_capacity(rec.components.len());
        for comp in &rec.components {
            let scaled: Vec<Complex64> = g_a.iter().map(|g| g * comp.weight).collect();
            g_u += self
                .graph_for(comp.input_rank)?
                .backward(&rec.u, &comp.cache, &scaled)?;
            let gw: f64 = g_a
                .iter()
                .zip(&comp.amplitudes)
                .map(|(g, a)| (g.conj() * a).re)
                .sum();
            g_weights.push(gw);
        }
        match self.spec.input_state {
            LayerInput::Fock(_) => self.spec.circuit.backprop(&self.theta, x, &g_u),
            LayerInput::AmplitudeEncoded { .. } => {
                let (d_theta, _) = self.spec.circuit.backprop(&self.theta, &[], &g_u)?;
                // c = x / |x|: dL/dx = (g - c (c . g)) / |x|
                let dot: f64 = rec
                    .components
                    .iter()
                    .zip(&g_weights)
                    .map(|(c, g)| c.weight * g)
                    .sum();
                let mut d_x = vec![0.0; x.len()];
                for (c, g) in rec.components.iter().zip(&g_weights) {
                    d_x[c.input_rank] = (g - c.weight * dot) / rec.input_norm;
                }
                Ok((d_theta, d_x))
            }
        }
    }

    /// Gradients of a scalar loss given `dL/doutput` per row.
    ///
    /// Returns `dL/dtheta` summed over rows in ascending row order, and
    /// `dL/dx` per row.
    pub fn backward(
        &self,
        xs: &[Vec<f64>],
        upstream: &[Vec<f64>],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let rec = self.record.as_ref().ok_or(Error::MissingIntermediates)?;
        if rec.theta != self.theta || rec.x != xs {
            return Err(Error::StaleIntermediates);
        }
        if upstream.len() != xs.len() {
            return Err(Error::LengthMismatch(upstream.len(), xs.len()));
        }
        let per_row: Vec<(Vec<f64>, Vec<f64>)> = xs
            .par_iter()
            .zip(&rec.rows)
            .zip(upstream)
            .enumerate()
            .map(|(i, ((x, r), up))| self.backward_row(x, r, up).map_err(|e| e.at_row(i)))
            .collect::<Result<_>>()?;
        let mut d_theta = vec![0.0; self.theta.len()];
        let mut d_x = Vec::with_capacity(per_row.len());
        for (dt, dx) in per_row {
            for (acc, v) in d_theta.iter_mut().zip(&dt) {
                *acc += v;
            }
            d_x.push(dx);
        }
        Ok((d_theta, d_x))
    }

    /// Output amplitudes over the full basis for one row (before any space projection).
    pub fn state(&self, x: &[f64]) -> Result<AmplitudeVector> {
        let u = self.row_unitary(x)?;
        let (components, _) = self.row_components(x, false)?;
        let mut total = AmplitudeVector::zeros(self.basis.clone());
        let mut ws = Workspace::default();
        for (rank, weight) in components {
            let a = self
                .graph_for(rank)?
                .forward_with(&u, ForwardOptions::default(), &mut ws)?;
            for (t, z) in total.values.iter_mut().zip(&a.values) {
                *t += z * weight;
            }
        }
        Ok(total)
    }
}
