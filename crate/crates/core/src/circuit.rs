//! Parameterized linear-optical circuits.
//!
//! Components are listed in physical order (first one hit by the light
//! first). The compiled unitary is the product with the last component
//! leftmost. Conventions:
//!
//! - phase shifter on mode `i`: diagonal factor `exp(i*phi)` at `(i, i)`;
//! - beam splitter on `(i, i+1)`: block `[[cos(t/2), i sin(t/2)], [i sin(t/2), cos(t/2)]]`,
//!   reflectivity `cos^2(t/2)`.

use std::collections::HashMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{unitarity_deviation, CMatrix};

const STATIC_UNITARY_TOL: f64 = 1e-10;

fn unit_scale() -> f64 {
    1.0
}

/// Where the angle of a component comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamSource {
    Trainable {
        name: String,
        #[serde(default)]
        init: f64,
    },
    Input {
        name: String,
        index: usize,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
    Fixed {
        value: f64,
    },
}

impl ParamSource {
    pub fn trainable(name: impl Into<String>) -> Self {
        ParamSource::Trainable {
            name: name.into(),
            init: 0.0,
        }
    }

    pub fn input(name: impl Into<String>, index: usize, scale: f64) -> Self {
        ParamSource::Input {
            name: name.into(),
            index,
            scale,
        }
    }

    pub fn fixed(value: f64) -> Self {
        ParamSource::Fixed { value }
    }

    fn name(&self) -> Option<&str> {
        match self {
            ParamSource::Trainable { name, .. } | ParamSource::Input { name, .. } => Some(name),
            ParamSource::Fixed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    PhaseShifter {
        mode: usize,
        phase: ParamSource,
    },
    /// Acts on modes `(mode, mode + 1)`.
    BeamSplitter {
        mode: usize,
        theta: ParamSource,
    },
    StaticUnitary {
        first_mode: usize,
        matrix: CMatrix,
    },
}

/// Identifies what a derivative is taken with respect to.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamRef {
    Trainable(String),
    Feature(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Binding {
    Trainable(usize),
    Input { index: usize, scale: f64 },
    Fixed(f64),
    None,
}

impl Binding {
    #[inline]
    fn value(&self, theta: &[f64], x: &[f64]) -> f64 {
        match *self {
            Binding::Trainable(i) => theta[i],
            Binding::Input { index, scale } => scale * x[index],
            Binding::Fixed(v) => v,
            Binding::None => 0.0,
        }
    }
}

/// An ordered list of components over `m` modes with named parameter bindings.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCircuit {
    m: usize,
    components: Vec<Component>,
    bindings: Vec<Binding>,
    trainable_names: Vec<String>,
    trainable_init: Vec<f64>,
    input_feature_count: usize,
    names: HashMap<String, usize>,
}

impl ParamCircuit {
    pub fn new(m: usize) -> Self {
        ParamCircuit {
            m,
            components: Vec::new(),
            bindings: Vec::new(),
            trainable_names: Vec::new(),
            trainable_init: Vec::new(),
            input_feature_count: 0,
            names: HashMap::new(),
        }
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn trainable_names(&self) -> &[String] {
        &self.trainable_names
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable_names.len()
    }

    pub fn input_feature_count(&self) -> usize {
        self.input_feature_count
    }

    /// Initial values declared on the trainable sources, in trainable order.
    pub fn initial_theta(&self) -> Vec<f64> {
        self.trainable_init.clone()
    }

    /// Independent uniform draws in `[0, 2pi)`, one per trainable parameter.
    pub fn random_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.trainable_count())
            .map(|_| rng.random_range(0.0..TAU))
            .collect()
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.m {
            return Err(Error::ModeOutOfRange {
                mode,
                modes: self.m,
            });
        }
        Ok(())
    }

    fn bind(&mut self, src: &ParamSource) -> Result<Binding> {
        if let Some(name) = src.name() {
            if self.names.contains_key(name) {
                return Err(Error::DuplicateName(name.to_string()));
            }
        }
        Ok(match src {
            ParamSource::Trainable { name, init } => {
                let idx = self.trainable_names.len();
                self.names.insert(name.clone(), idx);
                self.trainable_names.push(name.clone());
                self.trainable_init.push(*init);
                Binding::Trainable(idx)
            }
            ParamSource::Input { name, index, scale } => {
                self.names.insert(name.clone(), usize::MAX);
                self.input_feature_count = self.input_feature_count.max(index + 1);
                Binding::Input {
                    index: *index,
                    scale: *scale,
                }
            }
            ParamSource::Fixed { value } => Binding::Fixed(*value),
        })
    }

    /// Appends a component after validating modes, names and unitarity.
    pub fn push(&mut self, component: Component) -> Result<&mut Self> {
        let binding = match &component {
            Component::PhaseShifter { mode, phase } => {
                self.check_mode(*mode)?;
                self.bind(phase)?
            }
            Component::BeamSplitter { mode, theta } => {
                self.check_mode(*mode + 1)?;
                self.bind(theta)?
            }
            Component::StaticUnitary { first_mode, matrix } => {
                if matrix.nrows() != matrix.ncols() {
                    return Err(Error::NonSquare {
                        rows: matrix.nrows(),
                        cols: matrix.ncols(),
                    });
                }
                if matrix.nrows() == 0 {
                    return Err(Error::DimensionMismatch("empty static unitary".into()));
                }
                self.check_mode(first_mode + matrix.nrows() - 1)?;
                let dev = unitarity_deviation(matrix);
                if dev > STATIC_UNITARY_TOL {
                    return Err(Error::NonUnitary(dev));
                }
                Binding::None
            }
        };
        self.components.push(component);
        self.bindings.push(binding);
        Ok(self)
    }

    pub fn phase_shifter(&mut self, mode: usize, phase: ParamSource) -> Result<&mut Self> {
        self.push(Component::PhaseShifter { mode, phase })
    }

    pub fn beam_splitter(&mut self, mode: usize, theta: ParamSource) -> Result<&mut Self> {
        self.push(Component::BeamSplitter { mode, theta })
    }

    pub fn static_unitary(&mut self, first_mode: usize, matrix: CMatrix) -> Result<&mut Self> {
        self.push(Component::StaticUnitary { first_mode, matrix })
    }

    /// Appends every component of `other` (applied after the current ones).
    pub fn append(&mut self, other: &ParamCircuit) -> Result<&mut Self> {
        if other.m != self.m {
            return Err(Error::DimensionMismatch(format!(
                "cannot append a {}-mode circuit to a {}-mode circuit",
                other.m, self.m
            )));
        }
        for c in &other.components {
            self.push(c.clone())?;
        }
        Ok(self)
    }

    /// Appends one feature-bound phase shifter per listed mode. Feature
    /// indices continue from the current `input_feature_count`.
    pub fn add_angle_encoding(
        &mut self,
        modes: &[usize],
        name_prefix: &str,
        scale: f64,
    ) -> Result<&mut Self> {
        for (i, &mode) in modes.iter().enumerate() {
            self.check_mode(mode)?;
            if modes[..i].contains(&mode) {
                return Err(Error::DuplicateMode(mode));
            }
        }
        let base = self.input_feature_count;
        for (j, &mode) in modes.iter().enumerate() {
            let idx = base + j;
            self.phase_shifter(
                mode,
                ParamSource::input(format!("{name_prefix}{idx}"), idx, scale),
            )?;
        }
        Ok(self)
    }

    fn check_arity(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.trainable_count() {
            return Err(Error::ArityMismatch {
                what: "trainable parameters",
                expected: self.trainable_count(),
                got: theta.len(),
            });
        }
        if x.len() < self.input_feature_count {
            return Err(Error::ArityMismatch {
                what: "input features",
                expected: self.input_feature_count,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// The `m x m` unitary for the given trainable values and features.
    pub fn compile_unitary(&self, theta: &[f64], x: &[f64]) -> Result<CMatrix> {
        self.check_arity(theta, x)?;
        let mut u = CMatrix::identity(self.m, self.m);
        for (comp, binding) in self.components.iter().zip(&self.bindings) {
            apply_left(comp, binding.value(theta, x), &mut u);
        }
        Ok(u)
    }

    /// `dU/dp` by the product rule over every component bound to `wrt`.
    pub fn compile_unitary_derivative(
        &self,
        theta: &[f64],
        x: &[f64],
        wrt: &ParamRef,
    ) -> Result<CMatrix> {
        self.check_arity(theta, x)?;
        let weight = |b: &Binding| -> Option<f64> {
            match (wrt, b) {
                (ParamRef::Trainable(name), Binding::Trainable(i)) => {
                    (self.trainable_names[*i] == *name).then_some(1.0)
                }
                (ParamRef::Feature(f), Binding::Input { index, scale }) => {
                    (index == f).then_some(*scale)
                }
                _ => None,
            }
        };
        match wrt {
            ParamRef::Trainable(name) if !self.names.contains_key(name) => {
                return Err(Error::UnknownParameter(name.clone()))
            }
            ParamRef::Trainable(name) if self.names[name] == usize::MAX => {
                return Err(Error::UnknownParameter(name.clone()))
            }
            ParamRef::Feature(f) if *f >= x.len() => {
                return Err(Error::UnknownParameter(format!("feature {f}")))
            }
            _ => {}
        }

        let mut total = CMatrix::zeros(self.m, self.m);
        let mut prefix = CMatrix::identity(self.m, self.m);
        for (c, (comp, binding)) in self.components.iter().zip(&self.bindings).enumerate() {
            let value = binding.value(theta, x);
            if let Some(w) = weight(binding) {
                let mut term = prefix.clone();
                apply_derivative_left(comp, value, &mut term);
                for (later, lb) in self.components[c + 1..].iter().zip(&self.bindings[c + 1..]) {
                    apply_left(later, lb.value(theta, x), &mut term);
                }
                total += term * Complex64::new(w, 0.0);
            }
            apply_left(comp, value, &mut prefix);
        }
        Ok(total)
    }

    /// Pulls a gradient with respect to the compiled unitary back onto the
    /// trainable parameters and the features.
    ///
    /// `grad_u[(i, j)]` holds `dL/dRe U_ij + i dL/dIm U_ij`. Returns
    /// `(dL/dtheta, dL/dx)` with `dL/dx` as long as `x`.
    pub fn backprop(
        &self,
        theta: &[f64],
        x: &[f64],
        grad_u: &CMatrix,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_arity(theta, x)?;
        let mut u = self.compile_unitary(theta, x)?;
        let mut d_theta = vec![0.0; theta.len()];
        let mut d_x = vec![0.0; x.len()];
        // adj = A_c^H G where A_c is the product of components after c.
        let mut adj = grad_u.clone();
        for (comp, binding) in self.components.iter().zip(&self.bindings).rev() {
            let value = binding.value(theta, x);
            // Rewind u to the product of components strictly before this one.
            apply_adjoint_left(comp, value, &mut u);
            let local = match binding {
                Binding::Trainable(_) | Binding::Input { .. } => {
                    local_gradient(comp, value, &adj, &u)
                }
                _ => 0.0,
            };
            match *binding {
                Binding::Trainable(i) => d_theta[i] += local,
                Binding::Input { index, scale } => d_x[index] += scale * local,
                _ => {}
            }
            apply_adjoint_left(comp, value, &mut adj);
        }
        Ok((d_theta, d_x))
    }
}

#[inline]
fn bs_block(theta: f64) -> (Complex64, Complex64) {
    let half = 0.5 * theta;
    (
        Complex64::new(half.cos(), 0.0),
        Complex64::new(0.0, half.sin()),
    )
}

#[inline]
fn bs_block_derivative(theta: f64) -> (Complex64, Complex64) {
    let half = 0.5 * theta;
    (
        Complex64::new(-0.5 * half.sin(), 0.0),
        Complex64::new(0.0, 0.5 * half.cos()),
    )
}

fn mix_rows(u: &mut CMatrix, i: usize, diag: Complex64, off: Complex64) {
    for col in 0..u.ncols() {
        let a = u[(i, col)];
        let b = u[(i + 1, col)];
        u[(i, col)] = diag * a + off * b;
        u[(i + 1, col)] = off * a + diag * b;
    }
}

fn static_rows(u: &mut CMatrix, first: usize, matrix: &CMatrix) {
    let k = matrix.nrows();
    let rows = u.rows(first, k).into_owned();
    let mixed = matrix * rows;
    u.rows_mut(first, k).copy_from(&mixed);
}

/// `u <- M u` for one component.
fn apply_left(comp: &Component, value: f64, u: &mut CMatrix) {
    match comp {
        Component::PhaseShifter { mode, .. } => {
            let f = Complex64::from_polar(1.0, value);
            u.row_mut(*mode).iter_mut().for_each(|z| *z *= f);
        }
        Component::BeamSplitter { mode, .. } => {
            let (c, s) = bs_block(value);
            mix_rows(u, *mode, c, s);
        }
        Component::StaticUnitary { first_mode, matrix } => static_rows(u, *first_mode, matrix),
    }
}

/// `u <- M^H u` for one component.
fn apply_adjoint_left(comp: &Component, value: f64, u: &mut CMatrix) {
    match comp {
        Component::PhaseShifter { mode, .. } => {
            let f = Complex64::from_polar(1.0, -value);
            u.row_mut(*mode).iter_mut().for_each(|z| *z *= f);
        }
        Component::BeamSplitter { mode, .. } => {
            let (c, s) = bs_block(value);
            mix_rows(u, *mode, c, s.conj());
        }
        Component::StaticUnitary { first_mode, matrix } => {
            static_rows(u, *first_mode, &matrix.adjoint())
        }
    }
}

/// `u <- (dM/dp) u`; rows outside the component's block become zero.
fn apply_derivative_left(comp: &Component, value: f64, u: &mut CMatrix) {
    match comp {
        Component::PhaseShifter { mode, .. } => {
            let f = Complex64::new(0.0, 1.0) * Complex64::from_polar(1.0, value);
            for r in 0..u.nrows() {
                if r == *mode {
                    u.row_mut(r).iter_mut().for_each(|z| *z *= f);
                } else {
                    u.row_mut(r).fill(Complex64::new(0.0, 0.0));
                }
            }
        }
        Component::BeamSplitter { mode, .. } => {
            let (dc, ds) = bs_block_derivative(value);
            mix_rows(u, *mode, dc, ds);
            for r in 0..u.nrows() {
                if r != *mode && r != *mode + 1 {
                    u.row_mut(r).fill(Complex64::new(0.0, 0.0));
                }
            }
        }
        Component::StaticUnitary { .. } => u.fill(Complex64::new(0.0, 0.0)),
    }
}

/// `Re sum conj(H B^H)_ij dM_ij` over the component block, where `adj = H`
/// and `before = B`.
fn local_gradient(comp: &Component, value: f64, adj: &CMatrix, before: &CMatrix) -> f64 {
    let entry = |i: usize, j: usize| -> Complex64 {
        adj.row(i)
            .iter()
            .zip(before.row(j).iter())
            .map(|(h, b)| h * b.conj())
            .sum()
    };
    match comp {
        Component::PhaseShifter { mode, .. } => {
            let d = Complex64::new(0.0, 1.0) * Complex64::from_polar(1.0, value);
            (entry(*mode, *mode).conj() * d).re
        }
        Component::BeamSplitter { mode, .. } => {
            let (dc, ds) = bs_block_derivative(value);
            let i = *mode;
            let g00 = entry(i, i);
            let g01 = entry(i, i + 1);
            let g10 = entry(i + 1, i);
            let g11 = entry(i + 1, i + 1);
            ((g00.conj() + g11.conj()) * dc + (g01.conj() + g10.conj()) * ds).re
        }
        Component::StaticUnitary { .. } => 0.0,
    }
}

/// Rectangular brick-wall mesh over `m` modes: `m` columns alternating
/// between even and odd adjacent pairs, each beam splitter preceded by a
/// phase shifter on its upper mode, followed by one output phase per mode.
/// All angles are trainable and initialized to zero.
pub fn universal_mesh(m: usize, name_prefix: &str) -> ParamCircuit {
    let mut c = ParamCircuit::new(m);
    let mut k = 0;
    for column in 0..m {
        let mut upper = column % 2;
        while upper + 1 < m {
            c.phase_shifter(
                upper,
                ParamSource::trainable(format!("{name_prefix}_phi{k}")),
            )
            .expect("mesh modes in range");
            c.beam_splitter(
                upper,
                ParamSource::trainable(format!("{name_prefix}_theta{k}")),
            )
            .expect("mesh modes in range");
            k += 1;
            upper += 2;
        }
    }
    for mode in 0..m {
        c.phase_shifter(
            mode,
            ParamSource::trainable(format!("{name_prefix}_out{mode}")),
        )
        .expect("mesh modes in range");
    }
    c
}

#[derive(Serialize, Deserialize)]
struct ComponentDoc {
    #[serde(rename = "type")]
    kind: String,
    modes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    param: Option<ParamSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Serialize, Deserialize)]
struct CircuitDoc {
    modes: usize,
    components: Vec<ComponentDoc>,
}

impl Serialize for ParamCircuit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let components = self
            .components
            .iter()
            .map(|c| match c {
                Component::PhaseShifter { mode, phase } => ComponentDoc {
                    kind: "ps".into(),
                    modes: vec![*mode],
                    param: Some(phase.clone()),
                    matrix: None,
                },
                Component::BeamSplitter { mode, theta } => ComponentDoc {
                    kind: "bs".into(),
                    modes: vec![*mode, *mode + 1],
                    param: Some(theta.clone()),
                    matrix: None,
                },
                Component::StaticUnitary { first_mode, matrix } => ComponentDoc {
                    kind: "static".into(),
                    modes: (*first_mode..first_mode + matrix.nrows()).collect(),
                    param: None,
                    matrix: Some(
                        matrix
                            .row_iter()
                            .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
                            .collect(),
                    ),
                },
            })
            .collect();
        CircuitDoc {
            modes: self.m,
            components,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamCircuit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = CircuitDoc::deserialize(d)?;
        ParamCircuit::from_doc(doc).map_err(D::Error::custom)
    }
}

impl ParamCircuit {
    fn from_doc(doc: CircuitDoc) -> Result<Self> {
        let mut c = ParamCircuit::new(doc.modes);
        for (idx, comp) in doc.components.into_iter().enumerate() {
            let missing = || Error::Parse(format!("component {idx}: missing `param`"));
            match comp.kind.as_str() {
                "ps" => {
                    let [mode] = comp.modes[..] else {
                        return Err(Error::Parse(format!("component {idx}: ps takes one mode")));
                    };
                    c.phase_shifter(mode, comp.param.ok_or_else(missing)?)?;
                }
                "bs" => {
                    let [a, b] = comp.modes[..] else {
                        return Err(Error::Parse(format!("component {idx}: bs takes two modes")));
                    };
                    if b != a + 1 {
                        return Err(Error::Parse(format!(
                            "component {idx}: bs modes must be adjacent"
                        )));
                    }
                    c.beam_splitter(a, comp.param.ok_or_else(missing)?)?;
                }
                "static" => {
                    let rows = comp.matrix.ok_or_else(|| {
                        Error::Parse(format!("component {idx}: missing `matrix`"))
                    })?;
                    let k = rows.len();
                    if comp.modes.len() != k
                        || comp.modes.windows(2).any(|w| w[1] != w[0] + 1)
                        || rows.iter().any(|r| r.len() != k)
                    {
                        return Err(Error::Parse(format!(
                            "component {idx}: static matrix must be k x k over k consecutive modes"
                        )));
                    }
                    let matrix =
                        CMatrix::from_fn(k, k, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1]));
                    c.static_unitary(comp.modes[0], matrix)?;
                }
                other => {
                    return Err(Error::Parse(format!(
                        "component {idx}: unknown type `{other}`"
                    )))
                }
            }
        }
        Ok(c)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("circuit serialization is infallible")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn empty_is_identity() {
        let circ = ParamCircuit::new(4);
        let u = circ.compile_unitary(&[], &[]).unwrap();
        assert_eq!(u, CMatrix::identity(4, 4));
    }

    #[test]
    fn phase_pi() {
        let mut circ = ParamCircuit::new(2);
        circ.phase_shifter(0, ParamSource::fixed(PI)).unwrap();
        let u = circ.compile_unitary(&[], &[]).unwrap();
        let expected = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(-1.0, 0.0),
            c(1.0, 0.0),
        ]));
        assert!(max_diff(&u, &expected) < 1e-15);
    }

    #[test]
    fn balanced_splitter() {
        let mut circ = ParamCircuit::new(2);
        circ.beam_splitter(0, ParamSource::fixed(PI / 2.0)).unwrap();
        let u = circ.compile_unitary(&[], &[]).unwrap();
        let h = FRAC_1_SQRT_2;
        let expected = CMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(0.0, h), c(0.0, h), c(h, 0.0)]);
        assert!(max_diff(&u, &expected) < 1e-15);
    }

    #[test]
    fn composition_order() {
        // A = splitter, B = phase on mode 0; compile(A then B) == B * A
        let mut a = ParamCircuit::new(2);
        a.beam_splitter(0, ParamSource::fixed(0.7)).unwrap();
        let mut b = ParamCircuit::new(2);
        b.phase_shifter(0, ParamSource::fixed(1.1)).unwrap();
        let mut ab = a.clone();
        ab.append(&b).unwrap();
        let ma = a.compile_unitary(&[], &[]).unwrap();
        let mb = b.compile_unitary(&[], &[]).unwrap();
        let mab = ab.compile_unitary(&[], &[]).unwrap();
        assert!(max_diff(&mab, &(&mb * &ma)) < 1e-15);
    }

    #[test]
    fn phase_derivative_at_zero() {
        let mut circ = ParamCircuit::new(1);
        circ.phase_shifter(0, ParamSource::trainable("phi"))
            .unwrap();
        let d = circ
            .compile_unitary_derivative(&[0.0], &[], &ParamRef::Trainable("phi".into()))
            .unwrap();
        assert!((d[(0, 0)] - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn derivative_of_unused_feature_is_zero() {
        let mut circ = ParamCircuit::new(2);
        circ.phase_shifter(0, ParamSource::trainable("a")).unwrap();
        let d = circ
            .compile_unitary_derivative(&[0.3], &[0.0, 0.0], &ParamRef::Feature(1))
            .unwrap();
        assert!(d.iter().all(|z| z.norm() == 0.0));
        assert!(matches!(
            circ.compile_unitary_derivative(&[0.3], &[], &ParamRef::Trainable("nope".into())),
            Err(Error::UnknownParameter(_))
        ));
    }

    #[test]
    fn mesh_counts() {
        let m2 = universal_mesh(2, "W");
        let bs = |c: &ParamCircuit| {
            c.components()
                .iter()
                .filter(|x| matches!(x, Component::BeamSplitter { .. }))
                .count()
        };
        let ps = |c: &ParamCircuit| {
            c.components()
                .iter()
                .filter(|x| matches!(x, Component::PhaseShifter { .. }))
                .count()
        };
        assert_eq!((bs(&m2), ps(&m2), m2.trainable_count()), (1, 3, 4));
        let m3 = universal_mesh(3, "W");
        assert_eq!((bs(&m3), m3.trainable_count()), (3, 9));
        for m in 2..=8 {
            let mesh = universal_mesh(m, "W");
            assert_eq!(bs(&mesh), m * (m - 1) / 2);
            assert_eq!(mesh.trainable_count(), m * (m - 1) + m);
        }
    }

    #[test]
    fn angle_encoding() {
        let mut circ = ParamCircuit::new(3);
        circ.add_angle_encoding(&[0, 1], "x_", 1.0).unwrap();
        assert_eq!(circ.input_feature_count(), 2);
        let u0 = circ.compile_unitary(&[], &[0.0, 0.0]).unwrap();
        assert_eq!(u0, CMatrix::identity(3, 3));
        let upi = circ.compile_unitary(&[], &[PI, 0.0]).unwrap();
        for j in 0..3 {
            assert!((upi[(0, j)] + u0[(0, j)]).norm() < 1e-15);
            assert_eq!(upi[(1, j)], u0[(1, j)]);
        }
        assert!(matches!(
            ParamCircuit::new(3).add_angle_encoding(&[0, 3], "x", 1.0),
            Err(Error::ModeOutOfRange { .. })
        ));
        assert!(matches!(
            ParamCircuit::new(3).add_angle_encoding(&[1, 1], "x", 1.0),
            Err(Error::DuplicateMode(1))
        ));
    }

    #[test]
    fn arity_and_names() {
        let mesh = universal_mesh(3, "W");
        assert!(matches!(
            mesh.compile_unitary(&[0.0; 3], &[]),
            Err(Error::ArityMismatch { .. })
        ));
        let mut dup = universal_mesh(2, "W");
        assert!(matches!(
            dup.append(&universal_mesh(2, "W")),
            Err(Error::DuplicateName(_))
        ));
    }

    #[test]
    fn static_must_be_unitary() {
        let mut circ = ParamCircuit::new(2);
        let bad = CMatrix::from_element(2, 2, c(1.0, 0.0));
        assert!(matches!(
            circ.static_unitary(0, bad),
            Err(Error::NonUnitary(_))
        ));
        let ok =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(
            circ.static_unitary(1, ok.clone()),
            Err(Error::ModeOutOfRange { .. })
        ));
        circ.static_unitary(0, ok).unwrap();
    }

    #[test]
    fn json_roundtrip_is_stable() {
        let mut circ = universal_mesh(3, "W1");
        circ.add_angle_encoding(&[0], "x", 0.5).unwrap();
        circ.phase_shifter(2, ParamSource::fixed(0.25)).unwrap();
        let swap =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        circ.static_unitary(1, swap).unwrap();
        let text = circ.to_json();
        let back = ParamCircuit::from_json(&text).unwrap();
        assert_eq!(back, circ);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn json_rejects_bad_components() {
        let bad = r#"{"modes":3,"components":[{"type":"bs","modes":[0,2],"param":{"kind":"fixed","value":1.0}}]}"#;
        assert!(ParamCircuit::from_json(bad).is_err());
        let bad = r#"{"modes":2,"components":[{"type":"xx","modes":[0]}]}"#;
        assert!(ParamCircuit::from_json(bad).is_err());
        let ok = r#"{"modes":2,"components":[{"type":"ps","modes":[1],"param":{"kind":"input","name":"x0","index":0}}]}"#;
        let circ = ParamCircuit::from_json(ok).unwrap();
        assert_eq!(circ.input_feature_count(), 1);
    }
}
