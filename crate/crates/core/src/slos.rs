//! Strong simulation by photon-by-photon evolution over a precomputed
//! transition graph.
//!
//! Photon `k` (injected in mode `p_k`) maps the unnormalized `(k-1)`-photon
//! amplitudes onto the `k`-photon basis:
//!
//! ```text
//! a_k[t + e_j] += U[j, p_k] * sqrt(t_j + 1) * a_{k-1}[t]
//! ```
//!
//! which only needs the edge list `(t, t + e_j, j, sqrt(t_j + 1))`. That list
//! depends on `m` and the input state alone, so it is built once and each
//! forward pass only touches `n * C(m+n-1, n)` multiply-adds. The final
//! layer is divided by `sqrt(prod s_i!)`.
//!
//! Gradients use the real-pair convention: a complex entry `G` of a
//! gradient stores `dL/dRe + i dL/dIm` of the corresponding quantity.

use std::cell::Cell;
use std::io::{self, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockState};
use crate::{unitarity_deviation, CMatrix};

/// Default refusal threshold for the `n`-photon basis size.
pub const DEFAULT_STATE_CAP: usize = 1 << 26;

const FORWARD_UNITARY_TOL: f64 = 1e-8;

thread_local! {
    static GRAPH_BUILDS: Cell<u64> = const { Cell::new(0) };
}

/// Number of transition graphs built on the calling thread so far.
pub fn graph_builds_on_this_thread() -> u64 {
    GRAPH_BUILDS.with(Cell::get)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub mode: u32,
    pub factor: f64,
}

/// Unitary-independent transition structure for one `(m, input)` pair.
#[derive(Debug, Clone)]
pub struct TransitionGraph {
    m: usize,
    input: FockState,
    input_modes: Vec<usize>,
    /// `bases[k]` is the `k`-photon basis, `k = 0..=n`.
    bases: Vec<FockBasis>,
    /// `steps[k-1]` holds the edges adding photon `k`, sorted by `dst`.
    steps: Vec<Vec<Edge>>,
    input_norm: f64,
}

/// Dense amplitudes over a Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeVector {
    pub basis: FockBasis,
    pub values: Vec<Complex64>,
}

impl AmplitudeVector {
    pub fn zeros(basis: FockBasis) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); basis.size()];
        AmplitudeVector { basis, values }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `<self|other>`, antilinear in `self`.
    pub fn inner(&self, other: &AmplitudeVector) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn amplitude(&self, s: &FockState) -> Result<Complex64> {
        Ok(self.values[self.basis.rank(s)?])
    }
}

/// Per-photon amplitude layers retained for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `layers[k]` holds the unnormalized `k`-photon amplitudes, `k = 0..n`.
    layers: Vec<Vec<Complex64>>,
}

impl ForwardCache {
    pub fn layers(&self) -> &[Vec<Complex64>] {
        &self.layers
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    pub check_unitary: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            check_unitary: true,
        }
    }
}

/// Ping-pong buffers reused across inference passes.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    front: Vec<Complex64>,
    back: Vec<Complex64>,
}

impl TransitionGraph {
    pub fn build(m: usize, input: &FockState) -> Result<Self> {
        Self::build_with_cap(m, input, DEFAULT_STATE_CAP)
    }

    pub fn build_with_cap(m: usize, input: &FockState, cap: usize) -> Result<Self> {
        if input.modes() != m {
            return Err(Error::DimensionMismatch(format!(
                "input state has {} modes, graph has {m}",
                input.modes()
            )));
        }
        let n = input.photon_count();
        if n == 0 {
            return Err(Error::InvalidSpec(
                "input state must hold at least one photon".into(),
            ));
        }
        let top = crate::fock::basis_size(m, n)?;
        if top > cap as u64 {
            return Err(Error::Overflow(format!(
                "{top} states for m={m}, n={n} exceeds the cap of {cap}"
            )));
        }
        if top > u32::MAX as u64 {
            return Err(Error::Overflow(format!(
                "{top} states exceed 32-bit edge indices"
            )));
        }
        let bases = (0..=n)
            .map(|k| FockBasis::new(m, k))
            .collect::<Result<Vec<_>>>()?;

        let mut steps = Vec::with_capacity(n);
        let mut scratch = vec![0u8; m];
        for k in 1..=n {
            let (prev, next) = (&bases[k - 1], &bases[k]);
            let mut edges = Vec::with_capacity(prev.size() * m);
            for (src, state) in prev.iter().enumerate() {
                scratch.copy_from_slice(state.occupations());
                for j in 0..m {
                    let t_j = scratch[j];
                    scratch[j] = t_j + 1;
                    let dst = next.rank_unchecked(&scratch);
                    scratch[j] = t_j;
                    edges.push(Edge {
                        src: src as u32,
                        dst: dst as u32,
                        mode: j as u32,
                        factor: (t_j as f64 + 1.0).sqrt(),
                    });
                }
            }
            edges.sort_unstable_by_key(|e| (e.dst, e.src, e.mode));
            steps.push(edges);
        }

        let input_norm = input
            .occupations()
            .iter()
            .map(|&s| (1..=s as u64).map(|v| v as f64).product::<f64>())
            .product::<f64>()
            .sqrt();

        GRAPH_BUILDS.with(|c| c.set(c.get() + 1));
        Ok(TransitionGraph {
            m,
            input: input.clone(),
            input_modes: input.photon_modes(),
            bases,
            steps,
            input_norm,
        })
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn photons(&self) -> usize {
        self.input_modes.len()
    }

    pub fn input(&self) -> &FockState {
        &self.input
    }

    pub fn input_modes(&self) -> &[usize] {
        &self.input_modes
    }

    pub fn input_norm(&self) -> f64 {
        self.input_norm
    }

    pub fn steps(&self) -> &[Vec<Edge>] {
        &self.steps
    }

    pub fn edge_count(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    /// Basis of the final, `n`-photon layer.
    pub fn output_basis(&self) -> &FockBasis {
        &self.bases[self.photons()]
    }

    pub fn basis(&self, photons: usize) -> &FockBasis {
        &self.bases[photons]
    }

    /// CSV dump `step,src,dst,mode,factor`, steps numbered from 1.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,src,dst,mode,factor")?;
        for (k, edges) in self.steps.iter().enumerate() {
            for e in edges {
                writeln!(
                    w,
                    "{},{},{},{},{:.17e}",
                    k + 1,
                    e.src,
                    e.dst,
                    e.mode,
                    e.factor
                )?;
            }
        }
        Ok(())
    }

    fn check_matrix(&self, u: &CMatrix, opts: ForwardOptions) -> Result<()> {
        if u.nrows() != self.m || u.ncols() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "unitary is {}x{}, graph has {} modes",
                u.nrows(),
                u.ncols(),
                self.m
            )));
        }
        if opts.check_unitary {
            let dev = unitarity_deviation(u);
            if dev > FORWARD_UNITARY_TOL {
                return Err(Error::NonUnitary(dev));
            }
        }
        Ok(())
    }

    /// Accumulates one photon step from `src` into `dst` (already sized and zeroed).
    #[inline]
    fn step_into(&self, k: usize, u: &CMatrix, src: &[Complex64], dst: &mut [Complex64]) {
        let p = self.input_modes[k];
        let column: Vec<Complex64> = (0..self.m).map(|j| u[(j, p)]).collect();
        for e in &self.steps[k] {
            let w = column[e.mode as usize] * e.factor;
            dst[e.dst as usize] += w * src[e.src as usize];
        }
    }

    /// Output state for `u`, checking unitarity.
    pub fn forward(&self, u: &CMatrix) -> Result<AmplitudeVector> {
        self.forward_with(u, ForwardOptions::default(), &mut Workspace::default())
    }

    /// Output state using caller-owned ping-pong buffers.
    pub fn forward_with(
        &self,
        u: &CMatrix,
        opts: ForwardOptions,
        ws: &mut Workspace,
    ) -> Result<AmplitudeVector> {
        self.check_matrix(u, opts)?;
        let zero = Complex64::new(0.0, 0.0);
        ws.front.clear();
        ws.front.push(Complex64::new(1.0, 0.0));
        for k in 0..self.photons() {
            ws.back.clear();
            ws.back.resize(self.bases[k + 1].size(), zero);
            self.step_into(k, u, &ws.front, &mut ws.back);
            std::mem::swap(&mut ws.front, &mut ws.back);
        }
        let inv = 1.0 / self.input_norm;
        Ok(AmplitudeVector {
            basis: self.output_basis().clone(),
            values: ws.front.iter().map(|z| z * inv).collect(),
        })
    }

    /// Forward pass retaining every intermediate layer for [`Self::backward`].
    pub fn forward_cached(
        &self,
        u: &CMatrix,
        opts: ForwardOptions,
    ) -> Result<(AmplitudeVector, ForwardCache)> {
        self.check_matrix(u, opts)?;
        let zero = Complex64::new(0.0, 0.0);
        let mut layers: Vec<Vec<Complex64>> = Vec::with_capacity(self.photons() + 1);
        layers.push(vec![Complex64::new(1.0, 0.0)]);
        for k in 0..self.photons() {
            let mut next = vec![zero; self.bases[k + 1].size()];
            self.step_into(k, u, &layers[k], &mut next);
            layers.push(next);
        }
        let last = layers.pop().expect("at least the vacuum layer");
        let inv = 1.0 / self.input_norm;
        let out = AmplitudeVector {
            basis: self.output_basis().clone(),
            values: last.iter().map(|z| z * inv).collect(),
        };
        Ok((out, ForwardCache { layers }))
    }

    /// Gradient of a real loss with respect to the entries of `u`.
    ///
    /// `loss_grad[t]` holds `dL/dRe a_t + i dL/dIm a_t` for the output
    /// amplitudes; the result holds `dL/dRe U_jp + i dL/dIm U_jp`.
    pub fn backward(
        &self,
        u: &CMatrix,
        cache: &ForwardCache,
        loss_grad: &[Complex64],
    ) -> Result<CMatrix> {
        let n = self.photons();
        if cache.layers.len() != n
            || cache
                .layers
                .iter()
                .enumerate()
                .any(|(k, l)| l.len() != self.bases[k].size())
        {
            return Err(Error::MissingIntermediates);
        }
        if loss_grad.len() != self.output_basis().size() {
            return Err(Error::LengthMismatch(
                loss_grad.len(),
                self.output_basis().size(),
            ));
        }
        self.check_matrix(
            u,
            ForwardOptions {
                check_unitary: false,
            },
        )?;
        let zero = Complex64::new(0.0, 0.0);
        let mut grad_u = CMatrix::zeros(self.m, self.m);
        let inv = 1.0 / self.input_norm;
        let mut adj: Vec<Complex64> = loss_grad.iter().map(|g| g * inv).collect();
        for k in (0..n).rev() {
            let p = self.input_modes[k];
            let prev = &cache.layers[k];
            let mut adj_prev = vec![zero; prev.len()];
            let mut col_grad = vec![zero; self.m];
            for e in &self.steps[k] {
                let j = e.mode as usize;
                let g = adj[e.dst as usize];
                col_grad[j] += g * (prev[e.src as usize] * e.factor).conj();
                adj_prev[e.src as usize] += g * (u[(j, p)] * e.factor).conj();
            }
            for (j, gj) in col_grad.into_iter().enumerate() {
                grad_u[(j, p)] += gj;
            }
            adj = adj_prev;
        }
        Ok(grad_u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn st(v: &[u8]) -> FockState {
        FockState::new(v.to_vec())
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn balanced() -> CMatrix {
        let h = FRAC_1_SQRT_2;
        CMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(0.0, h), c(0.0, h), c(h, 0.0)])
    }

    #[test]
    fn edge_counts() {
        let g = TransitionGraph::build(2, &st(&[1, 1])).unwrap();
        assert_eq!(g.steps().len(), 2);
        assert_eq!(g.steps()[0].len(), 2);
        assert_eq!(g.steps()[1].len(), 4);

        let g = TransitionGraph::build(3, &st(&[1, 0, 0])).unwrap();
        assert_eq!(g.steps().len(), 1);
        assert_eq!(g.steps()[0].len(), 3);
        assert!(g.steps()[0].iter().all(|e| e.factor == 1.0));
    }

    #[test]
    fn bunched_factor() {
        let g = TransitionGraph::build(2, &st(&[2, 0])).unwrap();
        let b1 = g.basis(1);
        let b2 = g.basis(2);
        let src = b1.rank(&st(&[1, 0])).unwrap() as u32;
        let dst = b2.rank(&st(&[2, 0])).unwrap() as u32;
        let e = g.steps()[1]
            .iter()
            .find(|e| e.src == src && e.mode == 0)
            .unwrap();
        assert_eq!(e.dst, dst);
        assert!((e.factor - 2f64.sqrt()).abs() < 1e-15);
        assert!((g.input_norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn edge_structure_invariants() {
        for (m, input) in [
            (3, st(&[1, 1, 1])),
            (4, st(&[2, 0, 1, 0])),
            (5, st(&[0, 0, 3, 0, 1])),
        ] {
            let g = TransitionGraph::build(m, &input).unwrap();
            for (k, edges) in g.steps().iter().enumerate() {
                let prev = g.basis(k).size();
                assert_eq!(edges.len(), prev * m);
                assert!(edges.windows(2).all(|w| w[0].dst <= w[1].dst));
                let mut pairs: Vec<_> = edges.iter().map(|e| (e.src, e.mode)).collect();
                pairs.sort_unstable();
                pairs.dedup();
                assert_eq!(pairs.len(), edges.len());
                assert!(edges
                    .iter()
                    .all(|e| (e.dst as usize) < g.basis(k + 1).size()));
            }
        }
    }

    #[test]
    fn graph_errors() {
        assert!(matches!(
            TransitionGraph::build(3, &st(&[0, 0, 0])),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            TransitionGraph::build(2, &st(&[1, 0, 0])),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            TransitionGraph::build_with_cap(8, &st(&[1, 1, 1, 1, 0, 0, 0, 0]), 100),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn identity_keeps_input() {
        let input = st(&[1, 1, 0]);
        let g = TransitionGraph::build(3, &input).unwrap();
        let out = g.forward(&CMatrix::identity(3, 3)).unwrap();
        let r = out.basis.rank(&input).unwrap();
        for (i, a) in out.values.iter().enumerate() {
            let expected = if i == r { 1.0 } else { 0.0 };
            assert!((a - c(expected, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn hong_ou_mandel() {
        let g = TransitionGraph::build(2, &st(&[1, 1])).unwrap();
        let out = g.forward(&balanced()).unwrap();
        let h = FRAC_1_SQRT_2;
        assert!((out.amplitude(&st(&[2, 0])).unwrap() - c(0.0, h)).norm() < 1e-15);
        assert!((out.amplitude(&st(&[0, 2])).unwrap() - c(0.0, h)).norm() < 1e-15);
        assert!(out.amplitude(&st(&[1, 1])).unwrap().norm() < 1e-15);
    }

    #[test]
    fn rejects_non_unitary_unless_disabled() {
        let g = TransitionGraph::build(2, &st(&[1, 1])).unwrap();
        let u = balanced() * c(2.0, 0.0);
        assert!(matches!(g.forward(&u), Err(Error::NonUnitary(_))));
        let mut ws = Workspace::default();
        g.forward_with(
            &u,
            ForwardOptions {
                check_unitary: false,
            },
            &mut ws,
        )
        .unwrap();
        assert!(matches!(
            g.forward(&CMatrix::identity(3, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn backward_zero_and_missing() {
        let g = TransitionGraph::build(2, &st(&[1, 1])).unwrap();
        let (_, cache) = g
            .forward_cached(&balanced(), ForwardOptions::default())
            .unwrap();
        let zero = vec![c(0.0, 0.0); 3];
        let grad = g.backward(&balanced(), &cache, &zero).unwrap();
        assert!(grad.iter().all(|z| z.norm() == 0.0));
        let empty = ForwardCache { layers: vec![] };
        assert!(matches!(
            g.backward(&balanced(), &empty, &zero),
            Err(Error::MissingIntermediates)
        ));
    }

    #[test]
    fn single_photon_gradient_closed_form() {
        // n = 1: a_t = U[t, p]; L = |a_t|^2 => dL/dU[t,p] = 2 a_t (real-pair), zero elsewhere.
        let u = balanced();
        let g = TransitionGraph::build(2, &st(&[0, 1])).unwrap();
        let (out, cache) = g.forward_cached(&u, ForwardOptions::default()).unwrap();
        let t = out.basis.rank(&st(&[1, 0])).unwrap();
        let mut lg = vec![c(0.0, 0.0); out.values.len()];
        lg[t] = out.values[t] * 2.0;
        let grad = g.backward(&u, &cache, &lg).unwrap();
        for j in 0..2 {
            for p in 0..2 {
                let expected = if (j, p) == (0, 1) {
                    u[(0, 1)] * 2.0
                } else {
                    c(0.0, 0.0)
                };
                assert!((grad[(j, p)] - expected).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn csv_dump() {
        let g = TransitionGraph::build(2, &st(&[1, 0])).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "step,src,dst,mode,factor");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,0,0,0,"));
    }

    #[test]
    fn build_counter_counts() {
        let before = graph_builds_on_this_thread();
        let g = TransitionGraph::build(3, &st(&[1, 1, 0])).unwrap();
        g.forward(&CMatrix::identity(3, 3)).unwrap();
        g.forward(&CMatrix::identity(3, 3)).unwrap();
        assert_eq!(graph_builds_on_this_thread(), before + 1);
    }
}
