//! Fidelity kernels `k(x, x') = |<phi(x)|phi(x')>|^2` with
//! `|phi(x)> = U(x)|s>`.

use rayon::prelude::*;

use crate::circuit::ParamCircuit;
use crate::error::{Error, Result};
use crate::fock::FockState;
use crate::slos::{AmplitudeVector, ForwardOptions, TransitionGraph, Workspace};

#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub circuit: ParamCircuit,
    pub input_state: FockState,
    pub cache_states: bool,
}

/// A feature map ready for evaluation. Trainable values are frozen at
/// construction so repeated Gram evaluations see the same kernel.
#[derive(Debug)]
pub struct FidelityKernel {
    spec: KernelSpec,
    theta: Vec<f64>,
    graph: TransitionGraph,
}

impl FidelityKernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        let theta = spec.circuit.initial_theta();
        Self::with_theta(spec, theta)
    }

    pub fn with_theta(spec: KernelSpec, theta: Vec<f64>) -> Result<Self> {
        if spec.circuit.input_feature_count() == 0 {
            return Err(Error::InvalidSpec(
                "kernel circuit binds no input features".into(),
            ));
        }
        if theta.len() != spec.circuit.trainable_count() {
            return Err(Error::ArityMismatch {
                what: "trainable parameters",
                expected: spec.circuit.trainable_count(),
                got: theta.len(),
            });
        }
        let graph = TransitionGraph::build(spec.circuit.modes(), &spec.input_state)?;
        Ok(FidelityKernel { spec, theta, graph })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    fn state_with(&self, x: &[f64], ws: &mut Workspace) -> Result<AmplitudeVector> {
        let need = self.spec.circuit.input_feature_count();
        if x.len() != need {
            return Err(Error::ArityMismatch {
                what: "input features",
                expected: need,
                got: x.len(),
            });
        }
        let u = self.spec.circuit.compile_unitary(&self.theta, x)?;
        self.graph.forward_with(&u, ForwardOptions::default(), ws)
    }

    pub fn feature_state(&self, x: &[f64]) -> Result<AmplitudeVector> {
        self.state_with(x, &mut Workspace::default())
    }

    pub fn fidelity(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        let a = self.feature_state(x1)?;
        let b = self.feature_state(x2)?;
        Ok(a.inner(&b).norm_sqr())
    }

    fn states(&self, xs: &[Vec<f64>]) -> Result<Vec<AmplitudeVector>> {
        xs.par_iter()
            .enumerate()
            .map_init(Workspace::default, |ws, (i, x)| {
                self.state_with(x, ws).map_err(|e| e.at_row(i))
            })
            .collect()
    }

    /// Gram matrix between `x1` rows and `x2` rows (or `x1` with itself).
    ///
    /// The symmetric case fills the strict upper triangle, mirrors it and
    /// sets the diagonal to exactly one.
    pub fn gram(&self, x1: &[Vec<f64>], x2: Option<&[Vec<f64>]>) -> Result<Vec<Vec<f64>>> {
        if x1.is_empty() || x2.is_some_and(|x| x.is_empty()) {
            return Err(Error::InvalidSpec("gram needs nonempty batches".into()));
        }
        match x2 {
            None => self.gram_symmetric(x1),
            Some(x2) => {
                if self.spec.cache_states {
                    let a = self.states(x1)?;
                    let b = self.states(x2)?;
                    Ok(a.par_iter()
                        .map(|sa| b.iter().map(|sb| sa.inner(sb).norm_sqr()).collect())
                        .collect())
                } else {
                    x1.par_iter()
                        .map(|p| x2.iter().map(|q| self.fidelity(p, q)).collect())
                        .collect()
                }
            }
        }
    }

    fn gram_symmetric(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = xs.len();
        let upper: Vec<Vec<f64>> = if self.spec.cache_states {
            let states = self.states(xs)?;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    (i + 1..n)
                        .map(|j| states[i].inner(&states[j]).norm_sqr())
                        .collect()
                })
                .collect()
        } else {
            (0..n)
                .into_par_iter()
                .map(|i| (i + 1..n).map(|j| self.fidelity(&xs[i], &xs[j])).collect())
                .collect::<Result<_>>()?
        };
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            g[i][i] = 1.0;
            for (off, &v) in upper[i].iter().enumerate() {
                let j = i + 1 + off;
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        Ok(g)
    }
}

/// CSV with one row per line, 17 significant digits.
pub fn gram_to_csv(g: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in g {
        let line: Vec<String> = row
            .iter()
            .map(|v| crate::measurement::fmt_f64(*v))
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::circuit::universal_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(cache: bool) -> KernelSpec {
        let mut c = universal_mesh(3, "A");
        c.add_angle_encoding(&[0, 1], "x", 1.0).unwrap();
        c.append(&universal_mesh(3, "B")).unwrap();
        KernelSpec {
            circuit: c,
            input_state: FockState::new(vec![1, 1, 0]),
            cache_states: cache,
        }
    }

    fn kernel(cache: bool) -> FidelityKernel {
        let s = spec(cache);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta = s.circuit.random_theta(&mut rng);
        FidelityKernel::with_theta(s, theta).unwrap()
    }

    fn points(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| vec![rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)])
            .collect()
    }

    #[test]
    fn self_fidelity_is_one() {
        let k = kernel(true);
        for x in points(10, 2) {
            assert!((k.fidelity(&x, &x).unwrap() - 1.0).abs() < 1e-10);
            let s = k.feature_state(&x).unwrap();
            assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_circuit_kernel_is_constant() {
        let mut c = ParamCircuit::new(2);
        c.add_angle_encoding(&[0], "x", 0.0).unwrap();
        let k = FidelityKernel::new(KernelSpec {
            circuit: c,
            input_state: FockState::new(vec![1, 1]),
            cache_states: false,
        })
        .unwrap();
        assert!((k.fidelity(&[0.1], &[2.5]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gram_shapes_and_caching() {
        let xs = points(6, 3);
        let cached = kernel(true).gram(&xs, None).unwrap();
        let plain = kernel(false).gram(&xs, None).unwrap();
        assert_eq!(cached, plain);
        for i in 0..6 {
            assert_eq!(cached[i][i], 1.0);
            for j in 0..6 {
                assert_eq!(cached[i][j], cached[j][i]);
            }
        }
        let single = kernel(true).gram(&xs[..1], None).unwrap();
        assert_eq!(single, vec![vec![1.0]]);

        let mut dup = xs.clone();
        dup.push(xs[2].clone());
        let g = kernel(true).gram(&dup, None).unwrap();
        for j in 0..6 {
            assert!((g[6][j] - g[2][j]).abs() < 1e-15);
        }

        let ys = points(3, 4);
        let a = kernel(true).gram(&xs, Some(&ys)).unwrap();
        let b = kernel(false).gram(&xs, Some(&ys)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.len(), a[0].len()), (6, 3));
    }

    #[test]
    fn rejects_featureless_circuit() {
        let err = FidelityKernel::new(KernelSpec {
            circuit: universal_mesh(2, "W"),
            input_state: FockState::new(vec![1, 0]),
            cache_states: true,
        });
        assert!(matches!(err, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn csv_format() {
        let text = gram_to_csv(&[vec![1.0, 0.5], vec![0.5, 1.0]]);
        assert_eq!(
            text,
            "1.0000000000000000e0,5.0000000000000000e-1\n5.0000000000000000e-1,1.0000000000000000e0\n"
        );
    }
}
