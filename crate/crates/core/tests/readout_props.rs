//! Detector regrouping, marginals, the qubit bridge and fidelity kernels,
//! each compared against a direct recomputation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use photonic::circuit::{universal_mesh, ParamCircuit};
use photonic::encoding::{dual_rail_state, fock_to_qubit, qubit_to_fock, QubitBridge};
use photonic::kernel::{FidelityKernel, KernelSpec};
use photonic::measurement::{
    apply_detector, marginal, marginal_with, per_mode_expectation, probabilities, Detector,
};
use photonic::oracle::{haar_unitary_with, oracle_state};
use photonic::slos::TransitionGraph;
use photonic::{Complex64, FockBasis, FockState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(m: usize, n: usize, rng: &mut ChaCha8Rng) -> FockState {
    let mut occ = vec![0u8; m];
    for _ in 0..n {
        occ[rng.random_range(0..m)] += 1;
    }
    FockState::new(occ)
}

/// Sums `p` by `key`, in basis order, into a map sorted descending.
fn regroup(p: &[f64], basis: &FockBasis, key: impl Fn(&[u8]) -> Vec<u8>) -> Vec<(Vec<u8>, f64)> {
    let mut acc: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    for (s, &v) in basis.iter().zip(p) {
        *acc.entry(key(s.occupations())).or_insert(0.0) += v;
    }
    acc.into_iter().rev().collect()
}

fn all_subsets(m: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..(1 << m)).map(move |mask| (0..m).filter(|i| mask & (1 << i) != 0).collect())
}

#[test]
fn detector_and_marginal_regrouping_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for m in 1..=4 {
        for n in 1..=3 {
            for _ in 0..20 {
                let u = haar_unitary_with(m, &mut rng);
                let a = oracle_state(&u, &random_input(m, n, &mut rng)).unwrap();
                let p = probabilities(&a);
                let basis = &a.basis;

                let thr = apply_detector(&p, basis, Detector::Threshold).unwrap();
                let expect = regroup(&p, basis, |o| o.iter().map(|&c| c.min(1)).collect());
                assert_eq!(
                    thr.keys,
                    expect.iter().map(|e| e.0.clone()).collect::<Vec<_>>()
                );
                assert_eq!(thr.values, expect.iter().map(|e| e.1).collect::<Vec<_>>());
                assert!((thr.total() - 1.0).abs() < 1e-12);

                let pnr = apply_detector(&p, basis, Detector::Pnr).unwrap();
                assert_eq!(pnr.values, p);

                for modes in all_subsets(m) {
                    let got = marginal(&p, basis, &modes).unwrap();
                    let want = regroup(&p, basis, |o| modes.iter().map(|&i| o[i]).collect());
                    assert_eq!(
                        got.keys,
                        want.iter().map(|e| e.0.clone()).collect::<Vec<_>>()
                    );
                    assert_eq!(got.values, want.iter().map(|e| e.1).collect::<Vec<_>>());

                    let got = marginal_with(&p, basis, &modes, Detector::Threshold).unwrap();
                    let want = regroup(&p, basis, |o| modes.iter().map(|&i| o[i].min(1)).collect());
                    assert_eq!(got.values, want.iter().map(|e| e.1).collect::<Vec<_>>());
                }

                let means = per_mode_expectation(&p, basis, Detector::Pnr).unwrap();
                assert!((means.iter().sum::<f64>() - n as f64).abs() < 1e-12);
                let clicks = per_mode_expectation(&p, basis, Detector::Threshold).unwrap();
                assert!(clicks.iter().all(|&c| (-1e-15..=1.0 + 1e-12).contains(&c)));
            }
        }
    }
}

fn random_qubits(k: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..1 << k)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

#[test]
fn bridge_is_an_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for k in 1..=4 {
        let bridge = QubitBridge::new(k).unwrap();
        for _ in 0..50 {
            let q = random_qubits(k, &mut rng);
            let r = random_qubits(k, &mut rng);
            let a = qubit_to_fock(&q).unwrap();
            let b = qubit_to_fock(&r).unwrap();
            assert!((a.norm_sqr() - 1.0).abs() < 1e-12);
            let lhs = a.inner(&b);
            let rhs: Complex64 = q.iter().zip(&r).map(|(x, y)| x.conj() * y).sum();
            assert!((lhs - rhs).norm() < 1e-12);

            let (back, leak) = fock_to_qubit(&a).unwrap();
            assert!(leak < 1e-12);
            for (x, y) in back.iter().zip(&q) {
                assert!((x - y).norm() < 1e-12);
            }

            // Linearity of the embedding.
            let (c1, c2) = (Complex64::new(0.3, -0.2), Complex64::new(-1.1, 0.5));
            let mixed: Vec<Complex64> = q.iter().zip(&r).map(|(x, y)| c1 * x + c2 * y).collect();
            let e = bridge.embed(&mixed);
            for i in 0..e.values.len() {
                assert!((e.values[i] - (c1 * a.values[i] + c2 * b.values[i])).norm() < 1e-12);
            }
        }
        for i in 0..1 << k {
            let s = dual_rail_state(i, k);
            assert_eq!(s.photon_count(), k);
            assert!(s.is_unbunched());
        }
    }
}

#[test]
fn bridge_reports_leakage_after_mixing() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let q = random_qubits(2, &mut rng);
    let a = qubit_to_fock(&q).unwrap();
    let u = haar_unitary_with(4, &mut rng);
    // Evolve each component by linearity.
    let bridge = QubitBridge::new(2).unwrap();
    let mut out = photonic::slos::AmplitudeVector::zeros(bridge.basis().clone());
    for (i, z) in q.iter().enumerate() {
        let g = TransitionGraph::build(4, &dual_rail_state(i, 2)).unwrap();
        let part = g.forward(&u).unwrap();
        for (o, v) in out.values.iter_mut().zip(&part.values) {
            *o += z * v;
        }
    }
    assert!((out.norm_sqr() - a.norm_sqr()).abs() < 1e-12);
    let (back, leak) = fock_to_qubit(&out).unwrap();
    let kept: f64 = bridge.extract(&out).iter().map(|z| z.norm_sqr()).sum();
    assert!((leak + kept - 1.0).abs() < 1e-12);
    assert!((back.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-12);
}

fn haar_featured_circuit(m: usize, rng: &mut ChaCha8Rng) -> ParamCircuit {
    let mut c = ParamCircuit::new(m);
    c.static_unitary(0, haar_unitary_with(m, rng)).unwrap();
    c.add_angle_encoding(&(0..m).collect::<Vec<_>>(), "x", 1.0)
        .unwrap();
    c.static_unitary(0, haar_unitary_with(m, rng)).unwrap();
    c
}

#[test]
fn gram_matrices_are_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for (m, input) in [(4, vec![1u8, 1, 0, 0]), (3, vec![2, 0, 1])] {
        let kernel = FidelityKernel::new(KernelSpec {
            circuit: haar_featured_circuit(m, &mut rng),
            input_state: FockState::new(input),
            cache_states: true,
        })
        .unwrap();
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                (0..m)
                    .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                    .collect()
            })
            .collect();
        let g = kernel.gram(&xs, None).unwrap();
        let mat = DMatrix::from_fn(40, 40, |i, j| g[i][j]);
        let eig = SymmetricEigen::new(mat);
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-9, "min eigenvalue {min:e}");
        for (i, row) in g.iter().enumerate() {
            assert!((row[i] - 1.0).abs() <= 1e-10);
            assert!(row.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        }
    }
}

#[test]
fn trainable_kernel_uses_frozen_values() {
    let mut c = universal_mesh(3, "A");
    c.add_angle_encoding(&[0, 2], "x", 1.0).unwrap();
    let spec = KernelSpec {
        circuit: c,
        input_state: FockState::new(vec![1, 0, 1]),
        cache_states: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let theta = spec.circuit.random_theta(&mut rng);
    let k = FidelityKernel::with_theta(spec, theta).unwrap();
    let xs = vec![vec![0.1, 0.2], vec![1.0, -0.5], vec![2.0, 2.0]];
    assert_eq!(k.gram(&xs, None).unwrap(), k.gram(&xs, None).unwrap());
}

proptest! {
    #[test]
    fn rank_unrank_bijection(m in 1usize..8, n in 0usize..6, pick in any::<u64>()) {
        let basis = FockBasis::new(m, n).unwrap();
        let r = (pick % basis.size() as u64) as usize;
        let s = basis.unrank(r).unwrap();
        prop_assert_eq!(s.photon_count(), n);
        prop_assert_eq!(basis.rank(&s).unwrap(), r);
        if r + 1 < basis.size() {
            // Canonical order is strictly descending.
            prop_assert!(s.occupations() > basis.unrank(r + 1).unwrap().occupations());
        }
    }
}
