//! Brute-force reference amplitudes from matrix permanents, plus Haar
//! sampling of unitaries.
//!
//! Nothing here shares code with [`crate::slos`]: output states are
//! enumerated by a separate recursion and every amplitude is an independent
//! permanent evaluation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockState};
use crate::slos::AmplitudeVector;
use crate::CMatrix;

pub const MAX_PERMANENT_SIZE: usize = 20;
pub const MAX_ORACLE_STATES: usize = 100_000;

/// Permanent by Ryser's formula, visiting column subsets in Gray-code order
/// so each subset costs one row-sum update.
pub fn permanent(a: &CMatrix) -> Result<Complex64> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(Error::NonSquare { rows, cols });
    }
    let k = rows;
    if k > MAX_PERMANENT_SIZE {
        return Err(Error::TooLarge(format!("{k}x{k} permanent")));
    }
    if k == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let mut row_sums = vec![Complex64::new(0.0, 0.0); k];
    let mut total = Complex64::new(0.0, 0.0);
    let mut gray: u64 = 0;
    for step in 1u64..(1u64 << k) {
        let next = step ^ (step >> 1);
        let flipped = (gray ^ next).trailing_zeros() as usize;
        let added = next & (1 << flipped) != 0;
        for (i, s) in row_sums.iter_mut().enumerate() {
            if added {
                *s += a[(i, flipped)];
            } else {
                *s -= a[(i, flipped)];
            }
        }
        gray = next;
        let prod: Complex64 = row_sums.iter().product();
        // (-1)^{k - |S|}
        if (k - gray.count_ones() as usize).is_multiple_of(2) {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(total)
}

fn factorial(v: usize) -> f64 {
    (1..=v).map(|x| x as f64).product()
}

/// `<t| U |s>` for Fock states `s` (input) and `t` (output):
/// `Per(U_{t,s}) / sqrt(prod s! prod t!)`, where `U_{t,s}` repeats row `q`
/// `t_q` times and column `p` `s_p` times.
pub fn oracle_amplitude(u: &CMatrix, s: &FockState, t: &FockState) -> Result<Complex64> {
    let (n_in, n_out) = (s.photon_count(), t.photon_count());
    if n_in != n_out {
        return Err(Error::PhotonCountMismatch(n_in, n_out));
    }
    if s.modes() != u.ncols() || t.modes() != u.nrows() {
        return Err(Error::DimensionMismatch(
            "state modes do not match the unitary".into(),
        ));
    }
    let cols: Vec<usize> = repeat_indices(s);
    let rows: Vec<usize> = repeat_indices(t);
    let sub = DMatrix::from_fn(rows.len(), cols.len(), |i, j| u[(rows[i], cols[j])]);
    let norm: f64 = s
        .occupations()
        .iter()
        .chain(t.occupations())
        .map(|&o| factorial(o as usize))
        .product();
    Ok(permanent(&sub)? / norm.sqrt())
}

fn repeat_indices(s: &FockState) -> Vec<usize> {
    let mut out = Vec::with_capacity(s.photon_count());
    for (mode, &o) in s.occupations().iter().enumerate() {
        for _ in 0..o {
            out.push(mode);
        }
    }
    out
}

/// Every way to place `n` photons in `m` modes, by recursion on the first mode.
fn all_outputs(m: usize, n: usize) -> Vec<Vec<u8>> {
    if m == 1 {
        return vec![vec![n as u8]];
    }
    let mut out = Vec::new();
    for first in 0..=n {
        for mut rest in all_outputs(m - 1, n - first) {
            rest.insert(0, first as u8);
            out.push(rest);
        }
    }
    out
}

/// Full output state computed one permanent per basis element.
pub fn oracle_state(u: &CMatrix, s: &FockState) -> Result<AmplitudeVector> {
    let m = u.nrows();
    let n = s.photon_count();
    let basis = FockBasis::new(m, n)?;
    if basis.size() > MAX_ORACLE_STATES {
        return Err(Error::TooLarge(format!("{} output states", basis.size())));
    }
    let mut out = AmplitudeVector::zeros(basis);
    for occ in all_outputs(m, n) {
        let t = FockState::new(occ);
        let idx = out.basis.rank(&t)?;
        out.values[idx] = oracle_amplitude(u, s, &t)?;
    }
    Ok(out)
}

/// Haar-random `m x m` unitary: QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal pushed back into `Q`. Deterministic per seed.
pub fn haar_unitary(m: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_unitary_with(m, &mut rng)
}

pub fn haar_unitary_with<R: rand::Rng + ?Sized>(m: usize, rng: &mut R) -> CMatrix {
    let ginibre = CMatrix::from_fn(m, m, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = ginibre.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..m {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        q.column_mut(j).iter_mut().for_each(|z| *z *= phase);
    }
    q
}
