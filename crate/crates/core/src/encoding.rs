//! Amplitude encoding and the dual-rail qubit/Fock bridge.
//!
//! Dual-rail convention: qubit `i` lives on modes `(2i, 2i+1)` and `|0>`
//! puts its photon in the lower mode `2i`. Qubit 0 is the most significant
//! bit of the computational-basis index.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockState};
use crate::slos::AmplitudeVector;

const BRIDGE_NORM_TOL: f64 = 1e-9;
const LEAKAGE_LIMIT: f64 = 1.0 - 1e-12;

/// Normalizes `x` and writes it onto the first `x.len()` basis states.
pub fn amplitude_encode(x: &[Complex64], basis: &FockBasis) -> Result<AmplitudeVector> {
    if x.len() > basis.size() {
        return Err(Error::TooLong {
            len: x.len(),
            size: basis.size(),
        });
    }
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let mut out = AmplitudeVector::zeros(basis.clone());
    for (slot, z) in out.values.iter_mut().zip(x) {
        *slot = z / norm;
    }
    Ok(out)
}

pub fn amplitude_encode_real(x: &[f64], basis: &FockBasis) -> Result<AmplitudeVector> {
    let z: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    amplitude_encode(&z, basis)
}

/// Dual-rail image of computational basis state `index` over `k` qubits.
pub fn dual_rail_state(index: usize, k: usize) -> FockState {
    let mut occ = vec![0u8; 2 * k];
    for qubit in 0..k {
        let bit = (index >> (k - 1 - qubit)) & 1;
        occ[2 * qubit + bit] = 1;
    }
    FockState::new(occ)
}

fn qubit_count(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::DimensionMismatch(format!(
            "qubit register length {len} is not a power of two >= 2"
        )));
    }
    Ok(len.trailing_zeros() as usize)
}

/// Maps a `k`-qubit state into `FockBasis(2k, k)` via dual-rail encoding.
pub fn qubit_to_fock(q: &[Complex64]) -> Result<AmplitudeVector> {
    let k = qubit_count(q.len())?;
    let norm2: f64 = q.iter().map(|z| z.norm_sqr()).sum();
    if (norm2 - 1.0).abs() > BRIDGE_NORM_TOL {
        return Err(Error::NotNormalized(norm2));
    }
    let bridge = QubitBridge::new(k)?;
    Ok(bridge.embed(q))
}

/// Inverse of [`qubit_to_fock`] on the dual-rail subspace. Returns the
/// renormalized qubit state and the weight found outside that subspace.
pub fn fock_to_qubit(a: &AmplitudeVector) -> Result<(Vec<Complex64>, f64)> {
    let m = a.basis.modes();
    if !m.is_multiple_of(2) || a.basis.photons() != m / 2 || m == 0 {
        return Err(Error::DimensionMismatch(format!(
            "dual-rail readout needs 2k modes and k photons, got m={m} n={}",
            a.basis.photons()
        )));
    }
    let bridge = QubitBridge::new(m / 2)?;
    let q = bridge.extract(a);
    let kept: f64 = q.iter().map(|z| z.norm_sqr()).sum();
    let leakage = (a.norm_sqr() - kept).max(0.0);
    if kept <= 0.0 || leakage >= LEAKAGE_LIMIT {
        return Err(Error::NullProjection);
    }
    let scale = 1.0 / kept.sqrt();
    Ok((q.into_iter().map(|z| z * scale).collect(), leakage))
}

/// Precomputed index map between `2^k` qubit amplitudes and `FockBasis(2k, k)`.
///
/// Both directions are linear; `extract` is the adjoint of `embed`, which is
/// what a reverse pass through the bridge needs.
#[derive(Debug, Clone)]
pub struct QubitBridge {
    basis: FockBasis,
    ranks: Vec<usize>,
}

impl QubitBridge {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k > 20 {
            return Err(Error::DimensionMismatch(format!(
                "unsupported qubit count {k}"
            )));
        }
        let basis = FockBasis::new(2 * k, k)?;
        let ranks = (0..1usize << k)
            .map(|i| basis.rank(&dual_rail_state(i, k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(QubitBridge { basis, ranks })
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    /// Fock rank of each computational basis state.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn embed(&self, q: &[Complex64]) -> AmplitudeVector {
        let mut out = AmplitudeVector::zeros(self.basis.clone());
        for (&r, &z) in self.ranks.iter().zip(q) {
            out.values[r] = z;
        }
        out
    }

    pub fn extract(&self, a: &AmplitudeVector) -> Vec<Complex64> {
        self.ranks.iter().map(|&r| a.values[r]).collect()
    }
}
