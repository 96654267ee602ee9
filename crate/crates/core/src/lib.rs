//! Exact, differentiable strong simulation of linear-optical circuits.
//!
//! The simulator evolves an `n`-photon Fock input through an `m`-mode
//! interferometer one photon at a time over a transition graph that depends
//! only on `(m, input)`. The graph is built once and reused for every
//! unitary, which is what makes repeated forward passes during training cheap.
//!
//! Module map:
//!
//! - [`fock`]: Fock basis enumeration and combinatorial ranking.
//! - [`circuit`]: parameterized interferometers and their analytic derivatives.
//! - [`slos`]: the transition graph, forward evolution and reverse pass.
//! - [`oracle`]: permanent-based reference amplitudes and Haar sampling.
//! - [`measurement`]: detectors, marginals and computation spaces.
//! - [`encoding`]: amplitude encoding and the dual-rail qubit bridge.
//! - [`layer`]: the batched, differentiable features-to-outputs map.
//! - [`kernel`]: fidelity kernels and Gram matrices.
//! - [`train`]: Adam and the losses used by the bundled experiments.

pub mod circuit;
pub mod encoding;
pub mod error;
pub mod fock;
pub mod kernel;
pub mod layer;
pub mod measurement;
pub mod oracle;
pub mod slos;
pub mod train;

pub use num_complex::Complex64;

pub use crate::error::{Error, Result};
pub use crate::fock::{basis_size, FockBasis, FockState};

/// Dense complex matrix used for unitaries and their gradients.
pub type CMatrix = nalgebra::DMatrix<Complex64>;

/// Largest entry of `|U^H U - I|`.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    let n = u.ncols();
    let gram = u.adjoint() * u;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}
