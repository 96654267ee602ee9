//! Cross-checks the transition-graph evolution against the permanent oracle.

use photonic::oracle::{haar_unitary_with, oracle_state};
use photonic::slos::{ForwardOptions, TransitionGraph, Workspace};
use photonic::{basis_size, Complex64, FockState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const VERIFY_TOLERANCE: f64 = 1e-10;
const ORACLE_STATE_LIMIT: u64 = 100_000;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub max_m: usize,
    pub max_n: usize,
    pub trials: usize,
    /// Added to `U[0][0]` on the simulator path only. Test hook for checking
    /// that a broken evolution is actually reported.
    pub perturb: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            max_m: 5,
            max_n: 4,
            trials: 50,
            perturb: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub max_m: usize,
    pub max_n: usize,
    pub trials: usize,
    pub seed: u64,
    pub cases: usize,
    pub amplitudes_compared: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn random_input<R: Rng>(m: usize, n: usize, rng: &mut R) -> FockState {
    let mut occ = vec![0u8; m];
    for _ in 0..n {
        occ[rng.random_range(0..m)] += 1;
    }
    FockState::new(occ)
}

/// Runs every `(m, n)` with `1 <= m <= max_m`, `1 <= n <= max_n`, each with
/// `trials` Haar unitaries and random input placements.
pub fn verify(settings: &VerifySettings, seed: u64) -> CliResult<VerifyReport> {
    if settings.max_m > 0 && settings.max_n > 0 {
        let largest = basis_size(settings.max_m, settings.max_n)?;
        if largest > ORACLE_STATE_LIMIT {
            return Err(CliError::Usage(format!(
                "m={} n={} has {largest} output states, the oracle handles at most {ORACLE_STATE_LIMIT}",
                settings.max_m, settings.max_n
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = ForwardOptions {
        check_unitary: false,
    };
    let mut ws = Workspace::default();
    let mut worst = 0.0f64;
    let mut cases = 0;
    let mut compared = 0;
    for m in 1..=settings.max_m {
        for n in 1..=settings.max_n {
            for _ in 0..settings.trials {
                let u = haar_unitary_with(m, &mut rng);
                let input = random_input(m, n, &mut rng);
                let graph = TransitionGraph::build(m, &input)?;
                let mut u_sim = u.clone();
                u_sim[(0, 0)] += Complex64::new(settings.perturb, 0.0);
                let fast = graph.forward_with(&u_sim, opts, &mut ws)?;
                let exact = oracle_state(&u, &input)?;
                for (a, b) in fast.values.iter().zip(&exact.values) {
                    worst = worst.max((a - b).norm());
                }
                compared += exact.values.len();
                cases += 1;
            }
        }
    }
    Ok(VerifyReport {
        max_m: settings.max_m,
        max_n: settings.max_n,
        trials: settings.trials,
        seed,
        cases,
        amplitudes_compared: compared,
        max_deviation: worst,
        tolerance: VERIFY_TOLERANCE,
        pass: worst <= VERIFY_TOLERANCE,
    })
}
