//! Projective measurement semantics for the square observables: outcome
//! statistics, the Lüders state update, sampling, and exact sequential
//! (multi-time) expectation values with channels inserted between the
//! measurements.

use std::fmt;

use rand::Rng;

use crate::algebra::DensityMatrix;
use crate::channel::Channel;
use crate::square::PMObservable;
use crate::Error;

/// Branches whose probability falls below this are dropped with weight
/// exactly zero; keeps the Lüders normalization away from 0/0.
pub const ZERO_BRANCH_CUTOFF: f64 = 1e-12;

/// Dichotomic measurement outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    /// The eigenvalue, ±1.
    pub fn value(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+1",
            Outcome::Minus => "-1",
        })
    }
}

/// Result of sampling one projective measurement.
#[derive(Clone, Debug)]
pub struct MeasurementOutcome {
    pub value: Outcome,
    pub probability: f64,
    pub post_state: DensityMatrix,
}

/// Outcome probabilities `(p₊, p₋)` with `p± = tr(Π± ρ) = 1/2 ± t_ij/2`.
pub fn outcome_distribution(rho: &DensityMatrix, obs: &PMObservable) -> (f64, f64) {
    let t = obs.matrix().expectation(rho);
    let p_plus = (0.5 + 0.5 * t).clamp(0.0, 1.0);
    (p_plus, 1.0 - p_plus)
}

/// Lüders update `Π ρ Π / tr(Π ρ Π)` for the given outcome. The result is
/// re-Hermitized and re-normalized to bound floating-point drift. Rejects
/// outcomes whose probability is below [`ZERO_BRANCH_CUTOFF`].
pub fn lueders_update(
    rho: &DensityMatrix,
    obs: &PMObservable,
    outcome: Outcome,
) -> Result<DensityMatrix, Error> {
    let projector = match outcome {
        Outcome::Plus => obs.proj_plus(),
        Outcome::Minus => obs.proj_minus(),
    };
    let unnormalized = *projector * *rho.operator() * *projector;
    let probability = unnormalized.trace().re;
    if probability < ZERO_BRANCH_CUTOFF {
        return Err(Error::ZeroProbabilityOutcome {
            observable: obs.index(),
            outcome,
            probability,
        });
    }
    Ok(DensityMatrix::renormalized(unnormalized))
}

/// Samples an outcome from [`outcome_distribution`] and applies the Lüders
/// update. Deterministic given the stream state: one `f64` is drawn and
/// compared against `p₊`.
pub fn measure_sample<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    obs: &PMObservable,
    rng: &mut R,
) -> MeasurementOutcome {
    let (p_plus, p_minus) = outcome_distribution(rho, obs);
    let draw: f64 = rng.random();
    let mut value = if draw < p_plus {
        Outcome::Plus
    } else {
        Outcome::Minus
    };
    // Never land on a branch of (numerically) zero probability.
    if p_plus < ZERO_BRANCH_CUTOFF {
        value = Outcome::Minus;
    } else if p_minus < ZERO_BRANCH_CUTOFF {
        value = Outcome::Plus;
    }
    let probability = match value {
        Outcome::Plus => p_plus,
        Outcome::Minus => p_minus,
    };
    let post_state =
        lueders_update(rho, obs, value).expect("selected branch has nonzero probability");
    MeasurementOutcome {
        value,
        probability,
        post_state,
    }
}

/// Joint probability of every outcome tuple for measuring `obs` in order,
/// with `gaps[k]` (when given) applied to the state between measurements
/// `k` and `k+1`.
///
/// The returned vector has length `2^obs.len()`; bit `k` of the branch
/// index is 0 when measurement `k` gave `Plus` and 1 when it gave `Minus`.
/// Branches cut below [`ZERO_BRANCH_CUTOFF`] carry exactly 0.
pub fn sequence_distribution(
    rho: &DensityMatrix,
    obs: &[&PMObservable],
    gaps: &[Option<&Channel>],
) -> Vec<f64> {
    assert!(
        gaps.len() + 1 == obs.len() || (obs.is_empty() && gaps.is_empty()),
        "need exactly one gap channel slot between consecutive measurements"
    );
    let mut probabilities = vec![0.0; 1 << obs.len()];
    descend(rho, obs, gaps, 0, 0, 1.0, &mut probabilities);
    probabilities
}

fn descend(
    state: &DensityMatrix,
    obs: &[&PMObservable],
    gaps: &[Option<&Channel>],
    depth: usize,
    branch: usize,
    weight: f64,
    probabilities: &mut [f64],
) {
    if depth == obs.len() {
        probabilities[branch] = weight;
        return;
    }
    let current = if depth == 0 {
        *state
    } else {
        match gaps[depth - 1] {
            Some(ch) => ch.apply(state),
            None => *state,
        }
    };
    let (p_plus, p_minus) = outcome_distribution(&current, obs[depth]);
    for outcome in Outcome::BOTH {
        let p = match outcome {
            Outcome::Plus => p_plus,
            Outcome::Minus => p_minus,
        };
        let bit = match outcome {
            Outcome::Plus => 0,
            Outcome::Minus => 1 << depth,
        };
        if p < ZERO_BRANCH_CUTOFF {
            continue;
        }
        let next = lueders_update(&current, obs[depth], outcome)
            .expect("branch above cutoff");
        descend(
            &next,
            obs,
            gaps,
            depth + 1,
            branch | bit,
            weight * p,
            probabilities,
        );
    }
}

/// Exact expectation of the product of outcomes of `obs` measured in
/// order, enumerating all outcome branches, with `between` (when given)
/// applied to the state between consecutive measurements. No channel acts
/// before the first measurement.
pub fn sequential_expectation(
    rho: &DensityMatrix,
    obs: &[&PMObservable],
    between: Option<&Channel>,
) -> f64 {
    let gaps = vec![between; obs.len().saturating_sub(1)];
    sequential_expectation_with_gaps(rho, obs, &gaps)
}

/// As [`sequential_expectation`], with an independently chosen channel in
/// each gap.
pub fn sequential_expectation_with_gaps(
    rho: &DensityMatrix,
    obs: &[&PMObservable],
    gaps: &[Option<&Channel>],
) -> f64 {
    sequence_distribution(rho, obs, gaps)
        .iter()
        .enumerate()
        .map(|(branch, p)| product_sign(branch) * p)
        .sum()
}

/// Product of the ±1 outcomes encoded in a branch index: the parity of
/// its set bits.
fn product_sign(branch: usize) -> f64 {
    if branch.count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}
