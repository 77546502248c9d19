//! Simulation and analysis of sequential Peres-Mermin measurements on a
//! two-qubit system that several independent observers access in turns.
//!
//! One observer (the Main Observer) estimates the Peres-Mermin witness
//! `Σ = ⟨R1⟩ + ⟨R2⟩ + ⟨R3⟩ − ⟨C1⟩ − ⟨C2⟩ − ⟨C3⟩` from the products of
//! outcomes within row and column contexts, while `N` passersby interleave
//! uniformly random square measurements of their own. The crate provides
//!
//! * [`algebra`]: dense two-qubit complex operators, density matrices,
//!   and the Pauli-basis decomposition,
//! * [`square`]: the nine square observables, their six contexts, the
//!   witness, and the brute-force noncontextual bound,
//! * [`measurement`]: projective outcome statistics, the Lüders update,
//!   and exact sequential (multi-time) expectation values,
//! * [`channel`]: the passerby-induced channels, their depolarizing
//!   equivalence, powers, and adjoints,
//! * [`protocol`]: round planning, turn-taking execution, and traces,
//! * [`harness`]: the Monte Carlo estimator of Σ, exact and closed-form
//!   oracles, sweep experiments, and report formatting.

pub mod algebra;
pub mod channel;
pub mod harness;
pub mod measurement;
pub mod protocol;
pub mod square;

pub use algebra::{DensityMatrix, Operator, PauliCoefficients};
pub use channel::Channel;
pub use harness::{RunConfig, SigmaEstimate};
pub use measurement::Outcome;
pub use protocol::{RoundPlan, RoundTrace, SamplingMode};
pub use square::{Context, ContextId, PMIndex, PMObservable, PMSquare};

use thiserror::Error;

/// Errors reported by state validation, measurement, and the experiment
/// harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not Hermitian (max |m - m†| = {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("operator trace is {trace} instead of 1")]
    NotUnitTrace { trace: f64 },

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("outcome {outcome} of {observable} has probability {probability:.3e}, below the zero-branch cutoff")]
    ZeroProbabilityOutcome {
        observable: PMIndex,
        outcome: Outcome,
        probability: f64,
    },

    #[error("no mean supplied for context {0}")]
    MissingContext(ContextId),

    #[error("mean {mean} for context {context} lies outside [-1, 1]")]
    MeanOutOfRange { context: ContextId, mean: f64 },

    #[error("depolarizing parameter {0} lies outside [0, 1]")]
    InvalidDepolarizingParameter(f64),

    #[error("invalid round plan: {0}")]
    InvalidPlan(String),

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("context {context} received no rounds out of {rounds}; increase the round count")]
    UnsampledContext { context: ContextId, rounds: usize },

    #[error("exact enumeration needs {required} branch evaluations, above the budget of {budget}")]
    EnumerationTooLarge { required: u128, budget: u128 },

    #[error("state file: {0}")]
    StateFile(String),
}
