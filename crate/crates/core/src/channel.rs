//! The passerby-induced channel family and its analysis.
//!
//! Every channel here is a mixture of conjugations by two-qubit Pauli
//! products, so each one is diagonal in the 16-element Pauli basis: it
//! multiplies the nine grid coefficients `t_ij` and the single-qubit
//! coefficients `l_i`, `r_i` by fixed factors while leaving the identity
//! coefficient alone. Channels carry both representations. The diagonal
//! (Pauli-affine) form drives composition, powers, and adjoints; the
//! operator-sum form is used to act on states, and the two are checked
//! against each other in the tests.

use std::fmt;

use rand::Rng;

use crate::algebra::{
    basis_factors, basis_operators, pauli_decompose_operator, pauli_reconstruct, random_pure_state,
    Axis, DensityMatrix, Operator, PauliCoefficients,
};
use crate::measurement::sequence_distribution;
use crate::square::{PMIndex, PMSquare};
use crate::Error;

/// Probability gap below which two channels count as operationally equal
/// in [`pm_equivalence_check`].
pub const EQUIVALENCE_TOL: f64 = 1e-10;

/// Coefficient leakage bound for [`lr_confinement_check`].
pub const CONFINEMENT_TOL: f64 = 1e-12;

/// Diagonal action on the Pauli basis: per-coefficient scale factors for
/// the grid (`t`), left (`l`), and right (`r`) sectors. The identity
/// coefficient is fixed at 1 by trace preservation, which is also where
/// the drift toward the maximally mixed state shows up.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliScales {
    pub t: [f64; 9],
    pub l: [f64; 3],
    pub r: [f64; 3],
}

impl PauliScales {
    pub fn ones() -> Self {
        PauliScales {
            t: [1.0; 9],
            l: [1.0; 3],
            r: [1.0; 3],
        }
    }

    fn uniform(factor: f64) -> Self {
        PauliScales {
            t: [factor; 9],
            l: [factor; 3],
            r: [factor; 3],
        }
    }

    /// Flat view in basis order (grid, left, right), 15 entries.
    fn flat(&self) -> [f64; 15] {
        let mut d = [0.0; 15];
        d[..9].copy_from_slice(&self.t);
        d[9..12].copy_from_slice(&self.l);
        d[12..].copy_from_slice(&self.r);
        d
    }

    fn from_flat(d: [f64; 15]) -> Self {
        let mut s = PauliScales::ones();
        s.t.copy_from_slice(&d[..9]);
        s.l.copy_from_slice(&d[9..12]);
        s.r.copy_from_slice(&d[12..]);
        s
    }

    fn pointwise(&self, other: &PauliScales, f: impl Fn(f64, f64) -> f64) -> PauliScales {
        let a = self.flat();
        let b = other.flat();
        let mut out = [0.0; 15];
        for k in 0..15 {
            out[k] = f(a[k], b[k]);
        }
        PauliScales::from_flat(out)
    }

    pub fn apply(&self, coeffs: &mut PauliCoefficients) {
        for k in 0..9 {
            coeffs.t[k] *= self.t[k];
        }
        for k in 0..3 {
            coeffs.l[k] *= self.l[k];
            coeffs.r[k] *= self.r[k];
        }
    }
}

/// ±1 under conjugation: `B_i B_j B_i = s(i,j) B_j` for Pauli-basis
/// elements. Factors commute unless both are non-identity and different.
fn conjugation_sign(i: usize, j: usize) -> f64 {
    let factors = basis_factors();
    let factor_sign = |a: Option<Axis>, b: Option<Axis>| -> f64 {
        match (a, b) {
            (Some(x), Some(y)) if x != y => -1.0,
            _ => 1.0,
        }
    };
    let (al, ar) = factors[i];
    let (bl, br) = factors[j];
    factor_sign(al, bl) * factor_sign(ar, br)
}

/// Completely positive trace-preserving map on two-qubit states, stored as
/// a Pauli-conjugation mixture `ρ ↦ Σ w_k B_k ρ B_k` together with its
/// diagonal Pauli-basis action.
#[derive(Clone, Debug)]
pub struct Channel {
    scales: PauliScales,
    kraus: Vec<(f64, Operator)>,
}

impl Channel {
    pub fn identity() -> Self {
        Channel {
            scales: PauliScales::ones(),
            kraus: vec![(1.0, Operator::identity())],
        }
    }

    /// Builds the channel from mixture weights over the 16 Pauli-basis
    /// conjugators (basis order: identity, grid, left, right). The scales
    /// follow as `d_j = Σ_i w_i s(i,j)`.
    fn from_basis_weights(weights: &[(f64, usize)]) -> Self {
        let basis = basis_operators();
        let mut d = [0.0; 15];
        for (j, slot) in d.iter_mut().enumerate() {
            *slot = weights
                .iter()
                .map(|(w, i)| w * conjugation_sign(*i, j + 1))
                .sum();
        }
        Channel {
            scales: PauliScales::from_flat(d),
            kraus: weights.iter().map(|(w, i)| (*w, basis[*i])).collect(),
        }
    }

    /// Inverts the sign transform to recover mixture weights from scales:
    /// `w_i = (1/16) Σ_j s(i,j) d_j` with `d_0 = 1`. Only scale vectors
    /// arising from completely positive maps are passed in; tiny negative
    /// weights from rounding are clamped away.
    fn from_scales(scales: PauliScales) -> Self {
        let d = scales.flat();
        let mut kraus = Vec::new();
        for (i, conjugator) in basis_operators().iter().enumerate() {
            let mut w = conjugation_sign(i, 0);
            for (j, dj) in d.iter().enumerate() {
                w += conjugation_sign(i, j + 1) * dj;
            }
            w /= 16.0;
            debug_assert!(w > -1e-9, "scales do not describe a CP map (w_{i} = {w})");
            if w > 1e-15 {
                kraus.push((w, *conjugator));
            }
        }
        Channel { scales, kraus }
    }

    pub fn scales(&self) -> &PauliScales {
        &self.scales
    }

    /// The operator-sum form as `(weight, conjugator)` pairs.
    pub fn kraus(&self) -> &[(f64, Operator)] {
        &self.kraus
    }

    /// Applies the channel to a state through the operator-sum form.
    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        DensityMatrix::renormalized(self.apply_operator(rho.operator()))
    }

    /// `Σ w_k B_k · op · B_k` for an arbitrary operator; no normalization.
    pub fn apply_operator(&self, op: &Operator) -> Operator {
        let mut out = Operator::zero();
        for (w, b) in &self.kraus {
            out = out + (*b * *op * *b).scale(*w);
        }
        out
    }

    /// Applies the channel through the Pauli-diagonal route instead of the
    /// operator sum; the two agree to within rounding and the tests hold
    /// them together.
    pub fn apply_via_pauli(&self, op: &Operator) -> Operator {
        let mut coeffs = pauli_decompose_operator(op);
        self.scales.apply(&mut coeffs);
        pauli_reconstruct(&coeffs)
    }

    /// The channel that applies `self` first and `next` second.
    pub fn then(&self, next: &Channel) -> Channel {
        Channel::from_scales(self.scales.pointwise(&next.scales, |a, b| a * b))
    }

    /// `n`-fold self-composition.
    pub fn power(&self, n: u32) -> Channel {
        Channel::from_scales(PauliScales::from_flat(
            self.scales.flat().map(|d| d.powi(n as i32)),
        ))
    }
}

/// Map induced by a passerby measuring `A_ij` and discarding the outcome:
/// `ρ ↦ ρ/2 + A_ij ρ A_ij / 2 = Π⁺ρΠ⁺ + Π⁻ρΠ⁻`.
pub fn gamma_measured(index: PMIndex) -> Channel {
    Channel::from_basis_weights(&[(0.5, 0), (0.5, 1 + index.flat())])
}

/// Average map of a passerby picking uniformly among the nine square
/// measurements: `ρ ↦ ρ/2 + (1/18) Σ_ij A_ij ρ A_ij`. Scales the grid
/// sector by 5/9 and the left/right sectors by 1/3.
pub fn gamma_avg() -> Channel {
    let mut weights = vec![(0.5, 0)];
    weights.extend((0..9).map(|k| (1.0 / 18.0, 1 + k)));
    Channel::from_basis_weights(&weights)
}

/// `N`-fold composition of [`gamma_avg`]: the combined effect of `N`
/// passersby acting between two measurements of the main observer. On the
/// grid sector it scales by `(5/9)^n`.
pub fn gamma_power(n: u32) -> Channel {
    gamma_avg().power(n)
}

/// Depolarizing channel `ρ ↦ p·ρ + (1−p)·I/4`.
pub fn depolarizing(p: f64) -> Result<Channel, Error> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidDepolarizingParameter(p));
    }
    Ok(Channel::from_scales(PauliScales::uniform(p)))
}

/// Heisenberg-picture adjoint: the unique map with
/// `tr(adjoint(ch)(A)·ρ) = tr(A·ch(ρ))` for all `A`, `ρ`. For a map that
/// is diagonal in an orthogonal Hermitian basis with real scales, the
/// transpose of the linear part is the same diagonal, and the conjugators
/// are Hermitian, so the adjoint reuses both representations.
pub fn adjoint(ch: &Channel) -> Channel {
    Channel {
        scales: ch.scales.clone(),
        kraus: ch.kraus.clone(),
    }
}

/// Outcome of probing two channels with the square's own measurements.
#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub max_probability_gap: f64,
    pub pass: bool,
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: max outcome-probability gap {:.3e} over {} random state/sequence trials (tol {:.0e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.max_probability_gap,
            self.trials,
            EQUIVALENCE_TOL,
        )
    }
}

/// Tries to distinguish `ch1` from `ch2` the way the main observer could:
/// random initial states and random square-measurement sequences of length
/// ≤ 3, with the channel under test applied before each measurement after
/// the first. Reports the largest absolute difference between the two
/// outcome-sequence distributions; PASS means the channels are
/// operationally identical to [`EQUIVALENCE_TOL`].
pub fn pm_equivalence_check<R: Rng + ?Sized>(
    ch1: &Channel,
    ch2: &Channel,
    trials: usize,
    rng: &mut R,
) -> EquivalenceReport {
    assert!(trials >= 1);
    let square = PMSquare::new();
    let mut max_gap: f64 = 0.0;
    for _ in 0..trials {
        let rho = random_pure_state(rng);
        let len = rng.random_range(1..=3usize);
        let obs: Vec<_> = (0..len)
            .map(|_| square.observable(PMIndex::ALL[rng.random_range(0..9)]))
            .collect();
        let gaps1 = vec![Some(ch1); len - 1];
        let gaps2 = vec![Some(ch2); len - 1];
        let d1 = sequence_distribution(&rho, &obs, &gaps1);
        let d2 = sequence_distribution(&rho, &obs, &gaps2);
        for (p1, p2) in d1.iter().zip(&d2) {
            max_gap = max_gap.max((p1 - p2).abs());
        }
    }
    EquivalenceReport {
        trials,
        max_probability_gap: max_gap,
        pass: max_gap <= EQUIVALENCE_TOL,
    }
}

/// One `Π± B Π±` confinement case.
#[derive(Clone, Debug)]
pub struct ConfinementCase {
    pub observable: PMIndex,
    pub basis_label: String,
    pub leak: f64,
    pub pass: bool,
}

/// Result of sweeping all observable × single-qubit-basis pairs.
#[derive(Clone, Debug)]
pub struct ConfinementReport {
    pub cases: Vec<ConfinementCase>,
    pub max_leak: f64,
    pub pass: bool,
}

impl fmt::Display for ConfinementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: max identity/grid leakage {:.3e} over {} projected basis elements (tol {:.0e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.max_leak,
            self.cases.len(),
            CONFINEMENT_TOL,
        )
    }
}

/// Verifies that projecting any single-qubit basis element with any square
/// projector stays inside the single-qubit span: the identity and grid
/// coefficients of `Π±_ij B Π±_ij` vanish for every `A_ij` and every
/// `B ∈ {L_x..L_z, R_x..R_z}`. This is what makes the disturbance in the
/// `l, r` sectors invisible to square measurements.
pub fn lr_confinement_check() -> ConfinementReport {
    let square = PMSquare::new();
    let basis = basis_operators();
    let mut cases = Vec::new();
    let mut max_leak: f64 = 0.0;
    for ix in PMIndex::ALL {
        let obs = square.observable(ix);
        for k in 0..6 {
            let b = basis[10 + k];
            let label = format!(
                "{}{}",
                if k < 3 { "L" } else { "R" },
                ["x", "y", "z"][k % 3]
            );
            let mut leak: f64 = 0.0;
            for projector in [obs.proj_plus(), obs.proj_minus()] {
                let projected = *projector * b * *projector;
                let coeffs = pauli_decompose_operator(&projected);
                leak = leak.max(coeffs.c0.abs());
                for t in coeffs.t {
                    leak = leak.max(t.abs());
                }
            }
            max_leak = max_leak.max(leak);
            cases.push(ConfinementCase {
                observable: ix,
                basis_label: label,
                leak,
                pass: leak <= CONFINEMENT_TOL,
            });
        }
    }
    ConfinementReport {
        pass: cases.iter().all(|case| case.pass),
        cases,
        max_leak,
    }
}
