//! The Peres-Mermin square: nine dichotomic two-qubit observables on a
//! 3×3 grid whose rows multiply to `+I` and columns to `−I`, the six
//! row/column contexts, the witness `Σ`, and the brute-force noncontextual
//! bound.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::algebra::{grid_operators, Operator};
use crate::Error;

/// Grid position of a square observable; rows and columns run 1..=3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PMIndex {
    row: u8,
    col: u8,
}

impl PMIndex {
    /// Panics outside 1..=3; grid positions are compile-time knowledge
    /// everywhere this is called.
    pub fn new(row: u8, col: u8) -> Self {
        assert!(
            (1..=3).contains(&row) && (1..=3).contains(&col),
            "grid position ({row},{col}) outside 1..=3"
        );
        PMIndex { row, col }
    }

    pub const ALL: [PMIndex; 9] = [
        PMIndex { row: 1, col: 1 },
        PMIndex { row: 1, col: 2 },
        PMIndex { row: 1, col: 3 },
        PMIndex { row: 2, col: 1 },
        PMIndex { row: 2, col: 2 },
        PMIndex { row: 2, col: 3 },
        PMIndex { row: 3, col: 1 },
        PMIndex { row: 3, col: 2 },
        PMIndex { row: 3, col: 3 },
    ];

    pub fn row(&self) -> usize {
        self.row as usize
    }

    pub fn col(&self) -> usize {
        self.col as usize
    }

    /// Row-major position in 0..9.
    pub fn flat(&self) -> usize {
        (self.row as usize - 1) * 3 + (self.col as usize - 1)
    }
}

impl fmt::Display for PMIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}{}", self.row, self.col)
    }
}

/// A square observable with its ±1 spectral projectors.
#[derive(Clone, Debug)]
pub struct PMObservable {
    index: PMIndex,
    matrix: Operator,
    proj_plus: Operator,
    proj_minus: Operator,
}

impl PMObservable {
    fn new(index: PMIndex) -> Self {
        let matrix = grid_operators()[index.flat()];
        let half_id = Operator::identity().scale(0.5);
        let half_op = matrix.scale(0.5);
        PMObservable {
            index,
            matrix,
            proj_plus: half_id + half_op,
            proj_minus: half_id - half_op,
        }
    }

    pub fn index(&self) -> PMIndex {
        self.index
    }

    pub fn matrix(&self) -> &Operator {
        &self.matrix
    }

    /// Projector onto the +1 eigenspace, `(I + A)/2`.
    pub fn proj_plus(&self) -> &Operator {
        &self.proj_plus
    }

    /// Projector onto the −1 eigenspace, `(I − A)/2`.
    pub fn proj_minus(&self) -> &Operator {
        &self.proj_minus
    }
}

/// The full square; owns the nine observables.
#[derive(Clone, Debug)]
pub struct PMSquare {
    observables: [PMObservable; 9],
}

impl PMSquare {
    pub fn new() -> Self {
        PMSquare {
            observables: std::array::from_fn(|k| PMObservable::new(PMIndex::ALL[k])),
        }
    }

    pub fn observable(&self, index: PMIndex) -> &PMObservable {
        &self.observables[index.flat()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &PMObservable> {
        self.observables.iter()
    }
}

impl Default for PMSquare {
    fn default() -> Self {
        PMSquare::new()
    }
}

/// Identifier of a row or column context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ContextId {
    R1,
    R2,
    R3,
    C1,
    C2,
    C3,
}

impl ContextId {
    /// Report order: rows first, then columns.
    pub const ALL: [ContextId; 6] = [
        ContextId::R1,
        ContextId::R2,
        ContextId::R3,
        ContextId::C1,
        ContextId::C2,
        ContextId::C3,
    ];

    /// +1 for rows (product `+I`), −1 for columns (product `−I`).
    pub fn sign(self) -> f64 {
        match self {
            ContextId::R1 | ContextId::R2 | ContextId::R3 => 1.0,
            ContextId::C1 | ContextId::C2 | ContextId::C3 => -1.0,
        }
    }
}

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ContextId::R1 => "R1",
            ContextId::R2 => "R2",
            ContextId::R3 => "R3",
            ContextId::C1 => "C1",
            ContextId::C2 => "C2",
            ContextId::C3 => "C3",
        };
        f.write_str(name)
    }
}

/// A context: three mutually commuting square observables forming a row
/// or a column.
#[derive(Clone, Copy, Debug)]
pub struct Context {
    pub id: ContextId,
    pub members: [PMIndex; 3],
}

impl Context {
    pub fn sign(&self) -> f64 {
        self.id.sign()
    }
}

/// The six contexts in report order.
pub fn contexts() -> [Context; 6] {
    let ix = PMIndex::new;
    [
        Context { id: ContextId::R1, members: [ix(1, 1), ix(1, 2), ix(1, 3)] },
        Context { id: ContextId::R2, members: [ix(2, 1), ix(2, 2), ix(2, 3)] },
        Context { id: ContextId::R3, members: [ix(3, 1), ix(3, 2), ix(3, 3)] },
        Context { id: ContextId::C1, members: [ix(1, 1), ix(2, 1), ix(3, 1)] },
        Context { id: ContextId::C2, members: [ix(1, 2), ix(2, 2), ix(3, 2)] },
        Context { id: ContextId::C3, members: [ix(1, 3), ix(2, 3), ix(3, 3)] },
    ]
}

/// The context with the given id.
pub fn context(id: ContextId) -> Context {
    contexts()[ContextId::ALL.iter().position(|c| *c == id).unwrap()]
}

/// +1 when the two observables share a row or a column (they commute,
/// `A_ij A_kl A_ij = A_kl`), −1 otherwise (they anticommute).
pub fn commutation_sign(a: PMIndex, b: PMIndex) -> i8 {
    if a.row == b.row || a.col == b.col {
        1
    } else {
        -1
    }
}

/// Assembles the witness `Σ = ⟨R1⟩+⟨R2⟩+⟨R3⟩−⟨C1⟩−⟨C2⟩−⟨C3⟩` from the six
/// context means. Every context must be present with a mean in [−1, 1].
pub fn sigma_from_context_means(means: &BTreeMap<ContextId, f64>) -> Result<f64, Error> {
    let mut sigma = 0.0;
    for id in ContextId::ALL {
        let mean = *means.get(&id).ok_or(Error::MissingContext(id))?;
        if !(mean.is_finite() && mean.abs() <= 1.0 + 1e-9) {
            return Err(Error::MeanOutOfRange { context: id, mean });
        }
        sigma += id.sign() * mean;
    }
    Ok(sigma)
}

/// Maximum of the witness over all 2^9 deterministic ±1 assignments to the
/// nine observables, each context mean being the product of its three
/// assigned values. This is the noncontextual bound (it evaluates to 4).
pub fn brute_force_nc_bound() -> f64 {
    let ctxs = contexts();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u16..512 {
        let value = |ix: PMIndex| -> f64 {
            if mask >> ix.flat() & 1 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        let sigma: f64 = ctxs
            .iter()
            .map(|ctx| ctx.sign() * ctx.members.iter().copied().map(value).product::<f64>())
            .sum();
        best = best.max(sigma);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{tensor, Axis, ALGEBRA_TOL};

    #[test]
    fn square_matches_pauli_products() {
        let square = PMSquare::new();
        // A_13 = σ_x ⊗ σ_x and A_33 = σ_z ⊗ σ_z.
        let a13 = square.observable(PMIndex::new(1, 3));
        assert!(
            a13.matrix()
                .max_abs_diff(&tensor(&Axis::X.matrix(), &Axis::X.matrix()))
                < ALGEBRA_TOL
        );
        let a33 = square.observable(PMIndex::new(3, 3));
        assert!(
            a33.matrix()
                .max_abs_diff(&tensor(&Axis::Z.matrix(), &Axis::Z.matrix()))
                < ALGEBRA_TOL
        );
        for obs in square.iter() {
            let m = *obs.matrix();
            assert!((m * m).max_abs_diff(&Operator::identity()) < ALGEBRA_TOL);
        }
    }

    #[test]
    fn projectors_are_orthogonal_and_complete() {
        let square = PMSquare::new();
        for obs in square.iter() {
            let p = *obs.proj_plus();
            let m = *obs.proj_minus();
            assert!((p - m).max_abs_diff(obs.matrix()) < ALGEBRA_TOL);
            assert!((p + m).max_abs_diff(&Operator::identity()) < ALGEBRA_TOL);
            assert!((p * p).max_abs_diff(&p) < ALGEBRA_TOL);
            assert!((m * m).max_abs_diff(&m) < ALGEBRA_TOL);
            assert!((p * m).max_abs() < ALGEBRA_TOL);
        }
    }

    #[test]
    fn row_products_are_plus_identity_columns_minus() {
        let square = PMSquare::new();
        let id = Operator::identity();
        for ctx in contexts() {
            let expected = id.scale(ctx.sign());
            // Every ordering of the triple gives the same product.
            let m = ctx.members;
            let orders = [
                [m[0], m[1], m[2]],
                [m[0], m[2], m[1]],
                [m[1], m[0], m[2]],
                [m[1], m[2], m[0]],
                [m[2], m[0], m[1]],
                [m[2], m[1], m[0]],
            ];
            for order in orders {
                let product = order
                    .iter()
                    .map(|ix| *square.observable(*ix).matrix())
                    .fold(id, |acc, m| acc * m);
                assert!(
                    product.max_abs_diff(&expected) < ALGEBRA_TOL,
                    "context {} order {:?}",
                    ctx.id,
                    order
                );
            }
        }
    }

    #[test]
    fn context_members_pairwise_commute() {
        let square = PMSquare::new();
        for ctx in contexts() {
            for a in ctx.members {
                for b in ctx.members {
                    let ma = *square.observable(a).matrix();
                    let mb = *square.observable(b).matrix();
                    assert!((ma * mb - mb * ma).max_abs() < ALGEBRA_TOL);
                }
            }
        }
    }

    #[test]
    fn commutation_sign_matches_matrix_commutators() {
        let square = PMSquare::new();
        for a in PMIndex::ALL {
            for b in PMIndex::ALL {
                let ma = *square.observable(a).matrix();
                let mb = *square.observable(b).matrix();
                let commutator = (ma * mb - mb * ma).max_abs();
                let anticommutator = (ma * mb + mb * ma).max_abs();
                match commutation_sign(a, b) {
                    1 => {
                        assert!(commutator < ALGEBRA_TOL, "{a} vs {b} should commute");
                        // Conjugation fixes the observable.
                        assert!((ma * mb * ma).max_abs_diff(&mb) < ALGEBRA_TOL);
                    }
                    -1 => {
                        assert!(anticommutator < ALGEBRA_TOL, "{a} vs {b} should anticommute");
                        assert!((ma * mb * ma + mb).max_abs() < ALGEBRA_TOL);
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    #[test]
    fn commutation_sign_named_cases() {
        assert_eq!(commutation_sign(PMIndex::new(1, 1), PMIndex::new(1, 3)), 1);
        assert_eq!(commutation_sign(PMIndex::new(1, 1), PMIndex::new(2, 2)), -1);
        assert_eq!(commutation_sign(PMIndex::new(2, 3), PMIndex::new(2, 3)), 1);
    }

    #[test]
    fn each_observable_in_one_row_and_one_column_context() {
        for ix in PMIndex::ALL {
            let rows = contexts()
                .iter()
                .filter(|c| c.sign() > 0.0 && c.members.contains(&ix))
                .count();
            let cols = contexts()
                .iter()
                .filter(|c| c.sign() < 0.0 && c.members.contains(&ix))
                .count();
            assert_eq!((rows, cols), (1, 1));
        }
    }

    #[test]
    fn sigma_from_means_quantum_and_degenerate_values() {
        let mut means = BTreeMap::new();
        for id in ContextId::ALL {
            means.insert(id, id.sign());
        }
        assert_eq!(sigma_from_context_means(&means).unwrap(), 6.0);

        for id in ContextId::ALL {
            means.insert(id, 0.0);
        }
        assert_eq!(sigma_from_context_means(&means).unwrap(), 0.0);

        for id in ContextId::ALL {
            means.insert(id, id.sign() * 25.0 / 81.0);
        }
        let sigma = sigma_from_context_means(&means).unwrap();
        assert!((sigma - 150.0 / 81.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_from_means_rejects_missing_and_out_of_range() {
        let mut means = BTreeMap::new();
        for id in [ContextId::R1, ContextId::R2, ContextId::R3, ContextId::C1, ContextId::C2] {
            means.insert(id, 0.5);
        }
        match sigma_from_context_means(&means) {
            Err(Error::MissingContext(id)) => assert_eq!(id, ContextId::C3),
            other => panic!("expected missing-context error, got {other:?}"),
        }
        means.insert(ContextId::C3, 1.5);
        assert!(matches!(
            sigma_from_context_means(&means),
            Err(Error::MeanOutOfRange { context: ContextId::C3, .. })
        ));
    }

    #[test]
    fn noncontextual_bound_is_four() {
        assert_eq!(brute_force_nc_bound(), 4.0);
    }

    #[test]
    fn all_plus_assignment_scores_zero() {
        // Rows contribute +3, columns −3.
        let ctxs = contexts();
        let sigma: f64 = ctxs.iter().map(|c| c.sign()).sum();
        assert_eq!(sigma, 0.0);
    }

    #[test]
    fn assignment_minimum_is_minus_four() {
        // Independent enumeration of the minimum; sign-flip symmetry of the
        // maximum.
        let ctxs = contexts();
        let mut worst = f64::INFINITY;
        for mask in 0u16..512 {
            let value = |ix: PMIndex| -> f64 {
                if mask >> ix.flat() & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            };
            let sigma: f64 = ctxs
                .iter()
                .map(|ctx| ctx.sign() * ctx.members.iter().copied().map(value).product::<f64>())
                .sum();
            worst = worst.min(sigma);
        }
        assert_eq!(worst, -4.0);
    }
}
