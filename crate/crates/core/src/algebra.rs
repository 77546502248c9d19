//! Exact two-qubit complex linear algebra: operators, density matrices,
//! tensor products, and the Pauli-basis decomposition.
//!
//! The convention throughout the crate: the left tensor factor is qubit 1,
//! computational basis ordered `|00⟩, |01⟩, |10⟩, |11⟩`. Everything is
//! double-precision dense 4×4 algebra; the matrices are tiny enough that
//! error growth stays far below the tolerances below.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::Error;

/// Tolerance for algebraic identities (products, decompositions).
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Tolerance for state validity (Hermiticity, trace, positivity).
pub const STATE_TOL: f64 = 1e-10;

/// 2×2 complex matrix acting on a single qubit.
pub type SingleQubitOp = Matrix2<Complex64>;

type Mat4 = Matrix4<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// One of the three Pauli axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// The 2×2 Pauli matrix for this axis.
    pub fn matrix(self) -> SingleQubitOp {
        match self {
            Axis::X => Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)),
            Axis::Y => Matrix2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)),
            Axis::Z => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)),
        }
    }
}

/// 2×2 identity.
pub fn identity2() -> SingleQubitOp {
    Matrix2::identity()
}

/// Dense 4×4 complex operator on the two-qubit space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Operator(Mat4);

impl Operator {
    pub fn zero() -> Self {
        Operator(Mat4::zeros())
    }

    pub fn identity() -> Self {
        Operator(Mat4::identity())
    }

    pub fn from_matrix(m: Mat4) -> Self {
        Operator(m)
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(rows: [[Complex64; 4]; 4]) -> Self {
        Operator(Mat4::from_fn(|i, j| rows[i][j]))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Operator(self.0.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Operator(self.0 * c(s, 0.0))
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        Operator(self.0 * s)
    }

    /// Largest entry magnitude (max norm).
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry magnitude of `self - other`.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        (*self - *other).max_abs()
    }

    /// Largest deviation from Hermiticity, `max |m - m†|`.
    pub fn hermitian_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// `(m + m†) / 2`.
    pub fn hermitized(&self) -> Self {
        Operator((self.0 + self.0.adjoint()) * c(0.5, 0.0))
    }

    /// Real part of `tr(self · rho)`; the quantum expectation value when
    /// `self` is Hermitian.
    pub fn expectation(&self, rho: &DensityMatrix) -> f64 {
        let mut sum = c(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                sum += self.0[(i, j)] * rho.op.0[(j, i)];
            }
        }
        sum.re
    }

    /// Eigenvalues in ascending order. The operator must be Hermitian;
    /// callers check `hermitian_defect` first where that is in doubt.
    pub fn hermitian_eigenvalues(&self) -> [f64; 4] {
        let eig = self.hermitized().0.symmetric_eigen();
        let mut vals = [0.0; 4];
        vals.copy_from_slice(eig.eigenvalues.as_slice());
        vals.sort_by(f64::total_cmp);
        vals
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator(self.0 + rhs.0)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator(self.0 - rhs.0)
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-self.0)
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        Operator(self.0 * rhs.0)
    }
}

impl Mul<f64> for Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(rhs)
    }
}

/// Kronecker product with the left factor acting on qubit 1.
pub fn tensor(a: &SingleQubitOp, b: &SingleQubitOp) -> Operator {
    Operator(a.kronecker(b))
}

/// `σ_axis ⊗ I`, the single-qubit Pauli on qubit 1.
pub fn left_operator(axis: Axis) -> Operator {
    tensor(&axis.matrix(), &identity2())
}

/// `I ⊗ σ_axis`, the single-qubit Pauli on qubit 2.
pub fn right_operator(axis: Axis) -> Operator {
    tensor(&identity2(), &axis.matrix())
}

/// Single-qubit factors `(left, right)` of the square observable at grid
/// position `(row, col)`, rows and columns numbered 1..=3.
pub fn grid_axes(row: usize, col: usize) -> (Axis, Axis) {
    use Axis::*;
    match (row, col) {
        (1, 1) => (Y, Z),
        (1, 2) => (Z, Y),
        (1, 3) => (X, X),
        (2, 1) => (Z, X),
        (2, 2) => (X, Z),
        (2, 3) => (Y, Y),
        (3, 1) => (X, Y),
        (3, 2) => (Y, X),
        (3, 3) => (Z, Z),
        _ => panic!("grid position ({row},{col}) outside 1..=3"),
    }
}

/// The nine two-qubit Pauli products in grid order (row-major).
pub fn grid_operators() -> &'static [Operator; 9] {
    static OPS: OnceLock<[Operator; 9]> = OnceLock::new();
    OPS.get_or_init(|| {
        let mut ops = [Operator::zero(); 9];
        for row in 1..=3 {
            for col in 1..=3 {
                let (a, b) = grid_axes(row, col);
                ops[(row - 1) * 3 + (col - 1)] = tensor(&a.matrix(), &b.matrix());
            }
        }
        ops
    })
}

/// Single-qubit factors of the 16-element Pauli basis, `None` meaning the
/// identity factor. Order: identity, the nine grid products (row-major),
/// `L_x, L_y, L_z`, `R_x, R_y, R_z`.
pub(crate) fn basis_factors() -> [(Option<Axis>, Option<Axis>); 16] {
    let mut factors = [(None, None); 16];
    for row in 1..=3 {
        for col in 1..=3 {
            let (a, b) = grid_axes(row, col);
            factors[1 + (row - 1) * 3 + (col - 1)] = (Some(a), Some(b));
        }
    }
    for (k, axis) in Axis::ALL.into_iter().enumerate() {
        factors[10 + k] = (Some(axis), None);
        factors[13 + k] = (None, Some(axis));
    }
    factors
}

/// The 16-element Hermitian Pauli basis in the order of [`basis_factors`].
pub(crate) fn basis_operators() -> &'static [Operator; 16] {
    static OPS: OnceLock<[Operator; 16]> = OnceLock::new();
    OPS.get_or_init(|| {
        let factor = |f: Option<Axis>| f.map_or_else(identity2, Axis::matrix);
        let mut ops = [Operator::zero(); 16];
        for (k, (a, b)) in basis_factors().into_iter().enumerate() {
            ops[k] = tensor(&factor(a), &factor(b));
        }
        ops
    })
}

/// Validated two-qubit state: Hermitian, unit-trace, positive semidefinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
}

impl DensityMatrix {
    /// Validates Hermiticity and unit trace to [`STATE_TOL`] and positivity
    /// to `-STATE_TOL` on the eigenvalues.
    pub fn new(op: Operator) -> Result<Self, Error> {
        let defect = op.hermitian_defect();
        if defect > STATE_TOL {
            return Err(Error::NotHermitian { defect });
        }
        let trace = op.trace();
        if (trace - c(1.0, 0.0)).norm() > STATE_TOL {
            return Err(Error::NotUnitTrace { trace: trace.re });
        }
        let min_eigenvalue = op.hermitian_eigenvalues()[0];
        if min_eigenvalue < -STATE_TOL {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue });
        }
        Ok(DensityMatrix {
            op: op.hermitized(),
        })
    }

    /// `ρ* = I/4`, the fixed point of every channel in this crate.
    pub fn maximally_mixed() -> Self {
        DensityMatrix {
            op: Operator::identity().scale(0.25),
        }
    }

    /// Rank-1 projector `|ψ⟩⟨ψ|`; the ket is normalized first.
    pub fn from_ket(ket: &Vector4<Complex64>) -> Self {
        let normalized = ket / c(ket.norm(), 0.0);
        DensityMatrix {
            op: Operator(normalized * normalized.adjoint()),
        }
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    /// Re-Hermitizes and re-normalizes an operator known to be a state up
    /// to floating-point drift (Lüders updates, channel outputs). Skips
    /// the eigenvalue check; positivity holds by construction on every
    /// call path that uses this.
    pub(crate) fn renormalized(op: Operator) -> Self {
        let h = op.hermitized();
        let trace = h.trace().re;
        DensityMatrix {
            op: h.scale(1.0 / trace),
        }
    }

    /// Largest entry magnitude of the difference of two states.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        self.op.max_abs_diff(&other.op)
    }
}

/// Expansion coefficients of an operator in the Pauli basis:
/// `op = (1/4)(c0·I + Σ t_ij A_ij + Σ l_i L_i + Σ r_i R_i)`.
///
/// `t` is indexed row-major by grid position, `l` and `r` by axis in the
/// order X, Y, Z. A valid state has `c0 = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliCoefficients {
    pub c0: f64,
    pub t: [f64; 9],
    pub l: [f64; 3],
    pub r: [f64; 3],
}

impl PauliCoefficients {
    pub fn zero() -> Self {
        PauliCoefficients {
            c0: 0.0,
            t: [0.0; 9],
            l: [0.0; 3],
            r: [0.0; 3],
        }
    }

    /// The `t` coefficient at grid position `(row, col)`, 1..=3 each.
    pub fn t_at(&self, row: usize, col: usize) -> f64 {
        assert!((1..=3).contains(&row) && (1..=3).contains(&col));
        self.t[(row - 1) * 3 + (col - 1)]
    }
}

/// Pauli coefficients of an arbitrary Hermitian operator; `c0 = tr(op)`.
pub fn pauli_decompose_operator(op: &Operator) -> PauliCoefficients {
    let basis = basis_operators();
    let mut out = PauliCoefficients::zero();
    let coeff = |b: &Operator| {
        // tr(B · op) with B Hermitian; the basis is orthogonal with
        // tr(B²) = 4, matching the 1/4 in the expansion.
        let mut sum = c(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                sum += b.0[(i, j)] * op.0[(j, i)];
            }
        }
        sum.re
    };
    out.c0 = coeff(&basis[0]);
    for k in 0..9 {
        out.t[k] = coeff(&basis[1 + k]);
    }
    for k in 0..3 {
        out.l[k] = coeff(&basis[10 + k]);
        out.r[k] = coeff(&basis[13 + k]);
    }
    out
}

/// Pauli coefficients of a state; `c0 = 1` up to float error.
pub fn pauli_decompose(rho: &DensityMatrix) -> PauliCoefficients {
    pauli_decompose_operator(rho.operator())
}

/// Rebuilds `(1/4)(c0·I + Σ t_ij A_ij + Σ l_i L_i + Σ r_i R_i)`.
pub fn pauli_reconstruct(coeffs: &PauliCoefficients) -> Operator {
    let basis = basis_operators();
    let mut m = basis[0].0 * c(coeffs.c0, 0.0);
    for k in 0..9 {
        m += basis[1 + k].0 * c(coeffs.t[k], 0.0);
    }
    for k in 0..3 {
        m += basis[10 + k].0 * c(coeffs.l[k], 0.0);
        m += basis[13 + k].0 * c(coeffs.r[k], 0.0);
    }
    Operator(m * c(0.25, 0.0))
}

/// Projection of a state onto the single-qubit (`L`, `R`) sectors:
/// `(1/4)(Σ l_i L_i + Σ r_i R_i)`. Traceless and Hermitian.
pub fn project_lr(rho: &DensityMatrix) -> Operator {
    let mut coeffs = pauli_decompose(rho);
    coeffs.c0 = 0.0;
    coeffs.t = [0.0; 9];
    pauli_reconstruct(&coeffs)
}

/// Haar-random pure state: four complex amplitudes drawn as independent
/// standard Gaussians (real part then imaginary part, basis order) and
/// normalized.
pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    let mut draw = || -> f64 { rng.sample(StandardNormal) };
    let ket = Vector4::from_fn(|_, _| {
        let re = draw();
        let im = draw();
        c(re, im)
    });
    DensityMatrix::from_ket(&ket)
}
