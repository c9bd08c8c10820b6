use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use super::expm::expm;
use super::operator::{CMatrix, CVector, Operator, I, ONE};
use crate::error::{Error, Result};

/// Relative tolerance used when validating Hamiltonians.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// A linear map on operators, stored as a `d^2 x d^2` matrix acting on
/// column-stacked operators.
#[derive(Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: CMatrix,
}

impl Superoperator {
    pub fn new(dim: usize, matrix: CMatrix) -> Result<Self> {
        let n = dim * dim;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                found: matrix.nrows().max(matrix.ncols()),
                context: format!("superoperator on a {dim}-dimensional space"),
            });
        }
        Ok(Self { dim, matrix })
    }

    pub(crate) fn from_matrix_unchecked(dim: usize, matrix: CMatrix) -> Self {
        debug_assert_eq!(matrix.nrows(), dim * dim);
        Self { dim, matrix }
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_matrix_unchecked(dim, CMatrix::zeros(dim * dim, dim * dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix_unchecked(dim, CMatrix::identity(dim * dim, dim * dim))
    }

    /// `X -> A X`.
    pub fn left(a: &Operator) -> Self {
        let d = a.dim();
        Self::from_matrix_unchecked(d, CMatrix::identity(d, d).kronecker(a.matrix()))
    }

    /// `X -> X B`.
    pub fn right(b: &Operator) -> Self {
        let d = b.dim();
        Self::from_matrix_unchecked(d, b.matrix().transpose().kronecker(&CMatrix::identity(d, d)))
    }

    /// `X -> A X B`.
    pub fn sandwich(a: &Operator, b: &Operator) -> Self {
        Self::from_matrix_unchecked(a.dim(), b.matrix().transpose().kronecker(a.matrix()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn apply(&self, x: &Operator) -> Operator {
        assert_eq!(
            x.dim(),
            self.dim,
            "superoperator applied to operator of wrong dimension"
        );
        let v = &self.matrix * x.vectorize();
        Operator::from_vector(&v, self.dim).expect("dimension checked above")
    }

    pub fn scale(&self, c: impl Into<Complex64>) -> Self {
        Self::from_matrix_unchecked(self.dim, &self.matrix * c.into())
    }

    /// `exp(S)`.
    pub fn exp(&self) -> Self {
        Self::from_matrix_unchecked(self.dim, expm(&self.matrix))
    }

    /// Row vector `<<1|` with `<<1|vec(X)>> = Tr X`.
    pub fn trace_covector(dim: usize) -> CVector {
        let mut v = CVector::zeros(dim * dim);
        for i in 0..dim {
            v[i * dim + i] = ONE;
        }
        v
    }

    /// `max_j |Tr S(E_j)|` over the matrix-unit basis.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        (0..d * d)
            .map(|col| (0..d).map(|i| self.matrix[(i * d + i, col)]).sum::<Complex64>().norm())
            .fold(0.0, f64::max)
    }

    /// Whether `Tr S(X) = 0` for all `X`, to absolute tolerance `tol`.
    pub fn is_trace_annihilating(&self, tol: f64) -> bool {
        self.trace_defect() <= tol
    }

    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl fmt::Debug for Superoperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Superoperator(dim = {}){:.4}", self.dim, self.matrix)
    }
}

impl<'a> Add<&'a Superoperator> for &'a Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, rhs.dim);
        Superoperator::from_matrix_unchecked(self.dim, &self.matrix + &rhs.matrix)
    }
}

impl Add for Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: Superoperator) -> Superoperator {
        &self + &rhs
    }
}

impl<'a> Sub<&'a Superoperator> for &'a Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, rhs.dim);
        Superoperator::from_matrix_unchecked(self.dim, &self.matrix - &rhs.matrix)
    }
}

impl Sub for Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: Superoperator) -> Superoperator {
        &self - &rhs
    }
}

/// Composition `(A * B)(X) = A(B(X))`.
impl<'a> Mul<&'a Superoperator> for &'a Superoperator {
    type Output = Superoperator;
    fn mul(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, rhs.dim);
        Superoperator::from_matrix_unchecked(self.dim, &self.matrix * &rhs.matrix)
    }
}

pub(crate) fn check_dims<'a>(dim: usize, ops: impl IntoIterator<Item = &'a Operator>, what: &str) -> Result<()> {
    for (i, op) in ops.into_iter().enumerate() {
        if op.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: op.dim(),
                context: format!("{what} #{i}"),
            });
        }
    }
    Ok(())
}

pub(crate) fn check_hermitian(h: &Operator, what: &str) -> Result<()> {
    if h.is_hermitian(HERMITIAN_TOL) {
        Ok(())
    } else {
        Err(Error::NotHermitian {
            what: what.to_string(),
            defect: h.hermiticity_defect(),
        })
    }
}

/// `rho -> L rho L^dag - {L^dag L, rho}/2`.
pub fn dissipator(l: &Operator) -> Superoperator {
    let ldl = &l.dagger() * l;
    let half = Complex64::new(0.5, 0.0);
    let mut s = jump_superop(l);
    s.matrix -= (Superoperator::left(&ldl).matrix + Superoperator::right(&ldl).matrix) * half;
    s
}

/// `rho -> L rho L^dag`, the rate-level jump channel.
pub fn jump_superop(l: &Operator) -> Superoperator {
    Superoperator::from_matrix_unchecked(l.dim(), l.matrix().conjugate().kronecker(l.matrix()))
}

/// `rho -> -i[H, rho]`.
pub fn commutator_superop(h: &Operator) -> Superoperator {
    let m = (Superoperator::left(h).matrix - Superoperator::right(h).matrix) * (-I);
    Superoperator::from_matrix_unchecked(h.dim(), m)
}

/// Lindblad generator `rho -> -i[H, rho] + sum_k D[L_k] rho`.
pub fn liouvillian(h: &Operator, jumps: &[Operator]) -> Result<Superoperator> {
    check_hermitian(h, "Hamiltonian")?;
    check_dims(h.dim(), jumps, "jump operator")?;
    let mut gen = commutator_superop(h);
    for l in jumps {
        gen.matrix += dissipator(l).matrix;
    }
    Ok(gen)
}

/// No-jump generator `rho -> -i[H, rho] - sum_q {L_q^dag L_q, rho}/2`.
pub fn no_jump_generator(h: &Operator, jumps: &[Operator]) -> Result<Superoperator> {
    check_hermitian(h, "Hamiltonian")?;
    check_dims(h.dim(), jumps, "jump operator")?;
    let d = h.dim();
    let mut decay = Operator::zeros(d);
    for l in jumps {
        decay = decay + &l.dagger() * l;
    }
    let half = Complex64::new(0.5, 0.0);
    let mut gen = commutator_superop(h);
    gen.matrix -= (Superoperator::left(&decay).matrix + Superoperator::right(&decay).matrix) * half;
    Ok(gen)
}
