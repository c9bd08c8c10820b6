use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// A complex square matrix on the system Hilbert space.
///
/// Hamiltonians, jump operators and density matrices all share this type.
#[derive(Clone, PartialEq)]
pub struct Operator {
    m: CMatrix,
}

impl Operator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::Validation("operator dimension must be positive".into()));
        }
        Ok(Self { m })
    }

    /// Wraps a matrix that is square by construction.
    pub(crate) fn from_square(m: CMatrix) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self { m }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_square(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_square(CMatrix::identity(dim, dim))
    }

    /// `|i><j|` in a `dim`-dimensional space.
    pub fn ket_bra(i: usize, j: usize, dim: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        m[(i, j)] = ONE;
        Self::from_square(m)
    }

    /// `|i><i|`.
    pub fn projector(i: usize, dim: usize) -> Self {
        Self::ket_bra(i, i, dim)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        Self::from_square(m)
    }

    /// Builds an operator from row-major complex entries.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: r.len(),
                    context: format!("row {i} of a square matrix"),
                });
            }
        }
        Self::new(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn pauli_x() -> Self {
        Self::ket_bra(0, 1, 2) + Self::ket_bra(1, 0, 2)
    }

    pub fn pauli_y() -> Self {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = -I;
        m[(1, 0)] = I;
        Self::from_square(m)
    }

    /// `|0><0| - |1><1|`: the first basis state is the +1 eigenvector.
    pub fn pauli_z() -> Self {
        Self::from_diagonal(&[1.0, -1.0])
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.m[(i, j)]
    }

    pub fn dagger(&self) -> Self {
        Self::from_square(self.m.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.m.trace()
    }

    pub fn scale(&self, c: impl Into<Complex64>) -> Self {
        Self::from_square(&self.m * c.into())
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |A - A^dag|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.m[(i, j)] - self.m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Relative hermiticity test: `max|A - A^dag| <= tol * max|A|`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol * self.max_abs()
    }

    /// `(A + A^dag) / 2`.
    pub fn hermitize(&self) -> Self {
        Self::from_square((&self.m + self.m.adjoint()) * Complex64::new(0.5, 0.0))
    }

    /// Eigenvalues of the hermitian part, ascending.
    pub fn eigenvalues_hermitian(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .hermitize()
            .m
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues_hermitian()[0]
    }

    /// Hermitian, unit trace and positive semidefinite within `tol`.
    pub fn is_density(&self, tol: f64) -> bool {
        self.is_hermitian(1e-12) && (self.trace() - ONE).norm() <= tol && self.min_eigenvalue() >= -tol
    }

    /// Sum of singular values.
    pub fn trace_norm(&self) -> f64 {
        self.m.clone().singular_values().iter().sum()
    }

    pub fn kron(&self, other: &Operator) -> Operator {
        Self::from_square(self.m.kronecker(&other.m))
    }

    /// Column-stacking vectorization.
    pub fn vectorize(&self) -> CVector {
        CVector::from_column_slice(self.m.as_slice())
    }

    /// Inverse of [`Operator::vectorize`].
    pub fn from_vector(v: &CVector, dim: usize) -> Result<Self> {
        if v.len() != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                found: v.len(),
                context: "vectorized operator".into(),
            });
        }
        Ok(Self::from_square(CMatrix::from_column_slice(dim, dim, v.as_slice())))
    }

    /// `A X B` with `self` as the middle factor.
    pub fn sandwich(&self, left: &Operator, right: &Operator) -> Operator {
        Self::from_square(&left.m * &self.m * &right.m)
    }

    /// `L X L^dag`.
    pub fn conjugate_by(&self, l: &Operator) -> Operator {
        Self::from_square(&l.m * &self.m * l.m.adjoint())
    }

    /// Anticommutator `{A, X}` with `self` as `X`.
    pub fn anticommutator(&self, a: &Operator) -> Operator {
        Self::from_square(&a.m * &self.m + &self.m * &a.m)
    }

    /// Commutator `[A, X]` with `self` as `X`.
    pub fn commutator(&self, a: &Operator) -> Operator {
        Self::from_square(&a.m * &self.m - &self.m * &a.m)
    }

    /// `max |A - B|` entrywise.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator{:.6}", self.m)
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator::from_square(self.m + rhs.m)
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator::from_square(&self.m + &rhs.m)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator::from_square(self.m - rhs.m)
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator::from_square(&self.m - &rhs.m)
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator::from_square(&self.m * &rhs.m)
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator::from_square(-self.m)
    }
}
