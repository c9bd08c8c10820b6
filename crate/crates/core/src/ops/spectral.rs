//! Null-space and group-inverse solvers for singular generators.

use nalgebra::Schur;

use super::operator::{CMatrix, CVector, Operator, ONE};
use super::superop::Superoperator;
use crate::error::{Error, Result};

/// Numerical thresholds for the steady-state and Drazin solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// A singular value counts as zero below `kernel * sigma_max`.
    pub kernel: f64,
    /// Most negative eigenvalue accepted in a computed state.
    pub positivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            kernel: 1e-9,
            positivity: 1e-10,
        }
    }
}

/// Right-singular vector of the smallest singular value of a generator
/// required to have a one-dimensional kernel.
pub(crate) fn unique_null_vector(m: &CMatrix, tol: &Tolerances) -> Result<CVector> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let sigma_max = svd.singular_values[*order.last().unwrap()];
    let threshold = tol.kernel * sigma_max.max(f64::MIN_POSITIVE);
    let kernel_dim = order.iter().filter(|&&i| svd.singular_values[i] <= threshold).count();
    if kernel_dim != 1 {
        let second = order.get(1).map(|&i| svd.singular_values[i]).unwrap_or(0.0);
        return Err(Error::DegenerateSteadyState {
            kernel_dim,
            second_smallest: second,
            threshold,
        });
    }
    Ok(v_t.row(order[0]).adjoint())
}

/// Complex Schur form `(Q, T)`. The deflation tolerance is loosened from
/// machine epsilon when the QR sweep stalls, as it can on matrices with
/// clustered defective eigenvalues.
pub(crate) fn schur_form(m: &CMatrix) -> (CMatrix, CMatrix) {
    let max_iter = 100 * m.nrows().max(1);
    let mut eps = f64::EPSILON;
    loop {
        if let Some(s) = Schur::try_new(m.clone(), eps, max_iter) {
            return s.unpack();
        }
        if eps > 1e-10 {
            return Schur::new(m.clone()).unpack();
        }
        eps *= 4.0;
    }
}

/// One solve of the bordered system `(G + r l^T) x = r` for a kernel vector
/// `r` normalized so that `<<l|r>> = 1`. Removes the sector mixing left
/// over by the SVD when the smallest nonzero singular value is small.
pub(crate) fn refine_kernel(gen: &CMatrix, right: &CVector, left: &CVector) -> CVector {
    let bordered = gen + right * left.transpose();
    match bordered.lu().solve(right) {
        Some(x) if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => x,
        _ => right.clone(),
    }
}

/// Group inverse `Q (G Q + P)^-1 Q`, where `P = |r>><<l|` projects onto the
/// stationary mode `r` along the conserved covector `l` (normalized so
/// that `<<l|r>> = 1`).
pub(crate) fn group_inverse(gen: &CMatrix, right: &CVector, left: &CVector) -> Result<CMatrix> {
    let n = gen.nrows();
    let p = right * left.transpose();
    let q = CMatrix::identity(n, n) - &p;
    let shifted = gen * &q + &p;
    let inv = shifted
        .try_inverse()
        .ok_or_else(|| Error::Singular("G Q + P is singular; kernel is not one-dimensional".into()))?;
    Ok(&q * inv * &q)
}

/// Unique steady state of a trace-preserving generator.
pub fn steady_state(gen: &Superoperator) -> Result<Operator> {
    steady_state_with(gen, &Tolerances::default())
}

pub fn steady_state_with(gen: &Superoperator, tol: &Tolerances) -> Result<Operator> {
    let v = unique_null_vector(gen.matrix(), tol)?;
    let tr = Operator::from_vector(&v, gen.dim())?.trace();
    if tr.norm() < 1e-300 {
        return Err(Error::Validation(
            "kernel vector is traceless; generator is not trace preserving".into(),
        ));
    }
    let v = refine_kernel(
        gen.matrix(),
        &(v * (ONE / tr)),
        &Superoperator::trace_covector(gen.dim()),
    );
    let rho = Operator::from_vector(&v, gen.dim())?;
    let rho = rho.scale(ONE / rho.trace()).hermitize();
    let min = rho.min_eigenvalue();
    if min < -tol.positivity {
        return Err(Error::Positivity {
            min_eigenvalue: min,
            context: "steady state".into(),
        });
    }
    Ok(rho)
}

/// Drazin (group) inverse of a generator whose kernel is spanned by `rho_ss`.
pub fn drazin(gen: &Superoperator, rho_ss: &Operator) -> Result<Superoperator> {
    if rho_ss.dim() != gen.dim() {
        return Err(Error::Dimension {
            expected: gen.dim(),
            found: rho_ss.dim(),
            context: "steady state for Drazin inverse".into(),
        });
    }
    let right = rho_ss.vectorize();
    let left = Superoperator::trace_covector(gen.dim());
    let inv = group_inverse(gen.matrix(), &right, &left)?;
    Superoperator::new(gen.dim(), inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::superop::liouvillian;

    fn thermal_qubit(nbar: f64, gamma: f64) -> Superoperator {
        let jumps = [
            Operator::ket_bra(1, 0, 2).scale((gamma * nbar).sqrt()),
            Operator::ket_bra(0, 1, 2).scale((gamma * (nbar + 1.0)).sqrt()),
        ];
        liouvillian(&Operator::zeros(2), &jumps).unwrap()
    }

    #[test]
    fn detailed_balance_steady_state() {
        let rho = steady_state(&thermal_qubit(0.5, 1.0)).unwrap();
        assert!(rho.max_abs_diff(&Operator::from_diagonal(&[0.75, 0.25])) < 1e-12);
    }

    #[test]
    fn pure_decay_goes_to_ground() {
        let gen = liouvillian(&Operator::zeros(2), &[Operator::ket_bra(0, 1, 2)]).unwrap();
        let rho = steady_state(&gen).unwrap();
        assert!(rho.max_abs_diff(&Operator::projector(0, 2)) < 1e-12);
    }

    #[test]
    fn unitary_dynamics_is_degenerate() {
        let h = Operator::from_diagonal(&[0.0, 1.0, 2.5]);
        let gen = liouvillian(&h, &[]).unwrap();
        match steady_state(&gen) {
            Err(Error::DegenerateSteadyState { kernel_dim, .. }) => assert_eq!(kernel_dim, 3),
            other => panic!("expected degenerate kernel, got {other:?}"),
        }
    }

    #[test]
    fn drazin_of_two_state_rate_matrix() {
        // Q = [[-a, b], [a, -b]] with a = b = 1 has group inverse Q / (a + b)^2.
        let gen = thermal_qubit_rates(1.0, 1.0);
        let rho = steady_state(&gen).unwrap();
        let dz = drazin(&gen, &rho).unwrap();
        let x = Operator::from_diagonal(&[0.9, -0.4]);
        let expected = gen.apply(&x).scale(0.25);
        assert!(dz.apply(&x).max_abs_diff(&expected) < 1e-13);
    }

    fn thermal_qubit_rates(up: f64, down: f64) -> Superoperator {
        let jumps = [
            Operator::ket_bra(1, 0, 2).scale(up.sqrt()),
            Operator::ket_bra(0, 1, 2).scale(down.sqrt()),
        ];
        liouvillian(&Operator::zeros(2), &jumps).unwrap()
    }

    #[test]
    fn drazin_general_rates() {
        let (a, b) = (0.3, 1.9);
        let gen = thermal_qubit_rates(a, b);
        let rho = steady_state(&gen).unwrap();
        let dz = drazin(&gen, &rho).unwrap();
        let x = Operator::from_diagonal(&[1.0, 0.0]);
        let expected = gen.apply(&x).scale(1.0 / (a + b).powi(2));
        assert!(dz.apply(&x).max_abs_diff(&expected) < 1e-13);
        assert!(dz.apply(&rho).max_abs() < 1e-13);
    }
}
