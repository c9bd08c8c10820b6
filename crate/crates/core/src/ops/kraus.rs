use num_complex::Complex64;

use super::operator::{Operator, I};
use super::superop::{check_dims, check_hermitian};
use crate::error::{Error, Result};

/// First-order quantum-jump unraveling over one time step.
#[derive(Clone, Debug)]
pub struct KrausStep {
    /// `1 - i dt H_eff`.
    pub v0: Operator,
    /// `sqrt(dt) L_k`, one per jump operator.
    pub vks: Vec<Operator>,
    pub dt: f64,
    /// `H - (i/2) sum_k L_k^dag L_k`.
    pub h_eff: Operator,
}

impl KrausStep {
    /// `max |V_0^dag V_0 + sum_k V_k^dag V_k - 1|`, which is `O(dt^2)`.
    pub fn completeness_defect(&self) -> f64 {
        let d = self.v0.dim();
        let mut sum = &self.v0.dagger() * &self.v0;
        for v in &self.vks {
            sum = sum + &v.dagger() * v;
        }
        sum.max_abs_diff(&Operator::identity(d))
    }

    /// `V_0 rho V_0^dag + sum_k V_k rho V_k^dag`.
    pub fn apply(&self, rho: &Operator) -> Operator {
        self.vks
            .iter()
            .fold(rho.conjugate_by(&self.v0), |acc, v| acc + rho.conjugate_by(v))
    }
}

/// Effective non-hermitian Hamiltonian `H - (i/2) sum_k L_k^dag L_k`.
pub fn effective_hamiltonian(h: &Operator, jumps: &[Operator]) -> Operator {
    let decay = jumps
        .iter()
        .fold(Operator::zeros(h.dim()), |acc, l| acc + &l.dagger() * l);
    h - &decay.scale(I * 0.5)
}

pub fn kraus_step(h: &Operator, jumps: &[Operator], dt: f64) -> Result<KrausStep> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation(format!("time step must be positive, got {dt}")));
    }
    check_hermitian(h, "Hamiltonian")?;
    check_dims(h.dim(), jumps, "jump operator")?;
    let h_eff = effective_hamiltonian(h, jumps);
    let v0 = &Operator::identity(h.dim()) - &h_eff.scale(Complex64::new(0.0, dt));
    let sq = dt.sqrt();
    let vks = jumps.iter().map(|l| l.scale(sq)).collect();
    Ok(KrausStep { v0, vks, dt, h_eff })
}
