//! Time evolution and stationary states of the memory-resolved dynamics.

mod ode;

pub use ode::{integrate, OdeOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::FeedbackModel;
use crate::hybrid::{ExtendedGenerator, HybridState};
use crate::ops::{expm, same_step, CMatrix, CVector, Operator, I, ONE, ZERO};

/// Block eigenvalues below this abort an integration.
pub const POSITIVITY_ABORT: f64 = -1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvolutionMethod {
    MemoryResolvedOde,
    ExtendedExponential,
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<HybridState>,
    pub method: EvolutionMethod,
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::Validation(format!(
            "output times must be finite and nonnegative, got {t}"
        )));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("output times must be strictly increasing".into()));
    }
    Ok(())
}

fn check_initial(model: &FeedbackModel, state: &HybridState) -> Result<()> {
    if state.n_memory() != model.n_channels() {
        return Err(Error::Dimension {
            expected: model.n_channels(),
            found: state.n_memory(),
            context: "memory blocks of the initial state".into(),
        });
    }
    if state.dim() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            found: state.dim(),
            context: "system dimension of the initial state".into(),
        });
    }
    HybridState::new(state.blocks().to_vec()).map(|_| ())
}

fn check_positivity(state: &HybridState, t: f64) -> Result<()> {
    let min = state.min_block_eigenvalue();
    if min < POSITIVITY_ABORT {
        return Err(Error::Positivity {
            min_eigenvalue: min,
            context: format!("memory-resolved evolution at t = {t}"),
        });
    }
    Ok(())
}

/// Precomputed operators for the memory-resolved right-hand side.
struct MemoryResolvedRhs {
    d: usize,
    n: usize,
    /// `-i H(k) - (1/2) sum_q L_q(k)^dag L_q(k)` including unmonitored decay.
    drift: Vec<CMatrix>,
    /// `jumps[q][k] = L_k(q)`.
    jumps: Vec<Vec<CMatrix>>,
    jumps_dag: Vec<Vec<CMatrix>>,
    unmonitored: Vec<Vec<(CMatrix, CMatrix)>>,
    hamiltonian_only: bool,
}

impl MemoryResolvedRhs {
    fn new(model: &FeedbackModel) -> Self {
        let n = model.n_channels();
        let drift = (0..n)
            .map(|k| {
                let a = model.hamiltonian(k).scale(-I) - model.decay_operator(k).scale(0.5);
                a.into_matrix()
            })
            .collect();
        let jumps: Vec<Vec<CMatrix>> = (0..n)
            .map(|q| model.jumps_from(q).iter().map(|l| l.matrix().clone()).collect())
            .collect();
        let jumps_dag = jumps
            .iter()
            .map(|row| row.iter().map(|l| l.adjoint()).collect())
            .collect();
        let unmonitored = (0..n)
            .map(|k| {
                model
                    .unmonitored(k)
                    .iter()
                    .map(|m| (m.matrix().clone(), m.matrix().adjoint()))
                    .collect()
            })
            .collect();
        Self {
            d: model.dim(),
            n,
            drift,
            jumps,
            jumps_dag,
            unmonitored,
            hamiltonian_only: model.hamiltonian_only(),
        }
    }

    fn blocks(&self, y: &CVector) -> Vec<CMatrix> {
        let d2 = self.d * self.d;
        (0..self.n)
            .map(|k| CMatrix::from_column_slice(self.d, self.d, &y.as_slice()[k * d2..(k + 1) * d2]))
            .collect()
    }

    fn eval(&self, y: &CVector, dy: &mut CVector, general: bool) {
        let d = self.d;
        let d2 = d * d;
        let rho = self.blocks(y);
        let summed =
            (self.hamiltonian_only && !general).then(|| rho.iter().skip(1).fold(rho[0].clone(), |acc, r| acc + r));
        let mut tmp = CMatrix::zeros(d, d);
        for k in 0..self.n {
            let a = &self.drift[k];
            let mut out = a * &rho[k];
            out += (a * rho[k].adjoint()).adjoint();
            match &summed {
                Some(sum) => {
                    tmp.gemm(ONE, &self.jumps[0][k], sum, ZERO);
                    out.gemm(ONE, &tmp, &self.jumps_dag[0][k], ONE);
                }
                None => {
                    for q in 0..self.n {
                        tmp.gemm(ONE, &self.jumps[q][k], &rho[q], ZERO);
                        out.gemm(ONE, &tmp, &self.jumps_dag[q][k], ONE);
                    }
                }
            }
            for (m, m_dag) in &self.unmonitored[k] {
                tmp.gemm(ONE, m, &rho[k], ZERO);
                out.gemm(ONE, &tmp, m_dag, ONE);
            }
            dy.as_mut_slice()[k * d2..(k + 1) * d2].copy_from_slice(out.as_slice());
        }
    }
}

/// Right-hand side of the memory-resolved master equation at `state`.
pub fn memory_resolved_derivative(model: &FeedbackModel, state: &HybridState) -> HybridState {
    let rhs = MemoryResolvedRhs::new(model);
    let y = state.to_vector();
    let mut dy = CVector::zeros(y.len());
    rhs.eval(&y, &mut dy, false);
    HybridState::from_vector(&dy, model.dim(), model.n_channels()).expect("shape fixed by the model")
}

/// Same as [`memory_resolved_derivative`] but never takes the shortcut for
/// memory-independent jump operators.
pub fn memory_resolved_derivative_general(model: &FeedbackModel, state: &HybridState) -> HybridState {
    let rhs = MemoryResolvedRhs::new(model);
    let y = state.to_vector();
    let mut dy = CVector::zeros(y.len());
    rhs.eval(&y, &mut dy, true);
    HybridState::from_vector(&dy, model.dim(), model.n_channels()).expect("shape fixed by the model")
}

/// Integrates the coupled block equations from `t = 0`.
pub fn evolve_memory_resolved(model: &FeedbackModel, initial: &HybridState, times: &[f64]) -> Result<EvolutionResult> {
    evolve_memory_resolved_with(model, initial, times, &OdeOptions::default())
}

pub fn evolve_memory_resolved_with(
    model: &FeedbackModel,
    initial: &HybridState,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<EvolutionResult> {
    check_times(times)?;
    check_initial(model, initial)?;
    let rhs = MemoryResolvedRhs::new(model);
    let (d, n) = (model.dim(), model.n_channels());
    let mut states = Vec::with_capacity(times.len());
    integrate(
        |y, dy| rhs.eval(y, dy, false),
        0.0,
        &initial.to_vector(),
        times,
        opts,
        |t, y| {
            let state = HybridState::from_vector(y, d, n)?.hermitize();
            check_positivity(&state, t)?;
            states.push(state);
            Ok(())
        },
    )?;
    Ok(EvolutionResult {
        times: times.to_vec(),
        states,
        method: EvolutionMethod::MemoryResolvedOde,
    })
}

/// Propagates with the exponential of the extended generator.
pub fn evolve_extended(gen: &ExtendedGenerator, initial: &HybridState, times: &[f64]) -> Result<EvolutionResult> {
    check_times(times)?;
    check_initial(gen.model(), initial)?;
    let (d, n) = (gen.dim(), gen.n_memory());
    let mut v = initial.to_vector();
    let mut t = 0.0;
    let mut cached: Option<(f64, CMatrix)> = None;
    let mut states = Vec::with_capacity(times.len());
    for &t_out in times {
        let dt = t_out - t;
        if dt > 0.0 {
            let prop = match &cached {
                Some((h, p)) if same_step(*h, dt) => p,
                _ => {
                    cached = Some((dt, expm(&(gen.block_matrix() * crate::Complex64::new(dt, 0.0)))));
                    &cached.as_ref().unwrap().1
                }
            };
            v = prop * v;
        }
        t = t_out;
        states.push(HybridState::from_vector(&v, d, n)?.hermitize());
    }
    Ok(EvolutionResult {
        times: times.to_vec(),
        states,
        method: EvolutionMethod::ExtendedExponential,
    })
}

/// Unique stationary state of the feedback dynamics.
pub fn feedback_steady_state(gen: &ExtendedGenerator) -> Result<HybridState> {
    gen.steady_state()
}

/// Time derivative of the memory distribution:
/// `dP(k)/dt = sum_{q != k} Tr[J_k(q) rho(q)] - sum_{q != k} Tr[J_q(k) rho(k)]`.
pub fn memory_distribution_rate(model: &FeedbackModel, state: &HybridState) -> Vec<f64> {
    let n = model.n_channels();
    let flux = |from: usize, to: usize| -> f64 {
        let l = model.jump(from, to);
        state.block(from).conjugate_by(l).trace().re
    };
    (0..n)
        .map(|k| (0..n).filter(|&q| q != k).map(|q| flux(q, k) - flux(k, q)).sum())
        .collect()
}

/// `Tr[L rho L^dag]` for every channel fired from memory `memory`.
pub fn channel_rates(model: &FeedbackModel, memory: usize, rho: &Operator) -> Vec<f64> {
    model
        .jumps_from(memory)
        .iter()
        .map(|l| rho.conjugate_by(l).trace().re)
        .collect()
}
