//! The joint system-memory space.
//!
//! Operators on the joint space use the ordering system ⊗ memory, so the
//! basis state `|s>|m>` has index `s * n + m` for `n` memory values. Hybrid
//! states are block diagonal in the memory and are stored as one `d x d`
//! block per memory value. Spectral work runs on the generator restricted
//! to that invariant block-diagonal subspace, where a state is the
//! concatenation of the column-stacked blocks.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::feedback::FeedbackModel;
use crate::ops::{
    liouvillian, refine_kernel, steady_state_with, unique_null_vector, CMatrix, CVector, Operator, Superoperator,
    Tolerances, ONE, ZERO,
};

/// Memory values with smaller probability have no conditional state.
pub const MEMORY_EPS: f64 = 1e-14;

/// Memory-resolved state: block `k` is the unnormalized system state
/// jointly with memory value `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridState {
    blocks: Vec<Operator>,
}

/// System marginal, memory distribution and conditional system states.
#[derive(Clone, Debug)]
pub struct Marginals {
    pub system: Operator,
    pub memory_dist: Vec<f64>,
    /// `None` where the memory probability is at most [`MEMORY_EPS`].
    pub conditional: Vec<Option<Operator>>,
}

impl HybridState {
    /// Checks the unit total trace, hermiticity and positivity of the blocks.
    pub fn new(blocks: Vec<Operator>) -> Result<Self> {
        let state = Self::from_blocks(blocks)?;
        let total = state.total_trace();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!(
                "hybrid state has total trace {total}, expected 1"
            )));
        }
        for (k, b) in state.blocks.iter().enumerate() {
            if !b.is_hermitian(1e-10) {
                return Err(Error::NotHermitian {
                    what: format!("memory block {k}"),
                    defect: b.hermiticity_defect(),
                });
            }
            let min = b.min_eigenvalue();
            if min < -1e-8 {
                return Err(Error::Positivity {
                    min_eigenvalue: min,
                    context: format!("memory block {k}"),
                });
            }
        }
        Ok(state)
    }

    /// Blocks of a common dimension, without physical checks.
    pub fn from_blocks(blocks: Vec<Operator>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::Validation("hybrid state needs at least one block".into()));
        };
        let d = first.dim();
        for (k, b) in blocks.iter().enumerate() {
            if b.dim() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: b.dim(),
                    context: format!("memory block {k}"),
                });
            }
        }
        Ok(Self { blocks })
    }

    pub fn zeros(dim: usize, n_memory: usize) -> Self {
        Self {
            blocks: vec![Operator::zeros(dim); n_memory],
        }
    }

    /// `rho` with the memory in state `memory`.
    pub fn with_memory(rho: &Operator, memory: usize, n_memory: usize) -> Self {
        let mut s = Self::zeros(rho.dim(), n_memory);
        s.blocks[memory] = rho.clone();
        s
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].dim()
    }

    pub fn n_memory(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Operator] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &Operator {
        &self.blocks[k]
    }

    pub fn into_blocks(self) -> Vec<Operator> {
        self.blocks
    }

    pub fn total_trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace().re).sum()
    }

    /// `Tr rho(k)` for each memory value.
    pub fn memory_dist(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.trace().re).collect()
    }

    /// `sum_k rho(k)`.
    pub fn system(&self) -> Operator {
        self.blocks
            .iter()
            .fold(Operator::zeros(self.dim()), |acc, b| acc + b.clone())
    }

    pub fn min_block_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(Operator::min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    /// Concatenated column-stacked blocks.
    pub fn to_vector(&self) -> CVector {
        let d2 = self.dim() * self.dim();
        let mut v = CVector::zeros(d2 * self.n_memory());
        for (k, b) in self.blocks.iter().enumerate() {
            v.rows_mut(k * d2, d2).copy_from(&b.vectorize());
        }
        v
    }

    pub fn from_vector(v: &CVector, dim: usize, n_memory: usize) -> Result<Self> {
        let d2 = dim * dim;
        if v.len() != d2 * n_memory {
            return Err(Error::Dimension {
                expected: d2 * n_memory,
                found: v.len(),
                context: "hybrid state vector".into(),
            });
        }
        let blocks = (0..n_memory)
            .map(|k| Operator::from_vector(&v.rows(k * d2, d2).into_owned(), dim))
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }

    /// The block-diagonal operator on the joint space.
    pub fn to_joint(&self) -> Operator {
        let (d, n) = (self.dim(), self.n_memory());
        let mut m = CMatrix::zeros(d * n, d * n);
        for (k, b) in self.blocks.iter().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    m[(i * n + k, j * n + k)] = b.get(i, j);
                }
            }
        }
        Operator::from_square(m)
    }

    /// Memory-diagonal blocks of a joint operator.
    pub fn from_joint(joint: &Operator, n_memory: usize) -> Result<Self> {
        if n_memory == 0 || joint.dim() % n_memory != 0 {
            return Err(Error::Dimension {
                expected: n_memory,
                found: joint.dim(),
                context: "joint dimension must be a multiple of the memory size".into(),
            });
        }
        let d = joint.dim() / n_memory;
        let blocks = (0..n_memory)
            .map(|k| {
                Operator::from_square(CMatrix::from_fn(d, d, |i, j| {
                    joint.get(i * n_memory + k, j * n_memory + k)
                }))
            })
            .collect();
        Ok(Self { blocks })
    }

    pub fn hermitize(&self) -> Self {
        Self {
            blocks: self.blocks.iter().map(Operator::hermitize).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| b.scale(c)).collect(),
        }
    }

    /// Largest per-block trace-norm difference.
    pub fn max_block_trace_distance(&self, other: &HybridState) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).trace_norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &HybridState) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Largest entry of a joint operator outside its memory-diagonal blocks.
pub fn memory_coherence(joint: &Operator, n_memory: usize) -> f64 {
    let dn = joint.dim();
    let mut worst = 0.0_f64;
    for a in 0..dn {
        for b in 0..dn {
            if a % n_memory != b % n_memory {
                worst = worst.max(joint.get(a, b).norm());
            }
        }
    }
    worst
}

pub fn marginals(state: &HybridState) -> Marginals {
    let memory_dist = state.memory_dist();
    let conditional = state
        .blocks
        .iter()
        .zip(&memory_dist)
        .map(|(b, &p)| (p > MEMORY_EPS).then(|| b.scale(1.0 / p)))
        .collect();
    Marginals {
        system: state.system(),
        memory_dist,
        conditional,
    }
}

/// Blocks `P(k) rho(k)`.
pub fn embed(memory_dist: &[f64], conditional: &[Operator]) -> Result<HybridState> {
    if memory_dist.len() != conditional.len() {
        return Err(Error::Dimension {
            expected: memory_dist.len(),
            found: conditional.len(),
            context: "conditional states".into(),
        });
    }
    let total: f64 = memory_dist.iter().sum();
    if (total - 1.0).abs() > 1e-10 || memory_dist.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Validation(format!(
            "memory distribution must be nonnegative and sum to 1 (sum = {total})"
        )));
    }
    for (k, rho) in conditional.iter().enumerate() {
        if !rho.is_density(1e-10) {
            return Err(Error::Validation(format!(
                "conditional state for memory {k} is not a density matrix"
            )));
        }
    }
    HybridState::from_blocks(
        memory_dist
            .iter()
            .zip(conditional)
            .map(|(&p, rho)| rho.scale(p))
            .collect(),
    )
}

/// `sum_k H(k) ⊗ |k><k|`.
pub fn extended_hamiltonian(model: &FeedbackModel) -> Operator {
    let n = model.n_channels();
    (0..n).fold(Operator::zeros(model.dim() * n), |acc, k| {
        acc + model.hamiltonian(k).kron(&Operator::projector(k, n))
    })
}

/// `L_k(q) ⊗ |k><q|` for all channels `k` and memory values `q`, `k`-major.
pub fn extended_jumps(model: &FeedbackModel) -> Vec<Operator> {
    let n = model.n_channels();
    let mut out = Vec::with_capacity(n * n);
    for k in 0..n {
        for q in 0..n {
            out.push(model.jump(q, k).kron(&Operator::ket_bra(k, q, n)));
        }
    }
    out
}

/// `M_j(k) ⊗ |k><k|` for every unmonitored dissipator.
pub fn extended_unmonitored(model: &FeedbackModel) -> Vec<Operator> {
    let n = model.n_channels();
    (0..n)
        .flat_map(|k| {
            model
                .unmonitored(k)
                .iter()
                .map(move |m| m.kron(&Operator::projector(k, n)))
        })
        .collect()
}

/// Lindblad generator of the system and its jump memory.
#[derive(Clone, Debug)]
pub struct ExtendedGenerator {
    model: FeedbackModel,
    ext_hamiltonian: Operator,
    ext_jumps: Vec<Operator>,
    ext_unmonitored: Vec<Operator>,
    generator: Superoperator,
    block: CMatrix,
}

pub fn extended_liouvillian(model: &FeedbackModel) -> Result<ExtendedGenerator> {
    let ext_hamiltonian = extended_hamiltonian(model);
    let ext_jumps = extended_jumps(model);
    let ext_unmonitored = extended_unmonitored(model);
    let all: Vec<Operator> = ext_jumps.iter().chain(&ext_unmonitored).cloned().collect();
    let generator = liouvillian(&ext_hamiltonian, &all)?;
    let block = compress(generator.matrix(), model.dim(), model.n_channels());
    Ok(ExtendedGenerator {
        model: model.clone(),
        ext_hamiltonian,
        ext_jumps,
        ext_unmonitored,
        generator,
        block,
    })
}

/// Positions of the block-diagonal coordinates inside the joint
/// column-stacked vector.
fn block_positions(d: usize, n: usize) -> Vec<usize> {
    let dn = d * n;
    let mut pos = Vec::with_capacity(n * d * d);
    for k in 0..n {
        for j in 0..d {
            for i in 0..d {
                pos.push((j * n + k) * dn + (i * n + k));
            }
        }
    }
    pos
}

fn compress(full: &CMatrix, d: usize, n: usize) -> CMatrix {
    let pos = block_positions(d, n);
    CMatrix::from_fn(pos.len(), pos.len(), |r, c| full[(pos[r], pos[c])])
}

impl ExtendedGenerator {
    pub fn model(&self) -> &FeedbackModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn n_memory(&self) -> usize {
        self.model.n_channels()
    }

    pub fn ext_hamiltonian(&self) -> &Operator {
        &self.ext_hamiltonian
    }

    /// The `n^2` monitored jump operators, `k`-major.
    pub fn ext_jumps(&self) -> &[Operator] {
        &self.ext_jumps
    }

    pub fn ext_unmonitored(&self) -> &[Operator] {
        &self.ext_unmonitored
    }

    /// Generator on the full joint operator space.
    pub fn generator(&self) -> &Superoperator {
        &self.generator
    }

    /// Generator restricted to block-diagonal states, acting on
    /// [`HybridState::to_vector`] coordinates.
    pub fn block_matrix(&self) -> &CMatrix {
        &self.block
    }

    /// Covector summing the traces of all blocks.
    pub fn trace_covector(&self) -> CVector {
        let (d, n) = (self.dim(), self.n_memory());
        let mut v = CVector::zeros(n * d * d);
        for k in 0..n {
            for i in 0..d {
                v[k * d * d + i * d + i] = ONE;
            }
        }
        v
    }

    pub fn apply(&self, state: &HybridState) -> HybridState {
        let out = &self.block * state.to_vector();
        HybridState::from_vector(&out, self.dim(), self.n_memory()).expect("shape fixed by the model")
    }

    /// Largest block-space entry of the generator applied to `state`.
    pub fn residual(&self, state: &HybridState) -> f64 {
        (&self.block * state.to_vector())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Unique stationary hybrid state.
    pub fn steady_state(&self) -> Result<HybridState> {
        self.steady_state_with(&Tolerances::default())
    }

    pub fn steady_state_with(&self, tol: &Tolerances) -> Result<HybridState> {
        if self.n_memory() == 1 {
            let rho = steady_state_with(&self.generator, tol)?;
            return HybridState::from_blocks(vec![rho]);
        }
        let v = unique_null_vector(&self.block, tol)?;
        let tr: Complex64 = self.trace_covector().iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        if tr.norm() < 1e-300 {
            return Err(Error::Validation(
                "kernel vector is traceless; generator is not trace preserving".into(),
            ));
        }
        let l = self.trace_covector();
        let v = refine_kernel(&self.block, &(v * (ONE / tr)), &l);
        let tr: Complex64 = l.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        let v = v * (ONE / tr);
        let state = HybridState::from_vector(&v, self.dim(), self.n_memory())?.hermitize();
        let min = state.min_block_eigenvalue();
        if min < -tol.positivity {
            return Err(Error::Positivity {
                min_eigenvalue: min,
                context: "feedback steady state".into(),
            });
        }
        Ok(state)
    }

    /// Superoperator on block coordinates moving memory `q` to `k` through
    /// channel `k`: zero except for the `(k, q)` block `conj(L) ⊗ L`.
    pub(crate) fn transition_block(&self, k: usize, q: usize) -> CMatrix {
        let l = self.model.jump(q, k).matrix();
        l.conjugate().kronecker(l)
    }

    /// `sum_{k,q} w[k][q] (L_k(q) . L_k(q)^dag)` on block coordinates.
    pub(crate) fn weighted_jumps(&self, weight: impl Fn(usize, usize) -> Complex64) -> CMatrix {
        let (d, n) = (self.dim(), self.n_memory());
        let d2 = d * d;
        let mut m = CMatrix::from_element(n * d2, n * d2, ZERO);
        for k in 0..n {
            for q in 0..n {
                let w = weight(k, q);
                if w == ZERO {
                    continue;
                }
                let t = self.transition_block(k, q) * w;
                let mut view = m.view_mut((k * d2, q * d2), (d2, d2));
                view += t;
            }
        }
        m
    }
}
