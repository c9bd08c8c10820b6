//! Jump-based feedback protocols.
//!
//! A protocol is fixed by the monitored channel set, a Hamiltonian for every
//! memory value and a table of jump operators `L_k(q)`: the operator applied
//! when channel `k` fires while the memory holds `q`. Memory values and
//! channels share the same index set.

use std::collections::HashSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{check_dims, check_hermitian, commutator_superop, jump_superop, Operator, Superoperator};

/// A monitored jump channel, which is also a value of the jump memory.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelId {
    pub label: String,
    pub index: usize,
}

/// Unvalidated protocol data. Turn it into a [`FeedbackModel`] with
/// [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDescription {
    pub dim: usize,
    pub labels: Vec<String>,
    /// `hamiltonians[k]` is `H(k)`.
    pub hamiltonians: Vec<Operator>,
    /// `jump_ops[q][k]` is `L_k(q)`.
    pub jump_ops: Vec<Vec<Operator>>,
    /// Dissipators active while the memory holds `k` whose jumps are not
    /// detected: they neither update the memory nor carry charge. Empty
    /// means none in any sector.
    pub unmonitored: Vec<Vec<Operator>>,
    /// Declared Hamiltonian-only feedback; `None` lets validation decide.
    pub hamiltonian_only: Option<bool>,
}

/// A validated jump-based feedback protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackModel {
    dim: usize,
    channels: Vec<ChannelId>,
    hamiltonians: Vec<Operator>,
    jump_ops: Vec<Vec<Operator>>,
    unmonitored: Vec<Vec<Operator>>,
    hamiltonian_only: bool,
}

/// Checks every model invariant and returns the canonical model.
pub fn validate(desc: ModelDescription) -> Result<FeedbackModel> {
    let n = desc.labels.len();
    if desc.dim == 0 {
        return Err(Error::Validation("system dimension must be positive".into()));
    }
    if n == 0 {
        return Err(Error::Validation("a model needs at least one channel".into()));
    }
    let mut seen = HashSet::new();
    for label in &desc.labels {
        if label.is_empty() {
            return Err(Error::Validation("channel labels must be nonempty".into()));
        }
        if !seen.insert(label.as_str()) {
            return Err(Error::Validation(format!("duplicate channel label {label:?}")));
        }
    }
    if desc.hamiltonians.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: desc.hamiltonians.len(),
            context: "number of memory-conditioned Hamiltonians".into(),
        });
    }
    check_dims(desc.dim, &desc.hamiltonians, "Hamiltonian")?;
    for (k, h) in desc.hamiltonians.iter().enumerate() {
        check_hermitian(h, &format!("H({})", desc.labels[k]))?;
    }
    if desc.jump_ops.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: desc.jump_ops.len(),
            context: "memory rows of the jump-operator table".into(),
        });
    }
    for (q, row) in desc.jump_ops.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: row.len(),
                context: format!("jump operators for memory {}", desc.labels[q]),
            });
        }
        check_dims(desc.dim, row, "jump operator")?;
    }
    let unmonitored = if desc.unmonitored.is_empty() {
        vec![Vec::new(); n]
    } else if desc.unmonitored.len() == n {
        for ops in &desc.unmonitored {
            check_dims(desc.dim, ops, "unmonitored operator")?;
        }
        desc.unmonitored
    } else {
        return Err(Error::Dimension {
            expected: n,
            found: desc.unmonitored.len(),
            context: "memory sectors of unmonitored operators".into(),
        });
    };

    let memory_independent = (0..n).all(|k| (1..n).all(|q| desc.jump_ops[q][k] == desc.jump_ops[0][k]));
    if desc.hamiltonian_only == Some(true) && !memory_independent {
        return Err(Error::Validation(
            "model is declared Hamiltonian-only but L_k(q) depends on the memory q".into(),
        ));
    }

    Ok(FeedbackModel {
        dim: desc.dim,
        channels: desc
            .labels
            .into_iter()
            .enumerate()
            .map(|(index, label)| ChannelId { label, index })
            .collect(),
        hamiltonians: desc.hamiltonians,
        jump_ops: desc.jump_ops,
        unmonitored,
        hamiltonian_only: memory_independent,
    })
}

/// The trivial protocol `H(k) = H`, `L_q(k) = L_q` with labels `L0, L1, ...`.
pub fn no_feedback(h: &Operator, jumps: &[Operator]) -> Result<FeedbackModel> {
    let labels = (0..jumps.len()).map(|i| format!("L{i}")).collect();
    no_feedback_labeled(h, jumps, labels)
}

pub fn no_feedback_labeled(h: &Operator, jumps: &[Operator], labels: Vec<String>) -> Result<FeedbackModel> {
    if labels.len() != jumps.len() {
        return Err(Error::Dimension {
            expected: jumps.len(),
            found: labels.len(),
            context: "channel labels".into(),
        });
    }
    let n = jumps.len();
    validate(ModelDescription {
        dim: h.dim(),
        labels,
        hamiltonians: vec![h.clone(); n],
        jump_ops: vec![jumps.to_vec(); n],
        unmonitored: Vec::new(),
        hamiltonian_only: Some(true),
    })
}

impl FeedbackModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `|Sigma|`.
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[ChannelId] {
        &self.channels
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|c| c.label.as_str())
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.label == label)
    }

    /// `H(k)`.
    pub fn hamiltonian(&self, memory: usize) -> &Operator {
        &self.hamiltonians[memory]
    }

    /// `L_channel(memory)`.
    pub fn jump(&self, memory: usize, channel: usize) -> &Operator {
        &self.jump_ops[memory][channel]
    }

    /// All `L_q(memory)` in channel order.
    pub fn jumps_from(&self, memory: usize) -> &[Operator] {
        &self.jump_ops[memory]
    }

    /// Undetected dissipators active in memory sector `memory`.
    pub fn unmonitored(&self, memory: usize) -> &[Operator] {
        &self.unmonitored[memory]
    }

    pub fn has_unmonitored(&self) -> bool {
        self.unmonitored.iter().any(|v| !v.is_empty())
    }

    /// `L_q(k)` does not depend on `k`.
    pub fn hamiltonian_only(&self) -> bool {
        self.hamiltonian_only
    }

    /// `sum_q L_q(k)^dag L_q(k)` plus the unmonitored decay in sector `k`.
    pub fn decay_operator(&self, memory: usize) -> Operator {
        self.jump_ops[memory]
            .iter()
            .chain(&self.unmonitored[memory])
            .fold(Operator::zeros(self.dim), |acc, l| acc + &l.dagger() * l)
    }

    pub fn description(&self) -> ModelDescription {
        ModelDescription {
            dim: self.dim,
            labels: self.channels.iter().map(|c| c.label.clone()).collect(),
            hamiltonians: self.hamiltonians.clone(),
            jump_ops: self.jump_ops.clone(),
            unmonitored: self.unmonitored.clone(),
            hamiltonian_only: Some(self.hamiltonian_only),
        }
    }
}

/// Memoryless feedback: after a jump in channel `k` the channel
/// `exp(K(k))` is applied instantaneously.
#[derive(Clone, Debug)]
pub struct WisemanModel {
    h: Operator,
    jumps: Vec<Operator>,
    kicks: Vec<Superoperator>,
}

impl WisemanModel {
    pub fn new(h: Operator, jumps: Vec<Operator>, kicks: Vec<Superoperator>) -> Result<Self> {
        check_hermitian(&h, "Hamiltonian")?;
        check_dims(h.dim(), &jumps, "jump operator")?;
        if kicks.len() != jumps.len() {
            return Err(Error::Dimension {
                expected: jumps.len(),
                found: kicks.len(),
                context: "feedback generators".into(),
            });
        }
        for (k, kick) in kicks.iter().enumerate() {
            if kick.dim() != h.dim() {
                return Err(Error::Dimension {
                    expected: h.dim(),
                    found: kick.dim(),
                    context: format!("feedback generator #{k}"),
                });
            }
            let tol = 1e-12 * kick.max_abs().max(1.0);
            if !kick.is_trace_annihilating(tol) {
                return Err(Error::Validation(format!(
                    "feedback generator #{k} does not annihilate the trace (defect {:e})",
                    kick.trace_defect()
                )));
            }
        }
        Ok(Self { h, jumps, kicks })
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    pub fn jumps(&self) -> &[Operator] {
        &self.jumps
    }

    pub fn kicks(&self) -> &[Superoperator] {
        &self.kicks
    }
}

/// `rho -> -i[H, rho] + sum_k (exp(K(k))[L_k rho L_k^dag] - {L_k^dag L_k, rho}/2)`.
pub fn wiseman_generator(model: &WisemanModel) -> Superoperator {
    let d = model.h.dim();
    let half = Complex64::new(0.5, 0.0);
    let mut gen = commutator_superop(&model.h);
    for (l, kick) in model.jumps.iter().zip(&model.kicks) {
        let ldl = &l.dagger() * l;
        let anti = &Superoperator::left(&ldl) + &Superoperator::right(&ldl);
        let channel = if kick.max_abs() == 0.0 {
            jump_superop(l)
        } else {
            &kick.exp() * &jump_superop(l)
        };
        gen = &gen + &(&channel - &anti.scale(half));
    }
    debug_assert_eq!(gen.dim(), d);
    gen
}
