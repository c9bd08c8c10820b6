#![allow(dead_code)]

use jumpfb::feedback::{validate, ModelDescription};
use jumpfb::hybrid::HybridState;
use jumpfb::ops::{CMatrix, Operator};
use jumpfb::{Complex64, FeedbackModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, d: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
    })
}

pub fn random_hermitian(rng: &mut impl Rng, d: usize, scale: f64) -> Operator {
    let a = random_matrix(rng, d, scale);
    Operator::new((&a + a.adjoint()) * Complex64::new(0.5, 0.0)).unwrap()
}

pub fn random_density(rng: &mut impl Rng, d: usize) -> Operator {
    let a = random_matrix(rng, d, 1.0);
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    Operator::new(rho / tr).unwrap().hermitize()
}

/// Random feedback model with `d`-level system and `n` channels whose
/// Hamiltonians and jump operators depend on the memory.
pub fn random_model(rng: &mut impl Rng, d: usize, n: usize) -> FeedbackModel {
    let hamiltonians = (0..n).map(|_| random_hermitian(rng, d, 1.0)).collect();
    let jump_ops = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| Operator::new(random_matrix(rng, d, 0.6)).unwrap())
                .collect()
        })
        .collect();
    validate(ModelDescription {
        dim: d,
        labels: (0..n).map(|k| format!("c{k}")).collect(),
        hamiltonians,
        jump_ops,
        unmonitored: Vec::new(),
        hamiltonian_only: None,
    })
    .unwrap()
}

/// Random hybrid state with every memory value populated.
pub fn random_hybrid(rng: &mut impl Rng, d: usize, n: usize) -> HybridState {
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let blocks = weights
        .iter()
        .map(|w| random_density(rng, d).scale(w / total))
        .collect();
    HybridState::new(blocks).unwrap()
}

fn mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b
}

/// Memory-resolved equation of motion written out block by block:
/// `d rho_k = -i[H_k, rho_k] - {G_k, rho_k}/2 + sum_q L_k(q) rho_q L_k(q)^dag`
/// with `G_k = sum_j L_j(k)^dag L_j(k)`, plus unmonitored dissipators.
pub fn block_rhs(model: &FeedbackModel, state: &HybridState) -> Vec<CMatrix> {
    let n = model.n_channels();
    let i = Complex64::new(0.0, 1.0);
    let half = Complex64::new(0.5, 0.0);
    (0..n)
        .map(|k| {
            let rho = state.block(k).matrix();
            let h = model.hamiltonian(k).matrix();
            let mut g = CMatrix::zeros(rho.nrows(), rho.ncols());
            for j in 0..n {
                let l = model.jump(k, j).matrix();
                g += l.adjoint() * l;
            }
            let mut out = (mul(h, rho) - mul(rho, h)) * (-i) - (mul(&g, rho) + mul(rho, &g)) * half;
            for m in model.unmonitored(k) {
                let m = m.matrix();
                let mm = m.adjoint() * m;
                out += m * rho * m.adjoint() - (mul(&mm, rho) + mul(rho, &mm)) * half;
            }
            for q in 0..n {
                let l = model.jump(q, k).matrix();
                out += l * state.block(q).matrix() * l.adjoint();
            }
            out
        })
        .collect()
}

/// Plain Lindblad generator on column-stacked matrices, built from
/// `vec(A X B) = (B^T kron A) vec(X)`.
pub fn lindblad_matrix(h: &CMatrix, jumps: &[CMatrix]) -> CMatrix {
    let d = h.nrows();
    let id = CMatrix::identity(d, d);
    let i = Complex64::new(0.0, 1.0);
    let half = Complex64::new(0.5, 0.0);
    let mut out = (id.kronecker(h) - h.transpose().kronecker(&id)) * (-i);
    for l in jumps {
        let ll = l.adjoint() * l;
        out += l.conjugate().kronecker(l) - (id.kronecker(&ll) + ll.transpose().kronecker(&id)) * half;
    }
    out
}

pub fn vec_of(m: &CMatrix) -> jumpfb::ops::CVector {
    jumpfb::ops::CVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &jumpfb::ops::CVector, d: usize) -> CMatrix {
    CMatrix::from_column_slice(d, d, v.as_slice())
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
