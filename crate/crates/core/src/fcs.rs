//! Full counting statistics of jump-counting observables under feedback.
//!
//! Every detected jump in channel `k` fired while the memory holds `q`
//! adds `w[k][q]` to a stochastic charge. The stationary current, the
//! noise (long-time variance rate), the two-point correlation function and
//! its power spectrum are obtained from the extended generator restricted
//! to block-diagonal hybrid states.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{ExtendedGenerator, HybridState};
use crate::ops::{expm, group_inverse, jump_superop, same_step, schur_form, CMatrix, CVector, Superoperator, ZERO};

/// Charge added per jump, indexed `[fired channel][memory before the jump]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CountingWeights {
    per_transition: Vec<Vec<f64>>,
    channel_resolved: bool,
}

impl CountingWeights {
    pub fn per_transition(w: Vec<Vec<f64>>) -> Result<Self> {
        let n = w.len();
        if n == 0 {
            return Err(Error::Validation("counting weights need at least one channel".into()));
        }
        for (k, row) in w.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: row.len(),
                    context: format!("row {k} of the counting weights"),
                });
            }
            if let Some(x) = row.iter().find(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("counting weight {x} is not finite")));
            }
        }
        let channel_resolved = w.iter().all(|row| row.iter().all(|&x| x == row[0]));
        Ok(Self {
            per_transition: w,
            channel_resolved,
        })
    }

    /// Charge that depends only on the channel that fired.
    pub fn per_channel(nu: &[f64]) -> Result<Self> {
        Self::per_transition(nu.iter().map(|&x| vec![x; nu.len()]).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self::per_channel(&vec![0.0; n]).expect("finite weights")
    }

    /// Counts every jump once (dynamical activity).
    pub fn activity(n: usize) -> Self {
        Self::per_channel(&vec![1.0; n]).expect("finite weights")
    }

    pub fn n_channels(&self) -> usize {
        self.per_transition.len()
    }

    pub fn weight(&self, channel: usize, memory: usize) -> f64 {
        self.per_transition[channel][memory]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.per_transition
    }

    pub fn is_channel_resolved(&self) -> bool {
        self.channel_resolved
    }

    /// Per-channel charges when the weights do not depend on the memory.
    pub fn channel_weights(&self) -> Option<Vec<f64>> {
        self.channel_resolved
            .then(|| self.per_transition.iter().map(|row| row[0]).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.per_transition.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn squared(&self) -> Self {
        Self {
            per_transition: self
                .per_transition
                .iter()
                .map(|row| row.iter().map(|x| x * x).collect())
                .collect(),
            channel_resolved: self.channel_resolved,
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for CountingWeights {
    type Error = Error;
    fn try_from(w: Vec<Vec<f64>>) -> Result<Self> {
        Self::per_transition(w)
    }
}

impl From<CountingWeights> for Vec<Vec<f64>> {
    fn from(w: CountingWeights) -> Self {
        w.per_transition
    }
}

/// Smooth part of the stationary current autocorrelation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationSamples {
    /// Coefficient of the `delta(tau)` term.
    pub singular_weight: f64,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumSamples {
    pub omegas: Vec<f64>,
    pub values: Vec<f64>,
    /// High-frequency limit `K`.
    pub background: f64,
}

/// Stationary counting statistics.
#[derive(Clone, Debug)]
pub struct StationaryStatistics {
    pub state: HybridState,
    pub current: f64,
    pub second_moment: f64,
    pub noise: f64,
}

fn check_shape(gen: &ExtendedGenerator, w: &CountingWeights) -> Result<()> {
    if w.n_channels() != gen.n_memory() {
        return Err(Error::Dimension {
            expected: gen.n_memory(),
            found: w.n_channels(),
            context: "counting weights".into(),
        });
    }
    Ok(())
}

fn weighted_full(gen: &ExtendedGenerator, w: &CountingWeights) -> Superoperator {
    let n = gen.n_memory();
    let dn = gen.dim() * n;
    let mut out = Superoperator::zero(dn);
    for (idx, l) in gen.ext_jumps().iter().enumerate() {
        let nu = w.weight(idx / n, idx % n);
        if nu != 0.0 {
            out = &out + &jump_superop(l).scale(nu);
        }
    }
    out
}

/// `rho -> sum_{k,q} w[k][q] L_{kq} rho L_{kq}^dag` on the joint space.
pub fn current_superop(gen: &ExtendedGenerator, w: &CountingWeights) -> Result<Superoperator> {
    check_shape(gen, w)?;
    Ok(weighted_full(gen, w))
}

/// As [`current_superop`] with squared weights.
pub fn second_moment_superop(gen: &ExtendedGenerator, w: &CountingWeights) -> Result<Superoperator> {
    check_shape(gen, w)?;
    Ok(weighted_full(gen, &w.squared()))
}

/// Block-space current superoperator.
fn current_block(gen: &ExtendedGenerator, w: &CountingWeights) -> CMatrix {
    gen.weighted_jumps(|k, q| Complex64::new(w.weight(k, q), 0.0))
}

fn trace_of(gen: &ExtendedGenerator, v: &CVector) -> Complex64 {
    gen.trace_covector().iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// `Tr[J rho]`.
pub fn average_current(gen: &ExtendedGenerator, w: &CountingWeights, state: &HybridState) -> Result<f64> {
    check_shape(gen, w)?;
    Ok(trace_of(gen, &(current_block(gen, w) * state.to_vector())).re)
}

/// `Tr[H rho]`, the coefficient of the `delta(tau)` term.
pub fn second_moment(gen: &ExtendedGenerator, w: &CountingWeights, state: &HybridState) -> Result<f64> {
    check_shape(gen, w)?;
    Ok(trace_of(gen, &(current_block(gen, &w.squared()) * state.to_vector())).re)
}

fn check_stationary(gen: &ExtendedGenerator, state: &HybridState) -> Result<()> {
    if state.n_memory() != gen.n_memory() || state.dim() != gen.dim() {
        return Err(Error::Dimension {
            expected: gen.n_memory() * gen.dim(),
            found: state.n_memory() * state.dim(),
            context: "hybrid state for counting statistics".into(),
        });
    }
    let scale = gen.block_matrix().iter().map(|z| z.norm()).fold(1.0, f64::max);
    let residual = gen.residual(state);
    if residual > 1e-8 * scale {
        return Err(Error::NotStationary { residual });
    }
    Ok(())
}

/// `F(tau) = Tr[J exp(tau L) J rho] - J^2` for increasing positive lags.
pub fn two_point_correlation(
    gen: &ExtendedGenerator,
    w: &CountingWeights,
    state: &HybridState,
    taus: &[f64],
) -> Result<CorrelationSamples> {
    check_shape(gen, w)?;
    check_stationary(gen, state)?;
    if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) || taus.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Validation(
            "lags must be positive and strictly increasing".into(),
        ));
    }
    let jb = current_block(gen, w);
    let rho = state.to_vector();
    let j = trace_of(gen, &(&jb * &rho)).re;
    let covector = (gen.trace_covector().transpose() * &jb).transpose();
    let mut x = &jb * &rho;
    let mut t = 0.0;
    let mut cached: Option<(f64, CMatrix)> = None;
    let mut values = Vec::with_capacity(taus.len());
    for &tau in taus {
        let dt = tau - t;
        let prop = match &cached {
            Some((h, p)) if same_step(*h, dt) => p,
            _ => {
                cached = Some((dt, expm(&(gen.block_matrix() * Complex64::new(dt, 0.0)))));
                &cached.as_ref().unwrap().1
            }
        };
        x = prop * x;
        t = tau;
        let f: Complex64 = covector.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        values.push(f.re - j * j);
    }
    Ok(CorrelationSamples {
        singular_weight: second_moment(gen, w, state)?,
        taus: taus.to_vec(),
        values,
    })
}

/// Frequencies closer to zero than this use the Drazin inverse.
const ZERO_FREQUENCY: f64 = 1e-12;

/// `S(w) = K + 2 Re Tr[J (i w - L)^-1 Q J rho]`, with `Q` removing the
/// stationary mode.
pub fn power_spectrum(
    gen: &ExtendedGenerator,
    w: &CountingWeights,
    state: &HybridState,
    omegas: &[f64],
) -> Result<SpectrumSamples> {
    check_shape(gen, w)?;
    check_stationary(gen, state)?;
    if let Some(om) = omegas.iter().find(|o| !o.is_finite()) {
        return Err(Error::Validation(format!("frequency {om} is not finite")));
    }
    let jb = current_block(gen, w);
    let rho = state.to_vector();
    let tr = gen.trace_covector();
    let k = second_moment(gen, w, state)?;
    let jrho = &jb * &rho;
    let j = trace_of(gen, &jrho);
    // Q J rho = J rho - Tr[J rho] rho
    let source = &jrho - &rho * j;
    let covector = (tr.transpose() * &jb).transpose();
    let n = rho.len();
    let gmat = gen.block_matrix();
    let scale = gmat.iter().map(|z| z.norm()).fold(1.0, f64::max);

    let drazin_term = || -> Result<f64> {
        let g_plus = group_inverse(gmat, &rho, &tr)?;
        let x = g_plus * &source;
        Ok(-covector.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<Complex64>().re)
    };

    let values = omegas
        .par_iter()
        .map(|&om| -> Result<f64> {
            let inner = if om.abs() < ZERO_FREQUENCY {
                drazin_term()?
            } else {
                let mut m = -gmat.clone();
                for i in 0..n {
                    m[(i, i)] += Complex64::new(0.0, om);
                }
                let lu = m.lu();
                let u = lu.u();
                let pivots = (0..n).map(|i| u[(i, i)].norm());
                let smallest = pivots.fold(f64::INFINITY, f64::min);
                let x = lu
                    .solve(&source)
                    .filter(|x| x.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
                match x {
                    Some(x) if smallest > 1e-12 * scale => {
                        covector.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<Complex64>().re
                    }
                    _ => return Err(Error::Singular(format!("resolvent (i w - L) is singular at w = {om}"))),
                }
            };
            Ok(k + 2.0 * inner)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SpectrumSamples {
        omegas: omegas.to_vec(),
        values,
        background: k,
    })
}

/// `D = K - 2 Tr[J L^+ J rho]` with the Drazin inverse `L^+`.
pub fn steady_noise(gen: &ExtendedGenerator, w: &CountingWeights, state: &HybridState) -> Result<f64> {
    check_shape(gen, w)?;
    check_stationary(gen, state)?;
    let jb = current_block(gen, w);
    let rho = state.to_vector();
    let tr = gen.trace_covector();
    let g_plus = group_inverse(gen.block_matrix(), &rho, &tr)?;
    let x = &jb * (g_plus * (&jb * &rho));
    Ok(second_moment(gen, w, state)? - 2.0 * trace_of(gen, &x).re)
}

/// Steady state, current, `K` and noise in one pass.
pub fn stationary_statistics(gen: &ExtendedGenerator, w: &CountingWeights) -> Result<StationaryStatistics> {
    let state = gen.steady_state()?;
    Ok(StationaryStatistics {
        current: average_current(gen, w, &state)?,
        second_moment: second_moment(gen, w, &state)?,
        noise: steady_noise(gen, w, &state)?,
        state,
    })
}

/// Eigenvalues of a complex matrix from the diagonal of its Schur form.
pub(crate) fn eigenvalues(m: &CMatrix) -> Vec<Complex64> {
    let (_, t) = schur_form(m);
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Smallest decay rate `-Re(lambda)` over the nonzero spectrum.
pub fn spectral_gap(gen: &ExtendedGenerator) -> f64 {
    gap_and_radius(gen).0
}

fn gap_and_radius(gen: &ExtendedGenerator) -> (f64, f64) {
    let ev = eigenvalues(gen.block_matrix());
    let radius = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let gap = ev
        .iter()
        .filter(|z| z.norm() > 1e-9 * radius.max(1.0))
        .map(|z| -z.re)
        .fold(f64::INFINITY, f64::min);
    (gap, radius)
}

// Gauss-Kronrod 7-15 nodes on [-1, 1] (nonnegative half) and weights.
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Noise from `K + 2 int_0^T F(tau) d tau` by composite Gauss-Kronrod
/// quadrature with `T >= 40 / gap`; a check on [`steady_noise`].
pub fn noise_by_quadrature(gen: &ExtendedGenerator, w: &CountingWeights, state: &HybridState) -> Result<f64> {
    check_shape(gen, w)?;
    check_stationary(gen, state)?;
    let (gap, radius) = gap_and_radius(gen);
    if gap == f64::INFINITY {
        // only the stationary mode: F vanishes identically
        return second_moment(gen, w, state);
    }
    if !(gap > 0.0) {
        return Err(Error::Validation("generator has no positive spectral gap".into()));
    }
    let jb = current_block(gen, w);
    let rho = state.to_vector();
    let j = trace_of(gen, &(&jb * &rho)).re;
    let covector = (gen.trace_covector().transpose() * &jb).transpose();
    let g = gen.block_matrix();
    let t_max = 40.0 / gap;

    let integrate = |panels: usize| -> (f64, f64) {
        let h = t_max / panels as f64;
        let half = 0.5 * h;
        // offsets of the 15 nodes within a panel
        let mut offsets = Vec::with_capacity(15);
        for (i, &x) in GK_NODES.iter().enumerate() {
            offsets.push((half * (1.0 - x), i));
            if x != 0.0 {
                offsets.push((half * (1.0 + x), i));
            }
        }
        let props: Vec<CMatrix> = offsets
            .iter()
            .map(|(o, _)| expm(&(g * Complex64::new(*o, 0.0))))
            .collect();
        let step = expm(&(g * Complex64::new(h, 0.0)));
        let mut x = &jb * &rho;
        let (mut total, mut err) = (0.0, 0.0);
        for _ in 0..panels {
            let (mut kron, mut gauss) = (0.0, 0.0);
            for ((_, i), p) in offsets.iter().zip(&props) {
                let y = p * &x;
                let f = covector.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<Complex64>().re - j * j;
                kron += K15_WEIGHTS[*i] * f;
                if i % 2 == 1 {
                    gauss += G7_WEIGHTS[i / 2] * f;
                }
            }
            total += half * kron;
            err += (half * (kron - gauss)).abs();
            x = &step * x;
        }
        (total, err)
    };

    let k = second_moment(gen, w, state)?;
    let mut panels = ((0.5 * t_max * radius).ceil() as usize).clamp(16, 1 << 16);
    loop {
        let (integral, err) = integrate(panels);
        let d = k + 2.0 * integral;
        if 2.0 * err <= 1e-9 * d.abs().max(k.abs()).max(1e-300) || panels >= 1 << 18 {
            return Ok(d);
        }
        panels *= 2;
    }
}

/// Block-space generator with jump terms weighted by `exp(chi w[k][q])`.
pub fn tilted_block_generator(gen: &ExtendedGenerator, w: &CountingWeights, chi: f64) -> Result<CMatrix> {
    check_shape(gen, w)?;
    let extra = gen.weighted_jumps(|k, q| Complex64::new((chi * w.weight(k, q)).exp_m1(), 0.0));
    Ok(gen.block_matrix() + extra)
}

/// Counting-field step for [`tilted_cumulants`]: `0.01 / max |w|`, which
/// balances truncation against eigenvalue round-off on the built-in models.
pub fn default_chi_step(w: &CountingWeights) -> f64 {
    1e-2 / w.max_abs().max(f64::MIN_POSITIVE)
}

/// First two scaled cumulants from five-point finite differences of the
/// dominant eigenvalue of the tilted generator.
pub fn tilted_cumulants(gen: &ExtendedGenerator, w: &CountingWeights, chi_step: f64) -> Result<(f64, f64)> {
    check_shape(gen, w)?;
    if !(chi_step.is_finite() && chi_step > 0.0) {
        return Err(Error::Validation(format!("chi_step must be positive, got {chi_step}")));
    }
    let h = chi_step;
    let theta = |chi: f64, guess: f64| -> Result<f64> {
        let ev = eigenvalues(&tilted_block_generator(gen, w, chi)?);
        let dominant = ev.iter().copied().max_by(|a, b| a.re.total_cmp(&b.re)).unwrap_or(ZERO);
        let tracked = ev
            .iter()
            .copied()
            .min_by(|a, b| (a.re - guess).hypot(a.im).total_cmp(&(b.re - guess).hypot(b.im)))
            .unwrap_or(ZERO);
        let second = ev
            .iter()
            .filter(|z| **z != dominant)
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let gap = dominant.re - second;
        if tracked != dominant || gap <= 0.0 {
            return Err(Error::EigenvalueCrossing { chi, gap });
        }
        Ok(dominant.re)
    };
    let p1 = theta(h, 0.0)?;
    let m1 = theta(-h, 0.0)?;
    let p2 = theta(2.0 * h, 2.0 * p1)?;
    let m2 = theta(-2.0 * h, 2.0 * m1)?;
    let first = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
    let second = (16.0 * (p1 + m1) - (p2 + m2)) / (12.0 * h * h);
    Ok((first, second))
}
