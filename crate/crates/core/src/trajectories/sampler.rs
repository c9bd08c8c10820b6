//! Conditional-state propagation between jumps for both unravelings.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::feedback::FeedbackModel;
use crate::ops::{schur_form, CMatrix, CVector, Operator, I, ONE, ZERO};

use super::Scheme;

/// Largest allowed `dt * (total jump rate)` for the fixed-step scheme.
pub const MAX_STEP_PROBABILITY: f64 = 0.05;

/// Eigenvector matrices with a larger condition number fall back to
/// matrix exponentials.
const MAX_CONDITION: f64 = 1e8;

const ROOT_TOL: f64 = 1e-10;

/// What happens to the conditional state at a jump.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Event {
    /// Monitored channel; the memory switches to it.
    Detected(usize),
    /// Undetected dissipative event; memory and charge are unchanged.
    Silent,
}

struct Sector {
    /// Monitored jumps followed by unmonitored ones.
    jumps: Vec<CMatrix>,
    jumps_dag: Vec<CMatrix>,
    n_monitored: usize,
    decay: CMatrix,
    propagator: Propagator,
    fixed: Option<FixedStep>,
}

enum Propagator {
    /// `-i H_eff = V diag(-i lambda) V^-1`.
    Eigen {
        v: CMatrix,
        v_inv: CMatrix,
        v_dag: CMatrix,
        v_inv_dag: CMatrix,
        lambda: Vec<Complex64>,
        gram: CMatrix,
    },
    /// `-i H_eff`, exponentiated on demand.
    Dense(CMatrix),
}

struct FixedStep {
    /// `1 + dt L_0(k)` on column-stacked states.
    no_jump: CMatrix,
    /// Row `c` maps `vec(rho)` to `dt Tr[L_c rho L_c^dag]`.
    probabilities: CMatrix,
}

/// Precomputed per-memory data for sampling trajectories of one model.
pub(crate) struct Sampler {
    d: usize,
    sectors: Vec<Sector>,
    scheme: Scheme,
    dt: f64,
    steps: u64,
}

fn vec_of(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// Eigen-decomposition of a complex matrix from its Schur form, or `None`
/// when the eigenvectors are ill-conditioned.
fn eigen_decomposition(a: &CMatrix) -> Option<(CMatrix, Vec<Complex64>)> {
    let n = a.nrows();
    let (q, t) = schur_form(a);
    let lambda: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut y = CMatrix::zeros(n, n);
    for i in 0..n {
        y[(i, i)] = ONE;
        for j in (0..i).rev() {
            let mut s = ZERO;
            for l in j + 1..=i {
                s += t[(j, l)] * y[(l, i)];
            }
            let den = t[(j, j)] - lambda[i];
            if den.norm() <= 1e-12 * scale {
                return None;
            }
            y[(j, i)] = -s / den;
        }
    }
    let mut v = q * y;
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        col /= Complex64::new(norm, 0.0);
    }
    let sv = v.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    (smin > 0.0 && smax / smin <= MAX_CONDITION).then_some((v, lambda))
}

impl Sampler {
    pub(crate) fn new(model: &FeedbackModel, scheme: Scheme, total_time: f64) -> Result<Self> {
        let d = model.dim();
        let n = model.n_channels();
        let (dt, steps) = match scheme {
            Scheme::FixedStep { dt } => {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(Error::Validation(format!("time step must be positive, got {dt}")));
                }
                let steps = (total_time / dt).round().max(1.0);
                (total_time / steps, steps as u64)
            }
            Scheme::WaitingTime => (0.0, 0),
        };
        let mut sectors = Vec::with_capacity(n);
        for k in 0..n {
            let jumps: Vec<CMatrix> = model
                .jumps_from(k)
                .iter()
                .chain(model.unmonitored(k))
                .map(|l| l.matrix().clone())
                .collect();
            let jumps_dag = jumps.iter().map(|l| l.adjoint()).collect();
            let decay = model.decay_operator(k).into_matrix();
            let gen = model.hamiltonian(k).matrix() * (-I) - &decay * Complex64::new(0.5, 0.0);

            let propagator = match eigen_decomposition(&gen) {
                Some((v, lambda)) => match v.clone().try_inverse() {
                    Some(v_inv) => Propagator::Eigen {
                        gram: v.adjoint() * &v,
                        v_dag: v.adjoint(),
                        v_inv_dag: v_inv.adjoint(),
                        v,
                        v_inv,
                        lambda,
                    },
                    None => Propagator::Dense(gen.clone()),
                },
                None => Propagator::Dense(gen.clone()),
            };

            let fixed = if let Scheme::FixedStep { .. } = scheme {
                let total_rate = Operator::new(decay.clone())?
                    .eigenvalues_hermitian()
                    .last()
                    .copied()
                    .unwrap_or(0.0);
                let product = dt * total_rate;
                if product > MAX_STEP_PROBABILITY {
                    return Err(Error::TimeStepTooCoarse {
                        product,
                        limit: MAX_STEP_PROBABILITY,
                    });
                }
                let id = CMatrix::identity(d, d);
                // vec(A X + X A^dag) = (1 ⊗ A + conj(A) ⊗ 1) vec(X)
                let l0 = id.kronecker(&gen) + gen.conjugate().kronecker(&id);
                let no_jump = CMatrix::identity(d * d, d * d) + l0 * Complex64::new(dt, 0.0);
                let mut probabilities = CMatrix::zeros(jumps.len(), d * d);
                for (c, l) in jumps.iter().enumerate() {
                    // Tr[A rho] = sum_ij A_ji rho_ij = <vec(A^T), vec(rho)>
                    let a = (l.adjoint() * l).transpose();
                    probabilities
                        .row_mut(c)
                        .copy_from(&(vec_of(&a) * Complex64::new(dt, 0.0)).transpose());
                }
                Some(FixedStep { no_jump, probabilities })
            } else {
                None
            };

            sectors.push(Sector {
                jumps,
                jumps_dag,
                n_monitored: n,
                decay,
                propagator,
                fixed,
            });
        }
        Ok(Self {
            d,
            sectors,
            scheme,
            dt,
            steps,
        })
    }

    pub(crate) fn dim(&self) -> usize {
        self.d
    }

    /// Runs one trajectory on `[0, horizon]`, calling `on_event` with the
    /// time, the event and the memory before it. Returns the final
    /// normalized state and memory.
    pub(crate) fn run<R: Rng>(
        &self,
        rng: &mut R,
        rho0: &CMatrix,
        k0: usize,
        horizon: f64,
        mut on_event: impl FnMut(f64, Event, usize),
    ) -> (CMatrix, usize) {
        match self.scheme {
            Scheme::FixedStep { .. } => self.run_fixed(rng, rho0, k0, &mut on_event),
            Scheme::WaitingTime => self.run_waiting(rng, rho0, k0, horizon, &mut on_event),
        }
    }

    fn apply_jump(&self, rho: &CMatrix, sector: &Sector, c: usize) -> CMatrix {
        let out = &sector.jumps[c] * rho * &sector.jumps_dag[c];
        let tr = out.trace();
        let out = out / tr;
        (&out + out.adjoint()) * Complex64::new(0.5, 0.0)
    }

    fn event_for(&self, sector: &Sector, c: usize) -> Event {
        if c < sector.n_monitored {
            Event::Detected(c)
        } else {
            Event::Silent
        }
    }

    fn run_fixed<R: Rng>(
        &self,
        rng: &mut R,
        rho0: &CMatrix,
        k0: usize,
        on_event: &mut impl FnMut(f64, Event, usize),
    ) -> (CMatrix, usize) {
        let d = self.d;
        let mut v = vec_of(rho0);
        let mut k = k0;
        let mut probs = CVector::zeros(0);
        let mut next = CVector::zeros(d * d);
        for step in 0..self.steps {
            let sector = &self.sectors[k];
            let fixed = sector.fixed.as_ref().expect("fixed-step data");
            probs.resize_vertically_mut(sector.jumps.len(), ZERO);
            probs.gemv(ONE, &fixed.probabilities, &v, ZERO);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut fired = None;
            for (c, p) in probs.iter().enumerate() {
                acc += p.re.max(0.0);
                if u < acc {
                    fired = Some(c);
                    break;
                }
            }
            match fired {
                Some(c) => {
                    let t = (step + 1) as f64 * self.dt;
                    let rho = CMatrix::from_column_slice(d, d, v.as_slice());
                    let event = self.event_for(sector, c);
                    on_event(t, event, k);
                    let out = self.apply_jump(&rho, sector, c);
                    v = vec_of(&out);
                    if let Event::Detected(q) = event {
                        k = q;
                    }
                }
                None => {
                    next.gemv(ONE, &fixed.no_jump, &v, ZERO);
                    let tr: Complex64 = (0..d).map(|i| next[i * d + i]).sum();
                    std::mem::swap(&mut v, &mut next);
                    v /= Complex64::new(tr.re, 0.0);
                }
            }
        }
        let rho = CMatrix::from_column_slice(d, d, v.as_slice());
        ((&rho + rho.adjoint()) * Complex64::new(0.5, 0.0), k)
    }

    fn run_waiting<R: Rng>(
        &self,
        rng: &mut R,
        rho0: &CMatrix,
        k0: usize,
        horizon: f64,
        on_event: &mut impl FnMut(f64, Event, usize),
    ) -> (CMatrix, usize) {
        let mut rho = rho0.clone();
        let mut k = k0;
        let mut t = 0.0;
        loop {
            let sector = &self.sectors[k];
            let survival = Survival::new(&sector.propagator, &rho, &sector.decay);
            let remaining = horizon - t;
            let u: f64 = rng.random();
            let end_value = survival.value(remaining);
            if end_value > u || remaining <= 0.0 {
                let out = survival.state(remaining);
                let tr = out.trace().re;
                let out = out / Complex64::new(tr, 0.0);
                return ((&out + out.adjoint()) * Complex64::new(0.5, 0.0), k);
            }
            let tau = survival.solve(u, remaining);
            let state = survival.state(tau);
            let weights: Vec<f64> = sector
                .jumps
                .iter()
                .zip(&sector.jumps_dag)
                .map(|(l, ld)| (l * &state * ld).trace().re.max(0.0))
                .collect();
            let total: f64 = weights.iter().sum();
            let c = if total > 0.0 {
                let r: f64 = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = weights.len() - 1;
                for (c, w) in weights.iter().enumerate() {
                    acc += w;
                    if r < acc {
                        pick = c;
                        break;
                    }
                }
                while weights[pick] == 0.0 && pick > 0 {
                    pick -= 1;
                }
                pick
            } else {
                // survival reached u only through roundoff; stop jumping
                let tr = state.trace().re;
                let out = survival.state(remaining) / Complex64::new(tr.max(f64::MIN_POSITIVE), 0.0);
                let tr = out.trace().re;
                return (out / Complex64::new(tr, 0.0), k);
            };
            t += tau;
            let event = self.event_for(sector, c);
            on_event(t, event, k);
            rho = self.apply_jump(&state, sector, c);
            if let Event::Detected(q) = event {
                k = q;
            }
        }
    }
}

/// Trace of the unnormalized no-jump state as a function of time.
enum Survival<'a> {
    Eigen {
        propagator: &'a Propagator,
        x: CMatrix,
        rates: Vec<Complex64>,
        coeffs: Vec<Complex64>,
    },
    Dense {
        generator: &'a CMatrix,
        rho: CMatrix,
        decay: &'a CMatrix,
    },
}

impl<'a> Survival<'a> {
    fn new(propagator: &'a Propagator, rho: &CMatrix, decay: &'a CMatrix) -> Self {
        match propagator {
            Propagator::Eigen {
                v_inv,
                v_inv_dag,
                lambda,
                gram,
                ..
            } => {
                let x = v_inv * rho * v_inv_dag;
                let n = lambda.len();
                let mut rates = Vec::with_capacity(n * n);
                let mut coeffs = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        rates.push(lambda[i] + lambda[j].conj());
                        coeffs.push(x[(i, j)] * gram[(j, i)]);
                    }
                }
                Survival::Eigen {
                    propagator,
                    x,
                    rates,
                    coeffs,
                }
            }
            Propagator::Dense(generator) => Survival::Dense {
                generator,
                rho: rho.clone(),
                decay,
            },
        }
    }

    fn value(&self, t: f64) -> f64 {
        match self {
            Survival::Eigen { rates, coeffs, .. } => {
                rates.iter().zip(coeffs).map(|(r, c)| (c * (r * t).exp()).re).sum()
            }
            Survival::Dense { .. } => self.state(t).trace().re,
        }
    }

    fn value_and_slope(&self, t: f64) -> (f64, f64) {
        match self {
            Survival::Eigen { rates, coeffs, .. } => {
                let (mut s, mut ds) = (0.0, 0.0);
                for (r, c) in rates.iter().zip(coeffs) {
                    let e = c * (r * t).exp();
                    s += e.re;
                    ds += (r * e).re;
                }
                (s, ds)
            }
            Survival::Dense { decay, .. } => {
                let state = self.state(t);
                (state.trace().re, -(*decay * &state).trace().re)
            }
        }
    }

    fn state(&self, t: f64) -> CMatrix {
        match self {
            Survival::Eigen { propagator, x, .. } => {
                let Propagator::Eigen { v, v_dag, lambda, .. } = propagator else {
                    unreachable!()
                };
                let n = lambda.len();
                let e: Vec<Complex64> = lambda.iter().map(|l| (l * t).exp()).collect();
                let y = CMatrix::from_fn(n, n, |i, j| e[i] * x[(i, j)] * e[j].conj());
                let out = v * y * v_dag;
                (&out + out.adjoint()) * Complex64::new(0.5, 0.0)
            }
            Survival::Dense { generator, rho, .. } => {
                let u = crate::ops::expm(&(*generator * Complex64::new(t, 0.0)));
                &u * rho * u.adjoint()
            }
        }
    }

    /// Time in `(0, t_max]` where the survival equals `u`, given that it
    /// starts at 1 and has fallen to at most `u` by `t_max`.
    fn solve(&self, u: f64, t_max: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, t_max);
        let (_, slope0) = self.value_and_slope(0.0);
        let mut t = if slope0 < 0.0 {
            (-u.ln() / -slope0).min(t_max)
        } else {
            0.5 * t_max
        };
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let (s, ds) = self.value_and_slope(t);
            let f = s - u;
            if f > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            if f.abs() <= 1e-14 || hi - lo <= ROOT_TOL * t.max(1.0) {
                break;
            }
            let newton = if ds < 0.0 { t - f / ds } else { f64::NAN };
            t = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        t
    }
}
