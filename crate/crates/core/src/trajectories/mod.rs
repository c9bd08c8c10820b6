//! Monte Carlo unraveling of the feedback dynamics into individual quantum
//! jump trajectories with a classical memory.
//!
//! Two samplers are available. [`Scheme::FixedStep`] applies the
//! discrete-time instrument literally: in each step of length `dt` a channel
//! fires with probability `dt Tr[L rho L^dag]`, otherwise the state evolves
//! under `1 + dt L_0`. [`Scheme::WaitingTime`] draws exact waiting times from
//! the no-jump survival probability.
//!
//! Every trajectory draws from its own ChaCha20 stream seeded by
//! `sha256(seed || index)`, so results do not depend on the thread count.

mod sampler;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fcs::CountingWeights;
use crate::feedback::FeedbackModel;
use crate::hybrid::{marginals, HybridState, MEMORY_EPS};
use crate::ops::Operator;

pub use sampler::MAX_STEP_PROBABILITY;
use sampler::{Event, Sampler};

/// Unraveling scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Scheme {
    /// Discrete-time instrument with step `dt`. The step is shrunk slightly
    /// so that it divides the simulated time.
    FixedStep { dt: f64 },
    /// Exact jump times from the survival probability.
    WaitingTime,
}

/// Starting point of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// System state `rho` with the memory drawn from `memory_dist`.
    Product { rho: Operator, memory_dist: Vec<f64> },
    /// Memory drawn from the marginal of a hybrid state; the system starts
    /// in the matching conditional state.
    Hybrid(HybridState),
}

impl InitialCondition {
    /// System state `rho` with the memory fixed to `memory`.
    pub fn fixed(rho: Operator, memory: usize, n_memory: usize) -> Self {
        let mut memory_dist = vec![0.0; n_memory];
        if memory < n_memory {
            memory_dist[memory] = 1.0;
        }
        InitialCondition::Product { rho, memory_dist }
    }

    fn check(&self, model: &FeedbackModel) -> Result<Prepared> {
        let n = model.n_channels();
        let d = model.dim();
        let check_dist = |dist: &[f64]| -> Result<Vec<f64>> {
            if dist.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: dist.len(),
                    context: "initial memory distribution".into(),
                });
            }
            let total: f64 = dist.iter().sum();
            if dist.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-10 {
                return Err(Error::Validation(
                    "initial memory distribution must be nonnegative and sum to 1".into(),
                ));
            }
            let mut cum = Vec::with_capacity(n);
            let mut acc = 0.0;
            for &p in dist {
                acc += p / total;
                cum.push(acc);
            }
            Ok(cum)
        };
        match self {
            InitialCondition::Product { rho, memory_dist } => {
                if rho.dim() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        found: rho.dim(),
                        context: "initial system state".into(),
                    });
                }
                if !rho.is_density(1e-8) {
                    return Err(Error::Validation("initial system state is not a density matrix".into()));
                }
                Ok(Prepared {
                    cumulative: check_dist(memory_dist)?,
                    states: vec![Some(rho.clone()); n],
                })
            }
            InitialCondition::Hybrid(state) => {
                if state.dim() != d || state.n_memory() != n {
                    return Err(Error::Dimension {
                        expected: d * n,
                        found: state.dim() * state.n_memory(),
                        context: "initial hybrid state".into(),
                    });
                }
                let m = marginals(state);
                let dist: Vec<f64> = m
                    .memory_dist
                    .iter()
                    .map(|&p| if p > MEMORY_EPS { p } else { 0.0 })
                    .collect();
                let total: f64 = dist.iter().sum();
                let dist: Vec<f64> = dist.iter().map(|p| p / total).collect();
                Ok(Prepared {
                    cumulative: check_dist(&dist)?,
                    states: m.conditional,
                })
            }
        }
    }
}

struct Prepared {
    cumulative: Vec<f64>,
    states: Vec<Option<Operator>>,
}

impl Prepared {
    fn draw<R: Rng>(&self, rng: &mut R) -> (usize, &Operator) {
        let u: f64 = rng.random();
        let last = self.cumulative.len() - 1;
        let mut k = self.cumulative.iter().position(|&c| u < c).unwrap_or(last);
        while self.states[k].is_none() || (k > 0 && self.cumulative[k] == self.cumulative[k - 1]) {
            k = if k == 0 { last } else { k - 1 };
        }
        (k, self.states[k].as_ref().expect("memory with positive probability"))
    }
}

/// Random number stream for trajectory `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    ChaCha20Rng::from_seed(hasher.finalize().into())
}

/// One recorded trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub horizon: f64,
    pub initial_memory: usize,
    /// Times of the detected jumps.
    pub jump_times: Vec<f64>,
    pub jump_channels: Vec<usize>,
    /// Memory value just before each detected jump.
    pub memory_before: Vec<usize>,
    /// Accumulated charge just after each detected jump.
    pub charges: Vec<f64>,
    /// Charge at the horizon.
    pub charge: f64,
    /// Number of unmonitored events.
    pub silent_jumps: usize,
    pub final_memory: usize,
    pub final_state: Operator,
}

impl TrajectoryRecord {
    /// Memory value at time `t` (right-continuous).
    pub fn memory_at(&self, t: f64) -> usize {
        let n = self.jump_times.partition_point(|&s| s <= t);
        if n == 0 {
            self.initial_memory
        } else {
            self.jump_channels[n - 1]
        }
    }

    /// Charge accumulated up to time `t`.
    pub fn charge_at(&self, t: f64) -> f64 {
        let n = self.jump_times.partition_point(|&s| s <= t);
        if n == 0 {
            0.0
        } else {
            self.charges[n - 1]
        }
    }

    /// Charge under other weights, accumulated per transition.
    pub fn charge_with(&self, w: &CountingWeights) -> f64 {
        self.jump_channels
            .iter()
            .zip(&self.memory_before)
            .fold(0.0, |acc, (&k, &q)| acc + w.weight(k, q))
    }

    /// Charge with one weight per channel.
    pub fn charge_per_channel(&self, nu: &[f64]) -> f64 {
        self.jump_channels.iter().fold(0.0, |acc, &k| acc + nu[k])
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }
}

fn check_common(model: &FeedbackModel, w: &CountingWeights, horizon: f64) -> Result<()> {
    if w.n_channels() != model.n_channels() {
        return Err(Error::Dimension {
            expected: model.n_channels(),
            found: w.n_channels(),
            context: "counting weights".into(),
        });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

fn record_one(
    sampler: &Sampler,
    prepared: &Prepared,
    w: &CountingWeights,
    horizon: f64,
    rng: &mut ChaCha20Rng,
) -> Result<TrajectoryRecord> {
    let (k0, rho0) = prepared.draw(rng);
    let mut rec = TrajectoryRecord {
        horizon,
        initial_memory: k0,
        jump_times: Vec::new(),
        jump_channels: Vec::new(),
        memory_before: Vec::new(),
        charges: Vec::new(),
        charge: 0.0,
        silent_jumps: 0,
        final_memory: k0,
        final_state: rho0.clone(),
    };
    let mut charge = 0.0;
    let (rho, k) = sampler.run(rng, rho0.matrix(), k0, horizon, |t, event, q| match event {
        Event::Detected(k) => {
            charge += w.weight(k, q);
            rec.jump_times.push(t);
            rec.jump_channels.push(k);
            rec.memory_before.push(q);
            rec.charges.push(charge);
        }
        Event::Silent => rec.silent_jumps += 1,
    });
    rec.charge = charge;
    rec.final_memory = k;
    rec.final_state = Operator::new(rho)?;
    Ok(rec)
}

/// Samples a single trajectory on `[0, horizon]`.
pub fn sample_trajectory<R: Rng>(
    model: &FeedbackModel,
    w: &CountingWeights,
    initial: &InitialCondition,
    horizon: f64,
    scheme: Scheme,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    check_common(model, w, horizon)?;
    let prepared = initial.check(model)?;
    let sampler = Sampler::new(model, scheme, horizon)?;
    let mut seed = [0u8; 32];
    rng.fill(&mut seed);
    record_one(&sampler, &prepared, w, horizon, &mut ChaCha20Rng::from_seed(seed))
}

/// Samples `n_traj` trajectories, trajectory `i` using [`stream_rng`]`(seed, i)`.
pub fn sample_trajectories(
    model: &FeedbackModel,
    w: &CountingWeights,
    initial: &InitialCondition,
    horizon: f64,
    scheme: Scheme,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    check_common(model, w, horizon)?;
    let prepared = initial.check(model)?;
    let sampler = Sampler::new(model, scheme, horizon)?;
    (0..n_traj as u64)
        .into_par_iter()
        .map(|i| record_one(&sampler, &prepared, w, horizon, &mut stream_rng(seed, i)))
        .collect()
}

/// Settings for [`mc_estimate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub n_traj: usize,
    /// Counting window length after the burn-in.
    pub horizon: f64,
    /// Time evolved before counting starts.
    #[serde(default)]
    pub burn_in: f64,
    pub scheme: Scheme,
    pub seed: u64,
    /// Number of equally spaced times in `[horizon / 2, horizon]` used for
    /// the variance growth rate.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    /// Number of batches for the growth-rate standard errors.
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_checkpoints() -> usize {
    11
}

fn default_batches() -> usize {
    20
}

impl McOptions {
    pub fn new(n_traj: usize, horizon: f64, scheme: Scheme, seed: u64) -> Self {
        Self {
            n_traj,
            horizon,
            burn_in: 0.0,
            scheme,
            seed,
            checkpoints: default_checkpoints(),
            batches: default_batches(),
        }
    }
}

/// A sample estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// `|value - reference|` in units of the standard error.
    pub fn z_score(&self, reference: f64) -> f64 {
        let diff = (self.value - reference).abs();
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Ensemble statistics of the counted charge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub n_traj: usize,
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    /// Mean of the charge counted over the horizon.
    pub mean_charge: Estimate,
    /// Variance of the charge counted over the horizon.
    pub var_charge: Estimate,
    /// `mean_charge / horizon`.
    pub current: Estimate,
    /// Growth rate of the charge variance over the second half of the window.
    pub noise: Estimate,
    /// Frequency of each memory value at the end of the window.
    pub memory_freq: Vec<Estimate>,
}

struct Summary {
    checkpoints: Vec<f64>,
    final_memory: usize,
}

fn summarize(
    sampler: &Sampler,
    prepared: &Prepared,
    w: &CountingWeights,
    opts: &McOptions,
    times: &[f64],
    index: u64,
) -> Summary {
    let mut rng = stream_rng(opts.seed, index);
    let (k0, rho0) = prepared.draw(&mut rng);
    let mut values = vec![0.0; times.len()];
    let mut charge = 0.0;
    let mut next = 0;
    let total = opts.burn_in + opts.horizon;
    let (_, k) = sampler.run(&mut rng, rho0.matrix(), k0, total, |t, event, q| {
        if let Event::Detected(k) = event {
            while next < times.len() && times[next] < t {
                values[next] = charge;
                next += 1;
            }
            if t > opts.burn_in {
                charge += w.weight(k, q);
            }
        }
    });
    for v in &mut values[next..] {
        *v = charge;
    }
    Summary {
        checkpoints: values,
        final_memory: k,
    }
}

fn mean_var(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = xs.clone().count();
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (mean, var, n)
}

/// Least-squares slope of the sample variance against time.
fn variance_slope(samples: &[Summary], times: &[f64]) -> f64 {
    let vars: Vec<f64> = (0..times.len())
        .map(|j| mean_var(samples.iter().map(|s| s.checkpoints[j])).1)
        .collect();
    let tm = times.iter().sum::<f64>() / times.len() as f64;
    let vm = vars.iter().sum::<f64>() / vars.len() as f64;
    let num: f64 = times.iter().zip(&vars).map(|(t, v)| (t - tm) * (v - vm)).sum();
    let den: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
    num / den
}

/// Monte Carlo estimate of the counting statistics.
pub fn mc_estimate(
    model: &FeedbackModel,
    w: &CountingWeights,
    initial: &InitialCondition,
    opts: &McOptions,
) -> Result<McEstimate> {
    check_common(model, w, opts.horizon)?;
    if opts.n_traj < 2 {
        return Err(Error::Validation("at least two trajectories are required".into()));
    }
    if !(opts.burn_in >= 0.0) {
        return Err(Error::Validation(format!(
            "burn-in must be nonnegative, got {}",
            opts.burn_in
        )));
    }
    if opts.checkpoints < 2 {
        return Err(Error::Validation("at least two checkpoints are required".into()));
    }
    let prepared = initial.check(model)?;
    let sampler = Sampler::new(model, opts.scheme, opts.burn_in + opts.horizon)?;
    debug_assert_eq!(sampler.dim(), model.dim());

    let m = opts.checkpoints;
    let rel: Vec<f64> = (0..m)
        .map(|i| opts.horizon * (0.5 + 0.5 * i as f64 / (m - 1) as f64))
        .collect();
    let times: Vec<f64> = rel.iter().map(|t| opts.burn_in + t).collect();

    let samples: Vec<Summary> = (0..opts.n_traj as u64)
        .into_par_iter()
        .map(|i| summarize(&sampler, &prepared, w, opts, &times, i))
        .collect();

    let n = samples.len() as f64;
    let last = m - 1;
    let finals = samples.iter().map(|s| s.checkpoints[last]);
    let (mean, var, _) = mean_var(finals.clone());
    let m4 = finals.map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var_se = ((m4 - var * var * (n - 3.0) / (n - 1.0)).max(0.0) / n).sqrt();

    let slope = variance_slope(&samples, &rel);
    let batches = opts.batches.clamp(2, opts.n_traj / 2);
    let size = opts.n_traj / batches;
    let batch_slopes: Vec<f64> = (0..batches)
        .map(|b| variance_slope(&samples[b * size..(b + 1) * size], &rel))
        .collect();
    let (_, slope_var, _) = mean_var(batch_slopes.iter().copied());

    let memory_freq = (0..model.n_channels())
        .map(|k| {
            let p = samples.iter().filter(|s| s.final_memory == k).count() as f64 / n;
            Estimate {
                value: p,
                std_error: (p * (1.0 - p) / n).sqrt(),
            }
        })
        .collect();

    Ok(McEstimate {
        n_traj: opts.n_traj,
        horizon: opts.horizon,
        burn_in: opts.burn_in,
        seed: opts.seed,
        mean_charge: Estimate {
            value: mean,
            std_error: (var / n).sqrt(),
        },
        var_charge: Estimate {
            value: var,
            std_error: var_se,
        },
        current: Estimate {
            value: mean / opts.horizon,
            std_error: (var / n).sqrt() / opts.horizon,
        },
        noise: Estimate {
            value: slope,
            std_error: (slope_var / batches as f64).sqrt(),
        },
        memory_freq,
    })
}

/// Writes the detected jumps of `records` as CSV with columns
/// `trajectory_id,time,channel_label,memory_before,charge_after`.
pub fn write_jump_csv<W: Write>(
    out: &mut W,
    model: &FeedbackModel,
    records: &[TrajectoryRecord],
) -> std::io::Result<()> {
    let labels: Vec<&str> = model.labels().collect();
    writeln!(out, "trajectory_id,time,channel_label,memory_before,charge_after")?;
    for (id, rec) in records.iter().enumerate() {
        for i in 0..rec.n_jumps() {
            writeln!(
                out,
                "{id},{:.16e},{},{},{:.16e}",
                rec.jump_times[i], labels[rec.jump_channels[i]], labels[rec.memory_before[i]], rec.charges[i]
            )?;
        }
    }
    Ok(())
}
