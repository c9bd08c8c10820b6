//! Run configuration: a JSON document describing a model, counting weights,
//! an initial condition, one task and where to write the results.

use std::collections::BTreeMap;
use std::path::PathBuf;

use jumpfb::fcs::CountingWeights;
use jumpfb::feedback::{validate, ModelDescription};
use jumpfb::models::{maser_model, poisson_model, qubit_model, work_weights, MaserParams, QubitParams, QubitProtocol};
use jumpfb::ops::{CMatrix, Operator};
use jumpfb::trajectories::Scheme;
use jumpfb::{Complex64, FeedbackModel};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    pub task: TaskSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Either a named builtin with its parameters or an explicit model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<ExplicitModel>,
}

/// Complex matrix as rows of `[re, im]` pairs.
pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitModel {
    pub dim: usize,
    pub labels: Vec<String>,
    /// One Hamiltonian per memory value, or a single shared one.
    pub hamiltonians: Vec<MatrixSpec>,
    /// `jump_ops[q][k]`: operator for channel `k` while the memory holds `q`.
    /// A single row is shared by all memory values.
    pub jump_ops: Vec<Vec<MatrixSpec>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unmonitored: Vec<Vec<MatrixSpec>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsSpec {
    /// Weight per channel label; missing labels count zero.
    PerChannel(BTreeMap<String, f64>),
    /// `per_transition[channel][memory]`, keyed by labels.
    PerTransition(BTreeMap<String, BTreeMap<String, f64>>),
    /// Every jump counts one.
    Activity,
    /// Work delivered to the drive (maser only).
    Work,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Stationary hybrid state of the model.
    Steady,
    Product {
        /// Probability per memory label; missing labels have probability 0.
        memory: BTreeMap<String, f64>,
        state: StateSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    /// Projector on a basis state.
    Basis(usize),
    MaximallyMixed,
    Matrix(MatrixSpec),
}

/// Sample points: an explicit list or an evenly spaced range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RangeSpec {
    Linspace {
        start: f64,
        stop: f64,
        num: usize,
    },
    /// `num` points from `10^start` to `10^stop`.
    Logspace {
        start: f64,
        stop: f64,
        num: usize,
    },
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let spaced = |start: f64, stop: f64, num: usize| -> Vec<f64> {
            match num {
                0 => Vec::new(),
                1 => vec![start],
                _ => (0..num)
                    .map(|i| start + (stop - start) * i as f64 / (num - 1) as f64)
                    .collect(),
            }
        };
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range(RangeSpec::Linspace { start, stop, num }) => spaced(*start, *stop, *num),
            Grid::Range(RangeSpec::Logspace { start, stop, num }) => {
                spaced(*start, *stop, *num).into_iter().map(|e| 10f64.powf(e)).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum TaskSpec {
    Steady,
    Evolve {
        times: Grid,
        #[serde(default)]
        method: EvolveMethod,
    },
    Correlation {
        taus: Grid,
    },
    Spectrum {
        omegas: Grid,
    },
    Noise {
        /// Also report the quadrature and tilted-generator values.
        #[serde(default)]
        cross_check: bool,
    },
    Trajectories(TrajectoryTask),
    Sweep(SweepTask),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolveMethod {
    #[default]
    Exponential,
    Ode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryTask {
    pub n_traj: usize,
    pub horizon: f64,
    pub seed: u64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Time discarded before counting; `None` uses ten times the slowest
    /// relaxation time of the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    /// Number of trajectories whose jumps are written out.
    #[serde(default)]
    pub dump: usize,
}

fn default_scheme() -> Scheme {
    Scheme::WaitingTime
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTask {
    /// Numeric parameter of the builtin model or one of the shorthands
    /// `p` (`lam = gamma / p`), `gamma` (maser: `gl = gr = gamma`) and
    /// `gr_ratio` (maser: `gr = gr_ratio * gl`).
    pub parameter: String,
    pub values: Grid,
    pub measure: SweepMeasure,
    /// Parameter overrides evaluated side by side; one unnamed variant
    /// when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMeasure {
    Steady,
    Noise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub set: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("output")
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = serde_json::from_str(text)
        .map_err(|e| CliError::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    config.check()?;
    Ok(config)
}

/// Canonical JSON form of a configuration.
pub fn canonical(config: &RunConfig) -> String {
    serde_json::to_string_pretty(config).expect("configuration serializes")
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl RunConfig {
    /// Structural checks that do not need the model to be built.
    pub fn check(&self) -> Result<(), CliError> {
        match (&self.model.builtin, &self.model.explicit) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(invalid("model: give exactly one of `builtin` and `explicit`"))
            }
            (None, Some(_)) if !self.model.params.is_empty() => {
                return Err(invalid("model: `params` only applies to builtin models"))
            }
            _ => {}
        }
        let nonempty = |g: &Grid, what: &str| -> Result<(), CliError> {
            let pts = g.points();
            if pts.is_empty() {
                return Err(invalid(format!("task: `{what}` grid is empty")));
            }
            if pts.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("task: `{what}` grid has non-finite values")));
            }
            Ok(())
        };
        match &self.task {
            TaskSpec::Evolve { times, .. } => nonempty(times, "times")?,
            TaskSpec::Correlation { taus } => nonempty(taus, "taus")?,
            TaskSpec::Spectrum { omegas } => nonempty(omegas, "omegas")?,
            TaskSpec::Sweep(s) => {
                nonempty(&s.values, "values")?;
                if self.model.builtin.is_none() {
                    return Err(invalid("sweep: requires a builtin model"));
                }
                let mut names: Vec<&str> = s.variants.iter().map(|v| v.name.as_str()).collect();
                names.sort_unstable();
                if names.windows(2).any(|w| w[0] == w[1]) || names.iter().any(|n| n.is_empty()) {
                    return Err(invalid("sweep: variant names must be nonempty and unique"));
                }
            }
            TaskSpec::Trajectories(t) => {
                if t.n_traj < 2 {
                    return Err(invalid("trajectories: `n_traj` must be at least 2"));
                }
                if t.dump > t.n_traj {
                    return Err(invalid("trajectories: `dump` exceeds `n_traj`"));
                }
            }
            TaskSpec::Steady | TaskSpec::Noise { .. } => {}
        }
        if matches!(self.task, TaskSpec::Evolve { .. }) && self.initial.is_none() {
            return Err(invalid("evolve: an `initial` condition is required"));
        }
        Ok(())
    }
}

/// A builtin or explicit model resolved to concrete parameters.
#[derive(Clone, Debug)]
pub enum ResolvedModel {
    Qubit(QubitParams, QubitProtocol),
    Maser(MaserParams),
    Poisson(f64),
    Explicit(Box<ModelDescription>),
}

impl ResolvedModel {
    pub fn build(&self) -> Result<FeedbackModel, CliError> {
        let model = match self {
            ResolvedModel::Qubit(p, protocol) => qubit_model(p, *protocol),
            ResolvedModel::Maser(p) => maser_model(p),
            ResolvedModel::Poisson(rate) => poisson_model(*rate),
            ResolvedModel::Explicit(desc) => validate((**desc).clone()),
        };
        model.map_err(|e| CliError::Model(e.to_string()))
    }

    pub fn default_weights(&self, model: &FeedbackModel) -> CountingWeights {
        match self {
            ResolvedModel::Maser(p) => work_weights(p),
            _ => CountingWeights::activity(model.n_channels()),
        }
    }
}

fn take_f64(params: &Map<String, Value>, key: &str) -> Result<Option<f64>, CliError> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| invalid(format!("model.params.{key}: expected a number"))),
    }
}

fn from_params<T: serde::de::DeserializeOwned>(params: Map<String, Value>, what: &str) -> Result<T, CliError> {
    serde_json::from_value(Value::Object(params)).map_err(|e| invalid(format!("model.params ({what}): {e}")))
}

/// Applies the `gamma` and `p` shorthands and builds typed parameters.
pub fn resolve_model(spec: &ModelSpec) -> Result<ResolvedModel, CliError> {
    if let Some(explicit) = &spec.explicit {
        return Ok(ResolvedModel::Explicit(Box::new(explicit.to_description()?)));
    }
    let name = spec.builtin.as_deref().unwrap_or_default();
    let mut params = spec.params.clone();
    let p = take_f64(&params, "p")?;
    params.remove("p");
    match name {
        "qubit_cooling" => {
            let protocol = match params.remove("protocol") {
                None => QubitProtocol::Feedback,
                Some(v) => serde_json::from_value(v).map_err(|e| invalid(format!("model.params.protocol: {e}")))?,
            };
            if let Some(p) = p {
                let gamma = take_f64(&params, "gamma")?.ok_or_else(|| invalid("model.params: `p` requires `gamma`"))?;
                params.insert("lam".into(), (gamma / p).into());
            }
            Ok(ResolvedModel::Qubit(from_params(params, name)?, protocol))
        }
        "maser" => {
            if let Some(g) = take_f64(&params, "gamma")? {
                params.remove("gamma");
                params.insert("gl".into(), g.into());
                params.insert("gr".into(), g.into());
            }
            if let Some(ratio) = take_f64(&params, "gr_ratio")? {
                params.remove("gr_ratio");
                let gl = take_f64(&params, "gl")?.ok_or_else(|| invalid("model.params: `gr_ratio` requires `gl`"))?;
                params.insert("gr".into(), (ratio * gl).into());
            }
            if let Some(p) = p {
                let gl =
                    take_f64(&params, "gl")?.ok_or_else(|| invalid("model.params: `p` requires `gl` or `gamma`"))?;
                params.insert("lam".into(), (gl / p).into());
            }
            Ok(ResolvedModel::Maser(from_params(params, name)?))
        }
        "poisson" => {
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Rate {
                rate: f64,
            }
            let r: Rate = from_params(params, name)?;
            Ok(ResolvedModel::Poisson(r.rate))
        }
        other => Err(invalid(format!(
            "model.builtin: unknown model `{other}` (expected qubit_cooling, maser or poisson)"
        ))),
    }
}

/// Copy of `spec` with `params[key] = value`.
pub fn with_param(spec: &ModelSpec, key: &str, value: Value) -> ModelSpec {
    let mut out = spec.clone();
    out.params.insert(key.to_string(), value);
    out
}

pub fn matrix(spec: &MatrixSpec, dim: usize, what: &str) -> Result<Operator, CliError> {
    if spec.len() != dim || spec.iter().any(|row| row.len() != dim) {
        return Err(invalid(format!("{what}: expected a {dim}x{dim} matrix")));
    }
    let m = CMatrix::from_fn(dim, dim, |i, j| Complex64::new(spec[i][j][0], spec[i][j][1]));
    Operator::new(m).map_err(|e| invalid(format!("{what}: {e}")))
}

impl ExplicitModel {
    fn to_description(&self) -> Result<ModelDescription, CliError> {
        let n = self.labels.len();
        let d = self.dim;
        let per_memory = |len: usize, what: &str| -> Result<(), CliError> {
            if len == 1 || len == n {
                Ok(())
            } else {
                Err(invalid(format!(
                    "model.explicit.{what}: expected 1 or {n} entries, found {len}"
                )))
            }
        };
        per_memory(self.hamiltonians.len(), "hamiltonians")?;
        per_memory(self.jump_ops.len(), "jump_ops")?;
        let hams = (0..n)
            .map(|q| {
                let idx = if self.hamiltonians.len() == 1 { 0 } else { q };
                matrix(
                    &self.hamiltonians[idx],
                    d,
                    &format!("model.explicit.hamiltonians[{idx}]"),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let jumps = (0..n)
            .map(|q| {
                let idx = if self.jump_ops.len() == 1 { 0 } else { q };
                let row = &self.jump_ops[idx];
                if row.len() != n {
                    return Err(invalid(format!(
                        "model.explicit.jump_ops[{idx}]: expected {n} operators, found {}",
                        row.len()
                    )));
                }
                row.iter()
                    .enumerate()
                    .map(|(k, m)| matrix(m, d, &format!("model.explicit.jump_ops[{idx}][{k}]")))
                    .collect()
            })
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        let unmonitored = if self.unmonitored.is_empty() {
            Vec::new()
        } else {
            per_memory(self.unmonitored.len(), "unmonitored")?;
            (0..n)
                .map(|q| {
                    let idx = if self.unmonitored.len() == 1 { 0 } else { q };
                    self.unmonitored[idx]
                        .iter()
                        .enumerate()
                        .map(|(j, m)| matrix(m, d, &format!("model.explicit.unmonitored[{idx}][{j}]")))
                        .collect()
                })
                .collect::<Result<Vec<Vec<_>>, _>>()?
        };
        Ok(ModelDescription {
            dim: d,
            labels: self.labels.clone(),
            hamiltonians: hams,
            jump_ops: jumps,
            unmonitored,
            hamiltonian_only: None,
        })
    }
}

fn label_index(model: &FeedbackModel, label: &str, what: &str) -> Result<usize, CliError> {
    model
        .channel_index(label)
        .ok_or_else(|| invalid(format!("{what}: unknown channel label `{label}`")))
}

impl WeightsSpec {
    pub fn build(&self, resolved: &ResolvedModel, model: &FeedbackModel) -> Result<CountingWeights, CliError> {
        let n = model.n_channels();
        match self {
            WeightsSpec::PerChannel(map) => {
                let mut nu = vec![0.0; n];
                for (label, &w) in map {
                    nu[label_index(model, label, "weights.per_channel")?] = w;
                }
                CountingWeights::per_channel(&nu).map_err(|e| invalid(format!("weights: {e}")))
            }
            WeightsSpec::PerTransition(map) => {
                let mut w = vec![vec![0.0; n]; n];
                for (channel, row) in map {
                    let k = label_index(model, channel, "weights.per_transition")?;
                    for (memory, &x) in row {
                        w[k][label_index(model, memory, "weights.per_transition")?] = x;
                    }
                }
                CountingWeights::per_transition(w).map_err(|e| invalid(format!("weights: {e}")))
            }
            WeightsSpec::Activity => Ok(CountingWeights::activity(n)),
            WeightsSpec::Work => match resolved {
                ResolvedModel::Maser(p) => Ok(work_weights(p)),
                _ => Err(invalid("weights: `work` is only defined for the maser")),
            },
        }
    }
}

impl StateSpec {
    pub fn build(&self, dim: usize) -> Result<Operator, CliError> {
        match self {
            StateSpec::Basis(i) if *i < dim => Ok(Operator::projector(*i, dim)),
            StateSpec::Basis(i) => Err(invalid(format!(
                "initial.state: basis index {i} out of range for dimension {dim}"
            ))),
            StateSpec::MaximallyMixed => Ok(Operator::identity(dim).scale(1.0 / dim as f64)),
            StateSpec::Matrix(m) => {
                let rho = matrix(m, dim, "initial.state")?;
                if !rho.is_density(1e-8) {
                    return Err(invalid("initial.state: not a density matrix"));
                }
                Ok(rho)
            }
        }
    }
}

/// Memory distribution from a label map.
pub fn memory_distribution(model: &FeedbackModel, memory: &BTreeMap<String, f64>) -> Result<Vec<f64>, CliError> {
    let mut dist = vec![0.0; model.n_channels()];
    for (label, &p) in memory {
        dist[label_index(model, label, "initial.memory")?] = p;
    }
    let total: f64 = dist.iter().sum();
    if dist.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-10 {
        return Err(invalid(
            "initial.memory: probabilities must be nonnegative and sum to 1",
        ));
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUBIT: &str = r#"{
        "model": {"builtin": "qubit_cooling", "params": {"nbar": 0.5, "gamma": 1.0, "p": 0.25}},
        "task": {"kind": "steady"}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let c = parse(QUBIT).unwrap();
        let again = parse(&canonical(&c)).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn p_shorthand_sets_drive() {
        let c = parse(QUBIT).unwrap();
        match resolve_model(&c.model).unwrap() {
            ResolvedModel::Qubit(p, QubitProtocol::Feedback) => assert_eq!(p.lam, 4.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grids() {
        let g: Grid = serde_json::from_str(r#"{"linspace": {"start": 0, "stop": 1, "num": 5}}"#).unwrap();
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g: Grid = serde_json::from_str(r#"{"logspace": {"start": -1, "stop": 1, "num": 3}}"#).unwrap();
        assert!((g.points()[0] - 0.1).abs() < 1e-15 && g.points()[2] == 10.0);
        let g: Grid = serde_json::from_str("[1, 2]").unwrap();
        assert_eq!(g.points(), vec![1.0, 2.0]);
    }

    #[test]
    fn rejects_empty_grid_and_two_sources() {
        let text = r#"{"model": {"builtin": "poisson", "params": {"rate": 1}},
            "task": {"kind": "spectrum", "omegas": []}}"#;
        assert!(matches!(parse(text), Err(CliError::Validation(_))));
        let text = r#"{"model": {"builtin": "poisson", "explicit": {"dim": 1, "labels": ["a"],
            "hamiltonians": [[[[0, 0]]]], "jump_ops": [[[[[1, 0]]]]]}}, "task": {"kind": "steady"}}"#;
        assert!(matches!(parse(text), Err(CliError::Validation(_))));
    }

    #[test]
    fn parse_error_has_position() {
        let err = parse("{\n  \"model\": ,\n}").unwrap_err();
        match err {
            CliError::Parse(msg) => assert!(msg.starts_with("line 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn explicit_model_shares_single_rows() {
        let text = r#"{"model": {"explicit": {"dim": 2, "labels": ["down", "up"],
            "hamiltonians": [[[[0, 0], [1, 0]], [[1, 0], [0, 0]]]],
            "jump_ops": [[ [[[0, 0], [1, 0]], [[0, 0], [0, 0]]], [[[0, 0], [0, 0]], [[0.5, 0], [0, 0]]] ]]}},
            "task": {"kind": "steady"}}"#;
        let c = parse(text).unwrap();
        let model = resolve_model(&c.model).unwrap().build().unwrap();
        assert_eq!(model.n_channels(), 2);
        assert_eq!(model.jump(1, 0), model.jump(0, 0));
    }
}
