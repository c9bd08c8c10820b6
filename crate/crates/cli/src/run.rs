//! Task execution and output assembly.

use std::path::{Path, PathBuf};
use std::time::Instant;

use jumpfb::dynamics::{evolve_extended, evolve_memory_resolved};
use jumpfb::fcs::{
    default_chi_step, noise_by_quadrature, power_spectrum, spectral_gap, stationary_statistics, tilted_cumulants,
    two_point_correlation, CountingWeights,
};
use jumpfb::hybrid::{extended_liouvillian, marginals, HybridState};
use jumpfb::trajectories::{mc_estimate, sample_trajectories, write_jump_csv, InitialCondition, McOptions};
use jumpfb::FeedbackModel;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{
    canonical, memory_distribution, resolve_model, with_param, EvolveMethod, InitialSpec, RunConfig, SweepMeasure,
    SweepTask, TaskSpec, TrajectoryTask,
};
use crate::error::CliError;
use crate::table::{Cell, Table};

/// Summary written next to the outputs as `report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config: Value,
    /// Output files, relative to the output directory.
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    pub version: String,
}

/// Header and values of one measurement row.
type Measure = (Vec<String>, Vec<f64>);

/// In-memory result of a task: named files and their contents.
pub type Outputs = Vec<(String, String)>;

struct Setup {
    model: FeedbackModel,
    weights: CountingWeights,
}

fn setup(config: &RunConfig, spec: &crate::config::ModelSpec) -> Result<Setup, CliError> {
    let resolved = resolve_model(spec)?;
    let model = resolved.build()?;
    let weights = match &config.weights {
        Some(w) => w.build(&resolved, &model)?,
        None => resolved.default_weights(&model),
    };
    Ok(Setup { model, weights })
}

fn state_header(model: &FeedbackModel) -> Vec<String> {
    let d = model.dim();
    let mut h: Vec<String> = model.labels().map(|l| format!("P({l})")).collect();
    h.extend((0..d).map(|i| format!("pop_{i}")));
    for i in 0..d {
        for j in i + 1..d {
            h.push(format!("re_rho_{i}_{j}"));
            h.push(format!("im_rho_{i}_{j}"));
        }
    }
    h
}

fn state_row(state: &HybridState) -> Vec<f64> {
    let m = marginals(state);
    let d = state.dim();
    let mut row = m.memory_dist.clone();
    row.extend((0..d).map(|i| m.system.get(i, i).re));
    for i in 0..d {
        for j in i + 1..d {
            let c = m.system.get(i, j);
            row.push(c.re);
            row.push(c.im);
        }
    }
    row
}

fn one_column(name: &str, values: &[(f64, f64)], x: &str) -> Table {
    let mut t = Table::new(vec![x.to_string(), name.to_string()]);
    for &(a, b) in values {
        t.push_numbers(&[a, b]);
    }
    t
}

fn initial_condition(
    spec: Option<&InitialSpec>,
    model: &FeedbackModel,
    steady: impl FnOnce() -> Result<HybridState, CliError>,
) -> Result<InitialCondition, CliError> {
    match spec {
        None | Some(InitialSpec::Steady) => Ok(InitialCondition::Hybrid(steady()?)),
        Some(InitialSpec::Product { memory, state }) => Ok(InitialCondition::Product {
            rho: state.build(model.dim())?,
            memory_dist: memory_distribution(model, memory)?,
        }),
    }
}

fn steady_measure(s: &Setup) -> Result<Measure, CliError> {
    let gen = extended_liouvillian(&s.model).map_err(CliError::numerical("extended generator"))?;
    let stats = stationary_statistics(&gen, &s.weights).map_err(CliError::numerical("steady state"))?;
    let mut header = state_header(&s.model);
    header.push("current".into());
    let mut row = state_row(&stats.state);
    row.push(stats.current);
    Ok((header, row))
}

fn noise_measure(s: &Setup, cross_check: bool) -> Result<Measure, CliError> {
    let gen = extended_liouvillian(&s.model).map_err(CliError::numerical("extended generator"))?;
    let stats = stationary_statistics(&gen, &s.weights).map_err(CliError::numerical("noise"))?;
    let mut header = vec!["current".to_string(), "second_moment".into(), "noise".into()];
    let mut row = vec![stats.current, stats.second_moment, stats.noise];
    if cross_check {
        let quad =
            noise_by_quadrature(&gen, &s.weights, &stats.state).map_err(CliError::numerical("noise quadrature"))?;
        let (j, d) = tilted_cumulants(&gen, &s.weights, default_chi_step(&s.weights))
            .map_err(CliError::numerical("tilted generator"))?;
        header.extend([
            "noise_quadrature".to_string(),
            "current_tilted".into(),
            "noise_tilted".into(),
        ]);
        row.extend([quad, j, d]);
    }
    Ok((header, row))
}

/// Runs the configured task and returns the output files in order.
pub fn execute(config: &RunConfig) -> Result<Outputs, CliError> {
    config.check()?;
    if let TaskSpec::Sweep(sweep) = &config.task {
        return run_sweep(config, sweep);
    }
    let s = setup(config, &config.model)?;
    let model = &s.model;
    let csv = |name: &str, t: Table| (name.to_string(), t.to_csv());
    match &config.task {
        TaskSpec::Steady => {
            let (header, row) = steady_measure(&s)?;
            let mut t = Table::new(header);
            t.push_numbers(&row);
            Ok(vec![csv("steady.csv", t)])
        }
        TaskSpec::Noise { cross_check } => {
            let (header, row) = noise_measure(&s, *cross_check)?;
            let mut t = Table::new(header);
            t.push_numbers(&row);
            Ok(vec![csv("noise.csv", t)])
        }
        TaskSpec::Evolve { times, method } => {
            let gen = extended_liouvillian(model).map_err(CliError::numerical("extended generator"))?;
            let start = match initial_condition(config.initial.as_ref(), model, || {
                gen.steady_state().map_err(CliError::numerical("steady state"))
            })? {
                InitialCondition::Hybrid(h) => h,
                InitialCondition::Product { rho, memory_dist } => {
                    let blocks = memory_dist.iter().map(|&p| rho.scale(p)).collect();
                    HybridState::new(blocks).map_err(CliError::numerical("initial state"))?
                }
            };
            let pts = times.points();
            let res = match method {
                EvolveMethod::Exponential => evolve_extended(&gen, &start, &pts),
                EvolveMethod::Ode => evolve_memory_resolved(model, &start, &pts),
            }
            .map_err(CliError::numerical("evolve"))?;
            let mut header = vec!["time".to_string()];
            header.extend(state_header(model));
            let mut t = Table::new(header);
            for (time, state) in res.times.iter().zip(&res.states) {
                let mut row = vec![*time];
                row.extend(state_row(state));
                t.push_numbers(&row);
            }
            Ok(vec![csv("evolve.csv", t)])
        }
        TaskSpec::Correlation { taus } => {
            let gen = extended_liouvillian(model).map_err(CliError::numerical("extended generator"))?;
            let ss = gen.steady_state().map_err(CliError::numerical("steady state"))?;
            let f = two_point_correlation(&gen, &s.weights, &ss, &taus.points())
                .map_err(CliError::numerical("correlation"))?;
            let pairs: Vec<(f64, f64)> = f.taus.iter().copied().zip(f.values.iter().copied()).collect();
            let mut side = Table::new(vec!["K".into()]);
            side.push_numbers(&[f.singular_weight]);
            Ok(vec![
                csv("correlation.csv", one_column("F_smooth", &pairs, "tau")),
                csv("correlation_singular.csv", side),
            ])
        }
        TaskSpec::Spectrum { omegas } => {
            let gen = extended_liouvillian(model).map_err(CliError::numerical("extended generator"))?;
            let ss = gen.steady_state().map_err(CliError::numerical("steady state"))?;
            let sp =
                power_spectrum(&gen, &s.weights, &ss, &omegas.points()).map_err(CliError::numerical("spectrum"))?;
            let pairs: Vec<(f64, f64)> = sp.omegas.iter().copied().zip(sp.values.iter().copied()).collect();
            Ok(vec![csv("spectrum.csv", one_column("S", &pairs, "omega"))])
        }
        TaskSpec::Trajectories(task) => run_trajectories(config, &s, task),
        TaskSpec::Sweep(_) => unreachable!(),
    }
}

fn run_trajectories(config: &RunConfig, s: &Setup, task: &TrajectoryTask) -> Result<Outputs, CliError> {
    let model = &s.model;
    let gen = extended_liouvillian(model).map_err(CliError::numerical("extended generator"))?;
    let stats = stationary_statistics(&gen, &s.weights).map_err(CliError::numerical("steady state"))?;
    let initial = initial_condition(config.initial.as_ref(), model, || Ok(stats.state.clone()))?;
    let burn_in = task.burn_in.unwrap_or_else(|| {
        let gap = spectral_gap(&gen);
        if gap.is_finite() {
            10.0 / gap
        } else {
            0.0
        }
    });
    let mut opts = McOptions::new(task.n_traj, task.horizon, task.scheme, task.seed);
    opts.burn_in = burn_in;
    let est = mc_estimate(model, &s.weights, &initial, &opts).map_err(CliError::numerical("trajectories"))?;

    let mut t = Table::new(vec![
        "quantity".into(),
        "value".into(),
        "std_error".into(),
        "reference".into(),
    ]);
    let row = |name: &str, e: jumpfb::trajectories::Estimate, reference: Option<f64>| {
        vec![
            Cell::from(name),
            Cell::Num(e.value),
            Cell::Num(e.std_error),
            reference.map_or(Cell::Empty, Cell::Num),
        ]
    };
    t.push(row("current", est.current, Some(stats.current)));
    t.push(row("noise", est.noise, Some(stats.noise)));
    t.push(row("mean_charge", est.mean_charge, Some(stats.current * task.horizon)));
    t.push(row("var_charge", est.var_charge, None));
    let dist = stats.state.memory_dist();
    for ((label, e), p) in model.labels().zip(&est.memory_freq).zip(&dist) {
        t.push(row(&format!("P({label})"), *e, Some(*p)));
    }
    let mut out = vec![("estimate.csv".to_string(), t.to_csv())];
    if task.dump > 0 {
        let records = sample_trajectories(
            model,
            &s.weights,
            &initial,
            burn_in + task.horizon,
            task.scheme,
            task.dump,
            task.seed,
        )
        .map_err(CliError::numerical("trajectory dump"))?;
        let mut buf = Vec::new();
        write_jump_csv(&mut buf, model, &records).expect("writing to memory");
        out.push((
            "trajectories.csv".to_string(),
            String::from_utf8(buf).expect("ascii output"),
        ));
    }
    Ok(out)
}

fn run_sweep(config: &RunConfig, sweep: &SweepTask) -> Result<Outputs, CliError> {
    let mut values = sweep.values.points();
    values.sort_by(f64::total_cmp);
    let variants: Vec<(String, serde_json::Map<String, Value>)> = if sweep.variants.is_empty() {
        vec![(String::new(), serde_json::Map::new())]
    } else {
        sweep.variants.iter().map(|v| (v.name.clone(), v.set.clone())).collect()
    };
    // the parameter must be numeric (or the `p` shorthand) for the model
    let probe = with_param(&config.model, &sweep.parameter, values[0].into());
    let mut probe_spec = probe.clone();
    for (_, set) in &variants {
        for (k, v) in set {
            probe_spec.params.insert(k.clone(), v.clone());
        }
        resolve_model(&probe_spec).map_err(|e| match e {
            CliError::Validation(msg) if msg.contains("unknown field") => {
                CliError::Validation(format!("sweep: unknown parameter `{}` ({msg})", sweep.parameter))
            }
            other => other,
        })?;
        probe_spec = probe.clone();
    }

    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|i| (0..variants.len()).map(move |v| (i, v)))
        .collect();
    let results: Vec<Result<Measure, CliError>> = jobs
        .par_iter()
        .map(|&(i, v)| {
            let mut spec = with_param(&config.model, &sweep.parameter, values[i].into());
            for (k, val) in &variants[v].1 {
                spec.params.insert(k.clone(), val.clone());
            }
            let s = setup(config, &spec)?;
            match sweep.measure {
                SweepMeasure::Steady => steady_measure(&s),
                SweepMeasure::Noise => noise_measure(&s, false),
            }
            .map_err(|e| match e {
                CliError::Numerical { context, source } => CliError::Numerical {
                    context: format!("{context} at {} = {}", sweep.parameter, values[i]),
                    source,
                },
                other => other,
            })
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut header = vec![sweep.parameter.clone()];
    for (v, (name, _)) in variants.iter().enumerate() {
        for col in &results[v].0 {
            header.push(if name.is_empty() {
                col.clone()
            } else {
                format!("{name}.{col}")
            });
        }
    }
    let mut t = Table::new(header);
    for (i, x) in values.iter().enumerate() {
        let mut row = vec![*x];
        for v in 0..variants.len() {
            row.extend(&results[i * variants.len() + v].1);
        }
        t.push_numbers(&row);
    }
    Ok(vec![("sweep.csv".to_string(), t.to_csv())])
}

/// Runs `config`, writing outputs and `report.json` into `out_dir` (or the
/// configured directory).
pub fn run(config: &RunConfig, out_dir: Option<&Path>) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let outputs = execute(config)?;
    let dir: PathBuf = out_dir.map_or_else(|| config.output.dir.clone(), Path::to_path_buf);
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    for (name, content) in &outputs {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(io(&path))?;
    }
    let report = RunReport {
        config: serde_json::from_str(&canonical(config)).expect("canonical form is JSON"),
        outputs: outputs.iter().map(|(n, _)| n.clone()).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
        version: crate::VERSION.to_string(),
    };
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    std::fs::write(&path, text).map_err(io(&path))?;
    Ok(report)
}
