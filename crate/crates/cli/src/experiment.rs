//! Single runs and two-leg metric comparisons, with their output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use shapeopt::mesh::vtu::{write_vtu, FieldRef};
use shapeopt::mesh::{MeshError, TriMesh};
use shapeopt::optimizer::{
    augmented_lagrangian_loop_observed, inner_solve, InnerStatus, IterationRecord,
    MultiplierRecord, OptimizerError, OuterAction, Problem, RunState, RunStatus, ShapeEvaluation,
    ShapeProblem, ShapeProblemError,
};
use shapeopt::shape_calculus::GeometricReference;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Problem(#[from] ShapeProblemError),
}

fn output_error(path: &Path, e: impl ToString) -> RunError {
    RunError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// How a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    /// Only with fixed multipliers: valid trial meshes exist, none decreases `L_A`.
    Stagnated,
    MeshInvalid,
    IterationCap,
}

impl Termination {
    pub fn exit_code(self) -> i32 {
        match self {
            Termination::Converged => crate::EXIT_CONVERGED,
            Termination::MeshInvalid => crate::EXIT_MESH_INVALID,
            Termination::IterationCap => crate::EXIT_ITERATION_CAP,
            Termination::Stagnated => crate::EXIT_STAGNATED,
        }
    }
}

/// Result of one optimization run.
pub struct RunOutcome {
    pub termination: Termination,
    pub records: Vec<IterationRecord>,
    pub multipliers: Vec<MultiplierRecord>,
    pub mesh: TriMesh,
    pub evaluation: ShapeEvaluation,
    pub reference: GeometricReference,
    pub lambda: [f64; 3],
    pub mu: f64,
    pub initial_quality: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'a str,
    status: Termination,
    exit_code: i32,
    metric: shapeopt::metrics::MetricKind,
    memory: usize,
    derivative: shapeopt::optimizer::ShapeDerivative,
    fixed_multipliers: bool,
    #[serde(rename = "J")]
    j: f64,
    c_norm: f64,
    constraints: [f64; 3],
    worst_quality: f64,
    initial_worst_quality: f64,
    inner_iterations: usize,
    outer_iterations: usize,
    lambda: [f64; 3],
    mu: f64,
    vol0: f64,
    bc0: [f64; 2],
    vertices: usize,
    triangles: usize,
    obstacle_edges: usize,
}

#[derive(Serialize)]
struct MultiplierRow {
    outer: usize,
    lambda_bc_x: f64,
    lambda_bc_y: f64,
    lambda_vol: f64,
    mu: f64,
    c_bc_x: f64,
    c_bc_y: f64,
    c_vol: f64,
    c_norm: f64,
    #[serde(rename = "J")]
    j: f64,
    inner_iterations: usize,
    inner_status: InnerStatus,
    action: OuterAction,
}

fn snapshot_path(dir: &Path, iter: usize) -> PathBuf {
    dir.join("snapshots").join(format!("iter_{iter:05}.vtu"))
}

fn write_snapshot(mesh: &TriMesh, path: &Path) -> Result<(), MeshError> {
    let quality = mesh.element_quality().per_element;
    write_vtu(mesh, &[FieldRef::cell_scalar("quality", &quality)], path)
}

/// Runs the optimizer on `mesh` as configured. `on_step` sees every accepted
/// step; snapshots are written into `snapshot_dir` when enabled.
pub fn execute(
    config: &ExperimentConfig,
    mesh: TriMesh,
    snapshot_dir: Option<&Path>,
    on_step: &mut dyn FnMut(&IterationRecord),
) -> Result<RunOutcome, RunError> {
    let optimizer = config.optimizer_config();
    let problem =
        ShapeProblem::new(&mesh, config.inflow, config.metric)?.with_derivative(config.derivative);
    let initial_quality = mesh.element_quality().worst;
    let every = config.snapshot_every;
    let mut snapshot_error = None;
    if let (Some(dir), true) = (snapshot_dir, every > 0) {
        let path = snapshot_path(dir, 0);
        if let Err(e) = write_snapshot(&mesh, &path) {
            return Err(output_error(&path, e));
        }
    }
    let mut observer = |record: &IterationRecord, mesh: &TriMesh| {
        on_step(record);
        if let (Some(dir), true) = (snapshot_dir, every > 0 && record.iter % every == 0) {
            let path = snapshot_path(dir, record.iter);
            if let Err(e) = write_snapshot(mesh, &path) {
                snapshot_error.get_or_insert(output_error(&path, e));
            }
        }
    };
    let outcome = match config.fixed_multipliers {
        None => {
            let result = augmented_lagrangian_loop_observed(
                &problem,
                mesh,
                None,
                &optimizer,
                Some(&mut observer),
            )?;
            RunOutcome {
                termination: match result.status {
                    RunStatus::Converged => Termination::Converged,
                    RunStatus::MeshInvalid => Termination::MeshInvalid,
                    RunStatus::IterationCap => Termination::IterationCap,
                },
                records: result.records,
                multipliers: result.multipliers,
                mesh: result.point,
                evaluation: result.evaluation,
                reference: *problem.reference(),
                lambda: result.lambda.try_into().expect("three constraints"),
                mu: result.mu,
                initial_quality,
            }
        }
        Some(lambda) => {
            optimizer.validate()?;
            let mu = optimizer.mu_initial;
            let mut state = RunState::<ShapeProblem>::new(&optimizer).with_observer(&mut observer);
            let inner = inner_solve(&problem, mesh, None, &lambda, mu, &optimizer, &mut state)?;
            let records = std::mem::take(&mut state.records);
            drop(state);
            let c = problem.constraints(&inner.evaluation);
            let multipliers = vec![MultiplierRecord {
                outer: 1,
                lambda: lambda.to_vec(),
                mu,
                c_norm: shapeopt::optimizer::euclidean_norm(&c),
                constraints: c,
                j: problem.objective(&inner.evaluation),
                inner_iterations: inner.iterations,
                inner_status: inner.status,
                action: OuterAction::MultiplierUpdate,
            }];
            RunOutcome {
                termination: match inner.status {
                    InnerStatus::Converged => Termination::Converged,
                    InnerStatus::Stagnated => Termination::Stagnated,
                    InnerStatus::MeshInvalid => Termination::MeshInvalid,
                    InnerStatus::IterationCap => Termination::IterationCap,
                },
                records,
                multipliers,
                mesh: inner.point,
                evaluation: inner.evaluation,
                reference: *problem.reference(),
                lambda,
                mu,
                initial_quality,
            }
        }
    };
    match snapshot_error {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    if rows.is_empty() {
        w.write_record(header).map_err(|e| output_error(path, e))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| output_error(path, e))
}

const RUN_COLUMNS: [&str; 14] = [
    "iter",
    "J",
    "L_A",
    "c_norm",
    "worst_quality",
    "step_norm",
    "scale",
    "seconds",
    "outer",
    "q_norm",
    "grad_norm",
    "tangential_norm",
    "backtracks",
    "fallback",
];

const MULTIPLIER_COLUMNS: [&str; 13] = [
    "outer",
    "lambda_bc_x",
    "lambda_bc_y",
    "lambda_vol",
    "mu",
    "c_bc_x",
    "c_bc_y",
    "c_vol",
    "c_norm",
    "J",
    "inner_iterations",
    "inner_status",
    "action",
];

/// Writes `run.csv`, `multipliers.csv`, `final.vtu`, `summary.json` and the
/// configuration echo into `dir`.
pub fn write_outputs(
    config: &ExperimentConfig,
    outcome: &RunOutcome,
    dir: &Path,
) -> Result<(), RunError> {
    write_csv(&dir.join("run.csv"), &outcome.records, &RUN_COLUMNS)?;
    let rows: Vec<MultiplierRow> = outcome
        .multipliers
        .iter()
        .map(|m| MultiplierRow {
            outer: m.outer,
            lambda_bc_x: m.lambda[0],
            lambda_bc_y: m.lambda[1],
            lambda_vol: m.lambda[2],
            mu: m.mu,
            c_bc_x: m.constraints[0],
            c_bc_y: m.constraints[1],
            c_vol: m.constraints[2],
            c_norm: m.c_norm,
            j: m.j,
            inner_iterations: m.inner_iterations,
            inner_status: m.inner_status,
            action: m.action,
        })
        .collect();
    write_csv(&dir.join("multipliers.csv"), &rows, &MULTIPLIER_COLUMNS)?;

    let mesh = &outcome.mesh;
    let solution = &outcome.evaluation.solution;
    let velocity = solution.vertex_velocity();
    let pressure = &solution.pressure().values()[..mesh.num_vertices()];
    let quality = mesh.element_quality().per_element;
    let path = dir.join("final.vtu");
    write_vtu(
        mesh,
        &[
            FieldRef::point_vector("velocity", &velocity),
            FieldRef::point_scalar("pressure", pressure),
            FieldRef::cell_scalar("quality", &quality),
        ],
        &path,
    )
    .map_err(|e| output_error(&path, e))?;

    let c = outcome.evaluation.c;
    let summary = Summary {
        version: crate::VERSION,
        status: outcome.termination,
        exit_code: outcome.termination.exit_code(),
        metric: config.metric.kind,
        memory: config.optimizer.memory,
        derivative: config.derivative,
        fixed_multipliers: config.fixed_multipliers.is_some(),
        j: outcome.evaluation.j,
        c_norm: shapeopt::shape_calculus::norm(&c),
        constraints: c,
        worst_quality: mesh.element_quality().worst,
        initial_worst_quality: outcome.initial_quality,
        inner_iterations: outcome.records.len(),
        outer_iterations: outcome.multipliers.len(),
        lambda: outcome.lambda,
        mu: outcome.mu,
        vol0: outcome.reference.vol0,
        bc0: outcome.reference.bc0,
        vertices: mesh.num_vertices(),
        triangles: mesh.num_triangles(),
        obstacle_edges: outcome.evaluation.obstacle.len(),
    };
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(|e| output_error(&path, e))?;
    let path = dir.join("config.toml");
    fs::write(&path, config.echo()).map_err(|e| output_error(&path, e))
}

fn prepare_dir(dir: &Path, snapshots: bool) -> Result<(), RunError> {
    let target = if snapshots {
        dir.join("snapshots")
    } else {
        dir.to_path_buf()
    };
    fs::create_dir_all(&target).map_err(|e| output_error(&target, e))
}

/// Builds the mesh, runs, and writes all outputs into `config.output`.
/// Nothing is written when the mesh cannot be built.
pub fn run(config: &ExperimentConfig) -> Result<Termination, RunError> {
    let mesh = config.build_mesh()?;
    let dir = config.output.clone();
    prepare_dir(&dir, config.snapshot_every > 0)?;
    let outcome = execute(config, mesh, Some(&dir), &mut |_| {})?;
    write_outputs(config, &outcome, &dir)?;
    Ok(outcome.termination)
}

/// Outcome of one comparison leg.
pub struct LegReport {
    pub name: String,
    pub records: Vec<IterationRecord>,
    pub result: Result<Termination, RunError>,
}

/// Runs both legs of `config.compare` in parallel from the same initial mesh.
/// Each leg writes a full run directory `output/<leg>`; the joined per-iteration
/// table goes to `output/compare.csv`.
pub fn compare(config: &ExperimentConfig) -> Result<Vec<LegReport>, RunError> {
    let mesh = config.build_mesh()?;
    let legs: Vec<ExperimentConfig> = config.compare.legs.iter().map(|l| config.leg(l)).collect();
    fs::create_dir_all(&config.output).map_err(|e| output_error(&config.output, e))?;
    let reports: Vec<LegReport> = std::thread::scope(|scope| {
        let handles: Vec<_> = legs
            .iter()
            .zip(&config.compare.legs)
            .map(|(leg, entry)| {
                let mesh = mesh.clone();
                scope.spawn(move || {
                    let records = Mutex::new(Vec::new());
                    let result = prepare_dir(&leg.output, leg.snapshot_every > 0)
                        .and_then(|()| {
                            execute(leg, mesh, Some(&leg.output), &mut |r| {
                                records.lock().unwrap().push(r.clone())
                            })
                        })
                        .and_then(|outcome| {
                            write_outputs(leg, &outcome, &leg.output)?;
                            Ok(outcome.termination)
                        });
                    LegReport {
                        name: entry.name.clone(),
                        records: records.into_inner().unwrap(),
                        result,
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .zip(&config.compare.legs)
            .map(|(h, entry)| {
                h.join().unwrap_or_else(|_| LegReport {
                    name: entry.name.clone(),
                    records: Vec::new(),
                    result: Err(RunError::Output {
                        path: config.output.join(&entry.name),
                        message: "leg panicked".into(),
                    }),
                })
            })
            .collect()
    });
    write_joined(&config.output.join("compare.csv"), &reports)?;
    Ok(reports)
}

fn write_joined(path: &Path, legs: &[LegReport]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    let mut header = vec!["iter".to_string()];
    for leg in legs {
        header.push(format!("{}_J", leg.name));
        header.push(format!("{}_worst_quality", leg.name));
    }
    w.write_record(&header).map_err(|e| output_error(path, e))?;
    let rows = legs.iter().map(|l| l.records.len()).max().unwrap_or(0);
    for i in 0..rows {
        let mut row = vec![(i + 1).to_string()];
        for leg in legs {
            match leg.records.get(i) {
                Some(r) => {
                    row.push(r.j.to_string());
                    row.push(r.worst_quality.to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&row).map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| output_error(path, e))
}
