//! Convergence study driver: single runs, sweeps over core radii, CSV
//! records and the fitted rate.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling_opt::{newton_iterate, CouplingProblem, NewtonDiagnostics, NewtonOptions, SystemState};
use crate::domain_mesh::{count_dof, NormMode};
use crate::error::{AtcError, Result};
use crate::models::{ExactSolution, LatticeDisplacement, LatticeField};
use crate::oracle_error::{energy_seminorm_error, max_norm_error, ErrorOptions};

/// One row of the convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub r_core: i64,
    pub r_a: i64,
    pub r_c: i64,
    pub dof: usize,
    pub err_l2: f64,
    pub err_inf: f64,
    pub objective: f64,
    pub newton_iters: usize,
    pub residual: f64,
    pub wall_time: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub gamma: f64,
    pub norm: NormMode,
    pub newton: NewtonOptions,
    pub error: ErrorOptions,
    /// Start each sweep point from the previous composite solution. Forces
    /// a sequential sweep.
    pub warm_start: bool,
    /// Record wall-clock seconds; when off the column is 0 and output is
    /// reproducible byte for byte.
    pub record_timing: bool,
}

impl RunOptions {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            norm: NormMode::Energy,
            newton: NewtonOptions::default(),
            error: ErrorOptions::default(),
            warm_start: false,
            record_timing: true,
        }
    }
}

/// Everything produced by one solve.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub record: ConvergenceRecord,
    pub diagnostics: NewtonDiagnostics,
    pub problem: CouplingProblem,
    pub state: SystemState,
    /// Composite displacement on ℒ.
    pub solution: LatticeDisplacement,
}

fn validate_r_core(r_core: i64) -> Result<()> {
    if r_core < 1 {
        return Err(AtcError::Usage(format!("core radius must be a positive integer, got {r_core}")));
    }
    Ok(())
}

/// Initial state sampled from a previous composite solution (zero beyond its
/// support); multipliers start at zero.
pub fn warm_state(problem: &CouplingProblem, previous: &LatticeDisplacement) -> SystemState {
    let mut z = problem.zero_state();
    let r_a = problem.dec.r_a();
    for (i, v) in z.u_a.values.iter_mut().enumerate() {
        *v = previous.value(i as i64 - r_a);
    }
    for (side, values) in z.u_c.sides.iter_mut().enumerate() {
        let nodes = problem.continuum.sides()[side].nodes();
        for (v, &x) in values.iter_mut().zip(nodes) {
            *v = previous.value(x);
        }
    }
    z
}

/// Solves the manufactured problem for one core radius.
///
/// Non-convergence is not an error here: the record is marked
/// `converged = false` and carries the last iterate's errors.
pub fn run_single(r_core: i64, opts: &RunOptions) -> Result<RunOutcome> {
    run_single_from(r_core, opts, None)
}

pub fn run_single_from(
    r_core: i64,
    opts: &RunOptions,
    previous: Option<&LatticeDisplacement>,
) -> Result<RunOutcome> {
    validate_r_core(r_core)?;
    opts.newton.validate()?;
    let start = Instant::now();
    let problem = CouplingProblem::manufactured(r_core, opts.gamma, opts.norm)?;
    let initial = match previous {
        Some(p) => warm_state(&problem, p),
        None => problem.zero_state(),
    };
    let run = newton_iterate(&problem, initial, &opts.newton)?;
    let solution = problem.assemble_atc_solution(&run.state);
    let exact = ExactSolution::new(opts.gamma);
    let err_l2 = energy_seminorm_error(&solution, &exact, opts.error)?;
    let err_inf = max_norm_error(&solution, &exact, opts.error)?;
    let wall_time = if opts.record_timing {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let record = ConvergenceRecord {
        r_core,
        r_a: problem.dec.r_a(),
        r_c: problem.dec.r_c(),
        dof: count_dof(&problem.dec, &problem.mesh),
        err_l2,
        err_inf,
        objective: problem.objective(&run.state.u_a, &run.state.u_c),
        newton_iters: run.diagnostics.iterations(),
        residual: run.diagnostics.final_residual(),
        wall_time,
        converged: run.converged,
    };
    Ok(RunOutcome {
        record,
        diagnostics: run.diagnostics,
        problem,
        state: run.state,
        solution,
    })
}

/// Runs every core radius in input order. Failed points are recorded as
/// unconverged; only invalid input aborts the sweep.
pub fn run_sweep(r_cores: &[i64], opts: &RunOptions) -> Result<Vec<ConvergenceRecord>> {
    for &r in r_cores {
        validate_r_core(r)?;
    }
    opts.newton.validate()?;
    if opts.warm_start {
        let mut out = Vec::with_capacity(r_cores.len());
        let mut previous: Option<LatticeDisplacement> = None;
        for &r in r_cores {
            match run_single_from(r, opts, previous.as_ref()) {
                Ok(o) => {
                    previous = o.record.converged.then_some(o.solution);
                    out.push(o.record);
                }
                Err(e) => out.push(failed_record(r, opts, &e)?),
            }
        }
        Ok(out)
    } else {
        r_cores
            .par_iter()
            .map(|&r| match run_single(r, opts) {
                Ok(o) => Ok(o.record),
                Err(e) => failed_record(r, opts, &e),
            })
            .collect()
    }
}

/// Record for a point whose solve aborted (e.g. a singular KKT matrix).
fn failed_record(r_core: i64, opts: &RunOptions, err: &AtcError) -> Result<ConvergenceRecord> {
    if matches!(err, AtcError::Usage(_) | AtcError::IllPosed(_)) {
        return Err(err.clone());
    }
    let problem = CouplingProblem::manufactured(r_core, opts.gamma, opts.norm)?;
    Ok(ConvergenceRecord {
        r_core,
        r_a: problem.dec.r_a(),
        r_c: problem.dec.r_c(),
        dof: count_dof(&problem.dec, &problem.mesh),
        err_l2: f64::INFINITY,
        err_inf: f64::INFINITY,
        objective: f64::INFINITY,
        newton_iters: 0,
        residual: f64::INFINITY,
        wall_time: 0.0,
        converged: false,
    })
}

/// Least-squares slope of `log err_l2` against `log dof` over converged
/// records.
pub fn fit_rate(records: &[ConvergenceRecord]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.converged && r.err_l2 > 0.0 && r.err_l2.is_finite() && r.dof > 0)
        .map(|r| ((r.dof as f64).ln(), r.err_l2.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(AtcError::Usage(format!(
            "rate fit needs at least 3 converged points, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AtcError::Usage("rate fit needs distinct DoF counts".into()));
    }
    Ok(sxy / sxx)
}

fn csv_error(e: csv::Error) -> AtcError {
    AtcError::Usage(format!("CSV error: {e}"))
}

pub fn write_csv(records: &[ConvergenceRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record([
            "r_core", "r_a", "r_c", "dof", "err_l2", "err_inf", "objective", "newton_iters",
            "residual", "wall_time", "converged",
        ])
        .map_err(csv_error)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()
        .map_err(|e| AtcError::Usage(format!("cannot write CSV: {e}")))
}

pub fn read_csv(input: impl Read) -> Result<Vec<ConvergenceRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)
}

/// Two whitespace-separated columns, `dof err_l2`, for log-log plotting.
pub fn write_plot_data(records: &[ConvergenceRecord], mut out: impl Write) -> Result<()> {
    let io = |e: std::io::Error| AtcError::Usage(format!("cannot write plot data: {e}"));
    writeln!(out, "# dof err_l2").map_err(io)?;
    for r in records.iter().filter(|r| r.converged) {
        writeln!(out, "{} {:e}", r.dof, r.err_l2).map_err(io)?;
    }
    Ok(())
}
