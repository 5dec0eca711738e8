use std::fmt::Write as _;

use super::{CouplingProblem, KktSystem, SystemState};
use crate::error::{AtcError, Result};
use crate::linalg::{max_norm, solve_refined, LinearSolve};

/// Whether the `(u, u)` blocks include adjoint-contracted third derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HessianMode {
    #[default]
    FullNewton,
    GaussNewton,
}

impl std::str::FromStr for HessianMode {
    type Err = AtcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full_newton" => Ok(Self::FullNewton),
            "gauss" | "gauss_newton" => Ok(Self::GaussNewton),
            other => Err(AtcError::Usage(format!("unknown hessian mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Stop when `‖∇Ψ‖_max` falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step reduction factor of the backtracking line search.
    pub backtrack: f64,
    /// Accept a step of length `α` if the residual drops by `(1 − c·α)`.
    pub sufficient_decrease: f64,
    pub min_step: f64,
    pub hessian_mode: HessianMode,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            min_step: 1e-10,
            hessian_mode: HessianMode::FullNewton,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(AtcError::Usage("tolerance must be positive".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(AtcError::Usage("backtracking factor must lie in (0, 1)".into()));
        }
        if !(self.sufficient_decrease >= 0.0 && self.sufficient_decrease < 1.0) {
            return Err(AtcError::Usage("sufficient-decrease ratio must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One Newton iteration. Iteration 0 is the initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `‖∇Ψ‖_max` after the step.
    pub residual: f64,
    pub step_length: f64,
    pub objective: f64,
    /// Relative residual of the KKT solve that produced the step.
    pub linear_residual: f64,
    pub pivot_ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonDiagnostics {
    pub history: Vec<IterationRecord>,
}

impl NewtonDiagnostics {
    /// Newton steps taken.
    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.residual)
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.residual).collect()
    }

    /// Largest relative residual over all linear solves.
    pub fn worst_linear_residual(&self) -> f64 {
        self.history
            .iter()
            .skip(1)
            .map(|r| r.linear_residual)
            .fold(0.0, f64::max)
    }

    /// `iter,residual,step_length,objective` lines, header first.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,residual,step_length,objective\n");
        for r in &self.history {
            let _ = writeln!(s, "{},{},{},{}", r.iter, r.residual, r.step_length, r.objective);
        }
        s
    }
}

/// Solves `∇²Ψ x = rhs` with the spatial ordering of `problem`.
pub fn solve_kkt_linear(
    problem: &CouplingProblem,
    system: &KktSystem,
    rhs: &[f64],
) -> Result<LinearSolve> {
    if rhs.len() != system.layout.len() {
        return Err(AtcError::Usage("right-hand side does not match the KKT system".into()));
    }
    let perm = problem.ordering();
    solve_refined(&system.hessian, Some(&perm), rhs)
}

fn residual_and_objective(problem: &CouplingProblem, z: &SystemState) -> Result<(f64, f64)> {
    let g = problem.lagrangian_gradient(z)?;
    Ok((max_norm(&g), problem.objective(&z.u_a, &z.u_c)))
}

/// Outcome of [`newton_iterate`]; `state` is the last accepted iterate.
#[derive(Clone, Debug)]
pub struct NewtonRun {
    pub state: SystemState,
    pub diagnostics: NewtonDiagnostics,
    pub converged: bool,
}

/// Damped Newton iteration on `∇Ψ = 0` with backtracking on `‖∇Ψ‖_max`.
///
/// Errors other than non-convergence abort; running out of iterations or
/// step length returns the last iterate with `converged = false`.
pub fn newton_iterate(
    problem: &CouplingProblem,
    initial: SystemState,
    opts: &NewtonOptions,
) -> Result<NewtonRun> {
    opts.validate()?;
    let mut z = initial;
    let (mut residual, objective) = residual_and_objective(problem, &z)?;
    let mut diag = NewtonDiagnostics {
        history: vec![IterationRecord {
            iter: 0,
            residual,
            step_length: 0.0,
            objective,
            linear_residual: 0.0,
            pivot_ratio: 0.0,
        }],
    };
    let mut iter = 0;
    while !(residual < opts.tolerance) {
        if iter >= opts.max_iterations || !residual.is_finite() {
            return Ok(NewtonRun {
                state: z,
                diagnostics: diag,
                converged: false,
            });
        }
        iter += 1;
        let kkt = problem.lagrangian_hessian(&z, opts.hessian_mode)?;
        let rhs: Vec<f64> = kkt.gradient.iter().map(|g| -g).collect();
        let step = solve_kkt_linear(problem, &kkt, &rhs)?;
        let base = problem.to_vector(&z);

        let mut alpha = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = base
                .iter()
                .zip(&step.solution)
                .map(|(a, dx)| a + alpha * dx)
                .collect();
            let candidate = problem.from_vector(&trial)?;
            match residual_and_objective(problem, &candidate) {
                Ok((r, obj)) if r <= (1.0 - opts.sufficient_decrease * alpha) * residual => {
                    break Some((candidate, r, obj));
                }
                Ok(_) | Err(AtcError::Configuration { .. }) => {}
                Err(e) => return Err(e),
            }
            alpha *= opts.backtrack;
            if alpha < opts.min_step {
                break None;
            }
        };
        let Some((candidate, r, obj)) = accepted else {
            return Ok(NewtonRun {
                state: z,
                diagnostics: diag,
                converged: false,
            });
        };
        z = candidate;
        residual = r;
        diag.history.push(IterationRecord {
            iter,
            residual,
            step_length: alpha,
            objective: obj,
            linear_residual: step.relative_residual,
            pivot_ratio: step.pivot_ratio,
        });
    }
    Ok(NewtonRun {
        state: z,
        diagnostics: diag,
        converged: true,
    })
}

/// Like [`newton_iterate`] but reports failure to converge as an error.
pub fn newton_solve(
    problem: &CouplingProblem,
    initial: SystemState,
    opts: &NewtonOptions,
) -> Result<(SystemState, NewtonDiagnostics)> {
    let run = newton_iterate(problem, initial, opts)?;
    if run.converged {
        Ok((run.state, run.diagnostics))
    } else {
        Err(AtcError::NonConvergence {
            iterations: run.diagnostics.iterations(),
            history: run.diagnostics.residuals(),
        })
    }
}
