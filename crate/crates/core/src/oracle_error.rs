//! Brute-force reference solve of the truncated atomistic problem and the
//! error functionals used by the convergence study.

use crate::domain_mesh::{DomainDecomposition, GradedMesh};
use crate::error::{AtcError, Result};
use crate::lattice_potential::LatticeModel;
use crate::linalg::{max_norm, solve_refined, CsrMatrix};
use crate::models::{
    lattice_gradient_at, manufacture_forces, ExactSolution, ExternalForce, LatticeDisplacement,
    LatticeField,
};

/// Minimizer of the truncated lattice energy over displacements vanishing
/// outside ℒ.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub values: LatticeDisplacement,
    /// Final `‖∇ℰ‖_max`.
    pub residual: f64,
    pub iterations: usize,
}

fn full_gradient(
    model: &LatticeModel,
    u: &LatticeDisplacement,
    forces: &ExternalForce,
) -> Result<Vec<f64>> {
    let field = |xi: i64| u.value(xi);
    u.sites()
        .map(|xi| lattice_gradient_at(model, xi, &field).map(|g| g - forces.value(xi)))
        .collect()
}

fn full_hessian(model: &LatticeModel, u: &LatticeDisplacement) -> Result<CsrMatrix> {
    let (first, last) = (u.first, u.last());
    let reach = model.reach();
    let n = u.values.len();
    let mut t = Vec::with_capacity(n * 4 * model.site_bonds().len());
    let index = |xi: i64| (first..=last).contains(&xi).then(|| (xi - first) as usize);
    for owner in (first - reach)..=(last + reach) {
        for bond in model.site_bonds() {
            let (a, b) = bond.endpoints();
            let (p, q) = (index(owner + a), index(owner + b));
            if p.is_none() && q.is_none() {
                continue;
            }
            let r = bond.rest + u.value(owner + b) - u.value(owner + a);
            let c = model.potential.bond(r)?[2];
            if let Some(p) = p {
                t.push((p, p, c));
            }
            if let Some(q) = q {
                t.push((q, q, c));
            }
            if let (Some(p), Some(q)) = (p, q) {
                t.push((p, q, -c));
                t.push((q, p, -c));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, t))
}

/// Newton minimization of `Σ_ξ V(Du(ξ)) − Σ_{ξ∈ℒ} f(ξ)u(ξ)` over `u` supported on ℒ.
pub fn solve_full_atomistic_with_forces(
    dec: &DomainDecomposition,
    model: &LatticeModel,
    forces: &ExternalForce,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ReferenceSolution> {
    let mut u = LatticeDisplacement::zeros(dec.lattice_full());
    let mut g = full_gradient(model, &u, forces)?;
    let mut residual = max_norm(&g);
    let mut history = vec![residual];
    let mut iterations = 0;
    while !(residual < tolerance) {
        if iterations >= max_iterations || !residual.is_finite() {
            return Err(AtcError::NonConvergence { iterations, history });
        }
        iterations += 1;
        let h = full_hessian(model, &u)?;
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = solve_refined(&h, None, &rhs)?.solution;
        let mut alpha = 1.0;
        loop {
            let trial = LatticeDisplacement {
                first: u.first,
                values: u.values.iter().zip(&step).map(|(a, d)| a + alpha * d).collect(),
            };
            match full_gradient(model, &trial, forces) {
                Ok(gt) if max_norm(&gt) <= (1.0 - 1e-4 * alpha) * residual => {
                    u = trial;
                    g = gt;
                    break;
                }
                Ok(_) | Err(AtcError::Configuration { .. }) => {}
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return Err(AtcError::NonConvergence { iterations, history });
            }
        }
        residual = max_norm(&g);
        history.push(residual);
    }
    Ok(ReferenceSolution {
        values: u,
        residual,
        iterations,
    })
}

/// Reference solve of the manufactured problem on ℒ, tolerance `1e-10`.
pub fn solve_full_atomistic(
    dec: &DomainDecomposition,
    gamma: f64,
    model: &LatticeModel,
) -> Result<ReferenceSolution> {
    let forces = manufacture_forces(gamma, dec, model)?;
    solve_full_atomistic_with_forces(dec, model, &forces, 1e-10, 50)
}

/// Which first differences enter the error norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ErrorOptions {
    /// Count `D₁` at the last site of ℒ, whose right neighbour lies outside
    /// (zero extension). Without it only differences inside ℒ are used.
    pub boundary_differences: bool,
}

impl Default for ErrorOptions {
    fn default() -> Self {
        Self {
            boundary_differences: true,
        }
    }
}

fn difference_errors<'a>(
    u: &'a LatticeDisplacement,
    reference: &'a dyn LatticeField,
    opts: ErrorOptions,
) -> Result<impl Iterator<Item = f64> + 'a> {
    if let Some(support) = reference.support() {
        if support != (u.first, u.last()) {
            return Err(AtcError::Usage(format!(
                "error norms need fields on the same sites ({:?} vs {:?})",
                (u.first, u.last()),
                support
            )));
        }
    }
    let last = if opts.boundary_differences {
        u.last()
    } else {
        u.last() - 1
    };
    let mut prev = None;
    Ok((u.first..=last).map(move |xi| {
        let (d0, r0) = prev.unwrap_or_else(|| (u.value(xi), reference.value(xi)));
        let (d1, r1) = (u.value(xi + 1), reference.value(xi + 1));
        prev = Some((d1, r1));
        (d1 - d0) - (r1 - r0)
    }))
}

/// `‖D₁u − D₁ref‖_ℓ²` over ℒ.
pub fn energy_seminorm_error(
    u: &LatticeDisplacement,
    reference: &dyn LatticeField,
    opts: ErrorOptions,
) -> Result<f64> {
    Ok(difference_errors(u, reference, opts)?
        .map(|d| d * d)
        .sum::<f64>()
        .sqrt())
}

/// `‖D₁u − D₁ref‖_ℓ∞` over ℒ.
pub fn max_norm_error(
    u: &LatticeDisplacement,
    reference: &dyn LatticeField,
    opts: ErrorOptions,
) -> Result<f64> {
    Ok(difference_errors(u, reference, opts)?.fold(0.0, |m, d| m.max(d.abs())))
}

/// How derivatives of the exact solution enter [`conjectured_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BoundMode {
    /// Exact finite differences of the closed form.
    #[default]
    Exact,
    /// The decay model `|D^k ū(ξ)| ≈ |ξ|^(1−k−γ)`.
    Asymptotic,
}

/// The two terms of the conjectured error bound and their combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConjecturedBound {
    /// `‖Dū‖_ℓ²(ℤ∖ℒ)`.
    pub far_field: f64,
    /// `‖h D²ū‖_ℓ²(ℒ_c)`.
    pub continuum: f64,
}

impl ConjecturedBound {
    /// `sqrt(far_field² + continuum²)`.
    pub fn total(&self) -> f64 {
        self.far_field.hypot(self.continuum)
    }
}

fn first_difference_sq(u: &ExactSolution, model: &LatticeModel, xi: i64, mode: BoundMode) -> f64 {
    match mode {
        BoundMode::Exact => {
            let u0 = u.value(xi);
            model
                .interaction_range()
                .iter()
                .map(|&rho| (u.value(xi + rho) - u0).powi(2))
                .sum()
        }
        BoundMode::Asymptotic => (xi.abs().max(1) as f64).powf(-2.0 * u.gamma),
    }
}

fn second_difference_sq(u: &ExactSolution, model: &LatticeModel, xi: i64, mode: BoundMode) -> f64 {
    match mode {
        BoundMode::Exact => {
            let r = model.interaction_range();
            let u0 = u.value(xi);
            let mut s = 0.0;
            for &a in r {
                for &b in r {
                    let d = u.value(xi + a + b) - u.value(xi + a) - u.value(xi + b) + u0;
                    s += d * d;
                }
            }
            s
        }
        BoundMode::Asymptotic => (xi.abs().max(1) as f64).powf(-2.0 - 2.0 * u.gamma),
    }
}

/// Evaluates `‖Dū‖_ℓ²(ℤ∖ℒ)` and `‖h D²ū‖_ℓ²(ℒ_c)`, `h` being the size of
/// the element containing each site (outermost element at `±R_c`).
///
/// The far-field sum is exact up to `2R_c`; beyond that the `|ξ|^(−2γ)`
/// decay is integrated in closed form.
pub fn conjectured_bound(
    gamma: f64,
    dec: &DomainDecomposition,
    mesh: &GradedMesh,
    model: &LatticeModel,
    mode: BoundMode,
) -> Result<ConjecturedBound> {
    if !(2.0 * gamma > 1.0) {
        return Err(AtcError::IllPosed(format!(
            "far-field tail diverges for γ = {gamma}"
        )));
    }
    let u = ExactSolution::new(gamma);
    let r_c = dec.r_c();

    // ū is odd, so both sides contribute equally
    let mut far = 0.0;
    for xi in (r_c + 1)..=(2 * r_c) {
        far += first_difference_sq(&u, model, xi, mode);
    }
    let edge = first_difference_sq(&u, model, 2 * r_c, mode);
    far += edge * (2 * r_c) as f64 / (2.0 * gamma - 1.0);
    far *= 2.0;

    let mut cont = 0.0;
    for side in [1i64, -1] {
        let nodes = mesh.side(dec.r_core(), side);
        for w in nodes.windows(2) {
            let h = (w[1] - w[0]).abs() as f64;
            let (lo, hi) = (w[0].abs(), w[1].abs());
            // sites [lo, hi) belong to this element; the last element also owns R_c
            let end = if hi == r_c { hi } else { hi - 1 };
            for a in lo..=end {
                cont += h * h * second_difference_sq(&u, model, side * a, mode);
            }
        }
    }
    Ok(ConjecturedBound {
        far_field: far.sqrt(),
        continuum: cont.sqrt(),
    })
}
