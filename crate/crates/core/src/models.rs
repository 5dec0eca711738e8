//! Atomistic and Cauchy–Born continuum subproblems, the manufactured exact
//! solution and the external forces that equilibrate it.
//!
//! Both energies are sums of two-point terms `e(u_k − u_i)`: lattice bonds on
//! the atomistic side and P1 elements on the continuum side. Gradients,
//! Hessians and adjoint contractions of third derivatives are assembled from
//! the scalar derivatives of each term.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use crate::domain_mesh::{DomainDecomposition, GradedMesh};
use crate::error::{AtcError, Result};
use crate::lattice_potential::{
    cauchy_born_w, cauchy_born_w_d1, cauchy_born_w_d2, cauchy_born_w_d3, LatticeModel,
    PairPotential,
};

/// Sparse matrix entries `(row, col, value)`; duplicates are summed.
pub type Triplets = Vec<(usize, usize, f64)>;

/// A scalar field on lattice sites.
pub trait LatticeField {
    fn value(&self, xi: i64) -> f64;

    /// Sites where the field is stored, `None` for closed-form fields on ℤ.
    fn support(&self) -> Option<(i64, i64)> {
        None
    }
}

/// `ū(ξ) = amplitude·(1 + ξ²)^(−γ/2)·ξ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactSolution {
    pub gamma: f64,
    pub amplitude: f64,
}

impl ExactSolution {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            amplitude: 0.1,
        }
    }
}

impl LatticeField for ExactSolution {
    fn value(&self, xi: i64) -> f64 {
        let x = xi as f64;
        self.amplitude * (1.0 + x * x).powf(-self.gamma / 2.0) * x
    }
}

pub fn exact_solution(xi: i64, gamma: f64) -> f64 {
    ExactSolution::new(gamma).value(xi)
}

/// Values on a contiguous run of sites, zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeDisplacement {
    pub first: i64,
    pub values: Vec<f64>,
}

impl LatticeDisplacement {
    pub fn zeros(sites: RangeInclusive<i64>) -> Self {
        let first = *sites.start();
        let n = (sites.end() - first + 1).max(0) as usize;
        Self {
            first,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(sites: RangeInclusive<i64>, f: impl Fn(i64) -> f64) -> Self {
        let first = *sites.start();
        Self {
            first,
            values: sites.map(f).collect(),
        }
    }

    pub fn last(&self) -> i64 {
        self.first + self.values.len() as i64 - 1
    }

    pub fn sites(&self) -> RangeInclusive<i64> {
        self.first..=self.last()
    }
}

impl LatticeField for LatticeDisplacement {
    fn value(&self, xi: i64) -> f64 {
        let i = xi - self.first;
        if i >= 0 && (i as usize) < self.values.len() {
            self.values[i as usize]
        } else {
            0.0
        }
    }

    fn support(&self) -> Option<(i64, i64)> {
        Some((self.first, self.last()))
    }
}

/// External force per lattice site, zero outside the stored sites.
pub type ExternalForce = LatticeDisplacement;

/// `∂/∂u_j` of the force-free infinite-lattice energy.
pub fn lattice_gradient_at(model: &LatticeModel, j: i64, u: &impl Fn(i64) -> f64) -> Result<f64> {
    let mut g = 0.0;
    for bond in model.site_bonds() {
        let (a, b) = bond.endpoints();
        // owners whose bond has j as its right or left endpoint
        for (owner, sign) in [(j - b, 1.0), (j - a, -1.0)] {
            let r = bond.rest + u(owner + b) - u(owner + a);
            g += sign * model.potential.bond(r)?[1];
        }
    }
    Ok(g)
}

/// Forces on ℒ that make the exact solution an equilibrium of
/// `ℰ(u) − Σ f(ξ)u(ξ)`, i.e. `f(ξ) = ∂ℰ/∂u_ξ` of the force-free energy at ū.
pub fn manufacture_forces(
    gamma: f64,
    dec: &DomainDecomposition,
    model: &LatticeModel,
) -> Result<ExternalForce> {
    let exact = ExactSolution::new(gamma);
    let u = |xi: i64| exact.value(xi);
    let values = dec
        .lattice_full()
        .map(|xi| lattice_gradient_at(model, xi, &u))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExternalForce {
        first: -dec.r_c(),
        values,
    })
}

/// Two-point energy term `e(u[k] − u[i])`.
#[derive(Clone, Copy, Debug)]
struct PairTerm {
    i: usize,
    k: usize,
}

fn accumulate_gradient(grad: &mut [f64], t: PairTerm, d1: f64) {
    grad[t.k] += d1;
    grad[t.i] -= d1;
}

fn push_pair_block(out: &mut Triplets, t: PairTerm, c: f64, offset: usize) {
    let (i, k) = (t.i + offset, t.k + offset);
    out.push((i, i, c));
    out.push((k, k, c));
    out.push((i, k, -c));
    out.push((k, i, -c));
}

/// Displacements on ℒ_a, index `ξ + R_a`.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomisticState {
    pub values: Vec<f64>,
}

impl AtomisticState {
    pub fn get(&self, r_a: i64, xi: i64) -> f64 {
        self.values[(xi + r_a) as usize]
    }
}

#[derive(Clone, Debug)]
struct AtomisticBond {
    term: PairTerm,
    rest: f64,
    potential: PairPotential,
}

/// Atomistic subproblem on Ω_a.
///
/// The energy sums site energies over ℒ_a° and the external work over
/// ℒ_a°°. Equilibrium is imposed for variations supported in ℒ_a°°, whose
/// bonds all belong to sites of ℒ_a°; the remaining sites of ℒ_a act as
/// virtual controls.
#[derive(Clone, Debug)]
pub struct AtomisticModel {
    r_a: i64,
    test_sites: RangeInclusive<i64>,
    forces: Vec<f64>,
    bonds: Vec<AtomisticBond>,
}

impl AtomisticModel {
    pub fn new(model: &LatticeModel, dec: &DomainDecomposition, forces: &ExternalForce) -> Self {
        Self::with_site_potentials(model, dec, forces, &BTreeMap::new())
    }

    /// Like [`AtomisticModel::new`], with per-site potentials overriding the
    /// lattice default (bonds use the potential of their owning site).
    pub fn with_site_potentials(
        model: &LatticeModel,
        dec: &DomainDecomposition,
        forces: &ExternalForce,
        site_potentials: &BTreeMap<i64, PairPotential>,
    ) -> Self {
        let r_a = dec.r_a();
        let idx = |xi: i64| (xi + r_a) as usize;
        let mut bonds = Vec::new();
        for site in dec.atomistic_interior() {
            let potential = site_potentials
                .get(&site)
                .copied()
                .unwrap_or(model.potential);
            for bond in model.site_bonds() {
                let (a, b) = bond.endpoints();
                bonds.push(AtomisticBond {
                    term: PairTerm {
                        i: idx(site + a),
                        k: idx(site + b),
                    },
                    rest: bond.rest,
                    potential,
                });
            }
        }
        let test_sites = dec.atomistic_double_interior();
        let forces = test_sites.clone().map(|xi| forces.value(xi)).collect();
        Self {
            r_a,
            test_sites,
            forces,
            bonds,
        }
    }

    pub fn r_a(&self) -> i64 {
        self.r_a
    }

    /// Number of unknowns, `#ℒ_a`.
    pub fn len(&self) -> usize {
        (2 * self.r_a + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn test_sites(&self) -> RangeInclusive<i64> {
        self.test_sites.clone()
    }

    /// Indices into the state vector of the equilibrium test directions.
    pub fn test_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.test_sites.clone().map(|xi| (xi + self.r_a) as usize)
    }

    pub fn num_tests(&self) -> usize {
        self.forces.len()
    }

    fn check(&self, u: &AtomisticState) -> Result<()> {
        if u.values.len() != self.len() {
            return Err(AtcError::Usage(format!(
                "atomistic state has {} values, expected {}",
                u.values.len(),
                self.len()
            )));
        }
        Ok(())
    }

    fn bond_derivatives(&self, u: &AtomisticState, b: &AtomisticBond) -> Result<[f64; 4]> {
        b.potential
            .bond(b.rest + u.values[b.term.k] - u.values[b.term.i])
    }

    pub fn energy(&self, u: &AtomisticState) -> Result<f64> {
        self.check(u)?;
        let mut e = 0.0;
        for b in &self.bonds {
            e += self.bond_derivatives(u, b)?[0] - b.potential.derivatives(b.rest)[0];
        }
        for (xi, f) in self.test_sites.clone().zip(&self.forces) {
            e -= f * u.get(self.r_a, xi);
        }
        Ok(e)
    }

    /// Derivatives with respect to every value on ℒ_a.
    pub fn gradient(&self, u: &AtomisticState) -> Result<Vec<f64>> {
        self.check(u)?;
        let mut g = vec![0.0; self.len()];
        for b in &self.bonds {
            accumulate_gradient(&mut g, b.term, self.bond_derivatives(u, b)?[1]);
        }
        for (i, f) in self.test_indices().zip(&self.forces) {
            g[i] -= f;
        }
        Ok(g)
    }

    /// Gradient restricted to the ℒ_a°° test directions.
    pub fn residual(&self, u: &AtomisticState) -> Result<Vec<f64>> {
        let g = self.gradient(u)?;
        Ok(self.test_indices().map(|i| g[i]).collect())
    }

    /// Full Hessian on ℒ_a, shifted by `offset` in both indices.
    pub fn hessian(&self, u: &AtomisticState, offset: usize) -> Result<Triplets> {
        self.check(u)?;
        let mut out = Vec::with_capacity(4 * self.bonds.len());
        for b in &self.bonds {
            push_pair_block(&mut out, b.term, self.bond_derivatives(u, b)?[2], offset);
        }
        Ok(out)
    }

    /// `Σ_j w_j ∂³ℰ^a/∂u_j∂u_k∂u_l` for `w` indexed by ℒ_a.
    pub fn third_contraction(
        &self,
        u: &AtomisticState,
        weights: &[f64],
        offset: usize,
    ) -> Result<Triplets> {
        self.check(u)?;
        let mut out = Vec::with_capacity(4 * self.bonds.len());
        for b in &self.bonds {
            let w = weights[b.term.k] - weights[b.term.i];
            if w != 0.0 {
                push_pair_block(&mut out, b.term, self.bond_derivatives(u, b)?[3] * w, offset);
            }
        }
        Ok(out)
    }
}

/// Nodal values on the two continuum components, ordered outward from
/// `±R_core`; the Dirichlet node `±R_c` is not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuumState {
    /// `[positive side, negative side]`.
    pub sides: [Vec<f64>; 2],
}

#[derive(Clone, Debug)]
pub struct ContinuumSide {
    /// Outward node coordinates, ending at `±R_c`.
    nodes: Vec<i64>,
    /// `∫(If)·N_i dx` for each free node.
    loads: Vec<f64>,
}

impl ContinuumSide {
    pub fn nodes(&self) -> &[i64] {
        &self.nodes
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn num_free(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Exact `∫ (If)·N dx` for every hat function of an outward node list.
fn load_vector(nodes: &[i64], forces: &ExternalForce) -> Vec<f64> {
    let mut loads = vec![0.0; nodes.len()];
    for (e, w) in nodes.windows(2).enumerate() {
        let (lo, hi) = (w[0].min(w[1]), w[0].max(w[1]));
        let len = (hi - lo) as f64;
        // hat of node e vanishes at w[1], hat of node e+1 vanishes at w[0]
        let hat_e = |x: i64| (w[1] - x) as f64 / (w[1] - w[0]) as f64;
        let mut acc = [0.0, 0.0];
        for k in lo..hi {
            let (a, b) = (forces.value(k), forces.value(k + 1));
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let (c0, d0) = (hat_e(k), hat_e(k + 1));
            let (c1, d1) = (1.0 - c0, 1.0 - d0);
            acc[0] += (2.0 * a * c0 + a * d0 + b * c0 + 2.0 * b * d0) / 6.0;
            acc[1] += (2.0 * a * c1 + a * d1 + b * c1 + 2.0 * b * d1) / 6.0;
        }
        debug_assert!(len > 0.0);
        loads[e] += acc[0];
        loads[e + 1] += acc[1];
    }
    loads.pop();
    loads
}

/// Cauchy–Born P1 energy on Ω_c = [−R_c, −R_core] ∪ [R_core, R_c].
///
/// Equilibrium is imposed at interior nodes; the nodes at `±R_core` are
/// virtual controls and `u = 0` at `±R_c`.
#[derive(Clone, Debug)]
pub struct ContinuumModel {
    lattice: LatticeModel,
    sides: [ContinuumSide; 2],
}

impl ContinuumModel {
    pub fn new(
        model: &LatticeModel,
        dec: &DomainDecomposition,
        mesh: &GradedMesh,
        forces: &ExternalForce,
    ) -> Result<Self> {
        let build = |sign: i64| -> Result<ContinuumSide> {
            let nodes = mesh.side(dec.r_core(), sign);
            if nodes.len() < 2 || nodes[0] != sign * dec.r_core() {
                return Err(AtcError::Usage(
                    "mesh does not have a node on the core boundary".into(),
                ));
            }
            let loads = load_vector(&nodes, forces);
            Ok(ContinuumSide { nodes, loads })
        };
        Ok(Self {
            lattice: model.clone(),
            sides: [build(1)?, build(-1)?],
        })
    }

    pub fn sides(&self) -> &[ContinuumSide; 2] {
        &self.sides
    }

    pub fn zero_state(&self) -> ContinuumState {
        ContinuumState {
            sides: [
                vec![0.0; self.sides[0].num_free()],
                vec![0.0; self.sides[1].num_free()],
            ],
        }
    }

    fn check(&self, u: &ContinuumState) -> Result<()> {
        for (s, v) in self.sides.iter().zip(&u.sides) {
            if v.len() != s.num_free() {
                return Err(AtcError::Usage(format!(
                    "continuum state has {} nodal values, expected {}",
                    v.len(),
                    s.num_free()
                )));
            }
        }
        Ok(())
    }

    /// `[e, de/dΔ, d²e/dΔ², d³e/dΔ³]` for element `e` of `side`, `Δ = u_{e+1} − u_e`.
    fn element(&self, side: usize, e: usize, u: &[f64]) -> Result<[f64; 4]> {
        let nodes = &self.sides[side].nodes;
        let dx = (nodes[e + 1] - nodes[e]) as f64;
        let h = dx.abs();
        let at = |i: usize| if i < u.len() { u[i] } else { 0.0 };
        let g = (at(e + 1) - at(e)) / dx;
        let m = &self.lattice;
        Ok([
            h * cauchy_born_w(g, m)?,
            h / dx * cauchy_born_w_d1(g, m)?,
            h / (dx * dx) * cauchy_born_w_d2(g, m)?,
            h / (dx * dx * dx) * cauchy_born_w_d3(g, m)?,
        ])
    }

    fn num_elements(&self, side: usize) -> usize {
        self.sides[side].nodes.len() - 1
    }

    pub fn energy(&self, u: &ContinuumState) -> Result<f64> {
        self.check(u)?;
        let mut e = 0.0;
        for (s, side) in self.sides.iter().enumerate() {
            for el in 0..self.num_elements(s) {
                e += self.element(s, el, &u.sides[s])?[0];
            }
            e -= side
                .loads
                .iter()
                .zip(&u.sides[s])
                .map(|(f, v)| f * v)
                .sum::<f64>();
        }
        Ok(e)
    }

    /// Derivatives with respect to every free nodal value.
    pub fn gradient(&self, u: &ContinuumState) -> Result<ContinuumState> {
        self.check(u)?;
        let mut out = self.zero_state();
        for (s, side) in self.sides.iter().enumerate() {
            let n = side.num_free();
            let mut g = vec![0.0; n + 1];
            for el in 0..self.num_elements(s) {
                let d = self.element(s, el, &u.sides[s])?;
                accumulate_gradient(&mut g, PairTerm { i: el, k: el + 1 }, d[1]);
            }
            g.truncate(n);
            for (gi, f) in g.iter_mut().zip(&side.loads) {
                *gi -= f;
            }
            out.sides[s] = g;
        }
        Ok(out)
    }

    /// Gradient at interior nodes (all free nodes except `±R_core`), per side.
    pub fn residual(&self, u: &ContinuumState) -> Result<[Vec<f64>; 2]> {
        let g = self.gradient(u)?;
        let [a, b] = g.sides;
        Ok([a[1..].to_vec(), b[1..].to_vec()])
    }

    fn pair_triplets(
        &self,
        side: usize,
        u: &[f64],
        offset: usize,
        coefficient: impl Fn(usize, &[f64; 4]) -> f64,
    ) -> Result<Triplets> {
        let n = self.sides[side].num_free();
        let mut out = Vec::with_capacity(4 * n);
        for el in 0..self.num_elements(side) {
            let d = self.element(side, el, u)?;
            let c = coefficient(el, &d);
            if c == 0.0 {
                continue;
            }
            push_pair_block(&mut out, PairTerm { i: el, k: el + 1 }, c, offset);
        }
        // drop entries that touch the Dirichlet node
        out.retain(|&(i, j, _)| i - offset < n && j - offset < n);
        Ok(out)
    }

    /// Hessian of one side, indices shifted by `offset`.
    pub fn hessian(&self, u: &ContinuumState, side: usize, offset: usize) -> Result<Triplets> {
        self.check(u)?;
        self.pair_triplets(side, &u.sides[side], offset, |_, d| d[2])
    }

    /// `Σ_j w_j ∂³ℰ^c/∂u_j∂u_k∂u_l` on one side; `w` indexed by free nodes.
    pub fn third_contraction(
        &self,
        u: &ContinuumState,
        side: usize,
        weights: &[f64],
        offset: usize,
    ) -> Result<Triplets> {
        self.check(u)?;
        let at = |i: usize| weights.get(i).copied().unwrap_or(0.0);
        self.pair_triplets(side, &u.sides[side], offset, |el, d| {
            d[3] * (at(el + 1) - at(el))
        })
    }

    /// Piecewise-linear interpolant of one side at `x` (zero beyond `±R_c`).
    pub fn interpolate(&self, u: &ContinuumState, side: usize, x: f64) -> Option<f64> {
        interpolate_outward(&self.sides[side].nodes, &u.sides[side], x)
    }
}

/// Interpolates nodal values on an outward node list (last node has value 0).
pub(crate) fn interpolate_outward(nodes: &[i64], values: &[f64], x: f64) -> Option<f64> {
    let at = |i: usize| values.get(i).copied().unwrap_or(0.0);
    let sign = if nodes.len() > 1 && nodes[1] < nodes[0] { -1.0 } else { 1.0 };
    let t = sign * x;
    let key = |i: usize| sign * nodes[i] as f64;
    if t < key(0) || t > key(nodes.len() - 1) {
        return None;
    }
    let e = nodes.partition_point(|&n| sign * (n as f64) <= t);
    if e == 0 {
        return Some(at(0));
    }
    if e >= nodes.len() {
        return Some(at(nodes.len() - 1));
    }
    let (x0, x1) = (key(e - 1), key(e));
    let s = (t - x0) / (x1 - x0);
    Some(at(e - 1) * (1.0 - s) + at(e) * s)
}
