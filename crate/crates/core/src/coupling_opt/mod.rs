//! The coupled optimization problem: minimize the gradient mismatch between
//! the atomistic and continuum states on the overlap subject to both
//! equilibrium equations and a mean-zero condition on each overlap component.
//!
//! With multipliers `λ_a`, `λ_c`, `η = (η₁, η₂)` the Lagrangian is
//!
//! ```text
//! Ψ = ½‖∇Iu^a − ∇u^c‖²_{L²(Ω_o)} + ⟨δℰ^a(u^a), λ_a⟩ + ⟨δℰ^c(u^c), λ_c⟩
//!     + η₁ ∫_{Ω_o ∩ ℝ⁺} (Iu^a − u^c) dx + η₂ ∫_{Ω_o ∩ ℝ⁻} (Iu^a − u^c) dx
//! ```
//!
//! and its stationarity conditions are solved by Newton's method.

mod newton;

pub use newton::{
    newton_iterate, newton_solve, solve_kkt_linear, HessianMode, IterationRecord,
    NewtonDiagnostics, NewtonOptions, NewtonRun,
};

use crate::domain_mesh::{DomainDecomposition, GradedMesh, NormMode};
use crate::error::{AtcError, Result};
use crate::linalg::CsrMatrix;
use crate::models::{
    manufacture_forces, AtomisticModel, AtomisticState, ContinuumModel, ContinuumState,
    ExternalForce, LatticeDisplacement, Triplets,
};
use crate::lattice_potential::LatticeModel;

/// Block of the five-block optimization vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    AtomisticState,
    ContinuumState,
    AtomisticAdjoint,
    ContinuumAdjoint,
    Eta,
}

impl Block {
    pub const ALL: [Block; 5] = [
        Block::AtomisticState,
        Block::ContinuumState,
        Block::AtomisticAdjoint,
        Block::ContinuumAdjoint,
        Block::Eta,
    ];
}

/// Offsets of the blocks in the flattened vector
/// `[u_a | u_c⁺ | u_c⁻ | λ_a | λ_c⁺ | λ_c⁻ | η₁ η₂]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_ua: usize,
    pub n_uc: [usize; 2],
    pub n_la: usize,
}

impl Layout {
    pub fn n_lc(&self, side: usize) -> usize {
        self.n_uc[side] - 1
    }

    pub fn ua(&self) -> usize {
        0
    }

    pub fn uc(&self, side: usize) -> usize {
        self.n_ua + if side == 0 { 0 } else { self.n_uc[0] }
    }

    pub fn la(&self) -> usize {
        self.n_ua + self.n_uc[0] + self.n_uc[1]
    }

    pub fn lc(&self, side: usize) -> usize {
        self.la() + self.n_la + if side == 0 { 0 } else { self.n_lc(0) }
    }

    pub fn eta(&self) -> usize {
        self.lc(1) + self.n_lc(1)
    }

    pub fn len(&self) -> usize {
        self.eta() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index range of a block.
    pub fn range(&self, block: Block) -> std::ops::Range<usize> {
        match block {
            Block::AtomisticState => self.ua()..self.uc(0),
            Block::ContinuumState => self.uc(0)..self.la(),
            Block::AtomisticAdjoint => self.la()..self.lc(0),
            Block::ContinuumAdjoint => self.lc(0)..self.eta(),
            Block::Eta => self.eta()..self.len(),
        }
    }

    pub fn block_of(&self, index: usize) -> Block {
        Block::ALL
            .into_iter()
            .find(|&b| self.range(b).contains(&index))
            .expect("index inside the layout")
    }
}

/// Iterate of the one-shot solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub u_a: AtomisticState,
    pub u_c: ContinuumState,
    /// One entry per ℒ_a°° test site.
    pub lambda_a: Vec<f64>,
    /// One entry per interior continuum node, per side.
    pub lambda_c: [Vec<f64>; 2],
    pub eta: [f64; 2],
}

/// Piecewise-linear interpolant of an atomistic state on the overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapFunction {
    /// Per component: outward node coordinates and nodal values.
    pub components: [(Vec<i64>, Vec<f64>); 2],
}

impl OverlapFunction {
    /// Value at `x`, `None` outside the overlap.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.components.iter().find_map(|(nodes, values)| {
            let (a, b) = (nodes[0] as f64, *nodes.last().unwrap() as f64);
            if x < a.min(b) || x > a.max(b) {
                return None;
            }
            let t = (x - a).abs();
            let e = (t.floor() as usize).min(nodes.len() - 2);
            let s = t - e as f64;
            Some(values[e] * (1.0 - s) + values[e + 1] * s)
        })
    }

    /// `∇Iu` on each overlap element, ordered outward.
    pub fn element_gradients(&self, component: usize) -> Vec<f64> {
        let (nodes, values) = &self.components[component];
        nodes
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0]) as f64)
            .collect()
    }
}

/// The assembled coupling problem: decomposition, mesh, both subproblems and
/// the index layout of the KKT system.
#[derive(Clone, Debug)]
pub struct CouplingProblem {
    pub lattice: LatticeModel,
    pub dec: DomainDecomposition,
    pub mesh: GradedMesh,
    pub forces: ExternalForce,
    pub atomistic: AtomisticModel,
    pub continuum: ContinuumModel,
    layout: Layout,
    /// Overlap elements per component, `R_a − R_core`.
    width: usize,
}

impl CouplingProblem {
    pub fn new(
        lattice: LatticeModel,
        dec: DomainDecomposition,
        mesh: GradedMesh,
        forces: ExternalForce,
    ) -> Result<Self> {
        check_overlap_refined(&dec, &mesh)?;
        let atomistic = AtomisticModel::new(&lattice, &dec, &forces);
        let continuum = ContinuumModel::new(&lattice, &dec, &mesh, &forces)?;
        let n_uc = [
            continuum.sides()[0].num_free(),
            continuum.sides()[1].num_free(),
        ];
        let width = (dec.r_a() - dec.r_core()) as usize;
        if n_uc.iter().any(|&n| n <= width) {
            return Err(AtcError::Usage("continuum region ends inside the overlap".into()));
        }
        let layout = Layout {
            n_ua: atomistic.len(),
            n_uc,
            n_la: atomistic.num_tests(),
        };
        Ok(Self {
            lattice,
            dec,
            mesh,
            forces,
            atomistic,
            continuum,
            layout,
            width,
        })
    }

    /// The manufactured-solution benchmark for a core radius.
    pub fn manufactured(r_core: i64, gamma: f64, norm: NormMode) -> Result<Self> {
        let lattice = LatticeModel::reference();
        let dec = DomainDecomposition::from_core_radius(r_core, gamma, norm, &lattice)?;
        let mesh = crate::domain_mesh::build_graded_mesh(&dec, gamma, norm);
        let forces = manufacture_forces(gamma, &dec, &lattice)?;
        Self::new(lattice, dec, mesh, forces)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn zero_state(&self) -> SystemState {
        SystemState {
            u_a: AtomisticState {
                values: vec![0.0; self.layout.n_ua],
            },
            u_c: self.continuum.zero_state(),
            lambda_a: vec![0.0; self.layout.n_la],
            lambda_c: [
                vec![0.0; self.layout.n_lc(0)],
                vec![0.0; self.layout.n_lc(1)],
            ],
            eta: [0.0; 2],
        }
    }

    pub fn to_vector(&self, z: &SystemState) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout.len());
        v.extend_from_slice(&z.u_a.values);
        v.extend_from_slice(&z.u_c.sides[0]);
        v.extend_from_slice(&z.u_c.sides[1]);
        v.extend_from_slice(&z.lambda_a);
        v.extend_from_slice(&z.lambda_c[0]);
        v.extend_from_slice(&z.lambda_c[1]);
        v.extend_from_slice(&z.eta);
        v
    }

    pub fn from_vector(&self, v: &[f64]) -> Result<SystemState> {
        let l = &self.layout;
        if v.len() != l.len() {
            return Err(AtcError::Usage(format!(
                "vector has length {}, layout needs {}",
                v.len(),
                l.len()
            )));
        }
        Ok(SystemState {
            u_a: AtomisticState {
                values: v[l.ua()..l.uc(0)].to_vec(),
            },
            u_c: ContinuumState {
                sides: [v[l.uc(0)..l.uc(1)].to_vec(), v[l.uc(1)..l.la()].to_vec()],
            },
            lambda_a: v[l.la()..l.lc(0)].to_vec(),
            lambda_c: [v[l.lc(0)..l.lc(1)].to_vec(), v[l.lc(1)..l.eta()].to_vec()],
            eta: [v[l.eta()], v[l.eta() + 1]],
        })
    }

    fn check_state(&self, z: &SystemState) -> Result<()> {
        let l = &self.layout;
        let ok = z.u_a.values.len() == l.n_ua
            && z.u_c.sides[0].len() == l.n_uc[0]
            && z.u_c.sides[1].len() == l.n_uc[1]
            && z.lambda_a.len() == l.n_la
            && z.lambda_c[0].len() == l.n_lc(0)
            && z.lambda_c[1].len() == l.n_lc(1);
        if ok {
            Ok(())
        } else {
            Err(AtcError::Usage("system state does not match the problem layout".into()))
        }
    }

    /// Sign of overlap component `s` (positive side first).
    fn sign(side: usize) -> i64 {
        if side == 0 {
            1
        } else {
            -1
        }
    }

    /// Index into `u_a` of the `e`-th overlap site (outward) of a component.
    fn ua_index(&self, side: usize, e: usize) -> usize {
        let xi = Self::sign(side) * (self.dec.r_core() + e as i64);
        (xi + self.dec.r_a()) as usize
    }

    /// Trapezoid weights of the overlap nodes (unit spacing).
    fn trapezoid_weight(&self, e: usize) -> f64 {
        if e == 0 || e == self.width {
            0.5
        } else {
            1.0
        }
    }

    pub fn interpolate_atomistic(&self, u_a: &AtomisticState) -> OverlapFunction {
        let component = |side: usize| {
            let nodes: Vec<i64> = (0..=self.width)
                .map(|e| Self::sign(side) * (self.dec.r_core() + e as i64))
                .collect();
            let values = (0..=self.width)
                .map(|e| u_a.values[self.ua_index(side, e)])
                .collect();
            (nodes, values)
        };
        OverlapFunction {
            components: [component(0), component(1)],
        }
    }

    /// Per overlap element: `(Δu_a − Δu_c)` along the outward direction.
    fn mismatches(&self, u_a: &AtomisticState, u_c: &ContinuumState, side: usize) -> Vec<f64> {
        let c = &u_c.sides[side];
        (0..self.width)
            .map(|e| {
                let da = u_a.values[self.ua_index(side, e + 1)] - u_a.values[self.ua_index(side, e)];
                da - (c[e + 1] - c[e])
            })
            .collect()
    }

    /// `½ Σ_T |∇Iu_a − ∇u_c|² h_T` over both overlap components.
    pub fn objective(&self, u_a: &AtomisticState, u_c: &ContinuumState) -> f64 {
        (0..2)
            .map(|s| 0.5 * self.mismatches(u_a, u_c, s).iter().map(|r| r * r).sum::<f64>())
            .sum()
    }

    /// `∫ (Iu_a − u_c) dx` on `[R_core, R_a]` and `[−R_a, −R_core]`.
    pub fn mean_zero_constraints(&self, u_a: &AtomisticState, u_c: &ContinuumState) -> [f64; 2] {
        let component = |side: usize| {
            (0..=self.width)
                .map(|e| {
                    self.trapezoid_weight(e)
                        * (u_a.values[self.ua_index(side, e)] - u_c.sides[side][e])
                })
                .sum()
        };
        [component(0), component(1)]
    }

    /// Scalar Lagrangian Ψ.
    pub fn lagrangian(&self, z: &SystemState) -> Result<f64> {
        self.check_state(z)?;
        let ra = self.atomistic.residual(&z.u_a)?;
        let rc = self.continuum.residual(&z.u_c)?;
        let c = self.mean_zero_constraints(&z.u_a, &z.u_c);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        Ok(self.objective(&z.u_a, &z.u_c)
            + dot(&ra, &z.lambda_a)
            + dot(&rc[0], &z.lambda_c[0])
            + dot(&rc[1], &z.lambda_c[1])
            + z.eta[0] * c[0]
            + z.eta[1] * c[1])
    }

    fn lambda_a_full(&self, z: &SystemState) -> Vec<f64> {
        let mut w = vec![0.0; self.layout.n_ua];
        for (i, l) in self.atomistic.test_indices().zip(&z.lambda_a) {
            w[i] = *l;
        }
        w
    }

    fn lambda_c_full(z: &SystemState, side: usize) -> Vec<f64> {
        let mut w = Vec::with_capacity(z.lambda_c[side].len() + 1);
        w.push(0.0);
        w.extend_from_slice(&z.lambda_c[side]);
        w
    }

    /// Objective Hessian and constraint rows/columns (state independent).
    fn constant_triplets(&self, out: &mut Triplets) {
        let l = &self.layout;
        for side in 0..2 {
            for e in 0..self.width {
                // r_e = a_{e+1} − a_e − c_{e+1} + c_e
                let v = [
                    (self.ua_index(side, e + 1), 1.0),
                    (self.ua_index(side, e), -1.0),
                    (l.uc(side) + e + 1, -1.0),
                    (l.uc(side) + e, 1.0),
                ];
                for &(i, a) in &v {
                    for &(j, b) in &v {
                        out.push((i, j, a * b));
                    }
                }
            }
            let row = l.eta() + side;
            for e in 0..=self.width {
                let w = self.trapezoid_weight(e);
                for (col, val) in [(self.ua_index(side, e), w), (l.uc(side) + e, -w)] {
                    out.push((row, col, val));
                    out.push((col, row, val));
                }
            }
        }
    }

    /// ∇Ψ as a flat vector.
    pub fn lagrangian_gradient(&self, z: &SystemState) -> Result<Vec<f64>> {
        self.check_state(z)?;
        let l = &self.layout;
        let mut g = vec![0.0; l.len()];

        // objective and mean-zero terms
        for side in 0..2 {
            for (e, r) in self.mismatches(&z.u_a, &z.u_c, side).into_iter().enumerate() {
                g[self.ua_index(side, e + 1)] += r;
                g[self.ua_index(side, e)] -= r;
                g[l.uc(side) + e + 1] -= r;
                g[l.uc(side) + e] += r;
            }
            for e in 0..=self.width {
                let w = self.trapezoid_weight(e) * z.eta[side];
                g[self.ua_index(side, e)] += w;
                g[l.uc(side) + e] -= w;
            }
        }

        // adjoint-weighted Hessian actions
        let wa = self.lambda_a_full(z);
        for (i, j, v) in self.atomistic.hessian(&z.u_a, 0)? {
            g[l.ua() + i] += v * wa[j];
        }
        for side in 0..2 {
            let wc = Self::lambda_c_full(z, side);
            for (i, j, v) in self.continuum.hessian(&z.u_c, side, 0)? {
                g[l.uc(side) + i] += v * wc[j];
            }
        }

        // equilibrium residuals and constraints
        let ra = self.atomistic.residual(&z.u_a)?;
        g[l.la()..l.lc(0)].copy_from_slice(&ra);
        let rc = self.continuum.residual(&z.u_c)?;
        g[l.lc(0)..l.lc(1)].copy_from_slice(&rc[0]);
        g[l.lc(1)..l.eta()].copy_from_slice(&rc[1]);
        let c = self.mean_zero_constraints(&z.u_a, &z.u_c);
        g[l.eta()] = c[0];
        g[l.eta() + 1] = c[1];
        Ok(g)
    }

    /// Assembles ∇Ψ and ∇²Ψ.
    pub fn lagrangian_hessian(&self, z: &SystemState, mode: HessianMode) -> Result<KktSystem> {
        let gradient = self.lagrangian_gradient(z)?;
        let l = &self.layout;
        let mut t: Triplets = Vec::new();
        self.constant_triplets(&mut t);

        // atomistic: adjoint rows B_a and the third-derivative term of A
        let test_row: Vec<Option<usize>> = {
            let mut rows = vec![None; l.n_ua];
            for (k, i) in self.atomistic.test_indices().enumerate() {
                rows[i] = Some(l.la() + k);
            }
            rows
        };
        for (i, j, v) in self.atomistic.hessian(&z.u_a, 0)? {
            if let Some(row) = test_row[i] {
                t.push((row, l.ua() + j, v));
                t.push((l.ua() + j, row, v));
            }
        }
        if mode == HessianMode::FullNewton {
            let wa = self.lambda_a_full(z);
            t.extend(self.atomistic.third_contraction(&z.u_a, &wa, l.ua())?);
        }

        for side in 0..2 {
            for (i, j, v) in self.continuum.hessian(&z.u_c, side, 0)? {
                if i >= 1 {
                    let row = l.lc(side) + i - 1;
                    t.push((row, l.uc(side) + j, v));
                    t.push((l.uc(side) + j, row, v));
                }
            }
            if mode == HessianMode::FullNewton {
                let wc = Self::lambda_c_full(z, side);
                t.extend(self.continuum.third_contraction(&z.u_c, side, &wc, l.uc(side))?);
            }
        }

        let n = l.len();
        Ok(KktSystem {
            gradient,
            hessian: CsrMatrix::from_triplets(n, n, t),
            layout: l.clone(),
        })
    }

    /// Spatial coordinate and tie-break rank of every unknown; sorting by this
    /// key yields a banded KKT matrix.
    pub fn ordering(&self) -> Vec<usize> {
        let l = &self.layout;
        let mut keys: Vec<(f64, u8, usize)> = Vec::with_capacity(l.len());
        for i in 0..l.n_ua {
            keys.push(((i as i64 - self.dec.r_a()) as f64, 0, l.ua() + i));
        }
        for (k, xi) in self.atomistic.test_sites().enumerate() {
            keys.push((xi as f64, 1, l.la() + k));
        }
        for side in 0..2 {
            let nodes = self.continuum.sides()[side].nodes();
            for j in 0..l.n_uc[side] {
                keys.push((nodes[j] as f64, 2, l.uc(side) + j));
            }
            for j in 0..l.n_lc(side) {
                keys.push((nodes[j + 1] as f64, 3, l.lc(side) + j));
            }
            let mid = Self::sign(side) as f64 * (self.dec.r_core() + self.dec.r_a()) as f64 / 2.0;
            keys.push((mid, 4, l.eta() + side));
        }
        keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        keys.into_iter().map(|k| k.2).collect()
    }

    /// Composite displacement on ℒ: `u_a` for `|ξ| ≤ R_a`, the continuum
    /// interpolant beyond, zero at `±R_c`.
    pub fn assemble_atc_solution(&self, z: &SystemState) -> LatticeDisplacement {
        let (r_a, r_c) = (self.dec.r_a(), self.dec.r_c());
        let mut out = LatticeDisplacement::zeros(-r_c..=r_c);
        let base = r_c;
        for xi in -r_a..=r_a {
            out.values[(xi + base) as usize] = z.u_a.get(r_a, xi);
        }
        for side in 0..2 {
            let sign = Self::sign(side);
            let nodes = self.continuum.sides()[side].nodes();
            let vals = &z.u_c.sides[side];
            let at = |i: usize| vals.get(i).copied().unwrap_or(0.0);
            // walk elements outward from R_a
            let start = (r_a - self.dec.r_core()) as usize;
            for e in start..nodes.len() - 1 {
                let (x0, x1) = (nodes[e] * sign, nodes[e + 1] * sign);
                let (v0, v1) = (at(e), at(e + 1));
                for t in (x0 + 1)..=x1 {
                    let s = (t - x0) as f64 / (x1 - x0) as f64;
                    out.values[(sign * t + base) as usize] = v0 * (1.0 - s) + v1 * s;
                }
            }
        }
        out
    }
}

fn check_overlap_refined(dec: &DomainDecomposition, mesh: &GradedMesh) -> Result<()> {
    let nodes = mesh.nodes();
    for xi in dec.lattice_atomistic() {
        if nodes.binary_search(&xi).is_err() {
            return Err(AtcError::Usage(format!(
                "mesh is not fully refined on the atomistic region (missing node {xi})"
            )));
        }
    }
    if nodes.first() != Some(&-dec.r_c()) || nodes.last() != Some(&dec.r_c()) {
        return Err(AtcError::Usage("mesh does not span [−R_c, R_c]".into()));
    }
    Ok(())
}

/// Gradient and Hessian of the Lagrangian at one iterate.
#[derive(Clone, Debug)]
pub struct KktSystem {
    pub gradient: Vec<f64>,
    pub hessian: CsrMatrix,
    pub layout: Layout,
}

impl KktSystem {
    /// Largest absolute entry of the `(row, col)` block of the Hessian.
    pub fn block_max_abs(&self, row: Block, col: Block) -> f64 {
        let (rr, cr) = (self.layout.range(row), self.layout.range(col));
        rr.flat_map(|i| self.hessian.row(i))
            .filter(|(j, _)| cr.contains(j))
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    /// Largest entry among the blocks that vanish by structure.
    pub fn structural_zero_max(&self) -> f64 {
        use Block::*;
        let mut m = 0.0f64;
        for (i, j, v) in self.hessian.iter() {
            let (a, b) = (self.layout.block_of(i), self.layout.block_of(j));
            let zero = matches!(
                (a, b),
                (AtomisticAdjoint | ContinuumAdjoint | Eta, AtomisticAdjoint | ContinuumAdjoint | Eta)
                    | (AtomisticState, ContinuumAdjoint)
                    | (ContinuumAdjoint, AtomisticState)
                    | (ContinuumState, AtomisticAdjoint)
                    | (AtomisticAdjoint, ContinuumState)
            );
            if zero {
                m = m.max(v.abs());
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CouplingProblem {
        CouplingProblem::manufactured(4, 1.5, NormMode::Energy).unwrap()
    }

    #[test]
    fn layout_is_contiguous() {
        let p = small();
        let l = p.layout();
        let mut end = 0;
        for b in Block::ALL {
            let r = l.range(b);
            assert_eq!(r.start, end);
            end = r.end;
        }
        assert_eq!(end, l.len());
        assert_eq!(l.n_ua, 17);
        assert_eq!(l.n_la, 9);
    }

    #[test]
    fn vector_round_trip() {
        let p = small();
        let v: Vec<f64> = (0..p.layout().len()).map(|i| i as f64).collect();
        let z = p.from_vector(&v).unwrap();
        assert_eq!(p.to_vector(&z), v);
        assert!(p.from_vector(&v[1..]).is_err());
    }

    #[test]
    fn ordering_is_a_permutation() {
        let p = small();
        let mut perm = p.ordering();
        perm.sort_unstable();
        assert_eq!(perm, (0..p.layout().len()).collect::<Vec<_>>());
    }

    #[test]
    fn unrefined_mesh_is_rejected() {
        let p = small();
        let nodes: Vec<i64> = p.mesh.nodes().iter().copied().filter(|&x| x != 5).collect();
        let mesh = GradedMesh::from_nodes(nodes).unwrap();
        assert!(matches!(
            CouplingProblem::new(p.lattice.clone(), p.dec.clone(), mesh, p.forces.clone()),
            Err(AtcError::Usage(_))
        ));
    }

    #[test]
    fn overlap_function_on_negative_component() {
        let p = small();
        let mut z = p.zero_state();
        for (i, v) in z.u_a.values.iter_mut().enumerate() {
            *v = (i as f64 - 8.0) * 0.5;
        }
        let f = p.interpolate_atomistic(&z.u_a);
        assert_eq!(f.value_at(-5.5), Some(-2.75));
        assert_eq!(f.value_at(6.0), Some(3.0));
        assert_eq!(f.value_at(0.0), None);
        assert!(f.element_gradients(1).iter().all(|&g| g == 0.5));
    }
}
