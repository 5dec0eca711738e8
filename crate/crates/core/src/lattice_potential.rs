//! Reference lattice, Lennard-Jones pair potential, site energy and the
//! Cauchy–Born strain energy density for a one-dimensional chain.
//!
//! The site energy of atom `ξ` is written in terms of finite differences
//! `D_ρ u(ξ) = u(ξ + ρ) − u(ξ)`:
//!
//! ```text
//! V(Du) = φ(F + D₁u) + φ(2F + D₁u − D₋₁u) − φ(F) − φ(2F)
//! ```
//!
//! so that each site owns the bond to its right neighbour and the
//! next-nearest bond spanning it. When the interaction range only contains
//! `±1` the second term is absent.

use crate::error::{AtcError, Result};

/// Bond lengths below this value are rejected instead of evaluated.
pub const BOND_GUARD: f64 = 0.5;

/// Lennard-Jones potential `φ(r) = ε[(r₀/r)¹² − 2(r₀/r)⁶]`, minimum `−ε` at `r₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairPotential {
    pub well_depth: f64,
    pub equilibrium_distance: f64,
}

impl Default for PairPotential {
    fn default() -> Self {
        Self {
            well_depth: 1.0,
            equilibrium_distance: 1.0,
        }
    }
}

impl PairPotential {
    pub fn new(well_depth: f64, equilibrium_distance: f64) -> Result<Self> {
        if !(well_depth.is_finite() && equilibrium_distance.is_finite() && equilibrium_distance > 0.0)
        {
            return Err(AtcError::Domain(format!(
                "invalid Lennard-Jones parameters (ε = {well_depth}, r₀ = {equilibrium_distance})"
            )));
        }
        Ok(Self {
            well_depth,
            equilibrium_distance,
        })
    }

    /// `[φ, φ′, φ″, φ‴]` at `r`, no argument checks.
    #[inline]
    pub(crate) fn derivatives(&self, r: f64) -> [f64; 4] {
        let s = self.equilibrium_distance / r;
        let s6 = s.powi(6);
        let s12 = s6 * s6;
        let e = self.well_depth;
        [
            e * (s12 - 2.0 * s6),
            12.0 * e * (s6 - s12) / r,
            e * (156.0 * s12 - 84.0 * s6) / (r * r),
            e * (672.0 * s6 - 2184.0 * s12) / (r * r * r),
        ]
    }

    /// Derivatives at a deformed bond length, applying [`BOND_GUARD`].
    #[inline]
    pub(crate) fn bond(&self, r: f64) -> Result<[f64; 4]> {
        if !(r >= BOND_GUARD) {
            return Err(AtcError::Configuration { length: r });
        }
        Ok(self.derivatives(r))
    }

    fn checked(&self, r: f64, order: usize) -> Result<f64> {
        if !(r.is_finite() && r > 0.0) {
            return Err(AtcError::Domain(format!(
                "pair potential evaluated at r = {r}"
            )));
        }
        Ok(self.derivatives(r)[order])
    }

    pub fn phi(&self, r: f64) -> Result<f64> {
        self.checked(r, 0)
    }

    pub fn phi_d1(&self, r: f64) -> Result<f64> {
        self.checked(r, 1)
    }

    pub fn phi_d2(&self, r: f64) -> Result<f64> {
        self.checked(r, 2)
    }

    pub fn phi_d3(&self, r: f64) -> Result<f64> {
        self.checked(r, 3)
    }
}

/// One bond owned by a site: deformed length `rest + Σ coeff·D_ρu`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteBond {
    pub rest: f64,
    /// `(ρ, coefficient)` pairs.
    pub terms: Vec<(i64, f64)>,
}

impl SiteBond {
    /// Lattice offsets `(from, to)` of the two atoms joined by this bond,
    /// relative to the owning site.
    pub fn endpoints(&self) -> (i64, i64) {
        let mut from = 0;
        let mut to = 0;
        for &(rho, c) in &self.terms {
            if c > 0.0 {
                to = rho;
            } else {
                from = rho;
            }
        }
        (from, to)
    }

    /// Stretch factor under a homogeneous strain `G`: `Σ coeff·ρ`.
    fn homogeneous_factor(&self) -> f64 {
        self.terms.iter().map(|&(rho, c)| c * rho as f64).sum()
    }
}

/// Reference lattice `Fℤ`, cutoff and interaction range.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeModel {
    d: usize,
    f: f64,
    r_cut: f64,
    range: Vec<i64>,
    bonds: Vec<SiteBond>,
    pub potential: PairPotential,
}

impl LatticeModel {
    pub fn new(d: usize, f: f64, r_cut: f64, potential: PairPotential) -> Result<Self> {
        if d != 1 {
            return Err(AtcError::Usage(format!(
                "only d = 1 is implemented (got d = {d})"
            )));
        }
        if !(f.is_finite() && f > 0.0 && r_cut.is_finite() && r_cut >= f) {
            return Err(AtcError::Usage(format!(
                "need 0 < F ≤ r_cut (got F = {f}, r_cut = {r_cut})"
            )));
        }
        let max = (r_cut / f).floor() as i64;
        if max > 2 {
            return Err(AtcError::Usage(format!(
                "interaction ranges beyond next-nearest neighbours are not supported (r_cut/F = {})",
                r_cut / f
            )));
        }
        let range: Vec<i64> = (-max..=max).filter(|&rho| rho != 0).collect();
        let mut bonds = vec![SiteBond {
            rest: f,
            terms: vec![(1, 1.0)],
        }];
        if max == 2 {
            bonds.push(SiteBond {
                rest: 2.0 * f,
                terms: vec![(1, 1.0), (-1, -1.0)],
            });
        }
        Ok(Self {
            d,
            f,
            r_cut,
            range,
            bonds,
            potential,
        })
    }

    /// `F = 1`, `r_cut = 2`, default Lennard-Jones parameters.
    pub fn reference() -> Self {
        Self::new(1, 1.0, 2.0, PairPotential::default()).expect("reference lattice is valid")
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn deformation(&self) -> f64 {
        self.f
    }

    pub fn r_cut(&self) -> f64 {
        self.r_cut
    }

    /// The interaction range ℛ, sorted.
    pub fn interaction_range(&self) -> &[i64] {
        &self.range
    }

    /// Largest `|ρ|` in ℛ.
    pub fn reach(&self) -> i64 {
        self.range.iter().map(|r| r.abs()).max().unwrap_or(0)
    }

    pub fn site_bonds(&self) -> &[SiteBond] {
        &self.bonds
    }
}

/// Finite differences `D_ρu(ξ)` keyed by the interaction range.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDifferenceStencil {
    offsets: Vec<i64>,
    values: Vec<f64>,
}

impl FiniteDifferenceStencil {
    pub fn zero(model: &LatticeModel) -> Self {
        Self {
            offsets: model.range.clone(),
            values: vec![0.0; model.range.len()],
        }
    }

    pub fn from_fn(model: &LatticeModel, mut value: impl FnMut(i64) -> f64) -> Self {
        let offsets = model.range.clone();
        let values = offsets.iter().map(|&rho| value(rho)).collect();
        Self { offsets, values }
    }

    /// Stencil of the displacement field `u` at site `xi`.
    pub fn from_displacement(model: &LatticeModel, xi: i64, u: impl Fn(i64) -> f64) -> Self {
        let u0 = u(xi);
        Self::from_fn(model, |rho| u(xi + rho) - u0)
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, rho: i64) -> Option<f64> {
        self.offsets
            .iter()
            .position(|&o| o == rho)
            .map(|i| self.values[i])
    }

    pub fn set(&mut self, rho: i64, value: f64) -> Result<()> {
        match self.offsets.iter().position(|&o| o == rho) {
            Some(i) => {
                self.values[i] = value;
                Ok(())
            }
            None => Err(AtcError::Usage(format!("offset {rho} not in interaction range"))),
        }
    }

    fn index(&self, rho: i64) -> usize {
        self.offsets
            .iter()
            .position(|&o| o == rho)
            .expect("bond offsets lie in the interaction range")
    }
}

fn check_keys(stencil: &FiniteDifferenceStencil, model: &LatticeModel) -> Result<()> {
    if stencil.offsets != model.range {
        return Err(AtcError::Usage(
            "stencil is not keyed by the model's interaction range".into(),
        ));
    }
    Ok(())
}

/// Bond derivatives, `(stencil index, coefficient)` pairs and rest energy.
type BondTerm = ([f64; 4], Vec<(usize, f64)>, f64);

fn bond_terms<'a>(
    stencil: &'a FiniteDifferenceStencil,
    model: &'a LatticeModel,
    potential: &'a PairPotential,
) -> impl Iterator<Item = Result<BondTerm>> + 'a {
    model.bonds.iter().map(move |bond| {
        let idx: Vec<(usize, f64)> = bond
            .terms
            .iter()
            .map(|&(rho, c)| (stencil.index(rho), c))
            .collect();
        let r = bond.rest + idx.iter().map(|&(i, c)| c * stencil.values[i]).sum::<f64>();
        let rest_energy = potential.derivatives(bond.rest)[0];
        Ok((potential.bond(r)?, idx, rest_energy))
    })
}

/// Site energy `V(Du)` with an explicit pair potential.
pub fn site_energy_with(
    stencil: &FiniteDifferenceStencil,
    model: &LatticeModel,
    potential: &PairPotential,
) -> Result<f64> {
    check_keys(stencil, model)?;
    let mut e = 0.0;
    for term in bond_terms(stencil, model, potential) {
        let (d, _, rest) = term?;
        e += d[0] - rest;
    }
    Ok(e)
}

/// Normalized site energy, `V(0) = 0`.
pub fn site_energy(stencil: &FiniteDifferenceStencil, model: &LatticeModel) -> Result<f64> {
    site_energy_with(stencil, model, &model.potential)
}

/// `∂V/∂D_ρu`, ordered like the interaction range.
pub fn site_energy_grad(stencil: &FiniteDifferenceStencil, model: &LatticeModel) -> Result<Vec<f64>> {
    check_keys(stencil, model)?;
    let mut g = vec![0.0; stencil.values.len()];
    for term in bond_terms(stencil, model, &model.potential) {
        let (d, idx, _) = term?;
        for &(i, c) in &idx {
            g[i] += d[1] * c;
        }
    }
    Ok(g)
}

pub fn site_energy_hess(
    stencil: &FiniteDifferenceStencil,
    model: &LatticeModel,
) -> Result<Vec<Vec<f64>>> {
    check_keys(stencil, model)?;
    let n = stencil.values.len();
    let mut h = vec![vec![0.0; n]; n];
    for term in bond_terms(stencil, model, &model.potential) {
        let (d, idx, _) = term?;
        for &(i, ci) in &idx {
            for &(j, cj) in &idx {
                h[i][j] += d[2] * ci * cj;
            }
        }
    }
    Ok(h)
}

pub fn site_energy_d3(
    stencil: &FiniteDifferenceStencil,
    model: &LatticeModel,
) -> Result<Vec<Vec<Vec<f64>>>> {
    check_keys(stencil, model)?;
    let n = stencil.values.len();
    let mut t = vec![vec![vec![0.0; n]; n]; n];
    for term in bond_terms(stencil, model, &model.potential) {
        let (d, idx, _) = term?;
        for &(i, ci) in &idx {
            for &(j, cj) in &idx {
                for &(k, ck) in &idx {
                    t[i][j][k] += d[3] * ci * cj * ck;
                }
            }
        }
    }
    Ok(t)
}

fn cauchy_born(g: f64, model: &LatticeModel, order: usize) -> Result<f64> {
    if !g.is_finite() {
        return Err(AtcError::Domain(format!("strain {g} is not finite")));
    }
    let mut acc = 0.0;
    for bond in &model.bonds {
        let m = bond.homogeneous_factor();
        let d = model.potential.bond(bond.rest + m * g)?;
        acc += match order {
            0 => d[0] - model.potential.derivatives(bond.rest)[0],
            k => d[k] * m.powi(k as i32),
        };
    }
    Ok(acc)
}

/// Cauchy–Born energy density `W(G) = V(Gℛ)`, shifted so `W(0) = 0`.
pub fn cauchy_born_w(g: f64, model: &LatticeModel) -> Result<f64> {
    cauchy_born(g, model, 0)
}

pub fn cauchy_born_w_d1(g: f64, model: &LatticeModel) -> Result<f64> {
    cauchy_born(g, model, 1)
}

pub fn cauchy_born_w_d2(g: f64, model: &LatticeModel) -> Result<f64> {
    cauchy_born(g, model, 2)
}

pub fn cauchy_born_w_d3(g: f64, model: &LatticeModel) -> Result<f64> {
    cauchy_born(g, model, 3)
}
