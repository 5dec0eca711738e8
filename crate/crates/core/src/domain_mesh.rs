//! Domain decomposition into core, atomistic and continuum regions, and the
//! graded P1 mesh covering the continuum region.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use crate::error::{AtcError, Result};
use crate::lattice_potential::LatticeModel;

/// Which error norm the approximation parameters are optimized for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NormMode {
    #[default]
    Energy,
    Uniform,
}

impl FromStr for NormMode {
    type Err = AtcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(Self::Energy),
            "uniform" => Ok(Self::Uniform),
            other => Err(AtcError::Usage(format!("unknown norm '{other}'"))),
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Energy => "energy",
            Self::Uniform => "uniform",
        })
    }
}

/// `x.ceil()`, except values within rounding noise of an integer are rounded.
fn ceil_robust(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Atomistic and outer radii for a given core radius: `R_a = 2 R_core` and
/// `R_c = ⌈R_a^e⌉`, with `e = (1+γ)/(γ−d/2)` (energy) or `1 + 1/γ` (uniform).
pub fn optimal_radii(r_core: i64, gamma: f64, d: usize, norm: NormMode) -> Result<(i64, i64)> {
    if r_core <= 0 {
        return Err(AtcError::Usage(format!("core radius must be positive (got {r_core})")));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(AtcError::Usage(format!("decay exponent must be positive (got {gamma})")));
    }
    let d = d as f64;
    let exponent = match norm {
        NormMode::Energy => {
            if 2.0 * gamma - d <= 0.0 {
                return Err(AtcError::IllPosed(format!(
                    "energy norm requires 2γ − d > 0 (γ = {gamma}, d = {d})"
                )));
            }
            (1.0 + gamma) / (gamma - d / 2.0)
        }
        NormMode::Uniform => 1.0 + 1.0 / gamma,
    };
    let r_a = 2 * r_core;
    let r_c = ceil_robust((r_a as f64).powf(exponent));
    if !(r_c.is_finite() && r_c < i64::MAX as f64 / 4.0) {
        return Err(AtcError::IllPosed(format!("outer radius {r_c} is not representable")));
    }
    Ok((r_a, r_c as i64))
}

/// Graded element size at `|x| ≥ R_a`: `max(1, ⌊(|x|/R_a)^e⌋)` with
/// `e = (1+γ)/(1+d/2)` (energy) or `1+γ` (uniform).
pub fn mesh_size(x: f64, r_a: i64, gamma: f64, d: usize, norm: NormMode) -> i64 {
    let exponent = match norm {
        NormMode::Energy => (1.0 + gamma) / (1.0 + d as f64 / 2.0),
        NormMode::Uniform => 1.0 + gamma,
    };
    let h = (x.abs() / r_a as f64).powf(exponent).floor();
    if h.is_finite() {
        (h as i64).max(1)
    } else {
        i64::MAX
    }
}

/// Radii and lattice subsets of the symmetric 1D decomposition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainDecomposition {
    r_core: i64,
    r_a: i64,
    r_c: i64,
    reach: i64,
    d: usize,
}

impl DomainDecomposition {
    /// Checks `0 < R_core < R_a < R_c` and `R_a − R_core ≥ 2·reach`.
    pub fn new(r_core: i64, r_a: i64, r_c: i64, model: &LatticeModel) -> Result<Self> {
        if !(0 < r_core && r_core < r_a && r_a < r_c) {
            return Err(AtcError::Usage(format!(
                "need 0 < R_core < R_a < R_c (got {r_core}, {r_a}, {r_c})"
            )));
        }
        let reach = model.reach();
        if r_a - r_core < 2 * reach {
            return Err(AtcError::Usage(format!(
                "overlap width R_a − R_core = {} is below twice the interaction reach ({})",
                r_a - r_core,
                2 * reach
            )));
        }
        Ok(Self {
            r_core,
            r_a,
            r_c,
            reach,
            d: model.dimension(),
        })
    }

    /// Decomposition with [`optimal_radii`].
    pub fn from_core_radius(
        r_core: i64,
        gamma: f64,
        norm: NormMode,
        model: &LatticeModel,
    ) -> Result<Self> {
        let (r_a, r_c) = optimal_radii(r_core, gamma, model.dimension(), norm)?;
        Self::new(r_core, r_a, r_c, model)
    }

    pub fn r_core(&self) -> i64 {
        self.r_core
    }

    pub fn r_a(&self) -> i64 {
        self.r_a
    }

    pub fn r_c(&self) -> i64 {
        self.r_c
    }

    pub fn reach(&self) -> i64 {
        self.reach
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    /// ℒ: all sites in `[−R_c, R_c]`.
    pub fn lattice_full(&self) -> RangeInclusive<i64> {
        -self.r_c..=self.r_c
    }

    /// ℒ_a: sites in `[−R_a, R_a]`.
    pub fn lattice_atomistic(&self) -> RangeInclusive<i64> {
        -self.r_a..=self.r_a
    }

    /// ℒ_a°: sites whose whole neighbourhood lies in ℒ_a.
    pub fn atomistic_interior(&self) -> RangeInclusive<i64> {
        let r = self.r_a - self.reach;
        -r..=r
    }

    /// ℒ_a°°: sites whose whole neighbourhood lies in ℒ_a°.
    pub fn atomistic_double_interior(&self) -> RangeInclusive<i64> {
        let r = self.r_a - 2 * self.reach;
        -r..=r
    }

    /// Overlap components `[R_core, R_a]` and `[−R_a, −R_core]`, positive side first.
    pub fn overlap(&self) -> [(i64, i64); 2] {
        [(self.r_core, self.r_a), (-self.r_a, -self.r_core)]
    }
}

/// Symmetric P1 mesh on `[−R_c, R_c]`, unit elements on `[−R_a, R_a]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradedMesh {
    nodes: Vec<i64>,
}

impl GradedMesh {
    pub fn from_nodes(nodes: Vec<i64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AtcError::Usage("mesh nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[i64] {
        &self.nodes
    }

    /// Element sizes `h_T`, left to right.
    pub fn element_sizes(&self) -> impl Iterator<Item = i64> + '_ {
        self.nodes.windows(2).map(|w| w[1] - w[0])
    }

    /// Nodes of one half, ordered outward from `±from`: `[from, …, R_c]` for
    /// `sign = 1` and `[−from, …, −R_c]` for `sign = −1`.
    pub fn side(&self, from: i64, sign: i64) -> Vec<i64> {
        if sign > 0 {
            self.nodes.iter().copied().filter(|&x| x >= from).collect()
        } else {
            self.nodes.iter().rev().copied().filter(|&x| x <= -from).collect()
        }
    }

    /// One coordinate per line.
    pub fn dump(&self) -> String {
        let mut out = String::with_capacity(self.nodes.len() * 8);
        for x in &self.nodes {
            out.push_str(&x.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let nodes = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<i64>()
                    .map_err(|e| AtcError::Usage(format!("bad mesh line '{l}': {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_nodes(nodes)
    }
}

/// Every site of `[−R_a, R_a]` is a node; beyond `R_a` nodes are added at
/// `ξ + h(ξ)` while that stays below `R_c`; then `R_c` closes the mesh.
/// The negative half is the mirror image.
pub fn build_graded_mesh(dec: &DomainDecomposition, gamma: f64, norm: NormMode) -> GradedMesh {
    let mut half: Vec<i64> = (0..=dec.r_a).collect();
    let mut xi = dec.r_a;
    loop {
        let h = mesh_size(xi as f64, dec.r_a, gamma, dec.d, norm);
        match xi.checked_add(h) {
            Some(next) if next < dec.r_c => {
                half.push(next);
                xi = next;
            }
            _ => break,
        }
    }
    half.push(dec.r_c);
    let mut nodes: Vec<i64> = half.iter().skip(1).rev().map(|&x| -x).collect();
    nodes.extend_from_slice(&half);
    GradedMesh { nodes }
}

/// Atomistic sites plus coarse-region mesh nodes (`R_a < |x| < R_c`).
pub fn count_dof(dec: &DomainDecomposition, mesh: &GradedMesh) -> usize {
    let atomistic = (2 * dec.r_a + 1) as usize;
    let coarse = mesh
        .nodes
        .iter()
        .filter(|&&x| x.abs() > dec.r_a && x.abs() != dec.r_c)
        .count();
    atomistic + coarse
}
