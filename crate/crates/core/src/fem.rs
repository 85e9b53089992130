//! P1 Galerkin matrices for the waveguide and interval forms, plus inequality checkers.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EdgeTag, Mesh2D, Region};
use crate::sparse::{self, Csr, Pattern};

/// Which Hilbert space a discrete pair lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceTag {
    /// Conforming P1 functions on the two-dimensional domain.
    Waveguide,
    /// P1 functions on the interval.
    Interval,
    /// Interval functions plus one scalar per room.
    Limit,
}

/// Stiffness (+ potential + point terms) and mass on one dof set.
#[derive(Debug, Clone)]
pub struct DiscreteOperatorPair {
    pub k: Csr,
    pub m: Csr,
    pub space: SpaceTag,
    /// Mesh node (or grid point) carried by each dof.
    pub nodes: Vec<usize>,
}

impl DiscreteOperatorPair {
    pub fn dim(&self) -> usize {
        self.k.rows()
    }

    /// K + shift·M; `shifted(1.0)` is the matrix of the form norm.
    pub fn shifted(&self, shift: f64) -> Csr {
        sparse::combine(&self.k, 1.0, &self.m, shift)
    }
}

/// Non-negative potential on the interval, extended to the strip and by 0 elsewhere.
#[derive(Clone)]
pub enum Potential {
    Zero,
    Constant(f64),
    /// Piecewise constant: `values[i]` on [breaks[i], breaks[i+1]).
    Table { breaks: Vec<f64>, values: Vec<f64> },
    Function { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, sup: f64 },
}

impl std::fmt::Debug for Potential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Potential::Zero => write!(f, "Zero"),
            Potential::Constant(c) => write!(f, "Constant({c})"),
            Potential::Table { breaks, values } => write!(f, "Table({breaks:?}, {values:?})"),
            Potential::Function { sup, .. } => write!(f, "Function(sup = {sup})"),
        }
    }
}

impl Potential {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Constant(c) => *c,
            Potential::Table { breaks, values } => {
                let i = breaks.partition_point(|&b| b <= x);
                if i == 0 {
                    values[0]
                } else {
                    values[(i - 1).min(values.len() - 1)]
                }
            }
            Potential::Function { f, .. } => f(x),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Constant(c) => c.abs(),
            Potential::Table { values, .. } => values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Potential::Function { sup, .. } => *sup,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero) || matches!(self, Potential::Constant(c) if *c == 0.0)
    }

    pub fn check(&self) -> Result<()> {
        match self {
            Potential::Constant(c) if !(c.is_finite() && *c >= 0.0) => {
                Err(Error::invalid("potential", "constant must be finite and non-negative"))
            }
            Potential::Table { breaks, values } => {
                if breaks.len() != values.len() + 1 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("potential", "table needs increasing breaks, one more than values"));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::invalid("potential", "table values must be non-negative"));
                }
                Ok(())
            }
            Potential::Function { sup, .. } if !(sup.is_finite() && *sup >= 0.0) => {
                Err(Error::invalid("potential", "sup bound must be finite"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    AllNeumann,
    /// Strip and passages only, Dirichlet on the passage tops.
    DirichletOnDPlus,
}

/// Local P1 stiffness and mass of a triangle.
pub fn triangle_matrices(p: [[f64; 2]; 3]) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        b[i] = p[j][1] - p[k][1];
        c[i] = p[k][0] - p[j][0];
    }
    let mut ke = [[0.0; 3]; 3];
    let mut me = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ke[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
            me[i][j] = if i == j { area / 6.0 } else { area / 12.0 };
        }
    }
    (ke, me)
}

pub fn element_points(mesh: &Mesh2D, e: usize) -> [[f64; 2]; 3] {
    mesh.elements[e].map(|n| mesh.nodes[n])
}

/// Local matrices for a list of elements, computed in parallel and returned in order.
fn local_matrices(mesh: &Mesh2D, elements: &[usize], pot: &Potential) -> Vec<([[f64; 3]; 3], [[f64; 3]; 3])> {
    elements
        .par_iter()
        .map(|&e| {
            let (mut ke, me) = triangle_matrices(element_points(mesh, e));
            if mesh.element_region[e] == Region::Strip && !pot.is_zero() {
                let v = pot.eval(mesh.x_mid(e));
                for i in 0..3 {
                    for j in 0..3 {
                        ke[i][j] += v * me[i][j];
                    }
                }
            }
            (ke, me)
        })
        .collect()
}

fn assemble_elements(
    mesh: &Mesh2D,
    elements: &[usize],
    pot: &Potential,
    excluded: &BTreeSet<usize>,
    space: SpaceTag,
) -> DiscreteOperatorPair {
    let mut used = BTreeSet::new();
    for &e in elements {
        for &n in &mesh.elements[e] {
            if !excluded.contains(&n) {
                used.insert(n);
            }
        }
    }
    let nodes: Vec<usize> = used.into_iter().collect();
    let mut dof_of = vec![usize::MAX; mesh.n_nodes()];
    for (i, &n) in nodes.iter().enumerate() {
        dof_of[n] = i;
    }
    let local_dofs: Vec<Vec<usize>> = elements
        .iter()
        .map(|&e| {
            mesh.elements[e]
                .iter()
                .map(|&n| dof_of[n])
                .filter(|&d| d != usize::MAX)
                .collect()
        })
        .collect();
    let pattern = Pattern::from_elements(nodes.len(), local_dofs.iter().map(|v| &v[..]));
    let locals = local_matrices(mesh, elements, pot);
    let mut kv = pattern.zeros();
    let mut mv = pattern.zeros();
    for (&e, (ke, me)) in elements.iter().zip(&locals) {
        let tri = mesh.elements[e];
        for a in 0..3 {
            let i = dof_of[tri[a]];
            if i == usize::MAX {
                continue;
            }
            for b in 0..3 {
                let j = dof_of[tri[b]];
                if j == usize::MAX {
                    continue;
                }
                let s = pattern.slot(i, j);
                kv[s] += ke[a][b];
                mv[s] += me[a][b];
            }
        }
    }
    DiscreteOperatorPair {
        k: pattern.to_csr(kv),
        m: pattern.to_csr(mv),
        space,
        nodes,
    }
}

/// Galerkin pair of the waveguide form ∫|∇u|² + V u².
pub fn assemble_2d(mesh: &Mesh2D, pot: &Potential, bc: BoundaryCondition) -> Result<DiscreteOperatorPair> {
    pot.check()?;
    check_potential_domain(mesh, pot)?;
    match bc {
        BoundaryCondition::AllNeumann => {
            let all: Vec<usize> = (0..mesh.n_elements()).collect();
            Ok(assemble_elements(mesh, &all, pot, &BTreeSet::new(), SpaceTag::Waveguide))
        }
        BoundaryCondition::DirichletOnDPlus => {
            let els: Vec<usize> = (0..mesh.n_elements())
                .filter(|&e| mesh.element_region[e] != Region::Room)
                .collect();
            let top: BTreeSet<usize> = mesh
                .edges_tagged(EdgeTag::DPlus)
                .flat_map(|e| e.nodes)
                .collect();
            if top.is_empty() {
                return Err(Error::Dimension("mesh has no passage-room interface".into()));
            }
            Ok(assemble_elements(mesh, &els, pot, &top, SpaceTag::Waveguide))
        }
    }
}

/// Neumann pair on the elements of one region (optionally one site).
pub fn assemble_region(mesh: &Mesh2D, region: Region, site: Option<usize>, pot: &Potential) -> DiscreteOperatorPair {
    let els: Vec<usize> = mesh
        .elements_in(region)
        .filter(|&e| site.is_none() || mesh.element_site[e] == site)
        .collect();
    assemble_elements(mesh, &els, pot, &BTreeSet::new(), SpaceTag::Waveguide)
}

fn check_potential_domain(mesh: &Mesh2D, pot: &Potential) -> Result<()> {
    if let (Potential::Table { breaks, .. }, Some(layout)) = (pot, &mesh.layout) {
        if breaks[0] > layout.x_min || *breaks.last().unwrap() < layout.x_max {
            return Err(Error::Dimension("potential table does not cover the strip".into()));
        }
    }
    Ok(())
}

/// The waveguide discretised twice: conforming P1 for the form and region-wise broken P1 for L².
///
/// Broken dofs duplicate every node shared by two regions, so functions may jump across the
/// strip–passage and passage–room interfaces.
#[derive(Debug, Clone)]
pub struct Waveguide2d {
    pub pair: DiscreteOperatorPair,
    pub broken_mass: Csr,
    /// Conforming dof carried by each broken dof.
    pub broken_to_dof: Vec<usize>,
    pub broken_region: Vec<Region>,
    pub broken_site: Vec<Option<usize>>,
    /// Broken dofs of each element, in vertex order.
    pub element_dofs: Vec<[usize; 3]>,
}

impl Waveguide2d {
    pub fn dim(&self) -> usize {
        self.pair.dim()
    }

    pub fn broken_dim(&self) -> usize {
        self.broken_to_dof.len()
    }

    /// Embed a conforming function into the broken space.
    pub fn inject(&self, u: &[f64]) -> Vec<f64> {
        self.broken_to_dof.iter().map(|&i| u[i]).collect()
    }

    /// Transpose of `inject`.
    pub fn inject_t(&self, w: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.dim()];
        for (k, &i) in self.broken_to_dof.iter().enumerate() {
            u[i] += w[k];
        }
        u
    }
}

pub fn discretize_waveguide(mesh: &Mesh2D, pot: &Potential) -> Result<Waveguide2d> {
    let pair = assemble_2d(mesh, pot, BoundaryCondition::AllNeumann)?;
    let mut dof_of = vec![usize::MAX; mesh.n_nodes()];
    for (i, &n) in pair.nodes.iter().enumerate() {
        dof_of[n] = i;
    }
    let mut key_to_broken: HashMap<(usize, Region, Option<usize>), usize> = HashMap::new();
    let mut broken_to_dof = Vec::new();
    let mut broken_region = Vec::new();
    let mut broken_site = Vec::new();
    let mut elem_broken = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let (r, s) = (mesh.element_region[e], mesh.element_site[e]);
        let tri = mesh.elements[e].map(|n| {
            *key_to_broken.entry((n, r, s)).or_insert_with(|| {
                broken_to_dof.push(dof_of[n]);
                broken_region.push(r);
                broken_site.push(s);
                broken_to_dof.len() - 1
            })
        });
        elem_broken.push(tri);
    }
    let nb = broken_to_dof.len();
    let pattern = Pattern::from_elements(nb, elem_broken.iter().map(|t| &t[..]));
    let mut mv = pattern.zeros();
    for (e, tri) in elem_broken.iter().enumerate() {
        let (_, me) = triangle_matrices(element_points(mesh, e));
        for a in 0..3 {
            for b in 0..3 {
                mv[pattern.slot(tri[a], tri[b])] += me[a][b];
            }
        }
    }
    Ok(Waveguide2d {
        pair,
        broken_mass: pattern.to_csr(mv),
        broken_to_dof,
        broken_region,
        broken_site,
        element_dofs: elem_broken,
    })
}

/// Uniform grid with `n` cells on (a, b).
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 })
        .collect()
}

/// 1D P1 pair on an arbitrary grid with point interactions `(location, strength)`.
///
/// Every interaction must sit exactly on a grid point.
pub fn assemble_1d_grid(xs: &[f64], pot: &Potential, deltas: &[(f64, f64)]) -> Result<DiscreteOperatorPair> {
    pot.check()?;
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("grid", "need at least two strictly increasing points"));
    }
    let n = xs.len();
    let els: Vec<[usize; 2]> = (0..n - 1).map(|i| [i, i + 1]).collect();
    let pattern = Pattern::from_elements(n, els.iter().map(|e| &e[..]));
    let mut kv = pattern.zeros();
    let mut mv = pattern.zeros();
    for (i, w) in xs.windows(2).enumerate() {
        let h = w[1] - w[0];
        let v = pot.eval(0.5 * (w[0] + w[1]));
        let ke = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
        let me = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        for a in 0..2 {
            for b in 0..2 {
                let s = pattern.slot(i + a, i + b);
                kv[s] += ke[a][b] + v * me[a][b];
                mv[s] += me[a][b];
            }
        }
    }
    for &(x0, g) in deltas {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::invalid("gamma", "point strength must be finite and non-negative"));
        }
        if g == 0.0 {
            continue;
        }
        let i = xs
            .iter()
            .position(|&x| x == x0)
            .ok_or_else(|| Error::Dimension(format!("no grid point at interaction site {x0}")))?;
        kv[pattern.slot(i, i)] += g;
    }
    Ok(DiscreteOperatorPair {
        k: pattern.to_csr(kv),
        m: pattern.to_csr(mv),
        space: SpaceTag::Interval,
        nodes: (0..n).collect(),
    })
}

/// 1D pair on `n` uniform cells of the interval with strength γ at the origin.
pub fn assemble_1d(interval: (f64, f64), n: usize, pot: &Potential, gamma: f64) -> Result<DiscreteOperatorPair> {
    let (a, b) = interval;
    if !(a < b) || n < 1 {
        return Err(Error::invalid("interval", "need a < b and at least one cell"));
    }
    let xs = uniform_grid(a, b, n);
    let deltas = if gamma > 0.0 { vec![(0.0, gamma)] } else { vec![] };
    if gamma > 0.0 && !xs.contains(&0.0) {
        // snap: rounding in a + (b−a)i/n may miss 0 by an ulp
        let i = xs
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if xs[i].abs() > 1e-12 * (b - a) {
            return Err(Error::Dimension("no node at 0 for the point interaction".into()));
        }
        let mut xs = xs;
        xs[i] = 0.0;
        return assemble_1d_grid(&xs, pot, &deltas);
    }
    assemble_1d_grid(&xs, pot, &deltas)
}

/// Both sides of ‖f‖²_∞ ≤ coth(ℓ/2)·‖f‖²_{H¹} for a P1 function on a grid.
pub fn check_sobolev_1d(xs: &[f64], f: &[f64]) -> (f64, f64) {
    let len = xs[xs.len() - 1] - xs[0];
    let lhs = f.iter().fold(0.0f64, |m, v| m.max(v * v));
    let (l2, h1) = p1_norms_1d(xs, f);
    (lhs, (len / 2.0).tanh().recip() * (l2 + h1))
}

/// (‖f‖², ‖f'‖²) of a P1 function, exact.
pub fn p1_norms_1d(xs: &[f64], f: &[f64]) -> (f64, f64) {
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for i in 0..xs.len() - 1 {
        let h = xs[i + 1] - xs[i];
        let (a, b) = (f[i], f[i + 1]);
        l2 += h * (a * a + a * b + b * b) / 3.0;
        h1 += (b - a) * (b - a) / h;
    }
    (l2, h1)
}

/// Both sides of ‖f‖² ≤ π⁻²|I|²‖f'‖² (f vanishing at both ends).
pub fn check_poincare_dirichlet(xs: &[f64], f: &[f64]) -> (f64, f64) {
    let len = xs[xs.len() - 1] - xs[0];
    let (l2, h1) = p1_norms_1d(xs, f);
    (l2, len * len / (std::f64::consts::PI.powi(2)) * h1)
}

/// Both sides of ‖f‖² ≤ |I|⟨f⟩² + |I|²π⁻²‖f'‖² on an interval.
pub fn check_poincare_mean_1d(xs: &[f64], f: &[f64]) -> (f64, f64) {
    let len = xs[xs.len() - 1] - xs[0];
    let (l2, h1) = p1_norms_1d(xs, f);
    let mut integral = 0.0;
    for i in 0..xs.len() - 1 {
        integral += 0.5 * (xs[i + 1] - xs[i]) * (f[i] + f[i + 1]);
    }
    let mean = integral / len;
    (l2, len * mean * mean + len * len / std::f64::consts::PI.powi(2) * h1)
}

/// Integrals over a set of elements of a nodal P1 function: (measure, ∫u, ∫u², ∫|∇u|²).
pub fn element_integrals(mesh: &Mesh2D, elements: impl Iterator<Item = usize>, u: &[f64]) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for e in elements {
        let tri = mesh.elements[e];
        let (ke, me) = triangle_matrices(element_points(mesh, e));
        let area = mesh.signed_area(e);
        let v = tri.map(|n| u[n]);
        acc[0] += area;
        acc[1] += area * (v[0] + v[1] + v[2]) / 3.0;
        for a in 0..3 {
            for b in 0..3 {
                acc[2] += me[a][b] * v[a] * v[b];
                acc[3] += ke[a][b] * v[a] * v[b];
            }
        }
    }
    acc
}

/// Mean of a nodal P1 function over a set of elements.
pub fn region_mean(mesh: &Mesh2D, elements: impl Iterator<Item = usize>, u: &[f64]) -> f64 {
    let acc = element_integrals(mesh, elements, u);
    acc[1] / acc[0]
}

/// Mean of the trace of a nodal P1 function over tagged edges of one site.
pub fn edge_mean(mesh: &Mesh2D, tag: EdgeTag, site: Option<usize>, u: &[f64]) -> f64 {
    let mut len = 0.0;
    let mut int = 0.0;
    for e in mesh.edges_tagged(tag).filter(|e| site.is_none() || e.site == site) {
        let [a, b] = e.nodes;
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let l = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        len += l;
        int += 0.5 * l * (u[a] + u[b]);
    }
    int / len
}

/// Both sides of ‖u‖² ≤ |D|⟨u⟩² + ‖∇u‖²/λ₂ over a set of elements, λ₂ given.
pub fn check_poincare_mean_2d(mesh: &Mesh2D, elements: &[usize], u: &[f64], lambda2: f64) -> (f64, f64) {
    let acc = element_integrals(mesh, elements.iter().cloned(), u);
    let mean = acc[1] / acc[0];
    (acc[2], acc[0] * mean * mean + acc[3] / lambda2)
}
