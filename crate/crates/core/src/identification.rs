//! Maps between the waveguide and the limit space, and the defects measuring how far they are
//! from intertwining the two resolvents.
//!
//! The limit space is P1 on the strip columns plus one scalar per room. The waveguide side has
//! two discretisations (see [`Waveguide2d`]): conforming P1 for the form, broken P1 for L².
//! The plain lift lands in the broken space because it jumps across both passage interfaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstract_toolkit::{BoundCheck, DeltaParts};
use crate::eigensolve::{op_norm, Gram, LinearMap, NormEstimate, SparseGram};
use crate::error::{Error, Result};
use crate::fem::{element_integrals, element_points, triangle_matrices, DiscreteOperatorPair, Potential, Waveguide2d};
use crate::geometry::{EdgeTag, Layout, Mesh2D, Region, Site};
use crate::limit::limit_pair;
use crate::sparse::{self, Csr, Factor};

/// Piecewise-linear reparametrisation that collapses the passage mouth |x| ≤ d/2 to 0 and
/// stretches (d/2, ε/2) onto (0, ε/2); the identity for |x| ≥ ε/2.
pub fn collapse(x: f64, eps: f64, d: f64) -> f64 {
    let a = x.abs();
    if a >= eps / 2.0 {
        x
    } else if a <= d / 2.0 {
        0.0
    } else {
        x.signum() * (2.0 * a - d) * eps / (2.0 * (eps - d))
    }
}

/// P1 on the strip columns with point interactions at the site centres, plus one scalar per room.
#[derive(Debug, Clone)]
pub struct LimitSpace {
    pub xs: Vec<f64>,
    pub centers: Vec<f64>,
    pub pair: DiscreteOperatorPair,
}

impl LimitSpace {
    pub fn line_dim(&self) -> usize {
        self.xs.len()
    }

    pub fn dim(&self) -> usize {
        self.pair.dim()
    }
}

/// Limit space matching the columns of a waveguide mesh; `strengths` holds one coupling per site.
pub fn limit_space(mesh: &Mesh2D, strengths: &[f64], pot: &Potential) -> Result<LimitSpace> {
    let (strip, layout) = column_structure(mesh)?;
    if strengths.len() != layout.sites.len() {
        return Err(Error::Dimension(format!(
            "{} coupling strengths for {} sites",
            strengths.len(),
            layout.sites.len()
        )));
    }
    let centers: Vec<f64> = layout.sites.iter().map(|s| s.center).collect();
    let deltas: Vec<(f64, f64)> = centers.iter().cloned().zip(strengths.iter().cloned()).collect();
    let pair = limit_pair(&strip.xs, pot, &deltas, centers.len())?;
    Ok(LimitSpace {
        xs: strip.xs.clone(),
        centers,
        pair,
    })
}

fn column_structure(mesh: &Mesh2D) -> Result<(&crate::geometry::StripGrid, &Layout)> {
    match (&mesh.strip, &mesh.layout) {
        (Some(s), Some(l)) => Ok((s, l)),
        _ => Err(Error::Dimension("mesh is not column-structured".into())),
    }
}

fn nearest_site(layout: &Layout, x: f64) -> usize {
    let mut best = 0;
    for (k, s) in layout.sites.iter().enumerate() {
        if (s.center - x).abs() < (layout.sites[best].center - x).abs() {
            best = k;
        }
    }
    best
}

/// P1 interpolation weights of the grid `xs` at `t`.
fn interp_weights(xs: &[f64], t: f64) -> [(usize, f64); 2] {
    let n = xs.len();
    let i = xs.partition_point(|&v| v < t);
    if i < n && xs[i] == t {
        return [(i, 1.0), (i, 0.0)];
    }
    let i = i.clamp(1, n - 1);
    let w = (t - xs[i - 1]) / (xs[i] - xs[i - 1]);
    [(i - 1, 1.0 - w), (i, w)]
}

/// The identification maps as sparse matrices.
#[derive(Debug)]
pub struct IdMaps {
    /// Limit → broken waveguide space: columns scaled by ε^(−1/2) on the strip, zero on the
    /// passages, room scalars divided by the room side.
    pub lift: Csr,
    /// Limit → conforming waveguide space, continuous across both interfaces.
    pub lift_h1: Csr,
    /// Column and room integrals of a broken function against the limit basis; equals
    /// liftᵀ·M_W when the strip is column-structured.
    pub average_load: Csr,
    limit_mass: Factor,
    pub epsilon: f64,
}

impl IdMaps {
    pub fn apply_lift(&self, f: &[f64]) -> Vec<f64> {
        sparse::matvec(&self.lift, f)
    }

    pub fn apply_lift_h1(&self, f: &[f64]) -> Vec<f64> {
        sparse::matvec(&self.lift_h1, f)
    }

    /// Projected column average: M₀⁻¹ times the load of `w`.
    pub fn apply_average(&self, w: &[f64]) -> Vec<f64> {
        self.limit_mass.solve(&sparse::matvec(&self.average_load, w))
    }

    /// Transpose of `apply_average`.
    pub fn apply_average_t(&self, f: &[f64]) -> Vec<f64> {
        sparse::matvec_t(&self.average_load, &self.limit_mass.solve(f))
    }

    pub fn limit_dim(&self) -> usize {
        self.lift.cols()
    }
}

pub fn build_maps(mesh: &Mesh2D, wg: &Waveguide2d, limit: &LimitSpace) -> Result<IdMaps> {
    let (strip, layout) = column_structure(mesh)?;
    if strip.xs != limit.xs {
        return Err(Error::Dimension("limit grid does not match the strip columns".into()));
    }
    let n1 = limit.line_dim();
    let n0 = limit.dim();
    if n0 != n1 + layout.sites.len() {
        return Err(Error::Dimension("limit space needs one scalar per room".into()));
    }
    let eps = layout.epsilon;
    let s_eps = eps.powf(-0.5);
    let col_of = strip.column_of_nodes(mesh.n_nodes());
    let column = |node: usize| {
        col_of[node].ok_or_else(|| Error::Dimension(format!("strip node {node} is off the column grid")))
    };

    let mut lift = Vec::new();
    for w in 0..wg.broken_dim() {
        let node = wg.pair.nodes[wg.broken_to_dof[w]];
        match wg.broken_region[w] {
            Region::Strip => lift.push((w, column(node)?, s_eps)),
            Region::Room => {
                let k = wg.broken_site[w].expect("room dof without site");
                lift.push((w, n1 + k, 1.0 / layout.sites[k].room_side));
            }
            Region::Passage => {}
        }
    }

    let mut load = Vec::new();
    for e in 0..mesh.n_elements() {
        let dofs = wg.element_dofs[e];
        match mesh.element_region[e] {
            Region::Strip => {
                let (_, me) = triangle_matrices(element_points(mesh, e));
                for a in 0..3 {
                    let ca = column(mesh.elements[e][a])?;
                    for b in 0..3 {
                        load.push((ca, dofs[b], s_eps * me[a][b]));
                    }
                }
            }
            Region::Room => {
                let k = mesh.element_site[e].expect("room element without site");
                let w = mesh.signed_area(e) / 3.0 / layout.sites[k].room_side;
                for &d in &dofs {
                    load.push((n1 + k, d, w));
                }
            }
            Region::Passage => {}
        }
    }

    let mut smooth = Vec::new();
    for (v, &node) in wg.pair.nodes.iter().enumerate() {
        let [x, y] = mesh.nodes[node];
        let k = nearest_site(layout, x);
        let Site {
            center,
            passage_width,
            passage_height,
            room_side,
        } = layout.sites[k];
        if y <= 0.0 {
            let t = center + collapse(x - center, eps, passage_width);
            for (i, w) in interp_weights(&strip.xs, t) {
                if w != 0.0 {
                    smooth.push((v, i, s_eps * w));
                }
            }
        } else if y < passage_height {
            let theta = y / passage_height;
            let c = strip
                .column_at(center)
                .ok_or_else(|| Error::Dimension("no strip column at a site centre".into()))?;
            smooth.push((v, c, (1.0 - theta) * s_eps));
            smooth.push((v, n1 + k, theta / room_side));
        } else {
            smooth.push((v, n1 + k, 1.0 / room_side));
        }
    }

    Ok(IdMaps {
        lift: sparse::from_triplets(wg.broken_dim(), n0, &lift),
        lift_h1: sparse::from_triplets(wg.dim(), n0, &smooth),
        average_load: sparse::from_triplets(n0, wg.broken_dim(), &load),
        limit_mass: Factor::new(&limit.pair.m)?,
        epsilon: eps,
    })
}

/// Factorisations shared by the defect computations.
pub struct DefectSolver<'a> {
    pub maps: &'a IdMaps,
    pub wg: &'a Waveguide2d,
    wave_l2: SparseGram,
    wave_h1: SparseGram,
    limit_l2: SparseGram,
    limit_h1: SparseGram,
    limit_form: Csr,
}

impl<'a> DefectSolver<'a> {
    pub fn new(maps: &'a IdMaps, wg: &'a Waveguide2d, limit: &LimitSpace) -> Result<Self> {
        if maps.limit_dim() != limit.dim() || maps.lift.rows() != wg.broken_dim() {
            return Err(Error::Dimension("maps were built for other spaces".into()));
        }
        Ok(DefectSolver {
            maps,
            wg,
            wave_l2: SparseGram::new(wg.broken_mass.clone())?,
            wave_h1: SparseGram::new(wg.pair.shifted(1.0))?,
            limit_l2: SparseGram::new(limit.pair.m.clone())?,
            limit_h1: SparseGram::new(limit.pair.shifted(1.0))?,
            limit_form: limit.pair.k.clone(),
        })
    }

    /// Galerkin resolvent on the broken space: E (K + M)⁻¹ Eᵀ M_W.
    pub fn wave_resolvent(&self, w: &[f64]) -> Vec<f64> {
        let rhs = self.wg.inject_t(&self.wave_l2.mul(w));
        self.wg.inject(&self.wave_h1.solve(&rhs))
    }

    fn wave_resolvent_t(&self, y: &[f64]) -> Vec<f64> {
        let u = self.wave_h1.solve(&self.wg.inject_t(y));
        self.wave_l2.mul(&self.wg.inject(&u))
    }

    pub fn limit_resolvent(&self, f: &[f64]) -> Vec<f64> {
        self.limit_h1.solve(&self.limit_l2.mul(f))
    }

    fn limit_resolvent_t(&self, f: &[f64]) -> Vec<f64> {
        self.limit_l2.mul(&self.limit_h1.solve(f))
    }

    /// ‖R_ε J − J R₀‖ from the limit space to the broken space.
    pub fn resolvent_defect(&self) -> NormEstimate {
        op_norm(&Primal(self), &self.limit_l2, &self.wave_l2)
    }

    /// ‖J̃ R_ε − R₀ J̃‖ in the opposite direction.
    pub fn dual_resolvent_defect(&self) -> NormEstimate {
        op_norm(&Dual(self), &self.wave_l2, &self.limit_l2)
    }

    /// Norm of u ↦ u − J J̃ u from the conforming space with the form norm into L².
    pub fn quasi_unitarity_defect(&self) -> NormEstimate {
        op_norm(&QuasiUnitary(self), &self.wave_h1, &self.wave_l2)
    }

    /// Norm of f ↦ J f − J¹ f from the limit form domain into L².
    pub fn lift_defect(&self) -> NormEstimate {
        op_norm(&LiftGap(self), &self.limit_h1, &self.wave_l2)
    }

    /// sup |(J f, u) − (f, J̃ u)| over unit f, u; zero up to round-off since J̃ is J's adjoint.
    pub fn adjoint_defect(&self) -> NormEstimate {
        op_norm(&AdjointGap(self), &self.limit_l2, &self.wave_l2)
    }

    /// sup |ã[J¹f, u] − a[f, J̃Eu]| over f unit in the limit graph norm, u unit in the
    /// waveguide form norm.
    pub fn form_defect(&self) -> NormEstimate {
        let graph = GraphGram {
            shifted: &self.limit_h1,
            mass: &self.limit_l2,
        };
        op_norm(&FormGap(self), &graph, &self.wave_h1)
    }

    /// The four coupling defects with J̃¹ = J̃E, so the second one vanishes identically.
    pub fn coupling_defects(&self) -> DeltaParts {
        DeltaParts {
            fwd_gap: self.lift_defect().value,
            bwd_gap: 0.0,
            adjoint_gap: self.adjoint_defect().value,
            form_gap: self.form_defect().value,
        }
    }

    /// ‖R_ε J − J R₀‖ against four times the largest coupling defect.
    pub fn resolvent_bound(&self) -> BoundCheck {
        BoundCheck::new(self.resolvent_defect().value, 4.0 * self.coupling_defects().max())
    }
}

/// Graph-norm Gram (K + M) M⁻¹ (K + M) of the limit operator.
struct GraphGram<'g> {
    shifted: &'g SparseGram,
    mass: &'g SparseGram,
}

impl Gram for GraphGram<'_> {
    fn dim(&self) -> usize {
        self.mass.dim()
    }
    fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.shifted.mul(&self.mass.solve(&self.shifted.mul(x)))
    }
    fn solve(&self, y: &[f64]) -> Vec<f64> {
        self.shifted.solve(&self.mass.mul(&self.shifted.solve(y)))
    }
}

struct Primal<'s, 'a>(&'s DefectSolver<'a>);
struct Dual<'s, 'a>(&'s DefectSolver<'a>);
struct QuasiUnitary<'s, 'a>(&'s DefectSolver<'a>);
struct LiftGap<'s, 'a>(&'s DefectSolver<'a>);
struct AdjointGap<'s, 'a>(&'s DefectSolver<'a>);
struct FormGap<'s, 'a>(&'s DefectSolver<'a>);

fn sub(mut a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    sparse::axpy(-1.0, b, &mut a);
    a
}

impl LinearMap for Primal<'_, '_> {
    fn n_src(&self) -> usize {
        self.0.maps.limit_dim()
    }
    fn n_dst(&self) -> usize {
        self.0.wg.broken_dim()
    }
    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let s = self.0;
        let a = s.wave_resolvent(&s.maps.apply_lift(f));
        sub(a, &s.maps.apply_lift(&s.limit_resolvent(f)))
    }
    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        let s = self.0;
        let a = sparse::matvec_t(&s.maps.lift, &s.wave_resolvent_t(y));
        sub(a, &s.limit_resolvent_t(&sparse::matvec_t(&s.maps.lift, y)))
    }
}

impl LinearMap for Dual<'_, '_> {
    fn n_src(&self) -> usize {
        self.0.wg.broken_dim()
    }
    fn n_dst(&self) -> usize {
        self.0.maps.limit_dim()
    }
    fn apply(&self, w: &[f64]) -> Vec<f64> {
        let s = self.0;
        let a = s.maps.apply_average(&s.wave_resolvent(w));
        sub(a, &s.limit_resolvent(&s.maps.apply_average(w)))
    }
    fn apply_t(&self, f: &[f64]) -> Vec<f64> {
        let s = self.0;
        let a = s.wave_resolvent_t(&s.maps.apply_average_t(f));
        sub(a, &s.maps.apply_average_t(&s.limit_resolvent_t(f)))
    }
}

impl LinearMap for QuasiUnitary<'_, '_> {
    fn n_src(&self) -> usize {
        self.0.wg.dim()
    }
    fn n_dst(&self) -> usize {
        self.0.wg.broken_dim()
    }
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let s = self.0;
        let w = s.wg.inject(u);
        let back = s.maps.apply_lift(&s.maps.apply_average(&w));
        sub(w, &back)
    }
    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        let s = self.0;
        let back = s.maps.apply_average_t(&sparse::matvec_t(&s.maps.lift, y));
        s.wg.inject_t(&sub(y.to_vec(), &back))
    }
}

impl LinearMap for LiftGap<'_, '_> {
    fn n_src(&self) -> usize {
        self.0.maps.limit_dim()
    }
    fn n_dst(&self) -> usize {
        self.0.wg.broken_dim()
    }
    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let s = self.0;
        sub(s.maps.apply_lift(f), &s.wg.inject(&s.maps.apply_lift_h1(f)))
    }
    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        let s = self.0;
        let a = sparse::matvec_t(&s.maps.lift, y);
        sub(a, &sparse::matvec_t(&s.maps.lift_h1, &s.wg.inject_t(y)))
    }
}

// f ↦ J f − M_W⁻¹ (load)ᵀ f, the Riesz representative of the bilinear defect
impl LinearMap for AdjointGap<'_, '_> {
    fn n_src(&self) -> usize {
        self.0.maps.limit_dim()
    }
    fn n_dst(&self) -> usize {
        self.0.wg.broken_dim()
    }
    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let s = self.0;
        let back = s.wave_l2.solve(&sparse::matvec_t(&s.maps.average_load, f));
        sub(s.maps.apply_lift(f), &back)
    }
    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        let s = self.0;
        let back = sparse::matvec(&s.maps.average_load, &s.wave_l2.solve(y));
        sub(sparse::matvec_t(&s.maps.lift, y), &back)
    }
}

// f ↦ (K + M)⁻¹ (K J¹ − Eᵀ J̃ᵀ K₀) f
impl LinearMap for FormGap<'_, '_> {
    fn n_src(&self) -> usize {
        self.0.maps.limit_dim()
    }
    fn n_dst(&self) -> usize {
        self.0.wg.dim()
    }
    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let s = self.0;
        let a = sparse::matvec(&s.wg.pair.k, &s.maps.apply_lift_h1(f));
        let b = s.wg.inject_t(&s.maps.apply_average_t(&sparse::matvec(&s.limit_form, f)));
        s.wave_h1.solve(&sub(a, &b))
    }
    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        let s = self.0;
        let z = s.wave_h1.solve(y);
        let a = sparse::matvec_t(&s.maps.lift_h1, &sparse::matvec(&s.wg.pair.k, &z));
        let b = sparse::matvec_t(&s.limit_form, &s.maps.apply_average(&s.wg.inject(&z)));
        sub(a, &b)
    }
}

pub fn resolvent_defect(maps: &IdMaps, wg: &Waveguide2d, limit: &LimitSpace) -> Result<NormEstimate> {
    Ok(DefectSolver::new(maps, wg, limit)?.resolvent_defect())
}

pub fn quasi_unitarity_defect(maps: &IdMaps, wg: &Waveguide2d, limit: &LimitSpace) -> Result<NormEstimate> {
    Ok(DefectSolver::new(maps, wg, limit)?.quasi_unitarity_defect())
}

/// Largest measured ratio lhs / (declared scale · rhs norm) for each auxiliary inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaRatios {
    /// |⟨u⟩ on the passage top − ⟨u⟩ on the room| / (|ln ε|^½ ‖∇u‖ on the room)
    pub room_mouth: f64,
    /// |⟨u⟩ on the passage bottom − ⟨u⟩ on the junction square| / (|ln ε|^½ ‖∇u‖ there)
    pub junction_mouth: f64,
    /// |⟨u⟩ on the passage bottom − ⟨u⟩ on the centre segment| / (|ln ε|^½ ‖∇u‖ on the junction)
    pub junction_centre: f64,
    /// ‖u‖² on the passage / (ε^{2α} (‖u‖²_{H¹(strip)} + ‖∇u‖² on the passage))
    pub passage_mass: f64,
    /// |⟨u⟩ on the junction − ⟨u⟩ on the centre segment| / (½‖∇u‖ on the junction); at most 1
    pub centre_average: f64,
    /// ‖J f − J¹ f‖ / (ε^{min(1,α)} ‖f‖ in the limit form norm), exact sup
    pub lift_gap: f64,
    pub samples: usize,
}

/// Element sets of one decoration.
struct SiteSets {
    room: Vec<usize>,
    passage: Vec<usize>,
    strip: Vec<usize>,
    junction: Vec<usize>,
}

fn site_sets(mesh: &Mesh2D, layout: &Layout, site: usize) -> SiteSets {
    let c = layout.sites[site].center;
    let eps = layout.epsilon;
    let of = |r: Region| -> Vec<usize> {
        (0..mesh.n_elements())
            .filter(|&e| mesh.element_region[e] == r && (r == Region::Strip || mesh.element_site[e] == Some(site)))
            .collect()
    };
    let strip = of(Region::Strip);
    let junction = strip
        .iter()
        .cloned()
        .filter(|&e| (mesh.centroid(e)[0] - c).abs() < eps / 2.0)
        .collect();
    SiteSets {
        room: of(Region::Room),
        passage: of(Region::Passage),
        strip,
        junction,
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num.abs() <= 1e-300 {
        0.0
    } else if den <= 1e-300 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Random test function on the mesh nodes: smooth cosine series, logarithmic spike at a passage
/// corner or mouth, or a vertical ramp, cycling with `i`.
fn test_function(mesh: &Mesh2D, layout: &Layout, site: usize, i: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s = layout.sites[site];
    let (x0, x1) = (layout.x_min, layout.x_max);
    let (y0, y1) = (-layout.epsilon, s.passage_height + s.room_side);
    let mut coef = [[0.0; 5]; 9];
    for (k, row) in coef.iter_mut().enumerate() {
        for (l, c) in row.iter_mut().enumerate() {
            *c = (2.0 * rng.random::<f64>() - 1.0) / (1.0 + (k + l) as f64).powi(2);
        }
    }
    let smooth = |p: [f64; 2]| {
        let tx = std::f64::consts::PI * (p[0] - x0) / (x1 - x0);
        let ty = std::f64::consts::PI * (p[1] - y0) / (y1 - y0);
        let mut v = 0.0;
        for (k, row) in coef.iter().enumerate() {
            for (l, c) in row.iter().enumerate() {
                v += c * (k as f64 * tx).cos() * (l as f64 * ty).cos();
            }
        }
        v
    };
    let (d, h) = (s.passage_width, s.passage_height);
    match i % 3 {
        0 => mesh.nodes.iter().map(|&p| smooth(p)).collect(),
        1 => {
            let corners = [
                [s.center, 0.0],
                [s.center, h],
                [s.center - d / 2.0, 0.0],
                [s.center + d / 2.0, 0.0],
                [s.center - d / 2.0, h],
                [s.center + d / 2.0, h],
            ];
            let q = corners[rng.random_range(0..corners.len())];
            let rho = d * 2f64.powf(-4.0 * rng.random::<f64>());
            let w = 0.1 * rng.random::<f64>();
            mesh.nodes
                .iter()
                .map(|&p| {
                    let r = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                    r.max(rho).ln() + w * smooth(p)
                })
                .collect()
        }
        _ => {
            let start = y0 + (y1 - y0) * rng.random::<f64>();
            let len = d + (y1 - y0) * rng.random::<f64>();
            mesh.nodes
                .iter()
                .map(|&p| ((p[1] - start) / len).clamp(0.0, 1.0))
                .collect()
        }
    }
}

/// Sampled constants of the auxiliary inequalities at one site, plus the exact lift gap.
pub fn lemma_checks(
    mesh: &Mesh2D,
    solver: &DefectSolver,
    alpha: f64,
    site: usize,
    samples: usize,
    seed: u64,
) -> Result<LemmaRatios> {
    let (_, layout) = column_structure(mesh)?;
    if site >= layout.sites.len() {
        return Err(Error::invalid("site", format!("no site {site}")));
    }
    let eps = layout.epsilon;
    let log = eps.ln().abs().sqrt();
    let sets = site_sets(mesh, layout, site);
    let mean = |els: &[usize], u: &[f64]| {
        let a = element_integrals(mesh, els.iter().cloned(), u);
        (a[1] / a[0], a)
    };
    let edge = |tag: EdgeTag, u: &[f64]| crate::fem::edge_mean(mesh, tag, Some(site), u);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = LemmaRatios {
        room_mouth: 0.0,
        junction_mouth: 0.0,
        junction_centre: 0.0,
        passage_mass: 0.0,
        centre_average: 0.0,
        lift_gap: 0.0,
        samples,
    };
    for i in 0..samples {
        let u = test_function(mesh, layout, site, i, &mut rng);
        let (room_mean, room) = mean(&sets.room, &u);
        let (junction_mean, junction) = mean(&sets.junction, &u);
        let top = edge(EdgeTag::DPlus, &u);
        let bottom = edge(EdgeTag::DMinus, &u);
        let centre = edge(EdgeTag::D0, &u);
        let grad_room = room[3].sqrt();
        let grad_junction = junction[3].sqrt();
        let strip = element_integrals(mesh, sets.strip.iter().cloned(), &u);
        let passage = element_integrals(mesh, sets.passage.iter().cloned(), &u);
        let upd = |slot: &mut f64, r: f64| *slot = slot.max(r);
        upd(&mut out.room_mouth, ratio((top - room_mean).abs(), log * grad_room));
        upd(&mut out.junction_mouth, ratio((bottom - junction_mean).abs(), log * grad_junction));
        upd(&mut out.junction_centre, ratio((bottom - centre).abs(), log * grad_junction));
        upd(
            &mut out.passage_mass,
            ratio(passage[2], eps.powf(2.0 * alpha) * (strip[2] + strip[3] + passage[3])),
        );
        upd(&mut out.centre_average, ratio((junction_mean - centre).abs(), 0.5 * grad_junction));
    }
    let gap = solver.lift_defect();
    out.lift_gap = gap.value / eps.powf(alpha.min(1.0));
    Ok(out)
}

/// Per-ε summary of the identification defects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub epsilon: f64,
    pub norm_resolvent_defect: f64,
    pub dual_resolvent_defect: f64,
    pub quasi_unitarity_defect: f64,
    pub lemma: Option<LemmaRatios>,
}
