use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Geometry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    Strip,
    Passage,
    Room,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Strip, Region::Passage, Region::Room];

    pub fn index(self) -> usize {
        match self {
            Region::Strip => 0,
            Region::Passage => 1,
            Region::Room => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeTag {
    /// Outer boundary edge.
    Neumann,
    /// Passage–room interface.
    DPlus,
    /// Strip–passage interface.
    DMinus,
    /// Vertical segment through the strip below a passage centre.
    D0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedEdge {
    pub nodes: [usize; 2],
    pub tag: EdgeTag,
    pub site: Option<usize>,
}

/// One passage with the room on top of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub center: f64,
    pub passage_width: f64,
    pub passage_height: f64,
    pub room_side: f64,
}

/// Strip (x_min, x_max) × (−ε, 0) decorated at each site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub x_min: f64,
    pub x_max: f64,
    pub epsilon: f64,
    pub sites: Vec<Site>,
}

impl Layout {
    /// `n_cells` identical decorations at the cell centres of (0, n_cells·period).
    pub fn periodic(n_cells: usize, period: f64, epsilon: f64, site: Site) -> Self {
        let sites = (0..n_cells)
            .map(|j| Site {
                center: (j as f64 + 0.5) * period,
                ..site
            })
            .collect();
        Layout {
            x_min: 0.0,
            x_max: n_cells as f64 * period,
            epsilon,
            sites,
        }
    }

    /// Point classification by open regions; `None` outside the domain or on an interface.
    pub fn region_of(&self, x: f64, y: f64) -> Option<(Region, Option<usize>)> {
        if y > -self.epsilon && y < 0.0 && x > self.x_min && x < self.x_max {
            return Some((Region::Strip, None));
        }
        for (k, s) in self.sites.iter().enumerate() {
            let dx = (x - s.center).abs();
            if dx < s.passage_width / 2.0 && y > 0.0 && y < s.passage_height {
                return Some((Region::Passage, Some(k)));
            }
            if dx < s.room_side / 2.0 && y > s.passage_height && y < s.passage_height + s.room_side {
                return Some((Region::Room, Some(k)));
            }
        }
        None
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * self.epsilon
            + self
                .sites
                .iter()
                .map(|s| s.passage_width * s.passage_height + s.room_side * s.room_side)
                .sum::<f64>()
    }
}

/// Resolution controls for the template mesher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshControl {
    /// Largest cell side in the strip.
    pub strip_h: f64,
    /// Largest cell side in the rooms.
    pub room_h: f64,
    /// Uniform cells across a passage (even, at least 4).
    pub cells_across: usize,
    /// Minimum cells along a passage (at least 4).
    pub cells_along: usize,
    /// Ratio between neighbouring cell sizes away from passage corners.
    pub grading: f64,
    /// Passage cells are at most this many times taller than wide.
    pub passage_aspect: f64,
}

impl MeshControl {
    /// Default resolution tied to ε: strip h = ε/8, room h = b/16, 4×8 passage cells.
    pub fn policy(epsilon: f64, room_side: f64) -> Self {
        MeshControl {
            strip_h: epsilon / 8.0,
            room_h: room_side / 16.0,
            cells_across: 4,
            cells_along: 8,
            grading: 1.5,
            passage_aspect: 8.0,
        }
    }

    pub fn for_geometry(g: &Geometry) -> Self {
        Self::policy(g.epsilon(), g.room_side)
    }

    /// Scale every cell size by `factor`; counts across passages never drop below 4.
    pub fn scaled(&self, factor: f64) -> Self {
        let across = ((self.cells_across as f64 / factor).round() as usize).max(4);
        MeshControl {
            strip_h: self.strip_h * factor,
            room_h: self.room_h * factor,
            cells_across: across + across % 2,
            cells_along: ((self.cells_along as f64 / factor).round() as usize).max(4),
            grading: self.grading,
            passage_aspect: self.passage_aspect,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.strip_h > 0.0 && self.room_h > 0.0) {
            return Err(Error::invalid("mesh", "cell sizes must be positive"));
        }
        if self.cells_across < 4 || self.cells_across % 2 != 0 {
            return Err(Error::invalid("mesh", "cells_across must be even and at least 4"));
        }
        if self.cells_along < 4 {
            return Err(Error::invalid("mesh", "cells_along must be at least 4"));
        }
        if !(self.grading > 1.0) || !(self.passage_aspect >= 1.0) {
            return Err(Error::invalid("mesh", "grading must exceed 1 and aspect cap at least 1"));
        }
        Ok(())
    }
}

/// Tensor structure of the strip: node id of (xs[i], ys[j]) is `nodes[i * ys.len() + j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub nodes: Vec<usize>,
}

impl StripGrid {
    pub fn node(&self, ix: usize, iy: usize) -> usize {
        self.nodes[ix * self.ys.len() + iy]
    }

    /// Column index of every strip node, `None` for nodes not in the strip.
    pub fn column_of_nodes(&self, n_nodes: usize) -> Vec<Option<usize>> {
        let mut col = vec![None; n_nodes];
        let ny = self.ys.len();
        for (k, &id) in self.nodes.iter().enumerate() {
            col[id] = Some(k / ny);
        }
        col
    }

    /// Index of the column at `x` (exact match).
    pub fn column_at(&self, x: f64) -> Option<usize> {
        self.xs.iter().position(|&v| v == x)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mesh2D {
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 3]>,
    pub element_region: Vec<Region>,
    pub element_site: Vec<Option<usize>>,
    pub edges: Vec<TaggedEdge>,
    /// Largest element diameter per region, indexed by `Region::index`.
    pub h_by_region: [f64; 3],
    pub strip: Option<StripGrid>,
    pub layout: Option<Layout>,
}

impl Mesh2D {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn signed_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let [a, b, c] = self.elements[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }

    /// Midpoint of the element's x₁-extent.
    pub fn x_mid(&self, e: usize) -> f64 {
        let xs = self.elements[e].map(|n| self.nodes[n][0]);
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.signed_area(e)).sum()
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.n_elements())
            .filter(|&e| self.element_region[e] == region)
            .map(|e| self.signed_area(e))
            .sum()
    }

    pub fn edges_tagged(&self, tag: EdgeTag) -> impl Iterator<Item = &TaggedEdge> {
        self.edges.iter().filter(move |e| e.tag == tag)
    }

    pub fn elements_in(&self, region: Region) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_elements()).filter(move |&e| self.element_region[e] == region)
    }

    /// Number of elements sharing each undirected edge.
    pub fn edge_multiplicity(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (e, tri) in self.elements.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                map.entry((a.min(b), a.max(b))).or_default().push(e);
            }
        }
        map
    }
}

struct NodeTable {
    nodes: Vec<[f64; 2]>,
    index: HashMap<(u64, u64), usize>,
}

impl NodeTable {
    fn new() -> Self {
        NodeTable {
            nodes: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn id(&mut self, x: f64, y: f64) -> usize {
        // +0.0 normalises a signed zero
        let key = ((x + 0.0).to_bits(), (y + 0.0).to_bits());
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push([x + 0.0, y + 0.0]);
        self.index.insert(key, i);
        i
    }
}

/// Points a = t₀ < … < t_N = b whose spacing follows `size`, with N ≥ `min_cells`.
fn graded(a: f64, b: f64, size: impl Fn(f64) -> f64, min_cells: usize) -> Vec<f64> {
    debug_assert!(b > a);
    // fine table of F(x) = ∫ₐˣ 1/size
    let mut tx = vec![a];
    let mut tf = vec![0.0];
    let mut x = a;
    let mut f = 0.0;
    while x < b {
        let step = (size(x) / 32.0).min(b - x);
        let xn = if b - x - step < 1e-3 * step { b } else { x + step };
        f += 0.5 * (xn - x) * (1.0 / size(x) + 1.0 / size(xn));
        x = xn;
        tx.push(x);
        tf.push(f);
    }
    let n = ((f - 1e-9).ceil() as usize).max(min_cells).max(1);
    let mut pts = Vec::with_capacity(n + 1);
    pts.push(a);
    let mut j = 0;
    for i in 1..n {
        let target = f * i as f64 / n as f64;
        while tf[j + 1] < target {
            j += 1;
        }
        let s = (target - tf[j]) / (tf[j + 1] - tf[j]);
        pts.push(tx[j] + s * (tx[j + 1] - tx[j]));
    }
    pts.push(b);
    pts
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            if i == n {
                b
            } else {
                a + (b - a) * i as f64 / n as f64
            }
        })
        .collect()
}

/// Concatenate per-segment point lists over consecutive breakpoints.
fn piecewise(breaks: &[f64], mut segment: impl FnMut(f64, f64) -> Vec<f64>) -> Vec<f64> {
    let mut out = vec![breaks[0]];
    for w in breaks.windows(2) {
        let pts = segment(w[0], w[1]);
        out.extend_from_slice(&pts[1..]);
    }
    out
}

#[derive(Clone, Copy)]
enum Diagonal {
    Rising,
    Falling,
}

struct Builder {
    table: NodeTable,
    elements: Vec<[usize; 3]>,
    region: Vec<Region>,
    site: Vec<Option<usize>>,
}

impl Builder {
    fn tensor(
        &mut self,
        xs: &[f64],
        ys: &[f64],
        region: Region,
        site: Option<usize>,
        diag: impl Fn(f64) -> Diagonal,
    ) -> Vec<usize> {
        let ny = ys.len();
        let mut ids = Vec::with_capacity(xs.len() * ny);
        for &x in xs {
            for &y in ys {
                ids.push(self.table.id(x, y));
            }
        }
        for i in 0..xs.len() - 1 {
            let d = diag(0.5 * (xs[i] + xs[i + 1]));
            for j in 0..ny - 1 {
                let p00 = ids[i * ny + j];
                let p10 = ids[(i + 1) * ny + j];
                let p01 = ids[i * ny + j + 1];
                let p11 = ids[(i + 1) * ny + j + 1];
                let tris = match d {
                    Diagonal::Rising => [[p00, p10, p11], [p00, p11, p01]],
                    Diagonal::Falling => [[p00, p10, p01], [p10, p11, p01]],
                };
                for t in tris {
                    self.elements.push(t);
                    self.region.push(region);
                    self.site.push(site);
                }
            }
        }
        ids
    }
}

fn max_diameter(nodes: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let mut m: f64 = 0.0;
    for k in 0..3 {
        let (a, b) = (nodes[tri[k]], nodes[tri[(k + 1) % 3]]);
        m = m.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
    }
    m
}

fn finish(b: Builder, strip: Option<StripGrid>, layout: Option<Layout>) -> Mesh2D {
    let nodes = b.table.nodes;
    let mut h_by_region = [0.0f64; 3];
    for (tri, r) in b.elements.iter().zip(&b.region) {
        let h = max_diameter(&nodes, tri);
        h_by_region[r.index()] = h_by_region[r.index()].max(h);
    }
    let mut mesh = Mesh2D {
        nodes,
        elements: b.elements,
        element_region: b.region,
        element_site: b.site,
        edges: Vec::new(),
        h_by_region,
        strip,
        layout,
    };
    let mult = mesh.edge_multiplicity();
    let mut edges = Vec::new();
    let mut keys: Vec<_> = mult.keys().cloned().collect();
    keys.sort_unstable();
    for key in keys {
        let els = &mult[&key];
        let nodes = [key.0, key.1];
        if els.len() == 1 {
            edges.push(TaggedEdge {
                nodes,
                tag: EdgeTag::Neumann,
                site: mesh.element_site[els[0]],
            });
            continue;
        }
        let (r0, r1) = (mesh.element_region[els[0]], mesh.element_region[els[1]]);
        let pair = (r0.min(r1), r0.max(r1));
        let site = mesh.element_site[els[0]].or(mesh.element_site[els[1]]);
        match pair {
            (Region::Strip, Region::Passage) => edges.push(TaggedEdge {
                nodes,
                tag: EdgeTag::DMinus,
                site,
            }),
            (Region::Passage, Region::Room) => edges.push(TaggedEdge {
                nodes,
                tag: EdgeTag::DPlus,
                site,
            }),
            _ => {}
        }
    }
    if let (Some(grid), Some(layout)) = (&mesh.strip, &mesh.layout) {
        for (k, s) in layout.sites.iter().enumerate() {
            if let Some(ix) = grid.column_at(s.center) {
                for iy in 0..grid.ys.len() - 1 {
                    edges.push(TaggedEdge {
                        nodes: [grid.node(ix, iy), grid.node(ix, iy + 1)],
                        tag: EdgeTag::D0,
                        site: Some(k),
                    });
                }
            }
        }
    }
    mesh.edges = edges;
    mesh
}

/// Uniform n×n mesh of the unit square, one region, all-Neumann boundary.
pub fn unit_square_mesh(n: usize) -> Mesh2D {
    let xs = linspace(0.0, 1.0, n.max(1));
    let mut b = Builder {
        table: NodeTable::new(),
        elements: Vec::new(),
        region: Vec::new(),
        site: Vec::new(),
    };
    b.tensor(&xs, &xs, Region::Strip, None, |_| Diagonal::Rising);
    finish(b, None, None)
}

/// Mesh of the single-decoration waveguide for validated parameters.
pub fn build_mesh(g: &Geometry, ctrl: &MeshControl) -> Result<Mesh2D> {
    build_layout_mesh(&g.layout(), ctrl)
}

/// Mesh of an arbitrary decorated strip.
pub fn build_layout_mesh(layout: &Layout, ctrl: &MeshControl) -> Result<Mesh2D> {
    ctrl.check()?;
    let len = layout.x_max - layout.x_min;
    let eps = layout.epsilon;
    if !(len > 0.0 && eps > 0.0) {
        return Err(Error::Degenerate("empty strip".into()));
    }
    if layout.sites.is_empty() {
        return Err(Error::Degenerate("layout has no decoration".into()));
    }
    for s in &layout.sites {
        if !(s.passage_width > 1e-10 * len) {
            return Err(Error::Degenerate(format!(
                "passage width {:e} below resolution of strip length {len}",
                s.passage_width
            )));
        }
        if s.passage_width > s.room_side || s.passage_width > eps {
            return Err(Error::Degenerate("passage wider than room or strip".into()));
        }
    }
    let r = ctrl.grading - 1.0;
    let n_across = ctrl.cells_across;

    let mut corners: Vec<(f64, f64)> = Vec::new();
    let mut breaks = vec![layout.x_min, layout.x_max];
    for s in &layout.sites {
        let s0 = s.passage_width / n_across as f64;
        corners.push((s.center - s.passage_width / 2.0, s0));
        corners.push((s.center + s.passage_width / 2.0, s0));
        for off in [-eps / 2.0, -s.passage_width / 2.0, 0.0, s.passage_width / 2.0, eps / 2.0] {
            breaks.push(s.center + off);
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if breaks.windows(2).any(|w| !(w[1] > w[0])) || breaks[0] < layout.x_min || *breaks.last().unwrap() > layout.x_max {
        return Err(Error::Degenerate("decorations overlap or leave the strip".into()));
    }
    let s_min = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let corner_size = |x: f64| {
        corners
            .iter()
            .map(|&(c, s0)| s0 + r * (x - c).abs())
            .fold(f64::INFINITY, f64::min)
    };
    let in_passage = |a: f64, b: f64| {
        let m = 0.5 * (a + b);
        layout
            .sites
            .iter()
            .any(|s| (m - s.center).abs() < s.passage_width / 2.0)
    };
    let half_cells = n_across / 2;
    let xs = piecewise(&breaks, |a, b| {
        if in_passage(a, b) {
            linspace(a, b, half_cells)
        } else {
            graded(a, b, |x| corner_size(x).min(ctrl.strip_h), 1)
        }
    });
    let strip_min = (eps / ctrl.strip_h - 1e-9).ceil().max(1.0) as usize;
    let ys = graded(-eps, 0.0, |y| (s_min + r * y.abs()).min(ctrl.strip_h), strip_min);

    let nearest_center = |x: f64| {
        layout
            .sites
            .iter()
            .min_by(|a, b| (x - a.center).abs().partial_cmp(&(x - b.center).abs()).unwrap())
            .map(|s| s.center)
            .unwrap()
    };
    let diag = |xm: f64| {
        if xm < nearest_center(xm) {
            Diagonal::Falling
        } else {
            Diagonal::Rising
        }
    };

    let mut b = Builder {
        table: NodeTable::new(),
        elements: Vec::new(),
        region: Vec::new(),
        site: Vec::new(),
    };
    let strip_ids = b.tensor(&xs, &ys, Region::Strip, None, diag);

    for (k, s) in layout.sites.iter().enumerate() {
        let (c, d, h, side) = (s.center, s.passage_width, s.passage_height, s.room_side);
        let s0 = d / n_across as f64;
        let px: Vec<f64> = xs
            .iter()
            .cloned()
            .filter(|&x| x >= c - d / 2.0 && x <= c + d / 2.0)
            .collect();
        debug_assert_eq!(px.len(), n_across + 1);
        let cap = (h / ctrl.cells_along as f64).min(ctrl.passage_aspect * s0);
        let py = graded(0.0, h, |y| (s0 + r * y.min(h - y)).min(cap), ctrl.cells_along);
        b.tensor(&px, &py, Region::Passage, Some(k), diag);

        let room_breaks = [c - side / 2.0, c - d / 2.0, c + d / 2.0, c + side / 2.0];
        let rx = piecewise(&room_breaks, |a, bb| {
            if (0.5 * (a + bb) - c).abs() < d / 2.0 {
                px.clone()
            } else {
                let size = |x: f64| (s0 + r * ((x - (c - d / 2.0)).abs().min((x - (c + d / 2.0)).abs()))).min(ctrl.room_h);
                graded(a, bb, size, 1)
            }
        });
        let room_min = (side / ctrl.room_h - 1e-9).ceil().max(1.0) as usize;
        let ry = graded(h, h + side, |y| (s0 + r * (y - h)).min(ctrl.room_h), room_min);
        b.tensor(&rx, &ry, Region::Room, Some(k), diag);
    }

    let strip = StripGrid {
        xs,
        ys,
        nodes: strip_ids,
    };
    Ok(finish(b, Some(strip), Some(layout.clone())))
}
