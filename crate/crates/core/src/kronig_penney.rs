//! Periodic decorations: the limiting δ-comb on the line with unit spacing, its bands from
//! the one-period transfer matrix, and finite stacks of rooms on a long strip.

use serde::{Deserialize, Serialize};

use crate::eigensolve::{eigs_lowest, Request, Spectrum};
use crate::error::{Error, Result};
use crate::fem::{assemble_2d, BoundaryCondition, Potential};
use crate::geometry::{build_layout_mesh, GeometryParams, Layout, MeshControl, Site};

/// Transfer matrix of one period for -f'' = k² f: free propagation over half a period,
/// the derivative jump γ f, then the other half. Acts on (f, f').
pub fn monodromy(k: f64, gamma: f64) -> [[f64; 2]; 2] {
    let half = |t: f64| {
        let (s, c) = (k * t).sin_cos();
        // k → 0 limit of sin(kt)/k is t
        let sk = if k.abs() < 1e-300 { t } else { s / k };
        [[c, sk], [-k * s, c]]
    };
    let jump = [[1.0, 0.0], [gamma, 1.0]];
    let p = half(0.5);
    mul(&p, &mul(&jump, &p))
}

fn mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Half the trace of the monodromy; λ = k² is in the spectrum iff |value| ≤ 1.
pub fn half_trace(k: f64, gamma: f64) -> f64 {
    let m = monodromy(k, gamma);
    0.5 * (m[0][0] + m[1][1])
}

/// (start, end) of the first `n_bands` bands in λ.
///
/// Band n lives in k ∈ [(n−1)π, nπ]; it ends at nπ where the half trace is ±1, and starts where
/// the half trace enters [−1, 1] after the previous gap.
pub fn kp_band_edges(gamma: f64, n_bands: usize) -> Result<Vec<(f64, f64)>> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", "must be finite and non-negative"));
    }
    let pi = std::f64::consts::PI;
    let mut out = Vec::with_capacity(n_bands);
    for n in 1..=n_bands {
        let (a, b) = ((n - 1) as f64 * pi, n as f64 * pi);
        let end = b * b;
        if gamma == 0.0 {
            out.push((a * a, end));
            continue;
        }
        // outside the band just after a, inside just before b; find the crossing |Δ| = 1
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let g = |k: f64| sign * half_trace(k, gamma) - 1.0;
        // |Δ| = 1 exactly at a, and γ > 0 pushes it outside just after a
        let (mut lo, mut hi) = (a, b - 1e-9 * b.max(1.0));
        if g(hi) > 0.0 {
            return Err(Error::Bracketing(format!("band {n} has no interior")));
        }
        while hi - lo > 1e-12 * hi.max(1.0) {
            let m = 0.5 * (lo + hi);
            if g(m) > 0.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        let k = 0.5 * (lo + hi);
        out.push((k * k, end));
    }
    Ok(out)
}

/// Gaps between consecutive bands, as (start, end) in λ.
pub fn kp_gaps(bands: &[(f64, f64)]) -> Vec<(f64, f64)> {
    bands.windows(2).map(|w| (w[0].1, w[1].0)).collect()
}

/// Finite stack of identical decorations at the centres of unit-spaced cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSpec {
    pub period: f64,
    pub gamma: f64,
    pub n_cells: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl PeriodicSpec {
    /// Check the shape parameters and the disjointness of neighbouring rooms.
    pub fn validate(&self) -> Result<Site> {
        if self.n_cells < 1 {
            return Err(Error::invalid("n_cells", "need at least one cell"));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::invalid("period", "must be positive"));
        }
        let p = self.period;
        let g = GeometryParams::new(-p, p, self.gamma, self.alpha, self.beta, self.epsilon).validate()?;
        if !(g.room_side < p - g.passage_width) {
            return Err(Error::invalid(
                "beta",
                format!("rooms of side {} overlap at period {p}", g.room_side),
            ));
        }
        if self.epsilon >= p / 2.0 {
            return Err(Error::invalid("epsilon", "junction squares of neighbouring cells overlap"));
        }
        Ok(Site {
            center: 0.0,
            passage_width: g.passage_width,
            passage_height: g.passage_height,
            room_side: g.room_side,
        })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn layout(&self) -> Result<Layout> {
        let site = self.validate()?;
        Ok(Layout::periodic(self.n_cells, self.period, self.epsilon, site))
    }
}

/// Neumann spectrum of the finite stack below `cutoff`.
pub fn truncated_2d_spectrum(spec: &PeriodicSpec, cutoff: f64) -> Result<Spectrum> {
    truncated_2d_spectrum_with(spec, cutoff, 1.0)
}

/// As [`truncated_2d_spectrum`], with the default mesh sizes multiplied by `mesh_scale`.
pub fn truncated_2d_spectrum_with(spec: &PeriodicSpec, cutoff: f64, mesh_scale: f64) -> Result<Spectrum> {
    let layout = spec.layout()?;
    let ctrl = MeshControl::policy(spec.epsilon, layout.sites[0].room_side).scaled(mesh_scale);
    let mesh = build_layout_mesh(&layout, &ctrl)?;
    let pair = assemble_2d(&mesh, &Potential::Zero, BoundaryCondition::AllNeumann)?;
    eigs_lowest(&pair, Request::Below(cutoff))
}

/// Where the eigenvalues of one finite stack sit relative to the bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub epsilon: f64,
    /// Eigenvalues below half the first band start: one low mode per room.
    pub cluster_size: usize,
    /// Largest depth inside a gap, as a fraction of that gap's width (0 at an edge, ½ in the middle).
    pub max_relative_intrusion: f64,
    /// Largest depth inside a gap in resolvent coordinates λ ↦ (1+λ)⁻¹.
    pub max_resolvent_intrusion: f64,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gamma: f64,
    pub cutoff: f64,
    pub gaps: Vec<(f64, f64)>,
    pub rows: Vec<GapRow>,
}

impl GapReport {
    /// Relative intrusion strictly decreasing along the ε sequence.
    pub fn decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].max_relative_intrusion < w[0].max_relative_intrusion || w[0].max_relative_intrusion == 0.0)
    }
}

/// Depth of `v` inside a gap (a, b): (relative to the width, in resolvent coordinates).
fn intrusion(v: f64, gaps: &[(f64, f64)]) -> (f64, f64) {
    for &(a, b) in gaps {
        if v > a && v < b {
            let rel = (v - a).min(b - v) / (b - a);
            let r = |x: f64| 1.0 / (1.0 + x);
            let res = (r(a) - r(v)).min(r(v) - r(b));
            return (rel, res);
        }
    }
    (0.0, 0.0)
}

pub fn classify(epsilon: f64, values: &[f64], bands: &[(f64, f64)]) -> GapRow {
    let gaps = kp_gaps(bands);
    let threshold = 0.5 * bands[0].0;
    let cluster_size = values.iter().filter(|&&v| v < threshold).count();
    let (mut rel, mut res) = (0.0f64, 0.0f64);
    for &v in values.iter().filter(|&&v| v >= threshold) {
        let (a, b) = intrusion(v, &gaps);
        rel = rel.max(a);
        res = res.max(b);
    }
    GapRow {
        epsilon,
        cluster_size,
        max_relative_intrusion: rel,
        max_resolvent_intrusion: res,
        eigenvalues: values.to_vec(),
    }
}

/// Gap intrusion of the finite 2D stack along a decreasing ε sequence.
pub fn gap_evidence(spec: &PeriodicSpec, eps_sequence: &[f64], cutoff: f64) -> Result<GapReport> {
    if eps_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("eps_list", "must be strictly decreasing"));
    }
    let n_bands = ((cutoff.sqrt() / std::f64::consts::PI).ceil() as usize + 1).max(2);
    let bands = kp_band_edges(spec.gamma, n_bands)?;
    let rows = eps_sequence
        .iter()
        .map(|&e| {
            let s = truncated_2d_spectrum(&spec.with_epsilon(e), cutoff)?;
            Ok(classify(e, &s.values, &bands))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapReport {
        gamma: spec.gamma,
        cutoff,
        gaps: kp_gaps(&bands),
        rows,
    })
}

/// Nodes of a uniform 1D grid on (0, n_cells·period) with a node at every cell centre.
pub fn comb_grid(n_cells: usize, period: f64, per_cell: usize) -> Vec<f64> {
    let per_cell = per_cell + per_cell % 2;
    let n = n_cells * per_cell;
    let h = period / per_cell as f64;
    (0..=n).map(|i| i as f64 * h).collect()
}
