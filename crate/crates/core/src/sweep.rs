//! ε-sweeps with per-row mesh-error control and log–log rate fits.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolve::{eigs_lowest, Request, Spectrum};
use crate::error::{Error, Result};
use crate::fem::{discretize_waveguide, Potential, Waveguide2d};
use crate::geometry::{build_mesh, GeometryParams, Mesh2D, MeshControl};
use crate::identification::{build_maps, lemma_checks, limit_space, DefectSolver, LemmaRatios, LimitSpace};
use crate::metrics::{tilde_hausdorff, SpectralDistanceResult};

/// Serializable potential description.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PotentialConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Table {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
}

impl PotentialConfig {
    pub fn to_potential(&self) -> Result<Potential> {
        let p = match self {
            PotentialConfig::Zero => Potential::Zero,
            PotentialConfig::Constant { value } => Potential::Constant(*value),
            PotentialConfig::Table { breaks, values } => Potential::Table {
                breaks: breaks.clone(),
                values: values.clone(),
            },
        };
        p.check()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// ‖R_ε J − J R₀‖
    ResolventDefect,
    /// ‖J̃ R_ε − R₀ J̃‖
    DualResolventDefect,
    /// d̃_H of the two spectra below the cutoff, plus the truncation bound
    SpectralDistance,
    /// ‖u − J J̃ u‖ over the waveguide form norm
    QuasiUnitarity,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::ResolventDefect,
        Metric::DualResolventDefect,
        Metric::SpectralDistance,
        Metric::QuasiUnitarity,
    ];

    /// Predicted exponent of ε.
    pub fn expected_slope(self, alpha: f64, beta: f64) -> f64 {
        match self {
            Metric::ResolventDefect | Metric::DualResolventDefect => alpha.min(0.5 - beta),
            Metric::SpectralDistance => alpha.min(0.5 - beta).min(2.0 * beta),
            Metric::QuasiUnitarity => alpha.min(beta),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::ResolventDefect => "resolvent_defect",
            Metric::DualResolventDefect => "dual_resolvent_defect",
            Metric::SpectralDistance => "spectral_distance",
            Metric::QuasiUnitarity => "quasi_unitarity",
        }
    }
}

fn default_coarse() -> f64 {
    2.0
}

fn default_cutoff() -> f64 {
    1000.0
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::ResolventDefect, Metric::SpectralDistance]
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// ε in here is ignored; each row takes its value from `eps_list`.
    pub base: GeometryParams,
    pub eps_list: Vec<f64>,
    /// Multiplies the default cell sizes of the fine run.
    #[serde(default = "default_one")]
    pub mesh_scale: f64,
    /// Cell-size factor of the second run relative to the first.
    #[serde(default = "default_coarse")]
    pub coarse_factor: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// Sample count for the auxiliary inequality ratios; 0 skips them.
    #[serde(default)]
    pub lemma_samples: usize,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub seed: u64,
    /// Rows computed at once; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
}

impl SweepConfig {
    pub fn new(base: GeometryParams, eps_list: Vec<f64>) -> Self {
        SweepConfig {
            base,
            eps_list,
            mesh_scale: 1.0,
            coarse_factor: default_coarse(),
            cutoff: default_cutoff(),
            metrics: default_metrics(),
            lemma_samples: 0,
            potential: PotentialConfig::Zero,
            seed: 0,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_list.is_empty() {
            return Err(Error::invalid("eps_list", "empty"));
        }
        if self.eps_list.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::invalid("eps_list", "must be strictly decreasing"));
        }
        for &e in &self.eps_list {
            self.base.with_epsilon(e).validate()?;
        }
        if !(self.mesh_scale > 0.0 && self.coarse_factor > 1.0) {
            return Err(Error::invalid("mesh_scale", "need mesh_scale > 0 and coarse_factor > 1"));
        }
        if !(self.cutoff > 0.0) {
            return Err(Error::invalid("cutoff", "must be positive"));
        }
        if self.metrics.is_empty() {
            return Err(Error::invalid("metrics", "nothing to compute"));
        }
        self.potential.to_potential()?;
        Ok(())
    }
}

/// Everything needed to compare one waveguide with its limit.
pub struct Pipeline {
    pub mesh: Mesh2D,
    pub waveguide: Waveguide2d,
    pub limit: LimitSpace,
}

impl Pipeline {
    pub fn build(params: &GeometryParams, ctrl: &MeshControl, pot: &Potential) -> Result<Self> {
        let g = params.validate()?;
        let mesh = build_mesh(&g, ctrl)?;
        let waveguide = discretize_waveguide(&mesh, pot)?;
        let limit = limit_space(&mesh, &[params.gamma], pot)?;
        Ok(Pipeline { mesh, waveguide, limit })
    }

    /// Pipeline at the default resolution scaled by `mesh_scale`.
    pub fn at_scale(params: &GeometryParams, mesh_scale: f64, pot: &Potential) -> Result<Self> {
        let g = params.validate()?;
        Self::build(params, &MeshControl::for_geometry(&g).scaled(mesh_scale), pot)
    }

    pub fn spectral_distance(&self, cutoff: f64) -> Result<SpectralDistanceResult> {
        let (a, b) = self.spectra(cutoff)?;
        tilde_hausdorff(&a, &b)
    }

    /// (waveguide, limit) spectra below `cutoff`.
    pub fn spectra(&self, cutoff: f64) -> Result<(Spectrum, Spectrum)> {
        Ok((
            eigs_lowest(&self.waveguide.pair, Request::Below(cutoff))?,
            eigs_lowest(&self.limit.pair, Request::Below(cutoff))?,
        ))
    }
}

/// Metric values at one resolution.
fn evaluate(
    params: &GeometryParams,
    mesh_scale: f64,
    cfg: &SweepConfig,
    pot: &Potential,
    with_lemma: bool,
) -> Result<(BTreeMap<Metric, f64>, Option<LemmaRatios>)> {
    let p = Pipeline::at_scale(params, mesh_scale, pot)?;
    let maps = build_maps(&p.mesh, &p.waveguide, &p.limit)?;
    let solver = DefectSolver::new(&maps, &p.waveguide, &p.limit)?;
    let mut out = BTreeMap::new();
    for &m in &cfg.metrics {
        let v = match m {
            Metric::ResolventDefect => solver.resolvent_defect().value,
            Metric::DualResolventDefect => solver.dual_resolvent_defect().value,
            Metric::QuasiUnitarity => solver.quasi_unitarity_defect().value,
            Metric::SpectralDistance => p.spectral_distance(cfg.cutoff)?.upper(),
        };
        out.insert(m, v);
    }
    let lemma = if with_lemma && cfg.lemma_samples > 0 {
        Some(lemma_checks(&p.mesh, &solver, params.alpha, 0, cfg.lemma_samples, cfg.seed)?)
    } else {
        None
    };
    Ok((out, lemma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    /// Richardson estimate |fine − coarse| / 3 of the discretisation error in `value`.
    pub mesh_error: f64,
    /// Mesh error above a quarter of the value; excluded from fits.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub values: BTreeMap<Metric, MetricValue>,
    pub lemma: Option<LemmaRatios>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual in log space.
    pub residual: f64,
    pub points: usize,
    /// Rows dropped for a non-positive value.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFit {
    pub metric: Metric,
    pub expected_slope: f64,
    pub fit: Option<SlopeFit>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
    pub fits: Vec<MetricFit>,
}

impl ConvergenceReport {
    pub fn fit(&self, metric: Metric) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.metric == metric).and_then(|f| f.fit.as_ref())
    }

    /// True when every successful row passes the mesh-error flag for `metric`.
    pub fn all_unflagged(&self, metric: Metric) -> bool {
        self.rows
            .iter()
            .filter_map(|r| r.values.get(&metric))
            .all(|v| !v.flagged)
    }

    /// CSV with columns epsilon, then value and mesh error per metric, then flags and error.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon");
        for m in &self.config.metrics {
            s.push_str(&format!(",{0},{0}_mesh_error,{0}_flagged", m.name()));
        }
        s.push_str(",error\n");
        for r in &self.rows {
            s.push_str(&format!("{:e}", r.epsilon));
            for m in &self.config.metrics {
                match r.values.get(m) {
                    Some(v) => s.push_str(&format!(",{:e},{:e},{}", v.value, v.mesh_error, v.flagged)),
                    None => s.push_str(",,,"),
                }
            }
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            s.push_str(&format!(",{err}\n"));
        }
        s
    }
}

/// Least squares on (ln ε, ln value); rows with a non-positive value are dropped.
pub fn fit_slope(rows: &[(f64, f64)]) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|&&(e, v)| e > 0.0 && v > 0.0 && v.is_finite())
        .map(|&(e, v)| (e.ln(), v.ln()))
        .collect();
    let dropped = rows.len() - pts.len();
    if pts.len() < 3 {
        return Err(Error::invalid("rows", format!("need 3 usable rows, have {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rows", "all ε equal"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(SlopeFit {
        slope,
        intercept,
        residual: (rss / n).sqrt(),
        points: pts.len(),
        dropped,
    })
}

fn compute_row(cfg: &SweepConfig, eps: f64, pot: &Potential) -> SweepRow {
    let params = cfg.base.with_epsilon(eps);
    let run = || -> Result<(BTreeMap<Metric, MetricValue>, Option<LemmaRatios>)> {
        let (fine, lemma) = evaluate(&params, cfg.mesh_scale, cfg, pot, true)?;
        let (coarse, _) = evaluate(&params, cfg.mesh_scale * cfg.coarse_factor, cfg, pot, false)?;
        let values = fine
            .iter()
            .map(|(&m, &f)| {
                let err = (f - coarse[&m]).abs() / 3.0;
                (
                    m,
                    MetricValue {
                        value: f,
                        mesh_error: err,
                        flagged: err > 0.25 * f.abs(),
                    },
                )
            })
            .collect();
        Ok((values, lemma))
    };
    match run() {
        Ok((values, lemma)) => SweepRow {
            epsilon: eps,
            values,
            lemma,
            error: None,
        },
        Err(e) => SweepRow {
            epsilon: eps,
            values: BTreeMap::new(),
            lemma: None,
            error: Some(e.to_string()),
        },
    }
}

/// Evaluate every ε at two resolutions and fit one slope per metric.
///
/// A failing row is recorded and the sweep continues.
pub fn run_sweep(cfg: &SweepConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let pot = cfg.potential.to_potential()?;
    let rows_of = || -> Vec<SweepRow> { cfg.eps_list.par_iter().map(|&e| compute_row(cfg, e, &pot)).collect() };
    let rows = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Numerical(e.to_string()))?
            .install(rows_of)
    } else {
        rows_of()
    };
    let fits = cfg
        .metrics
        .iter()
        .map(|&m| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|r| r.values.get(&m).filter(|v| !v.flagged).map(|v| (r.epsilon, v.value)))
                .collect();
            let (fit, note) = match fit_slope(&pts) {
                Ok(f) => {
                    let note = (f.dropped > 0).then(|| format!("{} non-positive rows dropped", f.dropped));
                    (Some(f), note)
                }
                Err(e) => (None, Some(e.to_string())),
            };
            MetricFit {
                metric: m,
                expected_slope: m.expected_slope(cfg.base.alpha, cfg.base.beta),
                fit,
                note,
            }
        })
        .collect();
    Ok(ConvergenceReport {
        config: cfg.clone(),
        rows,
        fits,
    })
}
