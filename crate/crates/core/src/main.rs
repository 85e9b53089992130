use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use deltaguide::abstract_toolkit::run_suite;
use deltaguide::eigensolve::{eigs_lowest, Request};
use deltaguide::error::{Error, Result};
use deltaguide::geometry::{build_mesh, GeometryParams, MeshControl, Region};
use deltaguide::identification::{build_maps, DefectSolver};
use deltaguide::io::{band_csv, dump_matrix, read_json, write_json, write_mesh};
use deltaguide::kronig_penney::{kp_band_edges, kp_gaps};
use deltaguide::limit::{galerkin_spectrum, secular_spectrum, LimitSpec};
use deltaguide::sweep::{run_sweep, Metric, Pipeline, PotentialConfig, SweepConfig};

#[derive(Parser)]
#[command(name = "deltaguide", version, about = "Room-and-passage waveguides against their point-interaction limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check parameters and print the derived passage and room sizes
    Validate(Common),
    /// Build the mesh and print its statistics
    Mesh(Common),
    /// Waveguide eigenvalues below the cutoff
    Solve2d(Common),
    /// Limit-operator eigenvalues, by Galerkin and by the secular equation
    Solve1d(Common),
    /// Spectral distance and resolvent defects at one ε
    Compare(Common),
    /// ε-sweep with rate fits
    Sweep(Common),
    /// Band edges of the periodic point-interaction comb
    KpBands(Common),
    /// Randomized checks of the abstract comparison bounds
    AbstractSuite(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON file with any of the settings below
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the mesh as JSON here
    #[arg(long)]
    mesh_out: Option<PathBuf>,
    /// Write K and M as triplet files into this directory
    #[arg(long)]
    dump_matrices: Option<PathBuf>,
}

/// Settings file; every field optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Settings {
    ell_minus: Option<f64>,
    ell_plus: Option<f64>,
    gamma: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    epsilon: Option<f64>,
    eps_list: Option<Vec<f64>>,
    cutoff: Option<f64>,
    mesh_scale: Option<f64>,
    coarse_factor: Option<f64>,
    metrics: Option<Vec<Metric>>,
    lemma_samples: Option<usize>,
    potential: Option<PotentialConfig>,
    seed: Option<u64>,
    workers: Option<usize>,
    /// Galerkin cells for solve1d
    cells: Option<usize>,
    /// Eigenvalue count for solve1d
    count: Option<usize>,
    n_bands: Option<usize>,
    draws: Option<usize>,
    max_dim: Option<usize>,
}

impl Settings {
    fn load(c: &Common) -> Result<Self> {
        let mut s: Settings = match &c.config {
            Some(p) => read_json(p)?,
            None => Settings::default(),
        };
        s.epsilon = c.eps.or(s.epsilon);
        s.alpha = c.alpha.or(s.alpha);
        s.beta = c.beta.or(s.beta);
        s.gamma = c.gamma.or(s.gamma);
        Ok(s)
    }

    fn params(&self) -> GeometryParams {
        GeometryParams::new(
            self.ell_minus.unwrap_or(-1.0),
            self.ell_plus.unwrap_or(1.0),
            self.gamma.unwrap_or(1.0),
            self.alpha.unwrap_or(1.0 / 3.0),
            self.beta.unwrap_or(1.0 / 6.0),
            self.epsilon.unwrap_or(0.05),
        )
    }

    fn cutoff(&self) -> f64 {
        self.cutoff.unwrap_or(1000.0)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print_stdout(text)?,
    }
    Ok(())
}

/// Print to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn emit_json(out: Option<&Path>, v: &serde_json::Value) -> Result<()> {
    emit(out, &serde_json::to_string_pretty(v)?)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate(c) => {
            let s = Settings::load(&c)?;
            let p = s.params();
            let g = p.validate()?;
            let limits: Vec<_> = p.eps_limits().iter().map(|(b, v)| json!({"bound": b, "limit": v})).collect();
            emit_json(
                c.out.as_deref(),
                &json!({
                    "params": p,
                    "passage_width": g.passage_width,
                    "passage_height": g.passage_height,
                    "room_side": g.room_side,
                    "eps_limits": limits,
                    "eps_max": p.eps_max(),
                }),
            )
        }
        Command::Mesh(c) => {
            let s = Settings::load(&c)?;
            let g = s.params().validate()?;
            let ctrl = MeshControl::for_geometry(&g).scaled(s.mesh_scale.unwrap_or(1.0));
            let mesh = build_mesh(&g, &ctrl)?;
            if let Some(p) = &c.mesh_out {
                write_mesh(p, &mesh)?;
            }
            let count = |r: Region| mesh.elements_in(r).count();
            emit_json(
                c.out.as_deref(),
                &json!({
                    "control": ctrl,
                    "nodes": mesh.n_nodes(),
                    "elements": mesh.n_elements(),
                    "strip_elements": count(Region::Strip),
                    "passage_elements": count(Region::Passage),
                    "room_elements": count(Region::Room),
                    "h_by_region": mesh.h_by_region,
                    "area": mesh.total_area(),
                    "exact_area": g.area(),
                }),
            )
        }
        Command::Solve2d(c) => {
            let s = Settings::load(&c)?;
            let pot = s.potential.clone().unwrap_or_default().to_potential()?;
            let p = Pipeline::at_scale(&s.params(), s.mesh_scale.unwrap_or(1.0), &pot)?;
            if let Some(path) = &c.mesh_out {
                write_mesh(path, &p.mesh)?;
            }
            if let Some(dir) = &c.dump_matrices {
                std::fs::create_dir_all(dir)?;
                dump_matrix(&dir.join("stiffness.txt"), "stiffness", &p.waveguide.pair.k)?;
                dump_matrix(&dir.join("mass.txt"), "mass", &p.waveguide.pair.m)?;
            }
            let spec = eigs_lowest(&p.waveguide.pair, Request::Below(s.cutoff()))?;
            emit_json(c.out.as_deref(), &json!({"dofs": p.waveguide.dim(), "spectrum": spec}))
        }
        Command::Solve1d(c) => {
            let s = Settings::load(&c)?;
            let p = s.params();
            let mut spec = LimitSpec::free((p.ell_minus, p.ell_plus), p.gamma);
            spec.potential = s.potential.clone().unwrap_or_default().to_potential()?;
            let n = s.cells.unwrap_or(4096);
            let k = s.count.unwrap_or(8);
            let galerkin = galerkin_spectrum(&spec, n, k)?;
            let secular = if spec.potential.is_zero() {
                let top = galerkin.values.iter().cloned().fold(0.0, f64::max);
                Some(secular_spectrum(&spec, top.sqrt() * 1.01 + 1.0)?)
            } else {
                None
            };
            emit_json(c.out.as_deref(), &json!({"galerkin": galerkin, "secular": secular}))
        }
        Command::Compare(c) => {
            let s = Settings::load(&c)?;
            let pot = s.potential.clone().unwrap_or_default().to_potential()?;
            let p = Pipeline::at_scale(&s.params(), s.mesh_scale.unwrap_or(1.0), &pot)?;
            let maps = build_maps(&p.mesh, &p.waveguide, &p.limit)?;
            let solver = DefectSolver::new(&maps, &p.waveguide, &p.limit)?;
            let dist = p.spectral_distance(s.cutoff())?;
            emit_json(
                c.out.as_deref(),
                &json!({
                    "epsilon": s.params().epsilon,
                    "spectral_distance": dist,
                    "resolvent_defect": solver.resolvent_defect(),
                    "dual_resolvent_defect": solver.dual_resolvent_defect(),
                    "quasi_unitarity_defect": solver.quasi_unitarity_defect(),
                    "coupling_defects": solver.coupling_defects(),
                    "resolvent_bound": solver.resolvent_bound(),
                }),
            )
        }
        Command::Sweep(c) => {
            let s = Settings::load(&c)?;
            let eps_list = s.eps_list.clone().ok_or_else(|| Error::invalid("eps_list", "required for a sweep"))?;
            let mut cfg = SweepConfig::new(s.params(), eps_list);
            cfg.cutoff = s.cutoff();
            if let Some(v) = s.mesh_scale {
                cfg.mesh_scale = v;
            }
            if let Some(v) = s.coarse_factor {
                cfg.coarse_factor = v;
            }
            if let Some(v) = &s.metrics {
                cfg.metrics = v.clone();
            }
            cfg.lemma_samples = s.lemma_samples.unwrap_or(0);
            cfg.potential = s.potential.clone().unwrap_or_default();
            cfg.seed = s.seed.unwrap_or(0);
            cfg.workers = s.workers.unwrap_or(0);
            let report = run_sweep(&cfg)?;
            for r in &report.rows {
                if let Some(e) = &r.error {
                    eprintln!("warning: row ε = {} failed: {e}", r.epsilon);
                }
            }
            for f in &report.fits {
                if let Some(n) = &f.note {
                    eprintln!("warning: {}: {n}", f.metric.name());
                }
            }
            match &c.out {
                Some(p) => {
                    write_json(p, &report)?;
                    std::fs::write(p.with_extension("csv"), report.to_csv())?;
                }
                None => print_stdout(&serde_json::to_string_pretty(&report)?)?,
            }
            if report.fits.iter().all(|f| f.fit.is_none()) {
                return Err(Error::Numerical("no metric had three usable rows".into()));
            }
            Ok(())
        }
        Command::KpBands(c) => {
            let s = Settings::load(&c)?;
            let gamma = s.gamma.unwrap_or(1.0);
            let bands = kp_band_edges(gamma, s.n_bands.unwrap_or(6))?;
            match &c.out {
                Some(p) if p.extension().is_some_and(|e| e == "json") => write_json(
                    p,
                    &json!({"gamma": gamma, "bands": bands, "gaps": kp_gaps(&bands)}),
                ),
                out => emit(out.as_deref(), band_csv(&bands).trim_end()),
            }
        }
        Command::AbstractSuite(c) => {
            let s = Settings::load(&c)?;
            let draws = s.draws.unwrap_or(10_000);
            let max_dim = s.max_dim.unwrap_or(20);
            if max_dim < 2 {
                return Err(Error::invalid("max_dim", "must be at least 2"));
            }
            let summary = run_suite(draws, max_dim, s.seed.unwrap_or(0));
            emit_json(c.out.as_deref(), &serde_json::to_value(summary)?)?;
            let violations = summary.resolvent_violations
                + summary.spectral_violations
                + summary.same_space_violations
                + summary.quasi_unitary_violations;
            if violations > 0 || summary.failures > 0 {
                return Err(Error::Numerical(format!(
                    "{violations} violations, {} failed draws",
                    summary.failures
                )));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
