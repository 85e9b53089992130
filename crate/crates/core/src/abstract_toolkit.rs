//! Finite-dimensional checks of the comparison results for two non-negative operators in two
//! different spaces: the resolvent bound by four coupling defects, the spectral bound from
//! resolvent defects plus domination constants, and the quasi-unitary constants.
//!
//! Operators are given by form matrices and SPD Gram (mass) matrices, so the operator is
//! M⁻¹A and the resolvent (A + M)⁻¹M.

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolve::{dense_generalized, sym_eigen};
use crate::error::{Error, Result};
use crate::metrics::hausdorff;

/// Two form/mass pairs and the four coupling maps between them.
#[derive(Debug, Clone)]
pub struct AbstractInstance {
    pub form_src: DMatrix<f64>,
    pub mass_src: DMatrix<f64>,
    pub form_dst: DMatrix<f64>,
    pub mass_dst: DMatrix<f64>,
    /// src → dst
    pub fwd: DMatrix<f64>,
    /// dst → src
    pub bwd: DMatrix<f64>,
    /// src form domain → dst form domain
    pub fwd1: DMatrix<f64>,
    /// dst form domain → src form domain
    pub bwd1: DMatrix<f64>,
}

fn chol(g: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let sym = (g + g.transpose()) * 0.5;
    Cholesky::new(sym).ok_or_else(|| Error::Factorization(format!("{what} is not positive definite")))
}

/// Eigenvalues of the symmetric part; NaN when the solver fails.
fn sym_values(a: &DMatrix<f64>) -> Vec<f64> {
    match sym_eigen(&((a + a.transpose()) * 0.5)) {
        Ok(e) => e.eigenvalues.iter().cloned().collect(),
        Err(_) => vec![f64::NAN],
    }
}

fn min_eig(a: &DMatrix<f64>) -> f64 {
    sym_values(a).into_iter().fold(f64::INFINITY, f64::min)
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

impl AbstractInstance {
    pub fn dim_src(&self) -> usize {
        self.form_src.nrows()
    }

    pub fn dim_dst(&self) -> usize {
        self.form_dst.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.dim_src(), self.dim_dst());
        let square = |a: &DMatrix<f64>, k: usize| a.nrows() == k && a.ncols() == k;
        if !(square(&self.form_src, n) && square(&self.mass_src, n) && square(&self.form_dst, m) && square(&self.mass_dst, m))
        {
            return Err(Error::Dimension("form and mass matrices must be square of matching size".into()));
        }
        let shaped = |a: &DMatrix<f64>, r: usize, c: usize| a.nrows() == r && a.ncols() == c;
        if !(shaped(&self.fwd, m, n) && shaped(&self.fwd1, m, n) && shaped(&self.bwd, n, m) && shaped(&self.bwd1, n, m)) {
            return Err(Error::Dimension("coupling maps have the wrong shape".into()));
        }
        for (a, name) in [
            (&self.form_src, "source form"),
            (&self.mass_src, "source mass"),
            (&self.form_dst, "target form"),
            (&self.mass_dst, "target mass"),
        ] {
            let scale = max_abs(a).max(1e-300);
            if max_abs(&(a - a.transpose())) > 1e-12 * scale {
                return Err(Error::invalid("instance", format!("{name} is not symmetric")));
            }
            if min_eig(a) < -1e-10 * scale {
                return Err(Error::invalid("instance", format!("{name} is not positive semidefinite")));
            }
        }
        chol(&self.mass_src, "source mass")?;
        chol(&self.mass_dst, "target mass")?;
        Ok(())
    }

    /// (A + M)⁻¹M on the source side.
    pub fn resolvent_src(&self) -> Result<DMatrix<f64>> {
        resolvent(&self.form_src, &self.mass_src)
    }

    pub fn resolvent_dst(&self) -> Result<DMatrix<f64>> {
        resolvent(&self.form_dst, &self.mass_dst)
    }

    /// Spectrum of the source resolvent with the point 0 appended.
    pub fn resolvent_spectrum_src(&self) -> Result<Vec<f64>> {
        resolvent_spectrum(&self.form_src, &self.mass_src)
    }

    pub fn resolvent_spectrum_dst(&self) -> Result<Vec<f64>> {
        resolvent_spectrum(&self.form_dst, &self.mass_dst)
    }
}

fn resolvent(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(chol(&(a + m), "A + M")?.solve(m))
}

fn resolvent_spectrum(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (vals, _) = dense_generalized(a, m)?;
    let mut out: Vec<f64> = vals.iter().map(|l| 1.0 / (1.0 + l.max(0.0))).collect();
    out.push(0.0);
    Ok(out)
}

/// Gram matrix of the graph norm ‖(M⁻¹A + I) f‖_M: (A + M) M⁻¹ (A + M).
pub fn graph_gram(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = a + m;
    let g = &s * chol(m, "mass")?.solve(&s);
    Ok((&g + g.transpose()) * 0.5)
}

/// Norm of x from (src, G_src) to (dst, G_dst).
pub fn weighted_norm(x: &DMatrix<f64>, g_src: &DMatrix<f64>, g_dst: &DMatrix<f64>) -> Result<f64> {
    let ls = chol(g_src, "source Gram")?.l();
    let ld = chol(g_dst, "target Gram")?.l();
    // ‖L_dᵀ X L_s⁻ᵀ‖₂
    let y = ls
        .solve_lower_triangular(&(ld.transpose() * x).transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok(y.singular_values().max())
}

/// sup |uᵀ B f| / (‖u‖_{G_row} ‖f‖_{G_col}).
pub fn bilinear_norm(b: &DMatrix<f64>, g_row: &DMatrix<f64>, g_col: &DMatrix<f64>) -> Result<f64> {
    let lr = chol(g_row, "row Gram")?.l();
    let lc = chol(g_col, "column Gram")?.l();
    let y = lr
        .solve_lower_triangular(b)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let z = lc
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok(z.singular_values().max())
}

/// Optimal constants of the four coupling conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaParts {
    /// ‖J f − J¹ f‖ ≤ δ ‖f‖ in the source form norm
    pub fwd_gap: f64,
    /// ‖J̃ u − J̃¹ u‖ ≤ δ ‖u‖ in the target form norm
    pub bwd_gap: f64,
    /// |(J f, u) − (f, J̃ u)| ≤ δ ‖f‖ ‖u‖
    pub adjoint_gap: f64,
    /// |ã[J¹ f, u] − a[f, J̃¹ u]| ≤ δ ‖f‖ in the graph norm · ‖u‖ in the form norm
    pub form_gap: f64,
}

impl DeltaParts {
    pub fn max(&self) -> f64 {
        self.fwd_gap.max(self.bwd_gap).max(self.adjoint_gap).max(self.form_gap)
    }
}

/// [`bilinear_norm`] with the graph Gram of (A, M) on the column side, without forming it.
///
/// (A+M) M⁻¹ (A+M) = X Xᵀ with X = (A+M) L_M⁻ᵀ, so the norm is ‖L_row⁻¹ B (A+M)⁻¹ L_M‖₂ and the
/// conditioning of A+M is not squared.
pub fn graph_bilinear_norm(b: &DMatrix<f64>, g_row: &DMatrix<f64>, a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    let lr = chol(g_row, "row Gram")?.l();
    let lm = chol(m, "mass")?.l();
    let s = chol(&(a + m), "form plus mass")?;
    let y = lr
        .solve_lower_triangular(b)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let z = s.solve(&y.transpose()).transpose();
    Ok((z * lm).singular_values().max())
}

pub fn measure_delta(inst: &AbstractInstance) -> Result<DeltaParts> {
    inst.validate()?;
    let h1_src = &inst.form_src + &inst.mass_src;
    let h1_dst = &inst.form_dst + &inst.mass_dst;
    let adjoint = &inst.mass_dst * &inst.fwd - inst.bwd.transpose() * &inst.mass_src;
    let form = &inst.form_dst * &inst.fwd1 - inst.bwd1.transpose() * &inst.form_src;
    Ok(DeltaParts {
        fwd_gap: weighted_norm(&(&inst.fwd - &inst.fwd1), &h1_src, &inst.mass_dst)?,
        bwd_gap: weighted_norm(&(&inst.bwd - &inst.bwd1), &h1_dst, &inst.mass_src)?,
        adjoint_gap: bilinear_norm(&adjoint, &inst.mass_dst, &inst.mass_src)?,
        form_gap: graph_bilinear_norm(&form, &h1_dst, &inst.form_src, &inst.mass_src)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl BoundCheck {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        BoundCheck {
            lhs,
            rhs,
            pass: lhs <= rhs + 1e-10,
        }
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// R̃J − JR as a matrix.
pub fn resolvent_gap(inst: &AbstractInstance) -> Result<DMatrix<f64>> {
    Ok(inst.resolvent_dst()? * &inst.fwd - &inst.fwd * inst.resolvent_src()?)
}

/// J̃R̃ − RJ̃ as a matrix.
pub fn resolvent_gap_back(inst: &AbstractInstance) -> Result<DMatrix<f64>> {
    Ok(&inst.bwd * inst.resolvent_dst()? - inst.resolvent_src()? * &inst.bwd)
}

/// ‖R̃J − JR‖ against four times the largest coupling defect.
pub fn resolvent_bound_check(inst: &AbstractInstance) -> Result<BoundCheck> {
    let delta = measure_delta(inst)?.max();
    let lhs = weighted_norm(&resolvent_gap(inst)?, &inst.mass_src, &inst.mass_dst)?;
    Ok(BoundCheck::new(lhs, 4.0 * delta))
}

/// Constants entering the spectral bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsBundle {
    pub delta: f64,
    pub eta: f64,
    pub eta_t: f64,
    pub mu: f64,
    pub nu: f64,
    pub mu_t: f64,
    pub nu_t: f64,
    pub kappa: f64,
    pub kappa_t: f64,
}

impl ConstantsBundle {
    pub fn bound(&self) -> f64 {
        [
            self.eta * (self.mu / self.kappa).sqrt(),
            self.nu / (1.0 - self.kappa),
            self.eta_t * (self.mu_t / self.kappa_t).sqrt(),
            self.nu_t / (1.0 - self.kappa_t),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Smallest μ with ‖f‖² ≤ μ‖Jf‖² + ν a[f] for all f, i.e. M − νA ≤ μP with P = JᵀM̃J.
///
/// Infinite when no μ works (M − νA positive somewhere on the kernel of P).
pub fn min_mu(mass: &DMatrix<f64>, form: &DMatrix<f64>, lifted: &DMatrix<f64>, nu: f64) -> f64 {
    let q = mass - form * nu;
    let q = (&q + q.transpose()) * 0.5;
    let scale = max_abs(mass).max(max_abs(lifted)).max(max_abs(&q)).max(1e-300);
    let Ok(eig) = sym_eigen(&((lifted + lifted.transpose()) * 0.5)) else {
        return f64::NAN;
    };
    let p_top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-10 * p_top.max(1e-300);
    let range: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > tol).collect();
    let kernel: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] <= tol).collect();
    if range.is_empty() {
        return if min_eig(&(-&q)) >= -1e-11 * scale { 0.0 } else { f64::INFINITY };
    }
    let u1 = eig.eigenvectors.select_columns(&range);
    // scale the range basis so that P becomes the identity there
    let inv_sqrt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        range.len(),
        range.iter().map(|&i| eig.eigenvalues[i].powf(-0.5)),
    ));
    let w1 = &u1 * inv_sqrt;
    let q11 = w1.transpose() * &q * &w1;
    let top = |m: &DMatrix<f64>| sym_values(m).into_iter().fold(f64::NEG_INFINITY, f64::max);
    if kernel.is_empty() {
        return top(&q11).max(0.0);
    }
    // Q ≤ μP splits over range ⊕ kernel: Q00 must be negative definite, then the Schur
    // complement Q11 − Q10 Q00⁻¹ Q01 bounds μ
    let u0 = eig.eigenvectors.select_columns(&kernel);
    let q00 = u0.transpose() * &q * &u0;
    let q00_top = top(&q00);
    if q00_top > 1e-11 * scale {
        return f64::INFINITY;
    }
    if q00_top > -1e-9 * scale {
        return min_mu_bisect(&q, lifted, scale);
    }
    let q10 = w1.transpose() * &q * &u0;
    match chol(&(-&q00), "kernel block") {
        Ok(c) => top(&(q11 + &q10 * c.solve(&q10.transpose()))).max(0.0),
        Err(_) => min_mu_bisect(&q, lifted, scale),
    }
}

/// Bisection on μ with a semidefiniteness test; only for borderline kernels.
fn min_mu_bisect(q: &DMatrix<f64>, lifted: &DMatrix<f64>, scale: f64) -> f64 {
    let ok = |mu: f64| min_eig(&(lifted * mu - q)) >= -1e-11 * scale * (1.0 + mu);
    let mut hi = 1.0;
    while !ok(hi) {
        hi *= 4.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    if ok(lo) {
        return 0.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// (ν, μ(ν)) on a grid of ν values: the trade-off between the two domination constants.
pub fn domination_frontier(mass: &DMatrix<f64>, form: &DMatrix<f64>, lifted: &DMatrix<f64>, nus: &[f64]) -> Vec<(f64, f64)> {
    nus.iter().map(|&nu| (nu, min_mu(mass, form, lifted, nu))).collect()
}

fn nu_grid() -> Vec<f64> {
    // ν beyond 1/λ_min(nonzero) gains nothing; a geometric grid up to a few units covers it
    let mut g = vec![0.0];
    g.extend((0..25).map(|i| 1e-4 * 1.6f64.powi(i)));
    g
}

/// Pick the frontier point minimising max{η√(μ/κ), ν/(1−κ)}.
fn best_pair(frontier: &[(f64, f64)], eta: f64, kappa: f64) -> (f64, f64) {
    let cost = |(nu, mu): (f64, f64)| (eta * (mu / kappa).sqrt()).max(nu / (1.0 - kappa));
    frontier
        .iter()
        .cloned()
        .filter(|p| p.1.is_finite())
        .min_by(|a, b| cost(*a).partial_cmp(&cost(*b)).unwrap())
        .map(|(nu, mu)| (mu, nu))
        .unwrap_or((f64::INFINITY, f64::INFINITY))
}

/// Measure η, η̃ and choose domination pairs on the ν grid for the given κ, κ̃.
pub fn constants_bundle(inst: &AbstractInstance, kappa: f64, kappa_t: f64) -> Result<ConstantsBundle> {
    if !(kappa > 0.0 && kappa < 1.0 && kappa_t > 0.0 && kappa_t < 1.0) {
        return Err(Error::invalid("kappa", "must lie in (0, 1)"));
    }
    let delta = measure_delta(inst)?.max();
    let eta = weighted_norm(&resolvent_gap(inst)?, &inst.mass_src, &inst.mass_dst)?;
    let eta_t = weighted_norm(&resolvent_gap_back(inst)?, &inst.mass_dst, &inst.mass_src)?;
    let lifted = inst.fwd.transpose() * &inst.mass_dst * &inst.fwd;
    let lifted_t = inst.bwd.transpose() * &inst.mass_src * &inst.bwd;
    let f = domination_frontier(&inst.mass_src, &inst.form_src, &lifted, &nu_grid());
    let ft = domination_frontier(&inst.mass_dst, &inst.form_dst, &lifted_t, &nu_grid());
    let (mu, nu) = best_pair(&f, eta, kappa);
    let (mu_t, nu_t) = best_pair(&ft, eta_t, kappa_t);
    Ok(ConstantsBundle {
        delta,
        eta,
        eta_t,
        mu,
        nu,
        mu_t,
        nu_t,
        kappa,
        kappa_t,
    })
}

/// Hausdorff distance of the two resolvent spectra (0 appended to both) against the bound.
pub fn spectral_bound_check(inst: &AbstractInstance, bundle: &ConstantsBundle) -> Result<BoundCheck> {
    let d = hausdorff(&inst.resolvent_spectrum_src()?, &inst.resolvent_spectrum_dst()?)?;
    Ok(BoundCheck::new(d, bundle.bound()))
}

/// Domination constants implied by a quasi-unitary defect δ < 2/3.
pub fn quasi_unitary_constants(delta: f64) -> Result<(f64, f64)> {
    if !(delta >= 0.0 && delta < 2.0 / 3.0) {
        return Err(Error::invalid("delta", "must lie in [0, 2/3)"));
    }
    let den = 2.0 - 3.0 * delta;
    Ok((1.0 + 4.0 * delta / den, delta / den))
}

/// Largest of ‖f − J̃Jf‖/‖f‖₁, ‖u − JJ̃u‖/‖u‖₁ and the adjoint defect.
pub fn quasi_unitary_delta(inst: &AbstractInstance) -> Result<f64> {
    let (n, m) = (inst.dim_src(), inst.dim_dst());
    let h1_src = &inst.form_src + &inst.mass_src;
    let h1_dst = &inst.form_dst + &inst.mass_dst;
    let a = weighted_norm(&(DMatrix::identity(n, n) - &inst.bwd * &inst.fwd), &h1_src, &inst.mass_src)?;
    let b = weighted_norm(&(DMatrix::identity(m, m) - &inst.fwd * &inst.bwd), &h1_dst, &inst.mass_dst)?;
    let adjoint = &inst.mass_dst * &inst.fwd - inst.bwd.transpose() * &inst.mass_src;
    let c = bilinear_norm(&adjoint, &inst.mass_dst, &inst.mass_src)?;
    Ok(a.max(b).max(c))
}

/// Whether ‖f‖² ≤ μ‖Jf‖² + ν a[f] holds (and its tilde twin), up to round-off.
pub fn domination_holds(inst: &AbstractInstance, mu: f64, nu: f64) -> bool {
    let check = |mass: &DMatrix<f64>, form: &DMatrix<f64>, j: &DMatrix<f64>, mj: &DMatrix<f64>| {
        let gap = j.transpose() * mj * j * mu + form * nu - mass;
        let scale = max_abs(mass).max(max_abs(form) * nu).max(1e-300);
        min_eig(&gap) >= -1e-10 * scale
    };
    check(&inst.mass_src, &inst.form_src, &inst.fwd, &inst.mass_dst)
        && check(&inst.mass_dst, &inst.form_dst, &inst.bwd, &inst.mass_src)
}

/// Spectral distance in one space against the operator norm of the difference.
pub fn same_space_check(r: &DMatrix<f64>, r_t: &DMatrix<f64>) -> Result<BoundCheck> {
    let sym = |a: &DMatrix<f64>| (a + a.transpose()) * 0.5;
    let s = sym_eigen(&sym(r))?.eigenvalues;
    let t = sym_eigen(&sym(r_t))?.eigenvalues;
    let d = hausdorff(s.as_slice(), t.as_slice())?;
    let norm = sym_eigen(&(sym(r) - sym(r_t)))?.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(BoundCheck::new(d, norm))
}

// ---------------------------------------------------------------------------------------------
// random instances

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InstanceKind {
    /// Target = source ⊕ extra block with exactly intertwining maps, then perturbed by `noise`.
    Intertwined { noise: f64 },
    /// Unrelated random operators and maps.
    Generic,
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let rank = rng.random_range(1..=n);
    let scale = 10f64.powf(rng.random_range(-1.0..1.5));
    let g = gaussian(rng, rank, n) * scale;
    let a = g.transpose() * g;
    (&a + a.transpose()) * 0.5
}

fn random_mass(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = gaussian(rng, n, n) * (0.3 / (n as f64).sqrt());
    let m = DMatrix::identity(n, n) + g.transpose() * g;
    (&m + m.transpose()) * 0.5
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, kind: InstanceKind) -> AbstractInstance {
    match kind {
        InstanceKind::Intertwined { noise } => {
            let m = m.max(n);
            let form_src = random_psd(rng, n);
            let mass_src = random_mass(rng, n);
            let extra = m - n;
            let mut form_dst = DMatrix::zeros(m, m);
            let mut mass_dst = DMatrix::zeros(m, m);
            form_dst.view_mut((0, 0), (n, n)).copy_from(&form_src);
            mass_dst.view_mut((0, 0), (n, n)).copy_from(&mass_src);
            if extra > 0 {
                form_dst.view_mut((n, n), (extra, extra)).copy_from(&random_psd(rng, extra));
                mass_dst.view_mut((n, n), (extra, extra)).copy_from(&random_mass(rng, extra));
            }
            let emb = DMatrix::<f64>::identity(m, n);
            let proj = DMatrix::<f64>::identity(n, m);
            let s = noise / ((n + m) as f64).sqrt();
            let pert = gaussian(rng, m, m) * s * 0.1;
            let form_dst = &form_dst + pert.transpose() * &pert;
            AbstractInstance {
                fwd: &emb + gaussian(rng, m, n) * s,
                bwd: &proj + gaussian(rng, n, m) * s,
                fwd1: &emb + gaussian(rng, m, n) * s,
                bwd1: &proj + gaussian(rng, n, m) * s,
                form_src,
                mass_src,
                form_dst: (&form_dst + form_dst.transpose()) * 0.5,
                mass_dst,
            }
        }
        InstanceKind::Generic => {
            let s = 1.0 / ((n + m) as f64).sqrt();
            AbstractInstance {
                form_src: random_psd(rng, n),
                mass_src: random_mass(rng, n),
                form_dst: random_psd(rng, m),
                mass_dst: random_mass(rng, m),
                fwd: gaussian(rng, m, n) * s,
                bwd: gaussian(rng, n, m) * s,
                fwd1: gaussian(rng, m, n) * s,
                bwd1: gaussian(rng, n, m) * s,
            }
        }
    }
}

/// Draw `i` of a suite: dimensions up to `max_dim`, alternating instance kinds.
pub fn suite_instance(seed: u64, i: usize, max_dim: usize) -> AbstractInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let n = rng.random_range(2..=max_dim);
    let m = rng.random_range(2..=max_dim);
    let kind = if i % 2 == 0 {
        InstanceKind::Intertwined {
            noise: 10f64.powf(rng.random_range(-4.0..0.0)),
        }
    } else {
        InstanceKind::Generic
    };
    random_instance(&mut rng, n, m, kind)
}

/// Outcome of a randomized run over all checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub draws: usize,
    pub resolvent_violations: usize,
    pub resolvent_min_margin: f64,
    pub spectral_violations: usize,
    pub spectral_min_margin: f64,
    pub same_space_violations: usize,
    pub same_space_min_margin: f64,
    /// Instances with quasi-unitary defect below 2/3, where the implied constants were checked.
    pub quasi_unitary_checked: usize,
    pub quasi_unitary_violations: usize,
    pub failures: usize,
}

struct DrawOutcome {
    resolvent: f64,
    spectral: f64,
    same_space: f64,
    quasi: Option<bool>,
}

fn run_draw(seed: u64, i: usize, max_dim: usize) -> Result<DrawOutcome> {
    let inst = suite_instance(seed, i, max_dim);
    let a1 = resolvent_bound_check(&inst)?;
    let bundle = constants_bundle(&inst, 0.5, 0.5)?;
    let a2 = spectral_bound_check(&inst, &bundle)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
    let k = inst.dim_src();
    let r = {
        let g = gaussian(&mut rng, k, k);
        (&g + g.transpose()) * 0.5
    };
    let r_t = &r + {
        let g = gaussian(&mut rng, k, k) * 10f64.powf(rng.random_range(-3.0..0.5));
        (&g + g.transpose()) * 0.5
    };
    let hn = same_space_check(&r, &r_t)?;
    let qd = quasi_unitary_delta(&inst)?;
    let quasi = if qd < 2.0 / 3.0 {
        let (mu, nu) = quasi_unitary_constants(qd)?;
        Some(domination_holds(&inst, mu, nu))
    } else {
        None
    };
    Ok(DrawOutcome {
        resolvent: a1.margin(),
        spectral: a2.margin(),
        same_space: hn.margin(),
        quasi,
    })
}

/// Run `draws` random instances of dimension ≤ `max_dim` in parallel; reproducible per seed.
pub fn run_suite(draws: usize, max_dim: usize, seed: u64) -> SuiteSummary {
    let outcomes: Vec<Result<DrawOutcome>> = (0..draws).into_par_iter().map(|i| run_draw(seed, i, max_dim)).collect();
    let mut s = SuiteSummary {
        draws,
        resolvent_violations: 0,
        resolvent_min_margin: f64::INFINITY,
        spectral_violations: 0,
        spectral_min_margin: f64::INFINITY,
        same_space_violations: 0,
        same_space_min_margin: f64::INFINITY,
        quasi_unitary_checked: 0,
        quasi_unitary_violations: 0,
        failures: 0,
    };
    for o in outcomes {
        let Ok(o) = o else {
            s.failures += 1;
            continue;
        };
        let tally = |m: f64, count: &mut usize, min: &mut f64| {
            if m < -1e-10 {
                *count += 1;
            }
            *min = min.min(m);
        };
        tally(o.resolvent, &mut s.resolvent_violations, &mut s.resolvent_min_margin);
        tally(o.spectral, &mut s.spectral_violations, &mut s.spectral_min_margin);
        tally(o.same_space, &mut s.same_space_violations, &mut s.same_space_min_margin);
        if let Some(ok) = o.quasi {
            s.quasi_unitary_checked += 1;
            if !ok {
                s.quasi_unitary_violations += 1;
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_constants() {
        assert_eq!(quasi_unitary_constants(0.0).unwrap(), (1.0, 0.0));
        let (mu, nu) = quasi_unitary_constants(0.2).unwrap();
        assert!((mu - (1.0 + 0.8 / 1.4)).abs() < 1e-15);
        assert!((nu - 0.2 / 1.4).abs() < 1e-15);
        assert!(quasi_unitary_constants(2.0 / 3.0).is_err());
    }

    #[test]
    fn exact_intertwining_has_zero_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 5, 7, InstanceKind::Intertwined { noise: 0.0 });
        let d = measure_delta(&inst).unwrap();
        assert!(d.max() < 1e-10, "{d:?}");
        let c = resolvent_bound_check(&inst).unwrap();
        assert!(c.lhs < 1e-12);
    }
}
