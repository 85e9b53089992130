//! The limit operator: an interval Schrödinger operator with a point interaction at 0,
//! direct-summed with the zero operator on ℂ.

use serde::{Deserialize, Serialize};

use crate::eigensolve::{eigs_lowest, Request, Spectrum};
use crate::error::{Error, Result};
use crate::fem::{assemble_1d, assemble_1d_grid, DiscreteOperatorPair, Potential, SpaceTag};
use crate::sparse::Pattern;

#[derive(Debug, Clone)]
pub struct LimitSpec {
    pub interval: (f64, f64),
    pub gamma: f64,
    pub potential: Potential,
}

impl LimitSpec {
    pub fn free(interval: (f64, f64), gamma: f64) -> Self {
        LimitSpec {
            interval,
            gamma,
            potential: Potential::Zero,
        }
    }

    pub fn check(&self) -> Result<()> {
        let (a, b) = self.interval;
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::invalid("interval", "must be finite"));
        }
        if !(a < 0.0 && b > 0.0) {
            return Err(Error::invalid("interval", "must contain 0 in its interior"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", "must be finite and non-negative"));
        }
        self.potential.check()
    }
}

/// Matching determinant for wavenumber k: eigenfunctions are cosines anchored at the two
/// Neumann ends, glued at 0 by continuity and the derivative jump γ f(0).
pub fn matching_determinant(k: f64, left: f64, right: f64, gamma: f64) -> f64 {
    k * (k * (left + right)).sin() - gamma * (k * left).cos() * (k * right).cos()
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a <= 1e-13 * m.max(1.0) {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Positive roots in (0, k_max] found by sign changes on a grid with step `h`.
fn scan_roots(left: f64, right: f64, gamma: f64, k_max: f64, h: f64) -> Vec<f64> {
    let f = |k: f64| matching_determinant(k, left, right, gamma);
    let mut roots = Vec::new();
    let mut a = h * 0.5;
    let mut fa = f(a);
    while a < k_max {
        let b = (a + h).min(k_max);
        let fb = f(b);
        if fb == 0.0 {
            roots.push(b);
        } else if (fa < 0.0) != (fb < 0.0) && fa != 0.0 {
            roots.push(bisect(f, a, b, fa));
        }
        a = b;
        fa = fb;
        if b >= k_max {
            break;
        }
    }
    roots
}

/// Eigenvalues k² ≤ k_max² of the limit operator with V = 0, plus the appended 0.
pub fn secular_spectrum(spec: &LimitSpec, k_max: f64) -> Result<Spectrum> {
    spec.check()?;
    if !spec.potential.is_zero() {
        return Err(Error::invalid("potential", "the secular equation needs V = 0"));
    }
    let (a, b) = spec.interval;
    let (left, right) = (-a, b);
    let mut h = (std::f64::consts::PI / (2.0 * (b - a))).min(0.1) / 4.0;
    let mut roots = scan_roots(left, right, spec.gamma, k_max, h);
    let mut stable = false;
    for _ in 0..8 {
        h /= 2.0;
        let finer = scan_roots(left, right, spec.gamma, k_max, h);
        if finer.len() == roots.len() {
            stable = true;
            roots = finer;
            break;
        }
        roots = finer;
    }
    if !stable {
        return Err(Error::Bracketing("root count did not stabilise under grid halving".into()));
    }
    let mut values: Vec<f64> = roots.iter().map(|k| k * k).collect();
    if spec.gamma == 0.0 {
        values.push(0.0);
    }
    Ok(Spectrum::new(values, Some(k_max * k_max)).with_appended_zero())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GalerkinOptions {
    /// Combine n and n/2 cells as (4λ_n − λ_{n/2})/3.
    pub richardson: bool,
}

/// Lowest `k` eigenvalues of the P1 discretisation on `n` uniform cells, plus the appended 0.
pub fn galerkin_spectrum(spec: &LimitSpec, n: usize, k: usize) -> Result<Spectrum> {
    galerkin_spectrum_with(spec, n, k, GalerkinOptions { richardson: false })
}

pub fn galerkin_spectrum_with(spec: &LimitSpec, n: usize, k: usize, opts: GalerkinOptions) -> Result<Spectrum> {
    spec.check()?;
    let fine = galerkin_raw(spec, n, k)?;
    let values = if opts.richardson {
        if n % 2 != 0 {
            return Err(Error::invalid("n", "extrapolation needs an even cell count"));
        }
        let coarse = galerkin_raw(spec, n / 2, k)?;
        fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
    } else {
        fine
    };
    Ok(Spectrum::new(values, None).with_appended_zero())
}

fn galerkin_raw(spec: &LimitSpec, n: usize, k: usize) -> Result<Vec<f64>> {
    let pair = assemble_1d(spec.interval, n, &spec.potential, spec.gamma)?;
    Ok(eigs_lowest(&pair, Request::Count(k))?.values)
}

/// Discretisation of the full limit space: P1 on `xs` with point interactions, then one
/// scalar dof per room (mass 1, form 0) appended after the grid dofs.
pub fn limit_pair(xs: &[f64], pot: &Potential, deltas: &[(f64, f64)], n_scalars: usize) -> Result<DiscreteOperatorPair> {
    let line = assemble_1d_grid(xs, pot, deltas)?;
    let n = xs.len();
    let total = n + n_scalars;
    let mut els: Vec<Vec<usize>> = (0..n - 1).map(|i| vec![i, i + 1]).collect();
    els.extend((n..total).map(|i| vec![i]));
    let pattern = Pattern::from_elements(total, els.iter().map(|e| &e[..]));
    let mut kv = pattern.zeros();
    let mut mv = pattern.zeros();
    for (v, (i, j)) in line.k.iter() {
        kv[pattern.slot(i, j)] += *v;
    }
    for (v, (i, j)) in line.m.iter() {
        mv[pattern.slot(i, j)] += *v;
    }
    for i in n..total {
        mv[pattern.slot(i, i)] = 1.0;
    }
    Ok(DiscreteOperatorPair {
        k: pattern.to_csr(kv),
        m: pattern.to_csr(mv),
        space: SpaceTag::Limit,
        nodes: (0..total).collect(),
    })
}
