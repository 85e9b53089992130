//! Hausdorff distances between finite spectra.

use serde::{Deserialize, Serialize};

use crate::eigensolve::Spectrum;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    /// λ ↦ (1 + λ)⁻¹
    InverseShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDistanceResult {
    pub value: f64,
    /// Largest (1 + Λ)⁻¹ over both cutoffs; the unseen tails live in [0, bound].
    pub truncation_bound: f64,
    pub transform_used: Transform,
}

impl SpectralDistanceResult {
    /// Value plus truncation bound, the quantity compared against rates.
    pub fn upper(&self) -> f64 {
        self.value + self.truncation_bound
    }
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in spectrum"));
    v
}

/// sup over x ∈ X of the distance to the sorted set `ys`.
fn directed(xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .map(|&x| {
            let i = ys.partition_point(|&y| y < x);
            let mut d = f64::INFINITY;
            if i < ys.len() {
                d = d.min(ys[i] - x);
            }
            if i > 0 {
                d = d.min(x - ys[i - 1]);
            }
            d
        })
        .fold(0.0, f64::max)
}

/// Two-sided Hausdorff distance of finite real sets.
pub fn hausdorff(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("set", "Hausdorff distance needs non-empty sets"));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::invalid("set", "NaN element"));
    }
    let (xs, ys) = (sorted(x), sorted(y));
    Ok(directed(&xs, &ys).max(directed(&ys, &xs)))
}

/// Resolvent-scale values (1 + λ)⁻¹ with the closure point 0 appended.
pub fn resolvent_points(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().map(|&l| 1.0 / (1.0 + l)).collect();
    v.push(0.0);
    v
}

/// Hausdorff distance after λ ↦ (1 + λ)⁻¹, both sets closed with 0.
pub fn tilde_hausdorff(a: &Spectrum, b: &Spectrum) -> Result<SpectralDistanceResult> {
    let (ca, cb) = match (a.cutoff, b.cutoff) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::invalid("spectrum", "both spectra need a certified cutoff")),
    };
    let value = hausdorff(&resolvent_points(&a.values), &resolvent_points(&b.values))?;
    let tail = |c: f64| if c.is_finite() { 1.0 / (1.0 + c) } else { 0.0 };
    Ok(SpectralDistanceResult {
        value,
        truncation_bound: tail(ca).max(tail(cb)),
        transform_used: Transform::InverseShift,
    })
}
