//! Model parameters and the decorated-strip domain.

mod mesh;

pub use mesh::{
    build_layout_mesh, build_mesh, unit_square_mesh, EdgeTag, Layout, Mesh2D, MeshControl, Region,
    Site, StripGrid, TaggedEdge,
};

use serde::{Deserialize, Serialize};

use crate::error::{EpsBound, Error, Result};

/// Raw scalar parameters of the waveguide family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub ell_minus: f64,
    pub ell_plus: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl GeometryParams {
    pub fn new(ell_minus: f64, ell_plus: f64, gamma: f64, alpha: f64, beta: f64, epsilon: f64) -> Self {
        Self {
            ell_minus,
            ell_plus,
            gamma,
            alpha,
            beta,
            epsilon,
        }
    }

    /// Same shape parameters on the interval (−1, 1).
    pub fn symmetric(gamma: f64, alpha: f64, beta: f64, epsilon: f64) -> Self {
        Self::new(-1.0, 1.0, gamma, alpha, beta, epsilon)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Upper bounds on ε, in the order they are checked.
    pub fn eps_limits(&self) -> [(EpsBound, f64); 4] {
        let GeometryParams {
            ell_minus,
            ell_plus,
            gamma,
            alpha,
            beta,
            ..
        } = *self;
        [
            (EpsBound::PassageWidth, (2.0 * gamma).powf(-1.0 / alpha)),
            (EpsBound::IntervalLength, ell_minus.abs().min(ell_plus)),
            (EpsBound::RoomFit, gamma.powf(-1.0 / (alpha + 1.0 - beta))),
            (EpsBound::Coupling, gamma.min(1.0 / gamma)),
        ]
    }

    /// Largest admissible ε (exclusive).
    pub fn eps_max(&self) -> f64 {
        self.eps_limits()
            .iter()
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<Geometry> {
        validate_params(self)
    }
}

/// Parameters that passed validation, with the derived passage and room sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geometry {
    pub params: GeometryParams,
    /// d = γ ε^(α+1)
    pub passage_width: f64,
    /// h = ε^α
    pub passage_height: f64,
    /// b = ε^β
    pub room_side: f64,
}

impl Geometry {
    pub fn epsilon(&self) -> f64 {
        self.params.epsilon
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.params.ell_minus, self.params.ell_plus)
    }

    /// Area of strip plus passage plus room.
    pub fn area(&self) -> f64 {
        let p = &self.params;
        (p.ell_plus - p.ell_minus) * p.epsilon
            + self.passage_width * self.passage_height
            + self.room_side * self.room_side
    }

    /// Layout with a single decoration centred at the origin.
    pub fn layout(&self) -> Layout {
        Layout {
            x_min: self.params.ell_minus,
            x_max: self.params.ell_plus,
            epsilon: self.params.epsilon,
            sites: vec![Site {
                center: 0.0,
                passage_width: self.passage_width,
                passage_height: self.passage_height,
                room_side: self.room_side,
            }],
        }
    }
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} is not finite")))
    }
}

/// Check every constraint on the parameters and compute d, h, b.
pub fn validate_params(p: &GeometryParams) -> Result<Geometry> {
    check_finite("ell_minus", p.ell_minus)?;
    check_finite("ell_plus", p.ell_plus)?;
    check_finite("gamma", p.gamma)?;
    check_finite("alpha", p.alpha)?;
    check_finite("beta", p.beta)?;
    check_finite("epsilon", p.epsilon)?;
    if p.ell_minus >= 0.0 {
        return Err(Error::invalid("ell_minus", "must be negative"));
    }
    if p.ell_plus <= 0.0 {
        return Err(Error::invalid("ell_plus", "must be positive"));
    }
    if p.gamma <= 0.0 {
        return Err(Error::invalid("gamma", "must be positive"));
    }
    if p.alpha <= 0.0 {
        return Err(Error::invalid("alpha", "must be positive"));
    }
    if !(p.beta > 0.0 && p.beta < 0.5) {
        return Err(Error::invalid("beta", "must lie in (0, 1/2)"));
    }
    if p.epsilon <= 0.0 {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    for (bound, limit) in p.eps_limits() {
        if p.epsilon >= limit {
            return Err(Error::EpsTooLarge {
                eps: p.epsilon,
                bound,
                limit,
            });
        }
    }
    let eps = p.epsilon;
    let d = p.gamma * eps.powf(p.alpha + 1.0);
    let h = eps.powf(p.alpha);
    let b = eps.powf(p.beta);
    // consequences of the ε-bounds; a failure here is a bug, not bad input
    debug_assert!(d <= eps / 2.0 * (1.0 + 1e-12));
    debug_assert!(d <= b * (1.0 + 1e-12));
    if b >= p.ell_minus.abs().min(p.ell_plus) {
        return Err(Error::invalid(
            "beta",
            format!("room side {b} does not fit inside ({}, {})", p.ell_minus, p.ell_plus),
        ));
    }
    Ok(Geometry {
        params: *p,
        passage_width: d,
        passage_height: h,
        room_side: b,
    })
}
