//! C ABI over the waveguide laboratory.
//!
//! Every function returns a [`DgStatus`]; results go through out-pointers. Objects are
//! opaque handles created by `*_new`/`*_solve` functions and released with the matching
//! `*_free`. After a failure, `dg_last_error` copies the message of the calling thread's
//! most recent error.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use deltaguide::abstract_toolkit::{quasi_unitary_constants, run_suite};
use deltaguide::eigensolve::{eigs_lowest, Request, Spectrum};
use deltaguide::error::Error;
use deltaguide::fem::Potential;
use deltaguide::geometry::GeometryParams;
use deltaguide::identification::{build_maps, DefectSolver};
use deltaguide::kronig_penney::kp_band_edges;
use deltaguide::metrics::tilde_hausdorff;
use deltaguide::sweep::Pipeline;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgStatus {
    Ok = 0,
    NullPointer = 1,
    /// A parameter was rejected (including ε too large for the shape exponents).
    InvalidParam = 2,
    /// A factorisation or iteration failed.
    Numerical = 3,
    /// The caller's buffer is too short.
    BufferTooSmall = 4,
    Panic = 5,
}

/// Interval ends, coupling strength, shape exponents and ε.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DgParams {
    pub ell_minus: f64,
    pub ell_plus: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl From<DgParams> for GeometryParams {
    fn from(p: DgParams) -> Self {
        GeometryParams::new(p.ell_minus, p.ell_plus, p.gamma, p.alpha, p.beta, p.epsilon)
    }
}

/// Passage and room sizes derived from valid parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DgShape {
    pub passage_width: f64,
    pub passage_height: f64,
    pub room_side: f64,
}

/// Counts from a randomized run of the abstract bounds.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DgSuiteSummary {
    pub draws: usize,
    pub resolvent_violations: usize,
    pub spectral_violations: usize,
    pub same_space_violations: usize,
    pub quasi_unitary_violations: usize,
    pub failures: usize,
    pub resolvent_min_margin: f64,
    pub spectral_min_margin: f64,
}

/// Sorted eigenvalues with their certified cutoff.
pub struct DgSpectrum(Spectrum);

/// Mesh, waveguide discretisation and matching limit space for one parameter set.
pub struct DgPipeline(Pipeline);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> DgStatus {
    match e.exit_code() {
        2 => DgStatus::InvalidParam,
        _ => DgStatus::Numerical,
    }
}

/// Run `f`, turning errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), DgStatus>) -> DgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DgStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            DgStatus::Panic
        }
    }
}

fn fail(e: Error) -> DgStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> DgStatus {
    set_error(format!("{what} is null"));
    DgStatus::NullPointer
}

/// Copy the calling thread's last error message, NUL-terminated, into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` bytes of writes, or null with `len` = 0. `required` may be
/// null; otherwise it receives the needed buffer length including the terminator.
#[no_mangle]
pub unsafe extern "C" fn dg_last_error(buf: *mut c_char, len: usize, required: *mut usize) -> DgStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    let need = msg.len() + 1;
    if !required.is_null() {
        *required = need;
    }
    if len < need {
        return DgStatus::BufferTooSmall;
    }
    if buf.is_null() {
        return DgStatus::NullPointer;
    }
    std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, msg.len());
    *buf.add(msg.len()) = 0;
    DgStatus::Ok
}

/// Check parameters and write the derived sizes.
///
/// # Safety
/// `params` must point to a valid `DgParams`; `shape` to writable storage for a `DgShape`.
#[no_mangle]
pub unsafe extern "C" fn dg_validate(params: *const DgParams, shape: *mut DgShape) -> DgStatus {
    guard(|| {
        if params.is_null() || shape.is_null() {
            return Err(null("argument"));
        }
        let g = GeometryParams::from(*params).validate().map_err(fail)?;
        *shape = DgShape {
            passage_width: g.passage_width,
            passage_height: g.passage_height,
            room_side: g.room_side,
        };
        Ok(())
    })
}

/// Build mesh and discretisations at the default resolution times `mesh_scale`, with V = 0.
///
/// # Safety
/// `params` must point to a valid `DgParams` and `out` to writable storage for a pointer.
/// The handle written to `*out` must be released with `dg_pipeline_free`.
#[no_mangle]
pub unsafe extern "C" fn dg_pipeline_new(params: *const DgParams, mesh_scale: f64, out: *mut *mut DgPipeline) -> DgStatus {
    guard(|| {
        if params.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        if !(mesh_scale > 0.0 && mesh_scale.is_finite()) {
            return Err(fail(Error::invalid("mesh_scale", "must be positive")));
        }
        let p = Pipeline::at_scale(&GeometryParams::from(*params), mesh_scale, &Potential::Zero).map_err(fail)?;
        *out = Box::into_raw(Box::new(DgPipeline(p)));
        Ok(())
    })
}

/// # Safety
/// `pipe` must come from `dg_pipeline_new` and not have been freed; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn dg_pipeline_free(pipe: *mut DgPipeline) {
    if !pipe.is_null() {
        drop(Box::from_raw(pipe));
    }
}

/// Conforming waveguide unknowns and limit-space unknowns.
///
/// # Safety
/// `pipe` must be a live pipeline handle; `wave` and `limit` writable.
#[no_mangle]
pub unsafe extern "C" fn dg_pipeline_dims(pipe: *const DgPipeline, wave: *mut usize, limit: *mut usize) -> DgStatus {
    guard(|| {
        if pipe.is_null() || wave.is_null() || limit.is_null() {
            return Err(null("argument"));
        }
        *wave = (*pipe).0.waveguide.dim();
        *limit = (*pipe).0.limit.dim();
        Ok(())
    })
}

/// Eigenvalues below `cutoff` of the waveguide (`which` = 0) or the limit operator (1).
///
/// # Safety
/// `pipe` must be a live pipeline handle and `out` writable. Release the result with
/// `dg_spectrum_free`.
#[no_mangle]
pub unsafe extern "C" fn dg_pipeline_spectrum(
    pipe: *const DgPipeline,
    which: u32,
    cutoff: f64,
    out: *mut *mut DgSpectrum,
) -> DgStatus {
    guard(|| {
        if pipe.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let p = &(*pipe).0;
        let pair = match which {
            0 => &p.waveguide.pair,
            1 => &p.limit.pair,
            _ => return Err(fail(Error::invalid("which", "0 for the waveguide, 1 for the limit"))),
        };
        if !(cutoff > 0.0) {
            return Err(fail(Error::invalid("cutoff", "must be positive")));
        }
        let s = eigs_lowest(pair, Request::Below(cutoff)).map_err(fail)?;
        *out = Box::into_raw(Box::new(DgSpectrum(s)));
        Ok(())
    })
}

/// ‖R_ε J − J R₀‖ between the limit space and the waveguide.
///
/// # Safety
/// `pipe` must be a live pipeline handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn dg_pipeline_resolvent_defect(pipe: *const DgPipeline, value: *mut f64) -> DgStatus {
    guard(|| {
        if pipe.is_null() || value.is_null() {
            return Err(null("argument"));
        }
        let p = &(*pipe).0;
        let maps = build_maps(&p.mesh, &p.waveguide, &p.limit).map_err(fail)?;
        let solver = DefectSolver::new(&maps, &p.waveguide, &p.limit).map_err(fail)?;
        *value = solver.resolvent_defect().value;
        Ok(())
    })
}

/// # Safety
/// `spec` must be a live spectrum handle and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn dg_spectrum_len(spec: *const DgSpectrum, len: *mut usize) -> DgStatus {
    guard(|| {
        if spec.is_null() || len.is_null() {
            return Err(null("argument"));
        }
        *len = (*spec).0.values.len();
        Ok(())
    })
}

/// Copy the eigenvalues into `buf`; `BufferTooSmall` if `len` is short.
///
/// # Safety
/// `spec` must be a live spectrum handle; `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dg_spectrum_values(spec: *const DgSpectrum, buf: *mut f64, len: usize) -> DgStatus {
    guard(|| {
        if spec.is_null() || buf.is_null() {
            return Err(null("argument"));
        }
        let v = &(*spec).0.values;
        if len < v.len() {
            set_error(format!("need {} values", v.len()));
            return Err(DgStatus::BufferTooSmall);
        }
        std::ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// Certified cutoff: every eigenvalue below it is in the list (infinite if all were found).
///
/// # Safety
/// `spec` must be a live spectrum handle and `cutoff` writable.
#[no_mangle]
pub unsafe extern "C" fn dg_spectrum_cutoff(spec: *const DgSpectrum, cutoff: *mut f64) -> DgStatus {
    guard(|| {
        if spec.is_null() || cutoff.is_null() {
            return Err(null("argument"));
        }
        *cutoff = (*spec).0.cutoff.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// # Safety
/// `spec` must come from this library and not have been freed; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn dg_spectrum_free(spec: *mut DgSpectrum) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Hausdorff distance after λ ↦ (1+λ)⁻¹, and the truncation bound to add to it.
///
/// # Safety
/// `a`, `b` must be live spectrum handles; `value`, `bound` writable.
#[no_mangle]
pub unsafe extern "C" fn dg_tilde_hausdorff(
    a: *const DgSpectrum,
    b: *const DgSpectrum,
    value: *mut f64,
    bound: *mut f64,
) -> DgStatus {
    guard(|| {
        if a.is_null() || b.is_null() || value.is_null() || bound.is_null() {
            return Err(null("argument"));
        }
        let r = tilde_hausdorff(&(*a).0, &(*b).0).map_err(fail)?;
        *value = r.value;
        *bound = r.truncation_bound;
        Ok(())
    })
}

/// Band edges of the unit-spaced point-interaction comb: `edges[2i]`, `edges[2i+1]` are the
/// start and end of band i + 1.
///
/// # Safety
/// `edges` must be valid for `2 * n_bands` doubles.
#[no_mangle]
pub unsafe extern "C" fn dg_kp_band_edges(gamma: f64, n_bands: usize, edges: *mut f64) -> DgStatus {
    guard(|| {
        if edges.is_null() {
            return Err(null("edges"));
        }
        let b = kp_band_edges(gamma, n_bands).map_err(fail)?;
        for (i, (s, e)) in b.into_iter().enumerate() {
            *edges.add(2 * i) = s;
            *edges.add(2 * i + 1) = e;
        }
        Ok(())
    })
}

/// Domination constants implied by a quasi-unitary defect δ < 2/3.
///
/// # Safety
/// `mu` and `nu` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dg_quasi_unitary_constants(delta: f64, mu: *mut f64, nu: *mut f64) -> DgStatus {
    guard(|| {
        if mu.is_null() || nu.is_null() {
            return Err(null("argument"));
        }
        let (m, n) = quasi_unitary_constants(delta).map_err(fail)?;
        *mu = m;
        *nu = n;
        Ok(())
    })
}

/// Randomized run of the abstract comparison bounds.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dg_abstract_suite(draws: usize, max_dim: usize, seed: u64, out: *mut DgSuiteSummary) -> DgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if max_dim < 2 {
            return Err(fail(Error::invalid("max_dim", "must be at least 2")));
        }
        let s = run_suite(draws, max_dim, seed);
        *out = DgSuiteSummary {
            draws: s.draws,
            resolvent_violations: s.resolvent_violations,
            spectral_violations: s.spectral_violations,
            same_space_violations: s.same_space_violations,
            quasi_unitary_violations: s.quasi_unitary_violations,
            failures: s.failures,
            resolvent_min_margin: s.resolvent_min_margin,
            spectral_min_margin: s.spectral_min_margin,
        };
        Ok(())
    })
}
