//! C interface to `spade-core`.
//!
//! Every function returns a [`SpadeStatus`]; results are written through
//! out-pointers. Models are opaque handles created by the `spade_model_*`
//! constructors and released with [`spade_model_free`]. After a failure,
//! [`spade_last_error_message`] returns a description of the most recent
//! error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spade_core::direct::{di_fisher_information, DirectOptions};
use spade_core::dynamics::{CustomDensity, WeightedOrientation};
use spade_core::estimation::{crb_from_total, small_separation_limit, star_parameters, StarPair};
use spade_core::montecarlo::{crb_consistency, ExperimentConfig, Likelihood};
use spade_core::optics::CutoffKind;
use spade_core::{
    averaged_mode_probabilities, fisher_information, Cutoff, DynamicsModel, FisherOptions,
    QuadratureSpec, SourceGeometry, SpadeError,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpadeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    QuadratureNotConverged = 3,
    NumericalHealth = 4,
    UnboundedUncertainty = 5,
    CrossoverRegime = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpadeCutoffKind {
    PerIndex = 0,
    TotalOrder = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpadeLikelihood {
    WithOverflow = 0,
    DetectedOnly = 1,
}

/// Source pair geometry. `d` and `w` share a length unit; `xi` is the
/// axis offset in units of `w`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpadeGeometry {
    pub d: f64,
    pub w: f64,
    pub phi: f64,
    pub theta: f64,
    pub v: f64,
    pub xi: f64,
}

pub const SPADE_FLAG_SMALL_SAMPLE: u32 = 1;
pub const SPADE_FLAG_FEW_RUNS: u32 = 2;
pub const SPADE_FLAG_DEGENERATE: u32 = 4;
pub const SPADE_FLAG_BOUNDARY: u32 = 8;

/// Summary of a repeated estimation experiment. Lengths share the unit of
/// the geometry.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpadeEstimateReport {
    pub d_true: f64,
    pub d_hat_mean: f64,
    pub d_hat_std: f64,
    pub bias: f64,
    pub crb: f64,
    pub crb_truncated: f64,
    pub efficiency: f64,
    /// Bitwise OR of the `SPADE_FLAG_*` values.
    pub flags: u32,
}

/// Opaque dynamics model.
pub struct SpadeModel {
    inner: DynamicsModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn record(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &SpadeError) -> SpadeStatus {
    match e {
        SpadeError::InvalidInput { .. } => SpadeStatus::InvalidInput,
        SpadeError::QuadratureNotConverged { .. } => SpadeStatus::QuadratureNotConverged,
        SpadeError::NumericalHealth(_) => SpadeStatus::NumericalHealth,
        SpadeError::UnboundedUncertainty => SpadeStatus::UnboundedUncertainty,
        SpadeError::CrossoverRegime { .. } => SpadeStatus::CrossoverRegime,
    }
}

enum Failure {
    Core(SpadeError),
    Null(&'static str),
    Buffer { needed: usize },
}

impl From<SpadeError> for Failure {
    fn from(e: SpadeError) -> Self {
        Failure::Core(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> SpadeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpadeStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            record(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(name))) => {
            record(format!("null pointer passed for `{name}`"));
            SpadeStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { needed })) => {
            record(format!("output buffer too small; need {needed} elements"));
            SpadeStatus::BufferTooSmall
        }
        Err(_) => {
            record("internal panic".into());
            SpadeStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn write<T>(p: *mut T, name: &'static str, value: T) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    p.write(value);
    Ok(())
}

fn geometry(g: &SpadeGeometry) -> SourceGeometry {
    SourceGeometry::new(g.d, g.w)
        .with_angles(g.phi, g.theta)
        .with_brightness(g.v)
        .with_axis_offset(g.xi)
}

fn cutoff(max: usize, kind: SpadeCutoffKind) -> Cutoff {
    Cutoff {
        max,
        kind: match kind {
            SpadeCutoffKind::PerIndex => CutoffKind::PerIndex,
            SpadeCutoffKind::TotalOrder => CutoffKind::TotalOrder,
        },
    }
}

fn new_model(
    out: *mut *mut SpadeModel,
    build: impl FnOnce() -> Result<DynamicsModel, SpadeError>,
) -> SpadeStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let inner = build()?;
        inner.validate()?;
        // SAFETY: checked non-null above
        unsafe { out.write(Box::into_raw(Box::new(SpadeModel { inner }))) };
        Ok(())
    })
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn spade_model_static(
    phi: f64,
    theta: f64,
    out: *mut *mut SpadeModel,
) -> SpadeStatus {
    new_model(out, || Ok(DynamicsModel::static_at(phi, theta)))
}

/// Constant-rate rotation of the azimuth at fixed polar angle.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn spade_model_phi_rotation(
    theta: f64,
    out: *mut *mut SpadeModel,
) -> SpadeStatus {
    new_model(out, || Ok(DynamicsModel::phi_rotation(theta)))
}

/// `φ(t) = amplitude · sin(2πt/T)` at fixed polar angle.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn spade_model_phi_oscillation(
    theta: f64,
    amplitude: f64,
    out: *mut *mut SpadeModel,
) -> SpadeStatus {
    new_model(out, || Ok(DynamicsModel::phi_oscillation(theta, amplitude)))
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn spade_model_theta_rotation(
    phi: f64,
    out: *mut *mut SpadeModel,
) -> SpadeStatus {
    new_model(out, || Ok(DynamicsModel::theta_rotation(phi)))
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn spade_model_uniform_sphere(out: *mut *mut SpadeModel) -> SpadeStatus {
    new_model(out, || Ok(DynamicsModel::UniformSphere))
}

/// Discrete orientation mixture with `len` rows.
///
/// # Safety
/// `phi`, `theta` and `weight` must each point to `len` readable values.
#[no_mangle]
pub unsafe extern "C" fn spade_model_density_table(
    phi: *const f64,
    theta: *const f64,
    weight: *const f64,
    len: usize,
    out: *mut *mut SpadeModel,
) -> SpadeStatus {
    if phi.is_null() || theta.is_null() || weight.is_null() {
        record("null pointer passed for the density table".into());
        return SpadeStatus::NullPointer;
    }
    let rows: Vec<WeightedOrientation> = (0..len)
        .map(|i| WeightedOrientation {
            phi: *phi.add(i),
            theta: *theta.add(i),
            weight: *weight.add(i),
        })
        .collect();
    new_model(out, || {
        Ok(DynamicsModel::CustomDensity(CustomDensity::from_table(
            rows,
        )?))
    })
}

/// Separation `x(t) = x̄(1 + a1 cos 2πt/T)` in the imaging plane.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn spade_model_proportional_oscillation(
    a1: f64,
    out: *mut *mut SpadeModel,
) -> SpadeStatus {
    new_model(out, || Ok(DynamicsModel::proportional_oscillation(a1)))
}

/// Separation `x(t) = x̄ + a2 cos 2πt/T` in the imaging plane.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn spade_model_fixed_amplitude_oscillation(
    a2: f64,
    out: *mut *mut SpadeModel,
) -> SpadeStatus {
    new_model(out, || Ok(DynamicsModel::fixed_amplitude_oscillation(a2)))
}

/// # Safety
/// `model` must be null or a handle from a `spade_model_*` constructor
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn spade_model_free(model: *mut SpadeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Averaged detection probabilities in row-major order, index
/// `n * (max + 1) + m`; modes outside the cutoff are written as zero.
/// `len` must be at least `(max + 1)²`.
///
/// # Safety
/// Pointers must be valid; `out_probs` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn spade_mode_probabilities(
    model: *const SpadeModel,
    geom: *const SpadeGeometry,
    max: usize,
    kind: SpadeCutoffKind,
    out_probs: *mut f64,
    len: usize,
    out_overflow: *mut f64,
) -> SpadeStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let g = geometry(deref(geom, "geom")?);
        if out_probs.is_null() {
            return Err(Failure::Null("out_probs"));
        }
        let side = max + 1;
        if len < side * side {
            return Err(Failure::Buffer {
                needed: side * side,
            });
        }
        let p = averaged_mode_probabilities(
            &model.inner,
            &g,
            cutoff(max, kind),
            &QuadratureSpec::default(),
        )?;
        let buf = std::slice::from_raw_parts_mut(out_probs, side * side);
        buf.fill(0.0);
        for (mode, value) in &p.values {
            buf[mode.n * side + mode.m] = *value;
        }
        if !out_overflow.is_null() {
            out_overflow.write(p.overflow);
        }
        Ok(())
    })
}

/// Fisher information for `d` in length⁻². `out_per_mode` may be null;
/// otherwise it receives the per-mode terms in the layout of
/// [`spade_mode_probabilities`].
///
/// # Safety
/// Pointers must be valid; `out_per_mode`, if non-null, must have room for
/// `len` values.
#[no_mangle]
pub unsafe extern "C" fn spade_fisher_information(
    model: *const SpadeModel,
    geom: *const SpadeGeometry,
    max: usize,
    kind: SpadeCutoffKind,
    out_per_mode: *mut f64,
    len: usize,
    out_total: *mut f64,
) -> SpadeStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let g = geometry(deref(geom, "geom")?);
        let side = max + 1;
        if !out_per_mode.is_null() && len < side * side {
            return Err(Failure::Buffer {
                needed: side * side,
            });
        }
        let f = fisher_information(
            &model.inner,
            &g,
            cutoff(max, kind),
            &FisherOptions::default(),
        )?;
        if !out_per_mode.is_null() {
            let buf = std::slice::from_raw_parts_mut(out_per_mode, side * side);
            buf.fill(0.0);
            for (mode, value) in &f.per_mode {
                buf[mode.n * side + mode.m] = *value;
            }
        }
        write(out_total, "out_total", f.total)
    })
}

/// `1/√(N F)`.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn spade_cramer_rao_bound(
    fisher: f64,
    photons: u64,
    out: *mut f64,
) -> SpadeStatus {
    guard(|| write(out, "out", crb_from_total(fisher, photons)?))
}

/// Small-separation limit of `w² F` for axis offset `kappa`, brightness
/// `v` and angular factor `c`.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn spade_small_separation_limit(
    kappa: f64,
    v: f64,
    c: f64,
    out: *mut f64,
) -> SpadeStatus {
    guard(|| write(out, "out", small_separation_limit(kappa, v, c)?))
}

/// # Safety
/// `out_kappa` and `out_v` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn spade_star_parameters(
    m1: f64,
    m2: f64,
    out_kappa: *mut f64,
    out_v: *mut f64,
) -> SpadeStatus {
    guard(|| {
        let (kappa, v) = star_parameters(StarPair { m1, m2 })?;
        write(out_kappa, "out_kappa", kappa)?;
        write(out_v, "out_v", v)
    })
}

/// Direct-imaging Fisher information for `d` in length⁻².
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn spade_di_fisher_information(
    model: *const SpadeModel,
    geom: *const SpadeGeometry,
    out: *mut f64,
) -> SpadeStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let g = geometry(deref(geom, "geom")?);
        let f = di_fisher_information(&model.inner, &g, &DirectOptions::default())?;
        write(out, "out", f.total)
    })
}

/// Repeated simulate-and-estimate runs.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn spade_crb_consistency(
    model: *const SpadeModel,
    geom: *const SpadeGeometry,
    max: usize,
    photons: u64,
    runs: usize,
    seed: u64,
    likelihood: SpadeLikelihood,
    out: *mut SpadeEstimateReport,
) -> SpadeStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let g = geometry(deref(geom, "geom")?);
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let mut cfg = ExperimentConfig::new(model.inner.clone(), g, photons, runs, seed);
        cfg.cutoff = Cutoff::per_index(max);
        cfg.estimator.likelihood = match likelihood {
            SpadeLikelihood::WithOverflow => Likelihood::WithOverflow,
            SpadeLikelihood::DetectedOnly => Likelihood::DetectedOnly,
        };
        let r = crb_consistency(&cfg)?;
        let mut flags = 0;
        for f in &r.flags {
            flags |= match f.split(':').next().unwrap_or_default() {
                "small-sample" => SPADE_FLAG_SMALL_SAMPLE,
                "few-runs" => SPADE_FLAG_FEW_RUNS,
                "degenerate-likelihood" => SPADE_FLAG_DEGENERATE,
                "at-lower-bound" | "at-upper-bound" => SPADE_FLAG_BOUNDARY,
                _ => 0,
            };
        }
        out.write(SpadeEstimateReport {
            d_true: r.d_true,
            d_hat_mean: r.d_hat_mean,
            d_hat_std: r.d_hat_std,
            bias: r.bias,
            crb: r.crb,
            crb_truncated: r.crb_truncated,
            efficiency: r.efficiency,
            flags,
        });
        Ok(())
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn spade_status_message(status: SpadeStatus) -> *const c_char {
    let s: &'static CStr = match status {
        SpadeStatus::Ok => c"ok",
        SpadeStatus::NullPointer => c"null pointer argument",
        SpadeStatus::InvalidInput => c"invalid input",
        SpadeStatus::QuadratureNotConverged => c"quadrature did not converge",
        SpadeStatus::NumericalHealth => c"numerical health check failed",
        SpadeStatus::UnboundedUncertainty => c"Fisher information vanishes",
        SpadeStatus::CrossoverRegime => c"crossover regime; use the full Fisher information",
        SpadeStatus::BufferTooSmall => c"output buffer too small",
        SpadeStatus::Panic => c"internal error",
    };
    s.as_ptr()
}

/// Copy the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length
/// including the terminator, or 0 when there is no message.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn spade_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spade_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(s) => s,
            Err(_) => c"unknown",
        };
    VERSION.as_ptr()
}
