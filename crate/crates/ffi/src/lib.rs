//! C ABI over the draw container, importance weights, weighted summaries
//! and the tipping-point bisection.
//!
//! Handles are opaque. Every handle returned through an out-pointer is owned
//! by the caller and must be released with the matching `_free` function.
//! Fallible calls return a [`SirsStatus`]; after a failure,
//! [`sirs_last_error`] describes it until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use sirsens::dist::{Distribution, Transform};
use sirsens::mcmc::{ColumnMeta, DrawMatrix};
use sirsens::sir::{self, PriorSpec, WeightSet};
use sirsens::tipping::{self, Bound, PriorFamily, TippingProblem};
use sirsens::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SirsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Numerical = 4,
    /// The tipping bracket does not straddle `theta0`.
    NoSignChange = 5,
    /// The base prior is zero at a draw, or the alternative is zero at all of them.
    Support = 6,
    Panic = 7,
}

/// Draws of named parameters, grouped by chain.
pub struct SirsDraws(DrawMatrix);

/// Normalized importance weights for one prior swap.
pub struct SirsWeights(WeightSet);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SirsFamily {
    /// `p1` = mean, `p2` = sd.
    Normal = 0,
    /// `p1` = scale.
    HalfNormal = 1,
    /// `p1` = rate.
    Exponential = 2,
    /// `p1` = a, `p2` = b.
    Beta = 3,
    /// `p1` = shape, `p2` = scale.
    Weibull = 4,
    /// `p1` = lo, `p2` = hi.
    Uniform = 5,
}

/// A prior on one parameter. Unused parameters are ignored.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SirsPrior {
    pub family: SirsFamily,
    pub p1: f64,
    pub p2: f64,
}

/// How the tipping variable `psi` indexes the alternative prior.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SirsPsiFamily {
    /// `HalfNormal(psi)`; `fixed` unused.
    HalfNormalScale = 0,
    /// `Beta(psi, fixed)`.
    BetaA = 1,
    /// `Beta(fixed, psi)`.
    BetaB = 2,
    /// `Normal(psi, fixed)`.
    NormalMean = 3,
    /// `Normal(fixed, psi)`.
    NormalSd = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SirsBound {
    /// Quantile `1 - alpha/2`.
    Upper = 0,
    /// Quantile `alpha/2`.
    Lower = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SirsSummary {
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
}

/// Inputs to [`sirs_bisect_tipping`]. Start from
/// [`sirs_tipping_spec_default`] and set the fields that matter.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SirsTippingSpec {
    /// Sensitivity parameter; a draw column.
    pub param: *const c_char,
    /// Prior the draws were obtained under.
    pub base: SirsPrior,
    pub family: SirsPsiFamily,
    pub family_fixed: f64,
    /// Column whose credible bound is tracked.
    pub target: *const c_char,
    pub alpha: f64,
    pub theta0: f64,
    pub bound: SirsBound,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SirsTippingResult {
    pub psi_star: f64,
    /// Bracket at exit.
    pub lo: f64,
    pub hi: f64,
    /// Midpoint evaluations performed.
    pub n_iter: usize,
    pub converged: bool,
    pub min_ess: f64,
    /// Warnings raised; see the Rust API for their text.
    pub n_warnings: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure {
    status: SirsStatus,
    message: String,
}

impl Failure {
    fn null(what: &str) -> Self {
        Failure { status: SirsStatus::NullPointer, message: format!("{what} is null") }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure { status: SirsStatus::InvalidArgument, message: message.into() }
    }
}

fn status_of(e: &Error) -> SirsStatus {
    match e {
        Error::InvalidParameter { .. }
        | Error::UnknownParameter(_)
        | Error::Domain { .. }
        | Error::NonFiniteDraw { .. }
        | Error::Config(_) => SirsStatus::InvalidArgument,
        Error::Parse { .. } | Error::Io { .. } => SirsStatus::Io,
        Error::NoSignChange { .. } | Error::RefitBracket { .. } => SirsStatus::NoSignChange,
        Error::SupportViolation { .. } | Error::DisjointSupport(_) => SirsStatus::Support,
        Error::AtPsi { source, .. } => status_of(source),
        _ => SirsStatus::Numerical,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { status: status_of(&e), message: e.to_string() }
    }
}

fn call(f: impl FnOnce() -> Result<(), Failure>) -> SirsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SirsStatus::Ok,
        Ok(Err(e)) => {
            set_error(&e.message);
            e.status
        }
        Err(_) => {
            set_error("internal panic");
            SirsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(Failure::null(what))
    } else {
        Ok(p)
    }
}

fn distribution(p: &SirsPrior) -> Result<Distribution, Failure> {
    Ok(match p.family {
        SirsFamily::Normal => Distribution::normal(p.p1, p.p2),
        SirsFamily::HalfNormal => Distribution::half_normal(p.p1),
        SirsFamily::Exponential => Distribution::exponential(p.p1),
        SirsFamily::Beta => Distribution::beta(p.p1, p.p2),
        SirsFamily::Weibull => Distribution::weibull(p.p1, p.p2),
        SirsFamily::Uniform => Distribution::uniform(p.p1, p.p2),
    }?)
}

fn psi_family(kind: SirsPsiFamily, fixed: f64) -> PriorFamily {
    match kind {
        SirsPsiFamily::HalfNormalScale => PriorFamily::HalfNormalScale,
        SirsPsiFamily::BetaA => PriorFamily::BetaA0 { a1: fixed },
        SirsPsiFamily::BetaB => PriorFamily::BetaA1 { a0: fixed },
        SirsPsiFamily::NormalMean => PriorFamily::NormalMean { sd: fixed },
        SirsPsiFamily::NormalSd => PriorFamily::NormalSd { mean: fixed },
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sirs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if none has
/// failed. Valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn sirs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds draws from `n_cols` names and a column-major block of
/// `n_rows * n_cols` values. Rows are grouped by chain, so `n_rows` must be
/// a multiple of `n_chains`.
///
/// # Safety
/// `names` must point to `n_cols` NUL-terminated strings and `values` to
/// `n_rows * n_cols` doubles. `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sirs_draws_new(
    names: *const *const c_char,
    n_cols: usize,
    values: *const f64,
    n_rows: usize,
    n_chains: usize,
    out: *mut *mut SirsDraws,
) -> SirsStatus {
    call(|| {
        let out = out_arg(out, "out")?;
        let names = slice_arg(names, n_cols, "names")?;
        let total = n_rows.checked_mul(n_cols).ok_or_else(|| Failure::invalid("n_rows * n_cols overflows"))?;
        let values = slice_arg(values, total, "values")?;
        let columns = names
            .iter()
            .map(|&n| Ok(ColumnMeta::new(str_arg(n, "column name")?, Transform::Identity)))
            .collect::<Result<Vec<_>, Failure>>()?;
        let data =
            if n_rows == 0 { vec![Vec::new(); n_cols] } else { values.chunks(n_rows).map(<[f64]>::to_vec).collect() };
        let draws = DrawMatrix::new(columns, data, n_chains)?;
        *out = Box::into_raw(Box::new(SirsDraws(draws)));
        Ok(())
    })
}

/// Reads a draws CSV written by the `sirsens` command-line tool, together
/// with its JSON manifest.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sirs_draws_load(path: *const c_char, out: *mut *mut SirsDraws) -> SirsStatus {
    call(|| {
        let out = out_arg(out, "out")?;
        let (draws, _) = sirsens::io::read_draws(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(SirsDraws(draws)));
        Ok(())
    })
}

/// Number of draws, or 0 for a null handle.
///
/// # Safety
/// `draws` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sirs_draws_n_rows(draws: *const SirsDraws) -> usize {
    draws.as_ref().map_or(0, |d| d.0.n_rows())
}

/// Number of columns, or 0 for a null handle.
///
/// # Safety
/// `draws` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sirs_draws_n_cols(draws: *const SirsDraws) -> usize {
    draws.as_ref().map_or(0, |d| d.0.n_cols())
}

/// Copies column `name` into `buf`, which must hold exactly
/// `sirs_draws_n_rows(draws)` doubles.
///
/// # Safety
/// `draws` must be a live handle, `name` NUL-terminated, and `buf` valid
/// for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sirs_draws_column(
    draws: *const SirsDraws,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> SirsStatus {
    call(|| {
        let d = &ref_arg(draws, "draws")?.0;
        let col = d.column(str_arg(name, "name")?)?;
        if len != col.len() {
            return Err(Failure::invalid(format!("buffer holds {len} values, column has {}", col.len())));
        }
        let buf = out_arg(buf, "buf")?;
        ptr::copy_nonoverlapping(col.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `draws` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sirs_draws_free(draws: *mut SirsDraws) {
    if !draws.is_null() {
        drop(Box::from_raw(draws));
    }
}

/// Importance weights that turn draws under `base` on column `param` into
/// draws under `alt`.
///
/// # Safety
/// `draws` must be a live handle, `param` NUL-terminated, `base` and `alt`
/// readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sirs_weights_compute(
    draws: *const SirsDraws,
    param: *const c_char,
    base: *const SirsPrior,
    alt: *const SirsPrior,
    out: *mut *mut SirsWeights,
) -> SirsStatus {
    call(|| {
        let out = out_arg(out, "out")?;
        let d = &ref_arg(draws, "draws")?.0;
        let param = str_arg(param, "param")?;
        let base = PriorSpec::new(param, distribution(ref_arg(base, "base")?)?);
        let alt = PriorSpec::new(param, distribution(ref_arg(alt, "alt")?)?);
        let w = sir::importance_weights(d, &base, &alt)?;
        *out = Box::into_raw(Box::new(SirsWeights(w)));
        Ok(())
    })
}

/// Number of weights, or 0 for a null handle.
///
/// # Safety
/// `w` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sirs_weights_len(w: *const SirsWeights) -> usize {
    w.as_ref().map_or(0, |w| w.0.len())
}

/// Importance effective sample size, or NaN for a null handle.
///
/// # Safety
/// `w` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sirs_weights_ess(w: *const SirsWeights) -> f64 {
    w.as_ref().map_or(f64::NAN, |w| w.0.ess())
}

/// Copies the normalized weights into `buf` of exactly `len` doubles.
///
/// # Safety
/// `w` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sirs_weights_copy(w: *const SirsWeights, buf: *mut f64, len: usize) -> SirsStatus {
    call(|| {
        let w = ref_arg(w, "weights")?.0.weights();
        if len != w.len() {
            return Err(Failure::invalid(format!("buffer holds {len} values, weights have {}", w.len())));
        }
        let buf = out_arg(buf, "buf")?;
        ptr::copy_nonoverlapping(w.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `w` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sirs_weights_free(w: *mut SirsWeights) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Mean, sd and quantiles of column `param`, weighted by `weights` or
/// uniformly when `weights` is null. `probs` must be ascending in (0, 1);
/// `quantiles` receives one value per probability.
///
/// # Safety
/// `draws` must be a live handle and `weights` null or a live handle built
/// from the same draws. `probs` and `quantiles` must be valid for `n_probs`
/// elements and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sirs_weighted_summary(
    draws: *const SirsDraws,
    weights: *const SirsWeights,
    param: *const c_char,
    probs: *const f64,
    n_probs: usize,
    out: *mut SirsSummary,
    quantiles: *mut f64,
) -> SirsStatus {
    call(|| {
        let out = out_arg(out, "out")?;
        let d = &ref_arg(draws, "draws")?.0;
        let param = str_arg(param, "param")?;
        let probs = slice_arg(probs, n_probs, "probs")?;
        let s = match weights.as_ref() {
            Some(w) => sir::weighted_summary(d, &w.0, param, probs)?,
            None => sir::summary(d, param, probs)?,
        };
        if n_probs > 0 {
            let q = out_arg(quantiles, "quantiles")?;
            for (i, (_, v)) in s.quantiles.iter().enumerate() {
                *q.add(i) = *v;
            }
        }
        *out = SirsSummary { mean: s.mean, sd: s.sd, ess: s.ess };
        Ok(())
    })
}

/// Defaults: 95% upper bound against `theta0 = 0`, default tolerance and
/// iteration cap, half-normal scale family. Pointers are null and the
/// bracket is empty.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sirs_tipping_spec_default(out: *mut SirsTippingSpec) -> SirsStatus {
    call(|| {
        let out = out_arg(out, "out")?;
        *out = SirsTippingSpec {
            param: ptr::null(),
            base: SirsPrior { family: SirsFamily::HalfNormal, p1: 1.0, p2: 0.0 },
            family: SirsPsiFamily::HalfNormalScale,
            family_fixed: 0.0,
            target: ptr::null(),
            alpha: 0.05,
            theta0: 0.0,
            bound: SirsBound::Upper,
            lo: 0.0,
            hi: 0.0,
            tol: tipping::DEFAULT_TOL,
            max_iter: tipping::DEFAULT_MAX_ITER,
        };
        Ok(())
    })
}

/// Bisection on `psi` for the point where the tracked credible bound of
/// `target` equals `theta0`.
///
/// # Safety
/// `draws` must be a live handle, `spec` readable with valid string fields,
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sirs_bisect_tipping(
    draws: *const SirsDraws,
    spec: *const SirsTippingSpec,
    out: *mut SirsTippingResult,
) -> SirsStatus {
    call(|| {
        let out = out_arg(out, "out")?;
        let d = &ref_arg(draws, "draws")?.0;
        let s = ref_arg(spec, "spec")?;
        let base = PriorSpec::new(str_arg(s.param, "spec.param")?, distribution(&s.base)?);
        let mut problem = TippingProblem::new(
            d,
            base,
            psi_family(s.family, s.family_fixed),
            str_arg(s.target, "spec.target")?,
            (s.lo, s.hi),
        );
        problem.alpha = s.alpha;
        problem.theta0 = s.theta0;
        problem.bound = match s.bound {
            SirsBound::Upper => Bound::Upper,
            SirsBound::Lower => Bound::Lower,
        };
        problem.tol_psi = s.tol;
        problem.max_iter = s.max_iter;
        let r = tipping::bisect_tipping(&problem)?;
        *out = SirsTippingResult {
            psi_star: r.psi_star,
            lo: r.final_bracket.0,
            hi: r.final_bracket.1,
            n_iter: r.iterations.len(),
            converged: r.converged,
            min_ess: r.min_ess_seen,
            n_warnings: r.warnings.len(),
        };
        Ok(())
    })
}
