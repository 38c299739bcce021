//! C interface to the damlab simulator. Instances are opaque handles owned by
//! the caller; every fallible call returns a [`DamlabStatus`] and leaves a
//! message for [`damlab_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use damlab::bounds::{ple_lower, ple_upper, Shape};
use damlab::experiment::{run_experiment, Algo, RunConfig, CSV_HEADER};
use damlab::model::{gen_instance, parse_instance, GenParams, Instance};
use damlab::ram::PriceTriple;
use damlab::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DamlabStatus {
    Ok = 0,
    Parameter = 1,
    Contract = 2,
    Residency = 3,
    BelowK0 = 4,
    Parse = 5,
    Oracle = 6,
    Io = 7,
    NullArgument = 8,
    InvalidUtf8 = 9,
    Panic = 10,
}

/// A generated or parsed instance.
pub struct DamlabInstance(Instance);

/// Numeric columns of one experiment row.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct DamlabRow {
    pub s: u64,
    pub l: u64,
    pub w: u64,
    pub k: u64,
    pub b: u64,
    pub m: u64,
    pub seed: u64,
    pub reads: u64,
    pub writes: u64,
    pub total_ios: u64,
    pub bound_lower: f64,
    pub bound_upper: f64,
    pub ratio_upper: f64,
}

/// Machine and algorithm settings for [`damlab_run`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DamlabRunConfig {
    pub b: u64,
    pub m: u64,
    pub price_a: f64,
    pub price_b: f64,
    pub price_c: f64,
    /// Levels per phase for the 2^B-tree sort; 0 selects the validity formula.
    pub j: u64,
    /// Node cap for the 2^B-tree; 0 selects the default.
    pub node_budget: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DamlabStatus {
    match e {
        Error::Parameter(_) => DamlabStatus::Parameter,
        Error::Contract(_) => DamlabStatus::Contract,
        Error::Residency(_) => DamlabStatus::Residency,
        Error::BelowK0(_) => DamlabStatus::BelowK0,
        Error::Parse { .. } => DamlabStatus::Parse,
        Error::Oracle(_) => DamlabStatus::Oracle,
        Error::Io(_) => DamlabStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (DamlabStatus, String)>) -> DamlabStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DamlabStatus::Ok,
        Ok(Err((st, msg))) => {
            set_error(msg);
            st
        }
        Err(_) => {
            set_error("internal panic".into());
            DamlabStatus::Panic
        }
    }
}

fn lib(e: Error) -> (DamlabStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DamlabStatus, String) {
    (DamlabStatus::NullArgument, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DamlabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (DamlabStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn into_c(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn damlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static CSV header matching [`damlab_run_csv`] rows.
#[no_mangle]
pub extern "C" fn damlab_csv_header() -> *const c_char {
    const HEADER: &CStr = c"algo,S,L,w,k,B,M,seed,reads,writes,total_ios,bound_lower,bound_upper,ratio_upper";
    debug_assert_eq!(HEADER.to_str().ok(), Some(CSV_HEADER));
    HEADER.as_ptr()
}

/// Generates an instance with near-uniform stripe sizes.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn damlab_instance_generate(
    small: u64,
    large_count: u64,
    width: u64,
    stripes: u64,
    seed: u64,
    out: *mut *mut DamlabInstance,
) -> DamlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inst = gen_instance(&GenParams {
            small: small as usize,
            large_count: large_count as usize,
            width: width as usize,
            stripes: stripes as usize,
            sizes: None,
            seed,
        })
        .map_err(lib)?;
        *out = Box::into_raw(Box::new(DamlabInstance(inst)));
        Ok(())
    })
}

/// Parses an instance from its text format.
///
/// # Safety
/// `src` must be a NUL-terminated string; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn damlab_instance_parse(src: *const c_char, out: *mut *mut DamlabInstance) -> DamlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (_, inst) = parse_instance(text(src, "text")?).map_err(lib)?;
        *out = Box::into_raw(Box::new(DamlabInstance(inst)));
        Ok(())
    })
}

/// Releases an instance. NULL is ignored.
///
/// # Safety
/// `inst` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn damlab_instance_free(inst: *mut DamlabInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Writes the small count, large count, width and stripe count.
///
/// # Safety
/// `inst` must be a live handle; each output pointer must be valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn damlab_instance_shape(
    inst: *const DamlabInstance,
    small: *mut u64,
    large_count: *mut u64,
    width: *mut u64,
    stripes: *mut u64,
) -> DamlabStatus {
    guard(|| {
        let i = &inst.as_ref().ok_or_else(|| null("instance"))?.0;
        for (p, v) in [(small, i.small_count()), (large_count, i.large_count()), (width, i.w), (stripes, i.k)] {
            if !p.is_null() {
                *p = v as u64;
            }
        }
        Ok(())
    })
}

/// The instance in its text format; free with [`damlab_string_free`].
/// Returns NULL when `inst` is NULL.
///
/// # Safety
/// `inst` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn damlab_instance_to_text(inst: *const DamlabInstance) -> *mut c_char {
    match inst.as_ref() {
        Some(i) => into_c(i.0.to_text()),
        None => ptr::null_mut(),
    }
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn damlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn configure(algo: *const c_char, cfg: *const DamlabRunConfig) -> Result<RunConfig, (DamlabStatus, String)> {
    let algo: Algo = text(algo, "algo")?.parse().map_err(lib)?;
    let c = cfg.as_ref().ok_or_else(|| null("config"))?;
    let mut rc = RunConfig::new(algo, c.b as usize, c.m as usize);
    rc.prices = PriceTriple::new(c.price_a, c.price_b, c.price_c).map_err(lib)?;
    rc.j = (c.j > 0).then_some(c.j as usize);
    if c.node_budget > 0 {
        rc.node_budget = c.node_budget as usize;
    }
    Ok(rc)
}

/// Runs `algo` (`ram`, `sort-dam`, `ple-dfs`, `ple-bfs`, `ple-auto`,
/// `sampled` or `2btree`) and checks it against its oracle.
///
/// # Safety
/// `inst` must be a live handle, `algo` NUL-terminated, `cfg` and `row` valid.
#[no_mangle]
pub unsafe extern "C" fn damlab_run(
    inst: *const DamlabInstance,
    algo: *const c_char,
    cfg: *const DamlabRunConfig,
    row: *mut DamlabRow,
) -> DamlabStatus {
    guard(|| {
        let i = &inst.as_ref().ok_or_else(|| null("instance"))?.0;
        let out = row.as_mut().ok_or_else(|| null("row"))?;
        let r = run_experiment(i, &configure(algo, cfg)?).map_err(lib)?.row;
        *out = DamlabRow {
            s: r.s as u64,
            l: r.l as u64,
            w: r.w as u64,
            k: r.k as u64,
            b: r.b as u64,
            m: r.m as u64,
            seed: r.seed,
            reads: r.reads,
            writes: r.writes,
            total_ios: r.total_ios,
            bound_lower: r.bound_lower,
            bound_upper: r.bound_upper,
            ratio_upper: r.ratio_upper,
        };
        Ok(())
    })
}

/// Like [`damlab_run`], producing the CSV row as a string in `out`; free it
/// with [`damlab_string_free`].
///
/// # Safety
/// As [`damlab_run`]; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn damlab_run_csv(
    inst: *const DamlabInstance,
    algo: *const c_char,
    cfg: *const DamlabRunConfig,
    out: *mut *mut c_char,
) -> DamlabStatus {
    guard(|| {
        let i = &inst.as_ref().ok_or_else(|| null("instance"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = run_experiment(i, &configure(algo, cfg)?).map_err(lib)?;
        *out = into_c(r.row.to_csv());
        Ok(())
    })
}

/// Lower and upper placement bounds for one parameter set; `l` is the total
/// large volume.
///
/// # Safety
/// `lower` and `upper` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn damlab_ple_bounds(
    s: u64,
    l: u64,
    w: u64,
    k: u64,
    b: u64,
    m: u64,
    lower: *mut f64,
    upper: *mut f64,
) -> DamlabStatus {
    guard(|| {
        if lower.is_null() || upper.is_null() {
            return Err(null("output"));
        }
        let shape = Shape::new(s as usize, l as usize, w as usize, k as usize, b as usize, m as usize);
        *lower = ple_lower(&shape).map_err(lib)?;
        *upper = ple_upper(&shape).map_err(lib)?;
        Ok(())
    })
}
