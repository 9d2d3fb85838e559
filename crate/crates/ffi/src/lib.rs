//! C ABI over `bcp-nbi`.
//!
//! Calibration data lives behind an opaque [`BcpCalibration`] handle created by
//! [`bcp_calibration_new`] and released with [`bcp_calibration_free`]. Every
//! fallible call returns a [`BcpStatus`]; a human-readable message for the most
//! recent failure on the calling thread is available from [`bcp_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use bcp_nbi::budgetset::{build_set, Budget};
use bcp_nbi::conformal::{bcp_alpha, nc_score, nme_alpha, ScoreParams};
use bcp_nbi::domain::{normalize, CalibrationSet, CostModel, Example, LabelSpace};
use bcp_nbi::error::BcpError;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcpStatus {
    Ok = 0,
    NullPointer = 1,
    LengthMismatch = 2,
    Domain = 3,
    InvalidArgument = 4,
    InsufficientData = 5,
    Panic = 99,
}

/// Opaque calibration set.
pub struct BcpCalibration {
    space: LabelSpace,
    cal: CalibrationSet,
}

/// Outcome of [`bcp_predict`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BcpSetResult {
    /// Number of labels in the prediction set (a prefix of the ordering).
    pub c_max: usize,
    /// Probability of the first excluded label; NaN when the set is full.
    pub lambda_star: f64,
    /// Clamped BCP miscoverage estimate.
    pub alpha_bcp: f64,
    /// Unclamped e-value behind `alpha_bcp`.
    pub e_value: f64,
    /// Excluded probability mass.
    pub alpha_nme: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: BcpStatus, msg: impl Into<String>) -> BcpStatus {
    set_last_error(msg.into());
    status
}

fn status_of(err: &BcpError) -> BcpStatus {
    match err {
        BcpError::LengthMismatch { .. } => BcpStatus::LengthMismatch,
        BcpError::AllZero | BcpError::Domain { .. } => BcpStatus::Domain,
        BcpError::InsufficientData { .. } | BcpError::EmptyInput => BcpStatus::InsufficientData,
        _ => BcpStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), BcpStatus>) -> BcpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BcpStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(BcpStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, BcpStatus>;
}

impl<T> OrStatus<T> for Result<T, BcpError> {
    fn or_status(self) -> Result<T, BcpStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn slice_in<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], BcpStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(fail(BcpStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

/// Builds a calibration set from `n` row-major probability vectors of length
/// `num_labels` and their true labels. Rows are normalized with the library's
/// probability floor. On success `*out` owns a new handle.
///
/// # Safety
/// `probs` must point to `n * num_labels` doubles, `labels` to `n` values and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bcp_calibration_new(
    probs: *const f64,
    labels: *const usize,
    n: usize,
    num_labels: usize,
    beta: f64,
    out: *mut *mut BcpCalibration,
) -> BcpStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(BcpStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let space = LabelSpace::from_num_labels(num_labels).or_status()?;
        let total = n
            .checked_mul(num_labels)
            .ok_or_else(|| fail(BcpStatus::InvalidArgument, "n * num_labels overflows"))?;
        let probs = slice_in(probs, total, "probs")?;
        let labels = slice_in(labels, n, "labels")?;
        let params = ScoreParams::new(beta).or_status()?;
        let examples = probs
            .chunks_exact(num_labels)
            .zip(labels)
            .map(|(row, &y)| Example::new(normalize(&space, row)?, y))
            .collect::<Result<Vec<_>, _>>()
            .or_status()?;
        let cal = CalibrationSet::new(examples, params).or_status()?;
        *out = Box::into_raw(Box::new(BcpCalibration { space, cal }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `handle` must come from [`bcp_calibration_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bcp_calibration_free(handle: *mut BcpCalibration) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of calibration examples, or 0 for a null handle.
///
/// # Safety
/// `handle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bcp_calibration_len(handle: *const BcpCalibration) -> usize {
    handle.as_ref().map_or(0, |h| h.cal.len())
}

/// Builds the budgeted prediction set for one test distribution and estimates
/// its miscoverage.
///
/// `ordering_out`, when not null, receives all `num_labels` label indices in
/// descending-probability order; the first `c_max` form the set.
///
/// # Safety
/// `probs` and `costs` must point to `num_labels` doubles, `ordering_out` must
/// be null or hold `num_labels` slots and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bcp_predict(
    handle: *const BcpCalibration,
    probs: *const f64,
    num_labels: usize,
    costs: *const f64,
    budget: f64,
    ordering_out: *mut usize,
    out: *mut BcpSetResult,
) -> BcpStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| fail(BcpStatus::NullPointer, "handle is null"))?;
        if out.is_null() {
            return Err(fail(BcpStatus::NullPointer, "out is null"));
        }
        if num_labels != h.space.size() {
            return Err(fail(
                BcpStatus::LengthMismatch,
                format!("expected {} labels, got {num_labels}", h.space.size()),
            ));
        }
        let dist = normalize(&h.space, slice_in(probs, num_labels, "probs")?).or_status()?;
        let costs = CostModel::new(&h.space, slice_in(costs, num_labels, "costs")?.to_vec()).or_status()?;
        let budget = Budget::new(budget).or_status()?;
        let set = build_set(&dist, &costs, budget);
        let bcp = bcp_alpha(&dist, &set, &h.cal).or_status()?;
        let nme = nme_alpha(&dist, &set);
        if !ordering_out.is_null() {
            slice::from_raw_parts_mut(ordering_out, num_labels).copy_from_slice(set.ordering());
        }
        *out = BcpSetResult {
            c_max: set.c_max(),
            lambda_star: set.lambda_star().unwrap_or(f64::NAN),
            alpha_bcp: bcp.value,
            e_value: bcp.e_value.unwrap_or(f64::NAN),
            alpha_nme: nme.value,
        };
        Ok(())
    })
}

/// Nonconformity score `p^(-beta)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bcp_nc_score(p: f64, beta: f64, out: *mut f64) -> BcpStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(BcpStatus::NullPointer, "out is null"));
        }
        let params = ScoreParams::new(beta).or_status()?;
        *out = nc_score(p, params).or_status()?;
        Ok(())
    })
}

/// E-value of `score` against the handle's calibration scores.
///
/// # Safety
/// `handle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bcp_e_value(
    handle: *const BcpCalibration,
    score: f64,
    out: *mut f64,
) -> BcpStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| fail(BcpStatus::NullPointer, "handle is null"))?;
        if out.is_null() {
            return Err(fail(BcpStatus::NullPointer, "out is null"));
        }
        if !(score.is_finite() && score > 0.0) {
            return Err(fail(BcpStatus::Domain, format!("score {score} must be positive")));
        }
        *out = bcp_nbi::conformal::e_value(score, &h.cal);
        Ok(())
    })
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bcp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bcp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
