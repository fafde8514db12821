//! C ABI over the grading core.
//!
//! Every function returns a [`GeStatus`]; on failure the message is
//! available from [`ge_last_error_message`] on the calling thread. Masks are
//! opaque handles created by `ge_mask_*` constructors and released with
//! [`ge_mask_free`].

use gleason_engine::grading::{diagnose, grade_mask, GradingError, ThresholdProfile, VolumeProfile};
use gleason_engine::raster::pgm::{load_pgm, save_pgm, PgmError};
use gleason_engine::raster::{connected_components, Connectivity, RasterError};
use gleason_engine::stats::{self, OrdinalScale, StatsError};
use gleason_engine::{Diagnosis, LabelMask, TissueClass, Verdict};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Number of tissue classes; length of the array filled by
/// [`ge_mask_class_areas`].
pub const GE_CLASS_COUNT: usize = 7;
const _: () = assert!(GE_CLASS_COUNT == TissueClass::COUNT);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    /// The mask holds no epithelium.
    Ungradeable = 5,
    /// A statistic is undefined for the given data.
    Undefined = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeProfile {
    Biopsy = 0,
    Tma = 1,
}

impl GeProfile {
    fn thresholds(self) -> ThresholdProfile {
        match self {
            GeProfile::Biopsy => ThresholdProfile::biopsy(),
            GeProfile::Tma => ThresholdProfile::tma(),
        }
    }
}

/// Flattened diagnosis. Benign cases have `malignant == 0` and zero grades;
/// `tertiary` is 0 when absent.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GeDiagnosis {
    pub malignant: u8,
    pub primary: u8,
    pub secondary: u8,
    pub tertiary: u8,
    pub grade_group: u8,
    pub pct_benign: f64,
    pub pct_g3: f64,
    pub pct_g4: f64,
    pub pct_g5: f64,
    pub tumor_fraction: f64,
    pub malignancy_score: f64,
    pub aggressiveness_score: f64,
}

impl From<&Diagnosis> for GeDiagnosis {
    fn from(d: &Diagnosis) -> Self {
        let mut out = GeDiagnosis {
            pct_benign: d.profile.pct_benign,
            pct_g3: d.profile.pct_g3,
            pct_g4: d.profile.pct_g4,
            pct_g5: d.profile.pct_g5,
            tumor_fraction: d.tumor_fraction,
            malignancy_score: d.risk_scores.malignancy_score,
            aggressiveness_score: d.risk_scores.aggressiveness_score,
            ..GeDiagnosis::default()
        };
        if let Verdict::Malignant { score, grade_group } = d.verdict {
            out.malignant = 1;
            out.primary = score.primary;
            out.secondary = score.secondary;
            out.tertiary = score.tertiary.unwrap_or(0);
            out.grade_group = grade_group.value();
        }
        out
    }
}

/// Opaque run-length encoded label mask.
pub struct GeMask(LabelMask);

struct Failure {
    status: GeStatus,
    message: String,
}

impl Failure {
    fn new(status: GeStatus, message: impl Into<String>) -> Self {
        Failure { status, message: message.into() }
    }

    fn null(what: &str) -> Self {
        Failure::new(GeStatus::NullPointer, format!("{what} is null"))
    }
}

impl From<RasterError> for Failure {
    fn from(e: RasterError) -> Self {
        Failure::new(GeStatus::InvalidArgument, e.to_string())
    }
}

impl From<PgmError> for Failure {
    fn from(e: PgmError) -> Self {
        let status = match e {
            PgmError::Io(_) => GeStatus::Io,
            _ => GeStatus::Format,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<GradingError> for Failure {
    fn from(e: GradingError) -> Self {
        let status = match e {
            GradingError::NoEpithelium => GeStatus::Ungradeable,
            _ => GeStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        let status = match e {
            StatsError::DegenerateMarginals | StatsError::SingleClassTruth => GeStatus::Undefined,
            _ => GeStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: Option<String>) {
    let c = message.map(|m| CString::new(m.replace('\0', " ")).expect("no interior nul"));
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            GeStatus::Ok
        }
        Ok(Err(fail)) => {
            set_error(Some(fail.message));
            fail.status
        }
        Err(_) => {
            set_error(Some("internal panic".into()));
            GeStatus::Panic
        }
    }
}

fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: caller promises `p` is null or valid for writes
    unsafe { p.as_mut() }.ok_or_else(|| Failure::null(what))
}

fn mask_ref<'a>(p: *const GeMask) -> Result<&'a LabelMask, Failure> {
    // SAFETY: non-null handles come from `ge_mask_*` constructors
    unsafe { p.as_ref() }.map(|m| &m.0).ok_or_else(|| Failure::null("mask"))
}

fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    // SAFETY: caller promises `len` readable elements at `p`
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::null("path"));
    }
    // SAFETY: caller promises a nul-terminated string
    let s = unsafe { CStr::from_ptr(p) };
    s.to_str().map(str::to_string).map_err(|_| Failure::new(GeStatus::InvalidArgument, "path is not UTF-8"))
}

fn give(mask: LabelMask, out: *mut *mut GeMask) -> Result<(), Failure> {
    let slot = out_ref(out, "out")?;
    *slot = Box::into_raw(Box::new(GeMask(mask)));
    Ok(())
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ge_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ge_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Encodes `width * height` class codes (row-major) into a new mask.
///
/// # Safety
/// `codes` must point to `width * height` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ge_mask_from_raw(
    codes: *const u8,
    width: u32,
    height: u32,
    spacing_um: f64,
    out: *mut *mut GeMask,
) -> GeStatus {
    guard(|| {
        let n = (width as usize)
            .checked_mul(height as usize)
            .ok_or_else(|| Failure::new(GeStatus::InvalidArgument, "mask too large"))?;
        let raw = slice(codes, n, "codes")?;
        give(LabelMask::encode(raw, width, height, spacing_um)?, out)
    })
}

/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ge_mask_read_pgm(path: *const c_char, out: *mut *mut GeMask) -> GeStatus {
    guard(|| give(load_pgm(path_arg(path)?)?, out))
}

/// # Safety
/// `mask` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ge_mask_write_pgm(mask: *const GeMask, path: *const c_char) -> GeStatus {
    guard(|| {
        let m = mask_ref(mask)?;
        save_pgm(m, path_arg(path)?).map_err(|e| Failure::new(GeStatus::Io, e.to_string()))
    })
}

/// Releases a mask. Null is ignored.
///
/// # Safety
/// `mask` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ge_mask_free(mask: *mut GeMask) {
    if !mask.is_null() {
        // SAFETY: handle was produced by Box::into_raw in `give`
        drop(unsafe { Box::from_raw(mask) });
    }
}

/// # Safety
/// `mask` must be a live handle; `width` and `height` writable.
#[no_mangle]
pub unsafe extern "C" fn ge_mask_dims(mask: *const GeMask, width: *mut u32, height: *mut u32) -> GeStatus {
    guard(|| {
        let (w, h) = mask_ref(mask)?.shape();
        *out_ref(width, "width")? = w;
        *out_ref(height, "height")? = h;
        Ok(())
    })
}

/// Pixel count per class code into `out[0..GE_CLASS_COUNT]`.
///
/// # Safety
/// `mask` must be a live handle; `out` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn ge_mask_class_areas(mask: *const GeMask, out: *mut u64, len: usize) -> GeStatus {
    guard(|| {
        let areas = mask_ref(mask)?.class_areas();
        if len < GE_CLASS_COUNT {
            return Err(Failure::new(GeStatus::InvalidArgument, format!("need {GE_CLASS_COUNT} slots, got {len}")));
        }
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        // SAFETY: checked non-null, caller promises `len >= GE_CLASS_COUNT` slots
        let dst = unsafe { std::slice::from_raw_parts_mut(out, GE_CLASS_COUNT) };
        dst.copy_from_slice(areas.counts());
        Ok(())
    })
}

/// Number of same-class components of glandular pixels; `neighbours` is
/// 4 or 8.
///
/// # Safety
/// `mask` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ge_mask_component_count(mask: *const GeMask, neighbours: u32, out: *mut u64) -> GeStatus {
    guard(|| {
        let m = mask_ref(mask)?;
        let conn = Connectivity::from_neighbours(neighbours)
            .ok_or_else(|| Failure::new(GeStatus::InvalidArgument, format!("connectivity {neighbours}")))?;
        *out_ref(out, "out")? = connected_components(m, conn).len() as u64;
        Ok(())
    })
}

/// # Safety
/// `mask` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ge_grade_mask(mask: *const GeMask, profile: GeProfile, out: *mut GeDiagnosis) -> GeStatus {
    guard(|| {
        let d = grade_mask(mask_ref(mask)?, &profile.thresholds())?;
        *out_ref(out, "out")? = GeDiagnosis::from(&d);
        Ok(())
    })
}

/// Applies the threshold rules to epithelial fractions summing to one.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ge_diagnose(
    pct_benign: f64,
    pct_g3: f64,
    pct_g4: f64,
    pct_g5: f64,
    profile: GeProfile,
    out: *mut GeDiagnosis,
) -> GeStatus {
    guard(|| {
        let p = VolumeProfile::new(pct_benign, pct_g3, pct_g4, pct_g5)?;
        *out_ref(out, "out")? = GeDiagnosis::from(&diagnose(&p, &profile.thresholds()));
        Ok(())
    })
}

/// Quadratic-weighted kappa of two raters over categories `0..k`.
///
/// # Safety
/// `a` and `b` must each hold `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ge_quadratic_kappa(a: *const u8, b: *const u8, n: usize, k: u8, out: *mut f64) -> GeStatus {
    guard(|| {
        let scale = OrdinalScale::new((0..k).collect())?;
        let v = stats::quadratic_kappa(slice(a, n, "a")?, slice(b, n, "b")?, &scale)?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// Area under the ROC curve; `truth[i]` nonzero marks a positive.
///
/// # Safety
/// `scores` and `truth` must each hold `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ge_roc_auc(scores: *const f64, truth: *const u8, n: usize, out: *mut f64) -> GeStatus {
    guard(|| {
        let t: Vec<bool> = slice(truth, n, "truth")?.iter().map(|&x| x != 0).collect();
        let curve = stats::roc(slice(scores, n, "scores")?, &t)?;
        *out_ref(out, "out")? = curve.auc;
        Ok(())
    })
}
