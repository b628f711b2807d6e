//! C ABI over the core pipeline.
//!
//! Conventions: every fallible call returns a [`MixplStatus`]; outputs come
//! back through out-pointers; datasets and rasters are opaque handles freed
//! with their `_free` function; `mixpl_last_error` returns a thread-local
//! message for the most recent failure. The header `include/mixpl.h` is
//! generated by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mixpl_core::pipeline::{pseudo_mixup, pseudo_mosaic, filter_by_threshold};
use mixpl_core::resample::RepeatPlan;
use mixpl_core::sim::{ema_update, ParamVector};
use mixpl_core::synthetic::SyntheticSpec;
use mixpl_core::{
    coco, grad, rng, BBox, CategoryId, DatasetIndex, Detection, ImageId, ImageRaster, ScaleClass,
};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixplStatus {
    MixplOk = 0,
    MixplNullArgument = 1,
    MixplInvalidArgument = 2,
    MixplIoError = 3,
    MixplParseError = 4,
    MixplValidationError = 5,
    MixplComposeError = 6,
    MixplInternalError = 7,
}

/// A detection in corner form with category id and confidence.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MixplDetection {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub category: u32,
    pub score: f64,
}

/// Opaque dataset handle.
pub struct MixplDataset {
    inner: DatasetIndex,
}

/// Opaque raster handle (8-bit RGB, row-major).
pub struct MixplRaster {
    inner: ImageRaster,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &mixpl_core::Error) -> MixplStatus {
    use mixpl_core::Error as E;
    match err {
        E::Io { .. } => MixplStatus::MixplIoError,
        E::Parse { .. } => MixplStatus::MixplParseError,
        E::Validation(_) | E::SplitFraction(_) => MixplStatus::MixplValidationError,
        E::Compose(_) => MixplStatus::MixplComposeError,
        E::Geometry(_)
        | E::PadTarget { .. }
        | E::RasterFormat(_)
        | E::Codec(_)
        | E::Augment(_)
        | E::Resample(_)
        | E::Calibration(_)
        | E::ParamLength { .. }
        | E::Config(_) => MixplStatus::MixplInvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> MixplStatus) -> MixplStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            MixplStatus::MixplInternalError
        }
    }
}

fn to_detection(d: &MixplDetection) -> Result<Detection, mixpl_core::Error> {
    Ok(Detection {
        bbox: BBox::new(d.x1, d.y1, d.x2, d.y2)?,
        category: CategoryId(d.category),
        score: d.score,
    })
}

fn from_detection(d: &Detection) -> MixplDetection {
    MixplDetection {
        x1: d.bbox.x1,
        y1: d.bbox.y1,
        x2: d.bbox.x2,
        y2: d.bbox.y2,
        category: d.category.0,
        score: d.score,
    }
}

/// Message for the most recent error on this thread. Valid until the next
/// failing call; never null.
#[no_mangle]
pub extern "C" fn mixpl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mixpl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Intersection-over-union of two corner-form boxes; -1 on invalid geometry.
#[no_mangle]
pub extern "C" fn mixpl_iou(
    ax1: f64,
    ay1: f64,
    ax2: f64,
    ay2: f64,
    bx1: f64,
    by1: f64,
    bx2: f64,
    by2: f64,
) -> f64 {
    match (BBox::new(ax1, ay1, ax2, ay2), BBox::new(bx1, by1, bx2, by2)) {
        (Ok(a), Ok(b)) => a.iou(&b),
        _ => {
            set_error("invalid box geometry");
            -1.0
        }
    }
}

/// COCO scale class of a box: 0 small, 1 medium, 2 large; -1 on invalid
/// geometry.
#[no_mangle]
pub extern "C" fn mixpl_area_class(x1: f64, y1: f64, x2: f64, y2: f64) -> i32 {
    match BBox::new(x1, y1, x2, y2) {
        Ok(b) => match b.scale_class() {
            ScaleClass::Small => 0,
            ScaleClass::Medium => 1,
            ScaleClass::Large => 2,
        },
        Err(_) => {
            set_error("invalid box geometry");
            -1
        }
    }
}

/// Classification gradient magnitude `|p - p*|`.
#[no_mangle]
pub extern "C" fn mixpl_gradient_norm(p: f64, p_star: f64) -> f64 {
    grad::gradient_norm(p, p_star)
}

/// Binary cross entropy with probability clamping.
#[no_mangle]
pub extern "C" fn mixpl_bce_loss(p: f64, p_star: f64) -> f64 {
    grad::bce_loss(p, p_star)
}

/// In-place EMA update of `teacher` toward `student`.
///
/// # Safety
/// `teacher` and `student` must point to `len` readable (and for `teacher`,
/// writable) doubles.
#[no_mangle]
pub unsafe extern "C" fn mixpl_ema_update(
    teacher: *mut f64,
    student: *const f64,
    len: usize,
    momentum: f64,
) -> MixplStatus {
    guard(|| {
        if teacher.is_null() || student.is_null() {
            set_error("null parameter vector");
            return MixplStatus::MixplNullArgument;
        }
        if !(0.0..=1.0).contains(&momentum) {
            set_error("momentum outside [0, 1]");
            return MixplStatus::MixplInvalidArgument;
        }
        let t = unsafe { std::slice::from_raw_parts_mut(teacher, len) };
        let s = unsafe { std::slice::from_raw_parts(student, len) };
        let updated = ema_update(&ParamVector(t.to_vec()), &ParamVector(s.to_vec()), momentum)
            .expect("equal lengths by construction");
        t.copy_from_slice(&updated.0);
        MixplStatus::MixplOk
    })
}

/// Keep detections scoring at or above `thr`, compacting in place.
///
/// # Safety
/// `dets` must point to `len` detections; `kept` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mixpl_filter_by_threshold(
    dets: *mut MixplDetection,
    len: usize,
    thr: f64,
    kept: *mut usize,
) -> MixplStatus {
    guard(|| {
        if dets.is_null() || kept.is_null() {
            set_error("null detection buffer");
            return MixplStatus::MixplNullArgument;
        }
        let slice = unsafe { std::slice::from_raw_parts_mut(dets, len) };
        let mut write = 0usize;
        for i in 0..len {
            if slice[i].score >= thr {
                slice[write] = slice[i];
                write += 1;
            }
        }
        unsafe { *kept = write };
        MixplStatus::MixplOk
    })
}

/// Load a COCO annotation document.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mixpl_dataset_load(
    path: *const c_char,
    out: *mut *mut MixplDataset,
) -> MixplStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            set_error("null argument");
            return MixplStatus::MixplNullArgument;
        }
        let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
            set_error("path is not valid UTF-8");
            return MixplStatus::MixplInvalidArgument;
        };
        match coco::load_dataset(Path::new(path)) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(MixplDataset { inner })) };
                MixplStatus::MixplOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Generate a procedural dataset.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mixpl_dataset_synthetic(
    num_images: usize,
    num_categories: u32,
    seed: u64,
    out: *mut *mut MixplDataset,
) -> MixplStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output handle");
            return MixplStatus::MixplNullArgument;
        }
        let spec = SyntheticSpec {
            num_images,
            num_categories,
            seed,
            ..SyntheticSpec::default()
        };
        match spec.generate() {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(MixplDataset { inner })) };
                MixplStatus::MixplOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Number of images in the dataset; 0 for a null handle.
///
/// # Safety
/// `ds` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn mixpl_dataset_len(ds: *const MixplDataset) -> usize {
    if ds.is_null() {
        return 0;
    }
    unsafe { &*ds }.inner.len()
}

/// Random labeled/unlabeled partition; both handles must be freed.
///
/// # Safety
/// `ds` must be a live dataset handle; both out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mixpl_dataset_split(
    ds: *const MixplDataset,
    fraction: f64,
    seed: u64,
    labeled: *mut *mut MixplDataset,
    unlabeled: *mut *mut MixplDataset,
) -> MixplStatus {
    guard(|| {
        if ds.is_null() || labeled.is_null() || unlabeled.is_null() {
            set_error("null argument");
            return MixplStatus::MixplNullArgument;
        }
        match coco::split_dataset(&unsafe { &*ds }.inner, fraction, seed) {
            Ok((l, u)) => {
                unsafe {
                    *labeled = Box::into_raw(Box::new(MixplDataset { inner: l }));
                    *unlabeled = Box::into_raw(Box::new(MixplDataset { inner: u }));
                }
                MixplStatus::MixplOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Category-level repeat factor `1 / f(c)^power` over a labeled split.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mixpl_repeat_factor(
    ds: *const MixplDataset,
    category: u32,
    power: f64,
    out: *mut f64,
) -> MixplStatus {
    guard(|| {
        if ds.is_null() || out.is_null() {
            set_error("null argument");
            return MixplStatus::MixplNullArgument;
        }
        match RepeatPlan::build(&unsafe { &*ds }.inner, power) {
            Ok(plan) => match plan.category_repeat.get(&CategoryId(category)) {
                Some(&r) => {
                    unsafe { *out = r };
                    MixplStatus::MixplOk
                }
                None => {
                    set_error("category absent from the labeled split");
                    MixplStatus::MixplInvalidArgument
                }
            },
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `ds` must be null or a handle produced by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn mixpl_dataset_free(ds: *mut MixplDataset) {
    if !ds.is_null() {
        drop(unsafe { Box::from_raw(ds) });
    }
}

/// Wrap `w x h x 3` RGB samples into a raster handle.
///
/// # Safety
/// `rgb` must hold `w * h * 3` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mixpl_raster_create(
    w: u32,
    h: u32,
    rgb: *const u8,
    out: *mut *mut MixplRaster,
) -> MixplStatus {
    guard(|| {
        if rgb.is_null() || out.is_null() {
            set_error("null argument");
            return MixplStatus::MixplNullArgument;
        }
        let len = w as usize * h as usize * 3;
        let data = unsafe { std::slice::from_raw_parts(rgb, len) }.to_vec();
        match ImageRaster::from_samples(w, h, data) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(MixplRaster { inner })) };
                MixplStatus::MixplOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `r` must be a live raster handle or null.
#[no_mangle]
pub unsafe extern "C" fn mixpl_raster_width(r: *const MixplRaster) -> u32 {
    if r.is_null() {
        return 0;
    }
    unsafe { &*r }.inner.width()
}

/// # Safety
/// `r` must be a live raster handle or null.
#[no_mangle]
pub unsafe extern "C" fn mixpl_raster_height(r: *const MixplRaster) -> u32 {
    if r.is_null() {
        return 0;
    }
    unsafe { &*r }.inner.height()
}

/// Copy the raster samples out; `dst_len` must be at least `w * h * 3`.
///
/// # Safety
/// `r` must be a live raster handle; `dst` must hold `dst_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mixpl_raster_copy_data(
    r: *const MixplRaster,
    dst: *mut u8,
    dst_len: usize,
) -> MixplStatus {
    guard(|| {
        if r.is_null() || dst.is_null() {
            set_error("null argument");
            return MixplStatus::MixplNullArgument;
        }
        let raster = &unsafe { &*r }.inner;
        let samples = raster.samples();
        if dst_len < samples.len() {
            set_error("destination buffer too small");
            return MixplStatus::MixplInvalidArgument;
        }
        unsafe { std::slice::from_raw_parts_mut(dst, samples.len()) }.copy_from_slice(samples);
        MixplStatus::MixplOk
    })
}

/// # Safety
/// `r` must be null or a handle produced by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn mixpl_raster_free(r: *mut MixplRaster) {
    if !r.is_null() {
        drop(unsafe { Box::from_raw(r) });
    }
}

/// Pixel-wise blend of two pseudo-labeled images with label union. Writes up
/// to `out_cap` labels; fails when the union does not fit.
///
/// # Safety
/// Raster handles must be live; label pointers must hold their stated counts;
/// `out_raster`, `out_labels`, and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mixpl_pseudo_mixup(
    a: *const MixplRaster,
    labels_a: *const MixplDetection,
    len_a: usize,
    b: *const MixplRaster,
    labels_b: *const MixplDetection,
    len_b: usize,
    alpha: f64,
    out_raster: *mut *mut MixplRaster,
    out_labels: *mut MixplDetection,
    out_cap: usize,
    out_len: *mut usize,
) -> MixplStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out_raster.is_null() || out_len.is_null() {
            set_error("null argument");
            return MixplStatus::MixplNullArgument;
        }
        if (len_a > 0 && labels_a.is_null()) || (len_b > 0 && labels_b.is_null()) {
            set_error("null label buffer with non-zero length");
            return MixplStatus::MixplNullArgument;
        }
        if len_a + len_b > out_cap {
            set_error("output label buffer too small for the union");
            return MixplStatus::MixplInvalidArgument;
        }
        let la = convert_labels(labels_a, len_a);
        let lb = convert_labels(labels_b, len_b);
        let (la, lb) = match (la, lb) {
            (Ok(la), Ok(lb)) => (la, lb),
            (Err(e), _) | (_, Err(e)) => {
                set_error(&e.to_string());
                return MixplStatus::MixplInvalidArgument;
            }
        };
        match pseudo_mixup(
            (&unsafe { &*a }.inner, &la),
            (&unsafe { &*b }.inner, &lb),
            alpha,
        ) {
            Ok((raster, labels)) => {
                for (i, d) in labels.iter().enumerate() {
                    unsafe { *out_labels.add(i) = from_detection(d) };
                }
                unsafe {
                    *out_len = labels.len();
                    *out_raster = Box::into_raw(Box::new(MixplRaster { inner: raster }));
                }
                MixplStatus::MixplOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Compose four pseudo-labeled images into one mosaic. Label output follows
/// the mixup call's convention; `dropped` reports degenerate clips.
///
/// # Safety
/// `rasters` must point to 4 live raster handles, `labels`/`lens` to 4 label
/// buffers and their counts; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mixpl_pseudo_mosaic(
    rasters: *const *const MixplRaster,
    labels: *const *const MixplDetection,
    lens: *const usize,
    range_lo: u32,
    range_hi: u32,
    seed: u64,
    out_raster: *mut *mut MixplRaster,
    out_labels: *mut MixplDetection,
    out_cap: usize,
    out_len: *mut usize,
    dropped: *mut usize,
) -> MixplStatus {
    guard(|| {
        if rasters.is_null()
            || labels.is_null()
            || lens.is_null()
            || out_raster.is_null()
            || out_len.is_null()
        {
            set_error("null argument");
            return MixplStatus::MixplNullArgument;
        }
        if range_lo == 0 || range_hi < range_lo {
            set_error("mosaic range must be ascending and positive");
            return MixplStatus::MixplInvalidArgument;
        }
        let handles = unsafe { std::slice::from_raw_parts(rasters, 4) };
        let label_ptrs = unsafe { std::slice::from_raw_parts(labels, 4) };
        let lens = unsafe { std::slice::from_raw_parts(lens, 4) };
        if handles.iter().any(|h| h.is_null()) {
            set_error("null raster handle");
            return MixplStatus::MixplNullArgument;
        }
        let mut converted: Vec<Vec<Detection>> = Vec::with_capacity(4);
        for i in 0..4 {
            match convert_labels(label_ptrs[i], lens[i]) {
                Ok(v) => converted.push(v),
                Err(e) => {
                    set_error(&e.to_string());
                    return MixplStatus::MixplInvalidArgument;
                }
            }
        }
        let total: usize = lens.iter().sum();
        if total > out_cap {
            set_error("output label buffer too small for the union");
            return MixplStatus::MixplInvalidArgument;
        }
        let inputs: Vec<(&ImageRaster, &[Detection], ImageId)> = (0..4)
            .map(|i| {
                (
                    &unsafe { &*handles[i] }.inner,
                    converted[i].as_slice(),
                    ImageId(i as u64),
                )
            })
            .collect();
        let mut r = rng::derived(seed, &[0xff16]);
        match pseudo_mosaic(
            &inputs,
            (range_lo, range_hi),
            &mut r,
            mixpl_core::augment::Filter::Bilinear,
        ) {
            Ok(out) => {
                for (i, d) in out.labels.iter().enumerate() {
                    unsafe { *out_labels.add(i) = from_detection(d) };
                }
                unsafe {
                    *out_len = out.labels.len();
                    if !dropped.is_null() {
                        *dropped = out.dropped;
                    }
                    *out_raster = Box::into_raw(Box::new(MixplRaster { inner: out.raster }));
                }
                MixplStatus::MixplOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

fn convert_labels(
    ptr: *const MixplDetection,
    len: usize,
) -> Result<Vec<Detection>, mixpl_core::Error> {
    if len == 0 {
        return Ok(Vec::new());
    }
    // SAFETY: caller contract, checked non-null with non-zero len upstream
    unsafe { std::slice::from_raw_parts(ptr, len) }
        .iter()
        .map(to_detection)
        .collect()
}

/// Number of detections surviving threshold filtering without mutating the
/// input (convenience for sizing buffers).
///
/// # Safety
/// `dets` must hold `len` readable detections.
#[no_mangle]
pub unsafe extern "C" fn mixpl_count_above_threshold(
    dets: *const MixplDetection,
    len: usize,
    thr: f64,
) -> usize {
    if dets.is_null() {
        return 0;
    }
    let slice = unsafe { std::slice::from_raw_parts(dets, len) };
    let converted: Vec<Detection> = slice
        .iter()
        .filter_map(|d| to_detection(d).ok())
        .collect();
    filter_by_threshold(&converted, thr).len()
}
