//! Exercises the C surface from Rust: handle lifecycles, error codes, and
//! value round-trips.

use std::ffi::CStr;

use mixpl_ffi::*;

fn det(x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> MixplDetection {
    MixplDetection {
        x1,
        y1,
        x2,
        y2,
        category: 1,
        score,
    }
}

#[test]
fn iou_and_area_class() {
    assert_eq!(mixpl_iou(0.0, 0.0, 10.0, 10.0, 0.0, 0.0, 10.0, 10.0), 1.0);
    assert_eq!(mixpl_iou(0.0, 0.0, 1.0, 1.0, 5.0, 5.0, 6.0, 6.0), 0.0);
    assert_eq!(mixpl_iou(0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0), -1.0);
    assert_eq!(mixpl_area_class(0.0, 0.0, 10.0, 10.0), 0);
    assert_eq!(mixpl_area_class(0.0, 0.0, 50.0, 50.0), 1);
    assert_eq!(mixpl_area_class(0.0, 0.0, 200.0, 200.0), 2);
    assert_eq!(mixpl_area_class(5.0, 5.0, 5.0, 9.0), -1);
}

#[test]
fn gradient_and_bce() {
    assert!((mixpl_gradient_norm(0.9, 1.0) - 0.1).abs() < 1e-12);
    assert!((mixpl_bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn ema_updates_in_place() {
    let mut teacher = [0.0f64; 8];
    let student = [1.0f64; 8];
    for _ in 0..10 {
        let st = unsafe { mixpl_ema_update(teacher.as_mut_ptr(), student.as_ptr(), 8, 0.9) };
        assert_eq!(st, MixplStatus::MixplOk);
    }
    let expect = 1.0 - 0.9f64.powi(10);
    for v in teacher {
        assert!((v - expect).abs() < 1e-12);
    }
    let st = unsafe { mixpl_ema_update(std::ptr::null_mut(), student.as_ptr(), 8, 0.9) };
    assert_eq!(st, MixplStatus::MixplNullArgument);
}

#[test]
fn threshold_filter_compacts() {
    let mut dets = [
        det(0.0, 0.0, 5.0, 5.0, 0.3),
        det(0.0, 0.0, 5.0, 5.0, 0.8),
        det(0.0, 0.0, 5.0, 5.0, 0.5),
        det(0.0, 0.0, 5.0, 5.0, 0.9),
    ];
    let mut kept = 0usize;
    let st = unsafe { mixpl_filter_by_threshold(dets.as_mut_ptr(), 4, 0.7, &mut kept) };
    assert_eq!(st, MixplStatus::MixplOk);
    assert_eq!(kept, 2);
    assert_eq!(dets[0].score, 0.8);
    assert_eq!(dets[1].score, 0.9);
    assert_eq!(unsafe { mixpl_count_above_threshold(dets.as_ptr(), 4, 0.0) }, 4);
}

#[test]
fn dataset_lifecycle_and_split() {
    let mut ds: *mut MixplDataset = std::ptr::null_mut();
    let st = unsafe { mixpl_dataset_synthetic(60, 10, 7, &mut ds) };
    assert_eq!(st, MixplStatus::MixplOk);
    assert_eq!(unsafe { mixpl_dataset_len(ds) }, 60);

    let mut labeled: *mut MixplDataset = std::ptr::null_mut();
    let mut unlabeled: *mut MixplDataset = std::ptr::null_mut();
    let st = unsafe { mixpl_dataset_split(ds, 0.25, 3, &mut labeled, &mut unlabeled) };
    assert_eq!(st, MixplStatus::MixplOk);
    assert_eq!(unsafe { mixpl_dataset_len(labeled) }, 15);
    assert_eq!(unsafe { mixpl_dataset_len(unlabeled) }, 45);

    let mut r = 0.0f64;
    let st = unsafe { mixpl_repeat_factor(labeled, 1, 0.5, &mut r) };
    assert_eq!(st, MixplStatus::MixplOk);
    assert!(r >= 1.0);

    let st = unsafe { mixpl_dataset_split(ds, 1.5, 3, &mut labeled, &mut unlabeled) };
    assert_eq!(st, MixplStatus::MixplValidationError);
    let msg = unsafe { CStr::from_ptr(mixpl_last_error()) };
    assert!(msg.to_string_lossy().contains("1.5"));

    unsafe {
        mixpl_dataset_free(ds);
        mixpl_dataset_free(labeled);
        mixpl_dataset_free(unlabeled);
    }
}

#[test]
fn dataset_load_missing_file_is_io_error() {
    let mut ds: *mut MixplDataset = std::ptr::null_mut();
    let path = std::ffi::CString::new("/nonexistent/ann.json").unwrap();
    let st = unsafe { mixpl_dataset_load(path.as_ptr(), &mut ds) };
    assert_eq!(st, MixplStatus::MixplIoError);
    assert!(ds.is_null());
}

#[test]
fn raster_round_trip_and_mixup() {
    let a_data = [100u8; 4 * 4 * 3];
    let b_data = [200u8; 4 * 4 * 3];
    let mut a: *mut MixplRaster = std::ptr::null_mut();
    let mut b: *mut MixplRaster = std::ptr::null_mut();
    unsafe {
        assert_eq!(
            mixpl_raster_create(4, 4, a_data.as_ptr(), &mut a),
            MixplStatus::MixplOk
        );
        assert_eq!(
            mixpl_raster_create(4, 4, b_data.as_ptr(), &mut b),
            MixplStatus::MixplOk
        );
    }
    assert_eq!(unsafe { mixpl_raster_width(a) }, 4);

    let la = [det(0.0, 0.0, 2.0, 2.0, 0.9)];
    let lb = [det(1.0, 1.0, 3.0, 3.0, 0.8)];
    let mut out: *mut MixplRaster = std::ptr::null_mut();
    let mut out_labels = [det(0.0, 0.0, 1.0, 1.0, 0.0); 8];
    let mut out_len = 0usize;
    let st = unsafe {
        mixpl_pseudo_mixup(
            a,
            la.as_ptr(),
            1,
            b,
            lb.as_ptr(),
            1,
            0.5,
            &mut out,
            out_labels.as_mut_ptr(),
            8,
            &mut out_len,
        )
    };
    assert_eq!(st, MixplStatus::MixplOk);
    assert_eq!(out_len, 2);
    let mut buf = vec![0u8; 4 * 4 * 3];
    assert_eq!(
        unsafe { mixpl_raster_copy_data(out, buf.as_mut_ptr(), buf.len()) },
        MixplStatus::MixplOk
    );
    assert!(buf.iter().all(|&v| v == 150));
    unsafe {
        mixpl_raster_free(a);
        mixpl_raster_free(b);
        mixpl_raster_free(out);
    }
}

#[test]
fn mosaic_over_four_rasters() {
    let mk = |v: u8| {
        let data = vec![v; 100 * 100 * 3];
        let mut r: *mut MixplRaster = std::ptr::null_mut();
        assert_eq!(
            unsafe { mixpl_raster_create(100, 100, data.as_ptr(), &mut r) },
            MixplStatus::MixplOk
        );
        r
    };
    let rasters = [mk(10), mk(20), mk(30), mk(40)];
    let labels: Vec<Vec<MixplDetection>> = (0..4)
        .map(|i| vec![det(10.0, 10.0, 40.0, 40.0, 0.5 + i as f64 * 0.1)])
        .collect();
    let label_ptrs: Vec<*const MixplDetection> = labels.iter().map(|l| l.as_ptr()).collect();
    let lens = [1usize, 1, 1, 1];
    let raster_ptrs: Vec<*const MixplRaster> = rasters.iter().map(|&r| r as *const _).collect();

    let mut out: *mut MixplRaster = std::ptr::null_mut();
    let mut out_labels = [det(0.0, 0.0, 1.0, 1.0, 0.0); 16];
    let mut out_len = 0usize;
    let mut dropped = 0usize;
    let st = unsafe {
        mixpl_pseudo_mosaic(
            raster_ptrs.as_ptr(),
            label_ptrs.as_ptr(),
            lens.as_ptr(),
            50,
            60,
            9,
            &mut out,
            out_labels.as_mut_ptr(),
            16,
            &mut out_len,
            &mut dropped,
        )
    };
    assert_eq!(st, MixplStatus::MixplOk);
    assert_eq!(out_len + dropped, 4);
    assert!(unsafe { mixpl_raster_width(out) } >= 100);
    unsafe {
        for r in rasters {
            mixpl_raster_free(r);
        }
        mixpl_raster_free(out);
    }
}

#[test]
fn version_is_exposed() {
    let v = unsafe { CStr::from_ptr(mixpl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
