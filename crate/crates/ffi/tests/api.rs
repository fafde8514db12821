use gleason_engine_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> Option<String> {
    let p = ge_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn mask(codes: &[u8], w: u32, h: u32) -> *mut GeMask {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ge_mask_from_raw(codes.as_ptr(), w, h, 1.0, &mut m) }, GeStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn grade_matches_core() {
    let codes = [1, 2, 3, 3, 3, 4, 4, 5, 2, 2, 3, 3];
    let m = mask(&codes, 4, 3);
    let mut d = GeDiagnosis::default();
    assert_eq!(unsafe { ge_grade_mask(m, GeProfile::Biopsy, &mut d) }, GeStatus::Ok);
    let core = gleason_engine::grade_mask(
        &gleason_engine::LabelMask::encode(&codes, 4, 3, 1.0).unwrap(),
        &gleason_engine::ThresholdProfile::biopsy(),
    )
    .unwrap();
    assert_eq!(d, GeDiagnosis::from(&core));
    assert_eq!(d.malignant, 1);
    assert_eq!((d.primary, d.secondary), (3, 5));
    unsafe { ge_mask_free(m) };
}

#[test]
fn null_and_bad_arguments_set_messages() {
    let mut d = GeDiagnosis::default();
    assert_eq!(unsafe { ge_grade_mask(ptr::null(), GeProfile::Biopsy, &mut d) }, GeStatus::NullPointer);
    assert!(last_error().unwrap().contains("mask"));

    let mut m = ptr::null_mut();
    let bad = [0u8, 9];
    assert_eq!(unsafe { ge_mask_from_raw(bad.as_ptr(), 2, 1, 1.0, &mut m) }, GeStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(last_error().unwrap().contains("class code"));

    let mut areas = [0u64; 3];
    let m = mask(&[2, 2], 2, 1);
    assert_eq!(unsafe { ge_mask_class_areas(m, areas.as_mut_ptr(), areas.len()) }, GeStatus::InvalidArgument);
    unsafe { ge_mask_free(m) };

    assert_eq!(unsafe { ge_diagnose(0.5, 0.5, 0.5, 0.0, GeProfile::Biopsy, &mut d) }, GeStatus::InvalidArgument);
    // a successful call clears the message
    assert_eq!(unsafe { ge_diagnose(0.5, 0.5, 0.0, 0.0, GeProfile::Tma, &mut d) }, GeStatus::Ok);
    assert!(last_error().is_none());
}

#[test]
fn ungradeable_and_undefined_statuses() {
    let m = mask(&[0, 1, 1, 0], 2, 2);
    let mut d = GeDiagnosis::default();
    assert_eq!(unsafe { ge_grade_mask(m, GeProfile::Biopsy, &mut d) }, GeStatus::Ungradeable);
    unsafe { ge_mask_free(m) };

    let a = [2u8; 5];
    let mut k = 0.0;
    assert_eq!(unsafe { ge_quadratic_kappa(a.as_ptr(), a.as_ptr(), 5, 6, &mut k) }, GeStatus::Undefined);
    let scores = [0.1, 0.2];
    let truth = [1u8, 1];
    assert_eq!(unsafe { ge_roc_auc(scores.as_ptr(), truth.as_ptr(), 2, &mut k) }, GeStatus::Undefined);
}

#[test]
fn pgm_roundtrip_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.pgm").to_str().unwrap()).unwrap();
    let codes = [0, 1, 2, 3, 4, 5, 6, 2, 2];
    let m = mask(&codes, 3, 3);
    assert_eq!(unsafe { ge_mask_write_pgm(m, path.as_ptr()) }, GeStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { ge_mask_read_pgm(path.as_ptr(), &mut back) }, GeStatus::Ok);
    let (mut a, mut b) = ([0u64; GE_CLASS_COUNT], [0u64; GE_CLASS_COUNT]);
    unsafe {
        assert_eq!(ge_mask_class_areas(m, a.as_mut_ptr(), a.len()), GeStatus::Ok);
        assert_eq!(ge_mask_class_areas(back, b.as_mut_ptr(), b.len()), GeStatus::Ok);
        ge_mask_free(m);
        ge_mask_free(back);
        ge_mask_free(ptr::null_mut());
    }
    assert_eq!(a, b);
    assert_eq!(a, [1, 1, 3, 1, 1, 1, 1]);

    let garbage = dir.path().join("g.pgm");
    std::fs::write(&garbage, b"P2\n1 1\n255\n0").unwrap();
    let garbage = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ge_mask_read_pgm(garbage.as_ptr(), &mut back) }, GeStatus::Format);
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(ge_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
