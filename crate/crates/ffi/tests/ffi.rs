use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use bsi_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { bsi_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn random_model(sizes: &[usize]) -> *mut BsiModel {
    let mut m = ptr::null_mut();
    let st = unsafe { bsi_model_random(sizes.as_ptr(), sizes.len(), 0, 1, 11, &mut m) };
    assert_eq!(st, BsiStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn model_handle_lifecycle_and_round_trip() {
    let m = random_model(&[4, 6, 3]);
    let (mut out_dim, mut in_dim, mut rank, mut active) = (0, 0, 0, 0);
    assert_eq!(
        unsafe { bsi_model_layer_dims(m, 0, &mut out_dim, &mut in_dim, &mut rank, &mut active) },
        BsiStatus::Ok
    );
    assert_eq!((out_dim, in_dim, rank, active), (6, 4, 4, 4));
    let idx = [1usize, 3];
    assert_eq!(unsafe { bsi_model_prune(m, 0, idx.as_ptr(), idx.len()) }, BsiStatus::Ok);
    let mut sigma = [f64::NAN; 4];
    assert_eq!(unsafe { bsi_model_sigma(m, 0, sigma.as_mut_ptr(), 4) }, BsiStatus::Ok);
    assert_eq!((sigma[1], sigma[3]), (0.0, 0.0));

    let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut before = [0.0; 6];
    assert_eq!(unsafe { bsi_model_forward(m, x.as_ptr(), 2, 4, before.as_mut_ptr(), 6) }, BsiStatus::Ok);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { bsi_model_save(m, path.as_ptr()) }, BsiStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { bsi_model_load(path.as_ptr(), &mut loaded) }, BsiStatus::Ok);
    let mut after = [0.0; 6];
    assert_eq!(unsafe { bsi_model_forward(loaded, x.as_ptr(), 2, 4, after.as_mut_ptr(), 6) }, BsiStatus::Ok);
    assert_eq!(before.map(f64::to_bits), after.map(f64::to_bits));
    let (mut p1, mut p2) = (0, 0);
    unsafe {
        bsi_model_param_count(m, &mut p1);
        bsi_model_param_count(loaded, &mut p2);
        bsi_model_free(m);
        bsi_model_free(loaded);
        bsi_model_free(ptr::null_mut());
    }
    assert_eq!(p1, p2);
}

#[test]
fn errors_set_status_and_message() {
    let mut out = 0.0;
    assert_eq!(unsafe { bsi_zeta(0.5, &mut out) }, BsiStatus::DomainError);
    assert!(last_error().contains("s > 1"), "{}", last_error());
    assert_eq!(unsafe { bsi_zeta(2.0, ptr::null_mut()) }, BsiStatus::NullPointer);
    assert_eq!(unsafe { bsi_zeta(2.0, &mut out) }, BsiStatus::Ok);
    assert_eq!(bsi_last_error_length(), 0);

    let m = random_model(&[3, 2]);
    let x = [0.0; 3];
    let mut small = [0.0; 1];
    assert_eq!(
        unsafe { bsi_model_forward(m, x.as_ptr(), 1, 3, small.as_mut_ptr(), 1) },
        BsiStatus::BufferTooSmall
    );
    unsafe { bsi_model_free(m) };

    let missing = CString::new("/nonexistent/dir/x.ckpt").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { bsi_model_load(missing.as_ptr(), &mut h) }, BsiStatus::Io);
    assert!(h.is_null());
    assert_eq!(unsafe { bsi_model_load(ptr::null(), &mut h) }, BsiStatus::NullPointer);
}

#[test]
fn numeric_entry_points_match_core() {
    let a = [2.0, 0.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0, 0.5];
    let mut d = [0.0; 3];
    assert_eq!(unsafe { bsi_hutchinson_diag(a.as_ptr(), 3, 1, 5, d.as_mut_ptr()) }, BsiStatus::Ok);
    assert_eq!(d, [2.0, -3.0, 0.5]);

    let mut eps = 0.0;
    assert_eq!(unsafe { bsi_choose_epsilon(2.0, 23, 0.01, 0.1, &mut eps) }, BsiStatus::Ok);
    assert!((eps - 1.1920928955078125e-5).abs() < 1e-18);
    assert_eq!(bsi_importance_score(1.0, 0.0, 2.0), 1.0);
    assert!((bsi_harmonic(3, 2.0) - 49.0 / 36.0).abs() < 1e-15);

    let mut v = 0.0;
    assert_eq!(unsafe { bsi_sample_complexity_psd(10, 1.0, 0.5, 0.1, &mut v) }, BsiStatus::Ok);
    assert!((v - 654.844).abs() < 1e-2);
    assert_eq!(unsafe { bsi_loss_change_bound(0.5, 1.0, 1.0, 1.0, &mut v) }, BsiStatus::Ok);
    assert!((v - 1.0 / 6.0).abs() < 1e-15);
    assert_eq!(unsafe { bsi_loss_change_bound_rel(0.0, 1.0, 1.0, 0.0, 1.0, &mut v) }, BsiStatus::DomainError);

    let u = [1.0, 2.0];
    let logits = [0.0, 0.0];
    let (vv, x) = ([1.0], [2.0]);
    assert_eq!(
        unsafe { bsi_lm_head_hessian_diag(u.as_ptr(), logits.as_ptr(), 2, vv.as_ptr(), x.as_ptr(), 1, &mut v) },
        BsiStatus::Ok
    );
    // p = (½, ½), mean 1.5, variance ¼, (vᵀx)² = 4.
    assert!((v - 1.0).abs() < 1e-15);
}

/// Compiles a C program against the generated header and static library.
#[test]
fn c_program_links_against_header() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = crate_dir.join("include");
    assert!(header_dir.join("bsi.h").exists());
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib_dir = deps.parent().unwrap().to_path_buf();
    let lib = lib_dir.join("libbsi_ffi.a");
    if !lib.exists() {
        eprintln!("static library not built at {}; skipping link check", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status();
    let Ok(status) = status else {
        eprintln!("no C compiler available; skipping link check");
        return;
    };
    assert!(status.success(), "C compile failed");
    let ckpt = tmp.path().join("from_c.ckpt");
    let out = Command::new(&exe).arg(&ckpt).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("layers=2"), "{text}");
    assert!(text.contains("score=1 "), "{text}");
    assert!(text.contains("zeta needs s > 1"), "{text}");
    let model = bsi::persist::load_checkpoint(&ckpt).unwrap();
    assert_eq!(model.layer_sizes(), vec![3, 5, 2]);
}
