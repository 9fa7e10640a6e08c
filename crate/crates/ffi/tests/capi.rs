use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use lsol_ffi::*;
use LsolStatus::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(lsol_last_error()) }.to_string_lossy().into_owned()
}

fn params(g0: f64, theta: f64, e_in: f64) -> *mut LsolParams {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { lsol_params_new(g0, 2.0, 10.0, theta, e_in, &mut p) }, LSOL_OK);
    p
}

#[test]
fn gain_and_roots() {
    let p = params(2.08, 0.0, 0.0);
    let mut f = 0.0;
    unsafe {
        assert_eq!(lsol_gain(p, 0.0, &mut f), LSOL_OK);
        assert!((f - (-1.0 - 2.0 + 2.08)).abs() < 1e-15);
        assert_eq!(lsol_gain(p, -1.0, &mut f), LSOL_ERR_DOMAIN);
        assert!(!last_error().is_empty());

        let mut len = 0;
        assert_eq!(lsol_homogeneous_states(p, 0.0, ptr::null_mut(), ptr::null_mut(), 0, &mut len), LSOL_ERR_BUFFER);
        assert_eq!(len, 3);
        let mut buf = [0.0; 3];
        let mut st = [0; 3];
        assert_eq!(lsol_homogeneous_states(p, 0.0, buf.as_mut_ptr(), st.as_mut_ptr(), 3, &mut len), LSOL_OK);
        assert!((buf[1] / 1.448469865573747 - 1.0).abs() < 1e-9);
        assert_eq!(st, [1, 0, 1]);
        lsol_params_free(p);
    }
}

#[test]
fn null_and_invalid_arguments() {
    unsafe {
        assert_eq!(lsol_params_new(2.08, 2.0, 10.0, 0.0, 0.0, ptr::null_mut()), LSOL_ERR_NULL);
        let mut p = ptr::null_mut();
        assert_eq!(lsol_params_new(2.08, 2.0, 0.0, 0.0, 0.0, &mut p), LSOL_ERR_INVALID_ARGUMENT);
        assert!(p.is_null());
        assert!(last_error().contains("b > 0"));
        let mut f = 0.0;
        assert_eq!(lsol_gain(ptr::null(), 1.0, &mut f), LSOL_ERR_NULL);
        let p = params(2.08, 0.0, 0.0);
        assert_eq!(lsol_params_set_pump_statistics(p, 1.5, 0.0), LSOL_ERR_INVALID_ARGUMENT);
        let mut s = ptr::null_mut();
        assert_eq!(lsol_soliton_find(p, LsolGeometry::LSOL_GEOMETRY_LINE, 0, 10.0, &mut s), LSOL_ERR_INVALID_ARGUMENT);
        // frees accept null
        lsol_params_free(ptr::null_mut());
        lsol_soliton_free(ptr::null_mut());
        lsol_field_free(ptr::null_mut());
        lsol_params_free(p);
    }
}

#[test]
fn soliton_handle_round_trip() {
    let p = params(2.08, 0.0, 0.0);
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(lsol_soliton_find(p, LsolGeometry::LSOL_GEOMETRY_LINE, 256, 64.0, &mut s), LSOL_OK, "{}", last_error());
        let (mut nu, mut peak, mut res) = (0.0, 0.0, 0.0);
        assert_eq!(lsol_soliton_info(s, &mut nu, &mut peak, &mut res), LSOL_OK);
        assert!((peak - 7.41603).abs() < 1e-4);
        assert!((nu - 0.0469847).abs() < 1e-6);
        assert!(res <= 1e-8);
        let (mut stable, mut growth) = (0, 0.0);
        assert_eq!(lsol_soliton_stability(s, &mut stable, &mut growth), LSOL_OK);
        assert_eq!(stable, 1);

        let mut len = 0;
        let mut re = vec![0.0; 255];
        let mut im = vec![0.0; 255];
        assert_eq!(lsol_soliton_profile(s, re.as_mut_ptr(), im.as_mut_ptr(), 255, &mut len), LSOL_ERR_BUFFER);
        assert_eq!(len, 256);

        let mut f = ptr::null_mut();
        assert_eq!(lsol_field_from_soliton(s, 1, 256, 64.0, &mut f), LSOL_OK);
        // stationary in its own frame: θ = ν_s
        let q = params(2.08, nu, 0.0);
        let path = CString::new(dir.path().join("a.lsol").to_str().unwrap()).unwrap();
        let var = CString::new("E").unwrap();
        assert_eq!(lsol_field_write(f, path.as_ptr(), var.as_ptr(), 0.0), LSOL_OK);
        assert_eq!(lsol_evolve(f, q, 0.01, 10.0), LSOL_OK);
        let mut g = ptr::null_mut();
        let mut t = -1.0;
        assert_eq!(lsol_field_read(path.as_ptr(), &mut g, &mut t), LSOL_OK);
        assert_eq!(t, 0.0);
        let mut a = (vec![0.0; 256], vec![0.0; 256]);
        let mut b = (vec![0.0; 256], vec![0.0; 256]);
        assert_eq!(lsol_field_values(f, a.0.as_mut_ptr(), a.1.as_mut_ptr(), 256, &mut len), LSOL_OK);
        assert_eq!(lsol_field_values(g, b.0.as_mut_ptr(), b.1.as_mut_ptr(), 256, &mut len), LSOL_OK);
        let drift = (0..256).map(|k| (a.0[k] - b.0[k]).hypot(a.1[k] - b.1[k])).fold(0.0, f64::max);
        assert!(drift < 1e-4, "{drift}");

        let missing = CString::new(dir.path().join("none.lsol").to_str().unwrap()).unwrap();
        let mut h = ptr::null_mut();
        assert_eq!(lsol_field_read(missing.as_ptr(), &mut h, ptr::null_mut()), LSOL_ERR_IO);
        assert!(h.is_null());

        lsol_field_free(f);
        lsol_field_free(g);
        lsol_soliton_free(s);
        lsol_params_free(p);
        lsol_params_free(q);
    }
}

#[test]
fn field_from_arrays_and_noise_check() {
    unsafe {
        let re: Vec<f64> = (0..16).map(|k| 0.5f64.powi(k)).collect();
        let im = vec![0.0; 16];
        let mut f = ptr::null_mut();
        assert_eq!(lsol_field_new(1, 16, 1, 4.0, re.as_ptr(), im.as_ptr(), &mut f), LSOL_OK);
        let mut g = ptr::null_mut();
        assert_eq!(lsol_field_new(2, 16, 8, 4.0, re.as_ptr(), im.as_ptr(), &mut g), LSOL_ERR_INVALID_ARGUMENT);
        assert_eq!(lsol_field_new(1, 12, 1, 4.0, re.as_ptr(), im.as_ptr(), &mut g), LSOL_ERR_INVALID_ARGUMENT);
        assert!(g.is_null());
        let mut out = (vec![0.0; 16], vec![0.0; 16]);
        let mut len = 0;
        assert_eq!(lsol_field_values(f, out.0.as_mut_ptr(), out.1.as_mut_ptr(), 16, &mut len), LSOL_OK);
        assert_eq!(out.0, re);
        lsol_field_free(f);

        let p = params(2.08, 0.0, 0.0);
        assert_eq!(lsol_params_set_pump_statistics(p, 1.0, 1.0), LSOL_OK);
        let mut z = f64::NAN;
        assert_eq!(lsol_noise_check(p, 1.0, 200_000, 3, &mut z), LSOL_OK, "{}", last_error());
        assert!(z < 5.0);
        lsol_params_free(p);
    }
}

#[test]
fn last_error_is_per_thread() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(lsol_params_new(f64::NAN, 2.0, 10.0, 0.0, 0.0, &mut p), LSOL_ERR_INVALID_ARGUMENT);
    }
    assert!(!last_error().is_empty());
    let other = std::thread::spawn(last_error).join().unwrap();
    assert!(other.is_empty());
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(lsol_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/lsol.h")).unwrap();
    for name in ["lsol_params_new", "lsol_soliton_find", "lsol_field_read", "lsol_last_error", "LSOL_ERR_BUFFER", "typedef struct LsolField LsolField"] {
        assert!(h.contains(name), "{name} missing from header");
    }
}

/// Compiles the C smoke program against the generated header and the shared
/// library built next to this test, then runs it.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let lib = [deps.to_path_buf(), deps.parent().unwrap().to_path_buf()]
        .into_iter()
        .find(|d| d.join("liblsol_ffi.so").exists())
        .expect("shared library next to the test binary");
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let manifest = env!("CARGO_MANIFEST_DIR");
    let st = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(format!("{manifest}/tests/c/smoke.c"))
        .arg(format!("-I{manifest}/include"))
        .arg(format!("-L{}", lib.display()))
        .arg(format!("-Wl,-rpath,{}", lib.display()))
        .args(["-llsol_ffi", "-lm"])
        .status()
        .expect("C compiler available");
    assert!(st.success());
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
