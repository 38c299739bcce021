use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use damlab_ffi::*;

fn cfg(b: u64, m: u64) -> DamlabRunConfig {
    DamlabRunConfig { b, m, price_a: 1.0, price_b: 2.0, price_c: 4.0, j: 0, node_budget: 0 }
}

fn generate(small: u64, large: u64, w: u64, k: u64, seed: u64) -> *mut DamlabInstance {
    let mut inst = ptr::null_mut();
    assert_eq!(unsafe { damlab_instance_generate(small, large, w, k, seed, &mut inst) }, DamlabStatus::Ok);
    inst
}

fn last_error() -> String {
    let p = damlab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn run_fills_row() {
    let inst = generate(512, 64, 8, 4, 1);
    let mut row = DamlabRow::default();
    let algo = CString::new("sort-dam").unwrap();
    assert_eq!(unsafe { damlab_run(inst, algo.as_ptr(), &cfg(4, 64), &mut row) }, DamlabStatus::Ok);
    assert_eq!((row.s, row.l, row.w, row.k), (512, 64, 8, 4));
    assert_eq!(row.total_ios, row.reads + row.writes);
    assert!(row.ratio_upper > 0.0);
    assert!(damlab_last_error().is_null());
    unsafe { damlab_instance_free(inst) };
}

#[test]
fn text_round_trip_and_shape() {
    let inst = generate(40, 10, 4, 3, 2);
    let text = unsafe { damlab_instance_to_text(inst) };
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { damlab_instance_parse(text, &mut back) }, DamlabStatus::Ok);
    let (mut s, mut l, mut w, mut k) = (0, 0, 0, 0);
    assert_eq!(unsafe { damlab_instance_shape(back, &mut s, &mut l, &mut w, &mut k) }, DamlabStatus::Ok);
    assert_eq!((s, l, w, k), (40, 10, 4, 3));
    unsafe {
        damlab_string_free(text);
        damlab_instance_free(inst);
        damlab_instance_free(back);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut inst = ptr::null_mut();
    assert_eq!(unsafe { damlab_instance_generate(8, 2, 4, 9, 0, &mut inst) }, DamlabStatus::Parameter);
    assert!(last_error().contains("parameter"));
    assert!(inst.is_null());

    let bad = CString::new("DAMLAB1 S=x").unwrap();
    assert_eq!(unsafe { damlab_instance_parse(bad.as_ptr(), &mut inst) }, DamlabStatus::Parse);

    let inst = generate(64, 64, 4, 64, 3);
    let mut row = DamlabRow::default();
    let algo = CString::new("2btree").unwrap();
    let st = unsafe { damlab_run(inst, algo.as_ptr(), &cfg(2, 32), &mut row) };
    assert!(matches!(st, DamlabStatus::BelowK0 | DamlabStatus::Parameter), "{st:?}");

    assert_eq!(unsafe { damlab_run(ptr::null(), algo.as_ptr(), &cfg(2, 32), &mut row) }, DamlabStatus::NullArgument);
    unsafe { damlab_instance_free(inst) };
}

#[test]
fn kk_override_through_config() {
    let inst = generate(65, 64, 2, 64, 4);
    let algo = CString::new("2btree").unwrap();
    let mut out = ptr::null_mut();
    let c = DamlabRunConfig { j: 1, ..cfg(2, 32) };
    assert_eq!(unsafe { damlab_run_csv(inst, algo.as_ptr(), &c, &mut out) }, DamlabStatus::Ok, "{}", last_error());
    let row = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
    assert!(row.starts_with("2btree,65,64,2,64,2,32,4,"));
    unsafe {
        damlab_string_free(out);
        damlab_instance_free(inst);
    }
}

#[test]
fn bounds_example() {
    let (mut lo, mut hi) = (0.0, 0.0);
    assert_eq!(unsafe { damlab_ple_bounds(1024, 512, 32, 4, 8, 64, &mut lo, &mut hi) }, DamlabStatus::Ok);
    assert!((lo - 48.0).abs() < 1e-9 && (hi - 216.0).abs() < 1e-9);
}

#[test]
fn header_matches_core() {
    let h = unsafe { CStr::from_ptr(damlab_csv_header()) };
    assert_eq!(h.to_str().unwrap(), damlab::experiment::CSV_HEADER);
}

fn staticlib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?;
    let lib = dir.join("libdamlab_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn generated_header_compiles_and_links() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include/damlab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in [
        "damlab_run",
        "damlab_instance_free",
        "damlab_last_error",
        "DAMLAB_STATUS_BELOW_K0",
        "typedef struct DamlabInstance DamlabInstance",
    ] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let out = std::env::temp_dir().join(format!("damlab_smoke_{}", std::process::id()));
    let mut cc = Command::new("cc");
    cc.arg("-std=c99").arg("-Wall").arg("-I").arg(root.join("include")).arg(root.join("tests/c/smoke.c")).arg("-o").arg(&out);
    match staticlib() {
        Some(lib) => {
            cc.arg(lib).args(["-lpthread", "-ldl", "-lm"]);
        }
        None => {
            cc.arg("-fsyntax-only");
        }
    }
    let st = cc.status().expect("C compiler");
    assert!(st.success());
    if staticlib().is_some() {
        let run = Command::new(&out).output().unwrap();
        let _ = std::fs::remove_file(&out);
        assert!(run.status.success(), "smoke exited {:?}", run.status.code());
        assert!(String::from_utf8_lossy(&run.stdout).starts_with("algo,S,L"));
    }
}
