use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use filterlab_ffi::*;

fn last_error() -> String {
    let p = fl_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn plant_from(json: &str) -> (FlStatus, *mut FlPlant) {
    let text = CString::new(json).unwrap();
    let mut plant = ptr::null_mut();
    let status = unsafe { fl_plant_from_json(text.as_ptr(), &mut plant) };
    (status, plant)
}

const GOLDEN: &str = r#"{"A": [[[1.0]]], "Q": [[[1.0]]], "sensors": [{"C": [[[1.0]]], "R": [[[1.0]]]}]}"#;

#[test]
fn golden_ratio_through_the_c_api() {
    let (status, plant) = plant_from(GOLDEN);
    assert_eq!(status, FlStatus::Ok);
    let mut sol = ptr::null_mut();
    unsafe {
        assert_eq!(fl_dpre_solve(plant, 1e-13, &mut sol), FlStatus::Ok);
        let (mut period, mut dim) = (0, 0);
        assert_eq!(fl_solution_period(sol, &mut period, &mut dim), FlStatus::Ok);
        assert_eq!((period, dim), (1, 1));
        let mut p = 0.0;
        assert_eq!(fl_solution_matrix(sol, 7, &mut p, 1), FlStatus::Ok);
        assert!((p - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
        let mut observable = false;
        assert_eq!(fl_uniform_observability(plant, &mut observable), FlStatus::Ok);
        assert!(observable);
        fl_solution_free(sol);
        fl_plant_free(plant);
    }
    assert!(fl_last_error_message().is_null());
}

#[test]
fn benchmark_matches_the_library() {
    unsafe {
        let mut plant = ptr::null_mut();
        assert_eq!(fl_plant_paper(&mut plant), FlStatus::Ok);
        let (mut n, mut sensors, mut period) = (0, 0, 0);
        assert_eq!(fl_plant_dims(plant, &mut n, &mut sensors, &mut period), FlStatus::Ok);
        assert_eq!((n, sensors, period), (4, 20, 30));

        let mut net = ptr::null_mut();
        assert_eq!(fl_network_random_geometric(20, 300.0, 130.0, 1, &mut net), FlStatus::Ok);
        let (mut d, mut sigma2) = (0, 0.0);
        assert_eq!(fl_network_diameter(net, &mut d), FlStatus::Ok);
        assert_eq!(fl_network_sigma2(net, &mut sigma2), FlStatus::Ok);
        assert!(sigma2 > 0.0 && sigma2 < 1.0);

        let scenario = filterlab::harness::Scenario::paper(1).unwrap();
        assert_eq!(d, scenario.diameter());
        let expected = filterlab::gap::cmdf_error_dple(&scenario.plant, &scenario.weights, d, 3, 1e-10).unwrap();

        let mut sol = ptr::null_mut();
        assert_eq!(fl_cmdf_error_dple(plant, net, d, 3, 1e-10, &mut sol), FlStatus::Ok);
        let mut avg = 0.0;
        assert_eq!(fl_solution_average_trace(sol, &mut avg), FlStatus::Ok);
        assert_eq!(avg, expected.average_trace());
        let mut buf = [0.0; 16];
        assert_eq!(fl_solution_matrix(sol, 2, buf.as_mut_ptr(), buf.len()), FlStatus::Ok);
        assert_eq!(buf[5], expected.at(2)[(1, 1)]);
        assert_eq!(buf[1], expected.at(2)[(0, 1)]);
        assert_eq!(fl_solution_matrix(sol, 0, buf.as_mut_ptr(), 3), FlStatus::InvalidInput);
        fl_solution_free(sol);

        let mut ric = ptr::null_mut();
        assert_eq!(fl_cmdf_dpre(plant, net, d, 3, 0.0, &mut ric), FlStatus::Ok);
        fl_solution_free(ric);

        assert_eq!(fl_cmdf_dpre(plant, net, d, 20, 0.0, &mut ric), FlStatus::InvalidInput);
        assert!(last_error().contains("out of range"));
        fl_network_free(net);
        fl_plant_free(plant);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut sol = ptr::null_mut();
        assert_eq!(fl_dpre_solve(ptr::null(), 0.0, &mut sol), FlStatus::NullPointer);
        assert!(last_error().contains("plant"));

        let (status, _) = plant_from("{not json");
        assert_eq!(status, FlStatus::InvalidInput);

        // Growing state the sensor cannot see.
        let (status, plant) = plant_from(r#"{"A": [[[2.0]]], "Q": [[[1.0]]], "sensors": [{"C": [[[0.0]]], "R": [[[1.0]]]}]}"#);
        assert_eq!(status, FlStatus::Ok);
        assert_eq!(fl_dpre_solve(plant, 0.0, &mut sol), FlStatus::Numerical);
        assert_eq!(fl_dpre_solve(plant, -1.0, &mut sol), FlStatus::InvalidInput);
        fl_plant_free(plant);

        let mut net = ptr::null_mut();
        let edges = [0usize, 1];
        assert_eq!(fl_network_from_edges(3, edges.as_ptr(), 1, &mut net), FlStatus::InvalidInput);
        assert!(last_error().contains("disconnected"));
        let edges = [0usize, 1, 1, 2];
        assert_eq!(fl_network_from_edges(3, edges.as_ptr(), 2, &mut net), FlStatus::Ok);
        let mut d = 0;
        assert_eq!(fl_network_diameter(net, &mut d), FlStatus::Ok);
        assert_eq!(d, 2);
        fl_network_free(net);

        fl_plant_free(ptr::null_mut());
        fl_network_free(ptr::null_mut());
        fl_solution_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/filterlab.h")).unwrap();
    let source = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    for line in source.lines().filter(|l| l.contains("extern \"C\" fn ")) {
        let name = line.split("fn ").nth(1).unwrap().split('(').next().unwrap();
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for status in ["FL_STATUS_OK = 0", "FL_STATUS_NULL_POINTER", "FL_STATUS_NUMERICAL", "FL_STATUS_PANIC"] {
        assert!(header.contains(status));
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // The test binary lives in <target>/<profile>/deps; the static library one level up.
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libfilterlab_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let tmp = std::env::temp_dir().join(format!("filterlab_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&tmp)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&tmp).output().unwrap();
    let _ = std::fs::remove_file(&tmp);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("golden 1.6180339887"));
    assert!(stdout.contains("sensors 20 period 30"));
}
