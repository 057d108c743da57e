use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use enhp::model::{save_model, IntegratorConfig, IntensityModel};
use enhp::{EnhpModel as CoreModel, Event, EventSequence, ModelConfig};
use enhp_ffi::*;
use rand::SeedableRng;

fn core_model() -> CoreModel {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    CoreModel::init(
        ModelConfig {
            hidden_dim: 8,
            ..ModelConfig::new(3, 2)
        },
        &mut rng,
    )
    .unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(enhp_last_error()) }.to_str().unwrap().to_owned()
}

fn loaded(dir: &Path) -> (*mut EnhpModel, CoreModel) {
    let m = core_model();
    let path = dir.join("m.json");
    save_model(&m, &path).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { enhp_model_load(c.as_ptr(), &mut handle) }, EnhpStatus::Ok);
    assert!(!handle.is_null());
    (handle, m)
}

#[test]
fn handle_round_trip_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (h, m) = loaded(dir.path());
    unsafe {
        assert_eq!(enhp_model_num_types(h), 3);
        assert_eq!(enhp_model_embed_dim(h), 2);

        let mut v = 0.0;
        assert_eq!(enhp_model_impact(h, 2, 1, 0.7, &mut v), EnhpStatus::Ok);
        assert_eq!(v, m.impact(2, 1, 0.7).unwrap());

        let times = [0.2, 0.9, 1.4];
        let types = [0usize, 2, 1];
        let mut lam = [0.0; 3];
        let st = enhp_model_intensities(h, times.as_ptr(), types.as_ptr(), 3, 2.0, lam.as_mut_ptr(), 3);
        assert_eq!(st, EnhpStatus::Ok);
        let events: Vec<Event> = times.iter().zip(&types).map(|(&t, &k)| Event::new(t, k)).collect();
        assert_eq!(lam.to_vec(), m.intensities_after(&events, 2.0).unwrap());

        let mut ll = 0.0;
        let st = enhp_model_log_likelihood(h, times.as_ptr(), types.as_ptr(), 3, 3.0, 4, &mut ll);
        assert_eq!(st, EnhpStatus::Ok);
        let seq = EventSequence::new("s", 3.0, events);
        assert_eq!(ll, m.sequence_log_likelihood(&seq, &IntegratorConfig::trapezoid(4)).unwrap());

        let mut mat = [0.0; 9];
        assert_eq!(enhp_model_cumulative_impact(h, 10.0, 100, mat.as_mut_ptr(), 9), EnhpStatus::Ok);
        let expect = enhp::interpret::cumulative_impact(&m, 10.0, 100).unwrap().matrix;
        assert_eq!(mat.to_vec(), expect.concat());

        let (mut t, mut k) = (0.0, usize::MAX);
        let st = enhp_model_predict_next(h, times.as_ptr(), types.as_ptr(), 3, 0.5, 20.0, &mut t, &mut k);
        assert_eq!(st, EnhpStatus::Ok);
        assert!(t > 1.4 && k < 3);

        let out = CString::new(dir.path().join("copy.json").to_str().unwrap()).unwrap();
        assert_eq!(enhp_model_save(h, out.as_ptr()), EnhpStatus::Ok);
        assert_eq!(enhp::model::load_model(dir.path().join("copy.json")).unwrap(), m);
        enhp_model_free(h);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    let dir = tempfile::tempdir().unwrap();
    let (h, _) = loaded(dir.path());
    unsafe {
        let mut v = 0.0;
        assert_eq!(enhp_model_impact(ptr::null(), 0, 0, 1.0, &mut v), EnhpStatus::NullPointer);
        assert!(last_error().contains("model"));
        assert_eq!(enhp_model_impact(h, 0, 0, 1.0, ptr::null_mut()), EnhpStatus::NullPointer);
        assert_eq!(enhp_model_impact(h, 7, 0, 1.0, &mut v), EnhpStatus::InvalidArgument);
        assert!(!last_error().is_empty());

        let mut small = [0.0; 2];
        let st = enhp_model_intensities(h, ptr::null(), ptr::null(), 0, 1.0, small.as_mut_ptr(), 2);
        assert_eq!(st, EnhpStatus::InvalidArgument);
        assert!(last_error().contains("3 are needed"));

        let mut missing = ptr::null_mut();
        let bad = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
        assert_eq!(enhp_model_load(bad.as_ptr(), &mut missing), EnhpStatus::Io);
        assert!(missing.is_null());
        std::fs::write(dir.path().join("junk.json"), "{").unwrap();
        let junk = CString::new(dir.path().join("junk.json").to_str().unwrap()).unwrap();
        assert_eq!(enhp_model_load(junk.as_ptr(), &mut missing), EnhpStatus::Parse);

        assert_eq!(enhp_model_impact(h, 0, 0, 1.0, &mut v), EnhpStatus::Ok);
        assert_eq!(last_error(), "");
        enhp_model_free(h);
        enhp_model_free(ptr::null_mut());
        assert_eq!(enhp_model_num_types(ptr::null()), 0);
    }
}

#[test]
fn gradcheck_through_c_interface() {
    let mut worst = f64::NAN;
    assert_eq!(unsafe { enhp_gradcheck(1, 3, &mut worst) }, EnhpStatus::Ok);
    assert!(worst < 1e-5);
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(enhp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/enhp.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "enhp_version",
        "enhp_last_error",
        "enhp_model_load",
        "enhp_model_save",
        "enhp_model_free",
        "enhp_model_num_types",
        "enhp_model_embed_dim",
        "enhp_model_impact",
        "enhp_model_intensities",
        "enhp_model_log_likelihood",
        "enhp_model_cumulative_impact",
        "enhp_model_predict_next",
        "enhp_gradcheck",
        "typedef struct EnhpModel EnhpModel",
        "ENHP_STATUS_PANIC = 6",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler; skipped the syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
