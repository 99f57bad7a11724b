use std::ffi::{CStr, CString};
use std::ptr;

use swiftvad_ffi::*;

const TINY: &str = r#"{"m":1,"s":1,"d":4,"c":8,"head_resolutions":[[1,1],[2,2],[4,4]],
    "input_resolution":[16,16],"downsample_filters":[4,8,8]}"#;

fn last_error() -> String {
    let p = sv_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn tiny_model() -> *mut SvModel {
    let cfg = CString::new(TINY).unwrap();
    let mut model = ptr::null_mut();
    let status = unsafe { sv_model_create(cfg.as_ptr(), 3, &mut model) };
    assert_eq!(status, SvStatus::Ok);
    model
}

fn tmp(name: &str) -> (tempfile::TempDir, CString) {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join(name).to_str().unwrap()).unwrap();
    (dir, path)
}

#[test]
fn model_forward_and_score_agree() {
    let model = tiny_model();
    unsafe {
        let n = sv_model_input_len(model);
        assert_eq!(n, 3 * 16 * 16);
        let maps_len = sv_model_maps_len(model);
        assert_eq!(maps_len, 1 + 4 + 16);
        let input: Vec<f32> = (0..n).map(|i| (i % 17) as f32 / 17.0).collect();
        let mut maps = vec![0f32; maps_len];
        let status = sv_model_forward(model, input.as_ptr(), n, maps.as_mut_ptr(), maps_len);
        assert_eq!(status, SvStatus::Ok);
        let mut score = f64::NAN;
        assert_eq!(sv_model_score(model, input.as_ptr(), n, &mut score), SvStatus::Ok);
        let max = |s: &[f32]| s.iter().copied().fold(f32::MIN, f32::max) as f64;
        let expected = (max(&maps[..1]) + max(&maps[1..5]) + max(&maps[5..])) / 3.0;
        assert!((score - expected).abs() < 1e-6, "{score} vs {expected}");
        sv_model_free(model);
    }
}

#[test]
fn wrong_input_length_is_rejected() {
    let model = tiny_model();
    unsafe {
        let input = [0f32; 10];
        let mut score = 0.0;
        let status = sv_model_score(model, input.as_ptr(), input.len(), &mut score);
        assert_eq!(status, SvStatus::InvalidArgument);
        assert!(last_error().contains("10 floats"));
        sv_model_free(model);
    }
}

#[test]
fn null_pointers_and_bad_configs() {
    unsafe {
        assert_eq!(sv_model_create(ptr::null(), 0, ptr::null_mut()), SvStatus::NullPointer);
        let bad = CString::new(r#"{"m":1,"bogus":2}"#).unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(sv_model_create(bad.as_ptr(), 0, &mut model), SvStatus::Config);
        assert!(model.is_null());
        sv_model_free(ptr::null_mut());
        assert_eq!(sv_model_input_len(ptr::null()), 0);
    }
}

#[test]
fn error_message_clears_on_success() {
    unsafe {
        sv_model_create(ptr::null(), 0, ptr::null_mut());
        assert!(!sv_last_error_message().is_null());
        let scores = [0.1, 0.9];
        let labels = [0u8, 1];
        let mut auc = 0.0;
        assert_eq!(sv_roc_auc(scores.as_ptr(), labels.as_ptr(), 2, &mut auc), SvStatus::Ok);
        assert!(sv_last_error_message().is_null());
    }
}

#[test]
fn roc_auc_with_ties() {
    let scores = [0.2, 0.5, 0.5, 0.9];
    let labels = [0u8, 0, 1, 1];
    let mut auc = 0.0;
    unsafe {
        assert_eq!(sv_roc_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut auc), SvStatus::Ok);
    }
    assert!((auc - 0.875).abs() < 1e-12);
    unsafe {
        let status = sv_roc_auc(scores.as_ptr(), [1u8; 4].as_ptr(), 4, &mut auc);
        assert_eq!(status, SvStatus::Numeric);
    }
}

#[test]
fn amap_round_trip() {
    let (_dir, path) = tmp("m.amap");
    let data: Vec<f32> = (0..12).map(|i| i as f32 * 0.25 - 1.0).collect();
    unsafe {
        assert_eq!(sv_amap_write(path.as_ptr(), data.as_ptr(), 3, 4), SvStatus::Ok);
        let (mut h, mut w) = (0, 0);
        assert_eq!(sv_amap_read(path.as_ptr(), ptr::null_mut(), 0, &mut h, &mut w), SvStatus::Ok);
        assert_eq!((h, w), (3, 4));
        let mut small = vec![0f32; 4];
        let status = sv_amap_read(path.as_ptr(), small.as_mut_ptr(), 4, &mut h, &mut w);
        assert_eq!(status, SvStatus::InvalidArgument);
        let mut out = vec![0f32; 12];
        assert_eq!(sv_amap_read(path.as_ptr(), out.as_mut_ptr(), 12, &mut h, &mut w), SvStatus::Ok);
        assert_eq!(
            out.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn amap_errors() {
    let (dir, path) = tmp("bad.amap");
    std::fs::write(dir.path().join("bad.amap"), b"NOPE\0\0\0\0").unwrap();
    let (mut h, mut w) = (0, 0);
    unsafe {
        assert_eq!(sv_amap_read(path.as_ptr(), ptr::null_mut(), 0, &mut h, &mut w), SvStatus::Format);
        assert!(last_error().contains("magic"));
        let missing = CString::new(dir.path().join("none.amap").to_str().unwrap()).unwrap();
        assert_eq!(sv_amap_read(missing.as_ptr(), ptr::null_mut(), 0, &mut h, &mut w), SvStatus::Io);
    }
}

#[test]
fn run_command_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, r#"{"ablate":{"axes":["lr"]}}"#).unwrap();
    let cfg = CString::new(cfg_path.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        let ablate = CString::new("ablate").unwrap();
        assert_eq!(sv_run_command(ablate.as_ptr(), cfg.as_ptr(), -1, out.as_ptr()), SvStatus::Config);
        assert!(last_error().contains("lr"));
        let bogus = CString::new("train").unwrap();
        assert_eq!(sv_run_command(bogus.as_ptr(), cfg.as_ptr(), -1, out.as_ptr()), SvStatus::InvalidArgument);
    }
}

#[test]
fn run_command_gen_writes_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"model":{"d":4,"c":8,"input_resolution":[16,16],"downsample_filters":[4,8,8],"head_resolutions":[[1,1],[4,4]]},
            "scene":{"resolution":[16,16],"clip_length":8,"train_clips":1,"distill_clips":1,"test_clips":1,
                     "normal_size":[2,3],"oversized_size":[5,6]}}"#,
    )
    .unwrap();
    let cfg = CString::new(cfg_path.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("run").to_str().unwrap()).unwrap();
    let gen = CString::new("gen").unwrap();
    let status = unsafe { sv_run_command(gen.as_ptr(), cfg.as_ptr(), 5, out.as_ptr()) };
    assert_eq!(status, SvStatus::Ok, "{:?}", unsafe { sv_last_error_message().as_ref() }.map(|_| last_error()));
    assert!(dir.path().join("run/data/test").is_dir());
}

#[test]
fn header_lists_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/swiftvad.h")).unwrap();
    for name in [
        "sv_last_error_message",
        "sv_model_create",
        "sv_model_load",
        "sv_model_free",
        "sv_model_input_len",
        "sv_model_maps_len",
        "sv_model_forward",
        "sv_model_score",
        "sv_roc_auc",
        "sv_amap_write",
        "sv_amap_read",
        "sv_run_command",
        "SV_STATUS_PANIC",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn load_matches_saved_model() {
    let cfg: swiftvad::model::ModelConfig = serde_json::from_str(TINY).unwrap();
    let source = swiftvad::model::StudentModel::<f32>::new(&cfg, 11).unwrap();
    let (_dir, path) = tmp("student.ckpt");
    let p = std::path::PathBuf::from(path.to_str().unwrap());
    swiftvad::checkpoint::save_store(&p, &source.store).unwrap();

    let json = CString::new(TINY).unwrap();
    let mut loaded = ptr::null_mut();
    unsafe {
        assert_eq!(sv_model_load(json.as_ptr(), path.as_ptr(), &mut loaded), SvStatus::Ok);
        let n = sv_model_input_len(loaded);
        let input: Vec<f32> = (0..n).map(|i| ((i * 7) % 13) as f32 / 13.0).collect();
        let mut score = 0.0;
        assert_eq!(sv_model_score(loaded, input.as_ptr(), n, &mut score), SvStatus::Ok);
        let x = swiftvad::tensor::Tensor::new(&[1, 3, 16, 16], input).unwrap();
        let expected = swiftvad::metrics::frame_score(&source.predict(&x).unwrap()[0]).unwrap();
        assert_eq!(score.to_bits(), expected.to_bits());
        sv_model_free(loaded);

        let other = CString::new(r#"{"m":1,"s":1,"d":8,"c":8,"head_resolutions":[[1,1],[2,2],[4,4]],
            "input_resolution":[16,16],"downsample_filters":[4,8,8]}"#)
        .unwrap();
        let mut bad = ptr::null_mut();
        assert_eq!(sv_model_load(other.as_ptr(), path.as_ptr(), &mut bad), SvStatus::Format);
        assert!(bad.is_null());
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        return;
    };
    if !cc.status.success() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"swiftvad.h\"\nint main(void) { SvModel *m = 0; SvStatus s = sv_model_create(0, 1, &m); sv_model_free(m); return s == SV_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
