//! C ABI over the swiftvad core.
//!
//! Every function returns an [`SvStatus`]. On failure a message is kept per
//! thread and can be read with [`sv_last_error_message`] until the next call
//! on that thread. Models are opaque handles owned by the caller and released
//! with [`sv_model_free`]. Panics never cross the boundary; they surface as
//! `SV_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use swiftvad::checkpoint;
use swiftvad::metrics::{frame_score, roc_auc};
use swiftvad::model::{ModelConfig, StudentModel};
use swiftvad::pipeline::{run_command, Command, RunConfig};
use swiftvad::teachers::{decode_amap, encode_amap};
use swiftvad::tensor::Tensor;
use swiftvad::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    Shape = 6,
    Numeric = 7,
    Runtime = 8,
    Panic = 9,
}

impl From<&Error> for SvStatus {
    fn from(e: &Error) -> Self {
        match e {
            _ if e.is_config() => SvStatus::Config,
            Error::MissingFile(_) | Error::Io { .. } => SvStatus::Io,
            Error::BadMagic { .. } | Error::Truncated { .. } | Error::Format { .. } | Error::Checkpoint(_) => {
                SvStatus::Format
            }
            Error::Dimension { .. } | Error::Shape { .. } | Error::NonScalarLoss { .. } => SvStatus::Shape,
            Error::NonFinite { .. } | Error::UndefinedAuc { .. } => SvStatus::Numeric,
            _ => SvStatus::Runtime,
        }
    }
}

/// A student model behind an opaque pointer.
pub struct SvModel {
    model: StudentModel<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(SvStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SvStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SvStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SvStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            SvStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn model_config(json: Option<&str>) -> Result<ModelConfig, Failure> {
    let cfg: ModelConfig = match json {
        Some(s) => serde_json::from_str(s).map_err(Error::from)?,
        None => ModelConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

unsafe fn write_out(out: *mut *mut SvModel, model: StudentModel<f32>) -> Result<(), Failure> {
    *out = Box::into_raw(Box::new(SvModel { model }));
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a freshly initialised student. `config_json` holds a model config
/// object; null selects the defaults.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sv_model_create(config_json: *const c_char, seed: u64, out: *mut *mut SvModel) -> SvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = model_config(opt_str_arg(config_json, "config_json")?)?;
        write_out(out, StudentModel::new(&cfg, seed)?)
    })
}

/// Builds a student and loads a `student.ckpt` checkpoint into it.
///
/// # Safety
/// As [`sv_model_create`]; `checkpoint_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sv_model_load(
    config_json: *const c_char,
    checkpoint_path: *const c_char,
    out: *mut *mut SvModel,
) -> SvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = model_config(opt_str_arg(config_json, "config_json")?)?;
        let path = str_arg(checkpoint_path, "checkpoint_path")?;
        let mut model = StudentModel::new(&cfg, 0)?;
        let tensors = checkpoint::read(Path::new(path))?;
        checkpoint::load_into(&mut model.store, &tensors, true)?;
        write_out(out, model)
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sv_model_free(model: *mut SvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of floats one input sample holds: frames x channels x height x width.
///
/// # Safety
/// `model` must be null or a live handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn sv_model_input_len(model: *const SvModel) -> usize {
    model.as_ref().map_or(0, |m| {
        let c = &m.model.cfg;
        c.input_channels() * c.input_resolution[0] * c.input_resolution[1]
    })
}

/// Total floats of all anomaly maps of one sample, heads in config order.
///
/// # Safety
/// `model` must be null or a live handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn sv_model_maps_len(model: *const SvModel) -> usize {
    model
        .as_ref()
        .map_or(0, |m| m.model.cfg.head_resolutions.iter().map(|[h, w]| h * w).sum())
}

fn predict(m: &SvModel, input: &[f32]) -> Result<swiftvad::model::AnomalyMapSet<f32>, Failure> {
    let c = &m.model.cfg;
    let shape = [1, c.input_channels(), c.input_resolution[0], c.input_resolution[1]];
    if input.len() != shape.iter().product::<usize>() {
        return Err(invalid(format!("input has {} floats, model expects {:?}", input.len(), shape)));
    }
    let x = Tensor::new(&shape, input.to_vec())?;
    let mut sets = m.model.predict(&x)?;
    Ok(sets.remove(0))
}

/// Runs one sample in eval mode and writes its anomaly maps, concatenated
/// row-major in head order, to `maps_out`.
///
/// # Safety
/// `input` must point to `input_len` floats and `maps_out` to `maps_len`.
#[no_mangle]
pub unsafe extern "C" fn sv_model_forward(
    model: *const SvModel,
    input: *const f32,
    input_len: usize,
    maps_out: *mut f32,
    maps_len: usize,
) -> SvStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let input = slice_arg(input, input_len, "input")?;
        if maps_out.is_null() {
            return Err(null("maps_out"));
        }
        let need = sv_model_maps_len(model);
        if maps_len != need {
            return Err(invalid(format!("maps_out holds {maps_len} floats, model produces {need}")));
        }
        let set = predict(m, input)?;
        let out = std::slice::from_raw_parts_mut(maps_out, maps_len);
        let mut at = 0;
        for map in &set.maps {
            out[at..at + map.data().len()].copy_from_slice(map.data());
            at += map.data().len();
        }
        Ok(())
    })
}

/// Frame anomaly score of one sample: the mean of the per-head maxima.
///
/// # Safety
/// `input` must point to `input_len` floats; `score_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sv_model_score(
    model: *const SvModel,
    input: *const f32,
    input_len: usize,
    score_out: *mut f64,
) -> SvStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let input = slice_arg(input, input_len, "input")?;
        if score_out.is_null() {
            return Err(null("score_out"));
        }
        *score_out = frame_score(&predict(m, input)?)?;
        Ok(())
    })
}

/// Area under the ROC curve with tie-aware ranking. Labels are 0 or 1.
///
/// # Safety
/// `scores` and `labels` must each point to `n` elements.
#[no_mangle]
pub unsafe extern "C" fn sv_roc_auc(scores: *const f64, labels: *const u8, n: usize, auc_out: *mut f64) -> SvStatus {
    guard(|| {
        let scores = slice_arg(scores, n, "scores")?;
        let labels = slice_arg(labels, n, "labels")?;
        if auc_out.is_null() {
            return Err(null("auc_out"));
        }
        *auc_out = roc_auc(scores, labels)?.auc;
        Ok(())
    })
}

/// Writes a `height x width` map as an AMAP file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `data` must hold
/// `height * width` floats.
#[no_mangle]
pub unsafe extern "C" fn sv_amap_write(path: *const c_char, data: *const f32, height: usize, width: usize) -> SvStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let data = slice_arg(data, height * width, "data")?;
        let bytes = encode_amap(&Tensor::new(&[height, width], data.to_vec())?)?;
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(())
    })
}

/// Reads an AMAP file. The dimensions are always written; pass a null `out`
/// to query them. Otherwise `capacity` must be at least `height * width`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `height_out` and `width_out` must
/// be valid; `out`, when not null, must hold `capacity` floats.
#[no_mangle]
pub unsafe extern "C" fn sv_amap_read(
    path: *const c_char,
    out: *mut f32,
    capacity: usize,
    height_out: *mut usize,
    width_out: *mut usize,
) -> SvStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        if height_out.is_null() || width_out.is_null() {
            return Err(null("height_out/width_out"));
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let map = decode_amap(&path, &bytes)?;
        let (h, w) = (map.shape()[0], map.shape()[1]);
        *height_out = h;
        *width_out = w;
        if out.is_null() {
            return Ok(());
        }
        if capacity < h * w {
            return Err(invalid(format!("capacity {capacity} is below {}", h * w)));
        }
        std::slice::from_raw_parts_mut(out, h * w).copy_from_slice(map.data());
        Ok(())
    })
}

/// Runs a pipeline command (`gen`, `pretrain`, `distill`, `eval`, `bench`,
/// `ablate`) from a JSON config file. A negative `seed` keeps the configured
/// one; a null `out_dir` keeps the configured output root.
///
/// # Safety
/// `command` and `config_path` must be NUL-terminated strings; `out_dir`
/// must be null or one.
#[no_mangle]
pub unsafe extern "C" fn sv_run_command(
    command: *const c_char,
    config_path: *const c_char,
    seed: i64,
    out_dir: *const c_char,
) -> SvStatus {
    guard(|| {
        let name = str_arg(command, "command")?;
        let cmd = Command::parse(name).ok_or_else(|| invalid(format!("unknown command `{name}`")))?;
        let config_path = str_arg(config_path, "config_path")?;
        let out_dir = opt_str_arg(out_dir, "out_dir")?;
        let seed = u64::try_from(seed).ok();
        let cfg = RunConfig::load(Path::new(config_path))?.with_overrides(seed, out_dir.map(Path::new));
        run_command(cmd, &cfg)?;
        Ok(())
    })
}
