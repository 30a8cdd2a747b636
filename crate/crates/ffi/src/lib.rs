//! C ABI over the toolkit.
//!
//! Every fallible call returns a [`MilStatus`]; on failure the message is
//! available from [`mil_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bagmil::bagcore::{fit_scaler, read_bags_jsonl, transform, Bag, BagDataset};
use bagmil::estimators::{EstimatorConfig, ModelFile};
use bagmil::MilError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    FormatError = 4,
    ConfigError = 5,
    ShapeError = 6,
    NumericError = 7,
    IoError = 8,
    Panic = 9,
}

/// A bag dataset read from JSONL.
pub struct MilDataset {
    inner: BagDataset,
}

/// A trained estimator together with the scaler fitted on its training bags.
pub struct MilModel {
    file: ModelFile,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MilStatus, String);

impl From<MilError> for Failure {
    fn from(e: MilError) -> Self {
        let status = match &e {
            MilError::Data(_) => MilStatus::DataError,
            MilError::Format { .. } | MilError::Json(_) => MilStatus::FormatError,
            MilError::Config(_) => MilStatus::ConfigError,
            MilError::Shape(_) => MilStatus::ShapeError,
            MilError::Numeric(_) => MilStatus::NumericError,
            MilError::Io(_) => MilStatus::IoError,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MilStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MilStatus::InvalidArgument, msg.into())
}

fn run(body: impl FnOnce() -> Result<(), Failure>) -> MilStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MilStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MilStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got != want {
        return Err(invalid(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mil_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads a JSONL bag file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mil_dataset_read_jsonl(path: *const c_char, out: *mut *mut MilDataset) -> MilStatus {
    run(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = read_bags_jsonl(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(MilDataset { inner: ds }));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mil_dataset_free(ds: *mut MilDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of bags; 0 for null.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn mil_dataset_len(ds: *const MilDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Instance feature dimension; 0 for null or an empty dataset.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn mil_dataset_dim(ds: *const MilDataset) -> usize {
    ds.as_ref().and_then(|d| d.inner.dim()).unwrap_or(0)
}

/// Number of instances in bag `bag`.
///
/// # Safety
/// `ds` must be a live dataset handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mil_dataset_bag_len(ds: *const MilDataset, bag: usize, out: *mut usize) -> MilStatus {
    run(|| {
        let ds = &ref_arg(ds, "dataset")?.inner;
        let b = ds
            .bags()
            .get(bag)
            .ok_or_else(|| invalid(format!("bag {bag} out of range")))?;
        *out.as_mut().ok_or_else(|| null("out"))? = b.len();
        Ok(())
    })
}

/// Copies the bag labels into `out`, which must hold one double per bag.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mil_dataset_labels(ds: *const MilDataset, out: *mut f64, out_len: usize) -> MilStatus {
    run(|| {
        let ds = &ref_arg(ds, "dataset")?.inner;
        check_len(out_len, ds.len(), "label buffer")?;
        out_slice(out, out_len, "out")?.copy_from_slice(ds.labels());
        Ok(())
    })
}

/// Loads a model file written by the toolkit.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mil_model_load(path: *const c_char, out: *mut *mut MilModel) -> MilStatus {
    run(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let file = ModelFile::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(MilModel { file }));
        Ok(())
    })
}

/// Fits a scaler on `ds`, then trains the estimator described by the JSON
/// config (`{"kind": "neural", "task": ...}` and friends).
///
/// # Safety
/// `ds` must be a live dataset handle, `config_json` a nul-terminated string
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mil_model_fit(
    ds: *const MilDataset,
    config_json: *const c_char,
    out: *mut *mut MilModel,
) -> MilStatus {
    run(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = &ref_arg(ds, "dataset")?.inner;
        let config: EstimatorConfig = serde_json::from_str(str_arg(config_json, "config_json")?)
            .map_err(|e| Failure(MilStatus::ConfigError, format!("config: {e}")))?;
        let scaler = fit_scaler(ds)?;
        let model = config.fit(&transform(&scaler, ds)?)?;
        *out = Box::into_raw(Box::new(MilModel {
            file: ModelFile {
                model,
                scaler: Some(scaler),
            },
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mil_model_free(model: *mut MilModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn scaled(model: &MilModel, ds: &BagDataset) -> Result<BagDataset, Failure> {
    Ok(match &model.file.scaler {
        Some(s) => transform(s, ds)?,
        None => ds.clone(),
    })
}

/// Bag predictions (probabilities for classification) for every bag of `ds`.
///
/// # Safety
/// Handles must be live; `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mil_model_predict(
    model: *const MilModel,
    ds: *const MilDataset,
    out: *mut f64,
    out_len: usize,
) -> MilStatus {
    run(|| {
        let model = ref_arg(model, "model")?;
        let ds = &ref_arg(ds, "dataset")?.inner;
        check_len(out_len, ds.len(), "prediction buffer")?;
        let values = model.file.model.predict_dataset(&scaled(model, ds)?)?;
        out_slice(out, out_len, "out")?.copy_from_slice(&values);
        Ok(())
    })
}

/// Prediction for one bag given as a row-major `n_instances x dim` buffer of
/// raw (unscaled) features.
///
/// # Safety
/// `model` must be live, `data` must point to `n_instances * dim` doubles and
/// `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn mil_model_predict_bag(
    model: *const MilModel,
    data: *const f64,
    n_instances: usize,
    dim: usize,
    out: *mut f64,
) -> MilStatus {
    run(|| {
        let model = ref_arg(model, "model")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let len = n_instances
            .checked_mul(dim)
            .ok_or_else(|| invalid("bag size overflows"))?;
        let flat = std::slice::from_raw_parts(data, len).to_vec();
        let mut bag = Bag::from_flat(flat, dim)?;
        if let Some(s) = &model.file.scaler {
            if s.dim() != dim {
                return Err(Failure(
                    MilStatus::DataError,
                    format!("bag dimension {dim} differs from the model's {}", s.dim()),
                ));
            }
            let rows = bag
                .instances()
                .map(|r| r.iter().enumerate().map(|(j, &x)| s.scale(j, x)).collect())
                .collect();
            bag = Bag::new(rows)?;
        }
        let value = model.file.model.predict_value(&[&bag])?[0];
        *out.as_mut().ok_or_else(|| null("out"))? = value;
        Ok(())
    })
}

/// Instance weights of bag `bag` of `ds`; `out_len` must equal its size.
///
/// # Safety
/// Handles must be live; `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mil_model_instance_weights(
    model: *const MilModel,
    ds: *const MilDataset,
    bag: usize,
    out: *mut f64,
    out_len: usize,
) -> MilStatus {
    run(|| {
        let model = ref_arg(model, "model")?;
        let ds = &ref_arg(ds, "dataset")?.inner;
        if bag >= ds.len() {
            return Err(invalid(format!("bag {bag} out of range")));
        }
        let one = scaled(model, &ds.subset(&[bag]))?;
        check_len(out_len, one.bags()[0].len(), "weight buffer")?;
        let w = model.file.model.instance_weights_dataset(&one)?;
        out_slice(out, out_len, "out")?.copy_from_slice(&w[0]);
        Ok(())
    })
}

/// Writes the model, scaler included, to `path`.
///
/// # Safety
/// `model` must be live and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mil_model_save(model: *const MilModel, path: *const c_char) -> MilStatus {
    run(|| {
        let model = ref_arg(model, "model")?;
        model.file.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Model file JSON as a newly allocated string; release it with
/// [`mil_string_free`].
///
/// # Safety
/// `model` must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mil_model_to_json(model: *const MilModel, out: *mut *mut c_char) -> MilStatus {
    run(|| {
        let model = ref_arg(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(&model.file).map_err(MilError::from)?;
        *out = CString::new(text).expect("JSON has no nul").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mil_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
