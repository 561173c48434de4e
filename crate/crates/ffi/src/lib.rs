//! C ABI over `fuda-core`.
//!
//! Datasets and models cross the boundary as opaque handles that must be
//! released with the matching `_free` function. Every fallible call returns
//! a [`FudaStatus`]; on failure a message is kept per thread and can be read
//! with [`fuda_last_error_message`]. Panics never unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fuda::aggregation::{self, AggregationWeights, AggregatorKind, EntropyStats};
use fuda::data::{load_feature_file, DomainDataset};
use fuda::federation::ModelFile;
use fuda::harness::{self, ExperimentConfig};
use fuda::nn::{self, Matrix};
use fuda::FudaError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FudaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Parse = 4,
    Io = 5,
    Config = 6,
    Numeric = 7,
    Protocol = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FudaAggregator {
    Uniform = 0,
    SampleCount = 1,
    EntropyUnscaled = 2,
    Sea = 3,
}

impl From<FudaAggregator> for AggregatorKind {
    fn from(a: FudaAggregator) -> Self {
        match a {
            FudaAggregator::Uniform => AggregatorKind::UniformAverage,
            FudaAggregator::SampleCount => AggregatorKind::SampleCount,
            FudaAggregator::EntropyUnscaled => AggregatorKind::EntropyUnscaled,
            FudaAggregator::Sea => AggregatorKind::Sea,
        }
    }
}

/// Opaque dataset handle.
pub struct FudaDataset(DomainDataset);

/// Opaque model handle.
pub struct FudaModel(ModelFile);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &FudaError) -> FudaStatus {
    match e {
        FudaError::Dimension(_) => FudaStatus::Dimension,
        FudaError::Validation(_) | FudaError::UndefinedCorrelation(_) => FudaStatus::InvalidArgument,
        FudaError::Parse { .. } | FudaError::Json(_) => FudaStatus::Parse,
        FudaError::Protocol(_) => FudaStatus::Protocol,
        FudaError::Numeric(_) => FudaStatus::Numeric,
        FudaError::Config(_) => FudaStatus::Config,
        FudaError::Io { .. } => FudaStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Core(FudaError),
}

impl From<FudaError> for Failure {
    fn from(e: FudaError) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FudaStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FudaStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            FudaStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_last_error(msg);
            FudaStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            FudaStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fuda_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn fuda_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fuda_dataset_load(path: *const c_char, out: *mut *mut FudaDataset) -> FudaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(path, "path")?);
        let ds = load_feature_file(&path)?;
        *out = Box::into_raw(Box::new(FudaDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be NULL or a handle from [`fuda_dataset_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fuda_dataset_free(ds: *mut FudaDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of samples; 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn fuda_dataset_len(ds: *const FudaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn fuda_dataset_dim(ds: *const FudaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.dim())
}

/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn fuda_dataset_num_classes(ds: *const FudaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.num_classes())
}

/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn fuda_dataset_is_labeled(ds: *const FudaDataset) -> bool {
    ds.as_ref().is_some_and(|d| d.0.is_labeled())
}

/// Loads a model file written by the `fuda` CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fuda_model_load(path: *const c_char, out: *mut *mut FudaModel) -> FudaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(path, "path")?);
        let m = ModelFile::load(&path)?;
        *out = Box::into_raw(Box::new(FudaModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live model handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fuda_model_save(model: *const FudaModel, path: *const c_char) -> FudaStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        model.0.save(&path)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fuda_model_free(model: *mut FudaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn fuda_model_input_dim(model: *const FudaModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.params.input_dim())
}

/// # Safety
/// `model` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn fuda_model_num_classes(model: *const FudaModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.params.num_classes())
}

/// Logits for `rows` row-major samples of width `cols`. `logits` must hold
/// `rows * num_classes` values.
///
/// # Safety
/// `features` must point to `rows * cols` doubles and `logits` to
/// `logits_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fuda_model_forward(
    model: *const FudaModel,
    features: *const f64,
    rows: usize,
    cols: usize,
    logits: *mut f64,
    logits_len: usize,
) -> FudaStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure::Arg("rows * cols overflows".into()))?;
        let x = slice_arg(features, n, "features")?;
        let c = model.0.params.num_classes();
        if logits_len != rows * c {
            return Err(Failure::Arg(format!("logits_len {logits_len}, expected {}", rows * c)));
        }
        let batch = Matrix::from_vec(rows, cols, x.to_vec())?;
        let z = nn::forward(&model.0.params, &batch)?;
        if logits_len > 0 {
            if logits.is_null() {
                return Err(Failure::Null("logits"));
            }
            std::slice::from_raw_parts_mut(logits, logits_len).copy_from_slice(z.as_slice());
        }
        Ok(())
    })
}

/// Shannon entropy (nats) of one probability vector.
///
/// # Safety
/// `probs` must point to `len` doubles and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn fuda_prediction_entropy(probs: *const f64, len: usize, out: *mut f64) -> FudaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let p = slice_arg(probs, len, "probs")?;
        *out = aggregation::prediction_entropy(p)?;
        Ok(())
    })
}

/// Mean prediction entropy of `model` over the samples of `ds`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fuda_model_mean_entropy(
    model: *const FudaModel,
    ds: *const FudaDataset,
    out: *mut f64,
) -> FudaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = deref(model, "model")?;
        let ds = deref(ds, "dataset")?;
        *out = aggregation::mean_entropy(&model.0.params, &ds.0.to_unlabeled())?;
        Ok(())
    })
}

/// Fraction of labeled samples in `ds` classified correctly.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fuda_model_accuracy(
    model: *const FudaModel,
    ds: *const FudaDataset,
    out: *mut f64,
) -> FudaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = deref(model, "model")?;
        let ds = deref(ds, "dataset")?;
        *out = harness::accuracy(&model.0.params, &ds.0)?;
        Ok(())
    })
}

/// Aggregation weights for `m` clients from their mean entropies and
/// sample counts. Writes `m` weights summing to 1.
///
/// # Safety
/// `entropies`, `sample_counts` and `weights_out` must each point to `m` elements.
#[no_mangle]
pub unsafe extern "C" fn fuda_compute_weights(
    entropies: *const f64,
    sample_counts: *const usize,
    m: usize,
    kind: FudaAggregator,
    weights_out: *mut f64,
) -> FudaStatus {
    guard(|| {
        let h = slice_arg(entropies, m, "entropies")?;
        let n = slice_arg(sample_counts, m, "sample_counts")?;
        let w = aggregation::compute_weights(&EntropyStats::anonymous(h), n, kind.into())?;
        if m > 0 {
            if weights_out.is_null() {
                return Err(Failure::Null("weights_out"));
            }
            std::slice::from_raw_parts_mut(weights_out, m).copy_from_slice(&w.values());
        }
        Ok(())
    })
}

/// Weighted parameter average of `m` models with identical architecture.
/// The result is a new handle owned by the caller.
///
/// # Safety
/// `models` must point to `m` live model handles, `weights` to `m` doubles,
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fuda_aggregate(
    models: *const *const FudaModel,
    weights: *const f64,
    m: usize,
    out: *mut *mut FudaModel,
) -> FudaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let handles = slice_arg(models, m, "models")?;
        let w = slice_arg(weights, m, "weights")?;
        let mut params = Vec::with_capacity(m);
        let mut total = 0;
        for &h in handles {
            let file = &deref(h, "models[i]")?.0;
            total += file.sample_count;
            params.push(file.params.clone());
        }
        let global = aggregation::aggregate(
            &params,
            &AggregationWeights::explicit(w, AggregatorKind::UniformAverage),
        )?;
        *out = Box::into_raw(Box::new(FudaModel(ModelFile {
            client_id: "global".into(),
            sample_count: total,
            params: global,
        })));
        Ok(())
    })
}

/// Runs the full pipeline for `seed` and returns the JSON run report.
/// `config_json` may be NULL for the standard synthetic benchmark. Free the
/// result with [`fuda_string_free`].
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fuda_run_json(config_json: *const c_char, seed: u64, out: *mut *mut c_char) -> FudaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let cfg = if config_json.is_null() {
            ExperimentConfig::standard()
        } else {
            ExperimentConfig::from_json(str_arg(config_json, "config_json")?)?
        };
        let json = harness::run(&cfg, seed)?.to_json()?;
        let c = CString::new(json).map_err(|_| Failure::Arg("report contains NUL".into()))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fuda_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
