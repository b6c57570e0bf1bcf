//! C ABI over the chunkprobe library.
//!
//! Every fallible call returns a [`CpStatus`]. On failure the message is
//! kept per thread and can be read with [`cp_last_error`]. Handles are
//! opaque and must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use chunkprobe::embed::{EmbedError, EmbeddingStore, Layout, EMBEDDING_DIM};
use chunkprobe::models::{
    gradcheck_suite, predict_answer, read_checkpoint, Model, ModelError, ModelKind,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Model = 5,
    NotFound = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpModelKind {
    Sentence = 0,
    TwoLevel = 1,
}

/// Embedding store handle.
pub struct CpStore(EmbeddingStore);

/// Trained model handle.
pub struct CpModel(Model);

struct Failure(CpStatus, String);

impl From<EmbedError> for Failure {
    fn from(e: EmbedError) -> Self {
        let status = match e {
            EmbedError::Io { .. } => CpStatus::Io,
            EmbedError::Dimension { .. } => CpStatus::InvalidArgument,
            _ => CpStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match e {
            ModelError::Io { .. } => CpStatus::Io,
            ModelError::Checkpoint { .. } => CpStatus::Format,
            ModelError::Context(_) | ModelError::Answers { .. } | ModelError::NoCandidates => {
                CpStatus::InvalidArgument
            }
            _ => CpStatus::Model,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: CpStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside chunkprobe");
            CpStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(CpStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CpStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(fail(CpStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(fail(CpStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(CpStatus::NullPointer, "handle is null"))
}

fn check_len(got: usize, expected: usize, what: &str) -> Result<(), Failure> {
    if got != expected {
        return Err(fail(
            CpStatus::InvalidArgument,
            format!("{what} holds {got} values, expected {expected}"),
        ));
    }
    Ok(())
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length of every embedding and grid.
#[no_mangle]
pub extern "C" fn cp_embedding_dim() -> usize {
    EMBEDDING_DIM
}

/// Open a store written by `embed-import` or `embed-fetch`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_store_open(path: *const c_char, out: *mut *mut CpStore) -> CpStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(CpStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let store = EmbeddingStore::read(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(CpStore(store)));
        Ok(())
    })
}

/// Number of sentences in the store, 0 for a null handle.
///
/// # Safety
/// `store` must be null or a live handle from [`cp_store_open`].
#[no_mangle]
pub unsafe extern "C" fn cp_store_len(store: *const CpStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.len())
}

/// Copy the embedding of `sentence_id` into `out` (`len` floats).
///
/// # Safety
/// `store` must be a live handle, `sentence_id` NUL-terminated and `out`
/// writable for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn cp_store_get(
    store: *const CpStore,
    sentence_id: *const c_char,
    out: *mut f32,
    len: usize,
) -> CpStatus {
    guard(|| {
        let store = handle(store)?;
        if sentence_id.is_null() {
            return Err(fail(CpStatus::NullPointer, "sentence_id is null"));
        }
        let id = CStr::from_ptr(sentence_id).to_string_lossy();
        let row = store
            .0
            .get(&id)
            .ok_or_else(|| fail(CpStatus::NotFound, format!("no embedding for {id}")))?;
        check_len(len, row.len(), "out")?;
        slice_out(out, len, "out")?.copy_from_slice(row);
        Ok(())
    })
}

/// Reshape the embedding of `sentence_id` to the 32x24 grid, written
/// row by row into `out` (768 doubles). `col_major` selects the fill order.
///
/// # Safety
/// As [`cp_store_get`], with `out` writable for 768 doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_store_grid(
    store: *const CpStore,
    sentence_id: *const c_char,
    col_major: bool,
    out: *mut f64,
) -> CpStatus {
    guard(|| {
        let store = handle(store)?;
        if sentence_id.is_null() {
            return Err(fail(CpStatus::NullPointer, "sentence_id is null"));
        }
        let id = CStr::from_ptr(sentence_id).to_string_lossy();
        if store.0.get(&id).is_none() {
            return Err(fail(CpStatus::NotFound, format!("no embedding for {id}")));
        }
        let layout = if col_major {
            Layout::ColMajor
        } else {
            Layout::RowMajor
        };
        let m = store.0.matrix(&id, layout)?;
        slice_out(out, EMBEDDING_DIM, "out")?.copy_from_slice(m.grid());
        Ok(())
    })
}

/// # Safety
/// `store` must be null or a handle from [`cp_store_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_store_free(store: *mut CpStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Load a checkpoint written by `train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_model_load(path: *const c_char, out: *mut *mut CpModel) -> CpStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(CpStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let ckpt = read_checkpoint(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(CpModel(ckpt.model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle from [`cp_model_load`] and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_model_kind(model: *const CpModel, out: *mut CpModelKind) -> CpStatus {
    guard(|| {
        let model = handle(model)?;
        if out.is_null() {
            return Err(fail(CpStatus::NullPointer, "out is null"));
        }
        *out = match model.0.kind() {
            ModelKind::Sentence => CpModelKind::Sentence,
            ModelKind::TwoLevel => CpModelKind::TwoLevel,
        };
        Ok(())
    })
}

/// Latent size of the sentence level, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_model_latent_dim(model: *const CpModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.arch().latent)
}

/// Number of trainable scalars, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_model_param_count(model: *const CpModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.param_count())
}

/// Encode one 32x24 grid with the sentence encoder. `mu` and `logvar`
/// receive `latent_len` values each.
///
/// # Safety
/// `grid` must hold `grid_len` doubles; `mu` and `logvar` must be writable
/// for `latent_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_model_encode(
    model: *const CpModel,
    grid: *const f64,
    grid_len: usize,
    mu: *mut f64,
    logvar: *mut f64,
    latent_len: usize,
) -> CpStatus {
    guard(|| {
        let model = handle(model)?;
        check_len(grid_len, EMBEDDING_DIM, "grid")?;
        check_len(latent_len, model.0.arch().latent, "latent buffers")?;
        let d = model
            .0
            .sentence()
            .encode_sentence(slice_arg(grid, grid_len, "grid")?)?;
        slice_out(mu, latent_len, "mu")?.copy_from_slice(&d.mu);
        slice_out(logvar, latent_len, "logvar")?.copy_from_slice(&d.logvar);
        Ok(())
    })
}

/// Reconstruct one grid through the sentence autoencoder (mean latent).
///
/// # Safety
/// `grid` and `out` must each hold 768 doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_model_reconstruct(
    model: *const CpModel,
    grid: *const f64,
    out: *mut f64,
) -> CpStatus {
    guard(|| {
        let model = handle(model)?;
        let rec = model
            .0
            .sentence()
            .reconstruct(slice_arg(grid, EMBEDDING_DIM, "grid")?)?;
        slice_out(out, EMBEDDING_DIM, "out")?.copy_from_slice(&rec);
        Ok(())
    })
}

/// Pick the answer a two-level model prefers. `context` holds the 7
/// context grids back to back, `answers` holds `n_answers` grids.
///
/// # Safety
/// `context` must hold 7 * 768 doubles, `answers` `n_answers` * 768 and
/// `out_index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_model_predict(
    model: *const CpModel,
    context: *const f64,
    answers: *const f64,
    n_answers: usize,
    out_index: *mut usize,
) -> CpStatus {
    guard(|| {
        let model = handle(model)?;
        let Model::TwoLevel(m) = &model.0 else {
            return Err(fail(
                CpStatus::InvalidArgument,
                "prediction needs a two-level model",
            ));
        };
        if out_index.is_null() {
            return Err(fail(CpStatus::NullPointer, "out_index is null"));
        }
        let ctx = slice_arg(context, 7 * EMBEDDING_DIM, "context")?;
        let ans = slice_arg(answers, n_answers * EMBEDDING_DIM, "answers")?;
        let ctx: Vec<&[f64]> = ctx.chunks(EMBEDDING_DIM).collect();
        let cands: Vec<&[f64]> = ans.chunks(EMBEDDING_DIM).collect();
        let out = m.forward(&ctx)?;
        *out_index = predict_answer(&out.answer, &cands)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`cp_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_model_free(model: *mut CpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Run the finite-difference gradient checks. `all_passed` receives
/// whether every case stayed under its tolerance and `worst` (may be null)
/// the largest ratio of relative error to tolerance.
///
/// # Safety
/// `all_passed` must be writable; `worst` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn cp_gradcheck(
    instances: usize,
    seed: u64,
    all_passed: *mut bool,
    worst: *mut f64,
) -> CpStatus {
    guard(|| {
        if all_passed.is_null() {
            return Err(fail(CpStatus::NullPointer, "all_passed is null"));
        }
        if instances == 0 {
            return Err(fail(
                CpStatus::InvalidArgument,
                "instances must be positive",
            ));
        }
        let cases = gradcheck_suite(instances, seed)?;
        *all_passed = cases.iter().all(|c| c.passed());
        if !worst.is_null() {
            *worst = cases
                .iter()
                .map(|c| c.max_rel_error / c.tolerance)
                .fold(0.0, f64::max);
        }
        Ok(())
    })
}
