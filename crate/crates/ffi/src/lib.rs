//! C interface to the makeup cleanser: checkpoint loading, single-image
//! de-makeup with attention export, and the verification metrics.
//!
//! Every fallible function returns a [`SamcStatus`]; on failure the message is
//! available from [`samc_last_error`] on the same thread until the next call.
//! Images cross the boundary as row-major `H x W x 3` floats in `[-1, 1]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use samc::evaluation::{cosine_similarity, rank1_accuracy, tpr_at_fpr, Labeled, ScoredPairSet};
use samc::image::ImageTensor;
use samc::training::{load_checkpoint, TrainState};
use samc::SamcError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    CorruptCheckpoint = 4,
    FingerprintMismatch = 5,
    Shape = 6,
    Metric = 7,
    Internal = 99,
}

/// A loaded checkpoint (opaque).
pub struct SamcModel {
    state: TrainState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &SamcError) -> SamcStatus {
    match e {
        SamcError::Io { .. } | SamcError::Image { .. } => SamcStatus::Io,
        SamcError::CorruptCheckpoint { .. } | SamcError::Parse { .. } => SamcStatus::CorruptCheckpoint,
        SamcError::FingerprintMismatch { .. } => SamcStatus::FingerprintMismatch,
        SamcError::Shape(_) | SamcError::ImageSize(_) => SamcStatus::Shape,
        SamcError::Metric(_) | SamcError::ZeroNorm => SamcStatus::Metric,
        _ => SamcStatus::InvalidArgument,
    }
}

struct Fail(SamcStatus, String);

impl From<SamcError> for Fail {
    fn from(e: SamcError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SamcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SamcStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            SamcStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SamcStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn samc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Load a training checkpoint. On success `*out` owns a model that must be
/// released with [`samc_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn samc_model_load(path: *const c_char, out: *mut *mut SamcModel) -> SamcStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = std::ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(SamcStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let state = load_checkpoint(&PathBuf::from(path))?;
        *out = Box::into_raw(Box::new(SamcModel { state }));
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`samc_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn samc_model_free(model: *mut SamcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side length of the square images the model accepts, or 0 for null.
///
/// # Safety
/// `model` must be null or a live model.
#[no_mangle]
pub unsafe extern "C" fn samc_model_image_size(model: *const SamcModel) -> usize {
    model.as_ref().map_or(0, |m| m.state.nets.image_size())
}

/// Training steps recorded in the checkpoint, or 0 for null.
///
/// # Safety
/// `model` must be null or a live model.
#[no_mangle]
pub unsafe extern "C" fn samc_model_step(model: *const SamcModel) -> u64 {
    model.as_ref().map_or(0, |m| m.state.step)
}

/// Remove makeup from one `height x width` image. `output` receives
/// `height * width * 3` floats; `attention` (may be null) receives
/// `height * width` values in `[0, 1]`.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn samc_demakeup(
    model: *const SamcModel,
    input: *const f32,
    height: usize,
    width: usize,
    output: *mut f32,
    attention: *mut f32,
) -> SamcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if height == 0 || width == 0 {
            return Err(Fail(SamcStatus::Shape, "image has zero size".into()));
        }
        let n = height * width * 3;
        let data = slice(input, n, "input")?.to_vec();
        if output.is_null() {
            return Err(null("output"));
        }
        let x = ImageTensor::new(height, width, data)?;
        let z = m.state.nets.remove_makeup(&m.state.params, &[&x])?;
        std::slice::from_raw_parts_mut(output, n).copy_from_slice(z[0].data());
        if !attention.is_null() {
            let a = m.state.nets.attention_maps(&m.state.params, &[&x])?;
            std::slice::from_raw_parts_mut(attention, height * width).copy_from_slice(a[0].data());
        }
        Ok(())
    })
}

/// Cosine similarity of two `len`-vectors.
///
/// # Safety
/// `a` and `b` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn samc_cosine_similarity(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> SamcStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = cosine_similarity(slice(a, len, "a")?, slice(b, len, "b")?)?;
        Ok(())
    })
}

/// TPR (percent) at each of `n_targets` false-positive rates.
///
/// # Safety
/// Arrays must hold the stated counts; `out` must hold `n_targets` values.
#[no_mangle]
pub unsafe extern "C" fn samc_tpr_at_fpr(
    genuine: *const f64,
    n_genuine: usize,
    impostor: *const f64,
    n_impostor: usize,
    targets: *const f64,
    n_targets: usize,
    out: *mut f64,
) -> SamcStatus {
    guard(|| {
        let scores = ScoredPairSet {
            genuine: slice(genuine, n_genuine, "genuine")?.to_vec(),
            impostor: slice(impostor, n_impostor, "impostor")?.to_vec(),
        };
        let targets = slice(targets, n_targets, "targets")?;
        if n_targets > 0 && out.is_null() {
            return Err(null("out"));
        }
        let tpr = tpr_at_fpr(&scores, targets)?;
        if n_targets > 0 {
            std::slice::from_raw_parts_mut(out, n_targets).copy_from_slice(&tpr);
        }
        Ok(())
    })
}

/// Rank-1 accuracy (percent). Embeddings are row-major `count x dim`;
/// identities are integer labels, one per row. Gallery identities must be
/// unique and cover every probe identity.
///
/// # Safety
/// Arrays must hold the stated counts; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn samc_rank1_accuracy(
    probe_embeddings: *const f64,
    probe_ids: *const u64,
    n_probes: usize,
    gallery_embeddings: *const f64,
    gallery_ids: *const u64,
    n_gallery: usize,
    dim: usize,
    out: *mut f64,
) -> SamcStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if dim == 0 {
            return Err(Fail(SamcStatus::InvalidArgument, "dim must be positive".into()));
        }
        let pe = slice(probe_embeddings, n_probes * dim, "probe_embeddings")?;
        let ge = slice(gallery_embeddings, n_gallery * dim, "gallery_embeddings")?;
        let pid: Vec<String> = slice(probe_ids, n_probes, "probe_ids")?.iter().map(u64::to_string).collect();
        let gid: Vec<String> = slice(gallery_ids, n_gallery, "gallery_ids")?.iter().map(u64::to_string).collect();
        let probes: Vec<Labeled> = pe
            .chunks(dim)
            .zip(&pid)
            .map(|(embedding, identity)| Labeled { embedding, identity })
            .collect();
        let gallery: Vec<Labeled> = ge
            .chunks(dim)
            .zip(&gid)
            .map(|(embedding, identity)| Labeled { embedding, identity })
            .collect();
        *out = rank1_accuracy(&probes, &gallery)?;
        Ok(())
    })
}

/// Library version, NUL-terminated and static.
#[no_mangle]
pub extern "C" fn samc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
