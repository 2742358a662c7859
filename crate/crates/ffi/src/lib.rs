//! C interface to the ensemble toolkit.
//!
//! Every function returns an [`EnsStatus`]; on failure the message is
//! available from [`ens_last_error`] on the same thread. Score matrices are
//! opaque handles owned by the caller and released with
//! [`ens_score_matrix_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ensemblier::fusion::{predict, sum_rule};
use ensemblier::metrics::{accuracy_macro, accuracy_overall, confusion, f_measure_macro};
use ensemblier::preprocess::{apply, load_png, save_png, ResizeStrategy};
use ensemblier::selection::{sffs, Objective, SelectionConfig};
use ensemblier::toylab::selu;
use ensemblier::ws::{ws_optimize, WsConfig};
use ensemblier::zoo::load_scores;
use ensemblier::{ClassMap, Error, ScoreMatrix};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    Validation = 4,
    Io = 5,
    Divergence = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque score matrix.
pub struct EnsScoreMatrix(ScoreMatrix);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnsMetrics {
    pub f_macro: f64,
    pub acc_macro: f64,
    pub acc_overall: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsObjective {
    AccuracyOverall = 0,
    FMacro = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsResize {
    Sqr = 0,
    Pad = 1,
    Tile = 2,
}

/// Options for [`ens_ws_optimize`]. Fill with [`ens_ws_params_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsWsParams {
    pub gamma: f64,
    pub reg_coefficient: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EnsStatus {
    match e {
        Error::Format { .. } | Error::Json(_) | Error::Csv(_) | Error::Image(_) => EnsStatus::Format,
        Error::Validation { .. } | Error::Misaligned(_) | Error::Coverage { .. } => EnsStatus::Validation,
        Error::Io { .. } => EnsStatus::Io,
        Error::Divergence { .. } => EnsStatus::Divergence,
        _ => EnsStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and containing panics.
fn guard(f: impl FnOnce() -> Result<(), (EnsStatus, String)>) -> EnsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EnsStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EnsStatus::Panic
        }
    }
}

fn lib(e: Error) -> (EnsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (EnsStatus, String) {
    (EnsStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], (EnsStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, (EnsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| (EnsStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn members<'a>(
    handles: *const *const EnsScoreMatrix,
    count: usize,
) -> Result<Vec<&'a ScoreMatrix>, (EnsStatus, String)> {
    let hs = slice(handles, count, "members")?;
    hs.iter().map(|&h| h.as_ref().map(|m| &m.0).ok_or_else(|| null("member"))).collect()
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn ens_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ens_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a matrix from row-major `n × c` scores and `n` labels.
///
/// # Safety
/// `scores` must point to `n*c` doubles, `labels` to `n` values, `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ens_score_matrix_new(
    n: usize,
    c: usize,
    scores: *const f64,
    labels: *const usize,
    out: *mut *mut EnsScoreMatrix,
) -> EnsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(c).ok_or((EnsStatus::InvalidArgument, "n*c overflows".to_string()))?;
        let s = slice(scores, len, "scores")?.to_vec();
        let y = slice(labels, n, "labels")?.to_vec();
        let ids = (0..n).map(|i| i.to_string()).collect();
        let m = ScoreMatrix::new("ffi", "", "", ids, y, c, s).map_err(lib)?;
        *out = Box::into_raw(Box::new(EnsScoreMatrix(m)));
        Ok(())
    })
}

/// Reads a score CSV with `n_classes` columns.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ens_score_matrix_load(
    path: *const c_char,
    n_classes: usize,
    out: *mut *mut EnsScoreMatrix,
) -> EnsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = path_arg(path, "path")?;
        let cm = ClassMap::numbered(n_classes).map_err(lib)?;
        let m = load_scores(p, &cm).map_err(lib)?;
        *out = Box::into_raw(Box::new(EnsScoreMatrix(m)));
        Ok(())
    })
}

/// Releases a matrix. Null is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ens_score_matrix_free(m: *mut EnsScoreMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `n` and `c` may be null.
#[no_mangle]
pub unsafe extern "C" fn ens_score_matrix_dims(m: *const EnsScoreMatrix, n: *mut usize, c: *mut usize) -> EnsStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("m"))?;
        if let Some(n) = n.as_mut() {
            *n = m.0.n_samples();
        }
        if let Some(c) = c.as_mut() {
            *c = m.0.n_classes();
        }
        Ok(())
    })
}

/// Writes the argmax prediction of each row into `out` (capacity `cap`).
///
/// # Safety
/// `out` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn ens_score_matrix_predict(m: *const EnsScoreMatrix, out: *mut usize, cap: usize) -> EnsStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("m"))?;
        let preds = predict(&m.0);
        if cap < preds.len() {
            return Err((EnsStatus::BufferTooSmall, format!("need {} slots, got {cap}", preds.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(preds.as_ptr(), out, preds.len());
        Ok(())
    })
}

/// Macro F-measure and accuracies of `n` predictions over `c` classes.
///
/// # Safety
/// `predictions` and `labels` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ens_metrics(
    predictions: *const usize,
    labels: *const usize,
    n: usize,
    c: usize,
    out: *mut EnsMetrics,
) -> EnsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = slice(predictions, n, "predictions")?;
        let y = slice(labels, n, "labels")?;
        let cm = confusion(p, y, c).map_err(lib)?;
        *out = EnsMetrics {
            f_macro: f_measure_macro(&cm),
            acc_macro: accuracy_macro(&cm).map_err(lib)?,
            acc_overall: accuracy_overall(&cm).map_err(lib)?,
        };
        Ok(())
    })
}

/// Sum-rule fusion of aligned members into a new handle.
///
/// # Safety
/// `members` must hold `count` live handles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn ens_sum_rule(
    members_ptr: *const *const EnsScoreMatrix,
    count: usize,
    out: *mut *mut EnsScoreMatrix,
) -> EnsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ms = members(members_ptr, count)?;
        let fused = sum_rule("fused", &ms).map_err(lib)?;
        *out = Box::into_raw(Box::new(EnsScoreMatrix(fused)));
        Ok(())
    })
}

/// Floating forward selection of up to `k` members. The chosen indices
/// (into `members`) are written ascending to `out_indices` (capacity `cap`).
///
/// # Safety
/// Pointers must be valid for the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn ens_sffs(
    members_ptr: *const *const EnsScoreMatrix,
    count: usize,
    k: usize,
    objective: EnsObjective,
    out_indices: *mut usize,
    cap: usize,
    out_len: *mut usize,
    out_objective: *mut f64,
) -> EnsStatus {
    guard(|| {
        let ms: Vec<ScoreMatrix> = members(members_ptr, count)?.into_iter().cloned().collect();
        // give each member a distinct id so the search order is the input order
        let ms: Vec<ScoreMatrix> = ms
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                let (d, sp) = (m.dataset_id.clone(), m.split_id.clone());
                m.with_ids(format!("{i:08}"), d, sp)
            })
            .collect();
        let obj = match objective {
            EnsObjective::AccuracyOverall => Objective::AccuracyOverall,
            EnsObjective::FMacro => Objective::FMacro,
        };
        let res = sffs(&ms, &SelectionConfig::new(k).with_objective(obj)).map_err(lib)?;
        let idx: Vec<usize> = res.subset.iter().map(|id| id.parse().unwrap_or(usize::MAX)).collect();
        if cap < idx.len() {
            return Err((EnsStatus::BufferTooSmall, format!("need {} slots, got {cap}", idx.len())));
        }
        if !idx.is_empty() && out_indices.is_null() {
            return Err(null("out_indices"));
        }
        ptr::copy_nonoverlapping(idx.as_ptr(), out_indices, idx.len());
        if let Some(l) = out_len.as_mut() {
            *l = idx.len();
        }
        if let Some(o) = out_objective.as_mut() {
            *o = res.objective;
        }
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ens_ws_params_default() -> EnsWsParams {
    let d = WsConfig::default();
    EnsWsParams {
        gamma: d.gamma,
        reg_coefficient: d.reg_coefficient,
        learning_rate: d.learning_rate,
        epochs: d.epochs,
        batch_size: d.batch_size,
        seed: d.seed,
    }
}

/// Learns simplex weights over `count` members; writes `count` weights.
///
/// # Safety
/// `members` must hold `count` live handles and `out_weights` `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn ens_ws_optimize(
    members_ptr: *const *const EnsScoreMatrix,
    count: usize,
    params: *const EnsWsParams,
    out_weights: *mut f64,
) -> EnsStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        if out_weights.is_null() {
            return Err(null("out_weights"));
        }
        let ms: Vec<ScoreMatrix> = members(members_ptr, count)?.into_iter().cloned().collect();
        let cfg = WsConfig {
            gamma: p.gamma,
            reg_coefficient: p.reg_coefficient,
            learning_rate: p.learning_rate,
            epochs: p.epochs,
            batch_size: p.batch_size,
            seed: p.seed,
            ..WsConfig::default()
        };
        let out = ws_optimize(&ms, &cfg).map_err(lib)?;
        ptr::copy_nonoverlapping(out.weights.as_slice().as_ptr(), out_weights, count);
        Ok(())
    })
}

/// Resizes one PNG file.
///
/// # Safety
/// Paths must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ens_preprocess_png(
    strategy: EnsResize,
    target: usize,
    in_path: *const c_char,
    out_path: *const c_char,
) -> EnsStatus {
    guard(|| {
        let src = path_arg(in_path, "in_path")?;
        let dst = path_arg(out_path, "out_path")?;
        let s = match strategy {
            EnsResize::Sqr => ResizeStrategy::Sqr,
            EnsResize::Pad => ResizeStrategy::Pad,
            EnsResize::Tile => ResizeStrategy::Tile,
        };
        let img = load_png(src).map_err(lib)?;
        save_png(dst, &apply(s, &img, target)).map_err(lib)
    })
}

#[no_mangle]
pub extern "C" fn ens_selu(x: f64) -> f64 {
    selu(x)
}
