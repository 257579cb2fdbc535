//! C ABI over `lfdf-core`: opaque model handles, status codes and a
//! thread-local last-error message.
//!
//! Every function returns an [`LfdfStatus`]; outputs are written through
//! pointer arguments only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lfdf_core::evalkit::{psnr_y, ssim};
use lfdf_core::lfcore::{ColorSpace, Image, LightField};
use lfdf_core::lfdfnet::{LfDfNet, NetworkConfig};
use lfdf_core::trainer::{init_weights, Checkpoint};
use lfdf_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LfdfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Config = 4,
    Io = 5,
    Checkpoint = 6,
    Missing = 7,
    Diverged = 8,
    Panic = 9,
}

/// A network with its weights.
pub struct LfdfModel {
    net: LfDfNet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LfdfStatus {
    match e {
        Error::Shape(_) => LfdfStatus::Shape,
        Error::Invalid(_) => LfdfStatus::InvalidArgument,
        Error::Config(_) | Error::Json(_) => LfdfStatus::Config,
        Error::Io { .. } | Error::Image { .. } => LfdfStatus::Io,
        Error::Missing(_) => LfdfStatus::Missing,
        Error::Diverged(_) => LfdfStatus::Diverged,
        Error::Checkpoint(_) => LfdfStatus::Checkpoint,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (LfdfStatus, String)>) -> LfdfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LfdfStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            LfdfStatus::Panic
        }
    }
}

fn core(e: Error) -> (LfdfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LfdfStatus, String) {
    (LfdfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (LfdfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (LfdfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn boxed(net: LfDfNet) -> *mut LfdfModel {
    Box::into_raw(Box::new(LfdfModel { net }))
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lfdf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn lfdf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a network from a JSON network configuration (null or `"{}"` for
/// defaults) with seeded initial weights.
///
/// # Safety
/// `config_json` is null or a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lfdf_model_new(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut LfdfModel,
) -> LfdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg: NetworkConfig = if config_json.is_null() {
            NetworkConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)
                .map_err(|e| core(e.into()))?
        };
        let mut net = LfDfNet::new(cfg).map_err(core)?;
        init_weights(&mut net, seed);
        *out = boxed(net);
        Ok(())
    })
}

/// Loads a checkpoint written by the trainer (`.json` or `.bin` path).
///
/// # Safety
/// `path` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lfdf_model_load(
    path: *const c_char,
    out: *mut *mut LfdfModel,
) -> LfdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = str_arg(path, "path")?;
        let ck = Checkpoint::load(Path::new(p)).map_err(core)?;
        let mut net = LfDfNet::new(ck.meta.network.clone()).map_err(core)?;
        net.set_params(ck.params).map_err(core)?;
        *out = boxed(net);
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lfdf_model_free(model: *mut LfdfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Angular size `A`, scale `alpha` and trainable scalar count.
///
/// # Safety
/// `model` is a live handle; each non-null output is writable.
#[no_mangle]
pub unsafe extern "C" fn lfdf_model_info(
    model: *const LfdfModel,
    angular: *mut usize,
    alpha: *mut usize,
    num_params: *mut usize,
) -> LfdfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let c = m.net.config();
        if let Some(a) = angular.as_mut() {
            *a = c.angular;
        }
        if let Some(a) = alpha.as_mut() {
            *a = c.alpha;
        }
        if let Some(n) = num_params.as_mut() {
            *n = m.net.num_params();
        }
        Ok(())
    })
}

/// Super-resolves a Y light field stored `[A, A, h, w]` row-major in
/// `[0, 1]`; `output` receives `[A, A, alpha h, alpha w]` and must hold
/// `output_len` values.
///
/// # Safety
/// `input` holds `A * A * h * w` doubles; `output` holds `output_len`.
#[no_mangle]
pub unsafe extern "C" fn lfdf_model_forward(
    model: *const LfdfModel,
    input: *const f64,
    h: usize,
    w: usize,
    output: *mut f64,
    output_len: usize,
) -> LfdfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if input.is_null() {
            return Err(null("input"));
        }
        if output.is_null() {
            return Err(null("output"));
        }
        let c = m.net.config();
        let (a, s) = (c.angular, c.alpha);
        let need = a * a * h * w * s * s;
        if output_len != need {
            return Err((
                LfdfStatus::Shape,
                format!("output holds {output_len} values, need {need}"),
            ));
        }
        let data = std::slice::from_raw_parts(input, a * a * h * w).to_vec();
        let lf = LightField::new((a, a), (h, w), ColorSpace::Y, data).map_err(core)?;
        let sr = m.net.forward(&lf).map_err(core)?;
        std::slice::from_raw_parts_mut(output, need).copy_from_slice(sr.data());
        Ok(())
    })
}

unsafe fn images(
    a: *const f64,
    b: *const f64,
    h: usize,
    w: usize,
) -> Result<(Image, Image), (LfdfStatus, String)> {
    if a.is_null() || b.is_null() {
        return Err(null("image"));
    }
    let n = h * w;
    let img = |p: *const f64| {
        Image::new(h, w, 1, std::slice::from_raw_parts(p, n).to_vec()).map_err(core)
    };
    Ok((img(a)?, img(b)?))
}

/// PSNR in dB (peak 1) of two `h x w` images; `+inf` when identical.
///
/// # Safety
/// `a` and `b` hold `h * w` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lfdf_psnr(
    a: *const f64,
    b: *const f64,
    h: usize,
    w: usize,
    out: *mut f64,
) -> LfdfStatus {
    guard(|| {
        let (x, y) = images(a, b, h, w)?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        *o = psnr_y(&x, &y).map_err(core)?;
        Ok(())
    })
}

/// Mean SSIM of two `h x w` images.
///
/// # Safety
/// `a` and `b` hold `h * w` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lfdf_ssim(
    a: *const f64,
    b: *const f64,
    h: usize,
    w: usize,
    out: *mut f64,
) -> LfdfStatus {
    guard(|| {
        let (x, y) = images(a, b, h, w)?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        *o = ssim(&x, &y).map_err(core)?;
        Ok(())
    })
}
