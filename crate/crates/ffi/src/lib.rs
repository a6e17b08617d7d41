//! C ABI over the perturb-bench core.
//!
//! Models are opaque handles created by `*_load` and released by `*_free`.
//! Every fallible call returns a [`PbStatus`]; on failure the message is
//! available through [`pb_last_error`] until the next failing call on the
//! same thread. Sample buffers are `double` arrays in `[-1, 1]` at 16 kHz,
//! and output buffers must hold as many samples as the input.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use perturb_bench::attack::{mifgsm_attack, MifgsmConfig};
use perturb_bench::audio::{Waveform, SAMPLE_RATE};
use perturb_bench::checkpoint::{load_encoder, load_ssed};
use perturb_bench::defenses::Defense;
use perturb_bench::encoder::{cosine_score, embed, DifferentiableEmbedder, EncoderModel, SpeakerEmbedding};
use perturb_bench::metrics::{compute_eer, mse_samples, si_snr_samples};
use perturb_bench::ssed::{generator_forward, remover_forward, SsedNet};
use perturb_bench::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Io = 3,
    Checkpoint = 4,
    NotApplicable = 5,
    Numeric = 6,
    Panic = 7,
}

/// Trained speaker encoder.
pub struct PbEncoder(EncoderModel);

/// Trained SSED network, used either as generator or as remover.
pub struct PbSsed(SsedNet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PbStatus {
    match e {
        Error::Io { .. } => PbStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) => PbStatus::Checkpoint,
        Error::NotApplicable(_) => PbStatus::NotApplicable,
        Error::NonFinite(_) | Error::ZeroNorm | Error::Diverged { .. } => PbStatus::Numeric,
        Error::InvalidInput(_)
        | Error::UnsupportedWav { .. }
        | Error::LengthMismatch { .. }
        | Error::TooShort { .. }
        | Error::DimensionMismatch { .. }
        | Error::Config(_)
        | Error::DegenerateCorpus(_) => PbStatus::InvalidInput,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> PbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PbStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PbStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PbStatus::Panic
        }
    }
}

unsafe fn input<'a>(ptr: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if ptr.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(ptr: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if ptr.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn c_path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidInput("path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

fn wave(samples: &[f64]) -> Result<Waveform, Fail> {
    Ok(Waveform::new(samples.to_vec(), SAMPLE_RATE)?)
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pb_encoder_load(path: *const c_char, out: *mut *mut PbEncoder) -> PbStatus {
    guard(|| {
        let p = c_path(path)?;
        store(out, PbEncoder(load_encoder(p)?))
    })
}

/// # Safety
/// `enc` must come from [`pb_encoder_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pb_encoder_free(enc: *mut PbEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

/// # Safety
/// `enc` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pb_encoder_embed_dim(enc: *const PbEncoder) -> usize {
    enc.as_ref().map_or(0, |e| e.0.embed_dim())
}

/// Writes the embedding of `samples` into `out`, which holds `out_len`
/// values and must equal [`pb_encoder_embed_dim`].
///
/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn pb_encoder_embed(
    enc: *const PbEncoder,
    samples: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> PbStatus {
    guard(|| {
        let e = enc.as_ref().ok_or(Fail::Null("encoder"))?;
        let x = input(samples, len, "samples")?;
        let o = output(out, out_len, "out")?;
        let v = embed(&e.0, &wave(x)?)?;
        if v.dim() != out_len {
            return Err(Error::DimensionMismatch {
                left: v.dim(),
                right: out_len,
            }
            .into());
        }
        o.copy_from_slice(v.values());
        Ok(())
    })
}

/// Cosine similarity of two vectors of length `dim`.
///
/// # Safety
/// Pointers must be valid for `dim` values.
#[no_mangle]
pub unsafe extern "C" fn pb_cosine_score(a: *const f64, b: *const f64, dim: usize, out: *mut f64) -> PbStatus {
    guard(|| {
        let a = SpeakerEmbedding::new(input(a, dim, "a")?.to_vec())?;
        let b = SpeakerEmbedding::new(input(b, dim, "b")?.to_vec())?;
        *out.as_mut().ok_or(Fail::Null("out"))? = cosine_score(&a, &b)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pb_ssed_load(path: *const c_char, out: *mut *mut PbSsed) -> PbStatus {
    guard(|| {
        let p = c_path(path)?;
        store(out, PbSsed(load_ssed(p)?))
    })
}

/// # Safety
/// `net` must come from [`pb_ssed_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pb_ssed_free(net: *mut PbSsed) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Runs the network as a generator: `out = clamp(x + ε·n⊙m)`.
///
/// # Safety
/// `samples` and `out` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn pb_ssed_generate(net: *const PbSsed, samples: *const f64, len: usize, out: *mut f64) -> PbStatus {
    guard(|| {
        let n = net.as_ref().ok_or(Fail::Null("net"))?;
        let x = wave(input(samples, len, "samples")?)?;
        let o = output(out, len, "out")?;
        o.copy_from_slice(generator_forward(&n.0, &x)?.output.samples());
        Ok(())
    })
}

/// Runs the network as a remover on adversarial speech.
///
/// # Safety
/// `samples` and `out` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn pb_ssed_restore(net: *const PbSsed, samples: *const f64, len: usize, out: *mut f64) -> PbStatus {
    guard(|| {
        let n = net.as_ref().ok_or(Fail::Null("net"))?;
        let x = wave(input(samples, len, "samples")?)?;
        let o = output(out, len, "out")?;
        o.copy_from_slice(remover_forward(&n.0, &x)?.output.samples());
        Ok(())
    })
}

/// MI-FGSM attack parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PbMifgsmParams {
    pub epsilon: f64,
    pub alpha: f64,
    pub momentum_decay: f64,
    pub iterations: usize,
    pub probe_radius: f64,
    pub seed: u64,
}

/// Defaults: ε 0.05, α 0.005, decay 1.0, 10 iterations, probe 0.1, seed 0.
#[no_mangle]
pub extern "C" fn pb_mifgsm_default_params() -> PbMifgsmParams {
    let d = MifgsmConfig::default();
    PbMifgsmParams {
        epsilon: d.epsilon,
        alpha: d.alpha,
        momentum_decay: d.momentum_decay,
        iterations: d.iterations,
        probe_radius: d.probe_radius,
        seed: d.seed,
    }
}

/// Attacks `samples` against `enc` and writes the adversarial waveform.
///
/// # Safety
/// `samples` and `out` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn pb_mifgsm_attack(
    enc: *const PbEncoder,
    params: PbMifgsmParams,
    samples: *const f64,
    len: usize,
    out: *mut f64,
) -> PbStatus {
    guard(|| {
        let e = enc.as_ref().ok_or(Fail::Null("encoder"))?;
        let x = wave(input(samples, len, "samples")?)?;
        let o = output(out, len, "out")?;
        let cfg = MifgsmConfig {
            epsilon: params.epsilon,
            alpha: params.alpha,
            momentum_decay: params.momentum_decay,
            iterations: params.iterations,
            probe_radius: params.probe_radius,
            seed: params.seed,
        };
        o.copy_from_slice(mifgsm_attack(&e.0, &x, &cfg)?.adversarial.samples());
        Ok(())
    })
}

/// Defense selector for [`pb_defend`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbDefense {
    Quantize = 0,
    Median = 1,
    AddNoise = 2,
}

/// Applies a defense. `param` is λ for quantization, the kernel width for
/// median smoothing and the SNR in dB for additive noise; `seed` is used by
/// additive noise only.
///
/// # Safety
/// `samples` and `out` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn pb_defend(
    kind: PbDefense,
    param: f64,
    seed: u64,
    samples: *const f64,
    len: usize,
    out: *mut f64,
) -> PbStatus {
    guard(|| {
        let x = wave(input(samples, len, "samples")?)?;
        let o = output(out, len, "out")?;
        let whole = |v: f64| {
            if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(Error::InvalidInput(format!("defense parameter must be a whole number, got {v}")))
            }
        };
        let d = match kind {
            PbDefense::Quantize => Defense::Qt {
                lambda_level: whole(param)?,
            },
            PbDefense::Median => Defense::Ms {
                kernel: whole(param)? as usize,
            },
            PbDefense::AddNoise => Defense::An { snr_db: param, seed },
        };
        o.copy_from_slice(d.apply(&x)?.samples());
        Ok(())
    })
}

/// SI-SNR of `estimate` against `reference` in dB.
///
/// # Safety
/// Both arrays must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn pb_si_snr(estimate: *const f64, reference: *const f64, len: usize, out: *mut f64) -> PbStatus {
    guard(|| {
        let v = si_snr_samples(input(estimate, len, "estimate")?, input(reference, len, "reference")?)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = v;
        Ok(())
    })
}

/// Mean squared error scaled by 10⁶.
///
/// # Safety
/// Both arrays must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn pb_mse(estimate: *const f64, reference: *const f64, len: usize, out: *mut f64) -> PbStatus {
    guard(|| {
        let v = mse_samples(input(estimate, len, "estimate")?, input(reference, len, "reference")?)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = v;
        Ok(())
    })
}

/// Equal error rate, as a fraction, of target and nontarget scores.
///
/// # Safety
/// Arrays must be valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn pb_compute_eer(
    target: *const f64,
    n_target: usize,
    nontarget: *const f64,
    n_nontarget: usize,
    out: *mut f64,
) -> PbStatus {
    guard(|| {
        let v = compute_eer(input(target, n_target, "target")?, input(nontarget, n_nontarget, "nontarget")?)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = v;
        Ok(())
    })
}
