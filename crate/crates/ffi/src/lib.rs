//! C ABI over the `diffsfm` engine.
//!
//! Tensors cross the boundary as opaque `DsfmTensor` handles owned by the
//! caller once returned; free them with `dsfm_tensor_free`. Every fallible
//! function returns a `DsfmStatus`; on failure the message is available from
//! `dsfm_last_error_message` on the same thread. Panics never unwind into
//! the caller; they are reported as `DSFM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use diffsfm::eval::{depth_metrics, median_scale, DepthMetrics};
use diffsfm::io::{read_pfm, read_ppm, write_pfm, write_ppm, ExperimentConfig};
use diffsfm::losses::{data_fidelity, LossWeights, SupervisionInputs};
use diffsfm::optim::{recover_sequence, sequence_motions, Ablation, RecoveryResult};
use diffsfm::sampling::{synthesize_target_tensor, SynthesizedView};
use diffsfm::scenes::{make_sequence, RenderedSequence};
use diffsfm::{camera, Error, Graph, Intrinsics, PoseSE3, Tensor};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsfmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    DomainError = 4,
    NumericalFailure = 5,
    NoVisiblePixels = 6,
    IoError = 7,
    FormatError = 8,
    ConfigError = 9,
    Panic = 10,
}

impl From<&Error> for DsfmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::ShapeMismatch { .. } | Error::InvalidShape { .. } => DsfmStatus::ShapeMismatch,
            Error::Domain { .. } => DsfmStatus::DomainError,
            Error::NoVisiblePixels | Error::SceneNotVisible(_) => DsfmStatus::NoVisiblePixels,
            Error::Io { .. } => DsfmStatus::IoError,
            Error::Format { .. } => DsfmStatus::FormatError,
            Error::Config(_) => DsfmStatus::ConfigError,
            e if e.is_numerical() => DsfmStatus::NumericalFailure,
            _ => DsfmStatus::InvalidArgument,
        }
    }
}

/// Opaque dense `f64` tensor, row-major.
pub struct DsfmTensor(Tensor);

/// Normalized pinhole intrinsics: focal lengths and principal point as
/// fractions of the image width and height.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DsfmIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Rigid motion as an axis-angle rotation followed by a translation.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DsfmPose {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DsfmDepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_valid: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsfmAblation {
    Baseline = 0,
    Camera = 1,
    CameraCostVolume = 2,
}

/// A rendered synthetic sequence.
pub struct DsfmSequence(RenderedSequence);

/// The outcome of a joint recovery.
pub struct DsfmRecovery(RecoveryResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (DsfmStatus, String)>) -> DsfmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsfmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            DsfmStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, (DsfmStatus, String)>;
}

impl<T> OrStatus<T> for diffsfm::Result<T> {
    fn or_status(self) -> Result<T, (DsfmStatus, String)> {
        self.map_err(|e| (DsfmStatus::from(&e), e.to_string()))
    }
}

fn null(what: &str) -> (DsfmStatus, String) {
    (DsfmStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (DsfmStatus, String) {
    (DsfmStatus::InvalidArgument, msg.into())
}

unsafe fn tensor_ref<'a>(t: *const DsfmTensor, what: &str) -> Result<&'a Tensor, (DsfmStatus, String)> {
    t.as_ref().map(|t| &t.0).ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, (DsfmStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn intrinsics(k: &DsfmIntrinsics) -> Result<Intrinsics, (DsfmStatus, String)> {
    Intrinsics::new(k.fx, k.fy, k.cx, k.cy).or_status()
}

fn pose(p: &DsfmPose) -> PoseSE3 {
    PoseSE3::new(p.rotation, p.translation)
}

fn dsfm_pose(p: &PoseSE3) -> DsfmPose {
    DsfmPose {
        rotation: p.rotation,
        translation: p.translation,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dsfm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dsfm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `data` (product of `shape` elements) into a new tensor.
///
/// # Safety
/// `data` must point to as many readable `f64` as the product of the `ndim`
/// entries of `shape`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_tensor_new(
    data: *const f64,
    shape: *const usize,
    ndim: usize,
    out: *mut *mut DsfmTensor,
) -> DsfmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if shape.is_null() && ndim > 0 {
            return Err(null("shape"));
        }
        let shape: &[usize] = if ndim == 0 { &[] } else { std::slice::from_raw_parts(shape, ndim) };
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| invalid("tensor size overflows"))?;
        if data.is_null() && n > 0 {
            return Err(null("data"));
        }
        let values = if n == 0 { Vec::new() } else { std::slice::from_raw_parts(data, n).to_vec() };
        let t = Tensor::new(shape, values).or_status()?;
        write_out(out, DsfmTensor(t));
        Ok(())
    })
}

/// Releases a tensor; null is ignored.
///
/// # Safety
/// `t` must be null or a handle returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsfm_tensor_free(t: *mut DsfmTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of dimensions; 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsfm_tensor_ndim(t: *const DsfmTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.ndim())
}

/// Number of elements; 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsfm_tensor_len(t: *const DsfmTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// Copies the shape into `out` (capacity `cap` entries).
///
/// # Safety
/// `t` must be a live handle and `out` writable for `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn dsfm_tensor_shape(t: *const DsfmTensor, out: *mut usize, cap: usize) -> DsfmStatus {
    guard(|| {
        let t = tensor_ref(t, "tensor")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if cap < t.ndim() {
            return Err(invalid(format!("shape needs {} entries, capacity is {cap}", t.ndim())));
        }
        std::slice::from_raw_parts_mut(out, t.ndim()).copy_from_slice(t.shape());
        Ok(())
    })
}

/// Borrowed pointer to the row-major data, valid while the handle lives.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsfm_tensor_data(t: *const DsfmTensor) -> *const f64 {
    t.as_ref().map_or(ptr::null(), |t| t.0.data().as_ptr())
}

/// Pixel coordinates in the source view of every target pixel (`H x W x 2`)
/// and their validity (`H x W`, 1 where the point is in front of both
/// cameras).
///
/// # Safety
/// Handles must be live; `pose`, `intr` readable; `out_coords` and
/// `out_valid` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_warp_coords(
    depth: *const DsfmTensor,
    pose: *const DsfmPose,
    intr: *const DsfmIntrinsics,
    out_coords: *mut *mut DsfmTensor,
    out_valid: *mut *mut DsfmTensor,
) -> DsfmStatus {
    guard(|| {
        let depth = tensor_ref(depth, "depth")?;
        let pose = self::pose(pose.as_ref().ok_or_else(|| null("pose"))?);
        let k = intrinsics(intr.as_ref().ok_or_else(|| null("intrinsics"))?)?;
        if out_coords.is_null() || out_valid.is_null() {
            return Err(null("output"));
        }
        let (coords, valid) = camera::warp_coords_tensor(depth, &pose, &k).or_status()?;
        write_out(out_coords, DsfmTensor(coords));
        write_out(out_valid, DsfmTensor(valid));
        Ok(())
    })
}

/// Reconstructs the target view from `source` (`H x W x C`) given the
/// target depth, the target-to-source pose and the intrinsics. Also returns
/// the `H x W` in-view mask.
///
/// # Safety
/// Handles must be live; `pose`, `intr` readable; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_synthesize_target(
    source: *const DsfmTensor,
    depth: *const DsfmTensor,
    pose: *const DsfmPose,
    intr: *const DsfmIntrinsics,
    out_image: *mut *mut DsfmTensor,
    out_mask: *mut *mut DsfmTensor,
) -> DsfmStatus {
    guard(|| {
        let source = tensor_ref(source, "source")?;
        let depth = tensor_ref(depth, "depth")?;
        let pose = self::pose(pose.as_ref().ok_or_else(|| null("pose"))?);
        let k = intrinsics(intr.as_ref().ok_or_else(|| null("intrinsics"))?)?;
        if out_image.is_null() || out_mask.is_null() {
            return Err(null("output"));
        }
        let (image, mask) = synthesize_target_tensor(source, depth, &pose, &k).or_status()?;
        write_out(out_image, DsfmTensor(image));
        write_out(out_mask, DsfmTensor(mask));
        Ok(())
    })
}

/// Photometric data term between `target` and one `synthesized` view with
/// its `H x W` mask, mixing SSIM and L1 with weight `alpha`.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_data_fidelity(
    target: *const DsfmTensor,
    synthesized: *const DsfmTensor,
    mask: *const DsfmTensor,
    alpha: f64,
    out: *mut f64,
) -> DsfmStatus {
    guard(|| {
        let target = tensor_ref(target, "target")?;
        let synthesized = tensor_ref(synthesized, "synthesized")?;
        let mask = tensor_ref(mask, "mask")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let g = Graph::new();
        let view = SynthesizedView {
            image: g.constant(synthesized.clone()),
            oob_mask: mask.clone(),
        };
        let inp = SupervisionInputs::new(g.constant(target.clone()), view);
        let weights = LossWeights {
            alpha,
            ..LossWeights::default()
        };
        *out = data_fidelity(&inp, &weights).or_status()?.value().item();
        Ok(())
    })
}

/// `pred` rescaled so its median over pixels with `gt > 0` matches `gt`.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_median_scale(
    pred: *const DsfmTensor,
    gt: *const DsfmTensor,
    out: *mut *mut DsfmTensor,
) -> DsfmStatus {
    guard(|| {
        let pred = tensor_ref(pred, "pred")?;
        let gt = tensor_ref(gt, "gt")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let scaled = median_scale(pred, gt, None).or_status()?;
        write_out(out, DsfmTensor(scaled));
        Ok(())
    })
}

/// Depth metrics over pixels with `gt > 0`, both maps clamped to
/// `[1e-3, cap]`. Median-scale `pred` first.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_depth_metrics(
    pred: *const DsfmTensor,
    gt: *const DsfmTensor,
    cap: f64,
    out: *mut DsfmDepthMetrics,
) -> DsfmStatus {
    guard(|| {
        let pred = tensor_ref(pred, "pred")?;
        let gt = tensor_ref(gt, "gt")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m: DepthMetrics = depth_metrics(pred, gt, None, cap).or_status()?;
        *out = DsfmDepthMetrics {
            abs_rel: m.abs_rel,
            sq_rel: m.sq_rel,
            rmse: m.rmse,
            rmse_log: m.rmse_log,
            delta1: m.delta1,
            delta2: m.delta2,
            delta3: m.delta3,
            n_valid: m.n_valid,
        };
        Ok(())
    })
}

/// Reads a PFM float map (`H x W` or `H x W x 3`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_read_pfm(path: *const c_char, out: *mut *mut DsfmTensor) -> DsfmStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, DsfmTensor(read_pfm(&path).or_status()?));
        Ok(())
    })
}

/// Writes a PFM float map.
///
/// # Safety
/// `path` must be a NUL-terminated string and `t` a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsfm_write_pfm(path: *const c_char, t: *const DsfmTensor) -> DsfmStatus {
    guard(|| {
        let path = path_arg(path)?;
        write_pfm(&path, tensor_ref(t, "tensor")?).or_status()
    })
}

/// Reads a binary PPM image as `H x W x 3` values in `[0, 1]`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_read_ppm(path: *const c_char, out: *mut *mut DsfmTensor) -> DsfmStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, DsfmTensor(read_ppm(&path).or_status()?));
        Ok(())
    })
}

/// Writes an image with values in `[0, 1]` as 8-bit binary PPM.
///
/// # Safety
/// `path` must be a NUL-terminated string and `t` a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsfm_write_ppm(path: *const c_char, t: *const DsfmTensor) -> DsfmStatus {
    guard(|| {
        let path = path_arg(path)?;
        write_ppm(&path, tensor_ref(t, "tensor")?).or_status()
    })
}

unsafe fn config_arg(json: *const c_char) -> Result<ExperimentConfig, (DsfmStatus, String)> {
    if json.is_null() {
        return Ok(ExperimentConfig::default());
    }
    let text = CStr::from_ptr(json)
        .to_str()
        .map_err(|_| invalid("config is not valid UTF-8"))?;
    ExperimentConfig::from_json(text).or_status()
}

/// Renders the scene and trajectory of an experiment configuration (JSON;
/// null for defaults).
///
/// # Safety
/// `config_json` must be null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_render_sequence(config_json: *const c_char, out: *mut *mut DsfmSequence) -> DsfmStatus {
    guard(|| {
        let config = config_arg(config_json)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let seq = make_sequence(
            &config.scene,
            &config.trajectory.poses(),
            &config.intrinsics.ground_truth,
            config.grid,
        )
        .or_status()?;
        write_out(out, DsfmSequence(seq));
        Ok(())
    })
}

/// Number of frames; 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsfm_sequence_len(s: *const DsfmSequence) -> usize {
    s.as_ref().map_or(0, |s| s.0.frames.len())
}

/// Copies frame `k` (`H x W x C`) and its depth map (`H x W`).
///
/// # Safety
/// `s` must be a live handle; outputs writable (either may be null to skip).
#[no_mangle]
pub unsafe extern "C" fn dsfm_sequence_frame(
    s: *const DsfmSequence,
    k: usize,
    out_image: *mut *mut DsfmTensor,
    out_depth: *mut *mut DsfmTensor,
) -> DsfmStatus {
    guard(|| {
        let s = &s.as_ref().ok_or_else(|| null("sequence"))?.0;
        if k >= s.frames.len() {
            return Err(invalid(format!("frame {k} out of range (sequence has {})", s.frames.len())));
        }
        if !out_image.is_null() {
            write_out(out_image, DsfmTensor(s.frames[k].clone()));
        }
        if !out_depth.is_null() {
            write_out(out_depth, DsfmTensor(s.depths[k].clone()));
        }
        Ok(())
    })
}

/// Motion from frame `k` to frame `k + 1`.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_sequence_motion(s: *const DsfmSequence, k: usize, out: *mut DsfmPose) -> DsfmStatus {
    guard(|| {
        let s = &s.as_ref().ok_or_else(|| null("sequence"))?.0;
        let m = s
            .relative
            .get(k)
            .ok_or_else(|| invalid(format!("motion {k} out of range (sequence has {})", s.relative.len())))?;
        *out.as_mut().ok_or_else(|| null("out"))? = dsfm_pose(m);
        Ok(())
    })
}

/// Releases a sequence; null is ignored.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsfm_sequence_free(s: *mut DsfmSequence) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Joint depth, ego-motion and (except for the baseline arm) intrinsics
/// recovery over `n_frames` frames, configured by `config_json` (null for
/// defaults). `given` holds the intrinsics the baseline arm is frozen at and
/// is required for it.
///
/// # Safety
/// `frames` must point to `n_frames` live handles; `config_json` null or
/// NUL-terminated; `given` null or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_recover(
    frames: *const *const DsfmTensor,
    n_frames: usize,
    config_json: *const c_char,
    ablation: DsfmAblation,
    given: *const DsfmIntrinsics,
    out: *mut *mut DsfmRecovery,
) -> DsfmStatus {
    guard(|| {
        if frames.is_null() {
            return Err(null("frames"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let config = config_arg(config_json)?;
        let frames = std::slice::from_raw_parts(frames, n_frames)
            .iter()
            .enumerate()
            .map(|(i, &f)| tensor_ref(f, &format!("frame {i}")).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        let ablation = match ablation {
            DsfmAblation::Baseline => Ablation::Baseline,
            DsfmAblation::Camera => Ablation::Camera,
            DsfmAblation::CameraCostVolume => Ablation::CameraCostVolume,
        };
        let given = match given.as_ref() {
            Some(k) => intrinsics(k)?,
            None if ablation == Ablation::Baseline => return Err(null("given intrinsics")),
            None => config.intrinsics.init,
        };
        let problem = config.sequence_problem(frames, ablation, given).or_status()?;
        let result = recover_sequence(&problem, &config.optimizer.solve_options()).or_status()?;
        write_out(out, DsfmRecovery(result));
        Ok(())
    })
}

/// Number of recovered target frames (frames after the first).
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsfm_recovery_len(r: *const DsfmRecovery) -> usize {
    r.as_ref().map_or(0, |r| r.0.depths.len())
}

/// Recovered depth of frame `k + 1`.
///
/// # Safety
/// `r` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_recovery_depth(
    r: *const DsfmRecovery,
    k: usize,
    out: *mut *mut DsfmTensor,
) -> DsfmStatus {
    guard(|| {
        let r = &r.as_ref().ok_or_else(|| null("recovery"))?.0;
        let d = r
            .depths
            .get(k)
            .ok_or_else(|| invalid(format!("depth {k} out of range (recovery has {})", r.depths.len())))?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, DsfmTensor(d.clone()));
        Ok(())
    })
}

/// Recovered motion from frame `k` to frame `k + 1`.
///
/// # Safety
/// `r` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_recovery_motion(r: *const DsfmRecovery, k: usize, out: *mut DsfmPose) -> DsfmStatus {
    guard(|| {
        let r = &r.as_ref().ok_or_else(|| null("recovery"))?.0;
        let motions = sequence_motions(r);
        let m = motions
            .get(k)
            .ok_or_else(|| invalid(format!("motion {k} out of range (recovery has {})", motions.len())))?;
        *out.as_mut().ok_or_else(|| null("out"))? = dsfm_pose(m);
        Ok(())
    })
}

/// Recovered (or, for the baseline arm, given) intrinsics.
///
/// # Safety
/// `r` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsfm_recovery_intrinsics(r: *const DsfmRecovery, out: *mut DsfmIntrinsics) -> DsfmStatus {
    guard(|| {
        let k = r.as_ref().ok_or_else(|| null("recovery"))?.0.intrinsics;
        *out.as_mut().ok_or_else(|| null("out"))? = DsfmIntrinsics {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
        };
        Ok(())
    })
}

/// Objective at the last recorded step; NaN for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsfm_recovery_final_objective(r: *const DsfmRecovery) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.final_objective())
}

/// Releases a recovery; null is ignored.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsfm_recovery_free(r: *mut DsfmRecovery) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
