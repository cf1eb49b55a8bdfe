//! C ABI over the `dpconv` library.
//!
//! Every function returns a [`DpStatus`]. On failure a message is stored per
//! thread and can be read with [`dpconv_last_error`]. Masks and layer stacks
//! are opaque handles that must be released with their `_free` function.
//! Buffers are row-major `(n, c, h, w)`; masks hold one byte per pixel with
//! 1 for valid and 0 for holes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dpconv::config::parse_stack;
use dpconv::maskprop::{generate_irregular_mask, propagate, LayerStackSpec};
use dpconv::metrics::MetricReport;
use dpconv::{dpconv_forward_batch, mask_update, BinaryMask, ConvSpec, Error, Tensor4};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    NonFinite = 4,
    Io = 5,
    Panic = 6,
}

/// Opaque validity mask.
pub struct DpMask(BinaryMask);

/// Opaque layer stack.
pub struct DpStack(LayerStackSpec);

/// Geometry of one dilated partial convolution. The kernel is
/// `(2·half_height + 1) × (2·half_width + 1)`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DpConvParams {
    pub half_height: usize,
    pub half_width: usize,
    pub dilation: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub mask_threshold: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct DpMetrics {
    pub l1_percent: f64,
    /// Positive infinity for identical inputs.
    pub psnr_db: f64,
    pub ssim: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Fail(DpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape(_) => DpStatus::Shape,
            Error::NonFinite { .. } => DpStatus::NonFinite,
            Error::Io(_) | Error::Image { .. } | Error::Checkpoint(_) => DpStatus::Io,
            _ => DpStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DpStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(DpStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DpStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DpStatus::Panic
        }
    }
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

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn mask_ref<'a>(m: *const DpMask) -> Result<&'a BinaryMask, Fail> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("mask"))
}

fn spec_of(p: &DpConvParams) -> Result<ConvSpec, Fail> {
    let spec = ConvSpec {
        half_height: p.half_height,
        half_width: p.half_width,
        dilation: p.dilation,
        stride: p.stride,
        padding: p.padding,
        in_channels: p.in_channels,
        out_channels: p.out_channels,
        mask_threshold: p.mask_threshold,
    };
    spec.validate()?;
    Ok(spec)
}

fn checked_len(dims: &[usize]) -> Result<usize, Fail> {
    dims.iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| invalid("buffer size overflows"))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dpconv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a mask from `height · width` bytes; nonzero bytes are valid.
///
/// # Safety
/// `bits` must point to `height · width` readable bytes and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dpconv_mask_new(
    height: usize,
    width: usize,
    bits: *const u8,
    out: *mut *mut DpMask,
) -> DpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let bits = slice(bits, checked_len(&[height, width])?, "bits")?;
        let mask = BinaryMask::new(height, width, bits.iter().map(|&b| u8::from(b != 0)).collect())?;
        *out = Box::into_raw(Box::new(DpMask(mask)));
        Ok(())
    })
}

/// Generates an irregular mask with hole ratio near `ratio`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpconv_mask_generate(
    height: usize,
    width: usize,
    ratio: f64,
    seed: u64,
    out: *mut *mut DpMask,
) -> DpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let mask = generate_irregular_mask(height, width, ratio, seed)?;
        *out = Box::into_raw(Box::new(DpMask(mask)));
        Ok(())
    })
}

/// Releases a mask; null is ignored.
///
/// # Safety
/// `mask` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dpconv_mask_free(mask: *mut DpMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Writes height, width and hole ratio of `mask`. Any output may be null.
///
/// # Safety
/// `mask` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpconv_mask_info(
    mask: *const DpMask,
    height: *mut usize,
    width: *mut usize,
    hole_ratio: *mut f64,
) -> DpStatus {
    guard(|| {
        let m = mask_ref(mask)?;
        if let Some(h) = height.as_mut() {
            *h = m.height();
        }
        if let Some(w) = width.as_mut() {
            *w = m.width();
        }
        if let Some(r) = hole_ratio.as_mut() {
            *r = m.ratio();
        }
        Ok(())
    })
}

/// Copies the mask bytes (0 or 1) into `buf`, which must hold exactly
/// `height · width` bytes.
///
/// # Safety
/// `mask` must be a live handle and `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dpconv_mask_copy(mask: *const DpMask, buf: *mut u8, len: usize) -> DpStatus {
    guard(|| {
        let m = mask_ref(mask)?;
        if len != m.bits().len() {
            return Err(Fail(
                DpStatus::Shape,
                format!("buffer holds {len} bytes, mask has {}", m.bits().len()),
            ));
        }
        slice_mut(buf, len, "buf")?.copy_from_slice(m.bits());
        Ok(())
    })
}

/// Applies one mask update with the geometry in `params`.
///
/// # Safety
/// `mask` must be a live handle, `params` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dpconv_mask_update(
    mask: *const DpMask,
    params: *const DpConvParams,
    out: *mut *mut DpMask,
) -> DpStatus {
    guard(|| {
        let m = mask_ref(mask)?;
        let spec = spec_of(params.as_ref().ok_or_else(|| null("params"))?)?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(DpMask(mask_update(m, &spec)?)));
        Ok(())
    })
}

/// Builds a stack from a definition such as `"3 3 3 3 | 3d2 3d4 3d8"`:
/// odd kernel size with optional `d`, `s`, `p`, `t` parts, `|` starting a
/// repeating cycle. `depth` is the number of layers to expand a cycle to.
///
/// # Safety
/// `name` and `definition` must be NUL-terminated strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dpconv_stack_parse(
    name: *const c_char,
    definition: *const c_char,
    depth: usize,
    out: *mut *mut DpStack,
) -> DpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if name.is_null() || definition.is_null() {
            return Err(null("name or definition"));
        }
        let name = CStr::from_ptr(name).to_str().map_err(|e| invalid(e.to_string()))?;
        let def = CStr::from_ptr(definition).to_str().map_err(|e| invalid(e.to_string()))?;
        let stack = parse_stack(name, def).map_err(invalid)?.build(depth)?;
        *out = Box::into_raw(Box::new(DpStack(stack)));
        Ok(())
    })
}

/// Reference stacks: `dilated == 0` gives repeated 3×3 layers, otherwise four
/// 3×3 layers followed by dilations 2, 4, 8 repeating up to `depth`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpconv_stack_reference(dilated: i32, depth: usize, out: *mut *mut DpStack) -> DpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let stack = if dilated == 0 {
            LayerStackSpec::reference_baseline()
        } else {
            LayerStackSpec::reference_dilated(depth)
        };
        *out = Box::into_raw(Box::new(DpStack(stack)));
        Ok(())
    })
}

/// Releases a stack; null is ignored.
///
/// # Safety
/// `stack` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dpconv_stack_free(stack: *mut DpStack) {
    if !stack.is_null() {
        drop(Box::from_raw(stack));
    }
}

/// Runs up to `cap` mask updates. `layers` receives the layers needed to
/// reach a hole-free mask, or -1 when the cap is hit. If `coverage` is
/// non-null, the valid fraction after each applied layer is written to it
/// (at most `coverage_len` values) and `coverage_written` gets the count.
///
/// # Safety
/// Handles must be live; `layers` writable; `coverage` must point to
/// `coverage_len` writable doubles when non-null.
#[no_mangle]
pub unsafe extern "C" fn dpconv_propagate(
    stack: *const DpStack,
    mask: *const DpMask,
    cap: usize,
    layers: *mut i64,
    coverage: *mut f64,
    coverage_len: usize,
    coverage_written: *mut usize,
) -> DpStatus {
    guard(|| {
        let s = &stack.as_ref().ok_or_else(|| null("stack"))?.0;
        let m = mask_ref(mask)?;
        let layers = out_ptr(layers, "layers")?;
        let report = propagate(s, m, cap)?;
        *layers = report.layers_to_transparency.map_or(-1, |l| l as i64);
        let n = report.per_layer_coverage.len().min(coverage_len);
        if !coverage.is_null() {
            slice_mut(coverage, n, "coverage")?.copy_from_slice(&report.per_layer_coverage[..n]);
        }
        if let Some(w) = coverage_written.as_mut() {
            *w = if coverage.is_null() { 0 } else { n };
        }
        Ok(())
    })
}

/// Output spatial size of one layer for an `height × width` input.
///
/// # Safety
/// `params` readable; `out_height` and `out_width` writable.
#[no_mangle]
pub unsafe extern "C" fn dpconv_output_dims(
    params: *const DpConvParams,
    height: usize,
    width: usize,
    out_height: *mut usize,
    out_width: *mut usize,
) -> DpStatus {
    guard(|| {
        let spec = spec_of(params.as_ref().ok_or_else(|| null("params"))?)?;
        let (oh, ow) = spec.output_dims(height, width)?;
        *out_ptr(out_height, "out_height")? = oh;
        *out_ptr(out_width, "out_width")? = ow;
        Ok(())
    })
}

/// Dilated partial convolution forward pass over a batch.
///
/// `input` is `(batch, in_channels, height, width)`, `masks` holds
/// `batch · height · width` bytes, `weights` is
/// `(out_channels, in_channels, kh, kw)` and `bias` has `out_channels`
/// entries (may be null for zero bias). `output` receives
/// `(batch, out_channels, oh, ow)` values and `out_masks`, if non-null,
/// `batch · oh · ow` bytes; see [`dpconv_output_dims`].
///
/// # Safety
/// Every non-null pointer must reference a buffer of the stated length.
#[no_mangle]
pub unsafe extern "C" fn dpconv_forward(
    params: *const DpConvParams,
    batch: usize,
    height: usize,
    width: usize,
    input: *const f64,
    masks: *const u8,
    weights: *const f64,
    bias: *const f64,
    output: *mut f64,
    output_len: usize,
    out_masks: *mut u8,
    out_masks_len: usize,
) -> DpStatus {
    guard(|| {
        let spec = spec_of(params.as_ref().ok_or_else(|| null("params"))?)?;
        let in_shape = [batch, spec.in_channels, height, width];
        let x = Tensor4::new(in_shape, slice(input, checked_len(&in_shape)?, "input")?.to_vec())?;
        let plane = checked_len(&[height, width])?;
        let mask_bytes = slice(masks, checked_len(&[batch, plane])?, "masks")?;
        let ms = mask_bytes
            .chunks(plane.max(1))
            .take(batch)
            .map(|c| BinaryMask::new(height, width, c.iter().map(|&b| u8::from(b != 0)).collect()))
            .collect::<dpconv::Result<Vec<_>>>()?;
        let wshape = spec.weight_shape();
        let w = Tensor4::new(wshape, slice(weights, checked_len(&wshape)?, "weights")?.to_vec())?;
        let b = if bias.is_null() {
            vec![0.0; spec.out_channels]
        } else {
            slice(bias, spec.out_channels, "bias")?.to_vec()
        };
        let res = dpconv_forward_batch(&x, &ms, &w, &b, &spec)?;
        let out = res.output.data();
        if output_len != out.len() {
            return Err(Fail(
                DpStatus::Shape,
                format!("output buffer holds {output_len} values, result has {}", out.len()),
            ));
        }
        slice_mut(output, output_len, "output")?.copy_from_slice(out);
        if !out_masks.is_null() {
            let bits: Vec<u8> = res.masks.iter().flat_map(|m| m.bits().iter().copied()).collect();
            if out_masks_len != bits.len() {
                return Err(Fail(
                    DpStatus::Shape,
                    format!("mask buffer holds {out_masks_len} bytes, result has {}", bits.len()),
                ));
            }
            slice_mut(out_masks, out_masks_len, "out_masks")?.copy_from_slice(&bits);
        }
        Ok(())
    })
}

/// ℓ1 %, PSNR (peak 1) and SSIM of two `(batch, channels, height, width)`
/// buffers with values in `[0, 1]`.
///
/// # Safety
/// `a` and `b` must each hold the stated number of values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dpconv_metrics(
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    a: *const f64,
    b: *const f64,
    out: *mut DpMetrics,
) -> DpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let shape = [batch, channels, height, width];
        let len = checked_len(&shape)?;
        let ta = Tensor4::new(shape, slice(a, len, "a")?.to_vec())?;
        let tb = Tensor4::new(shape, slice(b, len, "b")?.to_vec())?;
        let r = MetricReport::evaluate(&ta, &tb)?;
        *out = DpMetrics {
            l1_percent: r.l1_percent,
            psnr_db: r.psnr_db,
            ssim: r.ssim,
        };
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dpconv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
