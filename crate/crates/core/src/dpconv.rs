//! Dilated partial convolution.
//!
//! For every output position the kernel taps are spread by the dilation
//! factor `l`. Only taps that land on valid mask pixels contribute; the sum
//! is rescaled by `Z = window / 𝓜` where `𝓜` counts the valid taps, and the
//! bias is added afterwards. Positions with `𝓜 = 0` produce 0 (no bias).
//! The output mask is 1 wherever `𝓜 ≥ τ`.
//!
//! Padding contributes value 0 and mask 0. The mask is single channel and
//! shared by every feature channel. Gradients treat `m`, `𝓜` and `Z` as
//! constants of the forward pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{check_masks, col2im, gemm, im2col, mask_for, BinaryMask, ConvGeometry, Tensor4};

/// Geometry of a dilated partial convolution layer. The kernel is
/// `(2·half_height + 1) × (2·half_width + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvSpec {
    pub half_height: usize,
    pub half_width: usize,
    pub dilation: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Minimum number of valid taps for the updated mask bit to be 1.
    pub mask_threshold: usize,
}

impl ConvSpec {
    /// Square `(2·half + 1)²` kernel, stride 1, dilation 1, size-preserving
    /// padding, `τ = 1`.
    pub fn square(half: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            half_height: half,
            half_width: half,
            dilation: 1,
            stride: 1,
            padding: half,
            in_channels,
            out_channels,
            mask_threshold: 1,
        }
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_threshold(mut self, tau: usize) -> Self {
        self.mask_threshold = tau;
        self
    }

    /// Sets the padding that keeps a stride-1 layer size-preserving
    /// (`l·M`, which requires `M == N`).
    pub fn same_padding(mut self) -> Self {
        self.padding = self.dilation * self.half_height.max(self.half_width);
        self
    }

    #[inline]
    pub fn kernel_height(&self) -> usize {
        2 * self.half_height + 1
    }

    #[inline]
    pub fn kernel_width(&self) -> usize {
        2 * self.half_width + 1
    }

    /// Number of taps in the window, `(2M+1)(2N+1)`.
    #[inline]
    pub fn window_size(&self) -> usize {
        self.kernel_height() * self.kernel_width()
    }

    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry::new(
            self.kernel_height(),
            self.kernel_width(),
            self.stride,
            self.padding,
            self.dilation,
        )
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels,
            self.kernel_height(),
            self.kernel_width(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilation == 0 || self.stride == 0 {
            return Err(Error::invalid(format!("dilation and stride must be >= 1: {self:?}")));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid(format!("channel counts must be positive: {self:?}")));
        }
        if self.mask_threshold == 0 {
            return Err(Error::invalid("mask threshold must be >= 1"));
        }
        Ok(())
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        self.geometry().output_dims(h, w)
    }
}

impl From<&ConvSpec> for ConvGeometry {
    fn from(spec: &ConvSpec) -> Self {
        spec.geometry()
    }
}

/// Per-position valid-tap counts over an output grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountMap {
    pub height: usize,
    pub width: usize,
    pub counts: Vec<u32>,
}

impl CountMap {
    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.counts[y * self.width + x]
    }
}

/// Window statistics of one mask under one layer: valid-tap count `𝓜` and
/// renormalisation factor `Z` (0 where `𝓜 = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct WindowStats {
    pub mask_sum: CountMap,
    pub scale: Vec<f64>,
}

impl WindowStats {
    pub fn from_counts(mask_sum: CountMap, window: usize) -> Self {
        let scale = mask_sum
            .counts
            .iter()
            .map(|&m| if m == 0 { 0.0 } else { window as f64 / m as f64 })
            .collect();
        Self { mask_sum, scale }
    }
}

/// Counts, for every output position, how many dilated taps land on valid
/// pixels. Padded taps count 0.
pub fn window_mask_sum(mask: &BinaryMask, spec: &ConvSpec) -> Result<CountMap> {
    let (oh, ow) = spec.output_dims(mask.height(), mask.width())?;
    let (h, w) = (mask.height() as isize, mask.width() as isize);
    let (s, p, l) = (spec.stride as isize, spec.padding as isize, spec.dilation as isize);
    let bits = mask.bits();
    let mut counts = vec![0u32; oh * ow];
    for oy in 0..oh {
        for ky in 0..spec.kernel_height() {
            let iy = oy as isize * s - p + ky as isize * l;
            if iy < 0 || iy >= h {
                continue;
            }
            let row = &bits[iy as usize * w as usize..(iy as usize + 1) * w as usize];
            let dst = &mut counts[oy * ow..(oy + 1) * ow];
            for kx in 0..spec.kernel_width() {
                let off = kx as isize * l - p;
                for (ox, c) in dst.iter_mut().enumerate() {
                    let ix = ox as isize * s + off;
                    if ix >= 0 && ix < w {
                        *c += row[ix as usize] as u32;
                    }
                }
            }
        }
    }
    Ok(CountMap {
        height: oh,
        width: ow,
        counts,
    })
}

fn threshold(counts: &CountMap, tau: usize) -> BinaryMask {
    let bits = counts.counts.iter().map(|&c| u8::from(c as usize >= tau)).collect();
    BinaryMask::new(counts.height, counts.width, bits).expect("count map dimensions")
}

/// Next-layer mask: 1 wherever the window holds at least `τ` valid taps.
pub fn mask_update(mask: &BinaryMask, spec: &ConvSpec) -> Result<BinaryMask> {
    Ok(threshold(&window_mask_sum(mask, spec)?, spec.mask_threshold))
}

#[derive(Clone, Debug)]
pub struct DpConvOutput {
    pub output: Tensor4,
    pub masks: Vec<BinaryMask>,
    pub stats: Vec<WindowStats>,
}

/// Everything [`dpconv_backward`] needs from the forward pass.
#[derive(Clone, Copy, Debug)]
pub struct DpConvContext<'a> {
    pub input: &'a Tensor4,
    pub masks: &'a [BinaryMask],
    pub stats: &'a [WindowStats],
    pub weights: &'a Tensor4,
    pub spec: &'a ConvSpec,
}

#[derive(Clone, Debug)]
pub struct DpConvGrads {
    pub input: Tensor4,
    pub weights: Tensor4,
    pub bias: Vec<f64>,
}

fn check_operands(input: &Tensor4, weights: &Tensor4, bias: &[f64], spec: &ConvSpec) -> Result<()> {
    spec.validate()?;
    if weights.shape() != spec.weight_shape() {
        return Err(Error::shape(format!(
            "weights {:?} do not match layer {:?}",
            weights.shape(),
            spec.weight_shape()
        )));
    }
    if input.channels() != spec.in_channels {
        return Err(Error::shape(format!(
            "input has {} channels, layer expects {}",
            input.channels(),
            spec.in_channels
        )));
    }
    if !bias.is_empty() && bias.len() != spec.out_channels {
        return Err(Error::shape(format!(
            "bias has {} entries for {} output channels",
            bias.len(),
            spec.out_channels
        )));
    }
    Ok(())
}

/// Single-mask forward pass; the mask is shared by the whole batch.
pub fn dpconv_forward(
    input: &Tensor4,
    mask: &BinaryMask,
    weights: &Tensor4,
    bias: &[f64],
    spec: &ConvSpec,
) -> Result<(Tensor4, BinaryMask, WindowStats)> {
    let mut out = dpconv_forward_batch(input, std::slice::from_ref(mask), weights, bias, spec)?;
    Ok((
        out.output,
        out.masks.pop().expect("one mask"),
        out.stats.pop().expect("one mask"),
    ))
}

/// Batched forward pass with either one mask for the batch or one per entry.
pub fn dpconv_forward_batch(
    input: &Tensor4,
    masks: &[BinaryMask],
    weights: &Tensor4,
    bias: &[f64],
    spec: &ConvSpec,
) -> Result<DpConvOutput> {
    check_operands(input, weights, bias, spec)?;
    check_masks(input, masks)?;
    let stats: Vec<WindowStats> = masks
        .iter()
        .map(|m| window_mask_sum(m, spec).map(|c| WindowStats::from_counts(c, spec.window_size())))
        .collect::<Result<_>>()?;
    let new_masks: Vec<BinaryMask> = stats
        .iter()
        .map(|s| threshold(&s.mask_sum, spec.mask_threshold))
        .collect();

    let [n, ci, h, w] = input.shape();
    let (oh, ow) = (stats[0].mask_sum.height, stats[0].mask_sum.width);
    let co = spec.out_channels;
    let geom = spec.geometry();
    let krows = ci * geom.kernel_h * geom.kernel_w;
    let npos = oh * ow;
    let masked = input.apply_masks(masks)?;

    let mut out = Tensor4::zeros([n, co, oh, ow]);
    out.data_mut()
        .par_chunks_mut(co * npos)
        .enumerate()
        .for_each(|(ni, dst)| {
            let st = if stats.len() == 1 { &stats[0] } else { &stats[ni] };
            let mut cols = vec![0.0; krows * npos];
            im2col(masked.sample(ni), (ci, h, w), &geom, (oh, ow), &mut cols);
            gemm((co, krows, npos), weights.data(), false, &cols, false, 0.0, dst);
            for (o, plane) in dst.chunks_mut(npos).enumerate() {
                let b = if bias.is_empty() { 0.0 } else { bias[o] };
                for ((v, &z), &m) in plane.iter_mut().zip(&st.scale).zip(&st.mask_sum.counts) {
                    *v = if m == 0 { 0.0 } else { z * *v + b };
                }
            }
        });
    Ok(DpConvOutput {
        output: out,
        masks: new_masks,
        stats,
    })
}

/// Gradients of the forward pass with respect to input, weights and bias.
pub fn dpconv_backward(grad_output: &Tensor4, ctx: &DpConvContext<'_>) -> Result<DpConvGrads> {
    let spec = ctx.spec;
    check_operands(ctx.input, ctx.weights, &[], spec)?;
    check_masks(ctx.input, ctx.masks)?;
    if ctx.stats.len() != ctx.masks.len() {
        return Err(Error::shape("forward context holds mismatched mask and stats lists"));
    }
    let [n, ci, h, w] = ctx.input.shape();
    let (oh, ow) = spec.output_dims(h, w)?;
    let co = spec.out_channels;
    if grad_output.shape() != [n, co, oh, ow] {
        return Err(Error::shape(format!(
            "grad_output {:?} does not match forward output {:?}",
            grad_output.shape(),
            [n, co, oh, ow]
        )));
    }
    let geom = spec.geometry();
    let krows = ci * geom.kernel_h * geom.kernel_w;
    let npos = oh * ow;

    let per_sample: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|ni| {
            let st = if ctx.stats.len() == 1 { &ctx.stats[0] } else { &ctx.stats[ni] };
            let mask = mask_for(ctx.masks, ni);
            let go = grad_output.sample(ni);

            let mut gpre = vec![0.0; co * npos];
            let mut gb = vec![0.0; co];
            for o in 0..co {
                let src = &go[o * npos..(o + 1) * npos];
                let dst = &mut gpre[o * npos..(o + 1) * npos];
                for p in 0..npos {
                    dst[p] = st.scale[p] * src[p];
                    if st.mask_sum.counts[p] > 0 {
                        gb[o] += src[p];
                    }
                }
            }

            let mut masked = ctx.input.sample(ni).to_vec();
            for plane in masked.chunks_mut(h * w) {
                for (v, &b) in plane.iter_mut().zip(mask.bits()) {
                    if b == 0 {
                        *v = 0.0;
                    }
                }
            }
            let mut cols = vec![0.0; krows * npos];
            im2col(&masked, (ci, h, w), &geom, (oh, ow), &mut cols);
            let mut gw = vec![0.0; co * krows];
            gemm((co, npos, krows), &gpre, false, &cols, true, 0.0, &mut gw);

            let mut gcols = vec![0.0; krows * npos];
            gemm((krows, co, npos), ctx.weights.data(), true, &gpre, false, 0.0, &mut gcols);
            let mut gi = vec![0.0; ci * h * w];
            col2im(&gcols, (ci, h, w), &geom, (oh, ow), &mut gi);
            for plane in gi.chunks_mut(h * w) {
                for (v, &b) in plane.iter_mut().zip(mask.bits()) {
                    if b == 0 {
                        *v = 0.0;
                    }
                }
            }
            (gi, gw, gb)
        })
        .collect();

    let mut grad_in = Vec::with_capacity(n * ci * h * w);
    let mut grad_w = vec![0.0; co * krows];
    let mut grad_b = vec![0.0; co];
    for (gi, gw, gb) in per_sample {
        grad_in.extend_from_slice(&gi);
        grad_w.iter_mut().zip(&gw).for_each(|(a, b)| *a += b);
        grad_b.iter_mut().zip(&gb).for_each(|(a, b)| *a += b);
    }
    Ok(DpConvGrads {
        input: Tensor4::new([n, ci, h, w], grad_in)?,
        weights: Tensor4::new(ctx.weights.shape(), grad_w)?,
        bias: grad_b,
    })
}
