//! Dense 4-D tensors, binary masks and the convolution kernels shared by
//! every layer in the crate.
//!
//! Storage is row-major `(n, c, h, w)` in `f64`. Convolutions are
//! cross-correlations with zero padding. [`conv2d_direct`] is the naive
//! nested-loop reference; [`conv2d`] is the im2col + GEMM path used by the
//! network and must agree with it elementwise.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected = shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(ni, ci, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((n * cs + c) * hs + y) * ws + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f64) {
        let i = self.offset(n, c, y, x);
        self.data[i] = value;
    }

    /// Elements per batch entry (`c·h·w`).
    #[inline]
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Copies batch entry `n` into a tensor with batch size 1.
    pub fn sample_tensor(&self, n: usize) -> Tensor4 {
        let [_, c, h, w] = self.shape;
        Tensor4 {
            shape: [1, c, h, w],
            data: self.sample(n).to_vec(),
        }
    }

    /// Stacks batch-1 (or larger) tensors along the batch axis.
    pub fn stack(parts: &[Tensor4]) -> Result<Tensor4> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot stack an empty list of tensors"))?;
        let [_, c, h, w] = first.shape;
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape[1..] != [c, h, w] {
                return Err(Error::shape(format!(
                    "cannot stack {:?} with {:?}",
                    first.shape, p.shape
                )));
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Tensor4::new([n, c, h, w], data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor4 {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor4, f: impl Fn(f64, f64) -> f64) -> Result<Tensor4> {
        self.expect_same_shape(other, "zip_map")?;
        Ok(Tensor4 {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor4) -> Result<Tensor4> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor4) -> Result<Tensor4> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Tensor4 {
        self.map(|v| alpha * v)
    }

    pub fn add_assign(&mut self, other: &Tensor4) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn expect_same_shape(&self, other: &Tensor4, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Channels `start..start + count` of every batch entry.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Tensor4> {
        let [n, c, h, w] = self.shape;
        if start + count > c {
            return Err(Error::shape(format!(
                "channel slice {start}..{} out of range for {c} channels",
                start + count
            )));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * count * plane);
        for ni in 0..n {
            let base = (ni * c + start) * plane;
            data.extend_from_slice(&self.data[base..base + count * plane]);
        }
        Tensor4::new([n, count, h, w], data)
    }

    /// Multiplies every channel of batch entry `i` by `masks[i]` (or by the
    /// single mask when one is given for the whole batch).
    pub fn apply_masks(&self, masks: &[BinaryMask]) -> Result<Tensor4> {
        check_masks(self, masks)?;
        let mut out = self.clone();
        let [n, c, h, w] = self.shape;
        let plane = h * w;
        for ni in 0..n {
            let m = mask_for(masks, ni);
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                for (v, &b) in out.data[base..base + plane].iter_mut().zip(m.bits()) {
                    if b == 0 {
                        *v = 0.0;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Single-channel validity grid: 1 marks a valid pixel, 0 a hole.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::shape(format!(
                "mask of {height}x{width} needs {} bits, got {}",
                height * width,
                bits.len()
            )));
        }
        if let Some(bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::invalid(format!("mask bits must be 0 or 1, found {bad}")));
        }
        Ok(Self { height, width, bits })
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![1; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut valid: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(u8::from(valid(y, x)));
            }
        }
        Self { height, width, bits }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x] == 1
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, valid: bool) {
        self.bits[y * self.width + x] = u8::from(valid);
    }

    pub fn valid_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn hole_count(&self) -> usize {
        self.bits.len() - self.valid_count()
    }

    /// Fraction of pixels that are holes.
    pub fn ratio(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.hole_count() as f64 / self.bits.len() as f64
    }

    /// Fraction of pixels that are valid.
    pub fn coverage(&self) -> f64 {
        1.0 - self.ratio()
    }

    pub fn is_transparent(&self) -> bool {
        self.bits.iter().all(|&b| b == 1)
    }

    pub fn invert(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|&b| 1 - b).collect(),
        }
    }
}

pub(crate) fn check_masks(t: &Tensor4, masks: &[BinaryMask]) -> Result<()> {
    if masks.len() != 1 && masks.len() != t.batch() {
        return Err(Error::shape(format!(
            "{} masks for a batch of {}",
            masks.len(),
            t.batch()
        )));
    }
    for m in masks {
        if m.height != t.height() || m.width != t.width() {
            return Err(Error::shape(format!(
                "mask {}x{} does not match feature map {}x{}",
                m.height,
                m.width,
                t.height(),
                t.width()
            )));
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn mask_for(masks: &[BinaryMask], n: usize) -> &BinaryMask {
    if masks.len() == 1 {
        &masks[0]
    } else {
        &masks[n]
    }
}

/// Kernel geometry of a 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvGeometry {
    pub fn new(kernel_h: usize, kernel_w: usize, stride: usize, padding: usize, dilation: usize) -> Self {
        Self {
            kernel_h,
            kernel_w,
            stride,
            padding,
            dilation,
        }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.stride == 0 || self.dilation == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::invalid(format!(
                "stride, dilation and kernel size must be >= 1 ({self:?})"
            )));
        }
        let eff_h = self.dilation * (self.kernel_h - 1) + 1;
        let eff_w = self.dilation * (self.kernel_w - 1) + 1;
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if eff_h > ph || eff_w > pw {
            return Err(Error::shape(format!(
                "effective kernel extent {eff_h}x{eff_w} exceeds padded input {ph}x{pw}"
            )));
        }
        Ok(((ph - eff_h) / self.stride + 1, (pw - eff_w) / self.stride + 1))
    }
}

fn check_conv_operands(input: &Tensor4, weights: &Tensor4, bias: &[f64], geom: &ConvGeometry) -> Result<(usize, usize)> {
    let [co, ci, kh, kw] = weights.shape();
    if ci != input.channels() {
        return Err(Error::shape(format!(
            "weights expect {ci} input channels, input has {}",
            input.channels()
        )));
    }
    if kh != geom.kernel_h || kw != geom.kernel_w {
        return Err(Error::shape(format!(
            "weights kernel {kh}x{kw} does not match geometry {}x{}",
            geom.kernel_h, geom.kernel_w
        )));
    }
    if !bias.is_empty() && bias.len() != co {
        return Err(Error::shape(format!("bias has {} entries for {co} output channels", bias.len())));
    }
    let (oh, ow) = geom.output_dims(input.height(), input.width())?;
    if oh == 0 || ow == 0 || co == 0 {
        return Err(Error::shape("convolution output would be empty".to_string()));
    }
    Ok((oh, ow))
}

/// Reference convolution by direct summation. An empty `bias` means no bias.
pub fn conv2d_direct(input: &Tensor4, weights: &Tensor4, bias: &[f64], geom: &ConvGeometry) -> Result<Tensor4> {
    let (oh, ow) = check_conv_operands(input, weights, bias, geom)?;
    let [n, ci, h, w] = input.shape();
    let [co, _, kh, kw] = weights.shape();
    let (s, p, d) = (geom.stride as isize, geom.padding as isize, geom.dilation as isize);
    let mut out = Tensor4::zeros([n, co, oh, ow]);
    for ni in 0..n {
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..ci {
                        for ky in 0..kh {
                            let iy = oy as isize * s - p + ky as isize * d;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = ox as isize * s - p + kx as isize * d;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += input.at(ni, c, iy as usize, ix as usize) * weights.at(o, c, ky, kx);
                            }
                        }
                    }
                    if !bias.is_empty() {
                        acc += bias[o];
                    }
                    out.set(ni, o, oy, ox, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Unfolds one `(c, h, w)` sample into a `(c·kh·kw) × (oh·ow)` column matrix.
pub(crate) fn im2col(
    sample: &[f64],
    (c, h, w): (usize, usize, usize),
    geom: &ConvGeometry,
    (oh, ow): (usize, usize),
    cols: &mut [f64],
) {
    let (kh, kw) = (geom.kernel_h, geom.kernel_w);
    let (s, p, d) = (geom.stride as isize, geom.padding as isize, geom.dilation as isize);
    let npos = oh * ow;
    debug_assert_eq!(cols.len(), c * kh * kw * npos);
    for ci in 0..c {
        let plane = &sample[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let dst = &mut cols[row * npos..(row + 1) * npos];
                for oy in 0..oh {
                    let iy = oy as isize * s - p + ky as isize * d;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = ox as isize * s - p + kx as isize * d;
                        *v = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating overlaps.
pub(crate) fn col2im(
    cols: &[f64],
    (c, h, w): (usize, usize, usize),
    geom: &ConvGeometry,
    (oh, ow): (usize, usize),
    sample: &mut [f64],
) {
    let (kh, kw) = (geom.kernel_h, geom.kernel_w);
    let (s, p, d) = (geom.stride as isize, geom.padding as isize, geom.dilation as isize);
    let npos = oh * ow;
    for ci in 0..c {
        let plane = &mut sample[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let src = &cols[row * npos..(row + 1) * npos];
                for oy in 0..oh {
                    let iy = oy as isize * s - p + ky as isize * d;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = ox as isize * s - p + kx as isize * d;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c = op(a)·op(b) + beta·c` for row-major matrices, `op(a)` of size m×k.
pub(crate) fn gemm(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover the strided extents asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Fast convolution (im2col + GEMM), parallel over the batch.
pub fn conv2d(input: &Tensor4, weights: &Tensor4, bias: &[f64], geom: &ConvGeometry) -> Result<Tensor4> {
    let (oh, ow) = check_conv_operands(input, weights, bias, geom)?;
    let [n, ci, h, w] = input.shape();
    let [co, _, kh, kw] = weights.shape();
    let krows = ci * kh * kw;
    let npos = oh * ow;
    let mut out = Tensor4::zeros([n, co, oh, ow]);
    out.data_mut()
        .par_chunks_mut(co * npos)
        .enumerate()
        .for_each(|(ni, dst)| {
            let mut cols = vec![0.0; krows * npos];
            im2col(input.sample(ni), (ci, h, w), geom, (oh, ow), &mut cols);
            gemm((co, krows, npos), weights.data(), false, &cols, false, 0.0, dst);
            if !bias.is_empty() {
                for (o, plane) in dst.chunks_mut(npos).enumerate() {
                    plane.iter_mut().for_each(|v| *v += bias[o]);
                }
            }
        });
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub weights: Tensor4,
    pub bias: Vec<f64>,
}

/// Gradients of [`conv2d`] with respect to input, weights and bias.
pub fn conv2d_backward(input: &Tensor4, weights: &Tensor4, geom: &ConvGeometry, grad_out: &Tensor4) -> Result<ConvGrads> {
    let (oh, ow) = check_conv_operands(input, weights, &[], geom)?;
    let [n, ci, h, w] = input.shape();
    let [co, _, kh, kw] = weights.shape();
    if grad_out.shape() != [n, co, oh, ow] {
        return Err(Error::shape(format!(
            "grad_output {:?} does not match convolution output {:?}",
            grad_out.shape(),
            [n, co, oh, ow]
        )));
    }
    let krows = ci * kh * kw;
    let npos = oh * ow;
    let per_sample: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|ni| {
            let go = grad_out.sample(ni);
            let mut cols = vec![0.0; krows * npos];
            im2col(input.sample(ni), (ci, h, w), geom, (oh, ow), &mut cols);
            let mut gw = vec![0.0; co * krows];
            gemm((co, npos, krows), go, false, &cols, true, 0.0, &mut gw);
            let mut gcols = vec![0.0; krows * npos];
            gemm((krows, co, npos), weights.data(), true, go, false, 0.0, &mut gcols);
            let mut gi = vec![0.0; ci * h * w];
            col2im(&gcols, (ci, h, w), geom, (oh, ow), &mut gi);
            (gi, gw)
        })
        .collect();

    let mut grad_w = vec![0.0; co * krows];
    let mut grad_in = Vec::with_capacity(n * ci * h * w);
    for (gi, gw) in per_sample {
        grad_in.extend_from_slice(&gi);
        grad_w.iter_mut().zip(&gw).for_each(|(a, b)| *a += b);
    }
    let mut grad_b = vec![0.0; co];
    for ni in 0..n {
        for (o, plane) in grad_out.sample(ni).chunks(npos).enumerate() {
            grad_b[o] += plane.iter().sum::<f64>();
        }
    }
    Ok(ConvGrads {
        input: Tensor4::new([n, ci, h, w], grad_in)?,
        weights: Tensor4::new(weights.shape(), grad_w)?,
        bias: grad_b,
    })
}

pub fn upsample_nearest(input: &Tensor4, factor: usize) -> Result<Tensor4> {
    if factor == 0 {
        return Err(Error::invalid("upsampling factor must be >= 1"));
    }
    let [n, c, h, w] = input.shape();
    let (oh, ow) = (h * factor, w * factor);
    if h == 0 || w == 0 {
        return Ok(Tensor4::zeros([n, c, oh, ow]));
    }
    let mut data = Vec::with_capacity(n * c * oh * ow);
    for plane in input.data().chunks(h * w) {
        for oy in 0..oh {
            let row = &plane[(oy / factor) * w..(oy / factor + 1) * w];
            for ox in 0..ow {
                data.push(row[ox / factor]);
            }
        }
    }
    Tensor4::new([n, c, oh, ow], data)
}

/// Adjoint of [`upsample_nearest`]: sums each `factor × factor` block.
pub fn upsample_nearest_backward(grad: &Tensor4, factor: usize) -> Result<Tensor4> {
    if factor == 0 {
        return Err(Error::invalid("upsampling factor must be >= 1"));
    }
    let [n, c, oh, ow] = grad.shape();
    if oh % factor != 0 || ow % factor != 0 {
        return Err(Error::shape(format!("{oh}x{ow} is not divisible by factor {factor}")));
    }
    let (h, w) = (oh / factor, ow / factor);
    let mut out = Tensor4::zeros([n, c, h, w]);
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let v = grad.at(ni, ci, oy, ox);
                    let i = out.offset(ni, ci, oy / factor, ox / factor);
                    out.data[i] += v;
                }
            }
        }
    }
    Ok(out)
}

/// Concatenates along the channel axis, `a`'s channels first.
pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    let [na, ca, ha, wa] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::shape(format!(
            "cannot concatenate {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for ni in 0..na {
        data.extend_from_slice(a.sample(ni));
        data.extend_from_slice(b.sample(ni));
    }
    Tensor4::new([na, ca + cb, ha, wa], data)
}
