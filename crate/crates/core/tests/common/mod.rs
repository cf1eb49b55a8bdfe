//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use dpconv::{BinaryMask, ConvGeometry, ConvSpec, Tensor4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

/// Mask with a hole fraction drawn from `[lo, hi)`, pixels chosen uniformly.
pub fn random_mask(h: usize, w: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> BinaryMask {
    let p = rng.gen_range(lo..hi);
    BinaryMask::from_fn(h, w, |_, _| !rng.gen_bool(p))
}

/// Classic partial convolution for dilation 1: gather each window as a
/// vector of `(value, mask)` pairs, then `W·(X⊙M)·(|window| / ΣM) + b`.
pub fn pconv_reference(
    x: &Tensor4,
    masks: &[BinaryMask],
    w: &Tensor4,
    b: &[f64],
    spec: &ConvSpec,
) -> (Tensor4, Vec<BinaryMask>) {
    assert_eq!(spec.dilation, 1);
    let [n, cin, h, wd] = x.shape();
    let (kh, kw) = (spec.kernel_height(), spec.kernel_width());
    let oh = (h + 2 * spec.padding - kh) / spec.stride + 1;
    let ow = (wd + 2 * spec.padding - kw) / spec.stride + 1;
    let cout = w.batch();
    let mut out = Tensor4::zeros([n, cout, oh, ow]);
    let mut out_masks = Vec::new();
    for s in 0..n {
        let mut bits = vec![0u8; oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut patch = Vec::with_capacity(cin * kh * kw);
                let mut valid = 0usize;
                for c in 0..cin {
                    for i in 0..kh {
                        for j in 0..kw {
                            let y = (oy * spec.stride + i) as isize - spec.padding as isize;
                            let xx = (ox * spec.stride + j) as isize - spec.padding as isize;
                            let inside = y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < wd;
                            let m = inside && masks[s].get(y as usize, xx as usize);
                            let v = if m { x.at(s, c, y as usize, xx as usize) } else { 0.0 };
                            if c == 0 && m {
                                valid += 1;
                            }
                            patch.push(v);
                        }
                    }
                }
                bits[oy * ow + ox] = u8::from(valid >= spec.mask_threshold);
                for o in 0..cout {
                    let v = if valid == 0 {
                        0.0
                    } else {
                        let flat = &w.data()[o * cin * kh * kw..(o + 1) * cin * kh * kw];
                        let dot: f64 = flat.iter().zip(&patch).map(|(a, b)| a * b).sum();
                        dot * (kh * kw) as f64 / valid as f64 + b[o]
                    };
                    out.set(s, o, oy, ox, v);
                }
            }
        }
        out_masks.push(BinaryMask::new(oh, ow, bits).unwrap());
    }
    (out, out_masks)
}

/// Literal loops over output position, output channel, input channel and
/// dilated kernel taps.
pub fn triple_loop(
    x: &Tensor4,
    masks: &[BinaryMask],
    w: &Tensor4,
    b: &[f64],
    spec: &ConvSpec,
) -> (Tensor4, Vec<BinaryMask>) {
    let [n, cin, h, wd] = x.shape();
    let (kh, kw, l) = (spec.kernel_height(), spec.kernel_width(), spec.dilation);
    let oh = (h + 2 * spec.padding - l * (kh - 1) - 1) / spec.stride + 1;
    let ow = (wd + 2 * spec.padding - l * (kw - 1) - 1) / spec.stride + 1;
    let cout = w.batch();
    let mut out = Tensor4::zeros([n, cout, oh, ow]);
    let mut out_masks = Vec::new();
    let tap = |s: usize, oy: usize, ox: usize, i: usize, j: usize| -> Option<(usize, usize)> {
        let y = (oy * spec.stride + i * l) as isize - spec.padding as isize;
        let xx = (ox * spec.stride + j * l) as isize - spec.padding as isize;
        if y < 0 || xx < 0 || y as usize >= h || xx as usize >= wd {
            return None;
        }
        masks[s].get(y as usize, xx as usize).then_some((y as usize, xx as usize))
    };
    for s in 0..n {
        let mut bits = vec![0u8; oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m_sum = 0usize;
                for i in 0..kh {
                    for j in 0..kw {
                        m_sum += usize::from(tap(s, oy, ox, i, j).is_some());
                    }
                }
                bits[oy * ow + ox] = u8::from(m_sum >= spec.mask_threshold);
                for o in 0..cout {
                    if m_sum == 0 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for c in 0..cin {
                        for i in 0..kh {
                            for j in 0..kw {
                                if let Some((y, xx)) = tap(s, oy, ox, i, j) {
                                    acc += w.at(o, c, i, j) * x.at(s, c, y, xx);
                                }
                            }
                        }
                    }
                    let z = (kh * kw) as f64 / m_sum as f64;
                    out.set(s, o, oy, ox, z * acc + b[o]);
                }
            }
        }
        out_masks.push(BinaryMask::new(oh, ow, bits).unwrap());
    }
    (out, out_masks)
}

/// Plain convolution with each output scaled by window size over in-bounds
/// taps, then biased. Equals a partial convolution under an all-ones mask.
pub fn border_renormalised_conv(x: &Tensor4, w: &Tensor4, b: &[f64], g: &ConvGeometry) -> Tensor4 {
    let plain = dpconv::conv2d_direct(x, w, &vec![0.0; b.len()], g).unwrap();
    let [_, _, h, wd] = x.shape();
    let [n, cout, oh, ow] = plain.shape();
    let inside = |o: usize, k: usize, size: usize| {
        (0..k)
            .filter(|&i| {
                let p = (o * g.stride + i * g.dilation) as isize - g.padding as isize;
                p >= 0 && (p as usize) < size
            })
            .count()
    };
    Tensor4::from_fn([n, cout, oh, ow], |s, o, y, xx| {
        let taps = inside(y, g.kernel_h, h) * inside(xx, g.kernel_w, wd);
        let z = (g.kernel_h * g.kernel_w) as f64 / taps as f64;
        z * plain.at(s, o, y, xx) + b[o]
    })
}

pub fn max_abs_diff(a: &Tensor4, b: &Tensor4) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random spec, input, masks, weights and bias. `dilated` allows l > 1.
pub struct OperatorCase {
    pub spec: ConvSpec,
    pub input: Tensor4,
    pub masks: Vec<BinaryMask>,
    pub weights: Tensor4,
    pub bias: Vec<f64>,
}

pub fn random_case(rng: &mut ChaCha8Rng, dilated: bool) -> OperatorCase {
    loop {
        let half: usize = rng.gen_range(0..=2);
        let l = if dilated { rng.gen_range(1..=3) } else { 1 };
        let cin = rng.gen_range(1..=3);
        let cout = rng.gen_range(1..=3);
        let stride = rng.gen_range(1..=2);
        let padding = rng.gen_range(0..=half * l + 1);
        let tau = if rng.gen_bool(0.8) { 1 } else { rng.gen_range(1..=(2 * half + 1).pow(2)) };
        let spec = ConvSpec::square(half, cin, cout)
            .with_dilation(l)
            .with_stride(stride)
            .with_padding(padding)
            .with_threshold(tau);
        let (h, w) = (rng.gen_range(3..=11), rng.gen_range(3..=11));
        if spec.validate().is_err() || spec.output_dims(h, w).is_err() {
            continue;
        }
        let n = rng.gen_range(1..=2);
        let input = random_tensor([n, cin, h, w], rng);
        let masks = (0..n).map(|_| random_mask(h, w, 0.0, 0.7, rng)).collect();
        let weights = random_tensor(spec.weight_shape(), rng);
        let bias = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        return OperatorCase {
            spec,
            input,
            masks,
            weights,
            bias,
        };
    }
}
