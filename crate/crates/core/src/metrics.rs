//! Image quality metrics on tensors with values in `[0, 1]`.

use serde::Serialize;

use crate::error::Result;
use crate::tensor::Tensor4;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub l1_percent: f64,
    /// `f64::INFINITY` for identical inputs.
    pub psnr_db: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn evaluate(a: &Tensor4, b: &Tensor4) -> Result<Self> {
        Ok(Self {
            l1_percent: l1_percent(a, b)?,
            psnr_db: psnr(a, b, 1.0)?,
            ssim: ssim(a, b)?,
        })
    }

    /// Element-wise mean; any infinite PSNR makes the mean infinite.
    pub fn mean(reports: &[MetricReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        Some(Self {
            l1_percent: reports.iter().map(|r| r.l1_percent).sum::<f64>() / n,
            psnr_db: reports.iter().map(|r| r.psnr_db).sum::<f64>() / n,
            ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
        })
    }
}

/// `100 · mean|a − b|`.
pub fn l1_percent(a: &Tensor4, b: &Tensor4) -> Result<f64> {
    a.expect_same_shape(b, "second image")?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(100.0 * s / a.len().max(1) as f64)
}

pub fn mse(a: &Tensor4, b: &Tensor4) -> Result<f64> {
    a.expect_same_shape(b, "second image")?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len().max(1) as f64)
}

/// Peak signal-to-noise ratio in dB; infinite when the inputs are equal.
pub fn psnr(a: &Tensor4, b: &Tensor4, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / m).log10()
    })
}

fn gaussian(size: usize) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over all valid window positions, channels and samples. The
/// window shrinks to the image size for images smaller than 11 pixels.
pub fn ssim(a: &Tensor4, b: &Tensor4) -> Result<f64> {
    a.expect_same_shape(b, "second image")?;
    let [n, c, h, w] = a.shape();
    if a.is_empty() {
        return Ok(1.0);
    }
    let (kh, kw) = (SSIM_WINDOW.min(h), SSIM_WINDOW.min(w));
    let (gy, gx) = (gaussian(kh), gaussian(kw));
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let plane = h * w;
    let mut total = 0.0;
    for p in 0..n * c {
        let x = &a.data()[p * plane..(p + 1) * plane];
        let y = &b.data()[p * plane..(p + 1) * plane];
        // horizontal pass of the five weighted moments
        let mut horiz = vec![[0.0f64; 5]; h * ow];
        for r in 0..h {
            for ox in 0..ow {
                let mut acc = [0.0; 5];
                for (k, &g) in gx.iter().enumerate() {
                    let (u, v) = (x[r * w + ox + k], y[r * w + ox + k]);
                    acc[0] += g * u;
                    acc[1] += g * v;
                    acc[2] += g * u * u;
                    acc[3] += g * v * v;
                    acc[4] += g * (u * v);
                }
                horiz[r * ow + ox] = acc;
            }
        }
        let mut sum = 0.0;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = [0.0; 5];
                for (k, &g) in gy.iter().enumerate() {
                    let hv = &horiz[(oy + k) * ow + ox];
                    for (mi, hi) in m.iter_mut().zip(hv) {
                        *mi += g * hi;
                    }
                }
                let [mx, my, xx, yy, xy] = m;
                // grouped so that swapping the inputs is bit-exact
                let mean_sq = mx * mx + my * my;
                let var_sum = (xx + yy) - mean_sq;
                let cov = xy - mx * my;
                sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mean_sq + c1) * (var_sum + c2));
            }
        }
        total += sum / (oh * ow) as f64;
    }
    Ok(total / (n * c) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], seed: u64) -> Tensor4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn l1_examples() {
        let a = random([1, 3, 8, 8], 1);
        assert_eq!(l1_percent(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 0.01);
        assert!((l1_percent(&a, &b).unwrap() - 1.0).abs() < 1e-9);
        let z = Tensor4::zeros([1, 1, 10, 10]);
        let ten = Tensor4::from_fn([1, 1, 10, 10], |_, _, y, _| f64::from(u8::from(y == 0)));
        assert_eq!(l1_percent(&z, &ten).unwrap(), 10.0);
    }

    #[test]
    fn psnr_examples() {
        let a = Tensor4::filled([1, 1, 4, 4], 0.2);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let c = a.map(|v| v + 0.5);
        assert!((psnr(&a, &c, 1.0).unwrap() - 6.020599913279624).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_and_constants() {
        let a = random([2, 3, 16, 16], 2);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        // constant images: only the luminance term differs from 1
        let x = Tensor4::filled([1, 1, 16, 16], 0.5);
        let y = Tensor4::filled([1, 1, 16, 16], 0.6);
        let c1 = 1e-4;
        let expected = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
        assert!((ssim(&x, &y).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.983_609_2).abs() < 1e-6);
    }

    #[test]
    fn ssim_small_images_use_clipped_window() {
        let a = random([1, 1, 5, 7], 3);
        let b = random([1, 1, 5, 7], 4);
        let s = ssim(&a, &b).unwrap();
        assert!(s.is_finite() && s < 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn ssim_symmetric_and_bounded(seed in any::<u64>()) {
            let a = random([1, 2, 13, 12], seed);
            let b = random([1, 2, 13, 12], seed ^ 0xABCD);
            let (s1, s2) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
            prop_assert_eq!(s1, s2);
            prop_assert!((-1.0..1.0).contains(&s1));
        }

        #[test]
        fn translation_consistent(seed in any::<u64>(), shift in 0u32..64) {
            // dyadic values keep the shifted arithmetic exact
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor4::from_fn([1, 3, 6, 6], |_, _, _, _| f64::from(rng.gen_range(0u32..128)) / 256.0);
            let b = Tensor4::from_fn([1, 3, 6, 6], |_, _, _, _| f64::from(rng.gen_range(0u32..128)) / 256.0);
            let c = f64::from(shift) / 256.0;
            let (a2, b2) = (a.map(|v| v + c), b.map(|v| v + c));
            prop_assert_eq!(l1_percent(&a, &b).unwrap(), l1_percent(&a2, &b2).unwrap());
            prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&a2, &b2, 1.0).unwrap());
        }
    }
}
