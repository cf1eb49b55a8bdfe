//! Inpainting losses and their gradients.
//!
//! Per-image losses are averaged over the batch. Gradients are returned
//! with respect to the generator output; terms defined on the composite
//! image go through [`composite_backward`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::tensor::{check_masks, mask_for, BinaryMask, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub pixel: f64,
    pub style: f64,
    pub adv: f64,
    pub tv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pixel: 10.0,
            style: 120.0,
            adv: 1e-3,
            tv: 1e-4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.pixel, self.style, self.adv, self.tv];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!("loss weights must be finite and nonnegative: {self:?}")));
        }
        Ok(())
    }
}

/// Unweighted values of the four generator loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub pixel: f64,
    pub style: f64,
    pub adv: f64,
    pub tv: f64,
}

/// Weighted terms and their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pixel: f64,
    pub style: f64,
    pub adv: f64,
    pub tv: f64,
    pub total: f64,
}

pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> LossBreakdown {
    let pixel = weights.pixel * parts.pixel;
    let style = weights.style * parts.style;
    let adv = weights.adv * parts.adv;
    let tv = weights.tv * parts.tv;
    LossBreakdown {
        pixel,
        style,
        adv,
        tv,
        total: pixel + style + adv + tv,
    }
}

/// Valid pixels from `gt`, hole pixels from `out`.
pub fn composite_image(out: &Tensor4, gt: &Tensor4, masks: &[BinaryMask]) -> Result<Tensor4> {
    out.expect_same_shape(gt, "ground truth")?;
    check_masks(out, masks)?;
    let mut comp = out.clone();
    let plane = out.height() * out.width();
    let c = out.channels();
    for n in 0..out.batch() {
        let bits = mask_for(masks, n).bits();
        let src = gt.sample(n);
        let dst = comp.sample_mut(n);
        for ch in 0..c {
            let range = ch * plane..(ch + 1) * plane;
            for ((d, s), &b) in dst[range.clone()].iter_mut().zip(&src[range]).zip(bits) {
                if b == 1 {
                    *d = *s;
                }
            }
        }
    }
    Ok(comp)
}

/// Gradient of the composite with respect to `out`: zero at valid pixels.
pub fn composite_backward(grad_comp: &Tensor4, masks: &[BinaryMask]) -> Result<Tensor4> {
    grad_comp.apply_masks(&masks.iter().map(BinaryMask::invert).collect::<Vec<_>>())
}

/// ℓ1 over holes plus ℓ1 over valid pixels, divided by `C·H·W`. The two
/// regions partition the image, so the value does not depend on the mask.
pub fn pixel_loss(out: &Tensor4, gt: &Tensor4, masks: &[BinaryMask]) -> Result<f64> {
    Ok(pixel_loss_grad(out, gt, masks)?.0)
}

pub fn pixel_loss_grad(out: &Tensor4, gt: &Tensor4, masks: &[BinaryMask]) -> Result<(f64, Tensor4)> {
    out.expect_same_shape(gt, "ground truth")?;
    check_masks(out, masks)?;
    let plane = out.height() * out.width();
    let norm = (out.sample_len() * out.batch()) as f64;
    let (mut hole, mut valid) = (0.0, 0.0);
    for n in 0..out.batch() {
        let bits = mask_for(masks, n).bits();
        for (i, (o, g)) in out.sample(n).iter().zip(gt.sample(n)).enumerate() {
            let d = (o - g).abs();
            if bits[i % plane] == 1 {
                valid += d;
            } else {
                hole += d;
            }
        }
    }
    let grad = out.zip_map(gt, |o, g| sign(o - g) / norm)?;
    Ok(((hole + valid) / norm, grad))
}

/// Gram matrix of every sample: `(n, 1, C, C)` with `G = Ψ Ψᵀ` over the
/// flattened spatial positions.
pub fn gram(features: &Tensor4) -> Tensor4 {
    let [n, c, h, w] = features.shape();
    let hw = h * w;
    let mut out = Tensor4::zeros([n, 1, c, c]);
    for s in 0..n {
        let f = features.sample(s);
        let g = out.sample_mut(s);
        for i in 0..c {
            let fi = &f[i * hw..(i + 1) * hw];
            for j in i..c {
                let fj = &f[j * hw..(j + 1) * hw];
                let v: f64 = fi.iter().zip(fj).map(|(a, b)| a * b).sum();
                g[i * c + j] = v;
                g[j * c + i] = v;
            }
        }
    }
    out
}

/// Style term of one image against the ground truth features.
/// Returns the value and the gradient with respect to that image.
fn style_term(
    extractor: &dyn FeatureExtractor,
    image: &Tensor4,
    gt_grams: &[Tensor4],
) -> Result<(f64, Tensor4)> {
    let feats = extractor.forward(image)?;
    if feats.levels.len() != gt_grams.len() {
        return Err(Error::shape("extractor returned a different number of levels"));
    }
    let batch = image.batch() as f64;
    let mut value = 0.0;
    let mut level_grads = Vec::with_capacity(feats.levels.len());
    for (psi, g_gt) in feats.levels.iter().zip(gt_grams) {
        let [n, c, h, w] = psi.shape();
        let hw = h * w;
        let k = 1.0 / (c * hw) as f64;
        let scale = k / (c * c) as f64;
        let g = gram(psi);
        let mut grad = Tensor4::zeros(psi.shape());
        for s in 0..n {
            // dL/dΨ = 2·S·Ψ with S = scale·sign(G − G_gt), symmetric
            let sgn: Vec<f64> = g
                .sample(s)
                .iter()
                .zip(g_gt.sample(s))
                .map(|(a, b)| {
                    value += scale * (a - b).abs() / batch;
                    sign(a - b)
                })
                .collect();
            let f = psi.sample(s);
            let gs = grad.sample_mut(s);
            for i in 0..c {
                let gi = &mut gs[i * hw..(i + 1) * hw];
                for j in 0..c {
                    let sij = sgn[i * c + j];
                    if sij == 0.0 {
                        continue;
                    }
                    let coef = 2.0 * scale * sij / batch;
                    for (d, v) in gi.iter_mut().zip(&f[j * hw..(j + 1) * hw]) {
                        *d += coef * v;
                    }
                }
            }
        }
        level_grads.push(grad);
    }
    let grad = extractor.backward(&feats, &level_grads)?;
    Ok((value, grad))
}

fn gt_grams(extractor: &dyn FeatureExtractor, gt: &Tensor4) -> Result<Vec<Tensor4>> {
    Ok(extractor.forward(gt)?.levels.iter().map(gram).collect())
}

pub fn style_loss(out: &Tensor4, comp: &Tensor4, gt: &Tensor4, extractor: &dyn FeatureExtractor) -> Result<f64> {
    Ok(style_loss_grad(out, comp, gt, extractor)?.0)
}

/// Returns the value, the gradient with respect to `out` (direct term
/// only) and the gradient with respect to `comp`.
pub fn style_loss_grad(
    out: &Tensor4,
    comp: &Tensor4,
    gt: &Tensor4,
    extractor: &dyn FeatureExtractor,
) -> Result<(f64, Tensor4, Tensor4)> {
    out.expect_same_shape(gt, "ground truth")?;
    comp.expect_same_shape(gt, "composite")?;
    let grams = gt_grams(extractor, gt)?;
    let (v_out, g_out) = style_term(extractor, out, &grams)?;
    let (v_comp, g_comp) = style_term(extractor, comp, &grams)?;
    Ok((v_out + v_comp, g_out, g_comp))
}

/// Hole pixels dilated by one pixel in the 8-neighbourhood.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DilatedHoleRegion {
    height: usize,
    width: usize,
    inside: Vec<bool>,
}

impl DilatedHoleRegion {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let (h, w) = (mask.height(), mask.width());
        let mut inside = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                if mask.get(y, x) {
                    continue;
                }
                for yy in y.saturating_sub(1)..(y + 2).min(h) {
                    for xx in x.saturating_sub(1)..(x + 2).min(w) {
                        inside[yy * w + xx] = true;
                    }
                }
            }
        }
        Self { height: h, width: w, inside }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let inside = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self { height, width, inside }
    }

    #[inline]
    pub fn contains(&self, y: usize, x: usize) -> bool {
        self.inside[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn tv_loss(comp: &Tensor4, regions: &[DilatedHoleRegion]) -> Result<f64> {
    Ok(tv_loss_grad(comp, regions)?.0)
}

/// ℓ1 differences between horizontally and vertically adjacent pixels that
/// both lie in the region, divided by `C·H·W`. One region per sample, or
/// one shared by the batch.
pub fn tv_loss_grad(comp: &Tensor4, regions: &[DilatedHoleRegion]) -> Result<(f64, Tensor4)> {
    let [n, c, h, w] = comp.shape();
    if regions.len() != 1 && regions.len() != n {
        return Err(Error::shape(format!("{} regions for a batch of {n}", regions.len())));
    }
    if regions.iter().any(|r| r.height != h || r.width != w) {
        return Err(Error::shape(format!("region does not match image {h}x{w}")));
    }
    let norm = (c * h * w) as f64 * n as f64;
    let mut value = 0.0;
    let mut grad = Tensor4::zeros(comp.shape());
    for s in 0..n {
        let r = if regions.len() == 1 { &regions[0] } else { &regions[s] };
        let img = comp.sample(s);
        let g = grad.sample_mut(s);
        for ch in 0..c {
            let base = ch * h * w;
            for y in 0..h {
                for x in 0..w {
                    if !r.contains(y, x) {
                        continue;
                    }
                    let i = base + y * w + x;
                    let mut pair = |j: usize| {
                        let d = img[j] - img[i];
                        value += d.abs();
                        g[j] += sign(d) / norm;
                        g[i] -= sign(d) / norm;
                    };
                    if x + 1 < w && r.contains(y, x + 1) {
                        pair(i + 1);
                    }
                    if y + 1 < h && r.contains(y + 1, x) {
                        pair(i + w);
                    }
                }
            }
        }
    }
    Ok((value / norm, grad))
}

/// Least-squares generator loss `mean((s − 1)²)` and its gradient.
pub fn adv_loss_g(fake_scores: &Tensor4) -> (f64, Tensor4) {
    squared_error_to(fake_scores, &vec![1.0; fake_scores.batch()])
}

/// Least-squares discriminator loss `mean(fake²) + mean((real − 1)²)`.
pub fn adv_loss_d(fake_scores: &Tensor4, real_scores: &Tensor4) -> f64 {
    adv_loss_d_targets(fake_scores, &vec![0.0; fake_scores.batch()], real_scores, &vec![1.0; real_scores.batch()])
        .0
}

/// Discriminator loss against per-sample targets (smoothed or flipped
/// labels). Returns the value and the gradients for the fake and real
/// score maps.
pub fn adv_loss_d_targets(
    fake_scores: &Tensor4,
    fake_targets: &[f64],
    real_scores: &Tensor4,
    real_targets: &[f64],
) -> (f64, Tensor4, Tensor4) {
    let (vf, gf) = squared_error_to(fake_scores, fake_targets);
    let (vr, gr) = squared_error_to(real_scores, real_targets);
    (vf + vr, gf, gr)
}

/// `mean((s − t_n)²)` where every score of sample `n` shares target `t_n`.
fn squared_error_to(scores: &Tensor4, targets: &[f64]) -> (f64, Tensor4) {
    assert_eq!(targets.len(), scores.batch(), "one target per sample");
    let count = scores.len().max(1) as f64;
    let per = scores.sample_len();
    let mut value = 0.0;
    let mut grad = scores.clone();
    for (i, g) in grad.data_mut().iter_mut().enumerate() {
        let d = *g - targets[i / per.max(1)];
        value += d * d;
        *g = 2.0 * d / count;
    }
    (value / count, grad)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ConvFeatureExtractor, IdentityExtractor};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: [usize; 4], v: &[f64]) -> Tensor4 {
        Tensor4::new(shape, v.to_vec()).unwrap()
    }

    fn random(shape: [usize; 4], seed: u64) -> Tensor4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    fn random_mask(h: usize, w: usize, seed: u64) -> BinaryMask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(0.5))
    }

    #[test]
    fn composite_sources() {
        let out = random([1, 2, 4, 4], 1);
        let gt = random([1, 2, 4, 4], 2);
        assert_eq!(composite_image(&out, &gt, &[BinaryMask::ones(4, 4)]).unwrap(), gt);
        assert_eq!(composite_image(&out, &gt, &[BinaryMask::zeros(4, 4)]).unwrap(), out);
        let checker = BinaryMask::from_fn(4, 4, |y, x| (y + x) % 2 == 0);
        let comp = composite_image(&out, &gt, &[checker.clone()]).unwrap();
        for c in 0..2 {
            for y in 0..4 {
                for x in 0..4 {
                    let src = if checker.get(y, x) { &gt } else { &out };
                    assert_eq!(comp.at(0, c, y, x), src.at(0, c, y, x));
                }
            }
        }
    }

    #[test]
    fn pixel_loss_examples() {
        let gt = Tensor4::zeros([1, 1, 2, 2]);
        let out = t([1, 1, 2, 2], &[1.0, 0.0, 0.0, 2.0]);
        for seed in 0..4 {
            let m = random_mask(2, 2, seed);
            assert!((pixel_loss(&out, &gt, &[m]).unwrap() - 0.75).abs() < 1e-15);
        }
        let gt = random([2, 3, 5, 5], 3);
        assert_eq!(pixel_loss(&gt, &gt, &[BinaryMask::ones(5, 5)]).unwrap(), 0.0);
        let shifted = gt.map(|v| v - 0.3);
        let l = pixel_loss(&shifted, &gt, &[random_mask(5, 5, 1), random_mask(5, 5, 2)]).unwrap();
        assert!((l - 0.3).abs() < 1e-12);
    }

    #[test]
    fn gram_examples() {
        assert_eq!(gram(&Tensor4::zeros([1, 3, 2, 2])).data(), &[0.0; 9]);
        let one = t([1, 1, 1, 3], &[1.0, 2.0, 2.0]);
        assert_eq!(gram(&one).data(), &[9.0]);
        let two = t([1, 2, 1, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(gram(&two).data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn gram_is_symmetric_psd() {
        for seed in 0..10 {
            let f = random([1, 4, 3, 3], seed);
            let g = gram(&f);
            let d = g.data();
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(d[i * 4 + j], d[j * 4 + i]);
                }
            }
            // xᵀGx = ‖Ψᵀx‖² ≥ 0 for random directions
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..50 {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let q: f64 = (0..16).map(|k| x[k / 4] * d[k] * x[k % 4]).sum();
                assert!(q >= -1e-10);
            }
        }
    }

    #[test]
    fn style_loss_examples() {
        let gt = random([1, 3, 8, 8], 4);
        let ext = ConvFeatureExtractor::test_extractor(3);
        assert_eq!(style_loss(&gt, &gt, &gt, &ext).unwrap(), 0.0);
        let gt = t([1, 1, 1, 2], &[1.0, 0.0]);
        let out = t([1, 1, 1, 2], &[0.0, 1.0]);
        assert_eq!(style_loss(&out, &out, &gt, &IdentityExtractor).unwrap(), 0.0);
        let out = t([1, 1, 1, 2], &[0.0, 2.0]);
        // G_out = 4, G_gt = 1, K = 1/2, C = 1: |1/2 · 3| twice
        assert_eq!(style_loss(&out, &out, &gt, &IdentityExtractor).unwrap(), 3.0);
    }

    #[test]
    fn tv_examples() {
        let img = t([1, 1, 1, 3], &[0.0, 4.0, 0.0]);
        let all = DilatedHoleRegion::from_fn(1, 3, |_, _| true);
        assert!((tv_loss(&img, &[all]).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        let flat = Tensor4::filled([1, 3, 6, 6], 0.7);
        let r = DilatedHoleRegion::from_mask(&random_mask(6, 6, 9));
        assert_eq!(tv_loss(&flat, &[r]).unwrap(), 0.0);
        let empty = DilatedHoleRegion::from_mask(&BinaryMask::ones(6, 6));
        assert!(empty.is_empty());
        assert_eq!(tv_loss(&random([1, 3, 6, 6], 2), &[empty]).unwrap(), 0.0);
    }

    #[test]
    fn region_is_one_pixel_dilation() {
        let mask = BinaryMask::from_fn(5, 5, |y, x| !(y == 0 && x == 0) && !(y == 3 && x == 3));
        let r = DilatedHoleRegion::from_mask(&mask);
        assert_eq!(r.len(), 4 + 9);
        assert!(r.contains(1, 1) && r.contains(4, 4) && r.contains(2, 2));
        assert!(!r.contains(0, 2) && !r.contains(1, 2));
    }

    fn brute_tv(img: &Tensor4, r: &DilatedHoleRegion) -> f64 {
        let [_, c, h, w] = img.shape();
        let mut pairs = Vec::new();
        for y in 0..h {
            for x in 0..w {
                for (dy, dx) in [(0, 1), (1, 0)] {
                    let (y2, x2) = (y + dy, x + dx);
                    if y2 < h && x2 < w && r.contains(y, x) && r.contains(y2, x2) {
                        pairs.push(((y, x), (y2, x2)));
                    }
                }
            }
        }
        let mut s = 0.0;
        for ch in 0..c {
            for &((y1, x1), (y2, x2)) in &pairs {
                s += (img.at(0, ch, y1, x1) - img.at(0, ch, y2, x2)).abs();
            }
        }
        s / (c * h * w) as f64
    }

    #[test]
    fn tv_matches_pair_enumeration() {
        for seed in 0..20 {
            let img = random([1, 2, 7, 9], seed);
            let r = DilatedHoleRegion::from_mask(&random_mask(7, 9, seed + 50));
            assert!((tv_loss(&img, &[r.clone()]).unwrap() - brute_tv(&img, &r)).abs() < 1e-12);
        }
    }

    #[test]
    fn adversarial_examples() {
        let s = |v: &[f64]| t([1, 1, 1, v.len()], v);
        assert_eq!(adv_loss_g(&s(&[1.0, 1.0])).0, 0.0);
        assert_eq!(adv_loss_g(&s(&[0.0, 0.0])).0, 1.0);
        assert_eq!(adv_loss_g(&s(&[0.5, 1.5])).0, 0.25);
        assert_eq!(adv_loss_d(&s(&[0.0]), &s(&[1.0])), 0.0);
        assert_eq!(adv_loss_d(&s(&[1.0]), &s(&[0.0])), 2.0);
        assert_eq!(adv_loss_d(&s(&[0.5]), &s(&[0.5])), 0.5);
    }

    #[test]
    fn total_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossParts::default(), &w).total, 0.0);
        let p = LossParts { pixel: 1.0, ..Default::default() };
        assert_eq!(total_loss(&p, &w).total, 10.0);
        let p = LossParts { pixel: 0.1, style: 0.01, adv: 2.0, tv: 5.0 };
        let b = total_loss(&p, &w);
        assert!((b.total - 2.2025).abs() < 1e-12);
        assert!((b.style - 1.2).abs() < 1e-12);
        assert!(LossWeights { tv: -1.0, ..w }.validate().is_err());
    }

    /// Central differences of `f` at every element of `x`.
    fn numeric_grad(x: &Tensor4, f: impl Fn(&Tensor4) -> f64) -> Tensor4 {
        let eps = 1e-5;
        let mut g = Tensor4::zeros(x.shape());
        for i in 0..x.len() {
            let mut p = x.clone();
            p.data_mut()[i] += eps;
            let mut m = x.clone();
            m.data_mut()[i] -= eps;
            g.data_mut()[i] = (f(&p) - f(&m)) / (2.0 * eps);
        }
        g
    }

    fn assert_close(a: &Tensor4, n: &Tensor4) {
        for (x, y) in a.data().iter().zip(n.data()) {
            let rel = (x - y).abs() / x.abs().max(y.abs()).max(1e-6);
            assert!(rel < 1e-4, "analytic {x} numeric {y}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let shape = [2, 3, 8, 8];
        let out = random(shape, 10);
        let gt = random(shape, 11);
        let masks = vec![random_mask(8, 8, 12), random_mask(8, 8, 13)];
        let ext = ConvFeatureExtractor::test_extractor(3);

        let (_, g) = pixel_loss_grad(&out, &gt, &masks).unwrap();
        assert_close(&g, &numeric_grad(&out, |o| pixel_loss(o, &gt, &masks).unwrap()));

        let style_of = |o: &Tensor4| {
            let comp = composite_image(o, &gt, &masks).unwrap();
            style_loss(o, &comp, &gt, &ext).unwrap()
        };
        let comp = composite_image(&out, &gt, &masks).unwrap();
        let (_, g_out, g_comp) = style_loss_grad(&out, &comp, &gt, &ext).unwrap();
        let mut g = composite_backward(&g_comp, &masks).unwrap();
        g.add_assign(&g_out).unwrap();
        assert_close(&g, &numeric_grad(&out, style_of));

        let regions: Vec<_> = masks.iter().map(DilatedHoleRegion::from_mask).collect();
        let tv_of = |o: &Tensor4| tv_loss(&composite_image(o, &gt, &masks).unwrap(), &regions).unwrap();
        let (_, g_comp) = tv_loss_grad(&comp, &regions).unwrap();
        assert_close(&composite_backward(&g_comp, &masks).unwrap(), &numeric_grad(&out, tv_of));

        let scores = random([2, 1, 3, 3], 14);
        let (_, g) = adv_loss_g(&scores);
        assert_close(&g, &numeric_grad(&scores, |s| adv_loss_g(s).0));
        let real = random([2, 1, 3, 3], 15);
        let (_, gf, gr) = adv_loss_d_targets(&scores, &[0.1, 0.2], &real, &[0.9, 1.1]);
        assert_close(&gf, &numeric_grad(&scores, |s| adv_loss_d_targets(s, &[0.1, 0.2], &real, &[0.9, 1.1]).0));
        assert_close(&gr, &numeric_grad(&real, |r| adv_loss_d_targets(&scores, &[0.1, 0.2], r, &[0.9, 1.1]).0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn losses_are_nonnegative(seed in any::<u64>()) {
            let out = random([1, 3, 8, 8], seed);
            let gt = random([1, 3, 8, 8], seed ^ 1);
            let m = random_mask(8, 8, seed ^ 2);
            let comp = composite_image(&out, &gt, &[m.clone()]).unwrap();
            let ext = ConvFeatureExtractor::test_extractor(3);
            prop_assert!(pixel_loss(&out, &gt, &[m.clone()]).unwrap() >= 0.0);
            prop_assert!(style_loss(&out, &comp, &gt, &ext).unwrap() >= 0.0);
            prop_assert!(tv_loss(&comp, &[DilatedHoleRegion::from_mask(&m)]).unwrap() >= 0.0);
            prop_assert!(adv_loss_d(&out, &gt) >= 0.0);
        }
    }
}
