//! Finite-difference checks of every hand-written gradient.
//!
//! Each operator is evaluated on randomized small configurations (masks
//! with 10–60 % holes); the analytic gradient is compared against central
//! differences with step `1e-5` using the relative error
//! `|a − n| / max(|a|, |n|, 1e-6)`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dpconv::{dpconv_backward, dpconv_forward_batch, ConvSpec, DpConvContext};
use crate::error::{Error, Result};
use crate::features::{ConvFeatureExtractor, FeatureExtractor};
use crate::loss::{
    adv_loss_d_targets, adv_loss_g, composite_backward, composite_image, gram, pixel_loss_grad, style_loss_grad,
    tv_loss_grad, DilatedHoleRegion,
};
use crate::net::SelfAttention;
use crate::tensor::{BinaryMask, Tensor4};

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operator {
    DpConv,
    Attention,
    Pixel,
    Style,
    Tv,
    AdvG,
    AdvD,
}

impl Operator {
    pub const ALL: [Operator; 7] = [
        Operator::DpConv,
        Operator::Attention,
        Operator::Pixel,
        Operator::Style,
        Operator::Tv,
        Operator::AdvG,
        Operator::AdvD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::DpConv => "dpconv",
            Operator::Attention => "attention",
            Operator::Pixel => "pixel",
            Operator::Style => "style",
            Operator::Tv => "tv",
            Operator::AdvG => "adv_g",
            Operator::AdvD => "adv_d",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Operator::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown operator '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub seed: u64,
    /// Scales the analytic gradient of one operator by `1.01`; used to
    /// confirm that the check can fail.
    pub fault: Option<Operator>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorReport {
    pub operator: Operator,
    pub trials: usize,
    pub max_rel_error: f64,
}

impl OperatorReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Largest relative error between `analytic` and central differences of
/// `f` around `point`.
pub fn compare_gradient(analytic: &[f64], point: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    compare_gradient_piecewise(analytic, point, f, |_| ())
}

/// Like [`compare_gradient`] for piecewise smooth `f`. `piece` identifies
/// the smooth piece containing a point; coordinates whose `±FD_STEP` probes
/// land on different pieces straddle a kink and are skipped.
pub fn compare_gradient_piecewise<P: PartialEq>(
    analytic: &[f64],
    point: &[f64],
    f: impl Fn(&[f64]) -> f64,
    piece: impl Fn(&[f64]) -> P,
) -> f64 {
    assert_eq!(analytic.len(), point.len());
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let up = f(&x);
        let piece_up = piece(&x);
        x[i] = orig - FD_STEP;
        let down = f(&x);
        let piece_down = piece(&x);
        x[i] = orig;
        if piece_up != piece_down {
            continue;
        }
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

/// Bernoulli mask with a hole probability drawn from `[0.1, 0.6]`.
pub fn random_hole_mask(h: usize, w: usize, rng: &mut ChaCha8Rng) -> BinaryMask {
    let p = rng.gen_range(0.1..0.6);
    BinaryMask::from_fn(h, w, |_, _| !rng.gen_bool(p))
}

fn with_data(t: &Tensor4, data: &[f64]) -> Tensor4 {
    Tensor4::new(t.shape(), data.to_vec()).expect("same length")
}

fn dot(a: &Tensor4, b: &Tensor4) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn dpconv_trial(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let half = rng.gen_range(0..=2);
    let dilation = rng.gen_range(1..=3);
    let stride = rng.gen_range(1..=2);
    let (cin, cout) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let spec = ConvSpec::square(half, cin, cout)
        .with_dilation(dilation)
        .with_stride(stride)
        .with_padding(rng.gen_range(0..=dilation * half));
    let extent = dilation * 2 * half + 1;
    let (h, w) = (rng.gen_range(extent.max(4)..extent.max(4) + 5), rng.gen_range(extent.max(4)..extent.max(4) + 5));
    let n = rng.gen_range(1..=2);
    let x = random_tensor([n, cin, h, w], rng);
    let wts = random_tensor(spec.weight_shape(), rng);
    let bias: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let masks: Vec<BinaryMask> = (0..n).map(|_| random_hole_mask(h, w, rng)).collect();
    let fwd = dpconv_forward_batch(&x, &masks, &wts, &bias, &spec)?;
    let r = random_tensor(fwd.output.shape(), rng);
    let g = dpconv_backward(
        &r,
        &DpConvContext {
            input: &x,
            masks: &masks,
            stats: &fwd.stats,
            weights: &wts,
            spec: &spec,
        },
    )?;
    let objective = |x: &Tensor4, wts: &Tensor4, bias: &[f64]| {
        dot(&dpconv_forward_batch(x, &masks, wts, bias, &spec).expect("valid").output, &r)
    };
    let e_in = compare_gradient(&g.input.scale(scale).into_data(), x.data(), |d| {
        objective(&with_data(&x, d), &wts, &bias)
    });
    let e_w = compare_gradient(&g.weights.scale(scale).into_data(), wts.data(), |d| {
        objective(&x, &with_data(&wts, d), &bias)
    });
    let gb: Vec<f64> = g.bias.iter().map(|v| v * scale).collect();
    let e_b = compare_gradient(&gb, &bias, |d| objective(&x, &wts, d));
    Ok(e_in.max(e_w).max(e_b))
}

fn attention_trial(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let c = [4usize, 8, 16][rng.gen_range(0..3)];
    let (h, w) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
    let n = rng.gen_range(1..=2);
    let mut att = SelfAttention::new(c, rng.gen_range(-1.0..1.0), rng);
    for b in att
        .query_bias
        .iter_mut()
        .chain(&mut att.key_bias)
        .chain(&mut att.value_bias)
    {
        *b = rng.gen_range(-0.5..0.5);
    }
    let x = random_tensor([n, c, h, w], rng);
    let (y, cache) = att.forward(&x)?;
    let r = random_tensor(y.shape(), rng);
    let g = att.backward(&cache, &r)?;
    let eval = |a: &SelfAttention, x: &Tensor4| dot(&a.forward(x).expect("valid").0, &r);

    let mut worst = compare_gradient(&g.input.scale(scale).into_data(), x.data(), |d| eval(&att, &with_data(&x, d)));
    let params: [(&Tensor4, fn(&mut SelfAttention) -> &mut Tensor4); 3] = [
        (&g.query, |a| &mut a.query),
        (&g.key, |a| &mut a.key),
        (&g.value, |a| &mut a.value),
    ];
    for (grad, field) in params {
        let mut probe = att.clone();
        let point = field(&mut probe).data().to_vec();
        worst = worst.max(compare_gradient(&grad.scale(scale).into_data(), &point, |d| {
            let mut a = att.clone();
            field(&mut a).data_mut().copy_from_slice(d);
            eval(&a, &x)
        }));
    }
    // Adding a constant to a row of scores leaves the softmax unchanged,
    // so the key bias gradient is exactly zero and differences of it are
    // pure rounding noise.
    if g.key_bias.iter().any(|v| v.abs() > 1e-12) {
        worst = worst.max(g.key_bias.iter().fold(0.0f64, |m, v| m.max(v.abs())) / REL_FLOOR);
    }
    let biases: [(&Vec<f64>, fn(&mut SelfAttention) -> &mut Vec<f64>); 2] = [
        (&g.query_bias, |a| &mut a.query_bias),
        (&g.value_bias, |a| &mut a.value_bias),
    ];
    for (grad, field) in biases {
        let mut probe = att.clone();
        let point = field(&mut probe).clone();
        let scaled: Vec<f64> = grad.iter().map(|v| v * scale).collect();
        worst = worst.max(compare_gradient(&scaled, &point, |d| {
            let mut a = att.clone();
            field(&mut a).copy_from_slice(d);
            eval(&a, &x)
        }));
    }
    worst = worst.max(compare_gradient(&[g.gamma * scale], &[att.gamma], |d| {
        let mut a = att.clone();
        a.gamma = d[0];
        eval(&a, &x)
    }));
    Ok(worst)
}

struct LossCase {
    out: Tensor4,
    gt: Tensor4,
    masks: Vec<BinaryMask>,
}

fn loss_case(rng: &mut ChaCha8Rng) -> LossCase {
    let n = rng.gen_range(1..=2);
    let (h, w) = (rng.gen_range(6..=10), rng.gen_range(6..=10));
    let out = random_tensor([n, 3, h, w], rng);
    let gt = random_tensor([n, 3, h, w], rng);
    let masks = (0..n).map(|_| random_hole_mask(h, w, rng)).collect();
    LossCase { out, gt, masks }
}

fn pixel_trial(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let c = loss_case(rng);
    let (_, g) = pixel_loss_grad(&c.out, &c.gt, &c.masks)?;
    Ok(compare_gradient(&g.scale(scale).into_data(), c.out.data(), |d| {
        pixel_loss_grad(&with_data(&c.out, d), &c.gt, &c.masks).expect("valid").0
    }))
}

fn style_trial(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let c = loss_case(rng);
    let ext = ConvFeatureExtractor::test_extractor(3);
    let comp = composite_image(&c.out, &c.gt, &c.masks)?;
    let (_, g_out, g_comp) = style_loss_grad(&c.out, &comp, &c.gt, &ext)?;
    let mut g = composite_backward(&g_comp, &c.masks)?;
    g.add_assign(&g_out)?;
    let gt_grams: Vec<Tensor4> = ext.forward(&c.gt)?.levels.iter().map(gram).collect();
    // The style distance is L1 over Gram entries; its pieces are the sign
    // patterns of the Gram differences.
    let signs = |img: &Tensor4| -> Vec<bool> {
        let feats = ext.forward(img).expect("valid");
        feats
            .levels
            .iter()
            .zip(&gt_grams)
            .flat_map(|(psi, g)| gram(psi).data().iter().zip(g.data()).map(|(a, b)| a > b).collect::<Vec<_>>())
            .collect()
    };
    Ok(compare_gradient_piecewise(
        &g.scale(scale).into_data(),
        c.out.data(),
        |d| {
            let out = with_data(&c.out, d);
            let comp = composite_image(&out, &c.gt, &c.masks).expect("valid");
            style_loss_grad(&out, &comp, &c.gt, &ext).expect("valid").0
        },
        |d| {
            let out = with_data(&c.out, d);
            let comp = composite_image(&out, &c.gt, &c.masks).expect("valid");
            (signs(&out), signs(&comp))
        },
    ))
}

fn tv_trial(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let c = loss_case(rng);
    let regions: Vec<DilatedHoleRegion> = c.masks.iter().map(DilatedHoleRegion::from_mask).collect();
    let comp = composite_image(&c.out, &c.gt, &c.masks)?;
    let (_, g_comp) = tv_loss_grad(&comp, &regions)?;
    let g = composite_backward(&g_comp, &c.masks)?;
    Ok(compare_gradient(&g.scale(scale).into_data(), c.out.data(), |d| {
        let comp = composite_image(&with_data(&c.out, d), &c.gt, &c.masks).expect("valid");
        tv_loss_grad(&comp, &regions).expect("valid").0
    }))
}

fn adv_g_trial(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let n = rng.gen_range(1..=3);
    let s = random_tensor([n, 1, rng.gen_range(1..=4), rng.gen_range(1..=4)], rng);
    let (_, g) = adv_loss_g(&s);
    Ok(compare_gradient(&g.scale(scale).into_data(), s.data(), |d| adv_loss_g(&with_data(&s, d)).0))
}

fn adv_d_trial(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let n = rng.gen_range(1..=3);
    let shape = [n, 1, rng.gen_range(1..=4), rng.gen_range(1..=4)];
    let (fake, real) = (random_tensor(shape, rng), random_tensor(shape, rng));
    let ft: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.3)).collect();
    let rt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.7..1.2)).collect();
    let (_, gf, gr) = adv_loss_d_targets(&fake, &ft, &real, &rt);
    let ef = compare_gradient(&gf.scale(scale).into_data(), fake.data(), |d| {
        adv_loss_d_targets(&with_data(&fake, d), &ft, &real, &rt).0
    });
    let er = compare_gradient(&gr.scale(scale).into_data(), real.data(), |d| {
        adv_loss_d_targets(&fake, &ft, &with_data(&real, d), &rt).0
    });
    Ok(ef.max(er))
}

/// One randomized trial of `op`; returns the largest relative error.
pub fn check_operator(op: Operator, rng: &mut ChaCha8Rng, fault: bool) -> Result<f64> {
    let scale = if fault { 1.01 } else { 1.0 };
    match op {
        Operator::DpConv => dpconv_trial(rng, scale),
        Operator::Attention => attention_trial(rng, scale),
        Operator::Pixel => pixel_trial(rng, scale),
        Operator::Style => style_trial(rng, scale),
        Operator::Tv => tv_trial(rng, scale),
        Operator::AdvG => adv_g_trial(rng, scale),
        Operator::AdvD => adv_d_trial(rng, scale),
    }
}

pub fn run_gradcheck(config: &GradcheckConfig) -> Result<Vec<OperatorReport>> {
    if config.trials == 0 {
        return Err(Error::invalid("gradcheck needs at least one trial"));
    }
    Operator::ALL
        .iter()
        .enumerate()
        .map(|(i, &op)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let mut worst = 0.0f64;
            for _ in 0..config.trials {
                worst = worst.max(check_operator(op, &mut rng, config.fault == Some(op))?);
            }
            Ok(OperatorReport {
                operator: op,
                trials: config.trials,
                max_rel_error: worst,
            })
        })
        .collect()
}
