mod common;

use common::*;
use dpconv::{conv2d, conv2d_direct, dpconv_forward_batch, BinaryMask, ConvGeometry, ConvSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn undilated_matches_partial_conv_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..200 {
        let c = random_case(&mut rng, false);
        let got = dpconv_forward_batch(&c.input, &c.masks, &c.weights, &c.bias, &c.spec).unwrap();
        let (want, want_masks) = pconv_reference(&c.input, &c.masks, &c.weights, &c.bias, &c.spec);
        assert!(max_abs_diff(&got.output, &want) <= 1e-12, "{:?}", c.spec);
        assert_eq!(got.masks, want_masks);
    }
}

#[test]
fn dilated_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..200 {
        let c = random_case(&mut rng, true);
        let got = dpconv_forward_batch(&c.input, &c.masks, &c.weights, &c.bias, &c.spec).unwrap();
        let (want, want_masks) = triple_loop(&c.input, &c.masks, &c.weights, &c.bias, &c.spec);
        assert!(max_abs_diff(&got.output, &want) <= 1e-10, "{:?}", c.spec);
        assert_eq!(got.masks, want_masks);
    }
}

#[test]
fn all_ones_mask_is_border_renormalised_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for _ in 0..50 {
        let c = random_case(&mut rng, true);
        let ones: Vec<BinaryMask> = c.masks.iter().map(|m| BinaryMask::ones(m.height(), m.width())).collect();
        let got = dpconv_forward_batch(&c.input, &ones, &c.weights, &c.bias, &c.spec).unwrap();
        let want = border_renormalised_conv(&c.input, &c.weights, &c.bias, &c.spec.geometry());
        assert!(max_abs_diff(&got.output, &want) <= 1e-12);
    }
}

#[test]
fn interior_of_all_ones_is_plain_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let spec = ConvSpec::square(1, 2, 3).with_dilation(2).same_padding();
    let x = random_tensor([1, 2, 12, 12], &mut rng);
    let w = random_tensor(spec.weight_shape(), &mut rng);
    let b = vec![0.1, -0.2, 0.3];
    let got = dpconv_forward_batch(&x, &[BinaryMask::ones(12, 12)], &w, &b, &spec).unwrap();
    let plain = conv2d_direct(&x, &w, &b, &spec.geometry()).unwrap();
    for o in 0..3 {
        for y in 2..10 {
            for xx in 2..10 {
                assert!((got.output.at(0, o, y, xx) - plain.at(0, o, y, xx)).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gemm_conv_matches_direct(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (kh, kw) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let g = ConvGeometry::new(kh, kw, rng.gen_range(1..=2), rng.gen_range(0..=2), rng.gen_range(1..=2));
        let (cin, cout) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let x = random_tensor([rng.gen_range(1..=2), cin, 9, 10], &mut rng);
        let w = random_tensor([cout, cin, kh, kw], &mut rng);
        let b: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = conv2d(&x, &w, &b, &g).unwrap();
        let d = conv2d_direct(&x, &w, &b, &g).unwrap();
        prop_assert!(max_abs_diff(&a, &d) < 1e-12);
    }

    #[test]
    fn holes_never_leak_into_output(seed in any::<u64>()) {
        // values under holes must not influence any output
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_case(&mut rng, true);
        let a = dpconv_forward_batch(&c.input, &c.masks, &c.weights, &c.bias, &c.spec).unwrap();
        let mut noisy = c.input.clone();
        let [n, ch, h, w] = noisy.shape();
        for s in 0..n {
            for k in 0..ch {
                for y in 0..h {
                    for x in 0..w {
                        if !c.masks[s].get(y, x) {
                            noisy.set(s, k, y, x, rng.gen_range(-100.0..100.0));
                        }
                    }
                }
            }
        }
        let b = dpconv_forward_batch(&noisy, &c.masks, &c.weights, &c.bias, &c.spec).unwrap();
        prop_assert_eq!(a.output, b.output);
    }
}
