//! Procedural training textures: stripes, checkers and linear gradients
//! with random colours, scaled to `[-1, 1]`.

use std::f64::consts::PI;

use rand::Rng;

use crate::tensor::Tensor4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextureKind {
    Stripes,
    Checkers,
    Gradient,
}

fn color(rng: &mut impl Rng) -> [f64; 3] {
    [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
}

/// One `(1, 3, size, size)` texture.
pub fn texture(kind: TextureKind, size: usize, rng: &mut impl Rng) -> Tensor4 {
    let (a, b) = (color(rng), color(rng));
    let angle = rng.gen_range(0.0..PI);
    let (s, c) = angle.sin_cos();
    let weight: Box<dyn Fn(f64, f64) -> f64> = match kind {
        TextureKind::Stripes => {
            let period = rng.gen_range(4.0..(size as f64 / 2.0).max(5.0));
            let phase = rng.gen_range(0.0..period);
            Box::new(move |y, x| {
                let t = (x * c + y * s + phase).rem_euclid(period) / period;
                f64::from(u8::from(t < 0.5))
            })
        }
        TextureKind::Checkers => {
            let cell = rng.gen_range(3..=(size / 4).max(3)) as f64;
            Box::new(move |y, x| f64::from(u8::from(((y / cell).floor() + (x / cell).floor()) as i64 % 2 == 0)))
        }
        TextureKind::Gradient => {
            let span = size as f64 * std::f64::consts::SQRT_2;
            Box::new(move |y, x| ((x * c + y * s) / span).clamp(0.0, 1.0))
        }
    };
    Tensor4::from_fn([1, 3, size, size], |_, ch, y, x| {
        let t = weight(y as f64, x as f64);
        t * a[ch] + (1.0 - t) * b[ch]
    })
}

/// A batch with texture kinds drawn uniformly.
pub fn texture_batch(batch: usize, size: usize, rng: &mut impl Rng) -> Tensor4 {
    let kinds = [TextureKind::Stripes, TextureKind::Checkers, TextureKind::Gradient];
    let parts: Vec<Tensor4> = (0..batch)
        .map(|_| {
            let k = kinds[rng.gen_range(0..kinds.len())];
            texture(k, size, rng)
        })
        .collect();
    Tensor4::stack(&parts).expect("textures share one shape")
}
