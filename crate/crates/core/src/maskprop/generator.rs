//! Free-form irregular hole masks: thick random-walk strokes plus a few
//! ellipses, grown until the hole ratio reaches the requested target.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::BinaryMask;

/// Accepted deviation of the achieved hole ratio from the target.
pub const RATIO_TOLERANCE: f64 = 0.03;

const MAX_ATTEMPTS: u64 = 8;
const MAX_STROKES: usize = 400;
const MIN_THICKNESS: usize = 5;
const MAX_THICKNESS: usize = 30;

struct Canvas {
    height: usize,
    width: usize,
    hole: Vec<bool>,
    holes: usize,
    stamp: Vec<u32>,
    stamp_id: u32,
    pending: Vec<usize>,
}

impl Canvas {
    fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            hole: vec![false; height * width],
            holes: 0,
            stamp: vec![0; height * width],
            stamp_id: 0,
            pending: Vec::new(),
        }
    }

    fn ratio(&self) -> f64 {
        self.holes as f64 / (self.height * self.width) as f64
    }

    fn ratio_with_pending(&self) -> f64 {
        let fresh = self.pending.iter().filter(|&&i| !self.hole[i]).count();
        (self.holes + fresh) as f64 / (self.height * self.width) as f64
    }

    fn begin(&mut self) {
        self.stamp_id += 1;
        self.pending.clear();
    }

    #[inline]
    fn mark(&mut self, y: usize, x: usize) {
        let i = y * self.width + x;
        if self.stamp[i] != self.stamp_id {
            self.stamp[i] = self.stamp_id;
            self.pending.push(i);
        }
    }

    fn commit(&mut self) {
        for &i in &self.pending {
            if !self.hole[i] {
                self.hole[i] = true;
                self.holes += 1;
            }
        }
        self.pending.clear();
    }

    /// Marks every pixel within `radius` of segment `a`–`b`.
    fn capsule(&mut self, a: (f64, f64), b: (f64, f64), radius: f64) {
        let y0 = (a.0.min(b.0) - radius).floor().max(0.0) as usize;
        let y1 = ((a.0.max(b.0) + radius).ceil() as usize).min(self.height - 1);
        let x0 = (a.1.min(b.1) - radius).floor().max(0.0) as usize;
        let x1 = ((a.1.max(b.1) + radius).ceil() as usize).min(self.width - 1);
        let (dy, dx) = (b.0 - a.0, b.1 - a.1);
        let len2 = dy * dy + dx * dx;
        let r2 = radius * radius;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (py, px) = (y as f64 - a.0, x as f64 - a.1);
                let t = if len2 > 0.0 {
                    ((py * dy + px * dx) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (ey, ex) = (py - t * dy, px - t * dx);
                if ey * ey + ex * ex <= r2 {
                    self.mark(y, x);
                }
            }
        }
    }

    fn ellipse(&mut self, center: (f64, f64), semi: (f64, f64), angle: f64) {
        let reach = semi.0.max(semi.1);
        let y0 = (center.0 - reach).floor().max(0.0) as usize;
        let y1 = ((center.0 + reach).ceil().max(0.0) as usize).min(self.height - 1);
        let x0 = (center.1 - reach).floor().max(0.0) as usize;
        let x1 = ((center.1 + reach).ceil().max(0.0) as usize).min(self.width - 1);
        let (s, c) = angle.sin_cos();
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (py, px) = (y as f64 - center.0, x as f64 - center.1);
                let u = c * px + s * py;
                let v = -s * px + c * py;
                if (u / semi.0).powi(2) + (v / semi.1).powi(2) <= 1.0 {
                    self.mark(y, x);
                }
            }
        }
    }

    fn into_mask(self) -> BinaryMask {
        let bits = self.hole.iter().map(|&h| u8::from(!h)).collect();
        BinaryMask::new(self.height, self.width, bits).expect("canvas dimensions")
    }
}

struct Stroke {
    points: Vec<(f64, f64)>,
    thickness: f64,
}

fn random_stroke(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Stroke {
    let side = h.min(w) as f64;
    let max_t = MAX_THICKNESS.min((h.min(w) / 4).max(1));
    let min_t = MIN_THICKNESS.min(max_t);
    let thickness = rng.gen_range(min_t..=max_t) as f64;
    let vertices = rng.gen_range(4..=12);
    let mut p = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
    let mut angle = rng.gen_range(0.0..2.0 * PI);
    let mut points = vec![p];
    for _ in 1..vertices {
        angle += rng.gen_range(-PI / 2.0..PI / 2.0);
        let len = rng.gen_range(side / 16.0..side / 4.0);
        p = (
            (p.0 + len * angle.sin()).clamp(0.0, (h - 1) as f64),
            (p.1 + len * angle.cos()).clamp(0.0, (w - 1) as f64),
        );
        points.push(p);
    }
    Stroke { points, thickness }
}

fn stamp_stroke(canvas: &mut Canvas, stroke: &Stroke) {
    canvas.begin();
    let r = stroke.thickness / 2.0;
    for seg in stroke.points.windows(2) {
        canvas.capsule(seg[0], seg[1], r);
    }
}

fn attempt(h: usize, w: usize, target: f64, rng: &mut ChaCha8Rng) -> Canvas {
    let mut canvas = Canvas::new(h, w);
    let area = (h * w) as f64;

    for _ in 0..rng.gen_range(0..=3) {
        let budget = target - canvas.ratio();
        if budget <= RATIO_TOLERANCE {
            break;
        }
        let frac = rng.gen_range(0.15..0.5) * budget;
        let aspect = rng.gen_range(0.4..2.5);
        let a = (frac * area / PI * aspect).sqrt().max(1.0);
        let b = (frac * area / (PI * a)).max(1.0);
        let center = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
        canvas.begin();
        canvas.ellipse(center, (a, b), rng.gen_range(0.0..PI));
        if canvas.ratio_with_pending() <= target + RATIO_TOLERANCE {
            canvas.commit();
        }
    }

    for _ in 0..MAX_STROKES {
        if canvas.holes > 0 && canvas.ratio() >= target - 0.005 {
            break;
        }
        let mut stroke = random_stroke(rng, h, w);
        for _ in 0..6 {
            stamp_stroke(&mut canvas, &stroke);
            if canvas.ratio_with_pending() <= target + RATIO_TOLERANCE {
                canvas.commit();
                break;
            }
            // too much: shorten and thin the stroke and try again
            if stroke.points.len() > 2 {
                let keep = stroke.points.len().div_ceil(2).max(2);
                stroke.points.truncate(keep);
            } else {
                stroke.thickness = (stroke.thickness / 2.0).max(1.0);
                let (a, b) = (stroke.points[0], stroke.points[1]);
                stroke.points[1] = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
            }
        }
    }
    canvas
}

/// Generates a deterministic free-form hole mask whose hole ratio lies
/// within [`RATIO_TOLERANCE`] of `target_ratio`.
pub fn generate_irregular_mask(height: usize, width: usize, target_ratio: f64, seed: u64) -> Result<BinaryMask> {
    if !(target_ratio > 0.0 && target_ratio < 0.9) {
        return Err(Error::invalid(format!(
            "target hole ratio must lie in (0, 0.9), got {target_ratio}"
        )));
    }
    if height < 4 || width < 4 {
        return Err(Error::invalid(format!("mask size {height}x{width} is too small")));
    }
    let mut achieved = 0.0;
    for stream in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let canvas = attempt(height, width, target_ratio, &mut rng);
        achieved = canvas.ratio();
        let ok = canvas.holes > 0
            && canvas.holes < height * width
            && (achieved - target_ratio).abs() <= RATIO_TOLERANCE;
        if ok {
            return Ok(canvas.into_mask());
        }
    }
    Err(Error::MaskRatio {
        target: target_ratio,
        achieved,
    })
}
