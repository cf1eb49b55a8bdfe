//! Bit-packed masks with a word-parallel mask update.
//!
//! For stride 1 and `τ = 1` the update is a binary dilation by the dilated
//! kernel footprint, which is separable: OR the shifted rows horizontally,
//! then OR the resulting rows vertically. Other specs fall back to the
//! counting path in [`crate::dpconv::mask_update`].

use crate::dpconv::{mask_update, ConvSpec};
use crate::error::Result;
use crate::tensor::BinaryMask;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedMask {
    height: usize,
    width: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl PackedMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        let words_per_row = width.div_ceil(64);
        Self {
            height,
            width,
            words_per_row,
            words: vec![0; words_per_row * height],
        }
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        let mut packed = Self::zeros(mask.height(), mask.width());
        for (y, row) in mask.bits().chunks(mask.width().max(1)).enumerate().take(mask.height()) {
            let dst = packed.row_mut(y);
            for (x, &b) in row.iter().enumerate() {
                if b == 1 {
                    dst[x / 64] |= 1u64 << (x % 64);
                }
            }
        }
        packed
    }

    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.height, self.width, |y, x| {
            (self.row(y)[x / 64] >> (x % 64)) & 1 == 1
        })
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
    fn row(&self, y: usize) -> &[u64] {
        &self.words[y * self.words_per_row..(y + 1) * self.words_per_row]
    }

    #[inline]
    fn row_mut(&mut self, y: usize) -> &mut [u64] {
        &mut self.words[y * self.words_per_row..(y + 1) * self.words_per_row]
    }

    pub fn valid_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn coverage(&self) -> f64 {
        let total = self.height * self.width;
        if total == 0 {
            1.0
        } else {
            self.valid_count() as f64 / total as f64
        }
    }

    pub fn is_transparent(&self) -> bool {
        self.valid_count() == self.height * self.width
    }

    /// Applies one mask update, using the word-parallel dilation when the
    /// layer allows it.
    pub fn update(&self, spec: &ConvSpec) -> Result<PackedMask> {
        let (oh, ow) = spec.output_dims(self.height, self.width)?;
        if spec.stride != 1 || spec.mask_threshold != 1 {
            return Ok(PackedMask::from_mask(&mask_update(&self.to_mask(), spec)?));
        }
        let l = spec.dilation as isize;
        let p = spec.padding as isize;
        let out_words = ow.div_ceil(64);

        // horizontal pass: one dilated row per input row
        let mut horiz = vec![0u64; self.height * out_words];
        let mut scratch = vec![0u64; out_words];
        for y in 0..self.height {
            let dst = &mut horiz[y * out_words..(y + 1) * out_words];
            for kx in 0..spec.kernel_width() {
                shift_row(self.row(y), kx as isize * l - p, &mut scratch, ow);
                dst.iter_mut().zip(&scratch).for_each(|(d, s)| *d |= s);
            }
        }

        let mut out = PackedMask::zeros(oh, ow);
        for oy in 0..oh {
            for ky in 0..spec.kernel_height() {
                let iy = oy as isize - p + ky as isize * l;
                if iy < 0 || iy >= self.height as isize {
                    continue;
                }
                let src = &horiz[iy as usize * out_words..(iy as usize + 1) * out_words];
                out.row_mut(oy).iter_mut().zip(src).for_each(|(d, s)| *d |= s);
            }
        }
        Ok(out)
    }
}

/// 64 bits of `src` starting at (possibly negative) bit `start`.
#[inline]
fn bits_at(src: &[u64], start: isize) -> u64 {
    if start < 0 {
        let s = (-start) as usize;
        if s >= 64 {
            0
        } else {
            bits_at(src, 0) << s
        }
    } else {
        let start = start as usize;
        let (wi, sh) = (start / 64, start % 64);
        let lo = src.get(wi).copied().unwrap_or(0) >> sh;
        let hi = if sh == 0 {
            0
        } else {
            src.get(wi + 1).copied().unwrap_or(0) << (64 - sh)
        };
        lo | hi
    }
}

/// `dst` bit `x` = `src` bit `x + offset` for `x < dst_width`. Bits of `src`
/// past its logical width must be zero.
fn shift_row(src: &[u64], offset: isize, dst: &mut [u64], dst_width: usize) {
    for (j, d) in dst.iter_mut().enumerate() {
        *d = bits_at(src, j as isize * 64 + offset);
    }
    let tail = dst_width % 64;
    if tail != 0 {
        if let Some(last) = dst.last_mut() {
            *last &= (1u64 << tail) - 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pack_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = BinaryMask::from_fn(5, 130, |_, _| rng.gen_bool(0.5));
        let p = PackedMask::from_mask(&m);
        assert_eq!(p.to_mask(), m);
        assert_eq!(p.valid_count(), m.valid_count());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn fast_update_equals_counting_update(
            seed in any::<u64>(),
            h in 1usize..40,
            w in 1usize..150,
            half in 0usize..3,
            dilation in 1usize..5,
            pad_extra in 0usize..3,
            stride in 1usize..3,
            density in 0.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(density));
            let spec = ConvSpec::square(half, 1, 1)
                .with_dilation(dilation)
                .with_stride(stride)
                .with_padding((dilation * half).saturating_sub(1) + pad_extra);
            let expected = mask_update(&m, &spec);
            let got = PackedMask::from_mask(&m).update(&spec);
            match (expected, got) {
                (Ok(e), Ok(g)) => prop_assert_eq!(g.to_mask(), e),
                (Err(_), Err(_)) => {}
                (e, g) => prop_assert!(false, "mismatch: {:?} vs {:?}", e.is_ok(), g.is_ok()),
            }
        }
    }
}
