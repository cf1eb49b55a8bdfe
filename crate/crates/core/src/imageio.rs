//! PNG reading and writing for images and masks.
//!
//! Masks are 8-bit grayscale with 0 for holes and 255 for valid pixels;
//! on load any value ≥ 128 counts as valid. Images are 8-bit RGB.

use std::path::Path;

use image::{GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, Tensor4};

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn mask_to_gray(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        image::Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    })
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    mask_to_gray(mask).save(path).map_err(|e| image_err(path, e))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = ImageReader::open(path)
        .map_err(|e| image_err(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))?
        .into_luma8();
    let (w, h) = img.dimensions();
    Ok(BinaryMask::from_fn(h as usize, w as usize, |y, x| {
        img.get_pixel(x as u32, y as u32).0[0] >= 128
    }))
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    Ok(ImageReader::open(path)
        .map_err(|e| image_err(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))?
        .into_rgb8())
}

pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.save(path).map_err(|e| image_err(path, e))
}

/// `(1, 3, h, w)` tensor with `v / 255 · (hi − lo) + lo`.
pub fn rgb_to_tensor(img: &RgbImage, lo: f64, hi: f64) -> Tensor4 {
    let (w, h) = img.dimensions();
    Tensor4::from_fn([1, 3, h as usize, w as usize], |_, c, y, x| {
        f64::from(img.get_pixel(x as u32, y as u32).0[c]) / 255.0 * (hi - lo) + lo
    })
}

/// Inverse of [`rgb_to_tensor`] for sample `n`, clamped and rounded.
pub fn tensor_to_rgb(t: &Tensor4, n: usize, lo: f64, hi: f64) -> Result<RgbImage> {
    let [batch, c, h, w] = t.shape();
    if n >= batch || c != 3 {
        return Err(Error::invalid(format!(
            "cannot convert sample {n} of a {batch}x{c}x{h}x{w} tensor to RGB"
        )));
    }
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch: usize| {
            let v = (t.at(n, ch, y as usize, x as usize) - lo) / (hi - lo) * 255.0;
            v.round().clamp(0.0, 255.0) as u8
        };
        image::Rgb([px(0), px(1), px(2)])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::from_fn(5, 7, |y, x| (y * 7 + x) % 3 != 0);
        let p = dir.path().join("m.png");
        save_mask(&m, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
    }

    #[test]
    fn rgb_round_trip_is_exact() {
        let img = RgbImage::from_fn(4, 3, |x, y| image::Rgb([(x * 60) as u8, (y * 100) as u8, 255]));
        let t = rgb_to_tensor(&img, -1.0, 1.0);
        assert_eq!(tensor_to_rgb(&t, 0, -1.0, 1.0).unwrap(), img);
        assert!(load_rgb("/nonexistent/x.png").is_err());
    }
}
