//! Binary masks and their geometric resampling.

use std::path::Path;

use crate::error::{Error, Result};

/// A single-channel binary mask stored row-major, `true` = foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// Creates an all-background mask.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be nonzero");
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    /// Creates a mask by evaluating a predicate for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = BinaryMask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Creates a mask filled entirely with foreground.
    pub fn full(width: usize, height: usize) -> Self {
        let mut m = BinaryMask::new(width, height);
        m.bits.fill(true);
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels (foreground and background).
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false // dimensions are validated nonzero at construction
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    /// Raw row-major boolean slice.
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    /// Number of foreground pixels.
    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Decodes a mask from an image file; any pixel with luma above 127 is
    /// treated as foreground.
    pub fn decode_path(path: &Path) -> Result<Self> {
        let dynamic = image::open(path).map_err(|e| Error::decode(path, e))?;
        let luma = dynamic.to_luma8();
        let (w, h) = (luma.width() as usize, luma.height() as usize);
        let mut m = BinaryMask::new(w, h);
        for (i, px) in luma.pixels().enumerate() {
            m.bits[i] = px.0[0] > 127;
        }
        Ok(m)
    }

    /// Encodes the mask as a single-channel PNG with foreground = 255.
    pub fn encode_png(&self, path: &Path) -> Result<()> {
        let mut buf = image::GrayImage::new(self.width as u32, self.height as u32);
        for (i, px) in buf.pixels_mut().enumerate() {
            px.0 = [if self.bits[i] { 255 } else { 0 }];
        }
        buf.save(path).map_err(|e| Error::decode(path, e))
    }
}

/// Pads a mask with background to a square, mirroring [`super::pad_to_square`]
/// for images: content centered, odd remainder on the bottom/right.
pub fn pad_mask_to_square(mask: &BinaryMask) -> (BinaryMask, usize, usize) {
    let side = mask.width().max(mask.height());
    let pad_left = (side - mask.width()) / 2;
    let pad_top = (side - mask.height()) / 2;
    if side == mask.width() && side == mask.height() {
        return (mask.clone(), 0, 0);
    }
    let mut out = BinaryMask::new(side, side);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                out.set(x + pad_left, y + pad_top, true);
            }
        }
    }
    (out, pad_left, pad_top)
}

/// Nearest-neighbor resampling for masks, used both when normalizing ground
/// truth to the working frame and when mapping a segmentation back to the
/// original resolution. Uses the same half-pixel-center convention as the
/// bilinear image resize so the two stay aligned.
pub fn resize_nearest(mask: &BinaryMask, target_w: usize, target_h: usize) -> BinaryMask {
    assert!(target_w > 0 && target_h > 0);
    if target_w == mask.width() && target_h == mask.height() {
        return mask.clone();
    }
    let sw = mask.width();
    let sh = mask.height();
    let scale_x = sw as f64 / target_w as f64;
    let scale_y = sh as f64 / target_h as f64;
    let src_xs: Vec<usize> = (0..target_w)
        .map(|x| (((x as f64 + 0.5) * scale_x).floor() as isize).clamp(0, sw as isize - 1) as usize)
        .collect();
    let mut out = BinaryMask::new(target_w, target_h);
    for y in 0..target_h {
        let src_y =
            (((y as f64 + 0.5) * scale_y).floor() as isize).clamp(0, sh as isize - 1) as usize;
        let src_row = &mask.bits[src_y * sw..src_y * sw + sw];
        let dst_row = &mut out.bits[y * target_w..y * target_w + target_w];
        for x in 0..target_w {
            dst_row[x] = src_row[src_xs[x]];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_nearest_is_identity_at_same_size() {
        let m = BinaryMask::from_fn(7, 5, |x, y| (x + y) % 3 == 0);
        assert_eq!(resize_nearest(&m, 7, 5), m);
    }

    #[test]
    fn resize_nearest_upscale_replicates_pixels() {
        let m = BinaryMask::from_fn(2, 1, |x, _| x == 1);
        let up = resize_nearest(&m, 4, 2);
        // Left half background, right half foreground, both rows alike.
        for y in 0..2 {
            assert!(!up.get(0, y));
            assert!(!up.get(1, y));
            assert!(up.get(2, y));
            assert!(up.get(3, y));
        }
    }

    #[test]
    fn resize_nearest_roundtrip_keeps_large_shapes() {
        // A centered block survives a down-and-back-up round trip with its
        // boundary within one source pixel.
        let m = BinaryMask::from_fn(100, 100, |x, y| (25..75).contains(&x) && (25..75).contains(&y));
        let down = resize_nearest(&m, 50, 50);
        let back = resize_nearest(&down, 100, 100);
        let inter = m
            .bits()
            .iter()
            .zip(back.bits())
            .filter(|(a, b)| **a && **b)
            .count();
        let union = m
            .bits()
            .iter()
            .zip(back.bits())
            .filter(|(a, b)| **a || **b)
            .count();
        assert!(inter as f64 / union as f64 > 0.9);
    }

    #[test]
    fn pad_mask_centers_content() {
        let m = BinaryMask::from_fn(4, 2, |_, _| true);
        let (padded, l, t) = pad_mask_to_square(&m);
        assert_eq!((padded.width(), padded.height()), (4, 4));
        assert_eq!((l, t), (0, 1));
        assert_eq!(padded.count_ones(), 8);
        assert!(!padded.get(0, 0));
        assert!(padded.get(0, 1));
        assert!(padded.get(3, 2));
        assert!(!padded.get(3, 3));
    }

    #[test]
    fn mask_png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        let m = BinaryMask::from_fn(33, 17, |x, y| (x * y) % 5 < 2);
        m.encode_png(&path).unwrap();
        let back = BinaryMask::decode_path(&path).unwrap();
        assert_eq!(back, m);
    }
}
