//! RGB image container with floating point planes plus the geometric
//! operations used to normalize photographs to the square working frame.

use std::path::Path;

use crate::error::{Error, Result};

/// An RGB image with one `f64` plane per channel, stored row-major.
///
/// Channel values follow the 8-bit convention (0–255) but are kept as floats
/// so chained filters (morphological closing, medians, white balance) do not
/// accumulate quantization error. Values are only clamped and rounded when
/// the image is encoded back to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
}

impl RgbImage {
    /// Creates an all-black image.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be nonzero");
        let plane = vec![0.0; width * height];
        RgbImage {
            width,
            height,
            planes: [plane.clone(), plane.clone(), plane],
        }
    }

    /// Creates an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut img = RgbImage::new(width, height);
        for y in 0..height {
            for x in 0..width {
                let rgb = f(x, y);
                img.set(x, y, rgb);
            }
        }
        img
    }

    /// Creates an image filled with a constant color.
    pub fn constant(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = RgbImage::new(width, height);
        for (c, plane) in img.planes.iter_mut().enumerate() {
            plane.fill(rgb[c]);
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false // dimensions are validated nonzero at construction
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = y * self.width + x;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = y * self.width + x;
        self.planes[0][i] = rgb[0];
        self.planes[1][i] = rgb[1];
        self.planes[2][i] = rgb[2];
    }

    /// Immutable access to one channel plane (0 = red, 1 = green, 2 = blue).
    pub fn plane(&self, channel: usize) -> &[f64] {
        &self.planes[channel]
    }

    /// Mutable access to one channel plane.
    pub fn plane_mut(&mut self, channel: usize) -> &mut [f64] {
        &mut self.planes[channel]
    }

    /// Replaces one channel plane. Panics if the length does not match.
    pub fn set_plane(&mut self, channel: usize, plane: Vec<f64>) {
        assert_eq!(plane.len(), self.width * self.height);
        self.planes[channel] = plane;
    }

    /// Decodes a PNG or JPEG file into floating point planes.
    pub fn decode_path(path: &Path) -> Result<Self> {
        let dynamic = image::open(path).map_err(|e| Error::decode(path, e))?;
        let rgb = dynamic.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let mut img = RgbImage::new(w, h);
        for (i, px) in rgb.pixels().enumerate() {
            img.planes[0][i] = px.0[0] as f64;
            img.planes[1][i] = px.0[1] as f64;
            img.planes[2][i] = px.0[2] as f64;
        }
        Ok(img)
    }

    /// Encodes the image as PNG, rounding each channel to the nearest byte.
    pub fn encode_png(&self, path: &Path) -> Result<()> {
        let mut buf = image::RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in buf.pixels_mut().enumerate() {
            px.0 = [
                quantize(self.planes[0][i]),
                quantize(self.planes[1][i]),
                quantize(self.planes[2][i]),
            ];
        }
        buf.save(path).map_err(|e| Error::decode(path, e))
    }
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Pads an image with black pixels to a square whose side is the larger of
/// the two input dimensions. The content is centered; when the total padding
/// is odd the extra pixel goes to the bottom or right edge.
///
/// Returns the padded image together with the offsets `(pad_left, pad_top)`
/// of the original content inside the square.
pub fn pad_to_square(img: &RgbImage) -> (RgbImage, usize, usize) {
    let side = img.width().max(img.height());
    let pad_left = (side - img.width()) / 2;
    let pad_top = (side - img.height()) / 2;
    if side == img.width() && side == img.height() {
        return (img.clone(), 0, 0);
    }
    let mut out = RgbImage::new(side, side);
    for c in 0..3 {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..img.height() {
            let src_row = &src[y * img.width()..(y + 1) * img.width()];
            let dst_start = (y + pad_top) * side + pad_left;
            dst[dst_start..dst_start + img.width()].copy_from_slice(src_row);
        }
    }
    (out, pad_left, pad_top)
}

/// Bilinear resampling to `(target_w, target_h)`.
///
/// Source coordinates are computed with the half-pixel-center convention
/// `src = (dst + 0.5) * scale - 0.5` and clamped to the image border, which
/// makes the operation an exact identity when the dimensions are unchanged.
pub fn resize_bilinear(img: &RgbImage, target_w: usize, target_h: usize) -> RgbImage {
    assert!(target_w > 0 && target_h > 0);
    if target_w == img.width() && target_h == img.height() {
        return img.clone();
    }
    let sw = img.width();
    let sh = img.height();
    let scale_x = sw as f64 / target_w as f64;
    let scale_y = sh as f64 / target_h as f64;

    // Precompute the horizontal interpolation weights once per column.
    let mut x0s = vec![0usize; target_w];
    let mut x1s = vec![0usize; target_w];
    let mut fxs = vec![0.0f64; target_w];
    for x in 0..target_w {
        let src_x = ((x as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (sw - 1) as f64);
        let x0 = src_x.floor() as usize;
        let x1 = (x0 + 1).min(sw - 1);
        x0s[x] = x0;
        x1s[x] = x1;
        fxs[x] = src_x - x0 as f64;
    }

    let mut out = RgbImage::new(target_w, target_h);
    for c in 0..3 {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..target_h {
            let src_y = ((y as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (sh - 1) as f64);
            let y0 = src_y.floor() as usize;
            let y1 = (y0 + 1).min(sh - 1);
            let fy = src_y - y0 as f64;
            let row0 = &src[y0 * sw..y0 * sw + sw];
            let row1 = &src[y1 * sw..y1 * sw + sw];
            let dst_row = &mut dst[y * target_w..(y + 1) * target_w];
            for x in 0..target_w {
                let (x0, x1, fx) = (x0s[x], x1s[x], fxs[x]);
                let top = row0[x0] + (row0[x1] - row0[x0]) * fx;
                let bottom = row1[x0] + (row1[x1] - row1[x0]) * fx;
                dst_row[x] = top + (bottom - top) * fy;
            }
        }
    }
    out
}
