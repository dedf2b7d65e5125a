//! Image normalization and artifact removal.
//!
//! Every photograph is brought into a fixed 1024×1024 working frame (pad to
//! square, bilinear resize) and cleaned in three steps: specular reflection
//! removal, hair removal, and gray-world white balance. The recorded
//! [`PadInfo`] inverts the geometry so a segmentation computed in the
//! working frame can be mapped back onto the original image.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{
    disk, gray_close, median3x3, pad_mask_to_square, pad_to_square, resize_bilinear,
    resize_nearest, BinaryMask, RgbImage,
};
use crate::WORKING_SIZE;

/// Radius of the grayscale closing disk used for hair removal.
const HAIR_DISK_RADIUS: u32 = 5;
/// Quantile of the brightness distribution that anchors the reflection
/// threshold.
const REFLECTION_PERCENTILE: f64 = 0.99;
/// Fraction of the percentile brightness above which a pixel counts as a
/// specular reflection.
const REFLECTION_FACTOR: f64 = 0.98;
/// Upper bound on reflection replacement passes.
const REFLECTION_MAX_PASSES: usize = 10;

/// Geometry bookkeeping for mapping between an original image and the
/// square working frame: the image was padded to a `side`×`side` square
/// with its top-left content corner at (`pad_left`, `pad_top`), then
/// resized to the working resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadInfo {
    pub original_w: usize,
    pub original_h: usize,
    pub pad_left: usize,
    pub pad_top: usize,
    pub side: usize,
}

/// A preprocessed image in the 1024×1024 working frame plus the geometry
/// needed to undo the normalization.
#[derive(Debug, Clone)]
pub struct NormalizedImage {
    pub image: RgbImage,
    pub pad_info: PadInfo,
}

/// Per-pixel brightness: the plain sum of the three channels.
fn brightness(img: &RgbImage) -> Vec<f64> {
    let r = img.plane(0);
    let g = img.plane(1);
    let b = img.plane(2);
    (0..img.len()).map(|i| r[i] + g[i] + b[i]).collect()
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(q·n)` of the
/// sorted multiset.
fn nearest_rank_percentile(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let n = values.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    let mut buf = values.to_vec();
    let (_, nth, _) = buf.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *nth
}

/// Removes specular reflections.
///
/// A pixel is "bright" when its brightness exceeds 0.98·t, where t is the
/// nearest-rank 99th percentile of the brightness distribution. Each pass
/// replaces every bright pixel that has at least one non-bright 8-neighbor
/// by the per-channel mean of those neighbors; replaced pixels count as
/// non-bright from the next pass on, letting the fill creep inward. Stops
/// when nothing is replaceable or after ten passes; bright pixels that
/// never acquire a non-bright neighbor stay untouched.
pub fn remove_reflections(img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let bright_vals = brightness(img);
    let t = nearest_rank_percentile(&bright_vals, REFLECTION_PERCENTILE);
    let threshold = REFLECTION_FACTOR * t;
    let mut bright: Vec<bool> = bright_vals.iter().map(|&b| b > threshold).collect();
    let mut remaining: Vec<usize> = (0..w * h).filter(|&i| bright[i]).collect();
    let mut out = img.clone();

    for _ in 0..REFLECTION_MAX_PASSES {
        if remaining.is_empty() {
            break;
        }
        // Replacements are computed against the pass-start state: donors are
        // non-bright pixels, and only bright pixels change within a pass, so
        // reading from `out` while collecting is race-free.
        let mut replacements: Vec<(usize, [f64; 3])> = Vec::new();
        for &idx in &remaining {
            let (x, y) = (idx % w, idx / w);
            let mut sum = [0.0f64; 3];
            let mut count = 0usize;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if !bright[nidx] {
                        for c in 0..3 {
                            sum[c] += out.plane(c)[nidx];
                        }
                        count += 1;
                    }
                }
            }
            if count > 0 {
                let mean = [
                    sum[0] / count as f64,
                    sum[1] / count as f64,
                    sum[2] / count as f64,
                ];
                replacements.push((idx, mean));
            }
        }
        if replacements.is_empty() {
            break;
        }
        for &(idx, rgb) in &replacements {
            for c in 0..3 {
                out.plane_mut(c)[idx] = rgb[c];
            }
            bright[idx] = false;
        }
        remaining.retain(|&i| bright[i]);
    }
    out
}

/// Removes hair: per channel, a grayscale closing with a radius-5 disk
/// (thin dark structures are absorbed into their surroundings) followed by
/// a 3×3 median to smooth the seams. Channels are processed independently.
pub fn remove_hair(img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let se = disk(HAIR_DISK_RADIUS);
    let mut out = img.clone();
    for c in 0..3 {
        let closed = gray_close(img.plane(c), w, h, &se);
        out.set_plane(c, median3x3(&closed, w, h));
    }
    out
}

/// Gray-world white balance: scales the red plane by S_green/S_red and the
/// blue plane by S_green/S_blue so all three channel sums match the green
/// one. Values are not clamped here; clamping happens only when encoding.
pub fn white_balance(img: &RgbImage) -> Result<RgbImage> {
    let sums: Vec<f64> = (0..3).map(|c| img.plane(c).iter().sum()).collect();
    for (c, &s) in sums.iter().enumerate() {
        if s == 0.0 {
            return Err(Error::ZeroChannel(c));
        }
    }
    let mut out = img.clone();
    let factors = [sums[1] / sums[0], 1.0, sums[1] / sums[2]];
    for c in [0usize, 2] {
        for v in out.plane_mut(c) {
            *v *= factors[c];
        }
    }
    Ok(out)
}

/// Full preprocessing chain: pad to square, bilinear resize to the working
/// frame, reflection removal, hair removal, white balance. A zero channel
/// sum downgrades white balance to a warning; the unbalanced image is used.
pub fn preprocess(img: &RgbImage) -> NormalizedImage {
    let (padded, pad_left, pad_top) = pad_to_square(img);
    let side = padded.width();
    let resized = resize_bilinear(&padded, WORKING_SIZE, WORKING_SIZE);
    let no_reflections = remove_reflections(&resized);
    let no_hair = remove_hair(&no_reflections);
    let balanced = match white_balance(&no_hair) {
        Ok(balanced) => balanced,
        Err(e) => {
            warn!("skipping white balance: {e}");
            no_hair
        }
    };
    NormalizedImage {
        image: balanced,
        pad_info: PadInfo {
            original_w: img.width(),
            original_h: img.height(),
            pad_left,
            pad_top,
            side,
        },
    }
}

/// Brings a ground-truth mask into the working frame with the same geometry
/// as [`preprocess`]: centered background padding to a square, then
/// nearest-neighbor resize to 1024×1024.
pub fn normalize_mask(mask: &BinaryMask) -> BinaryMask {
    let (padded, _, _) = pad_mask_to_square(mask);
    resize_nearest(&padded, WORKING_SIZE, WORKING_SIZE)
}

/// Maps a mask in a square working frame back to original image
/// coordinates: nearest-neighbor resize to the pre-resize square, then
/// removal of the padding border.
pub fn unnormalize_mask(mask: &BinaryMask, info: &PadInfo) -> BinaryMask {
    debug_assert_eq!(mask.width(), mask.height(), "working frame must be square");
    let square = resize_nearest(mask, info.side, info.side);
    BinaryMask::from_fn(info.original_w, info.original_h, |x, y| {
        square.get(x + info.pad_left, y + info.pad_top)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straightforward scalar re-implementation of the reflection pass loop,
    /// kept dumb on purpose: full image scan per pass, explicit snapshot.
    fn reference_remove_reflections(img: &RgbImage) -> RgbImage {
        let (w, h) = (img.width(), img.height());
        let mut b: Vec<f64> = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let px = img.get(x, y);
                b.push(px[0] + px[1] + px[2]);
            }
        }
        let mut sorted = b.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.99 * (w * h) as f64).ceil() as usize).clamp(1, w * h);
        let t = sorted[rank - 1];
        let mut bright: Vec<bool> = b.iter().map(|&v| v > 0.98 * t).collect();
        let mut out = img.clone();
        for _pass in 0..10 {
            let snapshot = out.clone();
            let bright_snapshot = bright.clone();
            let mut changed = false;
            for y in 0..h {
                for x in 0..w {
                    if !bright_snapshot[y * w + x] {
                        continue;
                    }
                    let mut sum = [0.0; 3];
                    let mut n = 0;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            if dx == 0 && dy == 0 {
                                continue;
                            }
                            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                                continue;
                            }
                            if !bright_snapshot[ny as usize * w + nx as usize] {
                                let px = snapshot.get(nx as usize, ny as usize);
                                for c in 0..3 {
                                    sum[c] += px[c];
                                }
                                n += 1;
                            }
                        }
                    }
                    if n > 0 {
                        out.set(x, y, [sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64]);
                        bright[y * w + x] = false;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        out
    }

    #[test]
    fn reflections_all_black_unchanged() {
        let img = RgbImage::new(32, 32);
        assert_eq!(remove_reflections(&img), img);
    }

    #[test]
    fn reflections_flat_gray_with_white_pixel_unchanged() {
        // t = 300 and every pixel exceeds 0.98·t = 294, so everything is
        // "bright" and there is no donor: the image must pass through.
        let mut img = RgbImage::constant(100, 100, [100.0, 100.0, 100.0]);
        img.set(57, 31, [255.0, 255.0, 255.0]);
        assert_eq!(remove_reflections(&img), img);
    }

    #[test]
    fn reflections_ramp_with_speckles_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let mut img = RgbImage::from_fn(120, 60, |x, _| {
            let v = x as f64 / 119.0 * 200.0;
            [v, v * 0.7, v * 0.3]
        });
        for _ in 0..10 {
            let x = rng.gen_range(0..120);
            let y = rng.gen_range(0..60);
            img.set(x, y, [255.0, 255.0, 255.0]);
        }
        assert_eq!(remove_reflections(&img), reference_remove_reflections(&img));
    }

    #[test]
    fn reflections_fill_bright_blob_from_surroundings() {
        // Dark background with a mid-tone band and a saturated blob; the
        // blob and band pixels are bright, the dark bulk is not, so the
        // blob gets filled inward from its dark surroundings.
        let mut img = RgbImage::constant(100, 100, [80.0, 80.0, 80.0]);
        for y in 40..42 {
            for x in 0..50 {
                img.set(x, y, [90.0, 90.0, 90.0]);
            }
        }
        for y in 60..64 {
            for x in 70..75 {
                img.set(x, y, [255.0, 255.0, 255.0]);
            }
        }
        let out = remove_reflections(&img);
        for y in 60..64 {
            for x in 70..75 {
                let px = out.get(x, y);
                assert!(px[0] <= 90.0 + 1e-9, "blob pixel ({x},{y}) still bright: {px:?}");
            }
        }
        // A far-away background pixel is untouched.
        assert_eq!(out.get(5, 5), [80.0, 80.0, 80.0]);
    }

    #[test]
    fn hair_removal_constant_image_unchanged() {
        let img = RgbImage::constant(64, 48, [120.0, 90.0, 70.0]);
        assert_eq!(remove_hair(&img), img);
    }

    #[test]
    fn hair_removal_erases_thin_dark_line() {
        let img = RgbImage::from_fn(60, 40, |x, _| {
            if x == 30 || x == 31 {
                [20.0, 25.0, 30.0]
            } else {
                [200.0, 180.0, 160.0]
            }
        });
        let out = remove_hair(&img);
        for y in 0..40 {
            for x in 0..60 {
                let px = out.get(x, y);
                assert_eq!(px, [200.0, 180.0, 160.0], "line residue at ({x},{y})");
            }
        }
    }

    #[test]
    fn hair_removal_preserves_wide_dark_blob() {
        let img = RgbImage::from_fn(100, 100, |x, y| {
            let dx = x as f64 - 50.0;
            let dy = y as f64 - 50.0;
            if dx * dx + dy * dy <= 30.0 * 30.0 {
                [30.0, 30.0, 30.0]
            } else {
                [220.0, 220.0, 220.0]
            }
        });
        let out = remove_hair(&img);
        for y in 0..100usize {
            for x in 0..100usize {
                let dx = x as f64 - 50.0;
                let dy = y as f64 - 50.0;
                let d = (dx * dx + dy * dy).sqrt();
                let px = out.get(x, y);
                if d <= 23.0 {
                    assert_eq!(px, [30.0, 30.0, 30.0], "blob interior altered at ({x},{y})");
                } else if d >= 37.0 {
                    assert_eq!(px, [220.0, 220.0, 220.0], "background altered at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn hair_removal_commutes_with_channel_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = RgbImage::from_fn(40, 30, |_, _| {
            [
                rng.gen_range(0.0..255.0),
                rng.gen_range(0.0..255.0),
                rng.gen_range(0.0..255.0),
            ]
        });
        let swapped = RgbImage::from_fn(40, 30, |x, y| {
            let [r, g, b] = img.get(x, y);
            [b, r, g]
        });
        let out = remove_hair(&img);
        let out_swapped = remove_hair(&swapped);
        for y in 0..30 {
            for x in 0..40 {
                let [r, g, b] = out.get(x, y);
                assert_eq!(out_swapped.get(x, y), [b, r, g]);
            }
        }
    }

    #[test]
    fn white_balance_gray_image_is_bitwise_identity() {
        let img = RgbImage::from_fn(25, 25, |x, y| {
            let v = ((x * y) % 200) as f64 + 10.0;
            [v, v, v]
        });
        assert_eq!(white_balance(&img).unwrap(), img);
    }

    #[test]
    fn white_balance_halves_doubled_red_plane() {
        let img = RgbImage::from_fn(16, 16, |x, y| {
            let g = 40.0 + ((x + y) % 20) as f64;
            [2.0 * g, g, g]
        });
        let out = white_balance(&img).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let [r, g, b] = img.get(x, y);
                assert_eq!(out.get(x, y), [r * 0.5, g, b]);
            }
        }
    }

    #[test]
    fn white_balance_equalizes_channel_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let img = RgbImage::from_fn(50, 40, |_, _| {
            [
                rng.gen_range(1.0..255.0),
                rng.gen_range(1.0..255.0),
                rng.gen_range(1.0..255.0),
            ]
        });
        let out = white_balance(&img).unwrap();
        let sums: Vec<f64> = (0..3).map(|c| out.plane(c).iter().sum()).collect();
        assert!((sums[0] - sums[1]).abs() / sums[1] < 1e-6);
        assert!((sums[2] - sums[1]).abs() / sums[1] < 1e-6);
        // Idempotence up to 1e-6: balancing again changes nothing material.
        let again = white_balance(&out).unwrap();
        for c in 0..3 {
            for (a, b) in out.plane(c).iter().zip(again.plane(c)) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn white_balance_rejects_zero_channel() {
        let img = RgbImage::from_fn(8, 8, |_, _| [0.0, 100.0, 50.0]);
        match white_balance(&img) {
            Err(Error::ZeroChannel(0)) => {}
            other => panic!("expected ZeroChannel(0), got {other:?}"),
        }
    }

    #[test]
    fn preprocess_constant_gray_is_identity_with_identity_pad() {
        let img = RgbImage::constant(1024, 1024, [100.0, 100.0, 100.0]);
        let norm = preprocess(&img);
        assert_eq!(norm.image, img);
        assert_eq!(
            norm.pad_info,
            PadInfo {
                original_w: 1024,
                original_h: 1024,
                pad_left: 0,
                pad_top: 0,
                side: 1024
            }
        );
    }

    #[test]
    fn preprocess_records_landscape_pad_info() {
        let img = RgbImage::constant(768, 512, [150.0, 120.0, 110.0]);
        let norm = preprocess(&img);
        assert_eq!(norm.image.width(), 1024);
        assert_eq!(norm.image.height(), 1024);
        assert_eq!(
            norm.pad_info,
            PadInfo {
                original_w: 768,
                original_h: 512,
                pad_left: 0,
                pad_top: 128,
                side: 768
            }
        );
    }

    #[test]
    fn preprocess_equals_stepwise_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let img = RgbImage::from_fn(200, 150, |x, y| {
            let base = 120.0 + 40.0 * ((x as f64 / 200.0) - 0.5);
            let hair = if (x + 2 * y) % 47 == 0 { -80.0 } else { 0.0 };
            let sparkle = if rng.gen::<f64>() < 0.002 { 130.0 } else { 0.0 };
            [
                (base + hair + sparkle).clamp(0.0, 255.0),
                (base * 0.8 + hair + sparkle).clamp(0.0, 255.0),
                (base * 0.7 + hair + sparkle).clamp(0.0, 255.0),
            ]
        });
        let norm = preprocess(&img);
        let (padded, _, _) = pad_to_square(&img);
        let resized = resize_bilinear(&padded, WORKING_SIZE, WORKING_SIZE);
        let expected = white_balance(&remove_hair(&remove_reflections(&resized))).unwrap();
        assert_eq!(norm.image, expected);
    }

    #[test]
    fn mask_roundtrip_restores_dimensions_and_content() {
        let mask = BinaryMask::from_fn(800, 600, |x, y| {
            let dx = (x as f64 - 400.0) / 120.0;
            let dy = (y as f64 - 300.0) / 80.0;
            dx * dx + dy * dy <= 1.0
        });
        assert!(mask.count_ones() >= 1000);
        let normalized = normalize_mask(&mask);
        assert_eq!(normalized.width(), WORKING_SIZE);
        let info = PadInfo {
            original_w: 800,
            original_h: 600,
            pad_left: 0,
            pad_top: 100,
            side: 800,
        };
        let restored = unnormalize_mask(&normalized, &info);
        assert_eq!(restored.width(), 800);
        assert_eq!(restored.height(), 600);
        let inter = mask
            .bits()
            .iter()
            .zip(restored.bits())
            .filter(|(a, b)| **a && **b)
            .count();
        let union = mask
            .bits()
            .iter()
            .zip(restored.bits())
            .filter(|(a, b)| **a || **b)
            .count();
        assert!(inter as f64 / union as f64 >= 0.99, "IoU too low");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn prop_reflections_never_touch_dim_pixels(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = RgbImage::from_fn(40, 30, |_, _| {
                let v: f64 = rng.gen_range(0.0..255.0);
                [v, rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)]
            });
            let b = brightness(&img);
            let t = nearest_rank_percentile(&b, 0.99);
            let out = remove_reflections(&img);
            for y in 0..30 {
                for x in 0..40 {
                    if b[y * 40 + x] <= 0.98 * t {
                        prop_assert_eq!(out.get(x, y), img.get(x, y));
                    }
                }
            }
        }

        #[test]
        fn prop_reflections_match_reference(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = RgbImage::from_fn(24, 18, |_, _| {
                // Mix of dark bulk and occasional highlights.
                if rng.gen::<f64>() < 0.08 {
                    [255.0, 255.0, 255.0]
                } else {
                    let v: f64 = rng.gen_range(20.0..120.0);
                    [v, v * 0.9, v * 0.8]
                }
            });
            prop_assert_eq!(remove_reflections(&img), reference_remove_reflections(&img));
        }

        #[test]
        fn prop_mask_roundtrip_dimension(w in 17usize..300, h in 17usize..300) {
            let mask = BinaryMask::from_fn(w, h, |x, y| (x / 3 + y / 3) % 2 == 0);
            let normalized = normalize_mask(&mask);
            let side = w.max(h);
            let info = PadInfo {
                original_w: w,
                original_h: h,
                pad_left: (side - w) / 2,
                pad_top: (side - h) / 2,
                side,
            };
            let restored = unnormalize_mask(&normalized, &info);
            prop_assert_eq!(restored.width(), w);
            prop_assert_eq!(restored.height(), h);
        }
    }
}
