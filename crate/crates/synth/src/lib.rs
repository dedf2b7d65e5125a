//! Deterministic generator of dermoscopy-style test scenes.
//!
//! Each scene is a skin-toned canvas with a single dark elliptical lesion
//! near the image center, plus the nuisances the pipeline is built to
//! survive: dark hair strokes, bright specular speckles, a smooth
//! illumination gradient, per-pixel noise, and a global color cast. The
//! ground-truth mask is the exact rasterized ellipse, untouched by the
//! nuisances, so segmentation quality can be scored without labeling
//! error.
//!
//! Everything is a pure function of the seed, which keeps corpus-based
//! tests reproducible byte for byte.

use std::path::{Path, PathBuf};

use dermseg_core::raster::{BinaryMask, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A generated scene: the rendered image and its exact lesion mask.
pub struct SynthScene {
    pub image: RgbImage,
    pub mask: BinaryMask,
}

/// Rotated-ellipse membership test in image coordinates.
struct Ellipse {
    cx: f64,
    cy: f64,
    /// Semi-axis lengths.
    a: f64,
    b: f64,
    sin: f64,
    cos: f64,
}

impl Ellipse {
    /// Squared elliptical radius: ≤ 1 inside, 1 on the boundary.
    fn radius2(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = self.cos * dx + self.sin * dy;
        let v = -self.sin * dx + self.cos * dy;
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        self.radius2(x as f64, y as f64) <= 1.0
    }
}

/// Stamps a filled disk of the given color, clipped to the image.
fn stamp_disk(img: &mut RgbImage, cx: f64, cy: f64, radius: f64, color: [f64; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let r = radius.ceil() as i64;
    let (icx, icy) = (cx.round() as i64, cy.round() as i64);
    for y in (icy - r).max(0)..=(icy + r).min(h - 1) {
        for x in (icx - r).max(0)..=(icx + r).min(w - 1) {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx * dx + dy * dy <= radius * radius {
                img.set(x as usize, y as usize, color);
            }
        }
    }
}

/// Renders one scene. Dimensions, lesion geometry and tone, nuisance
/// placement, and the color cast are all drawn from a ChaCha stream seeded
/// with `seed`, so equal seeds give identical scenes.
pub fn synth_scene(seed: u64) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let w: usize = rng.gen_range(700..=900);
    let h: usize = rng.gen_range(560..=760);
    let min_dim = w.min(h) as f64;

    let skin = [
        rng.gen_range(185.0..=205.0),
        rng.gen_range(140.0..=160.0),
        rng.gen_range(125.0..=145.0),
    ];
    let lesion_tone = [
        rng.gen_range(75.0..=105.0),
        rng.gen_range(50.0..=70.0),
        rng.gen_range(45.0..=65.0),
    ];

    let a = min_dim * rng.gen_range(0.20..=0.30);
    let ellipse = Ellipse {
        a,
        b: a * rng.gen_range(0.72..=1.0),
        cx: w as f64 / 2.0 + min_dim * rng.gen_range(-0.06..=0.06),
        cy: h as f64 / 2.0 + min_dim * rng.gen_range(-0.06..=0.06),
        sin: 0.0,
        cos: 0.0,
    };
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let (sin, cos) = theta.sin_cos();
    let ellipse = Ellipse { sin, cos, ..ellipse };

    // Smooth illumination gradient, at most ±8 across the frame.
    let grad_x: f64 = rng.gen_range(-8.0..=8.0);
    let grad_y: f64 = rng.gen_range(-8.0..=8.0);
    // Global color cast, corrected later by white balance.
    let cast = [
        rng.gen_range(0.93..=1.07),
        rng.gen_range(0.93..=1.07),
        rng.gen_range(0.93..=1.07),
    ];

    let mut image = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let r2 = ellipse.radius2(x as f64, y as f64);
            // The lesion core is slightly darker than its rim.
            let base = if r2 <= 1.0 {
                lesion_tone.map(|c| c * (0.85 + 0.15 * r2))
            } else {
                skin
            };
            let shade = grad_x * (x as f64 / w as f64 - 0.5) + grad_y * (y as f64 / h as f64 - 0.5);
            let noise: f64 = rng.gen_range(-4.0..=4.0);
            image.set(x, y, base.map(|c| c + shade + noise));
        }
    }

    // Hair strokes: dark quadratic arcs a few pixels wide.
    let strokes = rng.gen_range(4..=9);
    for _ in 0..strokes {
        let hair = [
            rng.gen_range(40.0..=70.0),
            rng.gen_range(30.0..=50.0),
            rng.gen_range(25.0..=45.0),
        ];
        let p0 = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
        let p1 = (
            p0.0 + rng.gen_range(-350.0..=350.0),
            p0.1 + rng.gen_range(-350.0..=350.0),
        );
        let ctrl = (
            (p0.0 + p1.0) / 2.0 + rng.gen_range(-120.0..=120.0),
            (p0.1 + p1.1) / 2.0 + rng.gen_range(-120.0..=120.0),
        );
        let thickness = rng.gen_range(1.2..=2.2);
        let steps = 400;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let mt = 1.0 - t;
            let x = mt * mt * p0.0 + 2.0 * mt * t * ctrl.0 + t * t * p1.0;
            let y = mt * mt * p0.1 + 2.0 * mt * t * ctrl.1 + t * t * p1.1;
            stamp_disk(&mut image, x, y, thickness, hair);
        }
    }

    // Specular speckles: tiny saturated-white dots, well under 1% of the
    // frame in total so the reflection stage sees them as outliers.
    let speckles = rng.gen_range(4..=10);
    for _ in 0..speckles {
        let x = rng.gen_range(0.0..w as f64);
        let y = rng.gen_range(0.0..h as f64);
        let r = rng.gen_range(1.0..=3.0);
        stamp_disk(&mut image, x, y, r, [255.0, 254.0, 253.0]);
    }

    // Apply the cast and clamp to the valid range.
    for y in 0..h {
        for x in 0..w {
            let px = image.get(x, y);
            image.set(
                x,
                y,
                [0, 1, 2].map(|c| (px[c] * cast[c]).clamp(0.0, 255.0)),
            );
        }
    }

    let mask = BinaryMask::from_fn(w, h, |x, y| ellipse.contains(x, y));
    SynthScene { image, mask }
}

/// Renders `seeds` scenes and writes `lesion_<seed>.png` plus
/// `lesion_<seed>_segmentation.png` into the two directories (created if
/// missing). Returns the (image, mask) path pairs in seed order.
pub fn write_corpus(
    images_dir: &Path,
    masks_dir: &Path,
    seeds: impl IntoIterator<Item = u64>,
) -> dermseg_core::error::Result<Vec<(PathBuf, PathBuf)>> {
    std::fs::create_dir_all(images_dir)
        .map_err(|e| dermseg_core::Error::io(images_dir, e))?;
    std::fs::create_dir_all(masks_dir).map_err(|e| dermseg_core::Error::io(masks_dir, e))?;
    let mut pairs = Vec::new();
    for seed in seeds {
        let scene = synth_scene(seed);
        let image_path = images_dir.join(format!("lesion_{seed:04}.png"));
        let mask_path = masks_dir.join(format!("lesion_{seed:04}_segmentation.png"));
        scene.image.encode_png(&image_path)?;
        scene.mask.encode_png(&mask_path)?;
        pairs.push((image_path, mask_path));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_per_seed() {
        let a = synth_scene(11);
        let b = synth_scene(11);
        assert_eq!(a.mask.bits(), b.mask.bits());
        for c in 0..3 {
            assert_eq!(a.image.plane(c), b.image.plane(c));
        }
        let other = synth_scene(12);
        assert_ne!(a.mask.bits(), other.mask.bits());
    }

    #[test]
    fn lesion_fills_a_plausible_central_fraction() {
        for seed in 0..8 {
            let scene = synth_scene(seed);
            let (w, h) = (scene.mask.width(), scene.mask.height());
            assert!((700..=900).contains(&w));
            assert!((560..=760).contains(&h));
            let fraction = scene.mask.count_ones() as f64 / (w * h) as f64;
            assert!(
                (0.05..=0.45).contains(&fraction),
                "seed {seed}: lesion fraction {fraction}"
            );
            // The mask is one solid ellipse: its bounding box stays away
            // from the frame edges.
            let mut touches_border = false;
            for x in 0..w {
                touches_border |= scene.mask.get(x, 0) || scene.mask.get(x, h - 1);
            }
            for y in 0..h {
                touches_border |= scene.mask.get(0, y) || scene.mask.get(w - 1, y);
            }
            assert!(!touches_border, "seed {seed}: lesion reaches the border");
        }
    }

    #[test]
    fn lesion_is_darker_than_surrounding_skin() {
        for seed in in_range(20, 3) {
            let scene = synth_scene(seed);
            let (w, h) = (scene.mask.width(), scene.mask.height());
            let mut lesion_sum = 0.0;
            let mut lesion_n = 0.0;
            let mut skin_sum = 0.0;
            let mut skin_n = 0.0;
            for y in 0..h {
                for x in 0..w {
                    let px = scene.image.get(x, y);
                    let lum = px[0] + px[1] + px[2];
                    if scene.mask.get(x, y) {
                        lesion_sum += lum;
                        lesion_n += 1.0;
                    } else {
                        skin_sum += lum;
                        skin_n += 1.0;
                    }
                }
            }
            assert!(
                lesion_sum / lesion_n < 0.65 * (skin_sum / skin_n),
                "seed {seed}: lesion not clearly darker"
            );
        }
    }

    fn in_range(start: u64, n: u64) -> std::ops::Range<u64> {
        start..start + n
    }

    #[test]
    fn write_corpus_creates_paired_files() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        let masks = dir.path().join("masks");
        let pairs = write_corpus(&images, &masks, 0..3).unwrap();
        assert_eq!(pairs.len(), 3);
        for (img, mask) in &pairs {
            assert!(img.is_file());
            assert!(mask.is_file());
        }
        assert!(pairs[0].0.ends_with("lesion_0000.png"));
        assert!(pairs[0].1.ends_with("lesion_0000_segmentation.png"));
    }
}
