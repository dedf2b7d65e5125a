//! Corpus statistics and the ten-component per-region feature vector.
//!
//! A [`FeatureStats`] summarizes a training corpus: a max-normalized
//! histogram of lesion areas, a 2-D Gaussian over lesion centroids, and
//! per-channel 1-D Gaussians over per-lesion mean colors. Given those
//! statistics, [`feature_vector`] scores an extracted region with ten
//! values in `[0, 1]`: how typical its area is, how central its position,
//! how round and how convex it is, and how closely its color matches the
//! corpus lesions and the center of its own image.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{self, NormalizedImage};
use crate::raster::{BinaryMask, Region, RgbImage};
use crate::{FORMAT_VERSION, WORKING_SIZE};

/// Number of histogram bins spanning the area range `[0, 1024²]`.
pub const AREA_BINS: usize = 500;

/// Fallback variance for the centroid Gaussian when fewer than two usable
/// masks exist or their covariance is singular.
const CENTROID_FALLBACK_VAR: f64 = 128.0 * 128.0;

/// Corpus-level statistics backing the Gaussian and histogram features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    /// Area histogram over [`AREA_BINS`] uniform bins covering
    /// `[0, 1024²]`, divided by its maximum count (so the modal bin is 1).
    pub area_hist: Vec<f64>,
    /// Mean lesion centroid `(x, y)` in working-frame pixels.
    pub centroid_mean: [f64; 2],
    /// Sample covariance of lesion centroids, row-major.
    pub centroid_cov: [[f64; 2]; 2],
    /// Per-channel mean of the per-lesion mean colors.
    pub color_mean: [f64; 3],
    /// Per-channel sample standard deviation of the per-lesion mean
    /// colors; 1.0 when the spread is zero or only one lesion exists.
    pub color_std: [f64; 3],
}

/// The ten region descriptors, every component in `[0, 1]`.
///
/// The component order is fixed and is part of the model file contract:
/// `[area, position, circularity, solidity, color_r, color_g, color_b,
/// center_r, center_g, center_b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub area: f64,
    pub position: f64,
    pub circularity: f64,
    pub solidity: f64,
    pub color: [f64; 3],
    pub center: [f64; 3],
}

impl FeatureVector {
    /// The components flattened in the fixed declaration order.
    pub fn to_array(self) -> [f64; 10] {
        [
            self.area,
            self.position,
            self.circularity,
            self.solidity,
            self.color[0],
            self.color[1],
            self.color[2],
            self.center[0],
            self.center[1],
            self.center[2],
        ]
    }
}

/// Streaming builder for [`FeatureStats`]: feed one preprocessed image and
/// its working-frame ground-truth mask at a time, then [`finish`].
///
/// [`finish`]: StatsAccumulator::finish
#[derive(Debug, Default)]
pub struct StatsAccumulator {
    areas: Vec<usize>,
    centroids: Vec<[f64; 2]>,
    lesion_colors: Vec<[f64; 3]>,
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of usable (nonempty-mask) entries seen so far.
    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    /// Records one lesion: its mask area and centroid, and its mean color
    /// on the preprocessed image. An empty mask is skipped with a warning.
    pub fn add(&mut self, img: &NormalizedImage, mask: &BinaryMask) {
        let area = mask.count_ones();
        if area == 0 {
            log::warn!("skipping ground-truth mask with zero area");
            return;
        }
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        let mut color = [0.0f64; 3];
        let w = mask.width();
        for (i, &bit) in mask.bits().iter().enumerate() {
            if !bit {
                continue;
            }
            sx += (i % w) as f64;
            sy += (i / w) as f64;
            for (c, acc) in color.iter_mut().enumerate() {
                *acc += img.image.plane(c)[i];
            }
        }
        let n = area as f64;
        self.areas.push(area);
        self.centroids.push([sx / n, sy / n]);
        self.lesion_colors.push(color.map(|s| s / n));
    }

    /// Builds the statistics from everything recorded so far.
    ///
    /// Errors with [`Error::EmptyCorpus`] when no usable mask was added.
    pub fn finish(self) -> Result<FeatureStats> {
        if self.areas.is_empty() {
            return Err(Error::EmptyCorpus);
        }

        let mut counts = vec![0usize; AREA_BINS];
        for &area in &self.areas {
            counts[area_bin(area)] += 1;
        }
        let max = *counts.iter().max().expect("bins are nonempty") as f64;
        let area_hist = counts.iter().map(|&c| c as f64 / max).collect();

        let n = self.centroids.len() as f64;
        let mut centroid_mean = [0.0f64; 2];
        for c in &self.centroids {
            centroid_mean[0] += c[0];
            centroid_mean[1] += c[1];
        }
        centroid_mean[0] /= n;
        centroid_mean[1] /= n;
        let centroid_cov = if self.centroids.len() < 2 {
            [[CENTROID_FALLBACK_VAR, 0.0], [0.0, CENTROID_FALLBACK_VAR]]
        } else {
            let mut cov = [[0.0f64; 2]; 2];
            for c in &self.centroids {
                let dx = c[0] - centroid_mean[0];
                let dy = c[1] - centroid_mean[1];
                cov[0][0] += dx * dx;
                cov[0][1] += dx * dy;
                cov[1][0] += dy * dx;
                cov[1][1] += dy * dy;
            }
            for row in &mut cov {
                for v in row {
                    *v /= n - 1.0;
                }
            }
            let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
            if det > 0.0 && det.is_finite() {
                cov
            } else {
                [[CENTROID_FALLBACK_VAR, 0.0], [0.0, CENTROID_FALLBACK_VAR]]
            }
        };

        let mut color_mean = [0.0f64; 3];
        for lc in &self.lesion_colors {
            for (c, m) in color_mean.iter_mut().enumerate() {
                *m += lc[c];
            }
        }
        for m in &mut color_mean {
            *m /= n;
        }
        let mut color_std = [1.0f64; 3];
        if self.lesion_colors.len() >= 2 {
            for (c, out) in color_std.iter_mut().enumerate() {
                let ss: f64 = self
                    .lesion_colors
                    .iter()
                    .map(|lc| (lc[c] - color_mean[c]).powi(2))
                    .sum();
                let std = (ss / (n - 1.0)).sqrt();
                if std > 0.0 {
                    *out = std;
                }
            }
        }

        Ok(FeatureStats {
            area_hist,
            centroid_mean,
            centroid_cov,
            color_mean,
            color_std,
        })
    }
}

/// Builds [`FeatureStats`] from raw image/ground-truth pairs: each image
/// is preprocessed and each mask geometry-normalized to the working frame
/// before being fed to a [`StatsAccumulator`].
pub fn build_feature_stats(corpus: &[(RgbImage, BinaryMask)]) -> Result<FeatureStats> {
    let mut acc = StatsAccumulator::new();
    for (img, mask) in corpus {
        let norm = preprocess::preprocess(img);
        let gt = preprocess::normalize_mask(mask);
        acc.add(&norm, &gt);
    }
    acc.finish()
}

/// Histogram bin for an area: `min(floor(area·500/1024²), 499)`.
pub fn area_bin(area: usize) -> usize {
    (area * AREA_BINS / (WORKING_SIZE * WORKING_SIZE)).min(AREA_BINS - 1)
}

/// How frequent the region's area is in the corpus: the height of its
/// histogram bin, 1 for the modal bin and 0 for areas never seen.
pub fn area_feature(area: usize, stats: &FeatureStats) -> f64 {
    stats.area_hist[area_bin(area)]
}

/// Height of the corpus centroid Gaussian at `centroid`, peak-normalized
/// to 1: `exp(−½·(c−μ)ᵀ Σ⁻¹ (c−μ))`.
pub fn position_feature(centroid: (f64, f64), stats: &FeatureStats) -> f64 {
    let dx = centroid.0 - stats.centroid_mean[0];
    let dy = centroid.1 - stats.centroid_mean[1];
    let [[a, b], [c, d]] = stats.centroid_cov;
    let det = a * d - b * c;
    debug_assert!(det > 0.0, "centroid covariance must be positive-definite");
    // Mahalanobis distance squared via the 2×2 inverse; clamped at zero to
    // absorb rounding on near-degenerate covariances.
    let md2 = ((d * dx * dx - (b + c) * dx * dy + a * dy * dy) / det).max(0.0);
    (-0.5 * md2).exp()
}

/// Isoperimetric roundness `min(1, 4π·area/perimeter²)`. A single pixel
/// has no boundary walk and counts as perfectly circular.
pub fn circularity(region: &Region) -> f64 {
    let p = region.perimeter();
    if p == 0.0 {
        return 1.0;
    }
    (4.0 * PI * region.area() as f64 / (p * p)).min(1.0)
}

/// Fraction of the region's convex hull that the region fills:
/// `area / convex_area`.
pub fn solidity(region: &Region) -> f64 {
    region.area() as f64 / region.convex_area() as f64
}

/// Peak-normalized 1-D Gaussian: `exp(−(x−mean)²/(2·std²))`.
fn gaussian1(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    (-0.5 * z * z).exp()
}

/// Mean color of the region's pixels on a working-frame image.
fn region_mean_color(region: &Region, img: &RgbImage) -> [f64; 3] {
    let mut sum = [0.0f64; 3];
    for &(x, y) in region.pixels() {
        let px = img.get(x as usize, y as usize);
        for (c, acc) in sum.iter_mut().enumerate() {
            *acc += px[c];
        }
    }
    sum.map(|s| s / region.area() as f64)
}

/// Per-channel similarity between the region's mean color and the corpus
/// lesion color Gaussians.
pub fn color_features(region: &Region, img: &NormalizedImage, stats: &FeatureStats) -> [f64; 3] {
    let m = region_mean_color(region, &img.image);
    std::array::from_fn(|c| gaussian1(m[c], stats.color_mean[c], stats.color_std[c]))
}

/// Inclusive row/column bounds of the central block when a side of length
/// `s` is cut into three near-equal parts: `[floor(s/3), ceil(2s/3) − 1]`.
fn central_block_bounds(s: usize) -> (usize, usize) {
    (s / 3, (2 * s).div_ceil(3) - 1)
}

/// Per-channel similarity between the region's mean color and the color
/// distribution of the image's central block (the middle square when the
/// frame is split 3×3). The block's per-channel standard deviation is the
/// population one, with fallback 1.0 for a constant block.
pub fn center_similarity_features(region: &Region, img: &NormalizedImage) -> [f64; 3] {
    let image = &img.image;
    let (x0, x1) = central_block_bounds(image.width());
    let (y0, y1) = central_block_bounds(image.height());
    let n = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;

    let m = region_mean_color(region, image);
    std::array::from_fn(|c| {
        let plane = image.plane(c);
        let mut sum = 0.0f64;
        for y in y0..=y1 {
            for x in x0..=x1 {
                sum += plane[y * image.width() + x];
            }
        }
        let mean = sum / n;
        let mut ss = 0.0f64;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = plane[y * image.width() + x] - mean;
                ss += d * d;
            }
        }
        let std = (ss / n).sqrt();
        gaussian1(m[c], mean, if std > 0.0 { std } else { 1.0 })
    })
}

/// Computes all ten descriptors for one region.
pub fn feature_vector(region: &Region, img: &NormalizedImage, stats: &FeatureStats) -> FeatureVector {
    FeatureVector {
        area: area_feature(region.area(), stats),
        position: position_feature(region.centroid(), stats),
        circularity: circularity(region),
        solidity: solidity(region),
        color: color_features(region, img, stats),
        center: center_similarity_features(region, img),
    }
}

/// On-disk envelope for [`FeatureStats`].
#[derive(Serialize, Deserialize)]
struct StatsFile {
    format_version: u32,
    stats: FeatureStats,
}

/// Writes the statistics as a versioned JSON document.
pub fn save_stats(stats: &FeatureStats, path: &Path) -> Result<()> {
    let file = StatsFile {
        format_version: FORMAT_VERSION,
        stats: stats.clone(),
    };
    let text = serde_json::to_string_pretty(&file).expect("stats serialize cannot fail");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads statistics written by [`save_stats`], checking the format version
/// and structural sanity.
pub fn load_stats(path: &Path) -> Result<FeatureStats> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: StatsFile =
        serde_json::from_str(&text).map_err(|e| Error::corrupt(path, e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_owned(),
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    validate_stats(&file.stats).map_err(|reason| Error::corrupt(path, reason))?;
    Ok(file.stats)
}

/// Structural sanity checks applied when loading persisted statistics.
fn validate_stats(stats: &FeatureStats) -> std::result::Result<(), String> {
    if stats.area_hist.len() != AREA_BINS {
        return Err(format!(
            "area histogram has {} bins, expected {AREA_BINS}",
            stats.area_hist.len()
        ));
    }
    if stats.area_hist.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err("area histogram values outside [0, 1]".into());
    }
    let [[a, b], [c, d]] = stats.centroid_cov;
    let finite = [a, b, c, d, stats.centroid_mean[0], stats.centroid_mean[1]]
        .iter()
        .all(|v| v.is_finite());
    if !finite || b != c || a <= 0.0 || a * d - b * c <= 0.0 {
        return Err("centroid covariance is not symmetric positive-definite".into());
    }
    if stats.color_mean.iter().any(|v| !v.is_finite()) {
        return Err("color means are not finite".into());
    }
    if stats.color_std.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err("color standard deviations must be positive".into());
    }
    Ok(())
}
