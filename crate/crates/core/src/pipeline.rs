//! The increase-k segmentation loop: clusters at growing k, scores every
//! candidate region with the model ensemble, keeps the best region seen,
//! and stops once a larger k no longer improves the best score. The
//! winning region is cleaned up morphologically and mapped back to the
//! original image geometry.

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_regions, DEFAULT_MIN_AREA};
use crate::error::{Error, Result};
use crate::features::feature_vector;
use crate::preprocess::{self, NormalizedImage};
use crate::raster::{close, dilate, disk, fill_holes, BinaryMask, Region, RgbImage};
use crate::regression::{ensemble_score, ModelBundle};

/// Disk radius of the final closing applied to the winning mask.
pub const POSTPROCESS_CLOSE_RADIUS: u32 = 30;
/// Disk radius of the final dilation applied after the closing.
pub const POSTPROCESS_DILATE_RADIUS: u32 = 14;

/// Knobs of the segmentation loop. All fields have defaults, so partial
/// configuration files can omit any of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// First cluster count tried.
    pub k_start: usize,
    /// Safety cap on the cluster count; the loop never exceeds it.
    pub k_max: usize,
    /// A round must beat the running best score by more than this to keep
    /// the loop going.
    pub improvement_tol: f64,
    /// Seed for the clustering initialization.
    pub seed: u64,
    /// Minimum candidate region area in working-frame pixels.
    pub min_area: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            k_start: 3,
            k_max: 12,
            improvement_tol: 1e-6,
            seed: 0,
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_start < 1 || self.k_start > self.k_max {
            return Err(Error::InvalidParameter(format!(
                "cluster range {}..={} is empty or starts below 1",
                self.k_start, self.k_max
            )));
        }
        if !(self.improvement_tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "improvement tolerance must be non-negative, got {}",
                self.improvement_tol
            )));
        }
        Ok(())
    }
}

/// Result of segmenting one image.
#[derive(Debug, Clone)]
pub struct SegmentationOutcome {
    /// Lesion mask at the original image dimensions.
    pub mask: BinaryMask,
    /// Ensemble score of the winning region (0 for the no-region fallback).
    pub best_score: f64,
    /// Cluster count at which the winner was found (0 for the fallback).
    pub best_k: usize,
    /// Best score of each productive clustering round, for diagnostics.
    pub per_k_best: Vec<(usize, f64)>,
}

/// Winner and diagnostics of one scored k-loop.
pub(crate) struct LoopSummary {
    /// Winning region, its score, and the k it was found at.
    pub best: Option<(Region, f64, usize)>,
    pub per_k_best: Vec<(usize, f64)>,
}

/// Drives the increase-k loop over an already-preprocessed image, calling
/// `score` for every candidate region in (k, cluster, scan) enumeration
/// order.
///
/// The loop stops after a round whose best score fails to exceed the
/// running best from earlier rounds by more than the tolerance, after a
/// regionless round once any candidate exists, or at `k_max`. Rounds that
/// produce no region while nothing has been found yet keep the loop going:
/// a later k may still find candidates. Equal-scored candidates are
/// resolved toward larger area, then earlier enumeration (lower cluster
/// index, then scan order), and earlier rounds.
pub(crate) fn run_scored_loop(
    img: &NormalizedImage,
    cfg: &SegmentationConfig,
    score: impl FnMut(usize, &Region) -> f64,
) -> Result<LoopSummary> {
    run_loop_with(
        cfg,
        |k| cluster_regions(img, k, cfg.seed, cfg.min_area),
        score,
    )
}

/// [`run_scored_loop`] with the per-k region source factored out, so the
/// loop accounting can also drive scripted region sequences.
pub(crate) fn run_loop_with(
    cfg: &SegmentationConfig,
    mut regions_for: impl FnMut(usize) -> Result<Vec<Region>>,
    mut score: impl FnMut(usize, &Region) -> f64,
) -> Result<LoopSummary> {
    let mut best: Option<(Region, f64, usize)> = None;
    let mut per_k_best = Vec::new();
    for k in cfg.k_start..=cfg.k_max {
        let previous_best = best.as_ref().map(|&(_, s, _)| s);
        let mut round_best: Option<f64> = None;
        for region in regions_for(k)? {
            let s = score(k, &region);
            round_best = Some(round_best.map_or(s, |r: f64| r.max(s)));
            let replaces = match &best {
                None => true,
                Some((b, bs, _)) => s > *bs || (s == *bs && region.area() > b.area()),
            };
            if replaces {
                best = Some((region, s, k));
            }
        }
        match round_best {
            Some(rb) => {
                per_k_best.push((k, rb));
                if let Some(pb) = previous_best {
                    if rb <= pb + cfg.improvement_tol {
                        break;
                    }
                }
            }
            // A round that finds nothing cannot have improved on an
            // existing best.
            None if previous_best.is_some() => break,
            None => {}
        }
    }
    Ok(LoopSummary { best, per_k_best })
}

/// Final mask cleanup: fill enclosed holes, close with a disk of radius
/// 30, then dilate with a disk of radius 14. Purely extensive — the input
/// mask is always contained in the output.
pub fn postprocess(mask: &BinaryMask) -> BinaryMask {
    let filled = fill_holes(mask);
    let closed = close(&filled, &disk(POSTPROCESS_CLOSE_RADIUS));
    dilate(&closed, &disk(POSTPROCESS_DILATE_RADIUS))
}

/// Segments a raw image: preprocess, run the scored k-loop, postprocess
/// the winner, and map it back to the original geometry.
///
/// When no cluster count yields a candidate region, a warning is logged
/// and the full-image mask is returned with a score of 0 (an empty
/// prediction would score a Jaccard index of 0 against any lesion, so
/// covering everything is the safer degenerate answer).
pub fn segment(
    img: &RgbImage,
    bundle: &ModelBundle,
    cfg: &SegmentationConfig,
) -> Result<SegmentationOutcome> {
    cfg.validate()?;
    let norm = preprocess::preprocess(img);
    segment_normalized(&norm, bundle, cfg)
}

/// [`segment`] for an image that is already in the working frame; useful
/// when the caller preprocesses once and reuses the result.
pub fn segment_normalized(
    norm: &NormalizedImage,
    bundle: &ModelBundle,
    cfg: &SegmentationConfig,
) -> Result<SegmentationOutcome> {
    cfg.validate()?;
    let summary = run_scored_loop(norm, cfg, |_, region| {
        ensemble_score(bundle, &feature_vector(region, norm, &bundle.stats))
    })?;
    let info = &norm.pad_info;
    match summary.best {
        Some((region, score, k)) => Ok(SegmentationOutcome {
            mask: preprocess::unnormalize_mask(&postprocess(region.mask()), info),
            best_score: score,
            best_k: k,
            per_k_best: summary.per_k_best,
        }),
        None => {
            log::warn!(
                "no candidate region at any cluster count in {}..={}; returning the full-image mask",
                cfg.k_start,
                cfg.k_max
            );
            Ok(SegmentationOutcome {
                mask: BinaryMask::full(info.original_w, info.original_h),
                best_score: 0.0,
                best_k: 0,
                per_k_best: summary.per_k_best,
            })
        }
    }
}
