//! K-means color clustering and candidate region extraction.
//!
//! Pixels of the normalized image are treated as points in 3-D RGB space
//! and partitioned with Lloyd's algorithm (k-means++ seeding, seeded RNG
//! for reproducibility). Each cluster's binary mask is cleaned with an
//! opening followed by a closing (disk of radius 10) and split into
//! 8-connected regions; regions below the minimum area are dropped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::preprocess::NormalizedImage;
use crate::raster::{close, connected_components, disk, open, BinaryMask, Region};

/// Default Lloyd iteration cap.
pub const KMEANS_MAX_ITER: usize = 100;
/// Default relative objective-improvement threshold for convergence.
pub const KMEANS_TOL: f64 = 1e-4;
/// Radius of the disk used to clean per-cluster masks.
const CLEANUP_DISK_RADIUS: u32 = 10;
/// Default minimum region area (pixels at working resolution).
pub const DEFAULT_MIN_AREA: usize = 256;

/// Outcome of one k-means run.
#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub k: usize,
    /// Final centroids; each is the mean of its assigned points.
    pub centroids: Vec<[f64; 3]>,
    /// Cluster index per input point, all `< k`.
    pub labels: Vec<u32>,
    /// Sum of squared distances of points to their assigned centroid.
    pub objective: f64,
    /// Objective after every Lloyd iteration (non-increasing).
    pub objective_history: Vec<f64>,
}

#[inline]
fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dr = a[0] - b[0];
    let dg = a[1] - b[1];
    let db = a[2] - b[2];
    dr * dr + dg * dg + db * db
}

/// Compensated (Neumaier) summation, used for the objective and centroid
/// accumulators so iteration-to-iteration comparisons are not at the mercy
/// of naive float summation order.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// K-means++ seeding: first centroid uniform, each next centroid drawn with
/// probability proportional to the squared distance to the nearest chosen
/// one. When every remaining point coincides with a chosen centroid (total
/// weight zero) the first unchosen index is taken.
fn seed_centroids(points: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let n = points.len();
    let mut chosen_idx = vec![rng.gen_range(0..n)];
    let mut centroids = vec![points[chosen_idx[0]]];
    let mut d2: Vec<f64> = points.iter().map(|&p| dist2(p, centroids[0])).collect();
    while centroids.len() < k {
        let mut total = Kahan::default();
        for &v in &d2 {
            total.add(v);
        }
        let total = total.value();
        let next = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                cum += v;
                if cum > r {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            (0..n)
                .find(|i| !chosen_idx.contains(i))
                .expect("k <= n guarantees an unchosen point")
        };
        chosen_idx.push(next);
        let c = points[next];
        centroids.push(c);
        for (i, &p) in points.iter().enumerate() {
            let d = dist2(p, c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Lloyd's k-means over 3-D points with k-means++ seeding.
///
/// Deterministic for a fixed `(points, k, seed)` triple: the assignment
/// step may run in parallel but writes into a per-point label buffer, and
/// all reductions happen sequentially in index order. Ties in the
/// assignment go to the lowest cluster index. An empty cluster is reseeded
/// to the point farthest from its assigned centroid (ascending cluster
/// order; each reseed excludes points already taken and points that are
/// the sole member of their cluster). Stops when the relative objective
/// improvement drops below `tol` or after `max_iter` iterations.
pub fn kmeans(
    points: &[[f64; 3]],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult> {
    let n = points.len();
    if k < 1 || k > n {
        return Err(Error::InvalidK { k, points: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut labels = vec![0u32; n];
    let mut best_d2 = vec![0.0f64; n];
    let mut history = Vec::new();
    let mut prev_obj: Option<f64> = None;

    for _ in 0..max_iter {
        // Assignment: nearest centroid, lowest index on ties.
        labels
            .par_iter_mut()
            .zip(best_d2.par_iter_mut())
            .enumerate()
            .for_each(|(i, (label, best))| {
                let p = points[i];
                let mut b = f64::INFINITY;
                let mut bl = 0u32;
                for (j, &c) in centroids.iter().enumerate() {
                    let d = dist2(p, c);
                    if d < b {
                        b = d;
                        bl = j as u32;
                    }
                }
                *label = bl;
                *best = b;
            });

        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l as usize] += 1;
        }

        // Reseed empty clusters to far-out points.
        let mut claimed: Vec<usize> = Vec::new();
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let mut far_idx = None;
            let mut far_d = -1.0;
            for i in 0..n {
                if counts[labels[i] as usize] < 2 || claimed.contains(&i) {
                    continue;
                }
                if best_d2[i] > far_d {
                    far_d = best_d2[i];
                    far_idx = Some(i);
                }
            }
            let i = far_idx.expect("k <= n guarantees a donor cluster with >= 2 points");
            counts[labels[i] as usize] -= 1;
            labels[i] = j as u32;
            counts[j] = 1;
            claimed.push(i);
        }

        // Update: each centroid becomes the mean of its members.
        let mut sums = vec![[Kahan::default(); 3]; k];
        for (i, &p) in points.iter().enumerate() {
            let acc = &mut sums[labels[i] as usize];
            acc[0].add(p[0]);
            acc[1].add(p[1]);
            acc[2].add(p[2]);
        }
        for j in 0..k {
            debug_assert!(counts[j] > 0);
            let inv = 1.0 / counts[j] as f64;
            centroids[j] = [
                sums[j][0].value() * inv,
                sums[j][1].value() * inv,
                sums[j][2].value() * inv,
            ];
        }

        // Objective against the updated centroids.
        let mut obj = Kahan::default();
        for (i, &p) in points.iter().enumerate() {
            obj.add(dist2(p, centroids[labels[i] as usize]));
        }
        let obj = obj.value();
        history.push(obj);

        match prev_obj {
            Some(prev) if prev - obj < tol * prev => break,
            _ if obj == 0.0 => break,
            _ => prev_obj = Some(obj),
        }
    }

    let objective = *history.last().expect("at least one iteration runs");
    Ok(KMeansResult {
        k,
        centroids,
        labels,
        objective,
        objective_history: history,
    })
}

/// Candidate lesion regions at a given cluster count.
///
/// Clusters the pixel colors, builds one binary mask per cluster, cleans it
/// with an opening followed by a closing (disk radius 10), extracts
/// 8-connected components and keeps those with at least `min_area` pixels.
/// Regions are returned in (cluster index, scan order) enumeration order.
pub fn cluster_regions(
    img: &NormalizedImage,
    k: usize,
    seed: u64,
    min_area: usize,
) -> Result<Vec<Region>> {
    let (w, h) = (img.image.width(), img.image.height());
    let r = img.image.plane(0);
    let g = img.image.plane(1);
    let b = img.image.plane(2);
    let points: Vec<[f64; 3]> = (0..w * h).map(|i| [r[i], g[i], b[i]]).collect();
    let km = kmeans(&points, k, seed, KMEANS_MAX_ITER, KMEANS_TOL)?;
    let se = disk(CLEANUP_DISK_RADIUS);
    let mut regions = Vec::new();
    for j in 0..k {
        let mut mask = BinaryMask::new(w, h);
        let bits = mask.bits_mut();
        for (i, &l) in km.labels.iter().enumerate() {
            bits[i] = l as usize == j;
        }
        let cleaned = close(&open(&mask, &se), &se);
        for region in connected_components(&cleaned) {
            if region.area() >= min_area {
                regions.push(region);
            }
        }
    }
    Ok(regions)
}
