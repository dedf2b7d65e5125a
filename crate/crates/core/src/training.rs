//! Model training: corpus discovery, the Jaccard metric, naive-scored
//! sample generation, trainer orchestration, and evaluation reports.
//!
//! Training runs the exact segmentation loop used at prediction time, but
//! with the model ensemble replaced by a bootstrap score (the plain sum of
//! the ten feature values). Every candidate region produced at every
//! visited cluster count becomes one supervised sample whose target is the
//! region's Jaccard index against the ground-truth mask.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::cluster_regions;
use crate::error::{Error, Result};
use crate::features::{feature_vector, FeatureStats, FeatureVector, StatsAccumulator};
use crate::pipeline::{self, SegmentationConfig};
use crate::preprocess::{self, NormalizedImage};
use crate::raster::{BinaryMask, Region, RgbImage};
use crate::regression::{train_forest, train_svr, ModelBundle, SvrParams, TrainingSample};

/// Filename suffix that links a ground-truth mask to its image:
/// `X.jpg` pairs with `X_segmentation.png`.
pub const DEFAULT_MASK_SUFFIX: &str = "_segmentation";

/// File extensions recognised when scanning an image directory.
const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "bmp", "tif", "tiff"];

/// One image / ground-truth pair, stored as paths and decoded on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub image: PathBuf,
    pub mask: PathBuf,
}

impl CorpusEntry {
    /// Decodes both files and checks that their dimensions agree.
    pub fn load(&self) -> Result<(RgbImage, BinaryMask)> {
        let img = RgbImage::decode_path(&self.image)?;
        let mask = BinaryMask::decode_path(&self.mask)?;
        if img.width() != mask.width() || img.height() != mask.height() {
            return Err(Error::DimensionMismatch(
                img.width(),
                img.height(),
                mask.width(),
                mask.height(),
            ));
        }
        Ok((img, mask))
    }

    /// Short display name (the image file name) for logs and reports.
    pub fn name(&self) -> String {
        self.image
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.image.display().to_string())
    }
}

/// An ordered list of image / ground-truth mask pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    entries: Vec<CorpusEntry>,
}

impl Corpus {
    /// Builds a corpus from explicit (image, mask) path pairs, kept in the
    /// given order.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (PathBuf, PathBuf)>) -> Self {
        Self {
            entries: pairs
                .into_iter()
                .map(|(image, mask)| CorpusEntry { image, mask })
                .collect(),
        }
    }

    /// Scans `images` for image files and pairs each `X.<ext>` with a mask
    /// `X<mask_suffix>.<ext>` in `masks` (PNG preferred). Entries are
    /// sorted by image path so corpus order does not depend on directory
    /// iteration order. A missing mask is an error: silently dropping
    /// training pairs would skew the corpus statistics.
    pub fn pair_directories(images: &Path, masks: &Path, mask_suffix: &str) -> Result<Self> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(images)
            .map_err(|e| Error::io(images, e))?
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(images, e))?
            .into_iter()
            .map(|entry| entry.path())
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        files.sort();

        let mut entries = Vec::with_capacity(files.len());
        for image in files {
            let stem = image.file_stem().unwrap_or_default().to_string_lossy();
            let mask_stem = format!("{stem}{mask_suffix}");
            let mask = IMAGE_EXTENSIONS
                .iter()
                .map(|ext| masks.join(format!("{mask_stem}.{ext}")))
                .find(|candidate| candidate.is_file())
                .ok_or_else(|| {
                    Error::MissingMask(image.clone(), masks.join(format!("{mask_stem}.png")))
                })?;
            entries.push(CorpusEntry { image, mask });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Jaccard index `|a∩b| / |a∪b|` of two equal-sized masks. Two empty
/// masks are identical sets, so their index is 1.
pub fn jaccard(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    let mut intersection = 0u64;
    let mut union = 0u64;
    for (&pa, &pb) in a.bits().iter().zip(b.bits()) {
        intersection += (pa && pb) as u64;
        union += (pa || pb) as u64;
    }
    Ok(if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    })
}

/// Bootstrap score used while generating training samples: the plain sum
/// of the ten feature values, in `[0, 10]`.
pub fn naive_score(x: &FeatureVector) -> f64 {
    x.to_array().iter().sum()
}

/// Runs the naive-scored cluster loop over every corpus entry and collects
/// one sample per candidate region produced at every visited cluster
/// count. Samples stay in corpus order regardless of how entries are
/// scheduled; entries that fail to load are logged and skipped.
pub fn generate_samples(
    corpus: &Corpus,
    stats: &FeatureStats,
    cfg: &SegmentationConfig,
) -> Result<Vec<TrainingSample>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    cfg.validate()?;
    let per_entry: Vec<Vec<TrainingSample>> = corpus
        .entries()
        .par_iter()
        .map(|entry| match entry_samples(entry, stats, cfg) {
            Ok(samples) => samples,
            Err(err) => {
                log::warn!("skipping {}: {err}", entry.image.display());
                Vec::new()
            }
        })
        .collect();
    Ok(per_entry.into_iter().flatten().collect())
}

/// Samples from a single corpus entry: preprocess the image, normalize the
/// ground truth into the working frame, and run the collection loop.
fn entry_samples(
    entry: &CorpusEntry,
    stats: &FeatureStats,
    cfg: &SegmentationConfig,
) -> Result<Vec<TrainingSample>> {
    let (img, mask) = entry.load()?;
    let norm = preprocess::preprocess(&img);
    let gt = preprocess::normalize_mask(&mask);
    collect_samples(&norm, &gt, stats, cfg, |k| {
        cluster_regions(&norm, k, cfg.seed, cfg.min_area)
    })
}

/// The collection loop itself: identical k-schedule and stop rule as
/// prediction, with the scorer replaced by [`naive_score`]. Every region it
/// scores is recorded as a (features, Jaccard-vs-truth) sample. The region
/// source is a parameter so the accounting can be tested with scripted
/// region sequences.
fn collect_samples(
    norm: &NormalizedImage,
    gt: &BinaryMask,
    stats: &FeatureStats,
    cfg: &SegmentationConfig,
    regions_for: impl FnMut(usize) -> Result<Vec<Region>>,
) -> Result<Vec<TrainingSample>> {
    let mut samples = Vec::new();
    pipeline::run_loop_with(cfg, regions_for, |_, region| {
        let features = feature_vector(region, norm, stats);
        let target = jaccard(region.mask(), gt).expect("regions live in the ground-truth frame");
        samples.push(TrainingSample { features, target });
        naive_score(&features)
    })?;
    Ok(samples)
}

/// Trains the full model bundle from a corpus: corpus statistics first,
/// then naive-scored samples, then both regressors. Deterministic for a
/// fixed corpus, configuration, and seed.
pub fn train(corpus: &Corpus, cfg: &SegmentationConfig, seed: u64) -> Result<ModelBundle> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    cfg.validate()?;

    let mut acc = StatsAccumulator::new();
    for entry in corpus.entries() {
        match entry.load() {
            Ok((img, mask)) => {
                let norm = preprocess::preprocess(&img);
                acc.add(&norm, &preprocess::normalize_mask(&mask));
            }
            Err(err) => log::warn!("skipping {}: {err}", entry.image.display()),
        }
    }
    let stats = acc.finish()?;

    let samples = generate_samples(corpus, &stats, cfg)?;
    log::info!(
        "training regressors on {} samples from {} images",
        samples.len(),
        corpus.len()
    );
    let forest = train_forest(&samples, seed)?;
    let svr = train_svr(&samples, SvrParams::default())?;
    Ok(ModelBundle { forest, svr, stats })
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Image file name.
    pub image: String,
    /// Jaccard index against the ground truth at original resolution; 0
    /// when the image could not be scored.
    pub jaccard: f64,
    /// The failure message when the image could not be scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Aggregate segmentation quality over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_image: Vec<EvalRecord>,
    pub mean_jaccard: f64,
    pub median_jaccard: f64,
}

impl EvalReport {
    /// Renders the report as CSV: a header, one row per image, and two
    /// summary rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,jaccard,note\n");
        for r in &self.per_image {
            out.push_str(&format!(
                "{},{},{}\n",
                csv_field(&r.image),
                r.jaccard,
                csv_field(r.note.as_deref().unwrap_or(""))
            ));
        }
        out.push_str(&format!("mean,{},\n", self.mean_jaccard));
        out.push_str(&format!("median,{},\n", self.median_jaccard));
        out
    }
}

/// Quotes a CSV field only when it needs quoting.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Segments every corpus image with the trained bundle and scores the
/// result against the ground truth at the original resolution. A failing
/// image is recorded as Jaccard 0 with a note instead of aborting the run.
pub fn evaluate(
    corpus: &Corpus,
    bundle: &ModelBundle,
    cfg: &SegmentationConfig,
) -> Result<EvalReport> {
    evaluate_with(corpus, |_, img| {
        pipeline::segment(img, bundle, cfg).map(|outcome| outcome.mask)
    })
}

/// [`evaluate`] with the segmenter factored out (receiving the entry index
/// and decoded image), so report mechanics can be tested with stub
/// predictors.
fn evaluate_with(
    corpus: &Corpus,
    mut segmenter: impl FnMut(usize, &RgbImage) -> Result<BinaryMask>,
) -> Result<EvalReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut per_image = Vec::with_capacity(corpus.len());
    for (i, entry) in corpus.entries().iter().enumerate() {
        let name = entry.name();
        let scored = entry
            .load()
            .and_then(|(img, gt)| segmenter(i, &img).and_then(|pred| jaccard(&pred, &gt)));
        match scored {
            Ok(j) => per_image.push(EvalRecord {
                image: name,
                jaccard: j,
                note: None,
            }),
            Err(err) => {
                log::warn!("evaluation of {name} failed: {err}");
                per_image.push(EvalRecord {
                    image: name,
                    jaccard: 0.0,
                    note: Some(err.to_string()),
                });
            }
        }
    }
    let mean_jaccard =
        per_image.iter().map(|r| r.jaccard).sum::<f64>() / per_image.len() as f64;
    let median_jaccard = median(per_image.iter().map(|r| r.jaccard).collect());
    Ok(EvalReport {
        per_image,
        mean_jaccard,
        median_jaccard,
    })
}

/// Median of a nonempty list; the mean of the two middle values when the
/// count is even.
fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::AREA_BINS;
    use crate::preprocess::PadInfo;
    use crate::raster::connected_components;
    use proptest::prelude::*;

    fn mask_from_rects(w: usize, h: usize, rects: &[(usize, usize, usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            rects
                .iter()
                .any(|&(x0, y0, x1, y1)| x >= x0 && x < x1 && y >= y0 && y < y1)
        })
    }

    #[test]
    fn jaccard_identical_nonempty_is_one() {
        let m = mask_from_rects(16, 16, &[(2, 2, 10, 10)]);
        assert_eq!(jaccard(&m, &m).unwrap(), 1.0);
    }

    #[test]
    fn jaccard_disjoint_nonempty_is_zero() {
        let a = mask_from_rects(16, 16, &[(0, 0, 4, 4)]);
        let b = mask_from_rects(16, 16, &[(8, 8, 12, 12)]);
        assert_eq!(jaccard(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn jaccard_of_subset_is_count_ratio() {
        // 100-pixel mask against its 50-pixel subset: intersection 50,
        // union 100.
        let a = mask_from_rects(20, 20, &[(0, 0, 10, 10)]);
        let b = mask_from_rects(20, 20, &[(0, 0, 5, 10)]);
        assert_eq!(a.count_ones(), 100);
        assert_eq!(b.count_ones(), 50);
        assert_eq!(jaccard(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn jaccard_of_two_empty_masks_is_one() {
        let a = BinaryMask::new(7, 5);
        let b = BinaryMask::new(7, 5);
        assert_eq!(jaccard(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn jaccard_rejects_mismatched_dimensions() {
        let a = BinaryMask::new(8, 8);
        let b = BinaryMask::new(8, 9);
        assert!(matches!(
            jaccard(&a, &b),
            Err(Error::DimensionMismatch(8, 8, 8, 9))
        ));
    }

    proptest! {
        #[test]
        fn jaccard_is_symmetric_bounded_and_reflexive(
            bits_a in proptest::collection::vec(any::<bool>(), 64),
            bits_b in proptest::collection::vec(any::<bool>(), 64),
        ) {
            let mut a = BinaryMask::new(8, 8);
            let mut b = BinaryMask::new(8, 8);
            a.bits_mut().copy_from_slice(&bits_a);
            b.bits_mut().copy_from_slice(&bits_b);
            let ab = jaccard(&a, &b).unwrap();
            let ba = jaccard(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn naive_score_sums_the_ten_components() {
        let zeros = FeatureVector {
            area: 0.0,
            position: 0.0,
            circularity: 0.0,
            solidity: 0.0,
            color: [0.0; 3],
            center: [0.0; 3],
        };
        let ones = FeatureVector {
            area: 1.0,
            position: 1.0,
            circularity: 1.0,
            solidity: 1.0,
            color: [1.0; 3],
            center: [1.0; 3],
        };
        let halves = FeatureVector {
            area: 0.5,
            position: 0.5,
            circularity: 0.5,
            solidity: 0.5,
            color: [0.5; 3],
            center: [0.5; 3],
        };
        assert_eq!(naive_score(&zeros), 0.0);
        assert_eq!(naive_score(&ones), 10.0);
        assert_eq!(naive_score(&halves), 5.0);
    }

    /// Statistics that keep every feature well-defined on a constant
    /// 64×64 test frame.
    fn scripted_stats() -> FeatureStats {
        FeatureStats {
            area_hist: vec![0.0; AREA_BINS],
            centroid_mean: [24.0, 24.0],
            centroid_cov: [[100.0, 0.0], [0.0, 100.0]],
            color_mean: [128.0, 128.0, 128.0],
            color_std: [1.0, 1.0, 1.0],
        }
    }

    fn scripted_frame() -> NormalizedImage {
        NormalizedImage {
            image: RgbImage::constant(64, 64, [128.0, 128.0, 128.0]),
            pad_info: PadInfo {
                original_w: 64,
                original_h: 64,
                pad_left: 0,
                pad_top: 0,
                side: 64,
            },
        }
    }

    /// Four regions at k=3 and the same four plus a worse one at k=4: the
    /// k=4 round cannot improve on the running best, so the loop stops
    /// there and 4 + 5 = 9 samples come out. The ground truth equals the
    /// second region exactly, so its two appearances hit target 1 and the
    /// disjoint rest hit target 0.
    #[test]
    fn scripted_loop_yields_one_sample_per_region() {
        let norm = scripted_frame();
        let stats = scripted_stats();
        let cfg = SegmentationConfig::default();
        let diag = [
            (4, 4, 12, 12),
            (20, 20, 28, 28),
            (36, 36, 44, 44),
            (52, 52, 60, 60),
        ];
        let k3 = mask_from_rects(64, 64, &diag);
        let mut with_extra = diag.to_vec();
        // Far from the centroid mean, so its position feature cannot beat
        // the incumbent round best.
        with_extra.push((4, 52, 12, 60));
        let k4 = mask_from_rects(64, 64, &with_extra);
        let gt = mask_from_rects(64, 64, &[diag[1]]);

        let samples = collect_samples(&norm, &gt, &stats, &cfg, |k| {
            Ok(match k {
                3 => connected_components(&k3),
                4 => connected_components(&k4),
                other => panic!("loop should have stopped before k={other}"),
            })
        })
        .unwrap();

        assert_eq!(samples.len(), 9);
        let perfect = samples.iter().filter(|s| s.target == 1.0).count();
        let disjoint = samples.iter().filter(|s| s.target == 0.0).count();
        assert_eq!(perfect, 2, "the ground-truth region appears at k=3 and k=4");
        assert_eq!(disjoint, 7);
        for s in &samples {
            for v in s.features.to_array() {
                assert!((0.0..=1.0).contains(&v), "feature out of range: {v}");
            }
        }
    }

    /// Writes a small PNG image + mask pair designed so the cluster loop
    /// finds the dark blob: dark square lesion on a bright background.
    fn write_pair(
        dir: &Path,
        name: &str,
        blob: (usize, usize, usize, usize),
        tone: [f64; 3],
    ) -> (PathBuf, PathBuf) {
        let (x0, y0, x1, y1) = blob;
        let img = RgbImage::from_fn(48, 48, |x, y| {
            if x >= x0 && x < x1 && y >= y0 && y < y1 {
                tone
            } else {
                [200.0, 160.0, 140.0]
            }
        });
        let mask = mask_from_rects(48, 48, &[blob]);
        let image_path = dir.join(format!("{name}.png"));
        let mask_path = dir.join(format!("{name}_segmentation.png"));
        img.encode_png(&image_path).unwrap();
        mask.encode_png(&mask_path).unwrap();
        (image_path, mask_path)
    }

    #[test]
    fn generate_samples_concatenates_in_corpus_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_pair(dir.path(), "a", (8, 8, 28, 28), [90.0, 60.0, 55.0]);
        let b = write_pair(dir.path(), "b", (20, 20, 40, 40), [60.0, 80.0, 110.0]);
        let corpus = Corpus::from_pairs([a, b]);
        let cfg = SegmentationConfig::default();

        let mut acc = StatsAccumulator::new();
        for entry in corpus.entries() {
            let (img, mask) = entry.load().unwrap();
            acc.add(&preprocess::preprocess(&img), &preprocess::normalize_mask(&mask));
        }
        let stats = acc.finish().unwrap();

        let per_entry: Vec<Vec<TrainingSample>> = corpus
            .entries()
            .iter()
            .map(|e| entry_samples(e, &stats, &cfg).unwrap())
            .collect();
        let all = generate_samples(&corpus, &stats, &cfg).unwrap();

        assert!(!per_entry[0].is_empty());
        assert!(!per_entry[1].is_empty());
        assert_eq!(all.len(), per_entry[0].len() + per_entry[1].len());
        assert_eq!(&all[..per_entry[0].len()], &per_entry[0][..]);
        assert_eq!(&all[per_entry[0].len()..], &per_entry[1][..]);
        for s in &all {
            assert!((0.0..=1.0).contains(&s.target));
        }
    }

    #[test]
    fn generate_samples_requires_a_corpus() {
        let stats = scripted_stats();
        assert!(matches!(
            generate_samples(&Corpus::default(), &stats, &SegmentationConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn train_rejects_an_empty_corpus() {
        assert!(matches!(
            train(&Corpus::default(), &SegmentationConfig::default(), 7),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn train_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_pair(dir.path(), "a", (8, 8, 28, 28), [90.0, 60.0, 55.0]);
        let b = write_pair(dir.path(), "b", (16, 14, 38, 36), [100.0, 70.0, 60.0]);
        let corpus = Corpus::from_pairs([a, b]);
        let cfg = SegmentationConfig::default();

        let first = train(&corpus, &cfg, 42).unwrap();
        let second = train(&corpus, &cfg, 42).unwrap();
        assert_eq!(
            serde_json::to_vec(&first).unwrap(),
            serde_json::to_vec(&second).unwrap()
        );
    }

    #[test]
    fn pair_directories_sorts_and_pairs_by_stem() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        let masks = dir.path().join("masks");
        std::fs::create_dir_all(&images).unwrap();
        std::fs::create_dir_all(&masks).unwrap();
        let tiny = RgbImage::constant(4, 4, [1.0, 2.0, 3.0]);
        let tiny_mask = BinaryMask::new(4, 4);
        for name in ["c", "a", "b"] {
            tiny.encode_png(&images.join(format!("{name}.png"))).unwrap();
            tiny_mask
                .encode_png(&masks.join(format!("{name}_segmentation.png")))
                .unwrap();
        }
        std::fs::write(images.join("notes.txt"), "not an image").unwrap();

        let corpus = Corpus::pair_directories(&images, &masks, DEFAULT_MASK_SUFFIX).unwrap();
        let names: Vec<String> = corpus.entries().iter().map(|e| e.name()).collect();
        assert_eq!(names, ["a.png", "b.png", "c.png"]);
        assert_eq!(
            corpus.entries()[0].mask,
            masks.join("a_segmentation.png")
        );
    }

    #[test]
    fn pair_directories_reports_the_missing_mask() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        let masks = dir.path().join("masks");
        std::fs::create_dir_all(&images).unwrap();
        std::fs::create_dir_all(&masks).unwrap();
        RgbImage::constant(4, 4, [0.0; 3])
            .encode_png(&images.join("lonely.png"))
            .unwrap();

        match Corpus::pair_directories(&images, &masks, DEFAULT_MASK_SUFFIX) {
            Err(Error::MissingMask(image, expected)) => {
                assert_eq!(image, images.join("lonely.png"));
                assert_eq!(expected, masks.join("lonely_segmentation.png"));
            }
            other => panic!("expected MissingMask, got {other:?}"),
        }
    }

    #[test]
    fn pair_directories_honours_a_custom_suffix() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        let masks = dir.path().join("masks");
        std::fs::create_dir_all(&images).unwrap();
        std::fs::create_dir_all(&masks).unwrap();
        RgbImage::constant(4, 4, [0.0; 3])
            .encode_png(&images.join("x.png"))
            .unwrap();
        BinaryMask::new(4, 4)
            .encode_png(&masks.join("x_gt.png"))
            .unwrap();

        let corpus = Corpus::pair_directories(&images, &masks, "_gt").unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.entries()[0].mask, masks.join("x_gt.png"));
    }

    #[test]
    fn load_rejects_mismatched_pair_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let image_path = dir.path().join("img.png");
        let mask_path = dir.path().join("img_segmentation.png");
        RgbImage::constant(8, 8, [0.0; 3]).encode_png(&image_path).unwrap();
        BinaryMask::new(4, 4).encode_png(&mask_path).unwrap();
        let entry = CorpusEntry {
            image: image_path,
            mask: mask_path,
        };
        assert!(matches!(
            entry.load(),
            Err(Error::DimensionMismatch(8, 8, 4, 4))
        ));
    }

    /// Tiny on-disk corpus for exercising the evaluation report with stub
    /// segmenters; ground truths are the top half and a centered square.
    fn eval_fixture(dir: &Path) -> Corpus {
        let gt_a = mask_from_rects(16, 16, &[(0, 0, 16, 8)]);
        let gt_b = mask_from_rects(16, 16, &[(4, 4, 12, 12)]);
        let img = RgbImage::constant(16, 16, [50.0, 50.0, 50.0]);
        let mut pairs = Vec::new();
        for (name, gt) in [("a", &gt_a), ("b", &gt_b)] {
            let image_path = dir.join(format!("{name}.png"));
            let mask_path = dir.join(format!("{name}_segmentation.png"));
            img.encode_png(&image_path).unwrap();
            gt.encode_png(&mask_path).unwrap();
            pairs.push((image_path, mask_path));
        }
        Corpus::from_pairs(pairs)
    }

    #[test]
    fn evaluate_with_a_perfect_stub_reports_mean_one() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = eval_fixture(dir.path());
        let report = evaluate_with(&corpus, |i, _| {
            corpus.entries()[i].load().map(|(_, gt)| gt)
        })
        .unwrap();
        assert_eq!(report.mean_jaccard, 1.0);
        assert_eq!(report.median_jaccard, 1.0);
        assert!(report.per_image.iter().all(|r| r.jaccard == 1.0 && r.note.is_none()));
    }

    #[test]
    fn evaluate_with_an_empty_stub_reports_mean_zero() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = eval_fixture(dir.path());
        let report =
            evaluate_with(&corpus, |_, img| Ok(BinaryMask::new(img.width(), img.height())))
                .unwrap();
        assert_eq!(report.mean_jaccard, 0.0);
        assert_eq!(report.median_jaccard, 0.0);
    }

    #[test]
    fn evaluate_matches_hand_computed_jaccards() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = eval_fixture(dir.path());
        // Image a: truth is the 16×8 top half (128 px). Predict rows
        // 4..12: intersection 64, union 192 → 1/3.
        // Image b: truth is the 8×8 centered square. Predict it exactly →
        // 1.
        let report = evaluate_with(&corpus, |i, _| {
            Ok(match i {
                0 => mask_from_rects(16, 16, &[(0, 4, 16, 12)]),
                _ => mask_from_rects(16, 16, &[(4, 4, 12, 12)]),
            })
        })
        .unwrap();
        assert_eq!(report.per_image[0].jaccard, 64.0 / 192.0);
        assert_eq!(report.per_image[1].jaccard, 1.0);
        assert_eq!(report.mean_jaccard, (64.0 / 192.0 + 1.0) / 2.0);
        assert_eq!(report.median_jaccard, (64.0 / 192.0 + 1.0) / 2.0);
    }

    #[test]
    fn evaluate_records_failures_as_zero_with_a_note() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = eval_fixture(dir.path());
        // First entry fails to segment; second is perfect.
        let report = evaluate_with(&corpus, |i, _| {
            if i == 0 {
                Err(Error::NoRegions)
            } else {
                corpus.entries()[i].load().map(|(_, gt)| gt)
            }
        })
        .unwrap();
        assert_eq!(report.per_image[0].jaccard, 0.0);
        assert!(report.per_image[0].note.is_some());
        assert_eq!(report.per_image[1].jaccard, 1.0);
        assert_eq!(report.mean_jaccard, 0.5);
        assert_eq!(report.median_jaccard, 0.5);
    }

    #[test]
    fn evaluate_records_unreadable_images_as_zero() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = eval_fixture(dir.path());
        std::fs::write(&corpus.entries()[0].image, b"not a png").unwrap();
        let report = evaluate_with(&corpus, |i, _| {
            corpus.entries()[i].load().map(|(_, gt)| gt)
        })
        .unwrap();
        assert_eq!(report.per_image[0].jaccard, 0.0);
        assert!(report.per_image[0].note.is_some());
        assert_eq!(report.per_image[1].jaccard, 1.0);
    }

    #[test]
    fn median_handles_odd_and_even_counts() {
        assert_eq!(median(vec![0.3]), 0.3);
        assert_eq!(median(vec![0.9, 0.1, 0.5]), 0.5);
        assert_eq!(median(vec![0.1, 0.2, 0.6, 1.0]), 0.4);
    }

    #[test]
    fn csv_report_has_one_row_per_image_plus_summaries() {
        let report = EvalReport {
            per_image: vec![
                EvalRecord {
                    image: "a.png".into(),
                    jaccard: 0.75,
                    note: None,
                },
                EvalRecord {
                    image: "b,odd.png".into(),
                    jaccard: 0.0,
                    note: Some("failed to decode".into()),
                },
            ],
            mean_jaccard: 0.375,
            median_jaccard: 0.375,
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "image,jaccard,note");
        assert_eq!(lines[1], "a.png,0.75,");
        assert_eq!(lines[2], "\"b,odd.png\",0,failed to decode");
        assert_eq!(lines[3], "mean,0.375,");
        assert_eq!(lines[4], "median,0.375,");
        assert_eq!(lines.len(), 5);
    }
}
