//! Automatic skin lesion segmentation for dermoscopic images.
//!
//! The pipeline normalizes an input photograph to a fixed working resolution,
//! removes acquisition artifacts (specular reflections, hair, color cast),
//! partitions the pixels by k-means color clustering, describes every candidate
//! region with a ten-dimensional feature vector, and scores the candidates with
//! an ensemble of a random forest and a support vector regressor trained to
//! predict segmentation overlap. The best-scoring region across increasing
//! cluster counts becomes the lesion mask.
//!
//! Modules are layered bottom-up:
//!
//! * [`raster`] — image/mask containers, geometry, morphology, region analysis
//! * [`preprocess`] — artifact removal and normalization to the working frame
//! * [`clustering`] — k-means color clustering and candidate region extraction
//! * [`features`] — region descriptors and corpus statistics
//! * [`regression`] — random forest, epsilon-SVR, ensemble scoring, persistence
//! * [`pipeline`] — the segmentation loop over increasing cluster counts
//! * [`training`] — corpus handling, sample generation, training, evaluation
//! * [`synth`] — synthetic dermoscopy-like images for tests and benchmarks

pub mod clustering;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod regression;
pub mod training;

pub use error::Error;

/// Version tag written into persisted model bundles and statistics files.
/// Bump when the serialized layout changes incompatibly.
pub const FORMAT_VERSION: u32 = 1;

/// Side length in pixels of the square working frame all images are
/// normalized to before clustering and feature extraction.
pub const WORKING_SIZE: usize = 1024;
