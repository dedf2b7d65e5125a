//! Raster primitives: RGB images, binary masks, geometric resampling,
//! mathematical morphology and connected region analysis.
//!
//! Everything downstream (preprocessing, clustering, feature extraction)
//! builds on the types in this module. Images hold one `f64` plane per
//! channel so intermediate filters do not quantize; masks are plain boolean
//! grids. Coordinates are `(x, y)` with `x` indexing columns left to right
//! and `y` indexing rows top to bottom; pixel data is stored row-major.

mod image;
mod mask;
mod morphology;
mod region;

pub use image::{pad_to_square, resize_bilinear, RgbImage};
pub use mask::{pad_mask_to_square, resize_nearest, BinaryMask};
pub use morphology::{
    close, dilate, disk, erode, gray_close, gray_dilate, gray_erode, gray_open, median3x3, open,
    StructuringElement,
};
pub use region::{connected_components, fill_holes, Region};
