//! Learning machinery: a bagged regression forest, an ε-SVR, their
//! score-averaging ensemble, and model persistence.
//!
//! Both regressors consume the ten-component feature vectors and are
//! trained against Jaccard-index targets in `[0, 1]`. A [`ModelBundle`]
//! couples the two trained models with the corpus statistics they were
//! built from, because predictions are meaningless under different
//! statistics.

mod forest;
mod svr;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{FeatureStats, FeatureVector};
use crate::FORMAT_VERSION;

pub use forest::{
    oob_mse, predict_forest, train_forest, ForestModel, Tree, TreeNode, FOREST_MIN_SPLIT,
    FOREST_MTRY, FOREST_TREES,
};
pub use svr::{predict_svr, train_svr, SvrModel, SvrParams};

/// One supervised example: a region's descriptors and the Jaccard index
/// of that region against the ground-truth lesion mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub features: FeatureVector,
    pub target: f64,
}

/// The full trained artifact: both regressors plus the statistics that
/// define the feature space they operate in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub forest: ForestModel,
    pub svr: SvrModel,
    pub stats: FeatureStats,
}

/// Final region score: the average of the two model outputs, clamped to
/// `[0, 1]` since it predicts a Jaccard index.
pub fn ensemble_score(bundle: &ModelBundle, x: &FeatureVector) -> f64 {
    let f = predict_forest(&bundle.forest, x);
    let s = predict_svr(&bundle.svr, x);
    ((f + s) / 2.0).clamp(0.0, 1.0)
}

/// SHA-256 over the canonical (compact JSON) serialization of the bundle.
fn bundle_checksum(bundle: &ModelBundle) -> String {
    let canonical = serde_json::to_vec(bundle).expect("bundle serialize cannot fail");
    let digest = Sha256::digest(&canonical);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct BundleFileRef<'a> {
    format_version: u32,
    checksum: &'a str,
    bundle: &'a ModelBundle,
}

#[derive(Deserialize)]
struct BundleFile {
    format_version: u32,
    checksum: String,
    bundle: ModelBundle,
}

/// Writes the bundle as a single versioned, checksummed JSON document.
pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let checksum = bundle_checksum(bundle);
    let file = BundleFileRef {
        format_version: FORMAT_VERSION,
        checksum: &checksum,
        bundle,
    };
    let text = serde_json::to_string_pretty(&file).expect("bundle serialize cannot fail");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a bundle written by [`save_bundle`], verifying the format
/// version and the payload checksum. Round-trips are lossless: a loaded
/// bundle predicts bit-identically to the saved one.
pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: BundleFile =
        serde_json::from_str(&text).map_err(|e| Error::corrupt(path, e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_owned(),
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let recomputed = bundle_checksum(&file.bundle);
    if recomputed != file.checksum {
        return Err(Error::corrupt(
            path,
            format!(
                "checksum mismatch: stored {}, recomputed {recomputed}",
                file.checksum
            ),
        ));
    }
    Ok(file.bundle)
}
