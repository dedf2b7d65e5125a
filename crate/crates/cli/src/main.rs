//! `dermseg` — command line front end for the lesion segmentation pipeline.
//!
//! One executable, six subcommands:
//!
//! * `preprocess <in> <out>` — normalization debug aid; writes the working-frame
//!   PNG plus a `<out stem>.json` sidecar with the padding geometry.
//! * `cluster <in> --k <k>` — clustering debug aid; writes one 0/255 mask PNG
//!   per color cluster of the preprocessed image.
//! * `stats` — computes corpus feature statistics and writes them as JSON.
//! * `train` — trains a model bundle from an image/mask corpus.
//! * `segment` — segments a single image with a trained bundle.
//! * `eval` — scores a trained bundle against a ground-truth corpus.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable, malformed,
//! or inconsistent inputs), 3 internal error. Diagnostics go to standard
//! error; machine-readable output goes only to the paths named by flags.
//!
//! Shared run settings (seed, cluster-count range, improvement tolerance,
//! minimum region area, mask suffix, log level) can come from flags or from a
//! JSON config file given with `--config`; flags win over the file, and the
//! file wins over built-in defaults.

use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dermseg_core::clustering::{kmeans, KMEANS_MAX_ITER, KMEANS_TOL};
use dermseg_core::features::{save_stats, StatsAccumulator};
use dermseg_core::pipeline::{segment, SegmentationConfig};
use dermseg_core::preprocess::{normalize_mask, preprocess};
use dermseg_core::raster::{BinaryMask, RgbImage};
use dermseg_core::regression::{load_bundle, save_bundle};
use dermseg_core::training::{evaluate, train, Corpus, DEFAULT_MASK_SUFFIX};
use dermseg_core::FORMAT_VERSION;

/// Failures the tool reports, split by the exit code they map to.
enum CliError {
    /// Bad invocation: unknown flags or subcommands, missing arguments.
    Usage(clap::Error),
    /// Bad input data: unreadable or malformed files, empty corpora,
    /// out-of-range settings.
    Data(anyhow::Error),
    /// A bug: states the tool should never reach.
    Internal(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<dermseg_core::Error> for CliError {
    fn from(err: dermseg_core::Error) -> Self {
        // Every library error describes a problem with the input data, not
        // with the program itself (bugs surface as panics, caught in main).
        CliError::Data(err.into())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Wraps an I/O failure on a user-supplied path as a data error.
fn data_io(path: &Path, err: std::io::Error) -> CliError {
    CliError::Data(anyhow::Error::new(err).context(format!("cannot access {}", path.display())))
}

#[derive(Parser, Debug)]
#[command(
    name = "dermseg",
    about = "Skin lesion segmentation: preprocessing, clustering, training, and evaluation",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    /// JSON config file with run settings (flags override it).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed for every randomized stage (clustering init, regressor training).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// First cluster count tried by the segmentation loop.
    #[arg(long, global = true, value_name = "N")]
    k_start: Option<usize>,

    /// Largest cluster count the segmentation loop may reach.
    #[arg(long, global = true, value_name = "N")]
    k_max: Option<usize>,

    /// Minimum score improvement required to keep growing the cluster count.
    #[arg(long, global = true, value_name = "TOL")]
    improvement_tol: Option<f64>,

    /// Minimum candidate region area in working-frame pixels.
    #[arg(long, global = true, value_name = "PIXELS")]
    min_area: Option<usize>,

    /// Filename suffix that maps an image stem to its mask file.
    #[arg(long, global = true, value_name = "SUFFIX")]
    mask_suffix: Option<String>,

    /// Log verbosity: off, error, warn, info, debug, or trace.
    #[arg(long, global = true, value_name = "LEVEL")]
    log_level: Option<String>,

    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize an image into the square working frame (debug aid).
    ///
    /// Writes the preprocessed image as a PNG and a sidecar JSON (same path
    /// with a .json extension) describing the padding geometry.
    Preprocess {
        /// Input image (PNG or JPEG).
        input: PathBuf,
        /// Output PNG path; the sidecar JSON lands next to it.
        output: PathBuf,
    },

    /// Cluster the colors of a preprocessed image (debug aid).
    ///
    /// Writes one 0/255 mask PNG per cluster, named cluster_00.png and so on,
    /// showing which working-frame pixels each color cluster claims.
    Cluster {
        /// Input image (PNG or JPEG).
        input: PathBuf,
        /// Number of color clusters.
        #[arg(long)]
        k: usize,
        /// Directory for the per-cluster masks (created if missing).
        #[arg(long, value_name = "DIR", default_value = ".")]
        out_dir: PathBuf,
    },

    /// Compute corpus feature statistics and write them as JSON.
    Stats {
        /// Directory of input images.
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        /// Directory of ground-truth masks.
        #[arg(long, value_name = "DIR")]
        masks: PathBuf,
        /// Output path for the statistics JSON.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },

    /// Train a model bundle from an image/mask corpus.
    Train {
        /// Directory of training images.
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        /// Directory of ground-truth masks.
        #[arg(long, value_name = "DIR")]
        masks: PathBuf,
        /// Output path for the model bundle JSON.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },

    /// Segment one image with a trained model bundle.
    Segment {
        /// Input image (PNG or JPEG).
        image: PathBuf,
        /// Trained model bundle JSON.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Output path for the 0/255 lesion mask PNG.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Optional JSON dump of the per-cluster-count search trace.
        #[arg(long, value_name = "FILE")]
        diagnostics: Option<PathBuf>,
    },

    /// Evaluate a trained bundle against a ground-truth corpus.
    Eval {
        /// Directory of evaluation images.
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        /// Directory of ground-truth masks.
        #[arg(long, value_name = "DIR")]
        masks: PathBuf,
        /// Trained model bundle JSON.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Report path; a .csv extension selects CSV, anything else JSON.
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
    },
}

/// Run settings from a `--config` JSON file. Every field is optional;
/// unknown fields are rejected so typos fail loudly instead of silently
/// falling back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    k_start: Option<usize>,
    k_max: Option<usize>,
    improvement_tol: Option<f64>,
    min_area: Option<usize>,
    mask_suffix: Option<String>,
    log_level: Option<String>,
}

/// Fully merged run settings: flags over config file over defaults.
#[derive(Debug)]
struct RunConfig {
    seg: SegmentationConfig,
    mask_suffix: String,
    log_level: String,
}

impl RunConfig {
    fn merge(cli: &Cli) -> CliResult<RunConfig> {
        let file = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| data_io(path, e))?;
                serde_json::from_str::<FileConfig>(&text).map_err(|e| {
                    CliError::Data(anyhow::anyhow!("invalid config {}: {e}", path.display()))
                })?
            }
            None => FileConfig::default(),
        };
        let defaults = SegmentationConfig::default();
        let seg = SegmentationConfig {
            seed: cli.seed.or(file.seed).unwrap_or(defaults.seed),
            k_start: cli.k_start.or(file.k_start).unwrap_or(defaults.k_start),
            k_max: cli.k_max.or(file.k_max).unwrap_or(defaults.k_max),
            improvement_tol: cli
                .improvement_tol
                .or(file.improvement_tol)
                .unwrap_or(defaults.improvement_tol),
            min_area: cli.min_area.or(file.min_area).unwrap_or(defaults.min_area),
        };
        seg.validate()?;
        Ok(RunConfig {
            seg,
            mask_suffix: cli
                .mask_suffix
                .clone()
                .or(file.mask_suffix)
                .unwrap_or_else(|| DEFAULT_MASK_SUFFIX.to_string()),
            log_level: cli
                .log_level
                .clone()
                .or(file.log_level)
                .unwrap_or_else(|| "info".to_string()),
        })
    }
}

/// Per-cluster-count search trace written by `segment --diagnostics`.
#[derive(Serialize)]
struct Diagnostics {
    /// Best region score seen at each productive cluster count, in visit order.
    per_k_best: Vec<KBest>,
    /// Cluster count that produced the winning region (0 for the fallback).
    best_k: usize,
    /// Ensemble score of the winning region.
    best_score: f64,
}

#[derive(Serialize)]
struct KBest {
    k: usize,
    score: f64,
}

fn main() -> ExitCode {
    // A panic anywhere below is a bug, not bad input; report it on stderr
    // under the internal-error exit code instead of unwinding noisily.
    let outcome = panic::catch_unwind(run);
    let result = match outcome {
        Ok(result) => result,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            Err(CliError::Internal(anyhow::anyhow!("panic: {msg}")))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match &err {
                CliError::Usage(clap_err) => {
                    // clap renders the offending flag plus usage lines.
                    eprint!("{}", clap_err.render());
                }
                CliError::Data(e) => eprintln!("error: {e:#}"),
                CliError::Internal(e) => eprintln!("internal error: {e:#}"),
            }
            ExitCode::from(err.exit_code())
        }
    }
}

fn run() -> CliResult<()> {
    let version = format!("{} (model format v{FORMAT_VERSION})", env!("CARGO_PKG_VERSION"));
    let command = Cli::command().version(version);
    let cli = match command.try_get_matches() {
        Ok(matches) => Cli::from_arg_matches(&matches)
            .map_err(|e| CliError::Internal(anyhow::anyhow!("argument remapping failed: {e}")))?,
        Err(err) if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            // --help / --version are successful invocations.
            print!("{}", err.render());
            return Ok(());
        }
        Err(err) => return Err(CliError::Usage(err)),
    };

    let cfg = RunConfig::merge(&cli)?;
    init_logging(&cfg.log_level);
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Internal(anyhow::anyhow!("thread pool setup failed: {e}")))?;
    }

    match &cli.command {
        Command::Preprocess { input, output } => cmd_preprocess(input, output),
        Command::Cluster { input, k, out_dir } => cmd_cluster(input, *k, out_dir, &cfg),
        Command::Stats { images, masks, out } => cmd_stats(images, masks, out, &cfg),
        Command::Train { images, masks, out } => cmd_train(images, masks, out, &cfg),
        Command::Segment { image, model, out, diagnostics } => {
            cmd_segment(image, model, out, diagnostics.as_deref(), &cfg)
        }
        Command::Eval { images, masks, model, report } => {
            cmd_eval(images, masks, model, report, &cfg)
        }
    }
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new()
        .parse_filters(level)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .try_init();
}

fn cmd_preprocess(input: &Path, output: &Path) -> CliResult<()> {
    let img = RgbImage::decode_path(input)?;
    let norm = preprocess(&img);
    norm.image.encode_png(output)?;
    let sidecar = output.with_extension("json");
    let text = serde_json::to_string_pretty(&norm.pad_info)
        .map_err(|e| CliError::Internal(anyhow::anyhow!("pad info serialization failed: {e}")))?;
    fs::write(&sidecar, text).map_err(|e| data_io(&sidecar, e))?;
    log::info!(
        "wrote {} and {} ({}x{} -> {}x{} working frame)",
        output.display(),
        sidecar.display(),
        norm.pad_info.original_w,
        norm.pad_info.original_h,
        norm.image.width(),
        norm.image.height()
    );
    Ok(())
}

fn cmd_cluster(input: &Path, k: usize, out_dir: &Path, cfg: &RunConfig) -> CliResult<()> {
    let img = RgbImage::decode_path(input)?;
    let norm = preprocess(&img);
    let (w, h) = (norm.image.width(), norm.image.height());
    let points: Vec<[f64; 3]> = (0..w * h)
        .map(|i| {
            [
                norm.image.plane(0)[i],
                norm.image.plane(1)[i],
                norm.image.plane(2)[i],
            ]
        })
        .collect();
    let km = kmeans(&points, k, cfg.seg.seed, KMEANS_MAX_ITER, KMEANS_TOL)?;
    fs::create_dir_all(out_dir).map_err(|e| data_io(out_dir, e))?;
    for cluster in 0..k {
        let mut mask = BinaryMask::new(w, h);
        let bits = mask.bits_mut();
        for (i, &label) in km.labels.iter().enumerate() {
            bits[i] = label as usize == cluster;
        }
        let path = out_dir.join(format!("cluster_{cluster:02}.png"));
        mask.encode_png(&path)?;
    }
    log::info!(
        "wrote {k} cluster masks to {} (objective {:.3})",
        out_dir.display(),
        km.objective
    );
    Ok(())
}

fn cmd_stats(images: &Path, masks: &Path, out: &Path, cfg: &RunConfig) -> CliResult<()> {
    let corpus = Corpus::pair_directories(images, masks, &cfg.mask_suffix)?;
    let mut acc = StatsAccumulator::new();
    for entry in corpus.entries() {
        match entry.load() {
            Ok((img, mask)) => {
                let norm = preprocess(&img);
                acc.add(&norm, &normalize_mask(&mask));
            }
            Err(err) => log::warn!("skipping {}: {err}", entry.image.display()),
        }
    }
    let used = acc.len();
    let stats = acc.finish()?;
    save_stats(&stats, out)?;
    log::info!("wrote statistics from {used} of {} images to {}", corpus.len(), out.display());
    Ok(())
}

fn cmd_train(images: &Path, masks: &Path, out: &Path, cfg: &RunConfig) -> CliResult<()> {
    let corpus = Corpus::pair_directories(images, masks, &cfg.mask_suffix)?;
    log::info!("training on {} image/mask pairs", corpus.len());
    let bundle = train(&corpus, &cfg.seg, cfg.seg.seed)?;
    save_bundle(&bundle, out)?;
    log::info!("wrote model bundle to {}", out.display());
    Ok(())
}

fn cmd_segment(
    image: &Path,
    model: &Path,
    out: &Path,
    diagnostics: Option<&Path>,
    cfg: &RunConfig,
) -> CliResult<()> {
    let img = RgbImage::decode_path(image)?;
    let bundle = load_bundle(model)?;
    let outcome = segment(&img, &bundle, &cfg.seg)?;
    outcome.mask.encode_png(out)?;
    log::info!(
        "wrote {} (winning cluster count {}, score {:.4})",
        out.display(),
        outcome.best_k,
        outcome.best_score
    );
    if let Some(path) = diagnostics {
        let dump = Diagnostics {
            per_k_best: outcome
                .per_k_best
                .iter()
                .map(|&(k, score)| KBest { k, score })
                .collect(),
            best_k: outcome.best_k,
            best_score: outcome.best_score,
        };
        let text = serde_json::to_string_pretty(&dump).map_err(|e| {
            CliError::Internal(anyhow::anyhow!("diagnostics serialization failed: {e}"))
        })?;
        fs::write(path, text).map_err(|e| data_io(path, e))?;
        log::info!("wrote search diagnostics to {}", path.display());
    }
    Ok(())
}

fn cmd_eval(
    images: &Path,
    masks: &Path,
    model: &Path,
    report_path: &Path,
    cfg: &RunConfig,
) -> CliResult<()> {
    let corpus = Corpus::pair_directories(images, masks, &cfg.mask_suffix)?;
    let bundle = load_bundle(model)?;
    let report = evaluate(&corpus, &bundle, &cfg.seg)?;
    let is_csv = report_path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
    let text = if is_csv {
        report.to_csv()
    } else {
        serde_json::to_string_pretty(&report).map_err(|e| {
            CliError::Internal(anyhow::anyhow!("report serialization failed: {e}"))
        })?
    };
    fs::write(report_path, text).map_err(|e| data_io(report_path, e))?;
    log::info!(
        "evaluated {} images: mean Jaccard {:.4}, median {:.4}; report at {}",
        report.per_image.len(),
        report.mean_jaccard,
        report.median_jaccard,
        report_path.display()
    );
    Ok(())
}
