//! Batch evaluation of a prediction directory against a ground-truth directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{load_binary_mask, load_saliency_map, Grid, DEFAULT_GT_THRESHOLD};
use crate::metrics::{aggregate, evaluate_image, EvalReport, ImageEvaluation, MetricOptions};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResizePolicy {
    /// Prediction and ground truth must have identical sizes.
    #[default]
    Error,
    /// Resample the prediction to the ground-truth size (nearest neighbour).
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub metrics: MetricOptions,
    pub gt_threshold: f64,
    pub resize: ResizePolicy,
    pub skip_unpaired: bool,
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            metrics: MetricOptions::default(),
            gt_threshold: DEFAULT_GT_THRESHOLD,
            resize: ResizePolicy::Error,
            skip_unpaired: false,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePair {
    pub stem: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    /// Sorted by stem.
    pub pairs: Vec<ImagePair>,
    /// Files without a partner in the other directory.
    pub unpaired: Vec<PathBuf>,
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png || !path.is_file() {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Matches `.png` files of both directories by filename stem.
pub fn pair_files(pred_dir: &Path, gt_dir: &Path) -> Result<Pairing> {
    let preds = png_stems(pred_dir)?;
    let mut gts = png_stems(gt_dir)?;
    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for (stem, pred) in preds {
        match gts.remove(&stem) {
            Some(gt) => pairs.push(ImagePair { stem, pred, gt }),
            None => unpaired.push(pred),
        }
    }
    unpaired.extend(gts.into_values());
    unpaired.sort();
    Ok(Pairing { pairs, unpaired })
}

pub fn evaluate_pair(pair: &ImagePair, opts: &EvalOptions) -> Result<ImageEvaluation> {
    let mut pred = load_saliency_map(&pair.pred)?;
    let gt = load_binary_mask(&pair.gt, opts.gt_threshold)?;
    if pred.width() != gt.width() || pred.height() != gt.height() {
        match opts.resize {
            ResizePolicy::Nearest => pred = pred.resize_nearest(gt.width(), gt.height())?,
            ResizePolicy::Error => {
                return Err(Error::InvalidMap(format!(
                    "'{}': prediction is {}x{} but ground truth is {}x{} (enable nearest resize to resample)",
                    pair.stem,
                    pred.width(),
                    pred.height(),
                    gt.width(),
                    gt.height()
                )))
            }
        }
    }
    evaluate_image(pair.stem.clone(), &pred, &gt, &opts.metrics)
}

/// Evaluates every pair on a pool of `opts.workers` threads and aggregates
/// in stem order; the result does not depend on the worker count.
pub fn evaluate_pairs(method: &str, pairs: &[ImagePair], opts: &EvalOptions) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no prediction/ground-truth pairs found".into()));
    }
    if opts.workers == 0 {
        return Err(Error::InvalidArgument("worker count must be >= 1".into()));
    }
    let results = run_on_pool(opts.workers, pairs, |p| evaluate_pair(p, opts))?;
    let images = results.into_iter().collect::<Result<Vec<_>>>()?;
    aggregate(method, &images, opts.metrics.beta2)
}

pub fn evaluate_dirs(
    method: &str,
    pred_dir: &Path,
    gt_dir: &Path,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let pairing = pair_files(pred_dir, gt_dir)?;
    if !pairing.unpaired.is_empty() && !opts.skip_unpaired {
        return Err(Error::Protocol(format!(
            "{} unpaired file(s), first: {}",
            pairing.unpaired.len(),
            pairing.unpaired[0].display()
        )));
    }
    let mut report = evaluate_pairs(method, &pairing.pairs, opts)?;
    report.skipped_unpaired = pairing.unpaired.len();
    Ok(report)
}

#[cfg(feature = "parallel")]
fn run_on_pool<T, R, F>(workers: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_on_pool<T, R, F>(_workers: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    F: Fn(&T) -> R,
{
    Ok(items.iter().map(f).collect())
}
