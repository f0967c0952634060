//! Central finite-difference verification of the analytic loss gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{evaluate_with, Contours, LossConfig, LossId};
use crate::mask::{BinaryMask, Grid, SaliencyMap};

/// Relative error threshold a gradient must stay below.
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_STEP: f64 = 1e-6;
/// Below this magnitude the absolute error is used instead of the relative one.
pub const ABSOLUTE_FALLBACK: f64 = 1e-8;

/// Multiplies one analytic gradient component before comparison. Exists so
/// the check itself can be shown to catch a corrupted gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCorruption {
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub max_error: f64,
    /// Pixel at which `max_error` occurred.
    pub worst_pixel: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Error between an analytic and a numeric derivative.
pub fn gradient_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < ABSOLUTE_FALLBACK {
        diff
    } else {
        diff / scale
    }
}

/// Compares the analytic gradient of `id` at `x` against
/// `(L(x + δe_i) - L(x - δe_i)) / 2δ` for every pixel.
///
/// Contour maps are computed once at `x` and held fixed, matching the
/// stop-gradient treatment of the contour weights.
pub fn finite_difference_check(
    id: LossId,
    x: &SaliencyMap,
    y: &BinaryMask,
    step: f64,
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(finite_difference_report(id, x, y, step, cfg, None)?.max_error)
}

pub fn finite_difference_report(
    id: LossId,
    x: &SaliencyMap,
    y: &BinaryMask,
    step: f64,
    cfg: &LossConfig,
    corruption: Option<GradientCorruption>,
) -> Result<FdReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {step}")));
    }
    let contours = Contours::for_loss(id, x, y);
    let base = evaluate_with(id, x, y, &contours, cfg)?;
    let mut analytic = base.gradient.clone();
    if let Some(c) = corruption {
        let worst = analytic
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        analytic[worst] *= c.scale;
    }

    let mut values = x.values().to_vec();
    let mut report = FdReport {
        max_error: 0.0,
        worst_pixel: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: 0.0,
    };
    let mut first = true;
    for i in 0..x.len() {
        let orig = values[i];
        values[i] = orig + step;
        let plus = loss_at(id, x, &values, y, &contours, cfg)?;
        values[i] = orig - step;
        let minus = loss_at(id, x, &values, y, &contours, cfg)?;
        values[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let err = gradient_error(analytic[i], numeric);
        if first || err > report.max_error {
            first = false;
            report = FdReport {
                max_error: err,
                worst_pixel: i,
                analytic: analytic[i],
                numeric,
            };
        }
    }
    Ok(report)
}

fn loss_at(
    id: LossId,
    like: &SaliencyMap,
    values: &[f64],
    y: &BinaryMask,
    contours: &Contours,
    cfg: &LossConfig,
) -> Result<f64> {
    let x = SaliencyMap::new(like.width(), like.height(), values.to_vec())?;
    Ok(evaluate_with(id, &x, y, contours, cfg)?.value)
}

/// Seeded random check input: predictions drawn from `[0.05, 0.95]` so the
/// log clamp of the BCE losses stays inactive, and a random binary target.
pub fn suite_input(seed: u64, width: usize, height: usize) -> Result<(SaliencyMap, BinaryMask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = width * height;
    let x = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    let y = (0..n).map(|_| rng.random_bool(0.4)).collect();
    Ok((SaliencyMap::new(width, height, x)?, BinaryMask::new(width, height, y)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub loss: LossId,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub report: FdReport,
    pub passed: bool,
}

/// Runs the check for every loss x seed x square size.
pub fn run_suite(
    losses: &[LossId],
    seeds: &[u64],
    sizes: &[usize],
    cfg: &LossConfig,
    tolerance: f64,
    corruption: Option<GradientCorruption>,
) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for &loss in losses {
        for &size in sizes {
            for &seed in seeds {
                let (x, y) = suite_input(seed, size, size)?;
                let report = finite_difference_report(loss, &x, &y, DEFAULT_STEP, cfg, corruption)?;
                rows.push(SuiteRow {
                    loss,
                    seed,
                    width: size,
                    height: size,
                    passed: report.max_error < tolerance,
                    report,
                });
            }
        }
    }
    Ok(rows)
}
