//! Evaluation metrics for saliency predictions against binary ground truth.
//!
//! Six scores are produced per image: max-F and ave-F over the 256-step
//! byte-threshold sweep, weighted F (Fbw), MAE, S-measure and E-measure.
//!
//! Conventions worth knowing before comparing numbers with other toolkits:
//!
//! * A prediction pixel is positive at threshold `t` iff `round(v * 255) > t`,
//!   for `t` in `0..=255`. The top threshold is therefore always an empty
//!   prediction, and a perfect binary prediction scores `ave-F = 255/256`.
//! * ave-F is the plain mean of F over all 256 thresholds. Some toolkits
//!   instead report F at an adaptive threshold (twice the mean saliency);
//!   that variant is *not* what [`max_ave_f`] returns.
//! * Empty-denominator rules: no predicted positives gives `p = 0`; an empty
//!   ground truth gives `r = 1`, and F is then 0 unless the thresholded
//!   prediction is empty as well, which scores `p = r = F = 1`.
//! * Dataset max-F/ave-F come from the threshold-wise mean precision and mean
//!   recall curves (see [`aggregate`]); per-image F means are reported too.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{check_dims, to_byte, BinaryMask, Grid, SaliencyMap};

/// Number of byte thresholds in the F-measure sweep.
pub const NUM_THRESHOLDS: usize = 256;
/// β² used by max-F / ave-F.
pub const DEFAULT_BETA2: f64 = 0.3;
/// Object/region mixing weight of the S-measure.
pub const DEFAULT_ALPHA: f64 = 0.5;
/// β² of the weighted F-measure.
pub const FBW_BETA2: f64 = 1.0;

const FBW_GAUSSIAN_SIZE: usize = 7;
const FBW_GAUSSIAN_SIGMA: f64 = 5.0;
const FBW_DISTANCE_DECAY: f64 = 5.0;
const FBW_DEPENDENCY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub beta2: f64,
    pub alpha: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            beta2: DEFAULT_BETA2,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Pixel tallies of a thresholded prediction against ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl HardCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// Precision and recall with the empty-denominator rules from the module docs.
    pub fn precision_recall(&self) -> (f64, f64) {
        let predicted = self.true_pos + self.false_pos;
        let actual = self.true_pos + self.false_neg;
        if actual == 0 {
            return if predicted == 0 { (1.0, 1.0) } else { (0.0, 1.0) };
        }
        let p = if predicted == 0 {
            0.0
        } else {
            self.true_pos as f64 / predicted as f64
        };
        (p, self.true_pos as f64 / actual as f64)
    }
}

/// `(1 + β²) p r / (β² p + r)`, defined as 0 when the denominator vanishes.
pub fn f_score(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Precision / recall / F for thresholds `0..=255`, indexed by threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FCurve {
    pub points: Vec<CurvePoint>,
}

impl FCurve {
    pub fn from_pr(precision: &[f64], recall: &[f64], beta2: f64) -> Self {
        let points = precision
            .iter()
            .zip(recall)
            .map(|(&p, &r)| CurvePoint {
                precision: p,
                recall: r,
                f: f_score(p, r, beta2),
            })
            .collect();
        Self { points }
    }

    pub fn f_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.f)
    }
}

/// Mean absolute error. Errors are summed in sorted order, so the result
/// does not depend on pixel order (e.g. under transposition).
pub fn mae(pred: &SaliencyMap, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let mut errors: Vec<f64> = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&x, &y)| (x - if y { 1.0 } else { 0.0 }).abs())
        .collect();
    errors.sort_unstable_by(f64::total_cmp);
    Ok(errors.iter().sum::<f64>() / pred.len() as f64)
}

/// Tallies the prediction binarized at byte threshold `t` (`round(v*255) > t`).
pub fn confusion_at_threshold(pred: &SaliencyMap, gt: &BinaryMask, t: u8) -> Result<HardCounts> {
    check_dims(pred, gt)?;
    let mut counts = HardCounts::default();
    for (&x, &y) in pred.values().iter().zip(gt.values()) {
        match (to_byte(x) > t, y) {
            (true, true) => counts.true_pos += 1,
            (true, false) => counts.false_pos += 1,
            (false, true) => counts.false_neg += 1,
            (false, false) => counts.true_neg += 1,
        }
    }
    Ok(counts)
}

/// Confusion counts at every threshold, from a byte histogram.
pub fn threshold_counts(pred: &SaliencyMap, gt: &BinaryMask) -> Result<Vec<HardCounts>> {
    check_dims(pred, gt)?;
    let mut fg_hist = [0u64; NUM_THRESHOLDS];
    let mut bg_hist = [0u64; NUM_THRESHOLDS];
    for (&x, &y) in pred.values().iter().zip(gt.values()) {
        let b = to_byte(x) as usize;
        if y {
            fg_hist[b] += 1;
        } else {
            bg_hist[b] += 1;
        }
    }
    let n_fg: u64 = fg_hist.iter().sum();
    let n_bg: u64 = bg_hist.iter().sum();

    // above[t] = count of bytes strictly greater than t
    let mut counts = vec![HardCounts::default(); NUM_THRESHOLDS];
    let (mut fg_above, mut bg_above) = (0u64, 0u64);
    for t in (0..NUM_THRESHOLDS).rev() {
        counts[t] = HardCounts {
            true_pos: fg_above,
            false_pos: bg_above,
            false_neg: n_fg - fg_above,
            true_neg: n_bg - bg_above,
        };
        fg_above += fg_hist[t];
        bg_above += bg_hist[t];
    }
    Ok(counts)
}

pub fn fbeta_curve(pred: &SaliencyMap, gt: &BinaryMask, beta2: f64) -> Result<FCurve> {
    if !(beta2 > 0.0) {
        return Err(Error::InvalidArgument(format!("beta2 must be > 0, got {beta2}")));
    }
    let counts = threshold_counts(pred, gt)?;
    let (precision, recall): (Vec<f64>, Vec<f64>) =
        counts.iter().map(HardCounts::precision_recall).unzip();
    Ok(FCurve::from_pr(&precision, &recall, beta2))
}

/// `(max over thresholds, mean over thresholds)` of the F values.
pub fn max_ave_f(curve: &FCurve) -> (f64, f64) {
    let n = curve.points.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let max = curve.f_values().fold(f64::NEG_INFINITY, f64::max);
    let mean = curve.f_values().sum::<f64>() / n as f64;
    (max, mean)
}

/// Weighted F-measure with distance-dependent error weighting.
///
/// Errors on background pixels take the error of their nearest foreground
/// pixel before Gaussian smoothing (7x7, σ = 5); ties between equidistant
/// nearest foreground pixels are resolved by averaging their errors, which
/// keeps the score invariant under grid symmetries. Background errors are
/// amplified by `2 - 0.5^(d/5)` where `d` is the Euclidean distance to the
/// foreground.
pub fn weighted_fbeta(pred: &SaliencyMap, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let (w, h) = (pred.width(), pred.height());
    let n_fg = gt.count_ones();
    if n_fg == 0 {
        return Ok(if pred.values().iter().all(|&v| v == 0.0) {
            1.0
        } else {
            0.0
        });
    }
    let x = pred.values();
    let y = gt.values();
    let err: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(&p, &g)| (p - if g { 1.0 } else { 0.0 }).abs())
        .collect();

    let nearest = NearestForeground::new(gt);
    let mut spread = err.clone();
    let mut dist = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if y[i] {
                continue;
            }
            let (d2, hits) = nearest.query(r, c);
            dist[i] = (d2 as f64).sqrt();
            spread[i] = hits.iter().map(|&j| err[j]).sum::<f64>() / hits.len() as f64;
        }
    }

    let smoothed = gaussian_filter_same(&spread, w, h);
    let decay = FBW_DEPENDENCY.ln() / FBW_DISTANCE_DECAY;
    let mut fg_err = 0.0;
    let mut bg_err = 0.0;
    for i in 0..w * h {
        if y[i] {
            fg_err += err[i].min(smoothed[i]);
        } else {
            bg_err += err[i] * (2.0 - (decay * dist[i]).exp());
        }
    }
    let tp_w = n_fg as f64 - fg_err;
    let recall = 1.0 - fg_err / n_fg as f64;
    let precision = tp_w / (f64::EPSILON + tp_w + bg_err);
    Ok((1.0 + FBW_BETA2) * recall * precision / (f64::EPSILON + recall + FBW_BETA2 * precision))
}

/// Exact Euclidean nearest-foreground lookup using per-row nearest columns.
struct NearestForeground {
    width: usize,
    height: usize,
    // per row: nearest foreground column at or left of c / at or right of c
    left: Vec<Option<usize>>,
    right: Vec<Option<usize>>,
}

impl NearestForeground {
    fn new(gt: &BinaryMask) -> Self {
        let (w, h) = (gt.width(), gt.height());
        let y = gt.values();
        let mut left = vec![None; w * h];
        let mut right = vec![None; w * h];
        for r in 0..h {
            let row = r * w;
            let mut last = None;
            for c in 0..w {
                if y[row + c] {
                    last = Some(c);
                }
                left[row + c] = last;
            }
            last = None;
            for c in (0..w).rev() {
                if y[row + c] {
                    last = Some(c);
                }
                right[row + c] = last;
            }
        }
        Self {
            width: w,
            height: h,
            left,
            right,
        }
    }

    /// Squared distance to the closest foreground pixel and every pixel at it.
    fn query(&self, r: usize, c: usize) -> (u64, Vec<usize>) {
        let w = self.width;
        let mut best = u64::MAX;
        let mut hits = Vec::new();
        for dr in 0..self.height {
            let dr2 = (dr * dr) as u64;
            if dr2 > best {
                break;
            }
            let rows = [r.checked_sub(dr), Some(r + dr).filter(|&rr| rr < self.height && dr > 0)];
            for rr in rows.into_iter().flatten() {
                let base = rr * w;
                let cands = [self.left[base + c], self.right[base + c]];
                for (k, cand) in cands.iter().enumerate() {
                    let Some(cc) = *cand else { continue };
                    if k == 1 && cands[0] == Some(cc) {
                        continue;
                    }
                    let dc = c.abs_diff(cc) as u64;
                    let d2 = dr2 + dc * dc;
                    if d2 < best {
                        best = d2;
                        hits.clear();
                    }
                    if d2 == best {
                        hits.push(base + cc);
                    }
                }
            }
        }
        (best, hits)
    }
}

fn gaussian_kernel() -> Vec<f64> {
    let half = (FBW_GAUSSIAN_SIZE / 2) as i64;
    let two_s2 = 2.0 * FBW_GAUSSIAN_SIGMA * FBW_GAUSSIAN_SIGMA;
    let mut k: Vec<f64> = (-half..=half)
        .flat_map(|dy| (-half..=half).map(move |dx| (-((dx * dx + dy * dy) as f64) / two_s2).exp()))
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Same-size correlation with zero padding.
fn gaussian_filter_same(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let kernel = gaussian_kernel();
    let size = FBW_GAUSSIAN_SIZE;
    let half = (size / 2) as isize;
    let mut out = vec![0.0; w * h];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut acc = 0.0;
            for kr in 0..size as isize {
                let rr = r + kr - half;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for kc in 0..size as isize {
                    let cc = c + kc - half;
                    if cc < 0 || cc >= w as isize {
                        continue;
                    }
                    acc += kernel[(kr as usize) * size + kc as usize] * src[rr as usize * w + cc as usize];
                }
            }
            out[r as usize * w + c as usize] = acc;
        }
    }
    out
}

/// Structure measure `alpha * S_object + (1 - alpha) * S_region`, floored at 0.
///
/// An all-background ground truth scores `1 - mean(pred)`; an all-foreground
/// one scores `mean(pred)`.
pub fn s_measure(pred: &SaliencyMap, gt: &BinaryMask, alpha: f64) -> Result<f64> {
    check_dims(pred, gt)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    let fg = gt.mean();
    if fg == 0.0 {
        return Ok(1.0 - pred.mean());
    }
    if fg == 1.0 {
        return Ok(pred.mean());
    }
    let score = alpha * s_object(pred, gt) + (1.0 - alpha) * s_region(pred, gt);
    Ok(score.max(0.0))
}

/// Object-aware term of the S-measure.
pub fn s_object(pred: &SaliencyMap, gt: &BinaryMask) -> f64 {
    let fg_frac = gt.mean();
    // foreground: pred over GT pixels; background: (1 - pred) over complement
    let fg_vals: Vec<f64> = pred
        .values()
        .iter()
        .zip(gt.values())
        .filter(|(_, &g)| g)
        .map(|(&p, _)| p)
        .collect();
    let bg_vals: Vec<f64> = pred
        .values()
        .iter()
        .zip(gt.values())
        .filter(|(_, &g)| !g)
        .map(|(&p, _)| 1.0 - p)
        .collect();
    fg_frac * object_similarity(&fg_vals) + (1.0 - fg_frac) * object_similarity(&bg_vals)
}

fn object_similarity(vals: &[f64]) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = if vals.len() > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + std + f64::EPSILON)
}

/// Region-aware term: SSIM over the four blocks split at the GT centroid.
pub fn s_region(pred: &SaliencyMap, gt: &BinaryMask) -> f64 {
    let (w, h) = (pred.width(), pred.height());
    let (cx, cy) = centroid_split(gt);
    let area = (w * h) as f64;
    let blocks = [
        (0, cy, 0, cx),
        (0, cy, cx, w),
        (cy, h, 0, cx),
        (cy, h, cx, w),
    ];
    let x = pred.values();
    let y = gt.values();
    let mut score = 0.0;
    for (r0, r1, c0, c1) in blocks {
        let n = (r1 - r0) * (c1 - c0);
        if n == 0 {
            continue;
        }
        let weight = n as f64 / area;
        let mut px = Vec::with_capacity(n);
        let mut gy = Vec::with_capacity(n);
        for r in r0..r1 {
            for c in c0..c1 {
                px.push(x[r * w + c]);
                gy.push(if y[r * w + c] { 1.0 } else { 0.0 });
            }
        }
        score += weight * block_ssim(&px, &gy);
    }
    score
}

/// Split point of the region term: rounded foreground centroid plus one,
/// so the top/left blocks hold rows/columns `0..=round(mean)`.
fn centroid_split(gt: &BinaryMask) -> (usize, usize) {
    let (w, h) = (gt.width(), gt.height());
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (i, &v) in gt.values().iter().enumerate() {
        if v {
            sx += (i % w) as f64;
            sy += (i / w) as f64;
            n += 1;
        }
    }
    if n == 0 {
        return (
            (w as f64 / 2.0).round_ties_even() as usize,
            (h as f64 / 2.0).round_ties_even() as usize,
        );
    }
    let cx = (sx / n as f64).round_ties_even() as usize + 1;
    let cy = (sy / n as f64).round_ties_even() as usize + 1;
    (cx.min(w), cy.min(h))
}

fn block_ssim(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let denom = n - 1.0 + f64::EPSILON;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
        cxy += (a - mx) * (b - my);
    }
    let (vx, vy, cxy) = (vx / denom, vy / denom, cxy / denom);
    let num = 4.0 * mx * my * cxy;
    let den = (mx * mx + my * my) * (vx + vy);
    if num != 0.0 {
        num / (den + f64::EPSILON)
    } else if den == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Enhanced-alignment measure of the prediction binarized at its adaptive
/// threshold `min(2 * mean, 1)` (pixel positive iff `v >= threshold` and
/// `v > 0`, so an all-zero prediction stays empty).
///
/// Degenerate ground truths fall back to `mean(1 - FM)` (all background) or
/// `mean(FM)` (all foreground), where `FM` is the binarized prediction.
pub fn e_measure(pred: &SaliencyMap, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let threshold = (2.0 * pred.mean()).min(1.0);
    let fm: Vec<f64> = pred
        .values()
        .iter()
        .map(|&v| if v >= threshold && v > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let g = gt.to_f64();
    let n = fm.len() as f64;
    let n_fg = gt.count_ones();
    let total: f64 = if n_fg == 0 {
        fm.iter().map(|v| 1.0 - v).sum()
    } else if n_fg == gt.len() {
        fm.iter().sum()
    } else {
        let mu_fm = fm.iter().sum::<f64>() / n;
        let mu_gt = g.iter().sum::<f64>() / n;
        fm.iter()
            .zip(&g)
            .map(|(&a, &b)| {
                let (da, db) = (a - mu_fm, b - mu_gt);
                let align = 2.0 * da * db / (da * da + db * db + f64::EPSILON);
                (align + 1.0) * (align + 1.0) / 4.0
            })
            .sum()
    };
    Ok(total / n)
}

/// The six per-image scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub image_id: String,
    pub max_f: f64,
    pub ave_f: f64,
    pub fbw: f64,
    pub mae: f64,
    pub s_measure: f64,
    pub e_measure: f64,
}

/// Per-image evaluation output: the record plus the PR curve consumed by [`aggregate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEvaluation {
    pub record: MetricRecord,
    pub curve: FCurve,
}

pub fn evaluate_image(
    image_id: impl Into<String>,
    pred: &SaliencyMap,
    gt: &BinaryMask,
    opts: &MetricOptions,
) -> Result<ImageEvaluation> {
    let curve = fbeta_curve(pred, gt, opts.beta2)?;
    let (max_f, ave_f) = max_ave_f(&curve);
    let record = MetricRecord {
        image_id: image_id.into(),
        max_f,
        ave_f,
        fbw: weighted_fbeta(pred, gt)?,
        mae: mae(pred, gt)?,
        s_measure: s_measure(pred, gt, opts.alpha)?,
        e_measure: e_measure(pred, gt)?,
    };
    Ok(ImageEvaluation { record, curve })
}

/// Dataset-level values of the six metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub max_f: f64,
    pub ave_f: f64,
    pub fbw: f64,
    pub mae: f64,
    pub s_measure: f64,
    pub e_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// Sorted by image id.
    pub records: Vec<MetricRecord>,
    pub summary: DatasetMetrics,
    /// Threshold-wise mean precision/recall and the F derived from them.
    pub mean_curve: FCurve,
    /// Means of the per-image max-F and ave-F, for comparison with `summary`.
    pub per_image_max_f: f64,
    pub per_image_ave_f: f64,
    /// Prediction files skipped for lacking a ground truth partner.
    pub skipped_unpaired: usize,
}

/// Combines per-image results in sorted image-id order.
pub fn aggregate(method: &str, images: &[ImageEvaluation], beta2: f64) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(Error::EmptyInput("no images to aggregate".into()));
    }
    let mut order: Vec<&ImageEvaluation> = images.iter().collect();
    order.sort_by(|a, b| a.record.image_id.cmp(&b.record.image_id));
    let n = order.len() as f64;
    let mean = |f: fn(&MetricRecord) -> f64| order.iter().map(|e| f(&e.record)).sum::<f64>() / n;

    let points = order[0].curve.points.len();
    let mut precision = vec![0.0; points];
    let mut recall = vec![0.0; points];
    for e in &order {
        if e.curve.points.len() != points {
            return Err(Error::InvalidArgument("curves of unequal length".into()));
        }
        for (t, pt) in e.curve.points.iter().enumerate() {
            precision[t] += pt.precision;
            recall[t] += pt.recall;
        }
    }
    precision.iter_mut().for_each(|p| *p /= n);
    recall.iter_mut().for_each(|r| *r /= n);
    let mean_curve = FCurve::from_pr(&precision, &recall, beta2);
    let (max_f, ave_f) = max_ave_f(&mean_curve);

    Ok(EvalReport {
        method: method.to_string(),
        records: order.iter().map(|e| e.record.clone()).collect(),
        summary: DatasetMetrics {
            max_f,
            ave_f,
            fbw: mean(|r| r.fbw),
            mae: mean(|r| r.mae),
            s_measure: mean(|r| r.s_measure),
            e_measure: mean(|r| r.e_measure),
        },
        mean_curve,
        per_image_max_f: mean(|r| r.max_f),
        per_image_ave_f: mean(|r| r.ave_f),
        skipped_unpaired: 0,
    })
}
