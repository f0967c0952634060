//! Training losses with hand-derived per-pixel gradients.
//!
//! Every loss takes a prediction `x` in `[0, 1]` and a binary target `y` and
//! returns the scalar value together with `dL/dx` at every pixel. Overlap
//! losses (Dice, IoU, F-beta and the contour-weighted F-beta `fc`) are built
//! on soft confusion counts, e.g. `tp = Σ x·y`.
//!
//! The edge-aware loss is `ct + λ·fc`:
//!
//! * `ct` is BCE weighted per pixel by `γ = max(xc, yc)·k + 1`, where `yc` is
//!   the contour of the target and `xc` the soft contour of the prediction.
//!   `γ` is held constant when differentiating.
//! * `fc` is `1 - (1+β²)·tp_m / ((fn+tp)_m + β²·(fp+tp)_m)`, each count
//!   weighted by the target contour `m`. With `m ≡ 1` it is exactly the plain
//!   F-beta loss.
//!
//! Degenerate inputs (empty union, zero contour) yield value 0 and a zero
//! gradient rather than NaN. Ratio-based values are floored at 0 so rounding
//! at the optimum cannot make them negative.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{check_dims, extract_contour, BinaryMask, ContourMask, Grid, SaliencyMap};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossId {
    Bce,
    Ct,
    Dice,
    Ssim,
    Iou,
    Fbeta,
    Fc,
    Ea,
}

impl LossId {
    pub const ALL: [LossId; 8] = [
        LossId::Bce,
        LossId::Ct,
        LossId::Dice,
        LossId::Ssim,
        LossId::Iou,
        LossId::Fbeta,
        LossId::Fc,
        LossId::Ea,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossId::Bce => "bce",
            LossId::Ct => "ct",
            LossId::Dice => "dice",
            LossId::Ssim => "ssim",
            LossId::Iou => "iou",
            LossId::Fbeta => "fbeta",
            LossId::Fc => "fc",
            LossId::Ea => "ea",
        }
    }
}

impl fmt::Display for LossId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownLoss(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub beta2: f64,
    /// Contour emphasis of the contour-weighted BCE.
    pub k: f64,
    /// Weight of the contour F-beta term in the edge-aware loss.
    pub lambda: f64,
    /// Predictions are clamped to `[epsilon, 1 - epsilon]` before logs.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta2: 0.3,
            k: 5.0,
            lambda: 1.0,
            epsilon: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta2 > 0.0) {
            return Err(Error::InvalidArgument(format!("beta2 must be > 0, got {}", self.beta2)));
        }
        if !(self.k >= 0.0) {
            return Err(Error::InvalidArgument(format!("k must be >= 0, got {}", self.k)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Soft confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SoftCounts {
    pub true_pos: f64,
    pub false_pos: f64,
    pub false_neg: f64,
    pub true_neg: f64,
}

impl SoftCounts {
    pub fn total(&self) -> f64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

pub fn soft_counts(x: &SaliencyMap, y: &BinaryMask) -> Result<SoftCounts> {
    check_dims(x, y)?;
    Ok(counts_with(x.values(), &y.to_f64(), |_| 1.0))
}

/// Counts with every pixel's contribution scaled by `m`.
pub fn weighted_soft_counts(x: &SaliencyMap, y: &BinaryMask, m: &ContourMask) -> Result<SoftCounts> {
    check_dims(x, y)?;
    check_dims(x, m)?;
    Ok(counts_with(x.values(), &y.to_f64(), |i| m.values()[i]))
}

fn counts_with(x: &[f64], y: &[f64], weight: impl Fn(usize) -> f64) -> SoftCounts {
    let mut c = SoftCounts::default();
    for (i, (&xi, &yi)) in x.iter().zip(y).enumerate() {
        let m = weight(i);
        c.true_pos += m * xi * yi;
        c.false_pos += m * xi * (1.0 - yi);
        c.false_neg += m * (1.0 - xi) * yi;
        c.true_neg += m * (1.0 - xi) * (1.0 - yi);
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossResult {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub width: usize,
    pub height: usize,
}

impl LossResult {
    fn new(value: f64, gradient: Vec<f64>, like: &impl Grid) -> Self {
        Self {
            value,
            gradient,
            width: like.width(),
            height: like.height(),
        }
    }

    fn zero(like: &impl Grid) -> Self {
        Self::new(0.0, vec![0.0; like.len()], like)
    }
}

pub fn bce_loss(x: &SaliencyMap, y: &BinaryMask, cfg: &LossConfig) -> Result<LossResult> {
    check_dims(x, y)?;
    Ok(weighted_bce(x, y, cfg.epsilon, |_| 1.0))
}

/// Contour-weighted BCE with per-pixel weight `max(xc, yc)·k + 1`.
pub fn ct_loss(
    x: &SaliencyMap,
    y: &BinaryMask,
    xc: &ContourMask,
    yc: &ContourMask,
    cfg: &LossConfig,
) -> Result<LossResult> {
    check_dims(x, y)?;
    check_dims(x, xc)?;
    check_dims(x, yc)?;
    let (xc, yc, k) = (xc.values(), yc.values(), cfg.k);
    Ok(weighted_bce(x, y, cfg.epsilon, |i| xc[i].max(yc[i]) * k + 1.0))
}

fn weighted_bce(
    x: &SaliencyMap,
    y: &BinaryMask,
    epsilon: f64,
    gamma: impl Fn(usize) -> f64,
) -> LossResult {
    let n = x.len() as f64;
    let mut total = 0.0;
    let mut gradient = Vec::with_capacity(x.len());
    for (i, (&xi, &yi)) in x.values().iter().zip(y.values()).enumerate() {
        let p = xi.clamp(epsilon, 1.0 - epsilon);
        let g = gamma(i);
        let (nll, target) = if yi { (-p.ln(), 1.0) } else { (-(1.0 - p).ln(), 0.0) };
        total += g * nll;
        gradient.push(g * ((p - target) / (p * (1.0 - p))) / n);
    }
    LossResult::new(total / n, gradient, x)
}

/// `-(dN·D - N·dD) / D²`, the derivative of `1 - N/D`.
fn one_minus_ratio_grad(n: f64, d: f64, dn: f64, dd: f64) -> f64 {
    -(dn * d - n * dd) / (d * d)
}

pub fn dice_loss(x: &SaliencyMap, y: &BinaryMask) -> Result<LossResult> {
    let c = soft_counts(x, y)?;
    let d = (c.false_neg + c.true_pos) + (c.false_pos + c.true_pos);
    if d == 0.0 {
        return Ok(LossResult::zero(x));
    }
    let n = 2.0 * c.true_pos;
    let gradient = x
        .values()
        .iter()
        .zip(y.to_f64())
        .map(|(_, yi)| {
            // d tp = y, d fp = 1 - y, d fn = -y
            let dd = (-yi + yi) + ((1.0 - yi) + yi);
            one_minus_ratio_grad(n, d, 2.0 * yi, dd)
        })
        .collect();
    Ok(LossResult::new((1.0 - n / d).max(0.0), gradient, x))
}

pub fn iou_loss(x: &SaliencyMap, y: &BinaryMask) -> Result<LossResult> {
    let c = soft_counts(x, y)?;
    let u = c.false_neg + c.true_pos + c.false_pos;
    if u == 0.0 {
        return Ok(LossResult::zero(x));
    }
    let n = c.true_pos;
    let gradient = y
        .to_f64()
        .into_iter()
        .map(|yi| one_minus_ratio_grad(n, u, yi, -yi + yi + (1.0 - yi)))
        .collect();
    Ok(LossResult::new((1.0 - n / u).max(0.0), gradient, x))
}

/// Whole-image SSIM loss (population statistics, single window).
pub fn ssim_loss(x: &SaliencyMap, y: &BinaryMask) -> Result<LossResult> {
    check_dims(x, y)?;
    let xs = x.values();
    let ys = y.to_f64();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in xs.iter().zip(&ys) {
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
        cxy += (a - mx) * (b - my);
    }
    let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
    let a1 = 2.0 * mx * my + SSIM_C1;
    let a2 = 2.0 * cxy + SSIM_C2;
    let b1 = mx * mx + my * my + SSIM_C1;
    let b2 = vx + vy + SSIM_C2;
    let ssim = (a1 * a2) / (b1 * b2);
    let gradient = xs
        .iter()
        .zip(&ys)
        .map(|(&xi, &yi)| {
            let da1 = 2.0 * my / n;
            let da2 = 2.0 * (yi - my) / n;
            let db1 = 2.0 * mx / n;
            let db2 = 2.0 * (xi - mx) / n;
            -ssim * (da1 / a1 + da2 / a2 - db1 / b1 - db2 / b2)
        })
        .collect();
    Ok(LossResult::new((1.0 - ssim).max(0.0), gradient, x))
}

pub fn fbeta_loss(x: &SaliencyMap, y: &BinaryMask, cfg: &LossConfig) -> Result<LossResult> {
    let c = soft_counts(x, y)?;
    Ok(fbeta_from_counts(x, &y.to_f64(), &c, cfg.beta2, |_| 1.0))
}

/// Contour-weighted soft F-beta loss.
pub fn weighted_fbeta_loss(
    x: &SaliencyMap,
    y: &BinaryMask,
    m: &ContourMask,
    cfg: &LossConfig,
) -> Result<LossResult> {
    let c = weighted_soft_counts(x, y, m)?;
    if m.is_all_zero() {
        return Ok(LossResult::zero(x));
    }
    let weights = m.values();
    Ok(fbeta_from_counts(x, &y.to_f64(), &c, cfg.beta2, |i| weights[i]))
}

fn fbeta_from_counts(
    x: &SaliencyMap,
    y: &[f64],
    c: &SoftCounts,
    beta2: f64,
    weight: impl Fn(usize) -> f64,
) -> LossResult {
    let d = (c.false_neg + c.true_pos) + beta2 * (c.false_pos + c.true_pos);
    if d == 0.0 {
        return LossResult::zero(x);
    }
    let n = (1.0 + beta2) * c.true_pos;
    let gradient = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let m = weight(i);
            let (dtp, dfp, dfn) = (m * yi, m * (1.0 - yi), -(m * yi));
            let dd = (dfn + dtp) + beta2 * (dfp + dtp);
            one_minus_ratio_grad(n, d, (1.0 + beta2) * dtp, dd)
        })
        .collect();
    LossResult::new((1.0 - n / d).max(0.0), gradient, x)
}

/// Edge-aware loss with explicit contours: `ct(x, y, xc, yc) + λ·fc(x, y, yc)`.
pub fn ea_loss_with_contours(
    x: &SaliencyMap,
    y: &BinaryMask,
    xc: &ContourMask,
    yc: &ContourMask,
    cfg: &LossConfig,
) -> Result<LossResult> {
    let ct = ct_loss(x, y, xc, yc, cfg)?;
    let fc = weighted_fbeta_loss(x, y, yc, cfg)?;
    let lambda = cfg.lambda;
    let gradient = ct
        .gradient
        .iter()
        .zip(&fc.gradient)
        .map(|(a, b)| a + lambda * b)
        .collect();
    Ok(LossResult::new(ct.value + lambda * fc.value, gradient, x))
}

/// Edge-aware loss; `xc` is the soft contour of the current prediction.
pub fn ea_loss(x: &SaliencyMap, y: &BinaryMask, cfg: &LossConfig) -> Result<LossResult> {
    check_dims(x, y)?;
    let xc = extract_contour(x);
    let yc = extract_contour(y);
    ea_loss_with_contours(x, y, &xc, &yc, cfg)
}

/// Evaluates any loss by id, deriving contours from `x` and `y` as needed.
pub fn evaluate(id: LossId, x: &SaliencyMap, y: &BinaryMask, cfg: &LossConfig) -> Result<LossResult> {
    check_dims(x, y)?;
    let contours = Contours::for_loss(id, x, y);
    evaluate_with(id, x, y, &contours, cfg)
}

/// Contour maps held fixed while a loss is evaluated.
#[derive(Debug, Clone, Default)]
pub struct Contours {
    pub pred: Option<ContourMask>,
    pub target: Option<ContourMask>,
}

impl Contours {
    pub fn for_loss(id: LossId, x: &SaliencyMap, y: &BinaryMask) -> Self {
        let needs_pred = matches!(id, LossId::Ct | LossId::Ea);
        let needs_target = matches!(id, LossId::Ct | LossId::Ea | LossId::Fc);
        Self {
            pred: needs_pred.then(|| extract_contour(x)),
            target: needs_target.then(|| extract_contour(y)),
        }
    }
}

/// Evaluates a loss with the given contours (missing ones are derived).
pub fn evaluate_with(
    id: LossId,
    x: &SaliencyMap,
    y: &BinaryMask,
    contours: &Contours,
    cfg: &LossConfig,
) -> Result<LossResult> {
    cfg.validate()?;
    let pred_contour = || contours.pred.clone().unwrap_or_else(|| extract_contour(x));
    let target_contour = || contours.target.clone().unwrap_or_else(|| extract_contour(y));
    match id {
        LossId::Bce => bce_loss(x, y, cfg),
        LossId::Ct => ct_loss(x, y, &pred_contour(), &target_contour(), cfg),
        LossId::Dice => dice_loss(x, y),
        LossId::Ssim => ssim_loss(x, y),
        LossId::Iou => iou_loss(x, y),
        LossId::Fbeta => fbeta_loss(x, y, cfg),
        LossId::Fc => weighted_fbeta_loss(x, y, &target_contour(), cfg),
        LossId::Ea => ea_loss_with_contours(x, y, &pred_contour(), &target_contour(), cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, v: &[f64]) -> SaliencyMap {
        SaliencyMap::new(w, h, v.to_vec()).unwrap()
    }

    fn mask(w: usize, h: usize, bits: &[u8]) -> BinaryMask {
        BinaryMask::from_bits(w, h, bits).unwrap()
    }

    #[test]
    fn loss_ids_round_trip() {
        for id in LossId::ALL {
            assert_eq!(id.as_str().parse::<LossId>().unwrap(), id);
        }
        assert!("focal".parse::<LossId>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let bad = [
            LossConfig { beta2: 0.0, ..Default::default() },
            LossConfig { k: -1.0, ..Default::default() },
            LossConfig { lambda: -0.5, ..Default::default() },
            LossConfig { epsilon: 0.5, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn bce_examples() {
        let cfg = LossConfig::default();
        let y = mask(2, 2, &[1, 0, 0, 1]);
        let half = SaliencyMap::filled(2, 2, 0.5).unwrap();
        assert!((bce_loss(&half, &y, &cfg).unwrap().value - std::f64::consts::LN_2).abs() < 1e-15);
        let perfect = bce_loss(&y.to_saliency_map(), &y, &cfg).unwrap();
        assert!(perfect.value <= -(1.0 - cfg.epsilon).ln() + 1e-15);
        let single = bce_loss(&map(1, 1, &[0.9]), &mask(1, 1, &[1]), &cfg).unwrap();
        assert!((single.value - 0.105_360_515_657_826_3).abs() < 1e-12);
    }

    #[test]
    fn ct_with_single_contour_pixel() {
        let cfg = LossConfig { k: 5.0, ..Default::default() };
        let x = map(3, 3, &[0.2, 0.3, 0.1, 0.4, 0.6, 0.2, 0.1, 0.3, 0.2]);
        let y = mask(3, 3, &[0, 0, 0, 0, 1, 0, 0, 0, 0]);
        let zero = ContourMask::zeros(3, 3).unwrap();
        let mut yc_vals = vec![0.0; 9];
        yc_vals[4] = 1.0;
        let yc = ContourMask::from_values(3, 3, yc_vals).unwrap();
        let got = ct_loss(&x, &y, &zero, &yc, &cfg).unwrap().value;
        let mut expected = 0.0;
        for (i, &xi) in x.values().iter().enumerate() {
            let nll: f64 = if i == 4 { -xi.ln() } else { -(1.0 - xi).ln() };
            expected += if i == 4 { 6.0 * nll } else { nll };
        }
        assert!((got - expected / 9.0).abs() < 1e-14);
    }

    #[test]
    fn overlap_losses_on_half_prediction() {
        let x = SaliencyMap::filled(2, 2, 0.5).unwrap();
        let y = mask(2, 2, &[1, 1, 0, 0]);
        let c = soft_counts(&x, &y).unwrap();
        assert_eq!((c.true_pos, c.false_pos, c.false_neg, c.true_neg), (1.0, 1.0, 1.0, 1.0));
        assert!((dice_loss(&x, &y).unwrap().value - 0.5).abs() < 1e-15);
        assert!((iou_loss(&x, &y).unwrap().value - (1.0 - 1.0 / 3.0)).abs() < 1e-15);
        // 1 - 1.3 / (2 + 0.3 * 2)
        let f = fbeta_loss(&x, &y, &LossConfig::default()).unwrap().value;
        assert!((f - 0.5).abs() < 1e-15);
    }

    #[test]
    fn overlap_losses_at_extremes() {
        let cfg = LossConfig::default();
        let y = mask(2, 2, &[1, 1, 0, 0]);
        let same = y.to_saliency_map();
        let disjoint = y.complement().to_saliency_map();
        for l in [dice_loss(&same, &y), iou_loss(&same, &y), fbeta_loss(&same, &y, &cfg)] {
            assert_eq!(l.unwrap().value, 0.0);
        }
        for l in [dice_loss(&disjoint, &y), iou_loss(&disjoint, &y)] {
            assert_eq!(l.unwrap().value, 1.0);
        }
        let zeros = SaliencyMap::filled(2, 2, 0.0).unwrap();
        assert_eq!(fbeta_loss(&zeros, &y, &cfg).unwrap().value, 1.0);

        let empty = mask(2, 2, &[0; 4]);
        for l in [dice_loss(&zeros, &empty), iou_loss(&zeros, &empty), fbeta_loss(&zeros, &empty, &cfg)] {
            let l = l.unwrap();
            assert_eq!(l.value, 0.0);
            assert!(l.gradient.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn ssim_identity_and_constants() {
        let y = mask(3, 3, &[0, 1, 1, 0, 1, 0, 0, 0, 1]);
        assert!(ssim_loss(&y.to_saliency_map(), &y).unwrap().value.abs() < 1e-9);
        let c = SaliencyMap::filled(2, 2, 1.0).unwrap();
        assert!(ssim_loss(&c, &mask(2, 2, &[1; 4])).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn contour_weighted_f_zero_off_support() {
        let cfg = LossConfig::default();
        let x = map(3, 3, &[0.2, 0.3, 0.1, 0.4, 0.6, 0.2, 0.1, 0.3, 0.2]);
        let y = mask(3, 3, &[0, 0, 0, 0, 1, 1, 0, 1, 1]);
        let mut mv = vec![0.0; 9];
        mv[4] = 1.0;
        mv[0] = 0.5;
        let m = ContourMask::from_values(3, 3, mv).unwrap();
        let l = weighted_fbeta_loss(&x, &y, &m, &cfg).unwrap();
        for (i, g) in l.gradient.iter().enumerate() {
            if i != 0 && i != 4 {
                assert_eq!(*g, 0.0);
            }
        }
        let none = weighted_fbeta_loss(&x, &y, &ContourMask::zeros(3, 3).unwrap(), &cfg).unwrap();
        assert_eq!(none.value, 0.0);
        assert!(none.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn ea_at_perfect_prediction() {
        let cfg = LossConfig::default();
        let y = mask(4, 4, &[0, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0]);
        let x = y.to_saliency_map();
        let ea = ea_loss(&x, &y, &cfg).unwrap();
        let fc = weighted_fbeta_loss(&x, &y, &extract_contour(&y), &cfg).unwrap();
        assert_eq!(fc.value, 0.0);
        let ct = ct_loss(&x, &y, &extract_contour(&x), &extract_contour(&y), &cfg).unwrap();
        assert_eq!(ea.value, ct.value);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let x = SaliencyMap::filled(2, 2, 0.5).unwrap();
        let y = mask(4, 1, &[0; 4]);
        for id in LossId::ALL {
            assert!(evaluate(id, &x, &y, &LossConfig::default()).is_err(), "{id}");
        }
    }
}
