//! Per-pixel logistic micro-trainer.
//!
//! The predictor is `x = σ(θ·φ)` where `φ` is a standardized quadratic
//! expansion of the synthetic scene channels. Training is full-batch
//! gradient descent: each loss's per-pixel gradient `dL/dx` is chained
//! through `dx/dz = x(1-x)` and summed against `φ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{evaluate_with, Contours, LossConfig, LossId};
use crate::mask::{extract_contour, SaliencyMap};
use crate::metrics::{aggregate, evaluate_image, MetricOptions};
use crate::synth::{SynthScene, NUM_CHANNELS, SCENE_SIDE};

/// Constant + linear + pairwise products of the channels.
pub const NUM_FEATURES: usize = 1 + NUM_CHANNELS + NUM_CHANNELS * (NUM_CHANNELS + 1) / 2;

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const LOGIT_LIMIT: f64 = 30.0;

/// Quadratic feature expansion of one pixel, before standardization.
pub fn expand(c: &[f64; NUM_CHANNELS]) -> [f64; NUM_FEATURES] {
    let mut f = [0.0; NUM_FEATURES];
    f[0] = 1.0;
    f[1..=NUM_CHANNELS].copy_from_slice(c);
    let mut k = 1 + NUM_CHANNELS;
    for i in 0..NUM_CHANNELS {
        for j in i..NUM_CHANNELS {
            f[k] = c[i] * c[j];
            k += 1;
        }
    }
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    /// Per-feature standardization fitted on the training set. The constant
    /// feature keeps mean 0 and scale 1.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

impl LogisticModel {
    /// Zero weights, with standardization fitted on `scenes`.
    pub fn fit_standardization(scenes: &[SynthScene]) -> Self {
        let mut sum = [0.0; NUM_FEATURES];
        let mut sq = [0.0; NUM_FEATURES];
        let mut count = 0.0;
        for s in scenes {
            for i in 0..s.image.values().len() {
                let f = expand(&s.pixel(i));
                for k in 0..NUM_FEATURES {
                    sum[k] += f[k];
                    sq[k] += f[k] * f[k];
                }
                count += 1.0;
            }
        }
        let mut mean = vec![0.0; NUM_FEATURES];
        let mut scale = vec![1.0; NUM_FEATURES];
        for k in 1..NUM_FEATURES {
            mean[k] = sum[k] / count;
            let var = (sq[k] / count - mean[k] * mean[k]).max(0.0);
            if var > 1e-12 {
                scale[k] = var.sqrt();
            }
        }
        Self {
            weights: vec![0.0; NUM_FEATURES],
            feature_mean: mean,
            feature_scale: scale,
        }
    }

    pub fn features(&self, scene: &SynthScene) -> Vec<[f64; NUM_FEATURES]> {
        (0..scene.image.values().len())
            .map(|i| {
                let mut f = expand(&scene.pixel(i));
                for k in 1..NUM_FEATURES {
                    f[k] = (f[k] - self.feature_mean[k]) / self.feature_scale[k];
                }
                f
            })
            .collect()
    }

    pub fn predict_from(&self, weights: &[f64], features: &[[f64; NUM_FEATURES]]) -> Result<SaliencyMap> {
        let values = features
            .iter()
            .map(|f| {
                let z: f64 = f.iter().zip(weights).map(|(a, b)| a * b).sum();
                sigmoid(z.clamp(-LOGIT_LIMIT, LOGIT_LIMIT))
            })
            .collect();
        SaliencyMap::new(SCENE_SIDE, SCENE_SIDE, values)
    }

    pub fn predict(&self, scene: &SynthScene) -> Result<SaliencyMap> {
        self.predict_from(&self.weights, &self.features(scene))
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `Σ_i dL/dx_i · x_i(1 - x_i) · φ_i`: chains a per-pixel gradient
/// through the logistic map onto the weights.
pub fn parameter_gradient(
    x: &SaliencyMap,
    pixel_grad: &[f64],
    features: &[[f64; NUM_FEATURES]],
) -> Vec<f64> {
    let mut g = vec![0.0; NUM_FEATURES];
    for ((&xi, &gi), f) in x.values().iter().zip(pixel_grad).zip(features) {
        let dz = gi * xi * (1.0 - xi);
        if dz == 0.0 {
            continue;
        }
        for k in 0..NUM_FEATURES {
            g[k] += dz * f[k];
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossId,
    pub loss_config: LossConfig,
    /// Initial step size; with line search it is also the cap per step.
    pub learning_rate: f64,
    pub steps: usize,
    /// Backtrack until the step satisfies the Armijo condition on the
    /// training objective (contours recomputed at the trial weights).
    pub line_search: bool,
    /// Held-out metrics are recorded every this many steps (and at the end).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossId::Bce,
            loss_config: LossConfig::default(),
            learning_rate: 4.0,
            steps: 120,
            line_search: true,
            eval_every: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldoutPoint {
    pub step: usize,
    pub max_f: f64,
    pub ave_f: f64,
    pub fbw: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub loss: LossId,
    pub loss_config: LossConfig,
    pub learning_rate: f64,
    pub steps: usize,
    pub model: LogisticModel,
    /// Training objective before the first step and after every step.
    pub loss_trace: Vec<f64>,
    pub heldout: Vec<HeldoutPoint>,
}

impl TrainRun {
    pub fn final_heldout(&self) -> Option<&HeldoutPoint> {
        self.heldout.last()
    }

    /// Share of consecutive steps whose loss did not rise by more than `tol`.
    pub fn non_increasing_fraction(&self, tol: f64) -> f64 {
        let pairs = self.loss_trace.len().saturating_sub(1);
        if pairs == 0 {
            return 1.0;
        }
        let ok = self.loss_trace.windows(2).filter(|w| w[1] <= w[0] + tol).count();
        ok as f64 / pairs as f64
    }
}

struct Batch<'a> {
    scenes: &'a [SynthScene],
    features: Vec<Vec<[f64; NUM_FEATURES]>>,
}

impl Batch<'_> {
    /// Mean loss over the batch and, when asked, its weight gradient.
    /// Contour maps are recomputed from the prediction at `weights` and
    /// treated as constants when differentiating.
    fn objective(
        &self,
        model: &LogisticModel,
        weights: &[f64],
        cfg: &TrainConfig,
        want_grad: bool,
    ) -> Result<(f64, Vec<f64>)> {
        let n = self.scenes.len() as f64;
        let mut total = 0.0;
        let mut grad = vec![0.0; NUM_FEATURES];
        for (scene, features) in self.scenes.iter().zip(&self.features) {
            let x = model.predict_from(weights, features)?;
            let contours = Contours::for_loss(cfg.loss, &x, &scene.gt);
            let res = evaluate_with(cfg.loss, &x, &scene.gt, &contours, &cfg.loss_config)?;
            total += res.value / n;
            if want_grad {
                let g = parameter_gradient(&x, &res.gradient, features);
                for k in 0..NUM_FEATURES {
                    grad[k] += g[k] / n;
                }
            }
        }
        Ok((total, grad))
    }
}

fn heldout_point(model: &LogisticModel, heldout: &[SynthScene], step: usize) -> Result<HeldoutPoint> {
    let opts = MetricOptions::default();
    let images = heldout
        .iter()
        .map(|s| evaluate_image(s.id.clone(), &model.predict(s)?, &s.gt, &opts))
        .collect::<Result<Vec<_>>>()?;
    let r = aggregate("heldout", &images, opts.beta2)?;
    Ok(HeldoutPoint {
        step,
        max_f: r.summary.max_f,
        ave_f: r.summary.ave_f,
        fbw: r.summary.fbw,
        mae: r.summary.mae,
    })
}

/// Trains a fresh zero-initialized model on `train` and tracks held-out
/// metrics. Single-threaded and deterministic.
pub fn micro_train(train: &[SynthScene], heldout: &[SynthScene], cfg: &TrainConfig) -> Result<TrainRun> {
    if train.is_empty() || heldout.is_empty() {
        return Err(Error::EmptyInput("training and held-out sets must be non-empty".into()));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be finite and >= 0, got {}",
            cfg.learning_rate
        )));
    }
    cfg.loss_config.validate()?;
    let eval_every = cfg.eval_every.max(1);

    let mut model = LogisticModel::fit_standardization(train);
    let batch = Batch {
        scenes: train,
        features: train.iter().map(|s| model.features(s)).collect(),
    };

    let mut heldout_trace = vec![heldout_point(&model, heldout, 0)?];
    let (mut value, mut grad) = batch.objective(&model, &model.weights, cfg, true)?;
    if !value.is_finite() {
        return Err(Error::Diverged { step: 0, value });
    }
    let mut loss_trace = vec![value];
    let mut lr = cfg.learning_rate;

    for step in 1..=cfg.steps {
        if cfg.learning_rate > 0.0 {
            let g2: f64 = grad.iter().map(|g| g * g).sum();
            let mut eta = if cfg.line_search { (lr * 2.0).min(cfg.learning_rate) } else { lr };
            let mut accepted = None;
            for _ in 0..=MAX_BACKTRACKS {
                let trial: Vec<f64> = model.weights.iter().zip(&grad).map(|(w, g)| w - eta * g).collect();
                if !cfg.line_search {
                    accepted = Some(trial);
                    break;
                }
                let (v, _) = batch.objective(&model, &trial, cfg, false)?;
                if v.is_finite() && v <= value - ARMIJO_C * eta * g2 {
                    accepted = Some(trial);
                    break;
                }
                eta *= 0.5;
            }
            if let Some(w) = accepted {
                model.weights = w;
                if cfg.line_search {
                    lr = eta;
                }
            }
        }
        let (v, g) = batch.objective(&model, &model.weights, cfg, true)?;
        if !v.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { step, value: v });
        }
        (value, grad) = (v, g);
        loss_trace.push(value);
        if step % eval_every == 0 || step == cfg.steps {
            heldout_trace.push(heldout_point(&model, heldout, step)?);
        }
    }

    Ok(TrainRun {
        loss: cfg.loss,
        loss_config: cfg.loss_config,
        learning_rate: cfg.learning_rate,
        steps: cfg.steps,
        model,
        loss_trace,
        heldout: heldout_trace,
    })
}

/// Contour of the current prediction, exposed for inspection tools.
pub fn prediction_contour(model: &LogisticModel, scene: &SynthScene) -> Result<Vec<f64>> {
    Ok(extract_contour(&model.predict(scene)?).values().to_vec())
}
