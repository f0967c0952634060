//! WebAssembly entry points for the static demo in `www/`. Every function
//! takes flat arrays and returns a JSON string; the `*_json` variants are
//! the same operations for native callers and tests.

use saliency_core::losses::{ct_loss, weighted_fbeta_loss, LossConfig, LossId};
use saliency_core::metrics::{evaluate_image, CurvePoint, MetricRecord};
use saliency_core::synth::{synth_dataset, SynthScene};
use saliency_core::train::{micro_train, HeldoutPoint, TrainConfig};
use saliency_core::{extract_contour, BinaryMask, MetricOptions, SaliencyMap};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Scenes trained on; the demo scene for a seed is the one after them.
pub const TRAIN_SCENES: usize = 12;

#[derive(Serialize)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub image: Vec<f64>,
    pub gt: Vec<u8>,
}

#[derive(Serialize)]
pub struct EdgeAware {
    pub pred_contour: Vec<f64>,
    pub gt_contour: Vec<f64>,
    pub ct: f64,
    pub fc: f64,
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Serialize)]
pub struct Metrics {
    pub record: MetricRecord,
    pub curve: Vec<CurvePoint>,
}

#[derive(Serialize)]
pub struct Trace {
    pub loss: String,
    pub loss_trace: Vec<f64>,
    pub heldout: Vec<HeldoutPoint>,
    /// Trained model's prediction on the demo scene.
    pub prediction: Vec<f64>,
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(err)
}

fn demo_scenes(seed: u32) -> Result<Vec<SynthScene>, String> {
    synth_dataset(TRAIN_SCENES + 1, u64::from(seed)).map_err(err)
}

fn inputs(width: usize, height: usize, pred: Vec<f64>, gt: &[u8]) -> Result<(SaliencyMap, BinaryMask), String> {
    let x = SaliencyMap::new(width, height, pred).map_err(err)?;
    let y = BinaryMask::new(width, height, gt.iter().map(|&v| v != 0).collect()).map_err(err)?;
    Ok((x, y))
}

pub fn scene_json(seed: u32) -> Result<String, String> {
    let s = demo_scenes(seed)?.pop().expect("dataset is non-empty");
    to_json(&Scene {
        width: s.width(),
        height: s.height(),
        image: s.image.values().to_vec(),
        gt: s.gt.values().iter().map(|&b| u8::from(b)).collect(),
    })
}

pub fn edge_aware_json(width: usize, height: usize, pred: Vec<f64>, gt: &[u8], lambda: f64) -> Result<String, String> {
    let (x, y) = inputs(width, height, pred, gt)?;
    let cfg = LossConfig { lambda, ..LossConfig::default() };
    cfg.validate().map_err(err)?;
    let (xc, yc) = (extract_contour(&x), extract_contour(&y));
    let ct = ct_loss(&x, &y, &xc, &yc, &cfg).map_err(err)?;
    let fc = weighted_fbeta_loss(&x, &y, &yc, &cfg).map_err(err)?;
    let gradient = ct.gradient.iter().zip(&fc.gradient).map(|(a, b)| a + lambda * b).collect();
    to_json(&EdgeAware {
        pred_contour: xc.values().to_vec(),
        gt_contour: yc.values().to_vec(),
        ct: ct.value,
        fc: fc.value,
        value: ct.value + lambda * fc.value,
        gradient,
    })
}

pub fn metrics_json(width: usize, height: usize, pred: Vec<f64>, gt: &[u8]) -> Result<String, String> {
    let (x, y) = inputs(width, height, pred, gt)?;
    let ev = evaluate_image("demo", &x, &y, &MetricOptions::default()).map_err(err)?;
    to_json(&Metrics {
        record: ev.record,
        curve: ev.curve.points,
    })
}

pub fn train_json(loss: &str, seed: u32, steps: usize) -> Result<String, String> {
    let loss: LossId = loss.parse().map_err(err)?;
    let scenes = demo_scenes(seed)?;
    let (train, held) = scenes.split_at(TRAIN_SCENES);
    let cfg = TrainConfig {
        loss,
        steps,
        eval_every: (steps / 20).max(1),
        ..TrainConfig::default()
    };
    let run = micro_train(train, held, &cfg).map_err(err)?;
    let prediction = run.model.predict(&held[0]).map_err(err)?;
    to_json(&Trace {
        loss: loss.to_string(),
        loss_trace: run.loss_trace,
        heldout: run.heldout,
        prediction: prediction.values().to_vec(),
    })
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// `{width, height, image, gt}` for the demo scene of `seed`.
#[wasm_bindgen]
pub fn scene(seed: u32) -> Result<String, JsError> {
    js(scene_json(seed))
}

/// Soft contours of both maps plus the edge-aware loss and its gradient.
#[wasm_bindgen(js_name = edgeAware)]
pub fn edge_aware(width: usize, height: usize, pred: Vec<f64>, gt: Vec<u8>, lambda: f64) -> Result<String, JsError> {
    js(edge_aware_json(width, height, pred, &gt, lambda))
}

/// The six metrics and the 256-point precision/recall/F curve.
#[wasm_bindgen]
pub fn metrics(width: usize, height: usize, pred: Vec<f64>, gt: Vec<u8>) -> Result<String, JsError> {
    js(metrics_json(width, height, pred, &gt))
}

/// Trains the logistic model with one loss; returns the loss trace,
/// held-out metrics and the final prediction on the demo scene.
#[wasm_bindgen]
pub fn train(loss: &str, seed: u32, steps: usize) -> Result<String, JsError> {
    js(train_json(loss, seed, steps))
}
