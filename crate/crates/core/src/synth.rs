//! Seeded synthetic scenes for the micro-trainer.
//!
//! Each scene is a 64x64 grid with one to three rectangles or ellipses as
//! the salient object, rendered with soft edges, an illumination ramp,
//! noise and sometimes a low-contrast distractor that is not part of the
//! ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, SaliencyMap};

pub const SCENE_SIDE: usize = 64;
pub const MIN_FOREGROUND: f64 = 0.05;
pub const MAX_FOREGROUND: f64 = 0.6;
/// intensity, small blur, large blur, x, y
pub const NUM_CHANNELS: usize = 5;

const SMALL_BLUR_RADIUS: usize = 2;
const LARGE_BLUR_RADIUS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub id: String,
    pub image: SaliencyMap,
    pub gt: BinaryMask,
    /// `NUM_CHANNELS` row-major planes, each `width * height` long.
    pub channels: Vec<Vec<f64>>,
}

impl SynthScene {
    pub fn width(&self) -> usize {
        SCENE_SIDE
    }

    pub fn height(&self) -> usize {
        SCENE_SIDE
    }

    /// All channel values of pixel `i`.
    pub fn pixel(&self, i: usize) -> [f64; NUM_CHANNELS] {
        std::array::from_fn(|c| self.channels[c][i])
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect { cx: f64, cy: f64, hw: f64, hh: f64 },
    Ellipse { cx: f64, cy: f64, a: f64, b: f64 },
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let s = SCENE_SIDE as f64;
        let cx = rng.random_range(0.1 * s..0.9 * s);
        let cy = rng.random_range(0.1 * s..0.9 * s);
        let hw = rng.random_range(3.0..18.0);
        let hh = rng.random_range(3.0..18.0);
        if rng.random_bool(0.5) {
            Shape::Rect { cx, cy, hw, hh }
        } else {
            Shape::Ellipse { cx, cy, a: hw, b: hh }
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { cx, cy, hw, hh } => (x - cx).abs() <= hw && (y - cy).abs() <= hh,
            Shape::Ellipse { cx, cy, a, b } => {
                let (u, v) = ((x - cx) / a, (y - cy) / b);
                u * u + v * v <= 1.0
            }
        }
    }
}

fn rasterize(shapes: &[Shape]) -> Vec<bool> {
    let n = SCENE_SIDE;
    (0..n * n)
        .map(|i| {
            let (x, y) = ((i % n) as f64 + 0.5, (i / n) as f64 + 0.5);
            shapes.iter().any(|s| s.contains(x, y))
        })
        .collect()
}

/// Separable box blur with borders clamped to the nearest pixel.
fn box_blur(src: &[f64], side: usize, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for row in 0..side {
            for col in 0..side {
                let mut acc = 0.0;
                for d in -r..=r {
                    let (rr, cc) = if horizontal {
                        (row as isize, col as isize + d)
                    } else {
                        (row as isize + d, col as isize)
                    };
                    let rr = rr.clamp(0, side as isize - 1) as usize;
                    let cc = cc.clamp(0, side as isize - 1) as usize;
                    acc += src[rr * side + cc];
                }
                out[row * side + col] = acc / (2 * r + 1) as f64;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

fn noise(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    // Irwin-Hall(4), rescaled to unit variance
    let s: f64 = (0..4).map(|_| rng.random::<f64>()).sum();
    (s - 2.0) * (3.0f64).sqrt() * sigma
}

fn scene(rng: &mut ChaCha8Rng, index: usize) -> Result<SynthScene> {
    let n = SCENE_SIDE;
    let mask = loop {
        let count = rng.random_range(1..=3);
        let shapes: Vec<Shape> = (0..count).map(|_| Shape::random(rng)).collect();
        let mask = rasterize(&shapes);
        let frac = mask.iter().filter(|&&b| b).count() as f64 / (n * n) as f64;
        if (MIN_FOREGROUND..=MAX_FOREGROUND).contains(&frac) {
            break mask;
        }
    };

    let background = rng.random_range(0.15..0.45);
    let contrast = rng.random_range(0.2..0.45);
    let ramp = rng.random_range(-0.15..0.15);
    let distractor = rng.random_bool(0.5).then(|| (Shape::random(rng), contrast * 0.5));

    let mut clean = vec![0.0; n * n];
    for (i, v) in clean.iter_mut().enumerate() {
        let (x, y) = ((i % n) as f64 + 0.5, (i / n) as f64 + 0.5);
        let mut level = background + ramp * (x / n as f64 - 0.5);
        if let Some((shape, c)) = distractor {
            if shape.contains(x, y) {
                level += c;
            }
        }
        if mask[i] {
            level = background + contrast;
        }
        *v = level;
    }
    let soft = box_blur(&clean, n, 1);
    let sigma = rng.random_range(0.04..0.1);
    let intensity: Vec<f64> = soft.iter().map(|&v| (v + noise(rng, sigma)).clamp(0.0, 1.0)).collect();

    let small = box_blur(&intensity, n, SMALL_BLUR_RADIUS);
    let large = box_blur(&intensity, n, LARGE_BLUR_RADIUS);
    let xs: Vec<f64> = (0..n * n).map(|i| ((i % n) as f64 + 0.5) / n as f64).collect();
    let ys: Vec<f64> = (0..n * n).map(|i| ((i / n) as f64 + 0.5) / n as f64).collect();

    Ok(SynthScene {
        id: format!("scene-{index:05}"),
        image: SaliencyMap::new(n, n, intensity.clone())?,
        gt: BinaryMask::new(n, n, mask)?,
        channels: vec![intensity, small, large, xs, ys],
    })
}

/// Generates `n` scenes from `seed`; the same seed always yields the same set.
pub fn synth_dataset(n: usize, seed: u64) -> Result<Vec<SynthScene>> {
    if n == 0 {
        return Err(Error::InvalidArgument("scene count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| scene(&mut rng, i)).collect()
}
