#![allow(dead_code)]

pub mod oracles;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saliency_core::{BinaryMask, SaliencyMap};

pub struct Case {
    pub name: String,
    pub pred: SaliencyMap,
    pub gt: BinaryMask,
}

fn blob_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<bool> {
    let (r0, c0) = (rng.random_range(0..h), rng.random_range(0..w));
    let (r1, c1) = (rng.random_range(r0..h), rng.random_range(c0..w));
    (0..w * h)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            (r0..=r1).contains(&r) && (c0..=c1).contains(&c)
        })
        .collect()
}

/// Seeded random pair. Alternates between noisy-blob and salt-and-pepper
/// targets and between continuous and byte-quantized predictions.
pub fn random_case(seed: u64, w: usize, h: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt: Vec<bool> = if seed % 2 == 0 {
        blob_mask(&mut rng, w, h)
    } else {
        (0..w * h).map(|_| rng.random_bool(0.3)).collect()
    };
    let pred: Vec<f64> = gt
        .iter()
        .map(|&g| {
            let base: f64 = if g { 0.7 } else { 0.3 };
            let v = (base + rng.random_range(-0.5..0.5)).clamp(0.0, 1.0);
            if seed % 3 == 0 {
                (v * 255.0).round() / 255.0
            } else {
                v
            }
        })
        .collect();
    Case {
        name: format!("random-{seed}"),
        pred: SaliencyMap::new(w, h, pred).unwrap(),
        gt: BinaryMask::new(w, h, gt).unwrap(),
    }
}

/// Ten hand-built cases on a 16x16 grid: empty and full targets, perfect,
/// inverted and constant predictions.
pub fn edge_cases() -> Vec<Case> {
    let (w, h) = (16, 16);
    let n = w * h;
    let square: Vec<bool> = (0..n).map(|i| (4..10).contains(&(i / w)) && (5..12).contains(&(i % w))).collect();
    let square_f: Vec<f64> = square.iter().map(|&b| f64::from(u8::from(b))).collect();
    let mk = |name: &str, pred: Vec<f64>, gt: Vec<bool>| Case {
        name: name.into(),
        pred: SaliencyMap::new(w, h, pred).unwrap(),
        gt: BinaryMask::new(w, h, gt).unwrap(),
    };
    let mut single = vec![false; n];
    single[7 * w + 8] = true;
    vec![
        mk("empty-gt-zero-pred", vec![0.0; n], vec![false; n]),
        mk("empty-gt-noisy-pred", (0..n).map(|i| (i % 7) as f64 / 10.0).collect(), vec![false; n]),
        mk("full-gt-perfect", vec![1.0; n], vec![true; n]),
        mk("full-gt-half", vec![0.5; n], vec![true; n]),
        mk("perfect", square_f.clone(), square.clone()),
        mk("inverted", square_f.iter().map(|v| 1.0 - v).collect(), square.clone()),
        mk("all-zero-pred", vec![0.0; n], square.clone()),
        mk("all-one-pred", vec![1.0; n], square.clone()),
        mk("single-pixel", (0..n).map(|i| if i == 7 * w + 8 { 0.9 } else { 0.05 }).collect(), single),
        mk("constant-half", vec![0.5; n], square),
    ]
}

/// Writes `n` prediction/GT PNG pairs into `dir/pred` and `dir/gt`.
pub fn write_fixture(dir: &Path, n: usize, seed: u64, w: usize, h: usize) {
    let (pd, gd) = (dir.join("pred"), dir.join("gt"));
    std::fs::create_dir_all(&pd).unwrap();
    std::fs::create_dir_all(&gd).unwrap();
    for i in 0..n {
        let c = random_case(seed * 1000 + i as u64, w, h);
        c.pred.save_png(pd.join(format!("img{i:03}.png"))).unwrap();
        c.gt.save_png(gd.join(format!("img{i:03}.png"))).unwrap();
    }
}
