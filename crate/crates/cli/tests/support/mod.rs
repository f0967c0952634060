#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saliency_core::SaliencyMap;

pub fn saliency(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saliency"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// One JSONL line per id, with optional objectness scores.
pub fn write_manifest(path: &Path, ids: &[String], scores: Option<&dyn Fn(usize) -> Option<f64>>) {
    let mut text = String::new();
    for (i, id) in ids.iter().enumerate() {
        let mut v = serde_json::json!({
            "id": id,
            "image_path": format!("{id}.png"),
            "gt_path": format!("{id}_gt.png"),
            "source_dataset": "toy",
        });
        if let Some(s) = scores.and_then(|f| f(i)) {
            v["objectness"] = serde_json::json!(s);
        }
        text.push_str(&v.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("img{i:05}")).collect()
}

/// Six random images plus an exact copy of `img2` named `img6`.
pub fn write_duplicate_toy(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..6 {
        let values: Vec<f64> = (0..40 * 30).map(|_| rng.random::<f64>()).collect();
        SaliencyMap::new(40, 30, values)
            .unwrap()
            .save_png(dir.join(format!("img{i}.png")))
            .unwrap();
    }
    std::fs::copy(dir.join("img2.png"), dir.join("img6.png")).unwrap();
    let names: Vec<String> = (0..7).map(|i| format!("img{i}")).collect();
    write_manifest(&dir.join("manifest.jsonl"), &names, None);
}
