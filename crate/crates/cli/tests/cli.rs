#[path = "../../core/tests/common/mod.rs"]
mod common;
mod support;

use saliency_core::protocols::{DuplicatePair, SplitSpec};
use saliency_core::report::{read_summary_csv, Metric};
use support::*;

#[test]
fn exit_codes() {
    assert_eq!(code(&saliency(&["--help"])), 0);
    let out = saliency(&["frobnicate"]);
    assert_eq!(code(&out), 1);
    let line = stderr(&out);
    assert_eq!(line.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["code"], 1);

    assert_eq!(code(&saliency(&["eval", "--pred", "/nonexistent/p", "--gt", "/nonexistent/g"])), 1);
    assert_eq!(code(&saliency(&["gradcheck", "--workers", "0"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "colour = 3\n").unwrap();
    assert_eq!(code(&saliency(&["--config", p(&cfg), "gradcheck"])), 1);
}

#[test]
fn gradcheck_passes_and_catches_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let out = saliency(&["gradcheck", "--seeds", "2", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8 * 2);

    let out = saliency(&["gradcheck", "--seeds", "2", "--losses", "fbeta", "--corrupt", "1.01", "--out", p(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn gradcheck_reads_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n[gradcheck]\nlosses = [\"dice\"]\nseeds = 3\nsizes = [4, 6]\n").unwrap();
    let out = saliency(&["--config", p(&cfg), "gradcheck", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("dice,")));
    assert!(csv.contains("dice,5,4,4,") && csv.contains("dice,7,6,6,"));
}

#[test]
fn objectness_split_names_missing_id() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.jsonl");
    let scores = |i: usize| if i == 4 || i == 9 { None } else { Some(i as f64) };
    write_manifest(&m, &ids(30), Some(&scores));
    let out = saliency(&["split", "objectness", "--manifest", p(&m), "--out", p(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("img00004"), "{}", stderr(&out));
    assert!(!stderr(&out).contains("img00009"));
}

#[test]
fn standard_split_at_benchmark_scale() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.jsonl");
    write_manifest(&m, &ids(37_930), None);
    let out = saliency(&["split", "standard", "--manifest", p(&m), "--seed", "3", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let spec_path = dir.path().join("split_standard.json");
    let spec = SplitSpec::from_json(&std::fs::read_to_string(&spec_path).unwrap()).unwrap();
    assert_eq!(spec.partition("train").unwrap().len(), 10_000);
    assert_eq!(spec.partition("test").unwrap().len(), 27_930);

    let out = saliency(&["split", "fewshot", "--manifest", p(&m), "--train-from", p(&spec_path), "--out", p(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let small = SplitSpec::from_json(&std::fs::read_to_string(dir.path().join("split_fewshot-10.json")).unwrap()).unwrap();
    let train = spec.partition("train").unwrap();
    assert!(small.partition("train").unwrap().iter().all(|id| train.contains(id)));
}

#[test]
fn dedup_finds_the_copied_image() {
    let dir = tempfile::tempdir().unwrap();
    write_duplicate_toy(dir.path());
    let out_dir = dir.path().join("out");
    let m = dir.path().join("manifest.jsonl");
    let out = saliency(&["dedup", "--manifest", p(&m), "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let pairs: Vec<DuplicatePair> =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("duplicates.json")).unwrap()).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!((pairs[0].id_a.as_str(), pairs[0].id_b.as_str()), ("img2", "img6"));

    let review = dir.path().join("votes.csv");
    std::fs::write(&review, "id_a,id_b,votes\nimg2,img6,3\n").unwrap();
    let out = saliency(&["dedup", "--manifest", p(&m), "--review", p(&review), "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cleaned = std::fs::read_to_string(out_dir.join("manifest.dedup.jsonl")).unwrap();
    assert_eq!(cleaned.lines().count(), 6);
    assert!(!cleaned.contains("\"img6\""));
}

#[test]
fn eval_is_worker_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    common::write_fixture(dir.path(), 20, 4, 24, 20);
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    let mut outputs = Vec::new();
    for w in ["1", "8"] {
        let out_dir = dir.path().join(format!("out{w}"));
        let out = saliency(&["eval", "--pred", p(&pred), "--gt", p(&gt), "--method", "m", "--workers", w, "--out", p(&out_dir)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let files: Vec<Vec<u8>> = ["summary.csv", "per_image.csv", "pr_curve.csv"]
            .iter()
            .map(|f| std::fs::read(out_dir.join("m").join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn eval_reports_unpaired_files() {
    let dir = tempfile::tempdir().unwrap();
    common::write_fixture(dir.path(), 4, 1, 8, 8);
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::copy(pred.join("img000.png"), pred.join("extra.png")).unwrap();
    let out_dir = dir.path().join("out");
    let out = saliency(&["eval", "--pred", p(&pred), "--gt", p(&gt), "--out", p(&out_dir)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("extra.png"));
    let out = saliency(&["eval", "--pred", p(&pred), "--gt", p(&gt), "--skip-unpaired", "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("Skipped 1 unpaired file(s)."));
}

fn eval_summary(root: &std::path::Path, seed: u64, method: &str) -> std::path::PathBuf {
    let data = root.join(format!("data{seed}"));
    common::write_fixture(&data, 6, seed, 16, 16);
    let out_dir = root.join(format!("out{seed}"));
    let out = saliency(&[
        "eval", "--pred", p(&data.join("pred")), "--gt", p(&data.join("gt")), "--method", method, "--out", p(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    out_dir.join(method).join("summary.csv")
}

#[test]
fn drop_negates_when_inputs_swap() {
    let dir = tempfile::tempdir().unwrap();
    let normal = eval_summary(dir.path(), 1, "m");
    let hard = eval_summary(dir.path(), 2, "m");
    let mut tables = Vec::new();
    for (a, b, name) in [(&normal, &hard, "ab"), (&hard, &normal, "ba")] {
        let out_dir = dir.path().join(name);
        let out = saliency(&["drop", p(a), p(b), "--out", p(&out_dir)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        tables.push(read_summary_like(&out_dir.join("drop.csv")));
    }
    assert_eq!(tables[0].len(), Metric::ALL.len());
    for (x, y) in tables[0].iter().zip(&tables[1]) {
        assert_eq!(*x, -*y);
    }
}

fn read_summary_like(path: &std::path::Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let row = text.lines().nth(1).unwrap();
    row.split(',').skip(1).map(|s| s.parse().unwrap()).collect()
}

#[test]
fn compare_ranks_two_methods() {
    let dir = tempfile::tempdir().unwrap();
    let a = eval_summary(dir.path(), 1, "alpha");
    let b = eval_summary(dir.path(), 2, "beta");
    let out_dir = dir.path().join("cmp");
    let out = saliency(&["compare", p(&a), p(&b), "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    assert!(csv.contains("mean_rank"));
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(read_summary_csv(&a).unwrap()[0].method, "alpha");

    let out = saliency(&["compare", p(&a), "--out", p(&out_dir)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn demo_train_writes_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = saliency(&[
        "demo-train", "--losses", "bce", "--steps", "5", "--train-size", "2", "--heldout-size", "1", "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("train_bce.json")).unwrap()).unwrap();
    assert_eq!(run["loss_trace"].as_array().unwrap().len(), 6);
    assert!(dir.path().join("train_summary.csv").exists());
}
