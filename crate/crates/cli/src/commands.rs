use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use saliency_core::eval::{evaluate_dirs, EvalOptions, ResizePolicy};
use saliency_core::gradcheck::{run_suite, GradientCorruption, DEFAULT_TOLERANCE};
use saliency_core::protocols::{
    apply_review, find_duplicates, read_review_csv, read_scores_csv, split_fewshot, split_objectness,
    split_standard, DatasetManifest, FeatureExtractor, PixelEmbedder, PrecomputedVectors, SplitSpec,
    DEFAULT_SIMILARITY_THRESHOLD, DEFAULT_TOP_K,
};
use saliency_core::report::{
    compare, drop_table_csv, drop_table_markdown, read_summary_csv, write_eval_outputs, DropReport, Metric,
    SummaryRow,
};
use saliency_core::synth::synth_dataset;
use saliency_core::train::{micro_train, TrainConfig};
use saliency_core::{LossId, MetricOptions};

use crate::config::RunConfig;
use crate::{
    Cli, Command, CompareArgs, DedupArgs, DropArgs, EvalArgs, Failure, GradcheckArgs, ResizeArg, SplitArgs,
    SplitKind, TrainArgs,
};

pub const DEFAULT_OUT: &str = "saliency-out";

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    workers: usize,
    out: PathBuf,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path, Failure> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Failure::Usage(format!("{}: cannot create output directory: {e}", self.out.display())))?;
        Ok(&self.out)
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf, Failure> {
        let path = self.out_dir()?.join(name);
        std::fs::write(&path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    let workers = cli.workers.or(cfg.workers).unwrap_or(1);
    if workers == 0 {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        out: cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into()),
        workers,
        cfg,
    };
    match cli.command {
        Command::Eval(a) => eval(&ctx, a),
        Command::Compare(a) => compare_cmd(&ctx, a),
        Command::Drop(a) => drop_cmd(&ctx, a),
        Command::Gradcheck(a) => gradcheck(&ctx, a),
        Command::Dedup(a) => dedup(&ctx, a),
        Command::Split(a) => split(&ctx, a),
        Command::DemoTrain(a) => demo_train(&ctx, a),
    }
}

fn require_dir(p: &Path, what: &str) -> Result<(), Failure> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} directory {} does not exist", p.display())))
    }
}

fn require_file(p: &Path, what: &str) -> Result<(), Failure> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} file {} does not exist", p.display())))
    }
}

fn method_name(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "method".into())
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<(), Failure> {
    let sec = &ctx.cfg.eval;
    let preds = if a.pred.is_empty() { sec.pred_dirs.clone() } else { a.pred };
    if preds.is_empty() {
        return Err(Failure::Usage("eval needs at least one --pred directory".into()));
    }
    let gt = a
        .gt
        .or_else(|| sec.gt_dir.clone())
        .ok_or_else(|| Failure::Usage("eval needs --gt".into()))?;
    require_dir(&gt, "ground-truth")?;
    for p in &preds {
        require_dir(p, "prediction")?;
    }
    let method = a.method.or_else(|| sec.method.clone());
    if method.is_some() && preds.len() > 1 {
        return Err(Failure::Usage("--method applies to a single --pred directory".into()));
    }
    let metrics = a.metrics.or_else(|| sec.metrics.clone()).unwrap_or_else(|| Metric::ALL.to_vec());
    let defaults = MetricOptions::default();
    let opts = EvalOptions {
        metrics: MetricOptions {
            beta2: sec.beta2.unwrap_or(defaults.beta2),
            alpha: sec.alpha.unwrap_or(defaults.alpha),
        },
        gt_threshold: a.gt_threshold.or(sec.gt_threshold).unwrap_or(EvalOptions::default().gt_threshold),
        resize: match a.resize {
            Some(ResizeArg::Error) => ResizePolicy::Error,
            Some(ResizeArg::Nearest) => ResizePolicy::Nearest,
            None => sec.resize.unwrap_or_default(),
        },
        skip_unpaired: a.skip_unpaired || sec.skip_unpaired.unwrap_or(false),
        workers: ctx.workers,
    };
    let out = ctx.out_dir()?;
    for p in &preds {
        let name = method.clone().unwrap_or_else(|| method_name(p));
        let report = evaluate_dirs(&name, p, &gt, &opts)?;
        let dir = out.join(&name);
        let files = write_eval_outputs(&report, &metrics, &dir)?;
        let md = files.iter().find(|f| f.extension().is_some_and(|e| e == "md"));
        if let Some(md) = md {
            let text = std::fs::read_to_string(md).map_err(|e| Failure::Data(format!("{}: {e}", md.display())))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn compare_cmd(ctx: &Ctx, a: CompareArgs) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for p in &a.reports {
        require_file(p, "summary")?;
        rows.extend(read_summary_csv(p)?);
    }
    let cmp = compare(&rows)?;
    ctx.write("comparison.csv", &cmp.to_csv()?)?;
    let md = cmp.to_markdown();
    ctx.write("comparison.md", &md)?;
    print!("{md}");
    Ok(())
}

fn pick<'a>(rows: &'a [SummaryRow], name: &str, path: &Path) -> Result<&'a SummaryRow, Failure> {
    rows.iter()
        .find(|r| r.method == name)
        .ok_or_else(|| Failure::Data(format!("{}: no row for method '{name}'", path.display())))
}

fn drop_cmd(ctx: &Ctx, a: DropArgs) -> Result<(), Failure> {
    require_file(&a.normal, "normal summary")?;
    require_file(&a.hard, "hard summary")?;
    let normal = read_summary_csv(&a.normal)?;
    let hard = read_summary_csv(&a.hard)?;
    let metrics = a.metrics.unwrap_or_else(|| Metric::ALL.to_vec());
    let pairs: Vec<(&SummaryRow, &SummaryRow)> = if let Some(m) = &a.method {
        vec![(pick(&normal, m, &a.normal)?, pick(&hard, m, &a.hard)?)]
    } else if normal.len() == 1 && hard.len() == 1 {
        vec![(&normal[0], &hard[0])]
    } else {
        normal
            .iter()
            .map(|n| Ok((n, pick(&hard, &n.method, &a.hard)?)))
            .collect::<Result<_, Failure>>()?
    };
    let reports: Vec<DropReport> = pairs
        .into_iter()
        .map(|(n, h)| DropReport::new(n, h, &metrics))
        .collect::<Result<_, _>>()?;
    ctx.write("drop.csv", &drop_table_csv(&reports)?)?;
    let md = drop_table_markdown(&reports);
    ctx.write("drop.md", &md)?;
    print!("{md}");
    Ok(())
}

fn gradcheck(ctx: &Ctx, a: GradcheckArgs) -> Result<(), Failure> {
    let sec = &ctx.cfg.gradcheck;
    let losses = a.losses.or_else(|| sec.losses.clone()).unwrap_or_else(|| LossId::ALL.to_vec());
    let n = a.seeds.or(sec.seeds).unwrap_or(20);
    let sizes = a.sizes.or_else(|| sec.sizes.clone()).unwrap_or_else(|| vec![8]);
    let tolerance = a.tolerance.or(sec.tolerance).unwrap_or(DEFAULT_TOLERANCE);
    if n == 0 || sizes.is_empty() || losses.is_empty() {
        return Err(Failure::Usage("gradcheck needs at least one loss, seed and size".into()));
    }
    let seeds: Vec<u64> = (ctx.seed..ctx.seed + n).collect();
    let corruption = a.corrupt.map(|scale| GradientCorruption { scale });
    let rows = run_suite(&losses, &seeds, &sizes, &ctx.cfg.loss.config(), tolerance, corruption)?;

    let mut csv = String::from("loss,seed,width,height,max_error,worst_pixel,analytic,numeric,passed\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{:e},{},{:e},{:e},{}",
            r.loss, r.seed, r.width, r.height, r.report.max_error, r.report.worst_pixel, r.report.analytic,
            r.report.numeric, r.passed
        );
    }
    ctx.write("gradcheck.csv", &csv)?;

    println!("| Loss | Cases | Worst error | Status |");
    println!("|---|---|---|---|");
    let mut failed = 0;
    for &loss in &losses {
        let mine: Vec<_> = rows.iter().filter(|r| r.loss == loss).collect();
        let worst = mine.iter().map(|r| r.report.max_error).fold(0.0, f64::max);
        let bad = mine.iter().filter(|r| !r.passed).count();
        failed += bad;
        let status = if bad == 0 { "PASS".to_string() } else { format!("FAIL ({bad})") };
        println!("| {loss} | {} | {worst:.2e} | {status} |", mine.len());
    }
    if failed > 0 {
        return Err(Failure::Data(format!(
            "gradient check failed for {failed} of {} cases (tolerance {tolerance:e})",
            rows.len()
        )));
    }
    Ok(())
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, Failure> {
    require_file(path, "manifest")?;
    Ok(DatasetManifest::read_jsonl(path)?)
}

fn dedup(ctx: &Ctx, a: DedupArgs) -> Result<(), Failure> {
    let manifest = load_manifest(&a.manifest)?;
    let k = a.k.or(ctx.cfg.dedup.k).unwrap_or(DEFAULT_TOP_K);
    let tau = a.tau.or(ctx.cfg.dedup.tau).unwrap_or(DEFAULT_SIMILARITY_THRESHOLD);
    let extractor: Box<dyn FeatureExtractor> = match &a.vectors {
        Some(v) => {
            require_file(v, "vectors")?;
            Box::new(PrecomputedVectors::read_csv(v)?)
        }
        None => Box::new(PixelEmbedder {
            base_dir: Some(
                a.base_dir
                    .clone()
                    .or_else(|| a.manifest.parent().map(Path::to_path_buf))
                    .unwrap_or_default(),
            ),
        }),
    };
    let mut pairs = find_duplicates(&manifest, extractor.as_ref(), k, tau)?;
    if let Some(review) = &a.review {
        require_file(review, "review")?;
        let votes = read_review_csv(review)?;
        let outcome = apply_review(&manifest, &pairs, &votes)?;
        let path = ctx.out_dir()?.join("manifest.dedup.jsonl");
        outcome.manifest.write_jsonl(&path)?;
        ctx.write("removed.json", &to_json(&outcome.removed))?;
        println!("removed {} of {} images", outcome.removed.len(), manifest.len());
        pairs = outcome.pairs;
    }
    ctx.write("duplicates.json", &to_json(&pairs))?;
    println!("{} candidate pair(s) at k={k}, tau={tau}", pairs.len());
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn write_split(ctx: &Ctx, spec: &SplitSpec) -> Result<(), Failure> {
    let name = format!("split_{}.json", spec.name);
    ctx.write(&name, &format!("{}\n", spec.to_json()))?;
    let sizes: Vec<String> = spec.partitions.iter().map(|(k, v)| format!("{k}={}", v.len())).collect();
    println!("{name}: {}", sizes.join(" "));
    Ok(())
}

fn split(ctx: &Ctx, a: SplitArgs) -> Result<(), Failure> {
    let mut manifest = load_manifest(&a.manifest)?;
    match a.kind {
        SplitKind::Standard => write_split(ctx, &split_standard(&manifest, ctx.seed)?),
        SplitKind::Objectness => {
            if let Some(s) = &a.scores {
                require_file(s, "scores")?;
                let scores = read_scores_csv(s)?;
                manifest.attach_scores(&scores);
            }
            let spec = split_objectness(&manifest)?;
            spec.validate(Some(&manifest))?;
            write_split(ctx, &spec)
        }
        SplitKind::Fewshot => {
            let train = match &a.train_from {
                Some(p) => {
                    require_file(p, "split")?;
                    let text = std::fs::read_to_string(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
                    let spec = SplitSpec::from_json(&text)?;
                    spec.validate(Some(&manifest))?;
                    spec.partition("train")
                        .ok_or_else(|| Failure::Data(format!("{}: no 'train' partition", p.display())))?
                        .to_vec()
                }
                None => split_standard(&manifest, ctx.seed)?.partition("train").unwrap_or_default().to_vec(),
            };
            for spec in split_fewshot(&train, ctx.seed)? {
                write_split(ctx, &spec)?;
            }
            Ok(())
        }
    }
}

fn demo_train(ctx: &Ctx, a: TrainArgs) -> Result<(), Failure> {
    let sec = &ctx.cfg.train;
    let losses = a.losses.or_else(|| sec.losses.clone()).unwrap_or_else(|| vec![LossId::Ea]);
    let n_train = a.train_size.or(sec.train_size).unwrap_or(12);
    let n_held = a.heldout_size.or(sec.heldout_size).unwrap_or(8);
    if n_train == 0 || n_held == 0 {
        return Err(Failure::Usage("train and held-out sizes must be at least 1".into()));
    }
    let d = TrainConfig::default();
    let base = TrainConfig {
        loss: d.loss,
        loss_config: ctx.cfg.loss.config(),
        learning_rate: a.lr.or(sec.learning_rate).unwrap_or(d.learning_rate),
        steps: a.steps.or(sec.steps).unwrap_or(d.steps),
        line_search: !a.no_line_search && sec.line_search.unwrap_or(d.line_search),
        eval_every: a.eval_every.or(sec.eval_every).unwrap_or(d.eval_every),
    };
    base.loss_config.validate()?;
    let scenes = synth_dataset(n_train + n_held, ctx.seed)?;
    let (train, held) = scenes.split_at(n_train);

    let mut summary = String::from("loss,max_f,ave_f,fbw,mae,final_loss,non_increasing\n");
    println!("| Loss | max-F | ave-F | Fbw | MAE | non-increasing |");
    println!("|---|---|---|---|---|---|");
    for loss in losses {
        let run = micro_train(train, held, &TrainConfig { loss, ..base })?;
        ctx.write(&format!("train_{loss}.json"), &to_json(&run))?;
        let h = run.final_heldout().copied().ok_or_else(|| Failure::Data("no held-out evaluation".into()))?;
        let last = run.loss_trace.last().copied().unwrap_or(f64::NAN);
        let frac = run.non_increasing_fraction(0.0);
        let _ = writeln!(summary, "{loss},{},{},{},{},{last},{frac}", h.max_f, h.ave_f, h.fbw, h.mae);
        println!("| {loss} | {:.4} | {:.4} | {:.4} | {:.4} | {:.0}% |", h.max_f, h.ave_f, h.fbw, h.mae, frac * 100.0);
    }
    ctx.write("train_summary.csv", &summary)?;
    Ok(())
}
