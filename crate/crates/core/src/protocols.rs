//! Dataset manifests, duplicate detection, objectness scoring and splits.
//!
//! File formats:
//!
//! * manifest: JSON lines, one [`ManifestEntry`] per line;
//! * scores: CSV with a header row, either `id,score` or `id` followed by 1001
//!   class-probability columns, one of which is named `background`;
//! * review: CSV `id_a,id_b,votes` where `votes` counts the subjects (0-3)
//!   who judged the pair to be the same image;
//! * vectors: CSV `id,v0,v1,...` of externally computed image descriptors;
//! * split: JSON `{"name", "seed", "partitions": {name: [ids]}}`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::{imageops, DynamicImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.97;
/// Subjects that must vote "same" before one image of a pair is removed.
pub const MIN_SAME_VOTES: u8 = 2;
pub const MAX_VOTES: u8 = 3;
pub const NUM_CLASS_PROBABILITIES: usize = 1001;
/// A class counts as visible when its probability exceeds this value.
pub const VISIBILITY_THRESHOLD: f64 = 0.01;
pub const STANDARD_TRAIN_SIZE: usize = 10_000;
pub const OBJECTNESS_SUBSET_SIZE: usize = 10_000;
pub const FEWSHOT_SCALES: [usize; 10] = [10, 30, 50, 100, 300, 500, 1_000, 3_000, 5_000, 10_000];
/// Side of the grayscale thumbnail used by [`PixelEmbedder`].
pub const EMBED_SIDE: u32 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub gt_path: PathBuf,
    pub source_dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objectness: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let manifest = Self { entries };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.id.is_empty() {
                return Err(Error::Protocol("manifest entry with empty id".into()));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Protocol(format!("duplicate manifest id '{}'", e.id)));
            }
            if e.image_path.as_os_str().is_empty() || e.gt_path.as_os_str().is_empty() {
                return Err(Error::Protocol(format!("entry '{}' has an empty path", e.id)));
            }
            if let Some(s) = e.objectness {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(Error::Protocol(format!(
                        "entry '{}' has invalid objectness {s}",
                        e.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line)
                .map_err(|e| Error::parse(format!("{}:{}", path.display(), n + 1), e))?;
            entries.push(entry);
        }
        Self::new(entries)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// Sets `objectness` from a score table; entries absent from it are left unchanged.
    pub fn attach_scores(&mut self, scores: &BTreeMap<String, f64>) {
        for e in &mut self.entries {
            if let Some(&s) = scores.get(&e.id) {
                e.objectness = Some(s);
            }
        }
    }
}

/// Produces a fixed-length descriptor for a manifest entry.
pub trait FeatureExtractor: Sync {
    fn embed(&self, entry: &ManifestEntry) -> Result<Vec<f64>>;
}

/// Default descriptor: 32x32 grayscale thumbnail, mean-subtracted and L2-normalized.
#[derive(Debug, Clone, Default)]
pub struct PixelEmbedder {
    /// Directory that relative image paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl FeatureExtractor for PixelEmbedder {
    fn embed(&self, entry: &ManifestEntry) -> Result<Vec<f64>> {
        let path = match &self.base_dir {
            Some(dir) if entry.image_path.is_relative() => dir.join(&entry.image_path),
            _ => entry.image_path.clone(),
        };
        let img = image::ImageReader::open(&path)
            .map_err(|e| Error::io(&path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(&path, e))?
            .decode()
            .map_err(|e| Error::Decode {
                path: path.clone(),
                message: e.to_string(),
            })?;
        Ok(embed_image(&img))
    }
}

pub fn embed_image(image: &DynamicImage) -> Vec<f64> {
    let gray = image.to_luma32f();
    let small = imageops::resize(&gray, EMBED_SIDE, EMBED_SIDE, imageops::FilterType::Triangle);
    let mut v: Vec<f64> = small.as_raw().iter().map(|&p| f64::from(p)).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Descriptors computed elsewhere, loaded from a vectors file.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedVectors {
    pub vectors: HashMap<String, Vec<f64>>,
}

impl PrecomputedVectors {
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(path)
            .map_err(|e| Error::parse(path.display().to_string(), e))?;
        let mut vectors = HashMap::new();
        for (n, rec) in reader.records().enumerate() {
            let ctx = || format!("{}:{}", path.display(), n + 1);
            let rec = rec.map_err(|e| Error::parse(ctx(), e))?;
            let id = rec.get(0).unwrap_or_default().to_string();
            let v = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::parse(ctx(), e)))
                .collect::<Result<Vec<_>>>()?;
            vectors.insert(id, v);
        }
        Ok(Self { vectors })
    }
}

impl FeatureExtractor for PrecomputedVectors {
    fn embed(&self, entry: &ManifestEntry) -> Result<Vec<f64>> {
        self.vectors
            .get(&entry.id)
            .cloned()
            .ok_or_else(|| Error::Protocol(format!("no vector for id '{}'", entry.id)))
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Auto,
    ConfirmedSame,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicatePair {
    /// Lexicographically smaller id.
    pub id_a: String,
    pub id_b: String,
    pub similarity: f64,
    pub verdict: Verdict,
}

/// Candidate duplicates: for each image its `k` most similar images by
/// cosine similarity, keeping pairs at or above `tau`. Each unordered pair
/// appears once, sorted by ids.
pub fn find_duplicates(
    manifest: &DatasetManifest,
    extractor: &dyn FeatureExtractor,
    k: usize,
    tau: f64,
) -> Result<Vec<DuplicatePair>> {
    if manifest.len() < 2 {
        return Err(Error::Protocol(format!(
            "duplicate search needs at least 2 images, manifest has {}",
            manifest.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside (0, 1]")));
    }
    let mut entries: Vec<&ManifestEntry> = manifest.entries.iter().collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));

    let features = crate::par::map(&entries, |e| extractor.embed(e))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let unit: Vec<Vec<f64>> = features.iter().map(|v| normalized(v)).collect();

    let indices: Vec<usize> = (0..entries.len()).collect();
    let neighbours = crate::par::map(&indices, |&i| top_k(&unit, i, k));

    let mut pairs: BTreeMap<(String, String), f64> = BTreeMap::new();
    for (i, list) in neighbours.iter().enumerate() {
        for &(j, sim) in list {
            if sim < tau {
                continue;
            }
            // entries are sorted, so the smaller index holds the smaller id
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            pairs.insert((entries[a].id.clone(), entries[b].id.clone()), sim);
        }
    }
    Ok(pairs
        .into_iter()
        .map(|((id_a, id_b), similarity)| DuplicatePair {
            id_a,
            id_b,
            similarity,
            verdict: Verdict::Auto,
        })
        .collect())
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

/// Nearest neighbours of `i`, ordered by similarity then index.
fn top_k(unit: &[Vec<f64>], i: usize, k: usize) -> Vec<(usize, f64)> {
    let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for (j, v) in unit.iter().enumerate() {
        if j == i {
            continue;
        }
        // identical descriptors score exactly 1 despite rounding in the dot product
        let sim = if unit[i] == *v && v.iter().any(|&x| x != 0.0) {
            1.0
        } else {
            let dot: f64 = unit[i].iter().zip(v).map(|(a, b)| a * b).sum();
            dot.clamp(0.0, 1.0)
        };
        let pos = best.partition_point(|&(bj, bs)| bs > sim || (bs == sim && bj < j));
        if pos < k {
            best.insert(pos, (j, sim));
            best.truncate(k);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewVote {
    pub id_a: String,
    pub id_b: String,
    pub votes: u8,
}

pub fn read_review_csv(path: impl AsRef<Path>) -> Result<Vec<ReviewVote>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::parse(path.display().to_string(), e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewOutcome {
    pub manifest: DatasetManifest,
    /// Input pairs with verdicts filled in from the review.
    pub pairs: Vec<DuplicatePair>,
    /// Removed ids in removal order.
    pub removed: Vec<String>,
}

/// Applies human review: for every pair with at least [`MIN_SAME_VOTES`]
/// "same" votes, taken in sorted pair order, the larger id is dropped.
pub fn apply_review(
    manifest: &DatasetManifest,
    pairs: &[DuplicatePair],
    votes: &[ReviewVote],
) -> Result<ReviewOutcome> {
    let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        index.insert(ordered(&p.id_a, &p.id_b), i);
    }
    let mut pairs = pairs.to_vec();
    let mut confirmed = BTreeSet::new();
    for v in votes {
        if v.votes > MAX_VOTES {
            return Err(Error::Protocol(format!(
                "pair ({}, {}) has {} votes, at most {MAX_VOTES} allowed",
                v.id_a, v.id_b, v.votes
            )));
        }
        let key = ordered(&v.id_a, &v.id_b);
        let Some(&i) = index.get(&key) else {
            return Err(Error::Protocol(format!(
                "review references unknown pair ({}, {})",
                v.id_a, v.id_b
            )));
        };
        if v.votes >= MIN_SAME_VOTES {
            pairs[i].verdict = Verdict::ConfirmedSame;
            confirmed.insert(key);
        } else {
            pairs[i].verdict = Verdict::Rejected;
        }
    }
    let mut removed = Vec::new();
    let mut gone = HashSet::new();
    for (_, larger) in confirmed {
        if gone.insert(larger.clone()) {
            removed.push(larger);
        }
    }
    let entries = manifest
        .entries
        .iter()
        .filter(|e| !gone.contains(&e.id))
        .cloned()
        .collect();
    Ok(ReviewOutcome {
        manifest: DatasetManifest { entries },
        pairs,
        removed,
    })
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Sum of visible-class probabilities (those above 0.01), background excluded.
pub fn objectness_score(probs: &[f64], background_index: usize) -> Result<f64> {
    if probs.len() != NUM_CLASS_PROBABILITIES {
        return Err(Error::InvalidArgument(format!(
            "expected {NUM_CLASS_PROBABILITIES} class probabilities, got {}",
            probs.len()
        )));
    }
    if background_index >= probs.len() {
        return Err(Error::InvalidArgument(format!(
            "background index {background_index} out of range"
        )));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    Ok(probs
        .iter()
        .enumerate()
        .filter(|&(i, &p)| i != background_index && p > VISIBILITY_THRESHOLD)
        .map(|(_, p)| p)
        .sum())
}

/// Reads an objectness scores file, reducing probability rows with
/// [`objectness_score`].
pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let ctx = |line: usize| format!("{}:{line}", path.display());
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    let header = reader.headers().map_err(|e| Error::parse(ctx(1), e))?.clone();
    let columns = header.len();
    let background = if columns == 2 {
        None
    } else if columns == NUM_CLASS_PROBABILITIES + 1 {
        let pos = header.iter().skip(1).position(|h| h.eq_ignore_ascii_case("background"));
        Some(pos.ok_or_else(|| {
            Error::parse(ctx(1), "header must name the background column 'background'")
        })?)
    } else {
        return Err(Error::parse(
            ctx(1),
            format!(
                "expected 2 or {} columns, found {columns}",
                NUM_CLASS_PROBABILITIES + 1
            ),
        ));
    };
    let mut scores = BTreeMap::new();
    for (n, rec) in reader.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| Error::parse(ctx(line), e))?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|e| Error::parse(ctx(line), e)))
            .collect::<Result<Vec<_>>>()?;
        let score = match background {
            None => values[0],
            Some(bg) => objectness_score(&values, bg)?,
        };
        if !(score.is_finite() && score >= 0.0) {
            return Err(Error::parse(ctx(line), format!("invalid score {score}")));
        }
        scores.insert(id, score);
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub seed: u64,
    pub partitions: BTreeMap<String, Vec<String>>,
}

impl SplitSpec {
    pub fn partition(&self, name: &str) -> Option<&[String]> {
        self.partitions.get(name).map(Vec::as_slice)
    }

    /// Partitions must be pairwise disjoint and, when a manifest is given,
    /// drawn from its ids.
    pub fn validate(&self, manifest: Option<&DatasetManifest>) -> Result<()> {
        let known: Option<HashSet<&str>> =
            manifest.map(|m| m.entries.iter().map(|e| e.id.as_str()).collect());
        let mut seen = HashSet::new();
        for (part, ids) in &self.partitions {
            for id in ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Protocol(format!(
                        "id '{id}' appears in more than one partition (found again in '{part}')"
                    )));
                }
                if let Some(known) = &known {
                    if !known.contains(id.as_str()) {
                        return Err(Error::Protocol(format!("id '{id}' is not in the manifest")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split specs serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("split spec", e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{}", self.to_json()).map_err(|e| Error::io(path, e))
    }
}

fn seeded_shuffle(mut ids: Vec<String>, seed: u64) -> Vec<String> {
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids
}

fn sorted(mut ids: Vec<String>) -> Vec<String> {
    ids.sort();
    ids
}

/// Random 10,000-image train partition; the rest is test.
pub fn split_standard(manifest: &DatasetManifest, seed: u64) -> Result<SplitSpec> {
    split_standard_sized(manifest, STANDARD_TRAIN_SIZE, seed)
}

pub fn split_standard_sized(
    manifest: &DatasetManifest,
    train_size: usize,
    seed: u64,
) -> Result<SplitSpec> {
    if manifest.len() < train_size {
        return Err(Error::Protocol(format!(
            "standard split needs at least {train_size} images, manifest has {}",
            manifest.len()
        )));
    }
    let mut ids = seeded_shuffle(manifest.ids(), seed);
    let test = ids.split_off(train_size);
    Ok(SplitSpec {
        name: "standard".into(),
        seed,
        partitions: BTreeMap::from([
            ("train".into(), sorted(ids)),
            ("test".into(), sorted(test)),
        ]),
    })
}

/// Objectness-shift split: highest 10,000 scores are `easy`, lowest 10,000
/// are `hard`, the rest `normal`. Ties are ordered by id.
pub fn split_objectness(manifest: &DatasetManifest) -> Result<SplitSpec> {
    split_objectness_sized(manifest, OBJECTNESS_SUBSET_SIZE, OBJECTNESS_SUBSET_SIZE)
}

pub fn split_objectness_sized(
    manifest: &DatasetManifest,
    easy_size: usize,
    hard_size: usize,
) -> Result<SplitSpec> {
    let mut scored = Vec::with_capacity(manifest.len());
    for e in &manifest.entries {
        let s = e
            .objectness
            .ok_or_else(|| Error::Protocol(format!("missing objectness score for id '{}'", e.id)))?;
        scored.push((s, e.id.clone()));
    }
    if scored.len() < easy_size + hard_size {
        return Err(Error::Protocol(format!(
            "objectness split needs at least {} images, manifest has {}",
            easy_size + hard_size,
            scored.len()
        )));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let mut ids: Vec<String> = scored.into_iter().map(|(_, id)| id).collect();
    let hard = ids.split_off(ids.len() - hard_size);
    let normal = ids.split_off(easy_size);
    Ok(SplitSpec {
        name: "objectness".into(),
        seed: 0,
        partitions: BTreeMap::from([
            ("easy".into(), sorted(ids)),
            ("normal".into(), sorted(normal)),
            ("hard".into(), sorted(hard)),
        ]),
    })
}

/// Nested few-shot training subsets: prefixes of one seeded shuffle.
pub fn split_fewshot(train_ids: &[String], seed: u64) -> Result<Vec<SplitSpec>> {
    split_fewshot_scales(train_ids, &FEWSHOT_SCALES, seed)
}

pub fn split_fewshot_scales(
    train_ids: &[String],
    scales: &[usize],
    seed: u64,
) -> Result<Vec<SplitSpec>> {
    let largest = scales.iter().copied().max().unwrap_or(0);
    if train_ids.len() < largest {
        return Err(Error::Protocol(format!(
            "few-shot split needs at least {largest} training ids, got {}",
            train_ids.len()
        )));
    }
    let unique: HashSet<&String> = train_ids.iter().collect();
    if unique.len() != train_ids.len() {
        return Err(Error::Protocol("training ids contain duplicates".into()));
    }
    let order = seeded_shuffle(train_ids.to_vec(), seed);
    Ok(scales
        .iter()
        .map(|&n| SplitSpec {
            name: format!("fewshot-{n}"),
            seed,
            partitions: BTreeMap::from([("train".into(), sorted(order[..n].to_vec()))]),
        })
        .collect())
}
