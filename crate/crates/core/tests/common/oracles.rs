//! Straight-from-definition reference implementations. Deliberately naive:
//! 2-D indexing, direct counting, brute-force searches.

#![allow(dead_code)]

type Grid2 = Vec<Vec<f64>>;

pub fn to_grid(values: &[f64], w: usize, h: usize) -> Grid2 {
    (0..h).map(|r| values[r * w..(r + 1) * w].to_vec()).collect()
}

pub fn mae(pred: &[f64], gt: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..pred.len() {
        s += (pred[i] - gt[i]).abs();
    }
    s / pred.len() as f64
}

/// (precision, recall) at byte threshold `t`, counted pixel by pixel.
pub fn pr_at(pred: &[f64], gt: &[f64], t: u32, _beta2: f64) -> (f64, f64) {
    let (mut tp, mut fp, mut fnn) = (0u32, 0u32, 0u32);
    for i in 0..pred.len() {
        let byte = (pred[i] * 255.0).round().clamp(0.0, 255.0) as u32;
        let positive = byte > t;
        let truth = gt[i] > 0.5;
        match (positive, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    if tp + fnn == 0 {
        return if tp + fp == 0 { (1.0, 1.0) } else { (0.0, 1.0) };
    }
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    (p, tp as f64 / (tp + fnn) as f64)
}

pub fn f_of(p: f64, r: f64, beta2: f64) -> f64 {
    if beta2 * p + r == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * p * r / (beta2 * p + r)
    }
}

pub fn f_curve(pred: &[f64], gt: &[f64], beta2: f64) -> Vec<f64> {
    (0..256)
        .map(|t| {
            let (p, r) = pr_at(pred, gt, t, beta2);
            f_of(p, r, beta2)
        })
        .collect()
}

pub fn max_ave(curve: &[f64]) -> (f64, f64) {
    let mut mx = curve[0];
    let mut s = 0.0;
    for &v in curve {
        if v > mx {
            mx = v;
        }
        s += v;
    }
    (mx, s / curve.len() as f64)
}

/// Weighted F-measure: brute-force nearest foreground (all ties averaged),
/// direct 7x7 Gaussian correlation with zero padding.
pub fn weighted_f(pred: &[f64], gt: &[f64], w: usize, h: usize) -> f64 {
    let g = to_grid(gt, w, h);
    let p = to_grid(pred, w, h);
    let fg: Vec<(usize, usize)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&(r, c)| g[r][c] > 0.5)
        .collect();
    if fg.is_empty() {
        return if pred.iter().all(|&v| v == 0.0) { 1.0 } else { 0.0 };
    }
    let e: Grid2 = (0..h).map(|r| (0..w).map(|c| (p[r][c] - g[r][c]).abs()).collect()).collect();
    let mut et = e.clone();
    let mut dist = vec![vec![0.0; w]; h];
    for r in 0..h {
        for c in 0..w {
            if g[r][c] > 0.5 {
                continue;
            }
            let d2 = |&(fr, fc): &(usize, usize)| {
                let dr = fr as f64 - r as f64;
                let dc = fc as f64 - c as f64;
                dr * dr + dc * dc
            };
            let best = fg.iter().map(d2).fold(f64::INFINITY, f64::min);
            let ties: Vec<&(usize, usize)> = fg.iter().filter(|q| d2(q) == best).collect();
            et[r][c] = ties.iter().map(|&&(fr, fc)| e[fr][fc]).sum::<f64>() / ties.len() as f64;
            dist[r][c] = best.sqrt();
        }
    }
    let sigma: f64 = 5.0;
    let mut kernel = [[0.0; 7]; 7];
    let mut ksum = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, k) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 3.0, j as f64 - 3.0);
            *k = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            ksum += *k;
        }
    }
    let mut ea = vec![vec![0.0; w]; h];
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let mut acc = 0.0;
            for i in 0..7i64 {
                for j in 0..7i64 {
                    let (rr, cc) = (r + i - 3, c + j - 3);
                    if rr >= 0 && cc >= 0 && rr < h as i64 && cc < w as i64 {
                        acc += kernel[i as usize][j as usize] / ksum * et[rr as usize][cc as usize];
                    }
                }
            }
            ea[r as usize][c as usize] = acc;
        }
    }
    let mut ew = vec![vec![0.0; w]; h];
    for r in 0..h {
        for c in 0..w {
            if g[r][c] > 0.5 {
                ew[r][c] = if ea[r][c] < e[r][c] { ea[r][c] } else { e[r][c] };
            } else {
                let b = 2.0 - (0.5f64.ln() / 5.0 * dist[r][c]).exp();
                ew[r][c] = e[r][c] * b;
            }
        }
    }
    let (mut ew_fg, mut ew_bg) = (0.0, 0.0);
    for r in 0..h {
        for c in 0..w {
            if g[r][c] > 0.5 {
                ew_fg += ew[r][c];
            } else {
                ew_bg += ew[r][c];
            }
        }
    }
    let n_fg = fg.len() as f64;
    let eps = f64::EPSILON;
    let tpw = n_fg - ew_fg;
    let rec = 1.0 - ew_fg / n_fg;
    let prec = tpw / (eps + tpw + ew_bg);
    2.0 * rec * prec / (eps + rec + prec)
}

fn object_score(vals: &[f64]) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    let sd = if vals.len() < 2 {
        0.0
    } else {
        (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    2.0 * m / (m * m + 1.0 + sd + f64::EPSILON)
}

fn ssim_block(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let d = n - 1.0 + f64::EPSILON;
    let sx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / d;
    let sy = y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / d;
    let sxy = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / d;
    let alpha = 4.0 * mx * my * sxy;
    let beta = (mx * mx + my * my) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + f64::EPSILON)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn s_measure(pred: &[f64], gt: &[f64], w: usize, h: usize, alpha: f64) -> f64 {
    let n = (w * h) as f64;
    let fg_count = gt.iter().filter(|&&v| v > 0.5).count();
    let pm = pred.iter().sum::<f64>() / n;
    if fg_count == 0 {
        return 1.0 - pm;
    }
    if fg_count == w * h {
        return pm;
    }
    let u = fg_count as f64 / n;
    let fg: Vec<f64> = (0..w * h).filter(|&i| gt[i] > 0.5).map(|i| pred[i]).collect();
    let bg: Vec<f64> = (0..w * h).filter(|&i| gt[i] <= 0.5).map(|i| 1.0 - pred[i]).collect();
    let so = u * object_score(&fg) + (1.0 - u) * object_score(&bg);

    let (mut sx, mut sy) = (0.0, 0.0);
    for r in 0..h {
        for c in 0..w {
            if gt[r * w + c] > 0.5 {
                sx += c as f64;
                sy += r as f64;
            }
        }
    }
    let cx = ((sx / fg_count as f64).round_ties_even() as usize + 1).min(w);
    let cy = ((sy / fg_count as f64).round_ties_even() as usize + 1).min(h);
    let mut sr = 0.0;
    for (rows, cols) in [(0..cy, 0..cx), (0..cy, cx..w), (cy..h, 0..cx), (cy..h, cx..w)] {
        let mut px = Vec::new();
        let mut gy = Vec::new();
        for r in rows.clone() {
            for c in cols.clone() {
                px.push(pred[r * w + c]);
                gy.push(gt[r * w + c]);
            }
        }
        if px.is_empty() {
            continue;
        }
        sr += px.len() as f64 / n * ssim_block(&px, &gy);
    }
    let s = alpha * so + (1.0 - alpha) * sr;
    if s < 0.0 {
        0.0
    } else {
        s
    }
}

pub fn e_measure(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let th = (2.0 * pred.iter().sum::<f64>() / n).min(1.0);
    let fm: Vec<f64> = pred.iter().map(|&v| if v >= th && v > 0.0 { 1.0 } else { 0.0 }).collect();
    let fg = gt.iter().filter(|&&v| v > 0.5).count();
    let phi = if fg == 0 {
        fm.iter().map(|v| 1.0 - v).collect::<Vec<_>>()
    } else if fg == gt.len() {
        fm.clone()
    } else {
        let mf = fm.iter().sum::<f64>() / n;
        let mg = gt.iter().sum::<f64>() / n;
        (0..pred.len())
            .map(|i| {
                let a = fm[i] - mf;
                let b = gt[i] - mg;
                let xi = 2.0 * a * b / (a * a + b * b + f64::EPSILON);
                (1.0 + xi).powi(2) / 4.0
            })
            .collect()
    };
    phi.iter().sum::<f64>() / n
}

/// 3x3 clipped max-pool of `v` times that of `1 - v`.
pub fn contour(v: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let (mut a, mut b) = (f64::MIN, f64::MIN);
            for rr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    a = a.max(v[rr * w + cc]);
                    b = b.max(1.0 - v[rr * w + cc]);
                }
            }
            out[r * w + c] = a * b;
        }
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// O(n²) duplicate search: every ordered top-k neighbour list, then the
/// union of pairs at or above `tau`, keyed by (smaller id, larger id).
pub fn duplicate_pairs(
    vectors: &std::collections::HashMap<String, Vec<f64>>,
    k: usize,
    tau: f64,
) -> std::collections::BTreeMap<(String, String), f64> {
    let mut ids: Vec<&String> = vectors.keys().collect();
    ids.sort();
    let mut out = std::collections::BTreeMap::new();
    for a in &ids {
        let mut sims: Vec<(f64, &String)> = ids
            .iter()
            .filter(|b| *b != a)
            .map(|b| (cosine(&vectors[*a], &vectors[*b]).clamp(0.0, 1.0), *b))
            .collect();
        sims.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(y.1)));
        for (s, b) in sims.into_iter().take(k) {
            if s >= tau {
                let key = if *a < b { ((*a).clone(), b.clone()) } else { (b.clone(), (*a).clone()) };
                out.insert(key, s);
            }
        }
    }
    out
}
