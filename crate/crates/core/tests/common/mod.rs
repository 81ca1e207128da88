//! Independent reference implementations. Everything here is the plainest
//! possible double loop in `f64`, with no tiling, no norm expansion and no
//! compensated sums.

#![allow(dead_code)]

use nc_meter::ingest::StatsCheckpoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b))
}

/// Class means and unbiased scalar variances by two passes over the samples.
pub struct TwoPass {
    pub counts: Vec<u64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Option<f64>>,
}

pub fn two_pass(samples: &[Vec<f32>], labels: &[u32], num_classes: usize, dim: usize) -> TwoPass {
    let mut counts = vec![0u64; num_classes];
    let mut sums = vec![vec![0.0f64; dim]; num_classes];
    for (h, &y) in samples.iter().zip(labels) {
        counts[y as usize] += 1;
        for (s, &x) in sums[y as usize].iter_mut().zip(h) {
            *s += x as f64;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| s.iter().map(|x| if n == 0 { 0.0 } else { x / n as f64 }).collect())
        .collect();
    let mut ss = vec![0.0f64; num_classes];
    for (h, &y) in samples.iter().zip(labels) {
        let m = &means[y as usize];
        ss[y as usize] += h.iter().zip(m).map(|(&x, mu)| (x as f64 - mu).powi(2)).sum::<f64>();
    }
    let variances = ss
        .iter()
        .zip(&counts)
        .map(|(s, &n)| (n >= 2).then(|| s / (n - 1) as f64))
        .collect();
    TwoPass {
        counts,
        means,
        variances,
    }
}

/// Unweighted mean over classes with samples.
pub fn naive_global_mean(s: &StatsCheckpoint) -> Vec<f64> {
    let live: Vec<usize> = (0..s.num_classes()).filter(|&c| s.count(c) > 0).collect();
    let mut g = vec![0.0; s.dim()];
    for &c in &live {
        for (a, b) in g.iter_mut().zip(s.mean(c)) {
            *a += b;
        }
    }
    g.iter_mut().for_each(|x| *x /= live.len() as f64);
    g
}

pub struct NaiveGeometry {
    pub cdnv: Vec<f64>,
    pub interference: Vec<f64>,
    pub log_kernel: Vec<f64>,
    pub norms: Vec<f64>,
    pub log_norms: Vec<f64>,
}

pub fn naive_geometry(s: &StatsCheckpoint, min_count: u64) -> NaiveGeometry {
    let g = naive_global_mean(s);
    let c = s.num_classes();

    let var_classes: Vec<usize> = (0..c).filter(|&i| s.count(i) >= min_count.max(2)).collect();
    let mut cdnv = Vec::new();
    for (a, &i) in var_classes.iter().enumerate() {
        for &j in &var_classes[a + 1..] {
            let d = dist(s.mean(i), s.mean(j));
            let v = (s.variance(i).unwrap() + s.variance(j).unwrap()) / (2.0 * d * d);
            cdnv.push(v);
        }
    }

    let centered: Vec<Vec<f64>> = (0..c)
        .filter(|&i| s.count(i) >= 1)
        .map(|i| s.mean(i).iter().zip(&g).map(|(m, x)| m - x).collect::<Vec<f64>>())
        .filter(|v| norm(v) > 1e-12)
        .collect();
    let units: Vec<Vec<f64>> = centered
        .iter()
        .map(|v| {
            let n = norm(v);
            v.iter().map(|x| x / n).collect()
        })
        .collect();
    let mut interference = Vec::new();
    let mut log_kernel = Vec::new();
    for i in 0..units.len() {
        for j in (i + 1)..units.len() {
            interference.push(cosine(&units[i], &units[j]));
            log_kernel.push(-dist(&units[i], &units[j]).ln());
        }
    }
    let norms: Vec<f64> = centered.iter().map(|v| norm(v)).collect();
    let log_norms = norms.iter().map(|n| n.ln()).collect();
    NaiveGeometry {
        cdnv,
        interference,
        log_kernel,
        norms,
        log_norms,
    }
}

/// Literal decision rules. Returns `(linear, ncc, near_tie)` where `near_tie`
/// flags a runner-up within `eps` (relative) of the winner on either side.
pub fn literal_decision(
    h: &[f64],
    weights: &[Vec<f64>],
    biases: &[f64],
    means: &[Vec<f64>],
    live: &[usize],
    eps: f64,
) -> (usize, usize, bool) {
    let scores: Vec<(usize, f64)> = live
        .iter()
        .map(|&c| (c, weights[c].iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + biases[c]))
        .collect();
    let dists: Vec<(usize, f64)> = live.iter().map(|&c| (c, dist(h, &means[c]))).collect();

    let best_lin = scores
        .iter()
        .cloned()
        .fold((usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let best_ncc = dists
        .iter()
        .cloned()
        .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });

    let close = |a: f64, b: f64| (a - b).abs() <= eps * a.abs().max(b.abs()).max(1.0);
    let lin_tie = scores.iter().any(|&(c, s)| c != best_lin.0 && close(s, best_lin.1));
    let ncc_tie = dists
        .iter()
        .any(|&(c, d)| c != best_ncc.0 && close(d * d, best_ncc.1 * best_ncc.1));
    (best_lin.0, best_ncc.0, lin_tie || ncc_tie)
}
