//! Pairwise class-mean statistics without a `C × C` matrix.
//!
//! Every pairwise quantity here is a function of two row norms and one inner
//! product, so the work reduces to a blocked Gram computation: rows are cut
//! into tiles, each unordered tile pair `(I, J)` with `I <= J` is an
//! independent work item, and within a tile pair every `i < j` is visited once.
//! Values stream straight into shifted, compensated accumulators; nothing of
//! size `C²` (or even `tile²`) is ever allocated. Per-tile accumulators are
//! combined in tile order, so results do not depend on the worker count.

use rayon::prelude::*;

use crate::accumulate::GlobalMean;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ingest::StatsCheckpoint;
use crate::numeric::{dot, norm_sq, ShiftedAccumulator, Summary};

/// Summary of one pairwise quantity plus the pairs that had no value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTally {
    pub summary: Summary,
    pub skipped: u64,
}

#[derive(Debug, Clone, Copy)]
struct Partial {
    acc: ShiftedAccumulator,
    skipped: u64,
}

impl Partial {
    fn merge(&mut self, other: &Partial) {
        self.acc.merge(&other.acc);
        self.skipped += other.skipped;
    }
}

/// Walks every unordered pair `i < j` of the `n = rows.len() / dim` rows,
/// feeding `kernel(i, j, <row_i, row_j>)` into `K` accumulators. A `None`
/// output counts as a skipped pair for that accumulator.
pub fn tiled_pairs<const K: usize, F>(rows: &[f64], dim: usize, tile: usize, kernel: F) -> [PairTally; K]
where
    F: Fn(usize, usize, f64) -> [Option<f64>; K] + Sync,
{
    assert!(dim > 0 && tile > 0 && rows.len().is_multiple_of(dim));
    let n = rows.len() / dim;
    let row = |i: usize| &rows[i * dim..(i + 1) * dim];

    // Shift each accumulator by an early observed value so near-constant
    // quantities keep their (tiny) variance exactly.
    let mut shifts = [None; K];
    'scan: for i in 0..n {
        for j in (i + 1)..n {
            let out = kernel(i, j, dot(row(i), row(j)));
            for k in 0..K {
                if shifts[k].is_none() {
                    shifts[k] = out[k];
                }
            }
            if shifts.iter().all(Option::is_some) || i * n + j > 4096 {
                break 'scan;
            }
        }
    }
    let fresh = || -> [Partial; K] {
        std::array::from_fn(|k| Partial {
            acc: ShiftedAccumulator::new(shifts[k].unwrap_or(0.0)),
            skipped: 0,
        })
    };

    let tiles = n.div_ceil(tile);
    let work: Vec<(usize, usize)> = (0..tiles).flat_map(|a| (a..tiles).map(move |b| (a, b))).collect();

    let partials: Vec<[Partial; K]> = work
        .par_iter()
        .map(|&(a, b)| {
            let mut part = fresh();
            let (a0, a1) = (a * tile, ((a + 1) * tile).min(n));
            let (b0, b1) = (b * tile, ((b + 1) * tile).min(n));
            for i in a0..a1 {
                let ri = row(i);
                let start = if a == b { i + 1 } else { b0 };
                for j in start..b1 {
                    let out = kernel(i, j, dot(ri, row(j)));
                    for k in 0..K {
                        match out[k] {
                            Some(v) => part[k].acc.push(v),
                            None => part[k].skipped += 1,
                        }
                    }
                }
            }
            part
        })
        .collect();

    let mut total = fresh();
    for part in &partials {
        for k in 0..K {
            total[k].merge(&part[k]);
        }
    }
    std::array::from_fn(|k| PairTally {
        summary: total[k].acc.finish(),
        skipped: total[k].skipped,
    })
}

/// Class means centered on the global mean, with their norms and directions.
#[derive(Debug, Clone)]
pub struct CenteredGeometry {
    num_classes: usize,
    dim: usize,
    class_ids: Vec<u32>,
    centered: Vec<f64>,
    norms: Vec<f64>,
    units: Vec<f64>,
    variances: Vec<Option<f64>>,
    /// Classes with `N < min_count`.
    pub dropped_low_count: Vec<u32>,
    /// Classes whose centered mean has no usable direction.
    pub dropped_zero_norm: Vec<u32>,
}

impl CenteredGeometry {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of included classes.
    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn centered(&self, i: usize) -> &[f64] {
        &self.centered[i * self.dim..(i + 1) * self.dim]
    }

    pub fn unit(&self, i: usize) -> &[f64] {
        &self.units[i * self.dim..(i + 1) * self.dim]
    }

    pub fn units(&self) -> &[f64] {
        &self.units
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn variance(&self, i: usize) -> Option<f64> {
        self.variances[i]
    }
}

pub fn build_geometry(
    stats: &StatsCheckpoint,
    global_mean: &GlobalMean,
    min_count: u64,
    eps_direction: f64,
) -> Result<CenteredGeometry> {
    let dim = stats.dim();
    if global_mean.vector.len() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: global_mean.vector.len(),
        });
    }
    let min_count = min_count.max(1);
    let mut geom = CenteredGeometry {
        num_classes: stats.num_classes(),
        dim,
        class_ids: Vec::new(),
        centered: Vec::new(),
        norms: Vec::new(),
        units: Vec::new(),
        variances: Vec::new(),
        dropped_low_count: Vec::new(),
        dropped_zero_norm: Vec::new(),
    };
    let mut row = vec![0.0; dim];
    for c in 0..stats.num_classes() {
        if stats.count(c) < min_count {
            geom.dropped_low_count.push(c as u32);
            continue;
        }
        for ((r, &m), &g) in row.iter_mut().zip(stats.mean(c)).zip(&global_mean.vector) {
            *r = m - g;
        }
        let norm = norm_sq(&row).sqrt();
        if norm <= eps_direction {
            geom.dropped_zero_norm.push(c as u32);
            continue;
        }
        geom.class_ids.push(c as u32);
        geom.centered.extend_from_slice(&row);
        geom.units.extend(row.iter().map(|x| x / norm));
        geom.norms.push(norm);
        geom.variances.push(stats.variance(c));
    }
    if geom.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{} classes survive geometry filtering, need at least 2",
            geom.len()
        )));
    }
    Ok(geom)
}

/// Class-distance normalized variance over all eligible pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdnvSummary {
    /// Classes with a defined variance that entered the pair loop.
    pub classes: usize,
    pub cdnv: Summary,
    /// Base-10 logarithm of each positive CDNV value.
    pub cdnv_log10: Summary,
    /// Pairs skipped because their means coincide.
    pub coincident_pairs: u64,
    /// Pairs with CDNV exactly zero (both variances zero); absent from the log summary.
    pub zero_pairs: u64,
}

/// `(σ_c² + σ_c'²) / (2‖μ_c − μ_c'‖²)` over unordered pairs of classes with
/// `N >= max(min_count, 2)`.
///
/// The distance is between the raw class means. Rows are translated by the
/// global mean before the norm/inner-product expansion, which leaves every
/// distance unchanged and keeps the expansion well conditioned.
pub fn cdnv_summary(
    stats: &StatsCheckpoint,
    global_mean: &GlobalMean,
    min_count: u64,
    config: &RunConfig,
) -> Result<CdnvSummary> {
    let dim = stats.dim();
    let min_count = min_count.max(2);
    let mut rows = Vec::new();
    let mut variances = Vec::new();
    for c in 0..stats.num_classes() {
        if stats.count(c) < min_count {
            continue;
        }
        rows.extend(stats.mean(c).iter().zip(&global_mean.vector).map(|(m, g)| m - g));
        variances.push(stats.variance(c).expect("count >= 2"));
    }
    let p = variances.len();
    if p < 2 {
        return Err(Error::Degenerate(format!(
            "{p} classes have a defined variance, CDNV needs at least 2"
        )));
    }
    let sq: Vec<f64> = rows.chunks_exact(dim).map(norm_sq).collect();
    let eps = config.eps_distance_sq;
    let [cdnv, log] = tiled_pairs::<2, _>(&rows, dim, config.tile, |i, j, g| {
        let d2 = sq[i] + sq[j] - 2.0 * g;
        if d2 <= eps {
            return [None, None];
        }
        let v = (variances[i] + variances[j]) / (2.0 * d2);
        [Some(v), (v > 0.0).then(|| v.log10())]
    });
    Ok(CdnvSummary {
        classes: p,
        cdnv: cdnv.summary,
        cdnv_log10: log.summary,
        coincident_pairs: cdnv.skipped,
        zero_pairs: log.skipped - cdnv.skipped,
    })
}

/// Equinormness: spread of the (natural) log norms of centered class means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSummary {
    pub norms: Summary,
    pub log_norms: Summary,
    /// Coefficient of variation of the log norms; `None` under the mean guard.
    pub log_norm_cov: Option<f64>,
}

pub fn norm_summary(geom: &CenteredGeometry, eps_cov_mean: f64) -> NormSummary {
    let logs: Vec<f64> = geom.norms.iter().map(|n| n.ln()).collect();
    let log_norms = Summary::from_values(&logs);
    NormSummary {
        norms: Summary::from_values(&geom.norms),
        log_norms,
        log_norm_cov: log_norms.cov(eps_cov_mean),
    }
}

/// Pairwise cosines of centered class means, with the simplex-ETF reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceSummary {
    pub summary: Summary,
    /// `-1 / (P - 1)` for `P` included classes.
    pub etf_target: f64,
    /// `mean - etf_target`.
    pub etf_gap: f64,
}

/// `-ln ‖u_c − u_c'‖` over pairs of unit directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogKernelSummary {
    pub summary: Summary,
    /// Pairs whose directions coincide.
    pub coincident_pairs: u64,
}

fn interference_from(summary: Summary, p: usize) -> InterferenceSummary {
    let etf_target = -1.0 / (p as f64 - 1.0);
    InterferenceSummary {
        summary,
        etf_target,
        etf_gap: summary.mean - etf_target,
    }
}

pub fn interference_summary(geom: &CenteredGeometry, config: &RunConfig) -> InterferenceSummary {
    let [t] = tiled_pairs::<1, _>(&geom.units, geom.dim, config.tile, |_, _, g| [Some(g)]);
    interference_from(t.summary, geom.len())
}

pub fn logkernel_summary(geom: &CenteredGeometry, config: &RunConfig) -> LogKernelSummary {
    unit_pair_summaries(geom, config).1
}

/// Interference and log-kernel statistics from a single pass over the
/// direction Gram matrix.
pub fn unit_pair_summaries(geom: &CenteredGeometry, config: &RunConfig) -> (InterferenceSummary, LogKernelSummary) {
    let sq: Vec<f64> = geom.units.chunks_exact(geom.dim).map(norm_sq).collect();
    let eps = config.eps_distance_sq;
    let [inter, kernel] = tiled_pairs::<2, _>(&geom.units, geom.dim, config.tile, |i, j, g| {
        let d2 = sq[i] + sq[j] - 2.0 * g;
        [Some(g), (d2 > eps).then(|| -0.5 * d2.ln())]
    });
    (
        interference_from(inter.summary, geom.len()),
        LogKernelSummary {
            summary: kernel.summary,
            coincident_pairs: kernel.skipped,
        },
    )
}
