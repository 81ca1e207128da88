//! Streaming per-class means and within-class variances.
//!
//! One pass over the embeddings suffices: each class keeps a Welford state
//! (count, running mean, running sum of squared deviations) and shard-local
//! states combine with the Chan et al. merge. Everything is held in `f64`
//! even though payloads are `f32`.

use std::io::Read;

use crate::error::{Error, Result};
use crate::ingest::{EmbeddingReader, StatsCheckpoint};
use crate::numeric::Compensated;

/// Welford state for one class. The variance is a scalar: squared deviations
/// are summed over all embedding dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccumulator {
    count: u64,
    mean: Vec<f64>,
    m2: f64,
}

impl ClassAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: 0.0,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }

    pub fn update(&mut self, h: &[f32]) -> Result<()> {
        self.check(h.len(), h.iter().all(|x| x.is_finite()))?;
        self.update_unchecked(h.iter().map(|&x| x as f64));
        Ok(())
    }

    pub fn update_f64(&mut self, h: &[f64]) -> Result<()> {
        self.check(h.len(), h.iter().all(|x| x.is_finite()))?;
        self.update_unchecked(h.iter().copied());
        Ok(())
    }

    fn check(&self, len: usize, finite: bool) -> Result<()> {
        if len != self.mean.len() {
            return Err(Error::DimMismatch {
                expected: self.mean.len(),
                actual: len,
            });
        }
        if !finite {
            return Err(Error::Data("non-finite embedding value".into()));
        }
        Ok(())
    }

    // m2 grows by <h - mean_old, h - mean_new>.
    #[inline]
    fn update_unchecked<I: Iterator<Item = f64>>(&mut self, h: I) {
        self.count += 1;
        let n = self.count as f64;
        let mut inc = 0.0;
        for (m, x) in self.mean.iter_mut().zip(h) {
            let delta = x - *m;
            *m += delta / n;
            inc += delta * (x - *m);
        }
        self.m2 += inc;
    }

    /// Chan parallel merge. The empty accumulator is the identity.
    pub fn merge(&mut self, other: &ClassAccumulator) -> Result<()> {
        if other.mean.len() != self.mean.len() {
            return Err(Error::DimMismatch {
                expected: self.mean.len(),
                actual: other.mean.len(),
            });
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            self.clone_from(other);
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let weight = nb / n;
        let mut dist_sq = 0.0;
        for (m, &mb) in self.mean.iter_mut().zip(&other.mean) {
            let delta = mb - *m;
            *m += delta * weight;
            dist_sq += delta * delta;
        }
        self.m2 += other.m2 + dist_sq * (na * nb / n);
        self.count += other.count;
        Ok(())
    }
}

/// Class-indexed set of accumulators for one shard (or a merge of shards).
#[derive(Debug, Clone, PartialEq)]
pub struct StatsAccumulator {
    dim: usize,
    fixed_classes: Option<usize>,
    classes: Vec<ClassAccumulator>,
}

impl StatsAccumulator {
    /// With `num_classes = None` the class table grows to the largest label seen.
    pub fn new(dim: usize, num_classes: Option<usize>) -> Self {
        Self {
            dim,
            fixed_classes: num_classes,
            classes: (0..num_classes.unwrap_or(0))
                .map(|_| ClassAccumulator::new(dim))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, c: usize) -> &ClassAccumulator {
        &self.classes[c]
    }

    fn ensure_class(&mut self, label: usize) -> Result<()> {
        if label >= self.classes.len() {
            if let Some(c) = self.fixed_classes {
                return Err(Error::Data(format!("label {label} outside [0, {c})")));
            }
            let dim = self.dim;
            self.classes.resize_with(label + 1, || ClassAccumulator::new(dim));
        }
        Ok(())
    }

    pub fn push(&mut self, label: u32, h: &[f32]) -> Result<()> {
        self.ensure_class(label as usize)?;
        self.classes[label as usize].update(h)
    }

    /// Consumes an NCEMB1 stream into this accumulator.
    pub fn consume<R: Read>(&mut self, mut reader: EmbeddingReader<R>) -> Result<u64> {
        if reader.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: reader.dim(),
            });
        }
        let mut buf = Vec::with_capacity(self.dim);
        while let Some(label) = reader.read_into(&mut buf)? {
            let index = reader.records_read() - 1;
            self.push(label, &buf).map_err(|e| match e {
                Error::Data(message) => Error::Record { record: index, message },
                other => other,
            })?;
        }
        Ok(reader.records_read())
    }

    pub fn merge(&mut self, other: &StatsAccumulator) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        if other.classes.len() > self.classes.len() {
            self.ensure_class(other.classes.len() - 1)?;
        }
        for (mine, theirs) in self.classes.iter_mut().zip(&other.classes) {
            mine.merge(theirs)?;
        }
        Ok(())
    }

    /// Pads the class table to exactly `num_classes` (never shrinks).
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if num_classes < self.classes.len() {
            return Err(Error::Data(format!(
                "saw label {} but only {num_classes} classes declared",
                self.classes.len() - 1
            )));
        }
        let dim = self.dim;
        self.classes.resize_with(num_classes, || ClassAccumulator::new(dim));
        self.fixed_classes = Some(num_classes);
        Ok(self)
    }

    pub fn to_checkpoint(&self) -> Result<StatsCheckpoint> {
        let c = self.classes.len();
        let mut counts = Vec::with_capacity(c);
        let mut means = Vec::with_capacity(c * self.dim);
        let mut m2 = Vec::with_capacity(c);
        for acc in &self.classes {
            counts.push(acc.count);
            means.extend_from_slice(&acc.mean);
            // A single sample has no spread; guard against -0.0 style noise.
            m2.push(if acc.count <= 1 { 0.0 } else { acc.m2.max(0.0) });
        }
        StatsCheckpoint::new(c, self.dim, counts, means, m2)
    }
}

/// Reads one shard into a fresh accumulator.
pub fn accumulate_reader<R: Read>(reader: EmbeddingReader<R>, num_classes: Option<usize>) -> Result<StatsAccumulator> {
    let mut acc = StatsAccumulator::new(reader.dim(), num_classes);
    acc.consume(reader)?;
    Ok(acc)
}

/// Merges shard accumulators pairwise, level by level: `(0,1), (2,3), ...`.
/// The pairing depends only on the shard order, so the result is bit-identical
/// however the shards were produced.
pub fn merge_tree(mut parts: Vec<StatsAccumulator>) -> Result<StatsAccumulator> {
    if parts.is_empty() {
        return Err(Error::Empty("no shards to merge".into()));
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut left) = it.next() {
            if let Some(right) = it.next() {
                left.merge(&right)?;
            }
            next.push(left);
        }
        parts = next;
    }
    Ok(parts.pop().unwrap())
}

/// Unweighted average of the class means, over classes with at least one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMean {
    pub vector: Vec<f64>,
    pub contributing_classes: usize,
}

pub fn global_mean(stats: &StatsCheckpoint) -> Result<GlobalMean> {
    let dim = stats.dim();
    let mut sums = vec![Compensated::default(); dim];
    let mut contributing = 0usize;
    for c in 0..stats.num_classes() {
        if stats.count(c) == 0 {
            continue;
        }
        contributing += 1;
        for (s, &x) in sums.iter_mut().zip(stats.mean(c)) {
            s.add(x);
        }
    }
    if contributing == 0 {
        return Err(Error::Empty("every class is empty".into()));
    }
    let k = contributing as f64;
    Ok(GlobalMean {
        vector: sums.iter().map(|s| s.value() / k).collect(),
        contributing_classes: contributing,
    })
}

/// Which classes fell below each count threshold.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExclusionReport {
    /// Classes with no samples; excluded from the global mean and all metrics.
    pub empty: Vec<u32>,
    /// Classes with `1 <= N < min_count`; kept for geometry, dropped wherever
    /// a variance is needed.
    pub below_min_count: Vec<u32>,
    pub min_count: u64,
}

#[derive(Debug, Clone)]
pub struct Finalized {
    pub checkpoint: StatsCheckpoint,
    pub global_mean: GlobalMean,
    pub exclusions: ExclusionReport,
}

pub fn finalize(acc: &StatsAccumulator, min_count: u64) -> Result<Finalized> {
    let checkpoint = acc.to_checkpoint()?;
    let global_mean = global_mean(&checkpoint)?;
    let mut exclusions = ExclusionReport {
        min_count,
        ..Default::default()
    };
    for (c, &n) in checkpoint.counts().iter().enumerate() {
        if n == 0 {
            exclusions.empty.push(c as u32);
        } else if n < min_count {
            exclusions.below_min_count.push(c as u32);
        }
    }
    Ok(Finalized {
        checkpoint,
        global_mean,
        exclusions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc_of(values: &[f32]) -> ClassAccumulator {
        let mut a = ClassAccumulator::new(1);
        for v in values {
            a.update(&[*v]).unwrap();
        }
        a
    }

    #[test]
    fn first_update() {
        let a = acc_of(&[2.0]);
        assert_eq!((a.count(), a.mean(), a.m2()), (1, &[2.0][..], 0.0));
    }

    #[test]
    fn one_two_three() {
        let a = acc_of(&[1.0, 2.0, 3.0]);
        assert_eq!(a.mean(), &[2.0]);
        assert_eq!(a.m2(), 2.0);
        assert_eq!(a.variance(), Some(1.0));
    }

    #[test]
    fn constant_stream_has_no_drift() {
        let mut a = ClassAccumulator::new(3);
        for _ in 0..100_000 {
            a.update(&[0.1, -7.3, 1e4]).unwrap();
        }
        assert!(a.m2() <= 1e-6);
    }

    #[test]
    fn merge_halves() {
        let mut a = acc_of(&[1.0, 2.0]);
        a.merge(&acc_of(&[3.0, 4.0])).unwrap();
        assert_eq!(a.mean(), &[2.5]);
        assert_eq!(a.m2(), 5.0);
    }

    #[test]
    fn empty_is_identity() {
        let x = acc_of(&[1.0, 5.0, 2.0]);
        let mut e = ClassAccumulator::new(1);
        e.merge(&x).unwrap();
        assert_eq!(e, x);
        let mut y = x.clone();
        y.merge(&ClassAccumulator::new(1)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn rejects_bad_input() {
        let mut a = ClassAccumulator::new(2);
        assert!(a.update(&[1.0]).is_err());
        assert!(a.update(&[1.0, f32::NAN]).is_err());
        assert!(a.merge(&ClassAccumulator::new(3)).is_err());
        assert_eq!(a.count(), 0);
    }

    #[test]
    fn global_mean_is_unweighted() {
        let mut acc = StatsAccumulator::new(1, Some(3));
        for _ in 0..1000 {
            acc.push(0, &[0.0]).unwrap();
        }
        acc.push(2, &[2.0]).unwrap();
        let f = finalize(&acc, 2).unwrap();
        assert_eq!(f.global_mean.vector, vec![1.0]);
        assert_eq!(f.global_mean.contributing_classes, 2);
        assert_eq!(f.exclusions.empty, vec![1]);
        assert_eq!(f.exclusions.below_min_count, vec![2]);
    }

    #[test]
    fn all_empty_is_an_error() {
        let acc = StatsAccumulator::new(2, Some(4));
        assert!(matches!(finalize(&acc, 2), Err(Error::Empty(_))));
    }

    #[test]
    fn growable_and_fixed_tables() {
        let mut g = StatsAccumulator::new(1, None);
        g.push(4, &[1.0]).unwrap();
        assert_eq!(g.num_classes(), 5);
        let mut f = StatsAccumulator::new(1, Some(2));
        assert!(f.push(2, &[1.0]).is_err());
        assert!(g.clone().with_num_classes(3).is_err());
        assert_eq!(g.with_num_classes(8).unwrap().num_classes(), 8);
    }

    #[test]
    fn tree_merge_is_order_fixed() {
        let parts: Vec<_> = (0..5)
            .map(|i| {
                let mut a = StatsAccumulator::new(1, None);
                a.push(i % 2, &[i as f32]).unwrap();
                a.push(0, &[(i * i) as f32]).unwrap();
                a
            })
            .collect();
        let a = merge_tree(parts.clone()).unwrap();
        let b = merge_tree(parts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class(0).count(), 8);
        assert!(merge_tree(Vec::new()).is_err());
    }
}
