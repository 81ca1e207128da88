//! Small numeric building blocks shared by the metric modules.

use serde::{Deserialize, Serialize};

/// Inner product with four independent partial sums.
///
/// Fixed association order, so the result is reproducible across runs; the
/// split lets the compiler keep the lanes in vector registers.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Compensated) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = Compensated::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Count, mean, population variance and range of a set of reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

/// Off-diagonal pairwise quantities use the same summary shape.
pub type PairwiseSummary = Summary;

pub const DEFAULT_COV_EPS: f64 = 1e-9;

impl Summary {
    pub fn empty() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            variance: 0.0,
            min: 0.0,
            max: 0.0,
        }
    }

    /// Two-pass summary of an in-memory slice.
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::empty();
        }
        let n = values.len() as f64;
        let mean = compensated_sum(values.iter().copied()) / n;
        let variance = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
        let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        Self {
            count: values.len() as u64,
            mean,
            variance,
            min,
            max,
        }
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    /// `std / |mean|`, or `None` when `|mean| < eps` (or nothing was seen).
    pub fn cov(&self, eps: f64) -> Option<f64> {
        if self.count == 0 || self.mean.abs() < eps {
            None
        } else {
            Some(self.std() / self.mean.abs())
        }
    }
}

/// Streaming summary around a fixed shift.
///
/// Sums of `x - shift` and `(x - shift)^2` are kept compensated. Choosing the
/// shift near the data (any observed value will do) keeps the variance free of
/// the cancellation that plain `E[x^2] - E[x]^2` suffers when the spread is
/// tiny relative to the mean. Accumulators with the same shift merge exactly
/// like their sums, so a fixed merge order gives bit-identical results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedAccumulator {
    shift: f64,
    count: u64,
    s1: Compensated,
    s2: Compensated,
    min: f64,
    max: f64,
}

impl ShiftedAccumulator {
    pub fn new(shift: f64) -> Self {
        Self {
            shift,
            count: 0,
            s1: Compensated::default(),
            s2: Compensated::default(),
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        let d = x - self.shift;
        self.count += 1;
        self.s1.add(d);
        self.s2.add(d * d);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &ShiftedAccumulator) {
        debug_assert_eq!(self.shift.to_bits(), other.shift.to_bits());
        self.count += other.count;
        self.s1.merge(&other.s1);
        self.s2.merge(&other.s2);
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self) -> Summary {
        if self.count == 0 {
            return Summary::empty();
        }
        let n = self.count as f64;
        let m = self.s1.value() / n;
        let variance = (self.s2.value() / n - m * m).max(0.0);
        Summary {
            count: self.count,
            mean: self.shift + m,
            variance,
            min: self.min,
            max: self.max,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn compensated_beats_naive() {
        let mut c = Compensated::default();
        c.add(1.0);
        for _ in 0..10_000 {
            c.add(1e-16);
        }
        assert!((c.value() - (1.0 + 1e-12)).abs() < 1e-18);
    }

    #[test]
    fn shifted_matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| 1e6 + (i as f64).sin()).collect();
        let mut acc = ShiftedAccumulator::new(xs[0]);
        xs.iter().for_each(|&x| acc.push(x));
        let a = acc.finish();
        let b = Summary::from_values(&xs);
        assert!((a.mean - b.mean).abs() < 1e-9);
        assert!((a.variance - b.variance).abs() < 1e-9 * b.variance);
        assert_eq!(a.min, b.min);
        assert_eq!(a.max, b.max);
    }

    #[test]
    fn constant_values_have_zero_variance() {
        let mut acc = ShiftedAccumulator::new(-1.0 / 3.0);
        for _ in 0..100 {
            acc.push(-1.0 / 3.0);
        }
        assert_eq!(acc.finish().variance, 0.0);
    }

    #[test]
    fn cov_guard() {
        assert_eq!(Summary::from_values(&[-1.0, 1.0]).cov(DEFAULT_COV_EPS), None);
        assert_eq!(Summary::from_values(&[1.0, 1.0, 1.0]).cov(DEFAULT_COV_EPS), Some(0.0));
        let c = Summary::from_values(&[2.0, 4.0]).cov(DEFAULT_COV_EPS).unwrap();
        assert!((c - 1.0 / 3.0).abs() < 1e-15);
    }
}
