use std::io::{Read, Write};

use super::{check_version, expect_eof, read_exact_or, read_magic, read_u32};
use crate::error::{Error, Result};

pub const STATS_MAGIC: [u8; 8] = *b"NCSTA1\0\0";

/// Finalized per-class statistics: sample count, mean embedding and the
/// scalar sum of squared deviations from that mean.
///
/// Storage is flat (`means` is `num_classes × dim`, row-major) so the pairwise
/// kernels can walk it without indirection.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsCheckpoint {
    num_classes: usize,
    dim: usize,
    counts: Vec<u64>,
    means: Vec<f64>,
    m2: Vec<f64>,
}

impl StatsCheckpoint {
    pub fn new(num_classes: usize, dim: usize, counts: Vec<u64>, means: Vec<f64>, m2: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Corrupt("dim must be at least 1".into()));
        }
        if counts.len() != num_classes || m2.len() != num_classes {
            return Err(Error::DimMismatch {
                expected: num_classes,
                actual: counts.len().min(m2.len()),
            });
        }
        if means.len() != num_classes * dim {
            return Err(Error::DimMismatch {
                expected: num_classes * dim,
                actual: means.len(),
            });
        }
        let ckpt = Self {
            num_classes,
            dim,
            counts,
            means,
            m2,
        };
        for c in 0..num_classes {
            ckpt.validate_class(c)?;
        }
        Ok(ckpt)
    }

    fn validate_class(&self, c: usize) -> Result<()> {
        let (n, m2, mean) = (self.counts[c], self.m2[c], self.mean(c));
        if !m2.is_finite() || m2 < 0.0 {
            return Err(Error::Corrupt(format!(
                "class {c}: m2 = {m2} is not a finite non-negative value"
            )));
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::Corrupt(format!("class {c}: non-finite mean")));
        }
        if n <= 1 && m2 != 0.0 {
            return Err(Error::Corrupt(format!("class {c}: m2 = {m2} with count {n}")));
        }
        if n == 0 && mean.iter().any(|&x| x != 0.0) {
            return Err(Error::Corrupt(format!("class {c}: nonzero mean with count 0")));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self, class: usize) -> u64 {
        self.counts[class]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.means[class * self.dim..(class + 1) * self.dim]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn m2(&self, class: usize) -> f64 {
        self.m2[class]
    }

    /// Unbiased within-class variance summed over dimensions, defined for
    /// classes with at least two samples.
    pub fn variance(&self, class: usize) -> Option<f64> {
        let n = self.counts[class];
        (n >= 2).then(|| self.m2[class] / (n - 1) as f64)
    }

    pub fn total_samples(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn read_stats<R: Read>(mut source: R) -> Result<StatsCheckpoint> {
    read_magic(&mut source, &STATS_MAGIC, "NCSTA1")?;
    let version = read_u32(&mut source, "NCSTA1 header")?;
    check_version(version, "NCSTA1")?;
    let num_classes = read_u32(&mut source, "NCSTA1 header")? as usize;
    let dim = read_u32(&mut source, "NCSTA1 header")? as usize;
    if dim == 0 {
        return Err(Error::Format("NCSTA1: dim must be at least 1".into()));
    }

    let mut block = vec![0u8; 8 * (dim + 2)];
    let mut counts = Vec::new();
    let mut means = Vec::new();
    let mut m2 = Vec::new();
    for c in 0..num_classes {
        read_exact_or(&mut source, &mut block, &format!("NCSTA1 class {c}"))?;
        let mut words = block.chunks_exact(8).map(|b| <[u8; 8]>::try_from(b).unwrap());
        counts.push(u64::from_le_bytes(words.next().unwrap()));
        for _ in 0..dim {
            means.push(f64::from_le_bytes(words.next().unwrap()));
        }
        m2.push(f64::from_le_bytes(words.next().unwrap()));
    }
    expect_eof(&mut source, "NCSTA1")?;
    StatsCheckpoint::new(num_classes, dim, counts, means, m2)
}

pub fn write_stats<W: Write>(stats: &StatsCheckpoint, mut sink: W) -> Result<()> {
    let c = u32::try_from(stats.num_classes).map_err(|_| Error::Usage("too many classes for NCSTA1".into()))?;
    let d = u32::try_from(stats.dim).map_err(|_| Error::Usage("dim too large for NCSTA1".into()))?;
    sink.write_all(&STATS_MAGIC)?;
    sink.write_all(&super::FORMAT_VERSION.to_le_bytes())?;
    sink.write_all(&c.to_le_bytes())?;
    sink.write_all(&d.to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * (stats.dim + 2));
    for class in 0..stats.num_classes {
        buf.clear();
        buf.extend_from_slice(&stats.counts[class].to_le_bytes());
        for x in stats.mean(class) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        buf.extend_from_slice(&stats.m2[class].to_le_bytes());
        sink.write_all(&buf)?;
    }
    sink.flush()?;
    Ok(())
}

pub fn stats_to_bytes(stats: &StatsCheckpoint) -> Vec<u8> {
    let mut out = Vec::new();
    write_stats(stats, &mut out).expect("writing to a Vec cannot fail");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(count: u64, mean: &[f64], m2: f64) -> Vec<u8> {
        let mut b = STATS_MAGIC.to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&(mean.len() as u32).to_le_bytes());
        b.extend_from_slice(&count.to_le_bytes());
        for x in mean {
            b.extend_from_slice(&x.to_le_bytes());
        }
        b.extend_from_slice(&m2.to_le_bytes());
        b
    }

    #[test]
    fn variance_of_one_two_three() {
        // {1, 2, 3}: mean 2, sum of squared deviations 2, unbiased variance 1.
        let s = read_stats(&raw(3, &[2.0], 2.0)[..]).unwrap();
        assert_eq!(s.variance(0), Some(1.0));
        assert_eq!(s.mean(0), &[2.0]);
    }

    #[test]
    fn singleton_class_is_valid_without_variance() {
        let s = read_stats(&raw(1, &[5.0], 0.0)[..]).unwrap();
        assert_eq!(s.variance(0), None);
    }

    #[test]
    fn negative_m2_is_corruption() {
        assert!(matches!(
            read_stats(&raw(3, &[2.0], -0.001)[..]),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn empty_class_with_mass_is_corruption() {
        assert!(matches!(read_stats(&raw(0, &[1.0], 0.0)[..]), Err(Error::Corrupt(_))));
        assert!(matches!(read_stats(&raw(1, &[1.0], 0.5)[..]), Err(Error::Corrupt(_))));
    }

    #[test]
    fn bad_magic_and_trailing_bytes() {
        let mut b = raw(3, &[2.0], 2.0);
        b[5] = b'X';
        assert!(matches!(read_stats(&b[..]), Err(Error::Format(_))));
        let mut b = raw(3, &[2.0], 2.0);
        b.push(1);
        assert!(matches!(read_stats(&b[..]), Err(Error::Format(_))));
    }

    #[test]
    fn round_trip_bit_exact() {
        let s = StatsCheckpoint::new(
            2,
            2,
            vec![5, 0],
            vec![0.1 + 0.2, -1e-300, 0.0, 0.0],
            vec![1.0 / 3.0, 0.0],
        )
        .unwrap();
        let bytes = stats_to_bytes(&s);
        let back = read_stats(&bytes[..]).unwrap();
        assert_eq!(back, s);
        assert_eq!(stats_to_bytes(&back), bytes);
    }
}
