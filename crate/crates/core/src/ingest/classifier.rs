use std::io::{Read, Write};

use super::{check_version, expect_eof, read_exact_or, read_magic, read_u32};
use crate::error::{Error, Result};

pub const CLASSIFIER_MAGIC: [u8; 8] = *b"NCWGT1\0\0";

/// Linear token head: one weight row per class and optional per-class biases.
///
/// Most causal LM heads carry no bias; when none is stored every `bias(c)`
/// reads as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSet {
    num_classes: usize,
    dim: usize,
    weights: Vec<f32>,
    biases: Option<Vec<f32>>,
}

impl ClassifierSet {
    pub fn new(num_classes: usize, dim: usize, weights: Vec<f32>, biases: Option<Vec<f32>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("classifier dim must be at least 1".into()));
        }
        if weights.len() != num_classes * dim {
            return Err(Error::DimMismatch {
                expected: num_classes * dim,
                actual: weights.len(),
            });
        }
        if let Some(b) = &biases {
            if b.len() != num_classes {
                return Err(Error::DimMismatch {
                    expected: num_classes,
                    actual: b.len(),
                });
            }
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::Data(format!("non-finite weight in class {}", i / dim)));
        }
        if let Some(c) = biases.as_ref().and_then(|b| b.iter().position(|x| !x.is_finite())) {
            return Err(Error::Data(format!("non-finite bias for class {c}")));
        }
        Ok(Self {
            num_classes,
            dim,
            weights,
            biases,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, class: usize) -> &[f32] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn has_bias(&self) -> bool {
        self.biases.is_some()
    }

    pub fn bias(&self, class: usize) -> f32 {
        self.biases.as_ref().map_or(0.0, |b| b[class])
    }

    /// Biases with the zero default filled in.
    pub fn biases(&self) -> Vec<f32> {
        match &self.biases {
            Some(b) => b.clone(),
            None => vec![0.0; self.num_classes],
        }
    }
}

pub fn read_classifier<R: Read>(mut source: R) -> Result<ClassifierSet> {
    read_magic(&mut source, &CLASSIFIER_MAGIC, "NCWGT1")?;
    let version = read_u32(&mut source, "NCWGT1 header")?;
    check_version(version, "NCWGT1")?;
    let num_classes = read_u32(&mut source, "NCWGT1 header")? as usize;
    let dim = read_u32(&mut source, "NCWGT1 header")? as usize;
    let mut flags = [0u8; 4];
    read_exact_or(&mut source, &mut flags, "NCWGT1 header")?;
    let has_bias = match flags[0] {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("NCWGT1: has_bias must be 0 or 1, found {other}"))),
    };
    if dim == 0 {
        return Err(Error::Format("NCWGT1: dim must be at least 1".into()));
    }

    // Grow row by row so a lying header cannot force a huge allocation.
    let mut row = vec![0u8; 4 * dim];
    let mut weights = Vec::new();
    for c in 0..num_classes {
        read_exact_or(&mut source, &mut row, &format!("NCWGT1 size mismatch at row {c}"))?;
        weights.extend(row.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())));
    }
    let biases = if has_bias {
        let mut b = Vec::new();
        let mut word = [0u8; 4];
        for _ in 0..num_classes {
            read_exact_or(&mut source, &mut word, "NCWGT1 size mismatch in biases")?;
            b.push(f32::from_le_bytes(word));
        }
        Some(b)
    } else {
        None
    };
    expect_eof(&mut source, "NCWGT1")?;
    ClassifierSet::new(num_classes, dim, weights, biases)
}

pub fn write_classifier<W: Write>(set: &ClassifierSet, mut sink: W) -> Result<()> {
    let c = u32::try_from(set.num_classes).map_err(|_| Error::Usage("too many classes for NCWGT1".into()))?;
    let d = u32::try_from(set.dim).map_err(|_| Error::Usage("dim too large for NCWGT1".into()))?;
    sink.write_all(&CLASSIFIER_MAGIC)?;
    sink.write_all(&super::FORMAT_VERSION.to_le_bytes())?;
    sink.write_all(&c.to_le_bytes())?;
    sink.write_all(&d.to_le_bytes())?;
    sink.write_all(&[set.has_bias() as u8, 0, 0, 0])?;
    let mut buf = Vec::with_capacity(4 * set.dim);
    for row in set.weights.chunks_exact(set.dim) {
        buf.clear();
        for w in row {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        sink.write_all(&buf)?;
    }
    if let Some(b) = &set.biases {
        for x in b {
            sink.write_all(&x.to_le_bytes())?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn classifier_to_bytes(set: &ClassifierSet) -> Vec<u8> {
    let mut out = Vec::new();
    write_classifier(set, &mut out).expect("writing to a Vec cannot fail");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_without_bias_reads_zero_bias() {
        let set = ClassifierSet::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], None).unwrap();
        let back = read_classifier(&classifier_to_bytes(&set)[..]).unwrap();
        assert_eq!(back.biases(), vec![0.0, 0.0]);
        assert_eq!(back.row(1), &[0.0, 1.0]);
        assert!(!back.has_bias());
    }

    #[test]
    fn biases_preserved() {
        let set = ClassifierSet::new(2, 1, vec![1.0, 2.0], Some(vec![0.5, -0.5])).unwrap();
        let back = read_classifier(&classifier_to_bytes(&set)[..]).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.bias(1), -0.5);
    }

    #[test]
    fn short_payload_is_size_mismatch() {
        let set = ClassifierSet::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], None).unwrap();
        let bytes = classifier_to_bytes(&set);
        assert!(matches!(
            read_classifier(&bytes[..bytes.len() - 4]),
            Err(Error::Truncated(_))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(read_classifier(&long[..]), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic() {
        let set = ClassifierSet::new(1, 1, vec![1.0], None).unwrap();
        let mut bytes = classifier_to_bytes(&set);
        bytes[2] = b'?';
        assert!(matches!(read_classifier(&bytes[..]), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(ClassifierSet::new(1, 2, vec![1.0, f32::INFINITY], None).is_err());
    }
}
