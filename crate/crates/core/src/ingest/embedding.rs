use std::io::{Read, Write};

use super::{check_version, read_fully, read_magic, read_u32, read_u64};
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: [u8; 8] = *b"NCEMB1\0\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingHeader {
    pub version: u32,
    pub dim: u32,
    /// 0 when the writer did not know the count up front.
    pub declared_count: u64,
}

/// One context embedding and the class id of the token that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub label: u32,
    pub vector: Vec<f32>,
}

/// Streaming NCEMB1 reader.
///
/// Memory use is one record regardless of `declared_count`; the declared count
/// is only compared against what was actually read once the stream ends.
pub struct EmbeddingReader<R> {
    inner: R,
    header: EmbeddingHeader,
    num_classes: Option<u32>,
    yielded: u64,
    buf: Vec<u8>,
    finished: bool,
}

impl<R: Read> EmbeddingReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        read_magic(&mut inner, &EMBEDDING_MAGIC, "NCEMB1")?;
        let version = read_u32(&mut inner, "NCEMB1 header")?;
        check_version(version, "NCEMB1")?;
        let dim = read_u32(&mut inner, "NCEMB1 header")?;
        let declared_count = read_u64(&mut inner, "NCEMB1 header")?;
        if dim == 0 {
            return Err(Error::Format("NCEMB1: dim must be at least 1".into()));
        }
        let record_len = 4 + 4 * dim as usize;
        Ok(Self {
            inner,
            header: EmbeddingHeader {
                version,
                dim,
                declared_count,
            },
            num_classes: None,
            yielded: 0,
            buf: vec![0u8; record_len],
            finished: false,
        })
    }

    /// Rejects any label `>= num_classes`.
    pub fn with_num_classes(mut self, num_classes: u32) -> Self {
        self.num_classes = Some(num_classes);
        self
    }

    pub fn header(&self) -> &EmbeddingHeader {
        &self.header
    }

    pub fn dim(&self) -> usize {
        self.header.dim as usize
    }

    pub fn records_read(&self) -> u64 {
        self.yielded
    }

    /// Reads the next record into `out` (resized to `dim`) and returns its
    /// label, or `None` at a clean end of stream.
    pub fn read_into(&mut self, out: &mut Vec<f32>) -> Result<Option<u32>> {
        if self.finished {
            return Ok(None);
        }
        let got = read_fully(&mut self.inner, &mut self.buf)?;
        let index = self.yielded;
        if got == 0 {
            self.finished = true;
            let declared = self.header.declared_count;
            if declared != 0 && declared != self.yielded {
                return Err(Error::Truncated(format!(
                    "NCEMB1: header declares {declared} records, stream holds {}",
                    self.yielded
                )));
            }
            return Ok(None);
        }
        if got < self.buf.len() {
            self.finished = true;
            return Err(Error::Truncated(format!(
                "NCEMB1: partial record {index} ({got} of {} bytes)",
                self.buf.len()
            )));
        }
        let declared = self.header.declared_count;
        if declared != 0 && index >= declared {
            self.finished = true;
            return Err(Error::Format(format!(
                "NCEMB1: more records than the {declared} declared"
            )));
        }

        let label = u32::from_le_bytes(self.buf[0..4].try_into().unwrap());
        if let Some(c) = self.num_classes {
            if label >= c {
                return Err(Error::Record {
                    record: index,
                    message: format!("label {label} outside [0, {c})"),
                });
            }
        }
        out.clear();
        out.reserve(self.dim());
        for chunk in self.buf[4..].chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Record {
                    record: index,
                    message: format!("non-finite value {v}"),
                });
            }
            out.push(v);
        }
        self.yielded += 1;
        Ok(Some(label))
    }
}

impl<R: Read> Iterator for EmbeddingReader<R> {
    type Item = Result<EmbeddingRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut vector = Vec::with_capacity(self.dim());
        match self.read_into(&mut vector) {
            Ok(Some(label)) => Some(Ok(EmbeddingRecord { label, vector })),
            Ok(None) => None,
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

/// Streaming NCEMB1 writer. Pass `declared_count = 0` when the number of
/// records is not known in advance.
pub struct EmbeddingWriter<W: Write> {
    inner: W,
    dim: usize,
    declared_count: u64,
    written: u64,
    scratch: Vec<u8>,
}

impl<W: Write> EmbeddingWriter<W> {
    pub fn new(mut inner: W, dim: usize, declared_count: u64) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::Usage(format!("invalid embedding dim {dim}")));
        }
        inner.write_all(&EMBEDDING_MAGIC)?;
        inner.write_all(&super::FORMAT_VERSION.to_le_bytes())?;
        inner.write_all(&(dim as u32).to_le_bytes())?;
        inner.write_all(&declared_count.to_le_bytes())?;
        Ok(Self {
            inner,
            dim,
            declared_count,
            written: 0,
            scratch: Vec::with_capacity(4 + 4 * dim),
        })
    }

    pub fn write_record(&mut self, label: u32, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        self.scratch.clear();
        self.scratch.extend_from_slice(&label.to_le_bytes());
        for v in vector {
            self.scratch.extend_from_slice(&v.to_le_bytes());
        }
        self.inner.write_all(&self.scratch)?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    /// Flushes and hands back the sink. Fails if a nonzero declared count was
    /// not met exactly.
    pub fn finish(mut self) -> Result<W> {
        if self.declared_count != 0 && self.declared_count != self.written {
            return Err(Error::Data(format!(
                "NCEMB1: declared {} records but wrote {}",
                self.declared_count, self.written
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Reads a whole stream into memory. Prefer [`EmbeddingReader`] for large inputs.
pub fn read_embedding_stream<R: Read>(source: R) -> Result<(EmbeddingHeader, Vec<EmbeddingRecord>)> {
    let reader = EmbeddingReader::new(source)?;
    let header = *reader.header();
    let records = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, records))
}

pub fn write_embedding_stream(records: &[EmbeddingRecord], dim: usize) -> Result<Vec<u8>> {
    let mut w = EmbeddingWriter::new(Vec::new(), dim, records.len() as u64)?;
    for r in records {
        w.write_record(r.label, &r.vector)?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_bytes(dim: u32, count: u64) -> Vec<u8> {
        let mut b = EMBEDDING_MAGIC.to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&dim.to_le_bytes());
        b.extend_from_slice(&count.to_le_bytes());
        b
    }

    fn record_bytes(label: u32, v: &[f32]) -> Vec<u8> {
        let mut b = label.to_le_bytes().to_vec();
        for x in v {
            b.extend_from_slice(&x.to_le_bytes());
        }
        b
    }

    #[test]
    fn single_record() {
        let mut bytes = header_bytes(2, 1);
        bytes.extend(record_bytes(3, &[1.0, 2.0]));
        let (h, recs) = read_embedding_stream(&bytes[..]).unwrap();
        assert_eq!(h.dim, 2);
        assert_eq!(
            recs,
            vec![EmbeddingRecord {
                label: 3,
                vector: vec![1.0, 2.0]
            }]
        );
    }

    #[test]
    fn declared_count_not_met() {
        let mut bytes = header_bytes(2, 2);
        bytes.extend(record_bytes(3, &[1.0, 2.0]));
        let err = read_embedding_stream(&bytes[..]).unwrap_err();
        assert!(matches!(err, Error::Truncated(_)), "{err}");
    }

    #[test]
    fn extra_records_rejected() {
        let mut bytes = header_bytes(1, 1);
        bytes.extend(record_bytes(0, &[1.0]));
        bytes.extend(record_bytes(0, &[2.0]));
        assert!(matches!(read_embedding_stream(&bytes[..]), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_count_reads_to_end() {
        let mut bytes = header_bytes(1, 0);
        for i in 0..5 {
            bytes.extend(record_bytes(i, &[i as f32]));
        }
        let (_, recs) = read_embedding_stream(&bytes[..]).unwrap();
        assert_eq!(recs.len(), 5);
    }

    #[test]
    fn partial_record_is_truncation() {
        let mut bytes = header_bytes(2, 0);
        bytes.extend(record_bytes(0, &[1.0, 2.0]));
        bytes.extend(&record_bytes(1, &[1.0, 2.0])[..6]);
        assert!(matches!(read_embedding_stream(&bytes[..]), Err(Error::Truncated(_))));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = header_bytes(2, 0);
        bytes[0] = b'X';
        assert!(matches!(EmbeddingReader::new(&bytes[..]), Err(Error::Format(_))));
        assert!(matches!(EmbeddingReader::new(&b"NCE"[..]), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_reports_record_index() {
        let mut bytes = header_bytes(2, 0);
        bytes.extend(record_bytes(0, &[1.0, 2.0]));
        bytes.extend(record_bytes(0, &[f32::NAN, 2.0]));
        match read_embedding_stream(&bytes[..]) {
            Err(Error::Record { record, .. }) => assert_eq!(record, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_bound_checked_when_classes_known() {
        let mut bytes = header_bytes(1, 0);
        bytes.extend(record_bytes(7, &[1.0]));
        let mut r = EmbeddingReader::new(&bytes[..]).unwrap().with_num_classes(5);
        assert!(matches!(r.next(), Some(Err(Error::Record { .. }))));
        assert!(r.next().is_none());
    }

    #[test]
    fn huge_declared_count_does_not_preallocate() {
        let bytes = header_bytes(4, u64::MAX);
        let err = read_embedding_stream(&bytes[..]).unwrap_err();
        assert!(matches!(err, Error::Truncated(_)));
    }

    #[test]
    fn writer_rejects_wrong_dim_and_unmet_count() {
        let mut w = EmbeddingWriter::new(Vec::new(), 3, 2).unwrap();
        assert!(matches!(
            w.write_record(0, &[1.0]),
            Err(Error::DimMismatch { expected: 3, actual: 1 })
        ));
        w.write_record(0, &[1.0, 2.0, 3.0]).unwrap();
        assert!(w.finish().is_err());
    }
}
