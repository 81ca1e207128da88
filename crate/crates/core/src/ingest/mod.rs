//! On-disk formats.
//!
//! All three binary formats share the same shape: an 8-byte magic (six ASCII
//! characters followed by two zero bytes), a little-endian header, then a
//! little-endian payload. Nothing is compressed and nothing is aligned beyond
//! what the header layout gives for free.
//!
//! | format | magic      | payload                                          |
//! |--------|------------|--------------------------------------------------|
//! | NCEMB1 | `NCEMB1\0\0` | `u32 label` + `dim × f32` per record             |
//! | NCWGT1 | `NCWGT1\0\0` | `C × d` row-major `f32`, then optional `C × f32` |
//! | NCSTA1 | `NCSTA1\0\0` | per class `u64 count`, `d × f64` mean, `f64 m2`  |
//!
//! Labels are 0-based. A vocabulary written as `1..=V` upstream must be
//! shifted to `0..V` before it reaches these files.

mod checkpoint;
mod classifier;
mod embedding;
mod report;
mod runtable;

use std::io::{self, Read};

pub use checkpoint::{read_stats, stats_to_bytes, write_stats, StatsCheckpoint, STATS_MAGIC};
pub use classifier::{classifier_to_bytes, read_classifier, write_classifier, ClassifierSet, CLASSIFIER_MAGIC};
pub use embedding::{
    read_embedding_stream, write_embedding_stream, EmbeddingHeader, EmbeddingReader, EmbeddingRecord, EmbeddingWriter,
    EMBEDDING_MAGIC,
};
pub use report::{parse_report, write_report, MetricReport, MetricStat, MinCount, Provenance};
pub use runtable::{read_run_table, write_run_table, RunTable};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Reads until `buf` is full or the source is exhausted; returns bytes read.
fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    let got = read_fully(r, buf)?;
    if got < buf.len() {
        return Err(Error::Truncated(format!(
            "{what}: expected {} bytes, found {got}",
            buf.len()
        )));
    }
    Ok(())
}

fn read_magic<R: Read>(r: &mut R, magic: &[u8; 8], name: &str) -> Result<()> {
    let mut buf = [0u8; 8];
    let got = read_fully(r, &mut buf)?;
    if got < 8 || &buf != magic {
        return Err(Error::Format(format!("bad magic: not an {name} file")));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_or(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn check_version(version: u32, name: &str) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("{name}: unsupported version {version}")));
    }
    Ok(())
}

/// Errors if anything follows the expected payload.
fn expect_eof<R: Read>(r: &mut R, name: &str) -> Result<()> {
    let mut probe = [0u8; 1];
    if read_fully(r, &mut probe)? != 0 {
        return Err(Error::Format(format!(
            "{name}: size mismatch, trailing bytes after payload"
        )));
    }
    Ok(())
}
