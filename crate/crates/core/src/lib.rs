//! Neural-collapse measurements over streamed embeddings.
//!
//! The pipeline is: read labelled embedding vectors ([`ingest`]), fold them into
//! per-class Welford statistics ([`accumulate`]), then compute pairwise class
//! geometry ([`pairwise`]), classifier/mean alignment ([`duality`]) and
//! linear-vs-nearest-center agreement ([`agreement`]). [`metrics`] assembles the
//! JSON report, [`stats`] runs cross-run permutation tests, and [`synth`]
//! generates instances whose metric values are known in closed form.

pub mod accumulate;
pub mod agreement;
pub mod config;
pub mod duality;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod numeric;
pub mod pairwise;
pub mod stats;
pub mod synth;

pub use config::RunConfig;
pub use error::{Error, Result};
