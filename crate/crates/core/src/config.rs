use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every tunable threshold used by the measurement pipeline. The resolved
/// value is echoed into each report so results can be traced to settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Minimum class count for variance-based metrics (CDNV). At least 2.
    pub min_count: u64,
    /// Minimum class count for a class mean to enter geometry metrics. At least 1.
    pub geometry_min_count: u64,
    /// Edge length, in classes, of one pairwise tile.
    pub tile: usize,
    /// Samples per agreement batch.
    pub batch: usize,
    /// Centered class means with norm at or below this have no direction.
    pub eps_direction: f64,
    /// Squared distances at or below this are treated as coincident.
    pub eps_distance_sq: f64,
    /// Relative score gap under which two classes count as tied.
    pub eps_tie: f64,
    /// `|mean|` below which a coefficient of variation is reported as null.
    pub eps_cov_mean: f64,
    pub workers: Option<usize>,
    pub seed: u64,
    pub trials: u64,
    /// Natural log inside norm and kernel quantities; base 10 for the
    /// logarithmic CDNV entry.
    pub log_base_geometry: String,
    pub log_base_cdnv: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            min_count: 2,
            geometry_min_count: 1,
            tile: 1024,
            batch: 256,
            eps_direction: 1e-12,
            eps_distance_sq: 1e-24,
            eps_tie: 1e-6,
            eps_cov_mean: 1e-9,
            workers: None,
            seed: 0,
            trials: 10_000,
            log_base_geometry: "e".into(),
            log_base_cdnv: "10".into(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let eps = [
            ("eps_direction", self.eps_direction),
            ("eps_distance_sq", self.eps_distance_sq),
            ("eps_tie", self.eps_tie),
            ("eps_cov_mean", self.eps_cov_mean),
        ];
        for (name, v) in eps {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Usage(format!("{name} must be positive, got {v}")));
            }
        }
        if self.min_count < 2 {
            return Err(Error::Usage(
                "min_count must be at least 2 (variance needs two samples)".into(),
            ));
        }
        if self.geometry_min_count < 1 {
            return Err(Error::Usage("geometry_min_count must be at least 1".into()));
        }
        if self.tile == 0 || self.batch == 0 {
            return Err(Error::Usage("tile and batch must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Usage("workers must be positive".into()));
        }
        Ok(())
    }
}
