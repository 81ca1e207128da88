//! Alignment between classifier rows and their own centered class means.

use crate::error::{Error, Result};
use crate::ingest::ClassifierSet;
use crate::numeric::{dot, norm_sq, Summary};
use crate::pairwise::CenteredGeometry;

/// Per-class self-duality for every class that has both a direction and a
/// nonzero classifier row.
#[derive(Debug, Clone)]
pub struct DualityProfile {
    pub class_ids: Vec<u32>,
    /// Cosine between `w_c` and `μ_c − μ̄`, in `[-1, 1]`.
    pub similarity: Vec<f64>,
    /// `‖w_c/‖w_c‖ − (μ_c − μ̄)/‖μ_c − μ̄‖‖`, in `[0, 2]`.
    pub distance: Vec<f64>,
    /// Included classes whose classifier row has (near) zero norm.
    pub zero_weight_classes: Vec<u32>,
    pub similarity_summary: Summary,
    pub distance_summary: Summary,
}

pub fn duality_profile(
    geom: &CenteredGeometry,
    classifiers: &ClassifierSet,
    eps_direction: f64,
) -> Result<DualityProfile> {
    if classifiers.num_classes() != geom.num_classes() {
        return Err(Error::Data(format!(
            "classifier has {} classes, statistics have {}",
            classifiers.num_classes(),
            geom.num_classes()
        )));
    }
    if classifiers.dim() != geom.dim() {
        return Err(Error::DimMismatch {
            expected: geom.dim(),
            actual: classifiers.dim(),
        });
    }
    let mut profile = DualityProfile {
        class_ids: Vec::new(),
        similarity: Vec::new(),
        distance: Vec::new(),
        zero_weight_classes: Vec::new(),
        similarity_summary: Summary::empty(),
        distance_summary: Summary::empty(),
    };
    let mut w = vec![0.0; geom.dim()];
    for (i, &c) in geom.class_ids().iter().enumerate() {
        for (dst, &src) in w.iter_mut().zip(classifiers.row(c as usize)) {
            *dst = src as f64;
        }
        let wn = norm_sq(&w).sqrt();
        if wn <= eps_direction {
            profile.zero_weight_classes.push(c);
            continue;
        }
        w.iter_mut().for_each(|x| *x /= wn);
        let u = geom.unit(i);
        let s = dot(&w, u).clamp(-1.0, 1.0);
        let delta = w.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        profile.class_ids.push(c);
        profile.similarity.push(s);
        profile.distance.push(delta);
    }
    profile.similarity_summary = Summary::from_values(&profile.similarity);
    profile.distance_summary = Summary::from_values(&profile.distance);
    Ok(profile)
}
