//! Assembles the metric report from a statistics checkpoint, and optionally a
//! classifier and an agreement result.
//!
//! Entries named `*_cov` carry a coefficient of variation as their mean. They
//! are left out when the guard nulls the ratio; the base entry still reports
//! `cov: null` alongside its raw `std`.

use crate::accumulate::global_mean;
use crate::agreement::AgreementResult;
use crate::config::RunConfig;
use crate::duality::duality_profile;
use crate::error::Result;
use crate::ingest::{ClassifierSet, MetricReport, MetricStat, MinCount, Provenance, StatsCheckpoint};
use crate::numeric::Summary;
use crate::pairwise::{build_geometry, cdnv_summary, norm_summary, unit_pair_summaries};

fn stat(s: &Summary, eps: f64) -> MetricStat {
    MetricStat {
        mean: s.mean,
        cov: s.cov(eps),
        std: s.std(),
        count: s.count,
    }
}

fn count(n: usize) -> MetricStat {
    MetricStat::scalar(n as f64, n as u64)
}

fn insert_cov(report: &mut MetricReport, name: &str, cov: Option<f64>, count: u64) {
    if let Some(v) = cov {
        report.insert(name, MetricStat::scalar(v, count));
    }
}

pub fn compute_report(
    stats: &StatsCheckpoint,
    classifiers: Option<&ClassifierSet>,
    agreement: Option<&AgreementResult>,
    config: &RunConfig,
    provenance: Provenance,
) -> Result<MetricReport> {
    config.validate()?;
    let eps = config.eps_cov_mean;
    let mut report = MetricReport::new(
        stats.num_classes() as u64,
        stats.dim() as u64,
        MinCount {
            geometry: config.geometry_min_count,
            variance: config.min_count,
        },
        provenance,
    );

    let gm = global_mean(stats)?;
    let geom = build_geometry(stats, &gm, config.geometry_min_count, config.eps_direction)?;
    report.included_classes = geom.len() as u64;
    report.insert(
        "excluded_geometry_classes",
        count(geom.dropped_low_count.len() + geom.dropped_zero_norm.len()),
    );

    let cdnv = cdnv_summary(stats, &gm, config.min_count, config)?;
    report.insert("cdnv", stat(&cdnv.cdnv, eps));
    report.insert("cdnv_log10", stat(&cdnv.cdnv_log10, eps));
    report.insert(
        "cdnv_degenerate_pairs",
        MetricStat::scalar(cdnv.coincident_pairs as f64, cdnv.coincident_pairs),
    );
    report.insert(
        "cdnv_zero_pairs",
        MetricStat::scalar(cdnv.zero_pairs as f64, cdnv.zero_pairs),
    );
    let below = (0..stats.num_classes())
        .filter(|&c| stats.count(c) < config.min_count.max(2))
        .count();
    report.insert("excluded_variance_classes", count(below));

    let norms = norm_summary(&geom, eps);
    report.insert("norm", stat(&norms.norms, eps));
    insert_cov(&mut report, "log_norm_cov", norms.log_norm_cov, norms.log_norms.count);

    let (inter, kernel) = unit_pair_summaries(&geom, config);
    report.insert("interference", stat(&inter.summary, eps));
    insert_cov(
        &mut report,
        "interference_cov",
        inter.summary.cov(eps),
        inter.summary.count,
    );
    report.insert(
        "interference_etf_gap",
        MetricStat::scalar(inter.etf_gap, inter.summary.count),
    );
    report.insert("log_inv_dist", stat(&kernel.summary, eps));
    insert_cov(
        &mut report,
        "log_inv_dist_cov",
        kernel.summary.cov(eps),
        kernel.summary.count,
    );
    report.insert(
        "log_inv_dist_degenerate_pairs",
        MetricStat::scalar(kernel.coincident_pairs as f64, kernel.coincident_pairs),
    );

    if let Some(w) = classifiers {
        let dual = duality_profile(&geom, w, config.eps_direction)?;
        let s = &dual.similarity_summary;
        report.insert("self_duality", stat(s, eps));
        insert_cov(&mut report, "self_duality_cov", s.cov(eps), s.count);
        report.insert("duality_distance", stat(&dual.distance_summary, eps));
        report.insert("duality_zero_weight_classes", count(dual.zero_weight_classes.len()));
    }

    if let Some(a) = agreement {
        report.insert("nc4_agreement", MetricStat::scalar(a.rate, a.samples_evaluated));
        report.insert(
            "nc4_linear_ties",
            MetricStat::scalar(a.linear_ties as f64, a.linear_ties),
        );
        report.insert("nc4_ncc_ties", MetricStat::scalar(a.ncc_ties as f64, a.ncc_ties));
        report.insert("nc4_excluded_classes", count(a.excluded_classes.len()));
        report.insert(
            "linear_accuracy",
            MetricStat::scalar(a.linear_accuracy(), a.samples_evaluated),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accumulate::accumulate_reader;
    use crate::ingest::EmbeddingReader;
    use crate::synth::{Geometry, Synth, SynthSpec};

    fn provenance() -> Provenance {
        Provenance {
            inputs: Default::default(),
            tool_version: "test".into(),
            config: serde_json::Value::Null,
        }
    }

    fn etf_stats(c: usize, d: usize, noise: f64) -> (Synth, StatsCheckpoint) {
        let synth = Synth::new(SynthSpec::balanced(c, d, 4, Geometry::SimplexEtf, noise, 1)).unwrap();
        let bytes = synth.train_bytes();
        let acc = accumulate_reader(EmbeddingReader::new(&bytes[..]).unwrap(), Some(c)).unwrap();
        (synth, acc.to_checkpoint().unwrap())
    }

    #[test]
    fn etf_report_with_weights() {
        let (synth, stats) = etf_stats(6, 8, 0.0);
        let r = compute_report(
            &stats,
            Some(synth.classifier()),
            None,
            &RunConfig::default(),
            provenance(),
        )
        .unwrap();
        assert!((r.get("interference").unwrap().mean + 0.2).abs() < 1e-12);
        assert_eq!(r.get("self_duality").unwrap().mean, 1.0);
        assert_eq!(r.get("cdnv").unwrap().mean, 0.0);
        assert_eq!(r.get("cdnv_zero_pairs").unwrap().count, 15);
        assert_eq!(r.get("cdnv_log10").unwrap().count, 0);
        assert_eq!(r.included_classes, 6);
    }

    #[test]
    fn duality_keys_absent_without_weights() {
        let (_, stats) = etf_stats(4, 5, 0.1);
        let r = compute_report(&stats, None, None, &RunConfig::default(), provenance()).unwrap();
        assert!(r.metrics.keys().all(|k| !k.contains("duality")));
        assert!(r.get("cdnv").unwrap().mean > 0.0);
    }
}
