use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use nc_meter::accumulate::{accumulate_reader, merge_tree, StatsAccumulator};
use nc_meter::agreement::{AgreementEngine, AgreementResult};
use nc_meter::ingest::{
    parse_report, read_classifier, read_run_table, read_stats, write_classifier, write_report, write_stats,
    ClassifierSet, EmbeddingReader, MetricReport, Provenance, StatsCheckpoint,
};
use nc_meter::metrics::compute_report;
use nc_meter::stats::permutation_test;
use nc_meter::synth::{ClassifierMode, Geometry, Synth, SynthSpec};
use nc_meter::RunConfig;

use crate::error::{CliError, Context};
use crate::{
    AccumulateArgs, AgreementArgs, ClassifierArg, GeometryArg, MetricsArgs, OutputFormat, PermtestArgs, ReportArgs,
    SynthArgs, TuningArgs,
};

type Result<T> = std::result::Result<T, CliError>;

const THREADS_ENV: &str = "NC_METER_THREADS";

fn tool_version() -> String {
    format!("nc-meter {}", env!("CARGO_PKG_VERSION"))
}

/// `NC_METER_THREADS` beats `--workers`; `None` leaves rayon's default.
fn resolve_workers(flag: Option<usize>) -> Result<Option<usize>> {
    let workers = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("{THREADS_ENV}={v:?} is not a positive integer")))?,
        ),
        Err(_) => flag,
    };
    if workers == Some(0) {
        return Err(CliError::usage("worker count must be positive"));
    }
    if let Some(n) = workers {
        // Fails only if a pool already exists, which cannot happen in a fresh process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(workers)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(|f| BufReader::with_capacity(1 << 20, f))
        .context(path.display())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).context(path.display())
}

fn sha256(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    io::copy(&mut open(path)?, &mut hasher).context(path.display())?;
    Ok(hex::encode(hasher.finalize()))
}

/// Writes to `out` if given, else to stdout.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(bytes).context(p.display())?;
            w.flush().context(p.display())
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            Ok(stdout.flush()?)
        }
    }
}

fn emit_json(out: Option<&Path>, value: &Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    emit(out, &bytes)
}

fn run_config(t: &TuningArgs) -> Result<RunConfig> {
    let config = RunConfig {
        min_count: t.min_count,
        geometry_min_count: t.geometry_min_count,
        tile: t.tile,
        batch: t.batch,
        eps_direction: t.eps_direction,
        eps_distance_sq: t.eps_distance_sq,
        eps_tie: t.eps_tie,
        eps_cov_mean: t.eps_cov_mean,
        workers: resolve_workers(t.workers)?,
        ..RunConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn provenance(inputs: &[(&str, &Path)], config: &RunConfig) -> Result<Provenance> {
    let mut digests = BTreeMap::new();
    for (role, path) in inputs {
        digests.insert((*role).to_owned(), sha256(path)?);
    }
    Ok(Provenance {
        inputs: digests,
        tool_version: tool_version(),
        config: serde_json::to_value(config)?,
    })
}

fn load_stats(path: &Path) -> Result<StatsCheckpoint> {
    read_stats(open(path)?).context(path.display())
}

fn load_classifier(path: &Path) -> Result<ClassifierSet> {
    read_classifier(open(path)?).context(path.display())
}

fn run_agreement(
    stats: &StatsCheckpoint,
    weights: &ClassifierSet,
    val: &Path,
    config: &RunConfig,
) -> Result<AgreementResult> {
    let engine = AgreementEngine::new(stats, weights, config)?;
    let reader = EmbeddingReader::new(open(val)?).context(val.display())?;
    engine.evaluate(reader).context(val.display())
}

pub fn accumulate(args: AccumulateArgs) -> Result<()> {
    if args.inputs.is_empty() {
        return Err(CliError::usage("accumulate needs at least one --input"));
    }
    resolve_workers(args.workers)?;
    let read_shard = |(i, path): (usize, &PathBuf)| -> Result<StatsAccumulator> {
        let what = format!("shard {i} ({})", path.display());
        let reader = EmbeddingReader::new(open(path).context(&what)?).context(&what)?;
        accumulate_reader(reader, args.num_classes).context(&what)
    };
    let shards: Vec<Result<StatsAccumulator>> = args.inputs.par_iter().enumerate().map(read_shard).collect();
    let shards = shards.into_iter().collect::<Result<Vec<_>>>()?;
    let mut merged = merge_tree(shards)?;
    if let Some(c) = args.num_classes {
        merged = merged.with_num_classes(c)?;
    }
    let checkpoint = merged.to_checkpoint()?;
    let mut w = create(&args.out)?;
    write_stats(&checkpoint, &mut w).context(args.out.display())?;
    w.flush().context(args.out.display())
}

fn report_csv(report: &MetricReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "mean", "cov", "std", "count"])?;
    for (name, s) in &report.metrics {
        let cov = s.cov.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([
            name.clone(),
            s.mean.to_string(),
            cov,
            s.std.to_string(),
            s.count.to_string(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| CliError::from(io::Error::other(e.to_string())))
}

pub fn metrics(args: MetricsArgs) -> Result<()> {
    let config = run_config(&args.tuning)?;
    if args.val.is_some() && args.weights.is_none() {
        return Err(CliError::usage("--val requires --weights"));
    }
    let stats = load_stats(&args.stats)?;
    let weights = args.weights.as_deref().map(load_classifier).transpose()?;
    let agreement = match (&weights, &args.val) {
        (Some(w), Some(v)) => Some(run_agreement(&stats, w, v, &config)?),
        _ => None,
    };

    let mut inputs = vec![("stats", args.stats.as_path())];
    if let Some(w) = &args.weights {
        inputs.push(("weights", w));
    }
    if let Some(v) = &args.val {
        inputs.push(("val", v));
    }
    let prov = provenance(&inputs, &config)?;
    let report = compute_report(&stats, weights.as_ref(), agreement.as_ref(), &config, prov)?;
    let bytes = match args.format {
        OutputFormat::Json => write_report(&report)?,
        OutputFormat::Csv => report_csv(&report)?,
    };
    emit(args.out.as_deref(), &bytes)
}

pub fn agreement(args: AgreementArgs) -> Result<()> {
    let config = run_config(&args.tuning)?;
    let stats = load_stats(&args.stats)?;
    let weights = load_classifier(&args.weights)?;
    let r = run_agreement(&stats, &weights, &args.val, &config)?;
    let prov = provenance(
        &[("stats", &args.stats), ("weights", &args.weights), ("val", &args.val)],
        &config,
    )?;
    let n = r.samples_evaluated.max(1) as f64;
    let out = json!({
        "samples_evaluated": r.samples_evaluated,
        "agreements": r.agreements,
        "rate": r.rate,
        "linear_ties": r.linear_ties,
        "ncc_ties": r.ncc_ties,
        "excluded_classes": r.excluded_classes,
        "linear_accuracy": r.linear_correct as f64 / n,
        "ncc_accuracy": r.ncc_correct as f64 / n,
        "provenance": prov,
    });
    emit_json(args.out.as_deref(), &out)
}

pub fn permtest(args: PermtestArgs) -> Result<()> {
    resolve_workers(args.workers)?;
    let table = read_run_table(open(&args.runs)?).context(args.runs.display())?;
    let x = table.column(&args.metric)?;
    let y = table.column(&args.target)?;
    let o = permutation_test(&x, &y, args.trials, args.seed)?;
    let out = json!({
        "metric": args.metric,
        "target": args.target,
        "runs": table.len(),
        "observed_r2": o.observed_r2,
        "p_value": o.p_value,
        "p_value_unsmoothed": o.p_value_unsmoothed,
        "exceed_count": o.exceed_count,
        "trials": o.trials,
        "seed": o.seed,
        "rng": o.rng,
        "input_sha256": sha256(&args.runs)?,
        "tool_version": tool_version(),
    });
    emit_json(args.out.as_deref(), &out)
}

pub fn synth(args: SynthArgs) -> Result<()> {
    if args.validation_per_class > 0 && args.out_val.is_none() {
        return Err(CliError::usage("--validation-per-class needs --out-val"));
    }
    let spec = SynthSpec {
        num_classes: args.num_classes,
        dim: args.dim,
        samples_per_class: args
            .class_counts
            .clone()
            .unwrap_or_else(|| vec![args.samples_per_class; args.num_classes]),
        geometry: match args.geometry {
            GeometryArg::SimplexEtf => Geometry::SimplexEtf,
            GeometryArg::Orthonormal => Geometry::Orthonormal,
            GeometryArg::UniformSphere => Geometry::UniformSphere,
            GeometryArg::RandomGaussian => Geometry::RandomGaussian,
        },
        noise_sigma: args.noise,
        classifier_mode: match args.classifier {
            ClassifierArg::Tied => ClassifierMode::TiedToMeans,
            ClassifierArg::Random => ClassifierMode::Random,
            ClassifierArg::Perturbed => ClassifierMode::Perturbed(args.perturbation),
        },
        seed: args.seed,
        scale: args.scale,
        validation_per_class: args.validation_per_class,
    };
    let synth = Synth::new(spec.clone())?;

    let w = synth
        .write_train(create(&args.out_emb)?)
        .context(args.out_emb.display())?;
    w.into_inner().map_err(|e| CliError::from(e.into_error()))?;
    if let Some(p) = &args.out_val {
        let w = synth.write_validation(create(p)?).context(p.display())?;
        w.into_inner().map_err(|e| CliError::from(e.into_error()))?;
    }
    let mut w = create(&args.out_wgt)?;
    write_classifier(synth.classifier(), &mut w).context(args.out_wgt.display())?;
    w.flush().context(args.out_wgt.display())?;

    let sheet = json!({
        "spec": spec,
        "truth": synth.truth(),
        "tool_version": tool_version(),
    });
    emit_json(Some(&args.out_truth), &sheet)
}

/// One row per report, one column per metric headline value. Missing metrics
/// leave an empty cell. The first column is the report's file stem.
pub fn report(args: ReportArgs) -> Result<()> {
    if args.inputs.is_empty() {
        return Err(CliError::usage("report needs at least one --input"));
    }
    let mut reports = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let bytes = std::fs::read(path).context(path.display())?;
        let report = parse_report(&bytes).context(path.display())?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        reports.push((id, report));
    }
    let names: BTreeSet<&str> = reports
        .iter()
        .flat_map(|(_, r)| r.metrics.keys().map(String::as_str))
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run_id".to_owned()];
    header.extend(names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (id, r) in &reports {
        let mut row = vec![id.clone()];
        row.extend(
            names
                .iter()
                .map(|n| r.get(n).map(|s| s.mean.to_string()).unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::from(io::Error::other(e.to_string())))?;
    emit(args.out.as_deref(), &bytes)
}
