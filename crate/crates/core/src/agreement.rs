//! Agreement between the linear head and the nearest-class-center rule.
//!
//! The linear decision is `argmax_c <w_c, h> + b_c`. The NCC decision is
//! `argmin_c ‖h − μ_c‖`, evaluated through the expansion
//! `‖h‖² + ‖μ_c‖² − 2<h, μ_c>` with the class-constant `‖h‖²` dropped; in
//! practice we maximise `2<h, μ_c> − ‖μ_c‖²`. Both reduce to dense inner
//! products over (sample batch × class tile) blocks.
//!
//! Only classes with at least one training sample are candidates, on both
//! sides. Scores within a relative gap of the best are ties, and the lowest
//! class id among them wins.

use std::io::Read;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ingest::{ClassifierSet, EmbeddingReader, StatsCheckpoint};
use crate::numeric::{dot, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub linear: u32,
    pub ncc: u32,
    pub linear_tie: bool,
    pub ncc_tie: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementResult {
    pub samples_evaluated: u64,
    pub agreements: u64,
    pub rate: f64,
    pub linear_ties: u64,
    pub ncc_ties: u64,
    /// Classes without training samples, removed from both candidate sets.
    pub excluded_classes: Vec<u32>,
    /// How often each rule matched the ground-truth label.
    pub linear_correct: u64,
    pub ncc_correct: u64,
}

impl AgreementResult {
    fn from_counts(t: &Tally, excluded_classes: Vec<u32>) -> Self {
        Self {
            samples_evaluated: t.samples,
            agreements: t.agreements,
            rate: if t.samples == 0 {
                0.0
            } else {
                t.agreements as f64 / t.samples as f64
            },
            linear_ties: t.linear_ties,
            ncc_ties: t.ncc_ties,
            excluded_classes,
            linear_correct: t.linear_correct,
            ncc_correct: t.ncc_correct,
        }
    }

    pub fn linear_accuracy(&self) -> f64 {
        self.linear_correct as f64 / self.samples_evaluated.max(1) as f64
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    samples: u64,
    agreements: u64,
    linear_ties: u64,
    ncc_ties: u64,
    linear_correct: u64,
    ncc_correct: u64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.samples += o.samples;
        self.agreements += o.agreements;
        self.linear_ties += o.linear_ties;
        self.ncc_ties += o.ncc_ties;
        self.linear_correct += o.linear_correct;
        self.ncc_correct += o.ncc_correct;
    }
}

/// Running argmax with a relative tie band.
///
/// Candidates arrive in increasing class order. `near` holds every candidate
/// within the band of the current best; raising the best only ever shrinks
/// the band from below, so pruning is final.
#[derive(Debug, Clone)]
struct TieArgmax {
    best: f64,
    near: Vec<(u32, f64)>,
}

impl TieArgmax {
    fn new() -> Self {
        Self {
            best: f64::NEG_INFINITY,
            near: Vec::with_capacity(4),
        }
    }

    fn reset(&mut self) {
        self.best = f64::NEG_INFINITY;
        self.near.clear();
    }

    #[inline]
    fn floor(best: f64, eps: f64) -> f64 {
        best - eps * best.abs().max(1.0)
    }

    #[inline]
    fn offer(&mut self, class: u32, score: f64, eps: f64) {
        if score > self.best {
            self.best = score;
            let floor = Self::floor(score, eps);
            self.near.retain(|&(_, s)| s >= floor);
            self.near.push((class, score));
        } else if score >= Self::floor(self.best, eps) {
            self.near.push((class, score));
        }
    }

    fn decision(&self) -> (u32, bool) {
        (self.near[0].0, self.near.len() > 1)
    }
}

/// Precomputed candidate rows for both decision rules.
pub struct AgreementEngine {
    dim: usize,
    num_classes: usize,
    candidates: Vec<u32>,
    excluded: Vec<u32>,
    weights: Vec<f64>,
    biases: Vec<f64>,
    means: Vec<f64>,
    mean_sq: Vec<f64>,
    tile: usize,
    batch: usize,
    eps_tie: f64,
}

impl AgreementEngine {
    pub fn new(stats: &StatsCheckpoint, classifiers: &ClassifierSet, config: &RunConfig) -> Result<Self> {
        if classifiers.dim() != stats.dim() {
            return Err(Error::DimMismatch {
                expected: stats.dim(),
                actual: classifiers.dim(),
            });
        }
        if classifiers.num_classes() != stats.num_classes() {
            return Err(Error::Data(format!(
                "classifier has {} classes, statistics have {}",
                classifiers.num_classes(),
                stats.num_classes()
            )));
        }
        let dim = stats.dim();
        let (mut candidates, mut excluded) = (Vec::new(), Vec::new());
        let (mut weights, mut biases, mut means, mut mean_sq) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for c in 0..stats.num_classes() {
            if stats.count(c) == 0 {
                excluded.push(c as u32);
                continue;
            }
            candidates.push(c as u32);
            weights.extend(classifiers.row(c).iter().map(|&w| w as f64));
            biases.push(classifiers.bias(c) as f64);
            means.extend_from_slice(stats.mean(c));
            mean_sq.push(norm_sq(stats.mean(c)));
        }
        if candidates.is_empty() {
            return Err(Error::Empty("no class has training samples".into()));
        }
        Ok(Self {
            dim,
            num_classes: stats.num_classes(),
            candidates,
            excluded,
            weights,
            biases,
            means,
            mean_sq,
            tile: config.tile,
            batch: config.batch,
            eps_tie: config.eps_tie,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn excluded_classes(&self) -> &[u32] {
        &self.excluded
    }

    /// Decisions for a row-major block of samples.
    pub fn decide_batch(&self, samples: &[f64]) -> Vec<Decision> {
        let d = self.dim;
        let n = samples.len() / d;
        let mut lin = vec![TieArgmax::new(); n];
        let mut ncc = vec![TieArgmax::new(); n];
        lin.iter_mut().chain(ncc.iter_mut()).for_each(TieArgmax::reset);
        let k = self.candidates.len();
        for start in (0..k).step_by(self.tile) {
            let end = (start + self.tile).min(k);
            for (s, h) in samples.chunks_exact(d).enumerate() {
                for c in start..end {
                    let class = self.candidates[c];
                    let w = &self.weights[c * d..(c + 1) * d];
                    let mu = &self.means[c * d..(c + 1) * d];
                    lin[s].offer(class, dot(w, h) + self.biases[c], self.eps_tie);
                    ncc[s].offer(class, 2.0 * dot(mu, h) - self.mean_sq[c], self.eps_tie);
                }
            }
        }
        lin.iter()
            .zip(&ncc)
            .map(|(l, m)| {
                let ((linear, linear_tie), (ncc, ncc_tie)) = (l.decision(), m.decision());
                Decision {
                    linear,
                    ncc,
                    linear_tie,
                    ncc_tie,
                }
            })
            .collect()
    }

    pub fn decide(&self, h: &[f64]) -> Decision {
        self.decide_batch(h)[0]
    }

    fn tally(&self, samples: &[f64], labels: &[u32]) -> Tally {
        let mut t = Tally::default();
        for (dec, &label) in self.decide_batch(samples).iter().zip(labels) {
            t.samples += 1;
            t.agreements += (dec.linear == dec.ncc) as u64;
            t.linear_ties += dec.linear_tie as u64;
            t.ncc_ties += dec.ncc_tie as u64;
            t.linear_correct += (dec.linear == label) as u64;
            t.ncc_correct += (dec.ncc == label) as u64;
        }
        t
    }

    /// Streams an NCEMB1 evaluation set, a group of batches at a time.
    pub fn evaluate<R: Read>(&self, reader: EmbeddingReader<R>) -> Result<AgreementResult> {
        if reader.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: reader.dim(),
            });
        }
        let mut reader = reader.with_num_classes(self.num_classes as u32);
        let group = self.batch * rayon::current_num_threads().max(1) * 4;
        let mut total = Tally::default();
        let mut buf = Vec::with_capacity(self.dim);
        let mut samples: Vec<f64> = Vec::with_capacity(group * self.dim);
        let mut labels: Vec<u32> = Vec::with_capacity(group);
        loop {
            samples.clear();
            labels.clear();
            while labels.len() < group {
                match reader.read_into(&mut buf)? {
                    Some(label) => {
                        labels.push(label);
                        samples.extend(buf.iter().map(|&x| x as f64));
                    }
                    None => break,
                }
            }
            if labels.is_empty() {
                break;
            }
            total.add(&self.tally_parallel(&samples, &labels));
            if labels.len() < group {
                break;
            }
        }
        Ok(AgreementResult::from_counts(&total, self.excluded.clone()))
    }

    /// In-memory variant of [`AgreementEngine::evaluate`].
    pub fn evaluate_samples(&self, samples: &[f64], labels: &[u32]) -> Result<AgreementResult> {
        if samples.len() != labels.len() * self.dim {
            return Err(Error::DimMismatch {
                expected: labels.len() * self.dim,
                actual: samples.len(),
            });
        }
        Ok(AgreementResult::from_counts(
            &self.tally_parallel(samples, labels),
            self.excluded.clone(),
        ))
    }

    fn tally_parallel(&self, samples: &[f64], labels: &[u32]) -> Tally {
        let d = self.dim;
        let parts: Vec<Tally> = samples
            .par_chunks(self.batch * d)
            .zip(labels.par_chunks(self.batch))
            .map(|(s, l)| self.tally(s, l))
            .collect();
        let mut t = Tally::default();
        parts.iter().for_each(|p| t.add(p));
        t
    }
}

pub fn agreement_rate<R: Read>(
    reader: EmbeddingReader<R>,
    stats: &StatsCheckpoint,
    classifiers: &ClassifierSet,
    config: &RunConfig,
) -> Result<AgreementResult> {
    AgreementEngine::new(stats, classifiers, config)?.evaluate(reader)
}
