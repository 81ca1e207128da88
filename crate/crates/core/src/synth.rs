//! Synthetic class geometries with known metric values.
//!
//! Samples are `μ_c + N(0, σ² I_d)`, stored as `f32`. The simplex ETF for
//! `C <= d` uses the integer vectors `C·e_c − 1`, which are exact in `f32`, so
//! noiseless data reproduce the ETF to the last bit after a round trip through
//! NCEMB1. For `C = d + 1` the ETF lives in the `C − 1` dimensional subspace
//! orthogonal to the all-ones vector and is written in the Helmert basis
//! `b_k = (1, …, 1, −k, 0, …) / sqrt(k(k+1))`; those coordinates are irrational
//! and pick up `f32` rounding.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ClassifierSet, EmbeddingWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    SimplexEtf,
    Orthonormal,
    UniformSphere,
    RandomGaussian,
}

impl std::str::FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplex_etf" | "etf" => Ok(Geometry::SimplexEtf),
            "orthonormal" => Ok(Geometry::Orthonormal),
            "uniform_sphere" => Ok(Geometry::UniformSphere),
            "random_gaussian" => Ok(Geometry::RandomGaussian),
            other => Err(Error::Usage(format!("unknown geometry {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    /// `w_c = μ_c − μ̄`.
    TiedToMeans,
    /// Independent standard normal rows.
    Random,
    /// Tied rows plus Gaussian noise of relative size `ε`.
    Perturbed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub dim: usize,
    /// One entry per class; zeros are allowed.
    pub samples_per_class: Vec<u64>,
    pub geometry: Geometry,
    pub noise_sigma: f64,
    pub classifier_mode: ClassifierMode,
    pub seed: u64,
    /// Multiplier applied to the base geometry.
    pub scale: f64,
    /// Samples per class in the held-out stream.
    pub validation_per_class: u64,
}

impl SynthSpec {
    pub fn balanced(
        num_classes: usize,
        dim: usize,
        per_class: u64,
        geometry: Geometry,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            num_classes,
            dim,
            samples_per_class: vec![per_class; num_classes],
            geometry,
            noise_sigma,
            classifier_mode: ClassifierMode::TiedToMeans,
            seed,
            scale: 1.0,
            validation_per_class: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, d) = (self.num_classes, self.dim);
        if c < 2 || d == 0 {
            return Err(Error::Usage("need at least 2 classes and dim >= 1".into()));
        }
        if self.samples_per_class.len() != c {
            return Err(Error::Usage(format!(
                "samples_per_class has {} entries for {c} classes",
                self.samples_per_class.len()
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Usage("noise_sigma must be finite and >= 0".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Usage("scale must be positive".into()));
        }
        if let ClassifierMode::Perturbed(eps) = self.classifier_mode {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::Usage("perturbation must be finite and >= 0".into()));
            }
        }
        match self.geometry {
            Geometry::SimplexEtf if c > d + 1 => Err(Error::Usage(format!(
                "a simplex ETF of {c} classes needs dim >= {}",
                c - 1
            ))),
            Geometry::Orthonormal if c > d => Err(Error::Usage(format!("{c} orthonormal classes need dim >= {c}"))),
            _ => Ok(()),
        }
    }
}

/// Closed-form expectations for a generated instance. `None` where no closed
/// form applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub num_classes: usize,
    pub dim: usize,
    pub geometry: Geometry,
    pub noise_sigma: f64,
    pub samples_per_class: Vec<u64>,
    /// Largest over smallest nonzero class count.
    pub imbalance_ratio: f64,
    /// `-1/(C-1)` when centered directions form a simplex ETF.
    pub interference: Option<f64>,
    /// Zero when all centered means share one norm.
    pub equinorm_cov: Option<f64>,
    /// Average over pairs of `σ² d / ‖μ_c − μ_c'‖²` among classes with two or
    /// more samples.
    pub cdnv: Option<f64>,
    pub self_duality: Option<f64>,
    /// Noiseless-limit agreement for tied classifiers over equal-norm means.
    pub agreement: Option<f64>,
}

/// A generated instance: true class means, classifier and ground truth.
/// Sample streams are written on demand.
#[derive(Debug, Clone)]
pub struct Synth {
    spec: SynthSpec,
    means: Vec<f64>,
    classifier: ClassifierSet,
    truth: GroundTruth,
}

const STREAM_MEANS: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_CLASSIFIER: u64 = 2;
const STREAM_VALIDATION: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Row-major `C × d` simplex ETF with every vector of norm `sqrt(C(C−1))`.
pub fn simplex_etf(num_classes: usize, dim: usize) -> Vec<f64> {
    let c = num_classes;
    assert!(c >= 2 && c <= dim + 1);
    let mut out = vec![0.0; c * dim];
    if c <= dim {
        for class in 0..c {
            let row = &mut out[class * dim..(class + 1) * dim];
            row[..c].iter_mut().for_each(|x| *x = -1.0);
            row[class] = (c - 1) as f64;
        }
    } else {
        // Coordinate k-1 of class j is C * b_k[j].
        for class in 0..c {
            let row = &mut out[class * dim..(class + 1) * dim];
            for k in 1..c {
                let norm = ((k * (k + 1)) as f64).sqrt();
                row[k - 1] = match class.cmp(&k) {
                    std::cmp::Ordering::Less => c as f64 / norm,
                    std::cmp::Ordering::Equal => -((c * k) as f64) / norm,
                    std::cmp::Ordering::Greater => 0.0,
                };
            }
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Synth {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        spec.validate()?;
        let (c, d) = (spec.num_classes, spec.dim);
        let mut rng = rng_for(spec.seed, STREAM_MEANS);
        let mut means = match spec.geometry {
            Geometry::SimplexEtf => simplex_etf(c, d),
            Geometry::Orthonormal => {
                let mut m = vec![0.0; c * d];
                (0..c).for_each(|i| m[i * d + i] = 1.0);
                m
            }
            Geometry::UniformSphere => {
                let mut m = Vec::with_capacity(c * d);
                for _ in 0..c {
                    let mut v: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|x| *x /= n);
                    m.extend(v);
                }
                m
            }
            Geometry::RandomGaussian => (0..c * d).map(|_| normal(&mut rng)).collect(),
        };
        means.iter_mut().for_each(|x| *x *= spec.scale);

        let mut center = vec![0.0; d];
        for row in means.chunks_exact(d) {
            center.iter_mut().zip(row).for_each(|(s, x)| *s += x);
        }
        center.iter_mut().for_each(|s| *s /= c as f64);

        let mut rng = rng_for(spec.seed, STREAM_CLASSIFIER);
        let mut weights = Vec::with_capacity(c * d);
        for row in means.chunks_exact(d) {
            let tied: Vec<f64> = row.iter().zip(&center).map(|(m, g)| m - g).collect();
            match spec.classifier_mode {
                ClassifierMode::TiedToMeans => weights.extend(tied.iter().map(|&x| x as f32)),
                ClassifierMode::Random => weights.extend((0..d).map(|_| normal(&mut rng) as f32)),
                ClassifierMode::Perturbed(eps) => {
                    let n = tied.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let s = eps * n / (d as f64).sqrt();
                    weights.extend(tied.iter().map(|&x| (x + s * normal(&mut rng)) as f32));
                }
            }
        }
        let classifier = ClassifierSet::new(c, d, weights, None)?;
        let truth = Self::ground_truth(&spec, &means);
        Ok(Self {
            spec,
            means,
            classifier,
            truth,
        })
    }

    fn ground_truth(spec: &SynthSpec, means: &[f64]) -> GroundTruth {
        let (c, d) = (spec.num_classes, spec.dim);
        let etf_like = matches!(spec.geometry, Geometry::SimplexEtf | Geometry::Orthonormal);
        let equal_norm = etf_like || spec.geometry == Geometry::UniformSphere;
        let counts = &spec.samples_per_class;
        let nonzero: Vec<u64> = counts.iter().copied().filter(|&n| n > 0).collect();
        let imbalance_ratio = match (nonzero.iter().max(), nonzero.iter().min()) {
            (Some(&hi), Some(&lo)) => hi as f64 / lo as f64,
            _ => 0.0,
        };

        let var = spec.noise_sigma * spec.noise_sigma * d as f64;
        let eligible: Vec<usize> = (0..c).filter(|&i| counts[i] >= 2).collect();
        let mut total = 0.0;
        let mut pairs = 0u64;
        for (a, &i) in eligible.iter().enumerate() {
            for &j in &eligible[a + 1..] {
                total += var / sq_dist(&means[i * d..(i + 1) * d], &means[j * d..(j + 1) * d]);
                pairs += 1;
            }
        }
        let tied = spec.classifier_mode == ClassifierMode::TiedToMeans;
        GroundTruth {
            num_classes: c,
            dim: d,
            geometry: spec.geometry,
            noise_sigma: spec.noise_sigma,
            samples_per_class: counts.clone(),
            imbalance_ratio,
            interference: etf_like.then(|| -1.0 / (c as f64 - 1.0)),
            equinorm_cov: etf_like.then_some(0.0),
            cdnv: (pairs > 0).then(|| total / pairs as f64),
            self_duality: tied.then_some(1.0),
            agreement: (tied && equal_norm).then_some(1.0),
        }
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    /// True class means, row-major `C × d`.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn classifier(&self) -> &ClassifierSet {
        &self.classifier
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// Writes `per_class[c]` noisy draws around each mean, interleaving
    /// classes round-robin. `stream` selects an independent random substream.
    pub fn write_samples<W: Write>(&self, sink: W, per_class: &[u64], noise_sigma: f64, stream: u64) -> Result<W> {
        let d = self.spec.dim;
        if per_class.len() != self.spec.num_classes {
            return Err(Error::Usage("per_class must have one entry per class".into()));
        }
        let total: u64 = per_class.iter().sum();
        let mut w = EmbeddingWriter::new(sink, d, total)?;
        let mut rng = rng_for(self.spec.seed, stream);
        let rounds = per_class.iter().copied().max().unwrap_or(0);
        let mut buf = vec![0f32; d];
        for r in 0..rounds {
            for (class, &n) in per_class.iter().enumerate() {
                if r >= n {
                    continue;
                }
                let mu = &self.means[class * d..(class + 1) * d];
                for (b, &m) in buf.iter_mut().zip(mu) {
                    let noise = if noise_sigma > 0.0 {
                        noise_sigma * normal(&mut rng)
                    } else {
                        0.0
                    };
                    *b = (m + noise) as f32;
                }
                w.write_record(class as u32, &buf)?;
            }
        }
        w.finish()
    }

    pub fn write_train<W: Write>(&self, sink: W) -> Result<W> {
        self.write_samples(sink, &self.spec.samples_per_class, self.spec.noise_sigma, STREAM_TRAIN)
    }

    pub fn write_validation<W: Write>(&self, sink: W) -> Result<W> {
        let per_class = vec![self.spec.validation_per_class; self.spec.num_classes];
        self.write_samples(sink, &per_class, self.spec.noise_sigma, STREAM_VALIDATION)
    }

    pub fn train_bytes(&self) -> Vec<u8> {
        self.write_train(Vec::new()).expect("writing to a Vec cannot fail")
    }

    pub fn validation_bytes(&self) -> Vec<u8> {
        self.write_validation(Vec::new()).expect("writing to a Vec cannot fail")
    }
}

/// Everything a generated instance produces, serialized.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub train: Vec<u8>,
    pub validation: Option<Vec<u8>>,
    pub classifier: Vec<u8>,
    pub truth: GroundTruth,
}

pub fn generate(spec: SynthSpec) -> Result<SynthOutput> {
    let synth = Synth::new(spec)?;
    Ok(SynthOutput {
        train: synth.train_bytes(),
        validation: (synth.spec.validation_per_class > 0).then(|| synth.validation_bytes()),
        classifier: crate::ingest::classifier_to_bytes(&synth.classifier),
        truth: synth.truth.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::read_embedding_stream;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / (na * nb)
    }

    #[test]
    fn etf_cosines() {
        for (c, d) in [(4, 8), (5, 4), (10, 10), (33, 32)] {
            let m = simplex_etf(c, d);
            for i in 0..c {
                for j in (i + 1)..c {
                    let cos = cosine(&m[i * d..(i + 1) * d], &m[j * d..(j + 1) * d]);
                    assert!((cos + 1.0 / (c as f64 - 1.0)).abs() < 1e-9, "C={c} d={d}");
                }
            }
            let n0: f64 = m[..d].iter().map(|x| x * x).sum();
            assert!((n0 - (c * (c - 1)) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn spec_conflicts_rejected() {
        assert!(Synth::new(SynthSpec::balanced(6, 4, 1, Geometry::SimplexEtf, 0.0, 0)).is_err());
        assert!(Synth::new(SynthSpec::balanced(5, 4, 1, Geometry::Orthonormal, 0.0, 0)).is_err());
        let mut s = SynthSpec::balanced(3, 4, 1, Geometry::Orthonormal, 0.0, 0);
        s.samples_per_class.pop();
        assert!(Synth::new(s).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SynthSpec::balanced(5, 3, 7, Geometry::RandomGaussian, 0.3, 11);
        let a = generate(spec.clone()).unwrap();
        let b = generate(spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.classifier, b.classifier);
    }

    #[test]
    fn imbalanced_counts_and_order() {
        let mut spec = SynthSpec::balanced(2, 2, 0, Geometry::Orthonormal, 0.1, 3);
        spec.samples_per_class = vec![3, 1];
        let out = generate(spec).unwrap();
        let (_, recs) = read_embedding_stream(&out.train[..]).unwrap();
        let labels: Vec<u32> = recs.iter().map(|r| r.label).collect();
        assert_eq!(labels, vec![0, 1, 0, 0]);
        assert_eq!(out.truth.imbalance_ratio, 3.0);
    }

    #[test]
    fn noiseless_etf_samples_are_exact() {
        let spec = SynthSpec::balanced(4, 8, 2, Geometry::SimplexEtf, 0.0, 0);
        let synth = Synth::new(spec).unwrap();
        let (_, recs) = read_embedding_stream(&synth.train_bytes()[..]).unwrap();
        for r in recs {
            let mu = &synth.means()[r.label as usize * 8..][..8];
            assert!(r.vector.iter().zip(mu).all(|(&a, &b)| a as f64 == b));
        }
        assert_eq!(synth.truth().cdnv, Some(0.0));
        assert_eq!(synth.truth().interference, Some(-1.0 / 3.0));
    }
}
