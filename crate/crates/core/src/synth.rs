//! Synthetic labeled point clouds on the unit hypersphere.
//!
//! Classes are von Mises-Fisher clusters around uniformly drawn centroids;
//! labels are then corrupted either symmetrically or toward geometrically
//! confusable classes. Latent labels are always retained.

use serde::{Deserialize, Serialize};

use crate::batch::{EmbeddingBatch, LabeledBatch};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::noise::NoiseSpec;
use crate::numerics::l2_normalize_in_place;
use crate::rng::SeededRng;

pub const DEFAULT_CONFUSABLE_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMechanism {
    /// Mislabels go to a uniform other class.
    Symmetric,
    /// Mislabels go to classes with similar centroids (softmax over centroid
    /// cosine similarity at the configured temperature).
    ConfusableBySimilarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDatasetSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Within-class vMF concentration κ > 0.
    pub concentration: f64,
    pub centroid_seed: u64,
    pub sample_seed: u64,
    pub noise_seed: u64,
    pub noise: NoiseSpec,
    pub noise_mechanism: NoiseMechanism,
    #[serde(default = "default_confusable_temperature")]
    pub confusable_temperature: f64,
    /// Similarity temperature attached to the generated embeddings.
    #[serde(default = "default_embedding_temperature")]
    pub temperature: f64,
}

fn default_confusable_temperature() -> f64 {
    DEFAULT_CONFUSABLE_TEMPERATURE
}

fn default_embedding_temperature() -> f64 {
    0.5
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "need dimension at least 2, got {}",
                self.dim
            )));
        }
        if self.samples_per_class < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 samples per class, got {}",
                self.samples_per_class
            )));
        }
        if !(self.concentration > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "concentration must be positive, got {}",
                self.concentration
            )));
        }
        if !(self.confusable_temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "confusable temperature must be positive, got {}",
                self.confusable_temperature
            )));
        }
        if self.noise.num_classes != self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "noise spec has {} classes but dataset has {}",
                self.noise.num_classes, self.num_classes
            )));
        }
        self.noise.validate()
    }
}

/// Generated batch plus the class centroids used to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub batch: LabeledBatch,
    pub centroids: Matrix,
}

// --- elementary samplers -------------------------------------------------

/// Marsaglia-Tsang gamma sampler; the shape < 1 case is boosted through
/// Gamma(a) = Gamma(a+1) · U^{1/a}.
fn sample_gamma(rng: &mut SeededRng, shape: f64) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let u: f64 = loop {
            let u = rng.uniform();
            if u > 0.0 {
                break u;
            }
        };
        return sample_gamma(rng, shape + 1.0) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.standard_normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.uniform();
        if u < 1.0 - 0.0331 * x.powi(4) {
            return d * v;
        }
        if u > 0.0 && u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

fn sample_beta(rng: &mut SeededRng, a: f64, b: f64) -> f64 {
    let x = sample_gamma(rng, a);
    let y = sample_gamma(rng, b);
    x / (x + y)
}

/// Uniform direction on the sphere via normalized Gaussians.
fn sample_uniform_direction(rng: &mut SeededRng, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        if l2_normalize_in_place(&mut v).is_ok() {
            return v;
        }
    }
}

/// von Mises-Fisher sample around `mean` with concentration κ, using the
/// standard rejection scheme for the radial component `w` and a uniform
/// tangent direction.
pub fn sample_vmf(rng: &mut SeededRng, mean: &[f64], kappa: f64) -> Vec<f64> {
    let dim = mean.len();
    debug_assert!(dim >= 2);
    debug_assert!(kappa > 0.0);
    let p = dim as f64;
    let b = (-2.0 * kappa + (4.0 * kappa * kappa + (p - 1.0) * (p - 1.0)).sqrt()) / (p - 1.0);
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + (p - 1.0) * (1.0 - x0 * x0).ln();
    let w = loop {
        let z = sample_beta(rng, (p - 1.0) / 2.0, (p - 1.0) / 2.0);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = loop {
            let u = rng.uniform();
            if u > 0.0 {
                break u;
            }
        };
        if kappa * w + (p - 1.0) * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w;
        }
    };
    // Tangent direction orthogonal to the mean.
    let tangent = loop {
        let z = sample_uniform_direction(rng, dim);
        let radial = dot(&z, mean);
        let mut t: Vec<f64> = z
            .iter()
            .zip(mean)
            .map(|(zi, mi)| zi - radial * mi)
            .collect();
        if l2_normalize_in_place(&mut t).is_ok() {
            break t;
        }
    };
    let sin_part = (1.0 - w * w).max(0.0).sqrt();
    let mut out: Vec<f64> = mean
        .iter()
        .zip(&tangent)
        .map(|(mi, ti)| w * mi + sin_part * ti)
        .collect();
    // Rounding drift is well below 1e-12, but keep rows exactly unit.
    l2_normalize_in_place(&mut out).expect("vMF sample has unit scale");
    out
}

// --- dataset generation ---------------------------------------------------

/// Draws centroids and per-class vMF samples. Latent labels equal assigned
/// labels until a corruption pass runs. Per-class sampling uses independent
/// RNG streams merged in class order.
pub fn generate(spec: &SyntheticDatasetSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut centroid_rng = SeededRng::new(spec.centroid_seed, 0);
    let centroid_rows: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| sample_uniform_direction(&mut centroid_rng, spec.dim))
        .collect();
    let centroids = Matrix::from_rows(&centroid_rows);

    let mut rows = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    let mut labels = Vec::with_capacity(rows.capacity());
    for class in 0..spec.num_classes {
        let mut rng = SeededRng::new(spec.sample_seed, class as u64);
        for _ in 0..spec.samples_per_class {
            rows.push(sample_vmf(&mut rng, &centroid_rows[class], spec.concentration));
            labels.push(class as u32);
        }
    }
    let embeddings = EmbeddingBatch::new(Matrix::from_rows(&rows), spec.temperature)?;
    let batch = LabeledBatch::new(embeddings, labels.clone(), Some(labels))?;
    Ok(SyntheticDataset { batch, centroids })
}

/// Flips each assigned label with probability τ to a uniformly chosen other
/// class. Latent labels are untouched.
pub fn inject_symmetric_noise(
    batch: &LabeledBatch,
    noise: &NoiseSpec,
    rng: &mut SeededRng,
) -> Result<LabeledBatch> {
    noise.validate()?;
    batch.latent_required()?;
    let c = noise.num_classes as u64;
    let mut assigned = batch.assigned().to_vec();
    for label in &mut assigned {
        if noise.error_rate > 0.0 && rng.uniform() < noise.error_rate {
            // One uniform per flip, matching the confusable injector's
            // consumption so the two mechanisms stay stream-aligned.
            let offset = 1 + (rng.uniform() * (c - 1) as f64) as u64;
            *label = ((*label as u64 + offset.min(c - 1)) % c) as u32;
        }
    }
    batch.with_assigned(assigned)
}

/// Flips each assigned label with probability τ; the destination class is
/// drawn proportionally to `exp(centroid_similarity / temperature)` over the
/// other classes, so errors concentrate on genuinely nearby classes. With
/// two classes this reduces exactly to symmetric noise.
pub fn inject_confusable_noise(
    batch: &LabeledBatch,
    centroids: &Matrix,
    noise: &NoiseSpec,
    softmax_temperature: f64,
    rng: &mut SeededRng,
) -> Result<LabeledBatch> {
    noise.validate()?;
    batch.latent_required()?;
    if centroids.rows() != noise.num_classes {
        return Err(Error::InvalidConfig(format!(
            "{} centroids for {} classes",
            centroids.rows(),
            noise.num_classes
        )));
    }
    if !(softmax_temperature > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "softmax temperature must be positive, got {softmax_temperature}"
        )));
    }
    let c = noise.num_classes;
    // Destination distribution per source class, precomputed.
    let mut destination_cdf = Vec::with_capacity(c);
    for source in 0..c {
        let sims: Vec<f64> = (0..c)
            .map(|other| dot(centroids.row(source), centroids.row(other)))
            .collect();
        let max_sim = sims
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != source)
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = (0..c)
            .map(|other| {
                if other == source {
                    0.0
                } else {
                    ((sims[other] - max_sim) / softmax_temperature).exp()
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        destination_cdf.push(cdf);
    }
    let mut assigned = batch.assigned().to_vec();
    for label in &mut assigned {
        if noise.error_rate > 0.0 && rng.uniform() < noise.error_rate {
            let cdf = &destination_cdf[*label as usize];
            let u = rng.uniform();
            let mut dest = c - 1;
            for (k, &edge) in cdf.iter().enumerate() {
                if u < edge {
                    dest = k;
                    break;
                }
            }
            *label = dest as u32;
        }
    }
    batch.with_assigned(assigned)
}

/// Generates and corrupts in one step using the spec's mechanism and the
/// dedicated noise stream.
pub fn generate_noisy(spec: &SyntheticDatasetSpec) -> Result<SyntheticDataset> {
    let dataset = generate(spec)?;
    let mut rng = SeededRng::new(spec.noise_seed, 0);
    let batch = match spec.noise_mechanism {
        NoiseMechanism::Symmetric => inject_symmetric_noise(&dataset.batch, &spec.noise, &mut rng)?,
        NoiseMechanism::ConfusableBySimilarity => inject_confusable_noise(
            &dataset.batch,
            &dataset.centroids,
            &spec.noise,
            spec.confusable_temperature,
            &mut rng,
        )?,
    };
    Ok(SyntheticDataset {
        batch,
        centroids: dataset.centroids,
    })
}
