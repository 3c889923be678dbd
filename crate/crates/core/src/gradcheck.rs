//! Finite-difference verification of the analytic loss gradients.
//!
//! The checker perturbs raw embedding coordinates, renormalizes, and
//! evaluates the loss value only — so it is independent of the analytic
//! gradient path it validates. Because renormalization's Jacobian at a unit
//! vector is exactly the tangent projector, the central differences converge
//! to the projected analytic gradient.

use serde::{Deserialize, Serialize};

use crate::batch::{EmbeddingBatch, LabeledBatch};
use crate::error::Result;
use crate::losses::{evaluate_loss, LossConfig, LossVariant, PositiveBetaSign};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckSettings {
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative error.
    pub tolerance: f64,
    pub batch_sizes: Vec<usize>,
    pub dims: Vec<usize>,
    pub seeds: u64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings {
            step: 1e-5,
            tolerance: 1e-5,
            batch_sizes: vec![4, 8],
            dims: vec![3, 8],
            seeds: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantCheck {
    pub variant: String,
    pub max_relative_error: f64,
    pub cases: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub step: f64,
    pub checks: Vec<VariantCheck>,
    pub passed: bool,
}

/// Central finite differences of the loss value through renormalization.
pub fn finite_difference_gradient(
    batch: &LabeledBatch,
    cfg: &LossConfig,
    step: f64,
) -> Result<Matrix> {
    let n = batch.n();
    let d = batch.embeddings.dim();
    let eval = |vectors: Matrix| -> Result<f64> {
        let emb = EmbeddingBatch::new(vectors, cfg.temperature)?;
        let b = LabeledBatch::new(emb, batch.assigned().to_vec(), None)?;
        Ok(evaluate_loss(&b, cfg)?.value)
    };
    let mut grad = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let mut plus = batch.embeddings.vectors().clone();
            plus.set(i, j, plus.get(i, j) + step);
            let mut minus = batch.embeddings.vectors().clone();
            minus.set(i, j, minus.get(i, j) - step);
            grad.set(i, j, (eval(plus)? - eval(minus)?) / (2.0 * step));
        }
    }
    Ok(grad)
}

/// `max |a − b| / max(1, |a|, |b|)` over all entries: relative error with a
/// unit floor so that near-zero components are compared absolutely.
pub fn max_relative_error(analytic: &Matrix, fd: &Matrix) -> f64 {
    analytic
        .data()
        .iter()
        .zip(fd.data())
        .map(|(&a, &b)| (a - b).abs() / 1.0f64.max(a.abs()).max(b.abs()))
        .fold(0.0, f64::max)
}

fn random_labeled_batch(n: usize, d: usize, temperature: f64, seed: u64) -> LabeledBatch {
    let mut rng = SeededRng::new(seed, 17);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.standard_normal()).collect())
        .collect();
    let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let emb = EmbeddingBatch::new(Matrix::from_rows(&rows), temperature).expect("valid batch");
    LabeledBatch::new(emb, labels, None).expect("valid labels")
}

fn config_for(variant: LossVariant) -> LossConfig {
    let mut cfg = LossConfig::new(variant);
    cfg.temperature = 0.5;
    cfg.beta = 0.7;
    cfg.tau_plus = 0.2;
    cfg
}

/// Checks one variant over the settings grid.
pub fn check_variant(
    variant: LossVariant,
    sign: PositiveBetaSign,
    settings: &GradCheckSettings,
) -> Result<VariantCheck> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for &n in &settings.batch_sizes {
        for &d in &settings.dims {
            for seed in 0..settings.seeds {
                let batch = random_labeled_batch(n, d, 0.5, seed * 7919 + n as u64 * 13 + d as u64);
                let mut cfg = config_for(variant);
                cfg.positive_beta_sign = sign;
                let analytic = evaluate_loss(&batch, &cfg)?.gradient;
                let fd = finite_difference_gradient(&batch, &cfg, settings.step)?;
                worst = worst.max(max_relative_error(&analytic, &fd));
                cases += 1;
            }
        }
    }
    let label = match sign {
        PositiveBetaSign::HardPositive => variant.name().to_string(),
        PositiveBetaSign::PaperEstimator => format!("{}+paper-sign", variant.name()),
    };
    Ok(VariantCheck {
        variant: label,
        max_relative_error: worst,
        cases,
        passed: worst < settings.tolerance,
    })
}

/// Runs the full grid: every variant under the default sign convention,
/// plus the DSCL variants under the alternative positive-sign convention.
pub fn check_all_variants(settings: &GradCheckSettings) -> Result<GradCheckReport> {
    let mut checks = Vec::new();
    for variant in LossVariant::ALL {
        checks.push(check_variant(
            variant,
            PositiveBetaSign::HardPositive,
            settings,
        )?);
    }
    for variant in [LossVariant::DsclPosOnly, LossVariant::DsclFull] {
        checks.push(check_variant(
            variant,
            PositiveBetaSign::PaperEstimator,
            settings,
        )?);
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(GradCheckReport {
        tolerance: settings.tolerance,
        step: settings.step,
        checks,
        passed,
    })
}
