//! False-positive / false-negative pair rates under symmetric label noise.
//!
//! Model: latent classes uniform over `C`; each sample is independently
//! mislabeled with probability τ, and a mislabeled sample's assigned label is
//! uniform over the other `C − 1` classes. The reported rates are conditional:
//! fractions of assigned-positive (resp. assigned-negative) pairs whose latent
//! classes disagree (resp. agree).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassPrior {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub num_classes: usize,
    /// Per-sample mislabeling probability τ in [0, 1).
    pub error_rate: f64,
    #[serde(default = "default_prior")]
    pub class_prior: ClassPrior,
}

fn default_prior() -> ClassPrior {
    ClassPrior::Uniform
}

impl NoiseSpec {
    pub fn new(num_classes: usize, error_rate: f64) -> Result<Self> {
        let spec = NoiseSpec {
            num_classes,
            error_rate,
            class_prior: ClassPrior::Uniform,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.error_rate) {
            return Err(Error::InvalidConfig(format!(
                "error rate must lie in [0, 1), got {}",
                self.error_rate
            )));
        }
        Ok(())
    }
}

/// P(latent classes differ | assigned labels equal) =
/// `1 − (1−τ)² − τ²/(C−1)`.
pub fn false_positive_rate(spec: &NoiseSpec) -> Result<f64> {
    spec.validate()?;
    let tau = spec.error_rate;
    let c = spec.num_classes as f64;
    Ok(1.0 - (1.0 - tau) * (1.0 - tau) - tau * tau / (c - 1.0))
}

/// P(latent classes equal | assigned labels differ) =
/// `false_positive_rate / (C−1)`.
pub fn false_negative_rate(spec: &NoiseSpec) -> Result<f64> {
    Ok(false_positive_rate(spec)? / (spec.num_classes as f64 - 1.0))
}

/// One row of the joint outcome table for an (A, B) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEntry {
    pub a_correct: bool,
    pub b_correct: bool,
    pub same_latent: bool,
    pub same_assigned: bool,
    pub probability: f64,
}

/// Exact joint probabilities over (A correct, B correct, same latent,
/// same assigned). All 16 combinations are listed; impossible ones carry
/// probability zero. Entries sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcomeTable {
    pub entries: Vec<OutcomeEntry>,
}

impl PairOutcomeTable {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.probability).sum()
    }

    pub fn probability(
        &self,
        a_correct: bool,
        b_correct: bool,
        same_latent: bool,
        same_assigned: bool,
    ) -> f64 {
        self.entries
            .iter()
            .find(|e| {
                e.a_correct == a_correct
                    && e.b_correct == b_correct
                    && e.same_latent == same_latent
                    && e.same_assigned == same_assigned
            })
            .map_or(0.0, |e| e.probability)
    }

    /// Marginal P(assigned labels equal); equals 1/C under this model.
    pub fn assigned_same(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.same_assigned)
            .map(|e| e.probability)
            .sum()
    }
}

pub fn outcome_table(spec: &NoiseSpec) -> Result<PairOutcomeTable> {
    spec.validate()?;
    let tau = spec.error_rate;
    let c = spec.num_classes as f64;
    let p_same_latent = 1.0 / c;
    let p_diff_latent = 1.0 - p_same_latent;

    // P(assigned equal | A correct?, B correct?, same latent?) under uniform
    // redistribution of errors over the other C−1 classes.
    let p_assigned_same = |a_correct: bool, b_correct: bool, same_latent: bool| -> f64 {
        match (a_correct, b_correct, same_latent) {
            (true, true, true) => 1.0,
            (true, true, false) => 0.0,
            // The wrong label is uniform over C−1 classes that exclude the
            // shared latent class, so it can never match the correct one.
            (true, false, true) | (false, true, true) => 0.0,
            (true, false, false) | (false, true, false) => 1.0 / (c - 1.0),
            (false, false, true) => 1.0 / (c - 1.0),
            (false, false, false) => (c - 2.0) / ((c - 1.0) * (c - 1.0)),
        }
    };

    let mut entries = Vec::with_capacity(16);
    for &a_correct in &[true, false] {
        for &b_correct in &[true, false] {
            let p_corr = (if a_correct { 1.0 - tau } else { tau })
                * (if b_correct { 1.0 - tau } else { tau });
            for &same_latent in &[true, false] {
                let p_lat = if same_latent {
                    p_same_latent
                } else {
                    p_diff_latent
                };
                let p_same = p_assigned_same(a_correct, b_correct, same_latent);
                for &same_assigned in &[true, false] {
                    let p_cond = if same_assigned { p_same } else { 1.0 - p_same };
                    entries.push(OutcomeEntry {
                        a_correct,
                        b_correct,
                        same_latent,
                        same_assigned,
                        probability: p_corr * p_lat * p_cond,
                    });
                }
            }
        }
    }
    Ok(PairOutcomeTable { entries })
}

/// Empirical pair rates with binomial standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPairRates {
    pub n_pairs: u64,
    pub assigned_same: u64,
    pub assigned_diff: u64,
    pub false_positive_rate: f64,
    pub false_positive_std_error: f64,
    pub false_negative_rate: f64,
    pub false_negative_std_error: f64,
}

/// Samples latent pairs from the uniform prior, corrupts both labels
/// independently, and counts empirical FP/FN rates.
pub fn simulate_pair_outcomes(
    spec: &NoiseSpec,
    n_pairs: u64,
    rng: &mut SeededRng,
) -> Result<SimulatedPairRates> {
    spec.validate()?;
    if n_pairs == 0 {
        return Err(Error::EmptyInput);
    }
    let c = spec.num_classes as u64;
    let tau = spec.error_rate;

    let corrupt = |latent: u64, rng: &mut SeededRng| -> u64 {
        if tau > 0.0 && rng.uniform() < tau {
            let offset = 1 + rng.below(c - 1);
            (latent + offset) % c
        } else {
            latent
        }
    };

    let mut same_assigned = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for _ in 0..n_pairs {
        let la = rng.below(c);
        let lb = rng.below(c);
        let aa = corrupt(la, rng);
        let ab = corrupt(lb, rng);
        if aa == ab {
            same_assigned += 1;
            if la != lb {
                fp += 1;
            }
        } else if la == lb {
            fn_ += 1;
        }
    }
    let assigned_diff = n_pairs - same_assigned;
    let rate = |hits: u64, n: u64| -> (f64, f64) {
        if n == 0 {
            return (0.0, 0.0);
        }
        let p = hits as f64 / n as f64;
        (p, (p * (1.0 - p) / n as f64).sqrt())
    };
    let (fp_rate, fp_se) = rate(fp, same_assigned);
    let (fn_rate, fn_se) = rate(fn_, assigned_diff);
    Ok(SimulatedPairRates {
        n_pairs,
        assigned_same: same_assigned,
        assigned_diff,
        false_positive_rate: fp_rate,
        false_positive_std_error: fp_se,
        false_negative_rate: fn_rate,
        false_negative_std_error: fn_se,
    })
}
