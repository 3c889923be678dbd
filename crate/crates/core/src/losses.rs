//! Contrastive objectives: InfoNCE, the supervised contrastive variants, and
//! the debiased supervised contrastive loss (D-SCL).
//!
//! All losses return both the scalar value and the analytic gradient with
//! respect to the embedding rows, projected onto the tangent space of the
//! unit sphere (`g ← g − (g·v)v` per row). Per-anchor positive sets come from
//! assigned labels; a sample is never its own positive.
//!
//! The debiased estimators treat the batch positives/negatives as importance
//! samples: an anchor's positive mean `E[e^{s⁺}]` under the hardness-tilted
//! distribution is estimated as `Σ e^{(σβ+1)s⁺} / Σ e^{σβ s⁺}`, and the
//! mixture decomposition `q⁺ = (q − τ⁻ q⁻)/τ⁺` removes the contribution of
//! mislabeled samples. `σ = −1` (the default) tilts toward hard positives;
//! `σ = +1` reproduces the alternative estimator convention.

use serde::{Deserialize, Serialize};

use crate::batch::{EmbeddingBatch, LabeledBatch};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::numerics::{log_add_exp, log_sum_exp, sim_matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossVariant {
    InfoNce,
    SupConIn,
    SupConOut,
    SupConInReformulated,
    DsclPosOnly,
    DsclNegOnly,
    DsclFull,
}

impl LossVariant {
    pub const ALL: [LossVariant; 7] = [
        LossVariant::InfoNce,
        LossVariant::SupConIn,
        LossVariant::SupConOut,
        LossVariant::SupConInReformulated,
        LossVariant::DsclPosOnly,
        LossVariant::DsclNegOnly,
        LossVariant::DsclFull,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossVariant::InfoNce => "info-nce",
            LossVariant::SupConIn => "supcon-in",
            LossVariant::SupConOut => "supcon-out",
            LossVariant::SupConInReformulated => "supcon-in-reformulated",
            LossVariant::DsclPosOnly => "dscl-pos-only",
            LossVariant::DsclNegOnly => "dscl-neg-only",
            LossVariant::DsclFull => "dscl-full",
        }
    }
}

/// Sign convention for the positive-side hardness tilt.
///
/// `HardPositive` (σ = −1) up-weights positives far from the anchor, which is
/// what makes mislabeled "easy positives" matter less. `PaperEstimator`
/// (σ = +1) mirrors the negative-side convention instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositiveBetaSign {
    HardPositive,
    PaperEstimator,
}

impl PositiveBetaSign {
    fn sigma(self) -> f64 {
        match self {
            PositiveBetaSign::HardPositive => -1.0,
            PositiveBetaSign::PaperEstimator => 1.0,
        }
    }
}

/// Loss variant selector plus every debiasing hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Similarity temperature; scores are `(u·v)/T`.
    pub temperature: f64,
    /// Hardness concentration β ≥ 0. Zero disables the tilt.
    pub beta: f64,
    /// Class prior τ⁺: probability a random sample shares the anchor's
    /// latent class.
    pub tau_plus: f64,
    /// τ⁻ override; defaults to `1 − τ⁺` (the mixture decomposition).
    pub tau_minus: Option<f64>,
    /// Positive-side weight Q (only Q/W matters).
    pub q_weight: f64,
    /// Negative-side weight W.
    pub w_weight: f64,
    /// Floor for the debiased means; defaults to `e^{−1/T}·1e-3`, the scale
    /// of the smallest attainable exponential similarity.
    pub clamp_floor: Option<f64>,
    pub positive_beta_sign: PositiveBetaSign,
}

impl LossConfig {
    pub fn new(variant: LossVariant) -> Self {
        LossConfig {
            variant,
            temperature: 0.5,
            beta: 1.0,
            tau_plus: 0.03,
            tau_minus: None,
            q_weight: 1.0,
            w_weight: 1.0,
            clamp_floor: None,
            positive_beta_sign: PositiveBetaSign::HardPositive,
        }
    }

    pub fn resolved_tau_minus(&self) -> f64 {
        self.tau_minus.unwrap_or(1.0 - self.tau_plus)
    }

    pub fn resolved_clamp_floor(&self) -> f64 {
        self.clamp_floor
            .unwrap_or_else(|| (-1.0 / self.temperature).exp() * 1e-3)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "beta must be nonnegative, got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.tau_plus) {
            return Err(Error::InvalidConfig(format!(
                "tau_plus must lie in [0, 1], got {}",
                self.tau_plus
            )));
        }
        let tau_minus = self.resolved_tau_minus();
        if !(0.0..=1.0).contains(&tau_minus) {
            return Err(Error::InvalidConfig(format!(
                "tau_minus must lie in [0, 1], got {tau_minus}"
            )));
        }
        if !(self.q_weight > 0.0) || !(self.w_weight > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "Q and W must be positive, got Q={} W={}",
                self.q_weight, self.w_weight
            )));
        }
        if !(self.resolved_clamp_floor() > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "clamp floor must be positive, got {}",
                self.resolved_clamp_floor()
            )));
        }
        Ok(())
    }
}

/// Per-anchor estimator values recorded during evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorDiagnostics {
    pub anchor: usize,
    pub positive_estimate: f64,
    pub negative_estimate: f64,
    pub positive_clamped: bool,
    pub negative_clamped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossDiagnostics {
    pub anchors: Vec<AnchorDiagnostics>,
    pub clamp_hits: usize,
}

/// Scalar loss, gradient (same shape as the embedding rows, tangent-space
/// projected), and per-anchor diagnostics.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub gradient: Matrix,
    pub diagnostics: LossDiagnostics,
}

// ---------------------------------------------------------------------------
// Estimator building blocks (value + derivative w.r.t. each similarity)
// ---------------------------------------------------------------------------

struct TiltedMean {
    value: f64,
    grad: Vec<f64>,
}

/// `Σ e^{(tilt+1)sᵢ} / Σ e^{tilt·sᵢ}` — the self-normalized importance
/// estimate of `E[e^s]` under a distribution tilted by `e^{tilt·s}`.
/// With `tilt = 0` this is the plain mean of `e^{sᵢ}`.
fn tilted_exp_mean(s: &[f64], tilt: f64) -> TiltedMean {
    debug_assert!(!s.is_empty());
    let a: Vec<f64> = s.iter().map(|x| tilt * x).collect();
    let b: Vec<f64> = s.iter().map(|x| (tilt + 1.0) * x).collect();
    let la = log_sum_exp(&a).expect("nonempty");
    let lb = log_sum_exp(&b).expect("nonempty");
    let value = (lb - la).exp();
    let grad = s
        .iter()
        .map(|&x| {
            (tilt + 1.0) * ((tilt + 1.0) * x - la).exp()
                - tilt * (tilt * x - 2.0 * la + lb).exp()
        })
        .collect();
    TiltedMean { value, grad }
}

/// `(1/M) Σ e^{tilt·sᵢ}` (the partition estimate Ẑ).
fn partition_mean(s: &[f64], tilt: f64) -> f64 {
    let a: Vec<f64> = s.iter().map(|x| tilt * x).collect();
    (log_sum_exp(&a).expect("nonempty") - (s.len() as f64).ln()).exp()
}

/// One side of the debiased ratio: the estimate, its derivatives with
/// respect to the positive and negative similarities, and the clamp flag.
struct SideEstimate {
    value: f64,
    d_pos: Vec<f64>,
    d_neg: Vec<f64>,
    clamped: bool,
}

impl SideEstimate {
    fn clamped_to(floor: f64, n_pos: usize, n_neg: usize) -> Self {
        SideEstimate {
            value: floor,
            d_pos: vec![0.0; n_pos],
            d_neg: vec![0.0; n_neg],
            clamped: true,
        }
    }
}

/// Debiased positive mean `g⁺ = max(ε, (Ê_q[e^{s⁺}] − τ⁻·Ê_{q⁻}[e^s]) / τ⁺)`.
///
/// `Ê_q` uses the σβ tilt from the config; the contamination term always
/// uses the +β (hard) tilt. At `τ⁺ = 0` the decomposition is undefined and
/// the correction is disabled, leaving the tilted mean.
fn positive_side(p: &[f64], m: &[f64], cfg: &LossConfig) -> SideEstimate {
    let floor = cfg.resolved_clamp_floor();
    let tilt = cfg.positive_beta_sign.sigma() * cfg.beta;
    let rp = tilted_exp_mean(p, tilt);
    if cfg.tau_plus == 0.0 {
        if rp.value < floor {
            return SideEstimate::clamped_to(floor, p.len(), m.len());
        }
        return SideEstimate {
            value: rp.value,
            d_pos: rp.grad,
            d_neg: vec![0.0; m.len()],
            clamped: false,
        };
    }
    let tau_minus = cfg.resolved_tau_minus();
    let rn = tilted_exp_mean(m, cfg.beta);
    let raw = (rp.value - tau_minus * rn.value) / cfg.tau_plus;
    if raw < floor {
        return SideEstimate::clamped_to(floor, p.len(), m.len());
    }
    SideEstimate {
        value: raw,
        d_pos: rp.grad.iter().map(|g| g / cfg.tau_plus).collect(),
        d_neg: rn
            .grad
            .iter()
            .map(|g| -tau_minus * g / cfg.tau_plus)
            .collect(),
        clamped: false,
    }
}

/// Debiased negative mean `g⁻ = max(ε, (Ê_q[e^{s⁻}] − τ⁺·Ê_{q⁺}[e^s]) / τ⁻)`.
/// Both tilts here are +β (hard emphasis on both sides). At `τ⁻ = 0` the
/// correction is disabled.
fn negative_side(p: &[f64], m: &[f64], cfg: &LossConfig) -> SideEstimate {
    let floor = cfg.resolved_clamp_floor();
    let rn = tilted_exp_mean(m, cfg.beta);
    let tau_minus = cfg.resolved_tau_minus();
    if tau_minus == 0.0 {
        if rn.value < floor {
            return SideEstimate::clamped_to(floor, p.len(), m.len());
        }
        return SideEstimate {
            value: rn.value,
            d_pos: vec![0.0; p.len()],
            d_neg: rn.grad,
            clamped: false,
        };
    }
    let rp = tilted_exp_mean(p, cfg.beta);
    let raw = (rn.value - cfg.tau_plus * rp.value) / tau_minus;
    if raw < floor {
        return SideEstimate::clamped_to(floor, p.len(), m.len());
    }
    SideEstimate {
        value: raw,
        d_pos: rp
            .grad
            .iter()
            .map(|g| -cfg.tau_plus * g / tau_minus)
            .collect(),
        d_neg: rn.grad.iter().map(|g| g / tau_minus).collect(),
        clamped: false,
    }
}

/// Plain mean of `e^{sᵢ}` packaged as a side estimate over its own sims.
fn plain_positive(p: &[f64], n_neg: usize) -> SideEstimate {
    let r = tilted_exp_mean(p, 0.0);
    SideEstimate {
        value: r.value,
        d_pos: r.grad,
        d_neg: vec![0.0; n_neg],
        clamped: false,
    }
}

fn plain_negative(n_pos: usize, m: &[f64]) -> SideEstimate {
    let r = tilted_exp_mean(m, 0.0);
    SideEstimate {
        value: r.value,
        d_pos: vec![0.0; n_pos],
        d_neg: r.grad,
        clamped: false,
    }
}

// ---------------------------------------------------------------------------
// Per-anchor kernels
// ---------------------------------------------------------------------------

struct AnchorTerm {
    value: f64,
    /// d value / d (positive similarity k)
    d_pos: Vec<f64>,
    /// d value / d (negative similarity j)
    d_neg: Vec<f64>,
    diag: (f64, f64, bool, bool),
}

fn supcon_family_term(p: &[f64], m: &[f64], variant: LossVariant) -> AnchorTerm {
    let k = p.len() as f64;
    let la = log_sum_exp(p).expect("nonempty positives");
    let lb = if m.is_empty() {
        f64::NEG_INFINITY
    } else {
        log_sum_exp(m).expect("nonempty")
    };
    let lab = log_add_exp(la, lb);
    let diag = (
        (la - k.ln()).exp(),
        if m.is_empty() {
            0.0
        } else {
            (lb - (m.len() as f64).ln()).exp()
        },
        false,
        false,
    );
    match variant {
        LossVariant::SupConIn => AnchorTerm {
            value: lab - la + k.ln(),
            d_pos: p.iter().map(|&x| (x - lab).exp() - (x - la).exp()).collect(),
            d_neg: m.iter().map(|&x| (x - lab).exp()).collect(),
            diag,
        },
        LossVariant::SupConInReformulated => AnchorTerm {
            value: lab - la,
            d_pos: p.iter().map(|&x| (x - lab).exp() - (x - la).exp()).collect(),
            d_neg: m.iter().map(|&x| (x - lab).exp()).collect(),
            diag,
        },
        LossVariant::SupConOut => AnchorTerm {
            value: lab - p.iter().sum::<f64>() / k,
            d_pos: p.iter().map(|&x| (x - lab).exp() - 1.0 / k).collect(),
            d_neg: m.iter().map(|&x| (x - lab).exp()).collect(),
            diag,
        },
        _ => unreachable!("not a supcon-family variant"),
    }
}

/// Batch InfoNCE: each (anchor, positive) pair forms one single-positive
/// term against the anchor's negatives; terms are averaged within the
/// anchor before averaging over anchors.
fn info_nce_term(p: &[f64], m: &[f64]) -> AnchorTerm {
    let k = p.len() as f64;
    let lb = if m.is_empty() {
        f64::NEG_INFINITY
    } else {
        log_sum_exp(m).expect("nonempty")
    };
    let mut value = 0.0;
    let mut d_pos = vec![0.0; p.len()];
    let mut d_neg = vec![0.0; m.len()];
    for (kk, &sp) in p.iter().enumerate() {
        let lz = log_add_exp(sp, lb);
        value += (lz - sp) / k;
        d_pos[kk] += ((sp - lz).exp() - 1.0) / k;
        for (j, &sn) in m.iter().enumerate() {
            d_neg[j] += (sn - lz).exp() / k;
        }
    }
    let diag = (
        (log_sum_exp(p).expect("nonempty") - k.ln()).exp(),
        if m.is_empty() {
            0.0
        } else {
            (lb - (m.len() as f64).ln()).exp()
        },
        false,
        false,
    );
    AnchorTerm {
        value,
        d_pos,
        d_neg,
        diag,
    }
}

/// D-SCL per-anchor term `−log(Q·M·g⁺ / (Q·M·g⁺ + W·N·g⁻))`.
///
/// `M·g⁺` and `N·g⁻` play the role of the positive and negative exponential
/// sums of the reformulated loss, so at `β = 0, τ⁺ = 1, Q = W = 1` the term
/// reduces to it exactly.
fn dscl_term(p: &[f64], m: &[f64], cfg: &LossConfig) -> AnchorTerm {
    let gp = match cfg.variant {
        LossVariant::DsclNegOnly => plain_positive(p, m.len()),
        _ => positive_side(p, m, cfg),
    };
    let gn = match cfg.variant {
        LossVariant::DsclPosOnly => plain_negative(p.len(), m),
        _ => negative_side(p, m, cfg),
    };
    let u = cfg.q_weight * p.len() as f64 * gp.value;
    let w = cfg.w_weight * m.len() as f64 * gn.value;
    let value = (u + w).ln() - u.ln();
    let dt_du = 1.0 / (u + w) - 1.0 / u;
    let dt_dw = 1.0 / (u + w);
    let cu = cfg.q_weight * p.len() as f64 * dt_du;
    let cw = cfg.w_weight * m.len() as f64 * dt_dw;
    let d_pos = gp
        .d_pos
        .iter()
        .zip(&gn.d_pos)
        .map(|(a, b)| cu * a + cw * b)
        .collect();
    let d_neg = gp
        .d_neg
        .iter()
        .zip(&gn.d_neg)
        .map(|(a, b)| cu * a + cw * b)
        .collect();
    AnchorTerm {
        value,
        d_pos,
        d_neg,
        diag: (gp.value, gn.value, gp.clamped, gn.clamped),
    }
}

// ---------------------------------------------------------------------------
// Batch evaluation
// ---------------------------------------------------------------------------

fn requires_negatives(variant: LossVariant) -> bool {
    matches!(
        variant,
        LossVariant::DsclPosOnly | LossVariant::DsclNegOnly | LossVariant::DsclFull
    )
}

pub(crate) struct EvalOptions {
    /// Skip anchors without positives (or without negatives, for D-SCL)
    /// instead of erroring; they still serve as candidates for others.
    pub skip_lonely_anchors: bool,
}

pub(crate) fn evaluate_loss_with(
    batch: &LabeledBatch,
    cfg: &LossConfig,
    opts: &EvalOptions,
) -> Result<LossOutput> {
    cfg.validate()?;
    if (batch.embeddings.temperature() - cfg.temperature).abs() > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "batch temperature {} does not match loss temperature {}",
            batch.embeddings.temperature(),
            cfg.temperature
        )));
    }
    let n = batch.n();
    let labels = batch.assigned();
    let sims = sim_matrix(&batch.embeddings, &batch.embeddings)?;
    let inv_t = 1.0 / cfg.temperature;
    let dim = batch.embeddings.dim();

    let mut coeffs: Vec<(usize, usize, f64)> = Vec::new();
    let mut diagnostics = LossDiagnostics::default();
    let mut terms: Vec<f64> = Vec::new();
    let mut anchor_count = 0usize;

    for i in 0..n {
        let mut pos_idx = Vec::new();
        let mut neg_idx = Vec::new();
        for j in 0..n {
            if j == i {
                continue;
            }
            if labels[j] == labels[i] {
                pos_idx.push(j);
            } else {
                neg_idx.push(j);
            }
        }
        if pos_idx.is_empty() {
            if opts.skip_lonely_anchors {
                continue;
            }
            return Err(Error::NoPositives { anchor: i });
        }
        if neg_idx.is_empty() && requires_negatives(cfg.variant) {
            if opts.skip_lonely_anchors {
                continue;
            }
            return Err(Error::NoNegatives { anchor: i });
        }
        let p: Vec<f64> = pos_idx.iter().map(|&j| sims.get(i, j)).collect();
        let m: Vec<f64> = neg_idx.iter().map(|&j| sims.get(i, j)).collect();
        let term = match cfg.variant {
            LossVariant::InfoNce => info_nce_term(&p, &m),
            LossVariant::SupConIn | LossVariant::SupConOut | LossVariant::SupConInReformulated => {
                supcon_family_term(&p, &m, cfg.variant)
            }
            _ => dscl_term(&p, &m, cfg),
        };
        terms.push(term.value);
        anchor_count += 1;
        for (k, &j) in pos_idx.iter().enumerate() {
            coeffs.push((i, j, term.d_pos[k]));
        }
        for (k, &j) in neg_idx.iter().enumerate() {
            coeffs.push((i, j, term.d_neg[k]));
        }
        let (pe, ne, pc, nc) = term.diag;
        if pc {
            diagnostics.clamp_hits += 1;
        }
        if nc {
            diagnostics.clamp_hits += 1;
        }
        diagnostics.anchors.push(AnchorDiagnostics {
            anchor: i,
            positive_estimate: pe,
            negative_estimate: ne,
            positive_clamped: pc,
            negative_clamped: nc,
        });
    }

    if anchor_count == 0 {
        return Err(Error::DegenerateBatch { attempts: 0 });
    }

    let scale = 1.0 / anchor_count as f64;
    let value = terms.iter().sum::<f64>() * scale;

    let mut gradient = Matrix::zeros(n, dim);
    for (i, j, c) in coeffs {
        let c = c * scale * inv_t;
        let vi = batch.embeddings.row(i).to_vec();
        let vj = batch.embeddings.row(j).to_vec();
        {
            let gi = gradient.row_mut(i);
            for (g, x) in gi.iter_mut().zip(&vj) {
                *g += c * x;
            }
        }
        {
            let gj = gradient.row_mut(j);
            for (g, x) in gj.iter_mut().zip(&vi) {
                *g += c * x;
            }
        }
    }
    project_rows(&mut gradient, &batch.embeddings);

    Ok(LossOutput {
        value,
        gradient,
        diagnostics,
    })
}

/// Removes the radial component of each gradient row: `g ← g − (g·v)v`.
fn project_rows(gradient: &mut Matrix, embeddings: &EmbeddingBatch) {
    for i in 0..gradient.rows() {
        let v = embeddings.row(i).to_vec();
        let g = gradient.row_mut(i);
        let radial = dot(g, &v);
        for (gx, vx) in g.iter_mut().zip(&v) {
            *gx -= radial * vx;
        }
    }
}

const STRICT: EvalOptions = EvalOptions {
    skip_lonely_anchors: false,
};

/// Evaluates the loss variant selected by `cfg.variant`.
pub fn evaluate_loss(batch: &LabeledBatch, cfg: &LossConfig) -> Result<LossOutput> {
    evaluate_loss_with(batch, cfg, &STRICT)
}

/// Analytic `∂L/∂vectors` for the configured variant, tangent-projected.
pub fn loss_gradient(batch: &LabeledBatch, cfg: &LossConfig) -> Result<Matrix> {
    Ok(evaluate_loss(batch, cfg)?.gradient)
}

fn with_variant(cfg: &LossConfig, variant: LossVariant) -> LossConfig {
    LossConfig {
        variant,
        ..cfg.clone()
    }
}

/// `L_in`: per-anchor `−log{(1/K)·Σe^{s⁺} / (Σe^{s⁺} + Σe^{s⁻})}`.
pub fn supcon_in(batch: &LabeledBatch, cfg: &LossConfig) -> Result<LossOutput> {
    evaluate_loss(batch, &with_variant(cfg, LossVariant::SupConIn))
}

/// `L_out`: per-anchor `(−1/K)·Σ_k log{e^{s⁺_k} / (Σe^{s⁺} + Σe^{s⁻})}`.
pub fn supcon_out(batch: &LabeledBatch, cfg: &LossConfig) -> Result<LossOutput> {
    evaluate_loss(batch, &with_variant(cfg, LossVariant::SupConOut))
}

/// The reformulation dropping the additive `log K`:
/// per-anchor `−log(Σe^{s⁺} / (Σe^{s⁺} + Σe^{s⁻}))`.
pub fn supcon_in_reformulated(batch: &LabeledBatch, cfg: &LossConfig) -> Result<LossOutput> {
    evaluate_loss(batch, &with_variant(cfg, LossVariant::SupConInReformulated))
}

/// Debiased supervised contrastive loss (variant from `cfg.variant`;
/// a non-DSCL variant is evaluated as `DsclFull`).
pub fn dscl_loss(batch: &LabeledBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let cfg = if requires_negatives(cfg.variant) {
        cfg.clone()
    } else {
        with_variant(cfg, LossVariant::DsclFull)
    };
    evaluate_loss(batch, &cfg)
}

/// Single-anchor InfoNCE with explicit positive and negatives.
///
/// The gradient rows are stacked `[anchor; positive; negatives…]`.
pub fn info_nce(
    anchor: &[f64],
    positive: &[f64],
    negatives: &EmbeddingBatch,
    temperature: f64,
) -> Result<LossOutput> {
    if anchor.len() != negatives.dim() || positive.len() != negatives.dim() {
        return Err(Error::DimensionMismatch {
            left: anchor.len(),
            right: negatives.dim(),
        });
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let inv_t = 1.0 / temperature;
    let sp = dot(anchor, positive) * inv_t;
    let sn: Vec<f64> = (0..negatives.n())
        .map(|j| dot(anchor, negatives.row(j)) * inv_t)
        .collect();
    let term = info_nce_term(&[sp], &sn);

    let n = negatives.n();
    let mut gradient = Matrix::zeros(n + 2, anchor.len());
    // d sp/d anchor = positive/T, d sn_j/d anchor = neg_j/T
    {
        let ga = gradient.row_mut(0);
        for (g, x) in ga.iter_mut().zip(positive) {
            *g += term.d_pos[0] * x * inv_t;
        }
        for (j, &c) in term.d_neg.iter().enumerate() {
            for (g, x) in ga.iter_mut().zip(negatives.row(j)) {
                *g += c * x * inv_t;
            }
        }
    }
    {
        let gp = gradient.row_mut(1);
        for (g, x) in gp.iter_mut().zip(anchor) {
            *g += term.d_pos[0] * x * inv_t;
        }
    }
    for (j, &c) in term.d_neg.iter().enumerate() {
        let gj = gradient.row_mut(j + 2);
        for (g, x) in gj.iter_mut().zip(anchor) {
            *g += c * x * inv_t;
        }
    }
    // Tangent projection per stacked row.
    let mut stacked = vec![anchor.to_vec(), positive.to_vec()];
    for j in 0..n {
        stacked.push(negatives.row(j).to_vec());
    }
    for (i, v) in stacked.iter().enumerate() {
        let g = gradient.row_mut(i);
        let radial = dot(g, v);
        for (gx, vx) in g.iter_mut().zip(v) {
            *gx -= radial * vx;
        }
    }

    let (pe, ne, pc, nc) = term.diag;
    Ok(LossOutput {
        value: term.value,
        gradient,
        diagnostics: LossDiagnostics {
            anchors: vec![AnchorDiagnostics {
                anchor: 0,
                positive_estimate: pe,
                negative_estimate: ne,
                positive_clamped: pc,
                negative_clamped: nc,
            }],
            clamp_hits: 0,
        },
    })
}

// ---------------------------------------------------------------------------
// Standalone estimator operations
// ---------------------------------------------------------------------------

fn anchor_sims(anchor: &[f64], pool: &EmbeddingBatch, cfg: &LossConfig) -> Result<Vec<f64>> {
    if anchor.len() != pool.dim() {
        return Err(Error::DimensionMismatch {
            left: anchor.len(),
            right: pool.dim(),
        });
    }
    if (pool.temperature() - cfg.temperature).abs() > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "pool temperature {} does not match loss temperature {}",
            pool.temperature(),
            cfg.temperature
        )));
    }
    let inv_t = 1.0 / cfg.temperature;
    Ok((0..pool.n())
        .map(|j| dot(anchor, pool.row(j)) * inv_t)
        .collect())
}

/// `Ẑ(x) = (1/M) Σ e^{σβ·s⁺ᵢ}` with σ from the config's sign convention.
pub fn partition_estimate_pos(
    anchor: &[f64],
    positives: &EmbeddingBatch,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let sims = anchor_sims(anchor, positives, cfg)?;
    if sims.is_empty() {
        return Err(Error::EmptyPositives);
    }
    Ok(partition_mean(&sims, cfg.positive_beta_sign.sigma() * cfg.beta))
}

/// `Ẑ⁻(x) = (1/N) Σ e^{β·s⁻ᵢ}` (always the hard, +β tilt).
pub fn partition_estimate_neg(
    anchor: &[f64],
    negatives: &EmbeddingBatch,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let sims = anchor_sims(anchor, negatives, cfg)?;
    if sims.is_empty() {
        return Err(Error::EmptyNegatives);
    }
    Ok(partition_mean(&sims, cfg.beta))
}

/// Debiased positive mean for one anchor against explicit pools.
pub fn debiased_positive_mean(
    anchor: &[f64],
    positives: &EmbeddingBatch,
    negatives: &EmbeddingBatch,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let p = anchor_sims(anchor, positives, cfg)?;
    let m = anchor_sims(anchor, negatives, cfg)?;
    if p.is_empty() {
        return Err(Error::EmptyPositives);
    }
    if m.is_empty() {
        return Err(Error::EmptyNegatives);
    }
    Ok(positive_side(&p, &m, cfg).value)
}

/// Debiased negative mean for one anchor against explicit pools.
pub fn debiased_negative_mean(
    anchor: &[f64],
    positives: &EmbeddingBatch,
    negatives: &EmbeddingBatch,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let p = anchor_sims(anchor, positives, cfg)?;
    let m = anchor_sims(anchor, negatives, cfg)?;
    if p.is_empty() {
        return Err(Error::EmptyPositives);
    }
    if m.is_empty() {
        return Err(Error::EmptyNegatives);
    }
    Ok(negative_side(&p, &m, cfg).value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn batch_from_rows(rows: &[Vec<f64>], labels: &[u32], t: f64) -> LabeledBatch {
        let e = EmbeddingBatch::new(Matrix::from_rows(rows), t).unwrap();
        LabeledBatch::new(e, labels.to_vec(), None).unwrap()
    }

    /// 4 samples, d=2, two classes, T=0.5. Rows are unit vectors at angles
    /// 0.1, 0.5, 2.0, 2.6 rad.
    fn fixture_4x2() -> LabeledBatch {
        let rows: Vec<Vec<f64>> = [0.1f64, 0.5, 2.0, 2.6]
            .iter()
            .map(|a| vec![a.cos(), a.sin()])
            .collect();
        batch_from_rows(&rows, &[0, 0, 1, 1], 0.5)
    }

    /// 6 samples, d=3, two classes of three, T=0.7.
    fn fixture_6x3() -> LabeledBatch {
        let raw = [
            [1.0, 2.0, 2.0],
            [2.0, 1.0, 2.0],
            [-1.0, 2.0, 1.0],
            [-2.0, 1.0, 1.0],
            [1.0, -1.0, 3.0],
            [2.0, -1.0, 2.0],
        ];
        let rows: Vec<Vec<f64>> = raw.iter().map(|r| r.to_vec()).collect();
        batch_from_rows(&rows, &[0, 0, 0, 1, 1, 1], 0.7)
    }

    fn random_batch(n: usize, d: usize, t: f64, seed: u64) -> LabeledBatch {
        let mut rng = SeededRng::new(seed, 0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.standard_normal()).collect())
            .collect();
        let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        batch_from_rows(&rows, &labels, t)
    }

    fn cfg(variant: LossVariant) -> LossConfig {
        LossConfig::new(variant)
    }

    #[test]
    fn info_nce_indistinguishable_pair_is_ln_two() {
        // s(x,x+) == s(x,x-) forces the softmax to 1/2.
        let anchor = vec![1.0, 0.0];
        let positive = vec![0.0, 1.0];
        let negatives =
            EmbeddingBatch::new(Matrix::from_rows(&[vec![0.0, 1.0]]), 1.0).unwrap();
        let out = info_nce(&anchor, &positive, &negatives, 1.0).unwrap();
        assert!((out.value - std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn info_nce_matches_direct_formula() {
        // s+ = 1, s- = -1, T = 1 -> log(1 + e^{-2}).
        let anchor = vec![1.0, 0.0];
        let positive = vec![1.0, 0.0];
        let negatives =
            EmbeddingBatch::new(Matrix::from_rows(&[vec![-1.0, 0.0]]), 1.0).unwrap();
        let out = info_nce(&anchor, &positive, &negatives, 1.0).unwrap();
        assert!((out.value - 0.12692801104297250).abs() < 1e-14);
    }

    #[test]
    fn info_nce_uniform_softmax_over_four() {
        // positive and three negatives all at similarity zero.
        let anchor = vec![1.0, 0.0, 0.0];
        let positive = vec![0.0, 1.0, 0.0];
        let negatives = EmbeddingBatch::new(
            Matrix::from_rows(&[
                vec![0.0, 0.0, 1.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, -1.0, 0.0],
            ]),
            1.0,
        )
        .unwrap();
        let out = info_nce(&anchor, &positive, &negatives, 1.0).unwrap();
        assert!((out.value - 4.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn supcon_in_matches_frozen_fixture_value() {
        // Evaluated independently at 40 decimal digits.
        let out = supcon_in(&fixture_4x2(), &cfg(LossVariant::SupConIn)).unwrap();
        assert!((out.value - 0.17652527481496709).abs() < 1e-13, "{}", out.value);
    }

    #[test]
    fn supcon_fixture_6x3_matches_frozen_values() {
        let b = fixture_6x3();
        let mut c = cfg(LossVariant::SupConIn);
        c.temperature = 0.7;
        let lin = supcon_in(&b, &c).unwrap().value;
        let lout = supcon_out(&b, &c).unwrap().value;
        let lref = supcon_in_reformulated(&b, &c).unwrap().value;
        assert!((lin - 1.5990038376554100).abs() < 1e-13, "{lin}");
        assert!((lout - 1.7276296933008612).abs() < 1e-13, "{lout}");
        assert!((lref - 0.9058566570954647).abs() < 1e-13, "{lref}");
        // K = 2 for every anchor, so the shift is exactly ln 2.
        assert!((lin - lref - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn supcon_uniform_sims_give_ln_three() {
        // 4 identical embeddings, 2 classes: K=1, N=2, all sims equal.
        let rows = vec![vec![1.0, 0.0]; 4];
        let b = batch_from_rows(&rows, &[0, 1, 0, 1], 0.5);
        let out = supcon_in(&b, &cfg(LossVariant::SupConIn)).unwrap();
        assert!((out.value - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn supcon_out_uniform_sims_is_ln_four() {
        // 5 identical embeddings: every anchor sees 4 candidates with equal
        // sims, so each log term is 1/4 regardless of K.
        let rows = vec![vec![1.0, 0.0]; 5];
        let b = batch_from_rows(&rows, &[0, 0, 0, 1, 1], 0.5);
        let out = supcon_out(&b, &cfg(LossVariant::SupConOut)).unwrap();
        assert!((out.value - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_positive_reduces_all_variants_to_info_nce() {
        let b = fixture_4x2(); // K = 1 everywhere
        let c = cfg(LossVariant::SupConIn);
        let lin = supcon_in(&b, &c).unwrap().value;
        let lout = supcon_out(&b, &c).unwrap().value;
        let lref = supcon_in_reformulated(&b, &c).unwrap().value;
        let nce = evaluate_loss(&b, &with_variant(&c, LossVariant::InfoNce))
            .unwrap()
            .value;
        assert!((lin - lout).abs() < 1e-14);
        assert!((lin - lref).abs() < 1e-14);
        assert!((lin - nce).abs() < 1e-14);
    }

    #[test]
    fn shift_identity_holds_on_random_batches() {
        for seed in 0..8 {
            let b = random_batch(8, 5, 0.5, seed);
            let c = cfg(LossVariant::SupConIn);
            let lin = supcon_in(&b, &c).unwrap().value;
            let lref = supcon_in_reformulated(&b, &c).unwrap().value;
            // labels split 4/4: K = 3 for every anchor.
            assert!((lin - lref - 3.0f64.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn no_positives_is_reported_with_anchor_index() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
        let b = batch_from_rows(&rows, &[0, 0, 1], 0.5);
        match supcon_in(&b, &cfg(LossVariant::SupConIn)) {
            Err(Error::NoPositives { anchor }) => assert_eq!(anchor, 2),
            other => panic!("expected NoPositives, got {other:?}"),
        }
    }

    #[test]
    fn partition_estimate_beta_zero_is_one() {
        let pool = EmbeddingBatch::new(
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            1.0,
        )
        .unwrap();
        let mut c = cfg(LossVariant::DsclFull);
        c.temperature = 1.0;
        c.beta = 0.0;
        let z = partition_estimate_pos(&[1.0, 0.0], &pool, &c).unwrap();
        assert_eq!(z, 1.0);
        let z = partition_estimate_neg(&[1.0, 0.0], &pool, &c).unwrap();
        assert_eq!(z, 1.0);
    }

    #[test]
    fn partition_estimate_single_positive_paper_sign() {
        // one positive at s+ = 1, beta = 2, PaperEstimator -> e^2
        let pool = EmbeddingBatch::new(Matrix::from_rows(&[vec![1.0, 0.0]]), 1.0).unwrap();
        let mut c = cfg(LossVariant::DsclFull);
        c.temperature = 1.0;
        c.beta = 2.0;
        c.positive_beta_sign = PositiveBetaSign::PaperEstimator;
        let z = partition_estimate_pos(&[1.0, 0.0], &pool, &c).unwrap();
        assert!((z - 7.389056098930650).abs() < 1e-12);
    }

    #[test]
    fn partition_estimate_two_positives_hard_sign() {
        // s+ = {0, 1}, beta = 1, HardPositive -> (1 + e^{-1})/2
        let pool = EmbeddingBatch::new(
            Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
            1.0,
        )
        .unwrap();
        let mut c = cfg(LossVariant::DsclFull);
        c.temperature = 1.0;
        c.beta = 1.0;
        let z = partition_estimate_pos(&[1.0, 0.0], &pool, &c).unwrap();
        assert!((z - 0.6839397205857212).abs() < 1e-14);
    }

    #[test]
    fn partition_estimate_neg_examples() {
        // one negative at s- = -1, beta = 1 -> e^{-1}
        let pool = EmbeddingBatch::new(Matrix::from_rows(&[vec![-1.0, 0.0]]), 1.0).unwrap();
        let mut c = cfg(LossVariant::DsclFull);
        c.temperature = 1.0;
        let z = partition_estimate_neg(&[1.0, 0.0], &pool, &c).unwrap();
        assert!((z - 0.3678794411714423).abs() < 1e-14);
        // two negatives at s- = {0, 0} -> 1
        let pool = EmbeddingBatch::new(
            Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, -1.0]]),
            1.0,
        )
        .unwrap();
        let z = partition_estimate_neg(&[1.0, 0.0], &pool, &c).unwrap();
        assert!((z - 1.0).abs() < 1e-14);
    }

    /// Direct scalar evaluation of the debiased means on raw similarity
    /// lists, written as plainly as possible (no shared helpers).
    fn naive_gplus(p: &[f64], m: &[f64], beta: f64, sigma: f64, tp: f64, tm: f64) -> f64 {
        let zp: f64 = p.iter().map(|s| (sigma * beta * s).exp()).sum::<f64>() / p.len() as f64;
        let eq: f64 = p
            .iter()
            .map(|s| ((sigma * beta + 1.0) * s).exp())
            .sum::<f64>()
            / p.len() as f64
            / zp;
        let zn: f64 = m.iter().map(|s| (beta * s).exp()).sum::<f64>() / m.len() as f64;
        let en: f64 = m
            .iter()
            .map(|s| ((beta + 1.0) * s).exp())
            .sum::<f64>()
            / m.len() as f64
            / zn;
        (eq - tm * en) / tp
    }

    #[test]
    fn debiased_positive_mean_matches_hand_oracle() {
        // s+ = {0.9, 0.1}, s- = {0.8}, beta = 1, tau+ = 0.9, HardPositive.
        // Hand-evaluated at 40 digits: 1.4472504096265526.
        let pos = EmbeddingBatch::new(
            Matrix::from_rows(&[vec![0.9, (1.0f64 - 0.81).sqrt()], vec![0.1, (1.0f64 - 0.01).sqrt()]]),
            1.0,
        )
        .unwrap();
        let neg = EmbeddingBatch::new(
            Matrix::from_rows(&[vec![0.8, (1.0f64 - 0.64).sqrt()]]),
            1.0,
        )
        .unwrap();
        let anchor = vec![1.0, 0.0];
        let mut c = cfg(LossVariant::DsclFull);
        c.temperature = 1.0;
        c.beta = 1.0;
        c.tau_plus = 0.9;
        let g = debiased_positive_mean(&anchor, &pos, &neg, &c).unwrap();
        assert!((g - 1.4472504096265526).abs() < 1e-13, "{g}");
        assert!((g - naive_gplus(&[0.9, 0.1], &[0.8], 1.0, -1.0, 0.9, 0.1)).abs() < 1e-12);
    }

    #[test]
    fn debiased_negative_mean_matches_hand_oracle() {
        // Roles swapped: s- = {0.9, 0.1}, s+ = {0.8}; frozen 0.36707732076232346.
        let neg = EmbeddingBatch::new(
            Matrix::from_rows(&[vec![0.9, (1.0f64 - 0.81).sqrt()], vec![0.1, (1.0f64 - 0.01).sqrt()]]),
            1.0,
        )
        .unwrap();
        let pos = EmbeddingBatch::new(
            Matrix::from_rows(&[vec![0.8, (1.0f64 - 0.64).sqrt()]]),
            1.0,
        )
        .unwrap();
        let anchor = vec![1.0, 0.0];
        let mut c = cfg(LossVariant::DsclFull);
        c.temperature = 1.0;
        c.beta = 1.0;
        c.tau_plus = 0.9;
        let g = debiased_negative_mean(&anchor, &pos, &neg, &c).unwrap();
        assert!((g - 0.36707732076232346).abs() < 1e-13, "{g}");
    }

    #[test]
    fn debiased_positive_mean_beta_zero_tau_one_is_plain_mean() {
        let pos = EmbeddingBatch::new(
            Matrix::from_rows(&[vec![0.6, 0.8], vec![0.0, 1.0]]),
            1.0,
        )
        .unwrap();
        let neg = EmbeddingBatch::new(Matrix::from_rows(&[vec![-1.0, 0.0]]), 1.0).unwrap();
        let anchor = vec![1.0, 0.0];
        let mut c = cfg(LossVariant::DsclFull);
        c.temperature = 1.0;
        c.beta = 0.0;
        c.tau_plus = 1.0;
        let g = debiased_positive_mean(&anchor, &pos, &neg, &c).unwrap();
        let plain = (0.6f64.exp() + 1.0) / 2.0;
        assert!((g - plain).abs() < 1e-14);
    }

    #[test]
    fn debiased_negative_mean_beta_zero_tau_minus_one_is_plain_mean() {
        let neg = EmbeddingBatch::new(
            Matrix::from_rows(&[vec![0.6, 0.8], vec![0.0, 1.0]]),
            1.0,
        )
        .unwrap();
        let pos = EmbeddingBatch::new(Matrix::from_rows(&[vec![1.0, 0.0]]), 1.0).unwrap();
        let anchor = vec![1.0, 0.0];
        let mut c = cfg(LossVariant::DsclFull);
        c.temperature = 1.0;
        c.beta = 0.0;
        c.tau_plus = 0.0; // tau_minus defaults to 1
        let g = debiased_negative_mean(&anchor, &pos, &neg, &c).unwrap();
        let plain = (0.6f64.exp() + 1.0) / 2.0;
        assert!((g - plain).abs() < 1e-14);
    }

    #[test]
    fn debias_monotone_in_tau_minus_pre_clamp() {
        let p = [0.9, 0.1];
        let m = [0.8, -0.2];
        let mut c = cfg(LossVariant::DsclFull);
        c.temperature = 1.0;
        c.beta = 1.0;
        c.tau_plus = 0.5;
        let mut prev = f64::INFINITY;
        for tm in [0.0, 0.1, 0.3, 0.5, 0.9] {
            c.tau_minus = Some(tm);
            let side = positive_side(&p, &m, &c);
            assert!(side.value <= prev + 1e-15);
            prev = side.value;
        }
    }

    #[test]
    fn dscl_reduces_to_reformulated_at_the_identity_point() {
        for seed in 0..20 {
            let b = random_batch(6, 4, 0.5, seed);
            let mut c = cfg(LossVariant::DsclFull);
            c.beta = 0.0;
            c.tau_plus = 1.0;
            c.q_weight = 1.0;
            c.w_weight = 1.0;
            let d = dscl_loss(&b, &c).unwrap().value;
            let r = supcon_in_reformulated(&b, &c).unwrap().value;
            assert!((d - r).abs() < 1e-12, "seed {seed}: {d} vs {r}");
            // DsclPosOnly at the same point also reduces.
            c.variant = LossVariant::DsclPosOnly;
            let d = evaluate_loss(&b, &c).unwrap().value;
            assert!((d - r).abs() < 1e-12);
        }
    }

    #[test]
    fn dscl_values_are_finite_and_positive() {
        for seed in 0..10 {
            let b = random_batch(8, 4, 0.5, seed);
            for variant in [
                LossVariant::DsclPosOnly,
                LossVariant::DsclNegOnly,
                LossVariant::DsclFull,
            ] {
                let mut c = cfg(variant);
                c.beta = 0.7;
                c.tau_plus = 0.2;
                let out = evaluate_loss(&b, &c).unwrap();
                assert!(out.value.is_finite());
                assert!(out.value > 0.0);
            }
        }
    }

    #[test]
    fn dscl_fixture_seed7_matches_enumeration_oracle() {
        // 4 anchors, 2 classes, d=4, generated from seed 7; beta=0.5,
        // tau+=0.95. The oracle below enumerates every pair directly.
        let mut rng = SeededRng::new(7, 0);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..4).map(|_| rng.standard_normal()).collect())
            .collect();
        let b = batch_from_rows(&rows, &[0, 0, 1, 1], 0.5);
        let mut c = cfg(LossVariant::DsclFull);
        c.beta = 0.5;
        c.tau_plus = 0.95;
        let got = dscl_loss(&b, &c).unwrap().value;

        // Independent oracle: naive formulas, no log-space tricks.
        let n = b.n();
        let labels = b.assigned();
        let mut total = 0.0;
        for i in 0..n {
            let mut p = Vec::new();
            let mut m = Vec::new();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let s = dot(b.embeddings.row(i), b.embeddings.row(j)) / 0.5;
                if labels[j] == labels[i] {
                    p.push(s);
                } else {
                    m.push(s);
                }
            }
            let floor = c.resolved_clamp_floor();
            let gp = naive_gplus(&p, &m, 0.5, -1.0, 0.95, 0.05).max(floor);
            // negative side: both tilts +beta
            let zn: f64 = m.iter().map(|s| (0.5 * s).exp()).sum::<f64>() / m.len() as f64;
            let en: f64 =
                m.iter().map(|s| (1.5 * s).exp()).sum::<f64>() / m.len() as f64 / zn;
            let zp: f64 = p.iter().map(|s| (0.5 * s).exp()).sum::<f64>() / p.len() as f64;
            let ep: f64 =
                p.iter().map(|s| (1.5 * s).exp()).sum::<f64>() / p.len() as f64 / zp;
            let gn = ((en - 0.95 * ep) / 0.05).max(floor);
            let u = p.len() as f64 * gp;
            let w = m.len() as f64 * gn;
            total += -(u / (u + w)).ln();
        }
        let expect = total / n as f64;
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn clamped_branch_contributes_zero_gradient() {
        // With tau+ tiny and a large tau- correction, the positive estimate
        // goes negative and clamps; the positive-side gradient must vanish.
        let p = [0.0, 0.1];
        let m = [0.9, 0.95];
        let mut c = cfg(LossVariant::DsclFull);
        c.temperature = 1.0;
        c.beta = 1.0;
        c.tau_plus = 0.05;
        c.tau_minus = Some(0.95);
        let side = positive_side(&p, &m, &c);
        assert!(side.clamped);
        assert!(side.d_pos.iter().all(|&g| g == 0.0));
        assert!(side.d_neg.iter().all(|&g| g == 0.0));
        assert_eq!(side.value, c.resolved_clamp_floor());
    }

    #[test]
    fn gradients_are_tangent_to_the_sphere() {
        let b = random_batch(6, 5, 0.5, 3);
        for variant in LossVariant::ALL {
            let mut c = cfg(variant);
            c.tau_plus = 0.2;
            let out = evaluate_loss(&b, &c).unwrap();
            for i in 0..b.n() {
                let radial = dot(out.gradient.row(i), b.embeddings.row(i));
                assert!(radial.abs() < 1e-12, "{variant:?} row {i}: {radial}");
            }
        }
    }

    #[test]
    fn symmetric_stationary_point_has_zero_gradient() {
        // Two orthogonal classes placed symmetrically: antipodal pairs within
        // each class. Every per-anchor configuration is identical, and the
        // tangent gradient cancels by symmetry.
        let rows = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let b = batch_from_rows(&rows, &[0, 0, 1, 1], 0.5);
        let out = supcon_in(&b, &cfg(LossVariant::SupConIn)).unwrap();
        for i in 0..4 {
            for &g in out.gradient.row(i) {
                assert!(g.abs() < 1e-12, "{g}");
            }
        }
    }
}
