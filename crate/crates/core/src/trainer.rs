//! A small encoder trainer and linear-probe evaluation.
//!
//! The trainer minimizes any configured contrastive loss over mini-batches of
//! raw inputs, backpropagating the analytic loss gradient through the encoder
//! (including the output normalization). Representation quality is measured
//! by a multinomial logistic probe on the frozen embeddings, against both the
//! assigned and the latent labels.

use serde::{Deserialize, Serialize};

use crate::batch::{EmbeddingBatch, LabeledBatch};
use crate::error::{Error, Result};
use crate::losses::{evaluate_loss_with, EvalOptions, LossConfig};
use crate::matrix::{dot, Matrix};
use crate::rng::SeededRng;
use crate::synth::{generate_noisy, SyntheticDatasetSpec};

pub const PROBE_ITERATION_CAP: usize = 2000;
pub const PROBE_LEARNING_RATE: f64 = 0.1;
pub const PROBE_LOSS_TOLERANCE: f64 = 1e-6;

const MAX_RESHUFFLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    Linear,
    Mlp2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub input_dim: usize,
    /// Hidden width; used by `Mlp2` only (tanh nonlinearity).
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub init_seed: u64,
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 2 || self.output_dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "encoder dims must be at least 2, got {}x{}",
                self.input_dim, self.output_dim
            )));
        }
        if self.kind == EncoderKind::Mlp2 && self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("Mlp2 needs a hidden width".into()));
        }
        Ok(())
    }
}

/// Encoder parameters. Output rows are l2-normalized after the forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub spec: EncoderSpec,
    w1: Matrix,
    w2: Option<Matrix>,
}

struct ForwardTrace {
    x: Matrix,
    hidden: Option<Matrix>,
    norms: Vec<f64>,
    output: Matrix,
}

impl Encoder {
    /// Gaussian init scaled by 1/sqrt(fan_in), streams 0 and 1 of the seed.
    pub fn init(spec: &EncoderSpec) -> Result<Encoder> {
        spec.validate()?;
        let gaussian = |rows: usize, cols: usize, stream: u64| {
            let mut rng = SeededRng::new(spec.init_seed, stream);
            let scale = 1.0 / (rows as f64).sqrt();
            let mut m = Matrix::zeros(rows, cols);
            for v in m.data_mut() {
                *v = rng.standard_normal() * scale;
            }
            m
        };
        let (w1, w2) = match spec.kind {
            EncoderKind::Linear => (gaussian(spec.input_dim, spec.output_dim, 0), None),
            EncoderKind::Mlp2 => (
                gaussian(spec.input_dim, spec.hidden_dim, 0),
                Some(gaussian(spec.hidden_dim, spec.output_dim, 1)),
            ),
        };
        Ok(Encoder {
            spec: spec.clone(),
            w1,
            w2,
        })
    }

    fn forward(&self, x: &Matrix) -> Result<ForwardTrace> {
        let (hidden, pre) = match self.spec.kind {
            EncoderKind::Linear => (None, x.matmul(&self.w1)),
            EncoderKind::Mlp2 => {
                let mut h = x.matmul(&self.w1);
                for v in h.data_mut() {
                    *v = v.tanh();
                }
                let pre = h.matmul(self.w2.as_ref().expect("Mlp2 has w2"));
                (Some(h), pre)
            }
        };
        let mut output = pre;
        let mut norms = Vec::with_capacity(output.rows());
        for i in 0..output.rows() {
            let row = output.row_mut(i);
            let norm = dot(row, row).sqrt();
            if norm < crate::numerics::ZERO_NORM_FLOOR {
                return Err(Error::ZeroVector { norm });
            }
            for v in row.iter_mut() {
                *v /= norm;
            }
            norms.push(norm);
        }
        Ok(ForwardTrace {
            x: x.clone(),
            hidden,
            norms,
            output,
        })
    }

    /// Embeds raw inputs into a unit-norm batch at the given temperature.
    pub fn embed(&self, x: &Matrix, temperature: f64) -> Result<EmbeddingBatch> {
        let trace = self.forward(x)?;
        EmbeddingBatch::new(trace.output, temperature)
    }

    /// Backpropagates a gradient on the normalized outputs into parameter
    /// gradients. The normalization Jacobian is `(I − yyᵀ)/‖z‖` per row.
    fn backward(&self, trace: &ForwardTrace, d_output: &Matrix) -> (Matrix, Option<Matrix>) {
        let n = trace.output.rows();
        let mut d_pre = Matrix::zeros(n, trace.output.cols());
        for i in 0..n {
            let y = trace.output.row(i);
            let g = d_output.row(i);
            let radial = dot(g, y);
            let dst = d_pre.row_mut(i);
            for ((d, &gv), &yv) in dst.iter_mut().zip(g).zip(y) {
                *d = (gv - radial * yv) / trace.norms[i];
            }
        }
        match self.spec.kind {
            EncoderKind::Linear => (trace.x.transpose_matmul(&d_pre), None),
            EncoderKind::Mlp2 => {
                let h = trace.hidden.as_ref().expect("Mlp2 trace has hidden");
                let w2 = self.w2.as_ref().expect("Mlp2 has w2");
                let g_w2 = h.transpose_matmul(&d_pre);
                let mut d_hidden = d_pre.matmul_transpose(w2);
                for (d, &hv) in d_hidden.data_mut().iter_mut().zip(h.data()) {
                    *d *= 1.0 - hv * hv;
                }
                let g_w1 = trace.x.transpose_matmul(&d_hidden);
                (g_w1, Some(g_w2))
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.w1];
        if let Some(w2) = self.w2.as_mut() {
            out.push(w2);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd {
        learning_rate: f64,
        momentum: f64,
    },
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn default_adam() -> Optimizer {
        Optimizer::Adam {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    fn learning_rate(&self) -> f64 {
        match self {
            Optimizer::Sgd { learning_rate, .. } | Optimizer::Adam { learning_rate, .. } => {
                *learning_rate
            }
        }
    }
}

struct OptimizerState {
    momentum: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl OptimizerState {
    fn new(shapes: &[(usize, usize)]) -> Self {
        OptimizerState {
            momentum: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            second: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            step: 0,
        }
    }

    fn apply(&mut self, optimizer: &Optimizer, params: Vec<&mut Matrix>, grads: &[&Matrix]) {
        self.step += 1;
        match *optimizer {
            Optimizer::Sgd {
                learning_rate,
                momentum,
            } => {
                for ((param, grad), vel) in params.into_iter().zip(grads).zip(&mut self.momentum) {
                    for ((p, &g), v) in param
                        .data_mut()
                        .iter_mut()
                        .zip(grad.data())
                        .zip(vel.data_mut())
                    {
                        *v = momentum * *v + g;
                        *p -= learning_rate * *v;
                    }
                }
            }
            Optimizer::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
            } => {
                let bc1 = 1.0 - beta1.powi(self.step as i32);
                let bc2 = 1.0 - beta2.powi(self.step as i32);
                for (((param, grad), m), v) in params
                    .into_iter()
                    .zip(grads)
                    .zip(&mut self.momentum)
                    .zip(&mut self.second)
                {
                    for (((p, &g), mi), vi) in param
                        .data_mut()
                        .iter_mut()
                        .zip(grad.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * g;
                        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                        let m_hat = *mi / bc1;
                        let v_hat = *vi / bc2;
                        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    /// Record the epoch loss every `eval_every` epochs.
    pub eval_every: usize,
    /// Fraction of samples used to fit the linear probe.
    pub probe_train_fraction: f64,
    pub probe_seed: u64,
}

impl TrainConfig {
    pub fn new(loss: LossConfig) -> TrainConfig {
        TrainConfig {
            loss,
            optimizer: Optimizer::default_adam(),
            epochs: 40,
            batch_size: 128,
            shuffle_seed: 0,
            eval_every: 1,
            probe_train_fraction: 0.7,
            probe_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.optimizer.learning_rate() >= 0.0) {
            return Err(Error::InvalidConfig(
                "learning rate must be nonnegative".into(),
            ));
        }
        if self.batch_size < 4 {
            return Err(Error::InvalidConfig(format!(
                "batch size must be at least 4, got {}",
                self.batch_size
            )));
        }
        if self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::InvalidConfig(
                "epochs and eval_every must be positive".into(),
            ));
        }
        if !(self.probe_train_fraction > 0.0 && self.probe_train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "probe train fraction must lie in (0, 1), got {}",
                self.probe_train_fraction
            )));
        }
        Ok(())
    }
}

/// Training history and probe results. `wall_time_seconds` is the only
/// non-deterministic field and is excluded from equality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    /// Epoch-mean losses recorded at the `eval_every` cadence.
    pub loss_history: Vec<f64>,
    /// Probe accuracy against assigned labels.
    pub probe_accuracy: f64,
    /// Probe accuracy against latent labels (equals `probe_accuracy` when
    /// the data carries no latent labels).
    pub probe_accuracy_clean_latent: f64,
    /// Fraction of per-anchor estimator evaluations that hit the clamp.
    pub clamp_hit_rate: f64,
    pub wall_time_seconds: f64,
}

impl PartialEq for RunReport {
    fn eq(&self, other: &Self) -> bool {
        self.loss_history == other.loss_history
            && self.probe_accuracy == other.probe_accuracy
            && self.probe_accuracy_clean_latent == other.probe_accuracy_clean_latent
            && self.clamp_hit_rate == other.clamp_hit_rate
    }
}

#[cfg(not(target_arch = "wasm32"))]
fn wall_clock() -> Option<std::time::Instant> {
    Some(std::time::Instant::now())
}

#[cfg(target_arch = "wasm32")]
fn wall_clock() -> Option<std::time::Instant> {
    None
}

fn elapsed_seconds(start: Option<std::time::Instant>) -> f64 {
    start.map_or(0.0, |s| s.elapsed().as_secs_f64())
}

/// Shuffles the epoch and chunks it into full batches, reshuffling until
/// every batch holds at least two classes.
fn assemble_epoch(
    labels: &[u32],
    batch_size: usize,
    shuffle_seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    for attempt in 0..MAX_RESHUFFLES {
        let stream = (epoch * MAX_RESHUFFLES + attempt) as u64;
        let mut rng = SeededRng::new(shuffle_seed, stream);
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let batches: Vec<Vec<usize>> = order
            .chunks(batch_size)
            .filter(|c| c.len() == batch_size)
            .map(|c| c.to_vec())
            .collect();
        if batches.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "batch size {batch_size} exceeds dataset size {n}"
            )));
        }
        let ok = batches.iter().all(|batch| {
            let first = labels[batch[0]];
            batch.iter().any(|&i| labels[i] != first)
        });
        if ok {
            return Ok(batches);
        }
    }
    Err(Error::DegenerateBatch {
        attempts: MAX_RESHUFFLES,
    })
}

fn gather_rows(source: &Matrix, indices: &[usize]) -> Matrix {
    let rows: Vec<Vec<f64>> = indices.iter().map(|&i| source.row(i).to_vec()).collect();
    Matrix::from_rows(&rows)
}

/// Trains an encoder on raw inputs with the configured loss.
///
/// Batch positive sets come from assigned labels within the batch; anchors
/// that end up without positives (or without negatives, for D-SCL) in a
/// given batch contribute only as candidates for other anchors.
pub fn train(
    data: &LabeledBatch,
    encoder_spec: &EncoderSpec,
    cfg: &TrainConfig,
) -> Result<(Encoder, RunReport)> {
    cfg.validate()?;
    encoder_spec.validate()?;
    if encoder_spec.input_dim != data.embeddings.dim() {
        return Err(Error::DimensionMismatch {
            left: encoder_spec.input_dim,
            right: data.embeddings.dim(),
        });
    }
    let start = wall_clock();
    let mut encoder = Encoder::init(encoder_spec)?;
    let shapes: Vec<(usize, usize)> = match encoder_spec.kind {
        EncoderKind::Linear => vec![(encoder_spec.input_dim, encoder_spec.output_dim)],
        EncoderKind::Mlp2 => vec![
            (encoder_spec.input_dim, encoder_spec.hidden_dim),
            (encoder_spec.hidden_dim, encoder_spec.output_dim),
        ],
    };
    let mut opt_state = OptimizerState::new(&shapes);
    let inputs = data.embeddings.vectors();
    let labels = data.assigned();

    let mut history = Vec::new();
    let mut clamp_hits = 0usize;
    let mut clamp_slots = 0usize;
    let skip = EvalOptions {
        skip_lonely_anchors: true,
    };

    for epoch in 0..cfg.epochs {
        let batches = assemble_epoch(labels, cfg.batch_size, cfg.shuffle_seed, epoch)?;
        let mut epoch_loss = 0.0;
        for indices in &batches {
            let x = gather_rows(inputs, indices);
            let batch_labels: Vec<u32> = indices.iter().map(|&i| labels[i]).collect();
            let trace = encoder.forward(&x)?;
            let embeddings =
                EmbeddingBatch::new(trace.output.clone(), cfg.loss.temperature)?;
            let batch = LabeledBatch::new(embeddings, batch_labels, None)?;
            let out = evaluate_loss_with(&batch, &cfg.loss, &skip)?;
            if !out.value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    value: out.value,
                    context: format!("epoch {epoch}"),
                });
            }
            epoch_loss += out.value;
            clamp_hits += out.diagnostics.clamp_hits;
            clamp_slots += 2 * out.diagnostics.anchors.len();
            let (g_w1, g_w2) = encoder.backward(&trace, &out.gradient);
            let grads: Vec<&Matrix> = match &g_w2 {
                Some(g2) => vec![&g_w1, g2],
                None => vec![&g_w1],
            };
            opt_state.apply(&cfg.optimizer, encoder.params_mut(), &grads);
        }
        if (epoch + 1) % cfg.eval_every == 0 {
            history.push(epoch_loss / batches.len() as f64);
        }
    }

    let embedded = encoder.embed(inputs, cfg.loss.temperature)?;
    let probe_accuracy = linear_probe(
        &embedded,
        data.assigned(),
        cfg.probe_train_fraction,
        cfg.probe_seed,
    )?;
    let probe_accuracy_clean_latent = match data.latent() {
        Some(latent) => linear_probe(&embedded, latent, cfg.probe_train_fraction, cfg.probe_seed)?,
        None => probe_accuracy,
    };
    let clamp_hit_rate = if clamp_slots == 0 {
        0.0
    } else {
        clamp_hits as f64 / clamp_slots as f64
    };
    Ok((
        encoder,
        RunReport {
            loss_history: history,
            probe_accuracy,
            probe_accuracy_clean_latent,
            clamp_hit_rate,
            wall_time_seconds: elapsed_seconds(start),
        },
    ))
}

/// Multinomial logistic regression on frozen embeddings: full-batch gradient
/// descent (lr 0.1, cap 2000 iterations, stop when the loss delta falls
/// below 1e-6). Returns held-out top-1 accuracy.
pub fn linear_probe(
    embeddings: &EmbeddingBatch,
    labels: &[u32],
    train_fraction: f64,
    seed: u64,
) -> Result<f64> {
    let n = embeddings.n();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: n,
        });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidConfig("need at least 2 samples".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SeededRng::new(seed, 0);
    rng.shuffle(&mut order);
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (train_idx, test_idx) = order.split_at(n_train);

    let classes = *labels.iter().max().unwrap() as usize + 1;
    {
        let mut seen = vec![false; classes];
        for &i in train_idx {
            seen[labels[i] as usize] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(Error::SingleClassSplit);
        }
    }

    let d = embeddings.dim();
    // Weights over [features..., bias].
    let mut weights = Matrix::zeros(d + 1, classes);
    let features = |i: usize| -> Vec<f64> {
        let mut f = embeddings.row(i).to_vec();
        f.push(1.0);
        f
    };

    let mut prev_loss = f64::INFINITY;
    for _ in 0..PROBE_ITERATION_CAP {
        let mut grad = Matrix::zeros(d + 1, classes);
        let mut loss = 0.0;
        for &i in train_idx {
            let f = features(i);
            let mut logits = vec![0.0; classes];
            for (k, logit) in logits.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &fj) in f.iter().enumerate() {
                    acc += fj * weights.get(j, k);
                }
                *logit = acc;
            }
            let lse = crate::numerics::log_sum_exp(&logits).expect("nonempty");
            let target = labels[i] as usize;
            loss += lse - logits[target];
            for (k, &logit) in logits.iter().enumerate() {
                let p = (logit - lse).exp();
                let err = p - if k == target { 1.0 } else { 0.0 };
                for (j, &fj) in f.iter().enumerate() {
                    grad.set(j, k, grad.get(j, k) + err * fj);
                }
            }
        }
        let inv = 1.0 / train_idx.len() as f64;
        loss *= inv;
        for (w, &g) in weights.data_mut().iter_mut().zip(grad.data()) {
            *w -= PROBE_LEARNING_RATE * g * inv;
        }
        if (prev_loss - loss).abs() < PROBE_LOSS_TOLERANCE {
            break;
        }
        prev_loss = loss;
    }

    let mut correct = 0usize;
    for &i in test_idx {
        let f = features(i);
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..classes {
            let mut acc = 0.0;
            for (j, &fj) in f.iter().enumerate() {
                acc += fj * weights.get(j, k);
            }
            if acc > best_score {
                best_score = acc;
                best = k;
            }
        }
        if best == labels[i] as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / test_idx.len() as f64)
}

/// One row of a loss-comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub latent_accuracies: Vec<f64>,
    pub assigned_accuracies: Vec<f64>,
    pub median_latent: f64,
    pub iqr_latent: f64,
    pub median_assigned: f64,
    pub iqr_assigned: f64,
    pub mean_clamp_hit_rate: f64,
    /// Full per-seed training reports, in seed order.
    pub reports: Vec<RunReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub n_seeds: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// One CSV row per (loss, seed) run.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("loss,seed,latent_accuracy,assigned_accuracy\n");
        for row in &self.rows {
            for (seed, (lat, asg)) in row
                .latent_accuracies
                .iter()
                .zip(&row.assigned_accuracies)
                .enumerate()
            {
                out.push_str(&format!("{},{seed},{lat},{asg}\n", row.name));
            }
        }
        out
    }

    pub fn row(&self, name: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

pub fn interquartile_range(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    quantile(&sorted, 0.75) - quantile(&sorted, 0.25)
}

/// Trains every loss over `n_seeds` fresh datasets and reports per-loss
/// medians and interquartile ranges of the probe accuracy, evaluated against
/// latent labels (and assigned labels, for reference).
///
/// Seed `s` offsets every dataset and training seed, so columns for
/// identical loss configs are identical.
pub fn run_comparison(
    dataset: &SyntheticDatasetSpec,
    losses: &[(String, LossConfig)],
    encoder: &EncoderSpec,
    train_cfg: &TrainConfig,
    n_seeds: usize,
) -> Result<ComparisonTable> {
    if n_seeds < 3 {
        return Err(Error::InvalidConfig(format!(
            "need at least 3 seeds, got {n_seeds}"
        )));
    }
    if losses.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut rows: Vec<ComparisonRow> = losses
        .iter()
        .map(|(name, _)| ComparisonRow {
            name: name.clone(),
            latent_accuracies: Vec::new(),
            assigned_accuracies: Vec::new(),
            median_latent: 0.0,
            iqr_latent: 0.0,
            median_assigned: 0.0,
            iqr_assigned: 0.0,
            mean_clamp_hit_rate: 0.0,
            reports: Vec::new(),
        })
        .collect();

    for s in 0..n_seeds as u64 {
        let mut spec = dataset.clone();
        spec.centroid_seed = dataset.centroid_seed.wrapping_add(s);
        spec.sample_seed = dataset.sample_seed.wrapping_add(s);
        spec.noise_seed = dataset.noise_seed.wrapping_add(s);
        let data = generate_noisy(&spec)?.batch;
        for (row, (_, loss)) in rows.iter_mut().zip(losses) {
            let mut cfg = train_cfg.clone();
            cfg.loss = loss.clone();
            cfg.shuffle_seed = train_cfg.shuffle_seed.wrapping_add(s);
            cfg.probe_seed = train_cfg.probe_seed.wrapping_add(s);
            let mut enc = encoder.clone();
            enc.init_seed = encoder.init_seed.wrapping_add(s);
            let (_, report) = train(&data, &enc, &cfg)?;
            row.latent_accuracies.push(report.probe_accuracy_clean_latent);
            row.assigned_accuracies.push(report.probe_accuracy);
            row.mean_clamp_hit_rate += report.clamp_hit_rate / n_seeds as f64;
            row.reports.push(report);
        }
    }
    for row in &mut rows {
        row.median_latent = median(&row.latent_accuracies);
        row.iqr_latent = interquartile_range(&row.latent_accuracies);
        row.median_assigned = median(&row.assigned_accuracies);
        row.iqr_assigned = interquartile_range(&row.assigned_accuracies);
    }
    Ok(ComparisonTable { n_seeds, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossVariant;
    use crate::noise::NoiseSpec;
    use crate::synth::{generate, NoiseMechanism, SyntheticDatasetSpec};

    fn tiny_dataset(c: usize, d: usize, m: usize, kappa: f64) -> LabeledBatch {
        let spec = SyntheticDatasetSpec {
            num_classes: c,
            dim: d,
            samples_per_class: m,
            concentration: kappa,
            centroid_seed: 1,
            sample_seed: 2,
            noise_seed: 3,
            noise: NoiseSpec::new(c, 0.0).unwrap(),
            noise_mechanism: NoiseMechanism::Symmetric,
            confusable_temperature: 0.1,
            temperature: 0.5,
        };
        generate(&spec).unwrap().batch
    }

    fn supcon_cfg() -> LossConfig {
        let mut cfg = LossConfig::new(LossVariant::SupConIn);
        cfg.temperature = 0.5;
        cfg
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let data = tiny_dataset(2, 4, 10, 20.0);
        let spec = EncoderSpec {
            kind: EncoderKind::Linear,
            input_dim: 4,
            hidden_dim: 0,
            output_dim: 4,
            init_seed: 5,
        };
        let mut cfg = TrainConfig::new(supcon_cfg());
        cfg.optimizer = Optimizer::Sgd {
            learning_rate: 0.0,
            momentum: 0.0,
        };
        cfg.epochs = 5;
        cfg.batch_size = 20; // full batch, so the epoch loss is comparable
        let (encoder, report) = train(&data, &spec, &cfg).unwrap();
        let fresh = Encoder::init(&spec).unwrap();
        assert_eq!(encoder.w1, fresh.w1);
        // Constant up to summation order (batches reshuffle each epoch).
        let first = report.loss_history[0];
        assert!(report
            .loss_history
            .iter()
            .all(|&l| (l - first).abs() < 1e-12));
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = tiny_dataset(3, 6, 12, 10.0);
        let spec = EncoderSpec {
            kind: EncoderKind::Mlp2,
            input_dim: 6,
            hidden_dim: 8,
            output_dim: 4,
            init_seed: 9,
        };
        let mut cfg = TrainConfig::new(supcon_cfg());
        cfg.epochs = 6;
        cfg.batch_size = 12;
        let (enc_a, report_a) = train(&data, &spec, &cfg).unwrap();
        let (enc_b, report_b) = train(&data, &spec, &cfg).unwrap();
        assert_eq!(enc_a, enc_b);
        assert_eq!(report_a, report_b);
        assert_eq!(report_a.loss_history, report_b.loss_history);
    }

    #[test]
    fn separable_two_class_data_reaches_high_probe_accuracy() {
        let data = tiny_dataset(2, 4, 30, 50.0);
        let spec = EncoderSpec {
            kind: EncoderKind::Linear,
            input_dim: 4,
            hidden_dim: 0,
            output_dim: 4,
            init_seed: 3,
        };
        let mut cfg = TrainConfig::new(supcon_cfg());
        cfg.epochs = 200;
        cfg.batch_size = 20;
        cfg.optimizer = Optimizer::default_adam();
        let (_, report) = train(&data, &spec, &cfg).unwrap();
        assert!(
            report.probe_accuracy >= 0.95,
            "probe accuracy {}",
            report.probe_accuracy
        );
    }

    #[test]
    fn loss_decreases_on_easy_data() {
        let data = tiny_dataset(2, 6, 20, 10.0);
        let spec = EncoderSpec {
            kind: EncoderKind::Linear,
            input_dim: 6,
            hidden_dim: 0,
            output_dim: 4,
            init_seed: 1,
        };
        let mut cfg = TrainConfig::new(supcon_cfg());
        cfg.epochs = 30;
        cfg.batch_size = 20;
        let (_, report) = train(&data, &spec, &cfg).unwrap();
        let first = report.loss_history.first().unwrap();
        let last = report.loss_history.last().unwrap();
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn probe_errors_on_single_class_labels() {
        let data = tiny_dataset(2, 4, 10, 10.0);
        let labels = vec![0u32; data.n()];
        let err = linear_probe(&data.embeddings, &labels, 0.7, 0);
        assert!(matches!(err, Err(Error::SingleClassSplit)));
    }

    #[test]
    fn probe_is_perfect_on_cleanly_clustered_points() {
        // One point per class, duplicated many times.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..3u32 {
            for _ in 0..10 {
                let mut v = vec![0.0; 3];
                v[i as usize] = 1.0;
                rows.push(v);
                labels.push(i);
            }
        }
        let emb = EmbeddingBatch::new(Matrix::from_rows(&rows), 1.0).unwrap();
        let acc = linear_probe(&emb, &labels, 0.5, 1).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn probe_matches_exhaustive_linear_classifier_in_2d() {
        // Two overlapping angular clusters on the circle. The probe should
        // come close to the best linear rule found by brute-force grid
        // search (which optimizes test accuracy directly, so it is an upper
        // bound up to grid resolution).
        let mut rng = SeededRng::new(31, 0);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2u32 {
            let center = if i == 0 { 0.3f64 } else { 1.5 };
            for _ in 0..60 {
                let angle = center + 0.45 * rng.standard_normal();
                rows.push(vec![angle.cos(), angle.sin()]);
                labels.push(i);
            }
        }
        let emb = EmbeddingBatch::new(Matrix::from_rows(&rows), 1.0).unwrap();
        let split = 0.5;
        let seed = 2;
        let acc = linear_probe(&emb, &labels, split, seed).unwrap();

        // Re-derive the probe's exact test split.
        let n = emb.n();
        let mut order: Vec<usize> = (0..n).collect();
        let mut split_rng = SeededRng::new(seed, 0);
        split_rng.shuffle(&mut order);
        let n_train = ((split * n as f64).round() as usize).clamp(1, n - 1);
        let test_idx = &order[n_train..];

        let mut best = 0.0f64;
        for theta_step in 0..360 {
            let theta = theta_step as f64 * std::f64::consts::PI / 180.0;
            let (c, s) = (theta.cos(), theta.sin());
            for bias_step in -100..=100 {
                let b = bias_step as f64 / 50.0;
                let mut correct = 0;
                for &i in test_idx {
                    let score = c * emb.row(i)[0] + s * emb.row(i)[1] + b;
                    let pred = if score > 0.0 { 0 } else { 1 };
                    if pred == labels[i] {
                        correct += 1;
                    }
                }
                best = best.max(correct as f64 / test_idx.len() as f64);
            }
        }
        assert!(
            acc >= best - 0.05 && acc <= best + 1e-9,
            "probe {acc} vs grid-search optimum {best}"
        );
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        // Finite differences through encoder parameters on a tiny instance.
        let data = tiny_dataset(2, 3, 4, 8.0);
        let spec = EncoderSpec {
            kind: EncoderKind::Mlp2,
            input_dim: 3,
            hidden_dim: 4,
            output_dim: 3,
            init_seed: 11,
        };
        let loss_cfg = supcon_cfg();
        let encoder = Encoder::init(&spec).unwrap();
        let x = data.embeddings.vectors().clone();
        let labels = data.assigned().to_vec();

        let eval = |enc: &Encoder| -> f64 {
            let emb = enc.embed(&x, loss_cfg.temperature).unwrap();
            let b = LabeledBatch::new(emb, labels.clone(), None).unwrap();
            crate::losses::evaluate_loss(&b, &loss_cfg).unwrap().value
        };

        let trace = encoder.forward(&x).unwrap();
        let emb = EmbeddingBatch::new(trace.output.clone(), loss_cfg.temperature).unwrap();
        let b = LabeledBatch::new(emb, labels.clone(), None).unwrap();
        let out = crate::losses::evaluate_loss(&b, &loss_cfg).unwrap();
        let (g_w1, g_w2) = encoder.backward(&trace, &out.gradient);

        let h = 1e-6;
        let check = |which: usize, analytic: &Matrix| {
            for i in 0..analytic.rows() {
                for j in 0..analytic.cols() {
                    let mut plus = encoder.clone();
                    let mut minus = encoder.clone();
                    {
                        let p = if which == 0 {
                            &mut plus.w1
                        } else {
                            plus.w2.as_mut().unwrap()
                        };
                        p.set(i, j, p.get(i, j) + h);
                        let m = if which == 0 {
                            &mut minus.w1
                        } else {
                            minus.w2.as_mut().unwrap()
                        };
                        m.set(i, j, m.get(i, j) - h);
                    }
                    let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                    let a = analytic.get(i, j);
                    let rel = (a - fd).abs() / 1.0f64.max(a.abs()).max(fd.abs());
                    assert!(rel < 1e-4, "param {which} ({i},{j}): {a} vs {fd}");
                }
            }
        };
        check(0, &g_w1);
        check(1, g_w2.as_ref().unwrap());
    }

    #[test]
    fn no_nonfinite_loss_across_variants_and_noise() {
        for &tau in &[0.0, 0.1, 0.4] {
            let spec = SyntheticDatasetSpec {
                num_classes: 3,
                dim: 5,
                samples_per_class: 12,
                concentration: 8.0,
                centroid_seed: 4,
                sample_seed: 5,
                noise_seed: 6,
                noise: NoiseSpec::new(3, tau).unwrap(),
                noise_mechanism: NoiseMechanism::Symmetric,
                confusable_temperature: 0.1,
                temperature: 0.5,
            };
            let data = crate::synth::generate_noisy(&spec).unwrap().batch;
            for variant in LossVariant::ALL {
                let mut loss = LossConfig::new(variant);
                loss.temperature = 0.5;
                loss.tau_plus = 0.1;
                let mut cfg = TrainConfig::new(loss);
                cfg.epochs = 3;
                cfg.batch_size = 12;
                let spec = EncoderSpec {
                    kind: EncoderKind::Linear,
                    input_dim: 5,
                    hidden_dim: 0,
                    output_dim: 4,
                    init_seed: 7,
                };
                let result = train(&data, &spec, &cfg);
                assert!(result.is_ok(), "{variant:?} tau {tau}: {result:?}");
            }
        }
    }

    #[test]
    fn comparison_identical_configs_give_identical_columns() {
        let dataset = SyntheticDatasetSpec {
            num_classes: 3,
            dim: 5,
            samples_per_class: 15,
            concentration: 10.0,
            centroid_seed: 1,
            sample_seed: 2,
            noise_seed: 3,
            noise: NoiseSpec::new(3, 0.1).unwrap(),
            noise_mechanism: NoiseMechanism::Symmetric,
            confusable_temperature: 0.1,
            temperature: 0.5,
        };
        let encoder = EncoderSpec {
            kind: EncoderKind::Linear,
            input_dim: 5,
            hidden_dim: 0,
            output_dim: 4,
            init_seed: 4,
        };
        let mut cfg = TrainConfig::new(supcon_cfg());
        cfg.epochs = 4;
        cfg.batch_size = 15;
        let losses = vec![
            ("a".to_string(), supcon_cfg()),
            ("b".to_string(), supcon_cfg()),
        ];
        let table = run_comparison(&dataset, &losses, &encoder, &cfg, 3).unwrap();
        assert_eq!(
            table.rows[0].latent_accuracies,
            table.rows[1].latent_accuracies
        );
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 3);
    }

    #[test]
    fn median_and_iqr_definitions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(interquartile_range(&[1.0, 2.0, 3.0, 4.0, 5.0]), 2.0);
    }
}
