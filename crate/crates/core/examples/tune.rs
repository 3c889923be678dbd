//! Scratch harness for exploring training hyperparameters on the synthetic
//! noise-robustness comparison. Not part of the test suite.

use dscl_core::losses::{LossConfig, LossVariant, PositiveBetaSign};
use dscl_core::noise::NoiseSpec;
use dscl_core::synth::{NoiseMechanism, SyntheticDatasetSpec};
use dscl_core::trainer::{run_comparison, EncoderKind, EncoderSpec, Optimizer, TrainConfig};

fn dataset(tau: f64, temperature: f64) -> SyntheticDatasetSpec {
    SyntheticDatasetSpec {
        num_classes: 10,
        dim: 16,
        samples_per_class: 200,
        concentration: 10.0,
        centroid_seed: 1000,
        sample_seed: 2000,
        noise_seed: 3000,
        noise: NoiseSpec::new(10, tau).unwrap(),
        noise_mechanism: NoiseMechanism::ConfusableBySimilarity,
        confusable_temperature: 0.1,
        temperature,
    }
}

fn loss(variant: LossVariant, t: f64, beta: f64, tau_plus: f64, floor: Option<f64>) -> LossConfig {
    let mut cfg = LossConfig::new(variant);
    cfg.temperature = t;
    cfg.beta = beta;
    cfg.tau_plus = tau_plus;
    cfg.clamp_floor = floor;
    if std::env::args().any(|a| a == "--paper-sign") {
        cfg.positive_beta_sign = PositiveBetaSign::PaperEstimator;
    }
    cfg
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |name: &str, default: f64| -> f64 {
        args.iter()
            .position(|a| a == name)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse().ok())
            .unwrap_or(default)
    };
    let t = get("--temperature", 0.2);
    let beta = get("--beta", 1.0);
    let tau = get("--tau", 0.10);
    let tau_plus = get("--tau-plus", 0.03);
    let epochs = get("--epochs", 30.0) as usize;
    let lr = get("--lr", 0.01);
    let seeds = get("--seeds", 3.0) as usize;
    let hidden = get("--hidden", 0.0) as usize;
    let out_dim = get("--out-dim", 16.0) as usize;
    let floor = {
        let v = get("--clamp-floor", -1.0);
        (v > 0.0).then_some(v)
    };

    let encoder = EncoderSpec {
        kind: if hidden == 0 {
            EncoderKind::Linear
        } else {
            EncoderKind::Mlp2
        },
        input_dim: 16,
        hidden_dim: hidden,
        output_dim: out_dim,
        init_seed: 42,
    };
    let mut train_cfg = TrainConfig::new(loss(LossVariant::SupConIn, t, beta, tau_plus, floor));
    train_cfg.optimizer = Optimizer::Adam {
        learning_rate: lr,
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
    };
    train_cfg.epochs = epochs;
    train_cfg.batch_size = 128;
    train_cfg.shuffle_seed = 11;
    train_cfg.probe_seed = 12;

    let losses = vec![
        (
            "supcon-in".to_string(),
            loss(LossVariant::SupConIn, t, beta, tau_plus, floor),
        ),
        (
            "dscl-full".to_string(),
            loss(LossVariant::DsclFull, t, beta, tau_plus, floor),
        ),
        (
            "dscl-neg-only".to_string(),
            loss(LossVariant::DsclNegOnly, t, beta, tau_plus, floor),
        ),
        (
            "dscl-pos-only".to_string(),
            loss(LossVariant::DsclPosOnly, t, beta, tau_plus, floor),
        ),
        (
            "dscl-nodebias".to_string(),
            loss(LossVariant::DsclFull, t, beta, 1.0, floor),
        ),
    ];

    let start = std::time::Instant::now();
    let table = run_comparison(&dataset(tau, t), &losses, &encoder, &train_cfg, seeds).unwrap();
    println!(
        "tau={tau} T={t} beta={beta} tau_plus={tau_plus} floor={floor:?} epochs={epochs} lr={lr} hidden={hidden} seeds={seeds}  ({:.1}s)",
        start.elapsed().as_secs_f64()
    );
    for row in &table.rows {
        println!(
            "  {:<15} median_latent {:.4}  iqr {:.4}  assigned {:.4}  clamp {:.4}  accs {:?}",
            row.name,
            row.median_latent,
            row.iqr_latent,
            row.median_assigned,
            row.mean_clamp_hit_rate,
            row.latent_accuracies
                .iter()
                .map(|a| (a * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        );
    }
}
