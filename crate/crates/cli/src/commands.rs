//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use dscl_core::gradcheck::{check_all_variants, GradCheckSettings};
use dscl_core::io as emb_io;
use dscl_core::losses::LossConfig;
use dscl_core::noise::{
    false_negative_rate, false_positive_rate, outcome_table, simulate_pair_outcomes, NoiseSpec,
};
use dscl_core::similarity::{overlap_report, JsdMode, PairCategory};
use dscl_core::synth::{generate_noisy, SyntheticDatasetSpec};
use dscl_core::trainer::run_comparison;
use dscl_core::SeededRng;

use crate::config::{ExperimentConfig, OutputFormat};

/// Unix timestamp attached to reports unless suppressed.
fn timestamp_field(no_timestamp: bool) -> Option<u64> {
    if no_timestamp {
        return None;
    }
    Some(
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    )
}

fn write_or_print(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
            }
            std::fs::write(p, contents).with_context(|| format!("writing {}", p.display()))?;
        }
        None => println!("{contents}"),
    }
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn analyze_noise(
    classes: usize,
    error_rate: f64,
    simulate: Option<u64>,
    seed: u64,
    out: Option<PathBuf>,
    no_timestamp: bool,
) -> Result<()> {
    let spec = NoiseSpec::new(classes, error_rate)?;
    let fp = false_positive_rate(&spec)?;
    let fnr = false_negative_rate(&spec)?;
    let table = outcome_table(&spec)?;
    let simulated = match simulate {
        Some(n) if n > 0 => {
            let mut rng = SeededRng::new(seed, 0);
            Some(simulate_pair_outcomes(&spec, n, &mut rng)?)
        }
        _ => None,
    };
    let mut doc = json!({
        "classes": classes,
        "error_rate": error_rate,
        "fp_rate": fp,
        "fn_rate": fnr,
        "outcome_table": table,
    });
    if let Some(sim) = simulated {
        doc["simulated"] = serde_json::to_value(sim)?;
    }
    if let Some(ts) = timestamp_field(no_timestamp) {
        doc["timestamp_unix"] = json!(ts);
    }
    write_or_print(out.as_deref(), &pretty(&doc)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DataFormat {
    Bin,
    Csv,
}

pub fn generate_data(
    spec: SyntheticDatasetSpec,
    out: PathBuf,
    format: DataFormat,
) -> Result<()> {
    let dataset = generate_noisy(&spec)?;
    match format {
        DataFormat::Bin => {
            let bytes = emb_io::encode_labeled(&dataset.batch)?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))?;
        }
        DataFormat::Csv => {
            write_or_print(Some(&out), &emb_io::to_csv(&dataset.batch))?;
        }
    }
    Ok(())
}

fn histograms_csv(report: &dscl_core::similarity::OverlapReport) -> String {
    let mut out = String::from("category,bin,lower_edge,upper_edge,count\n");
    for category in PairCategory::ALL {
        let counts = report.histograms.counts_for(category);
        for (bin, &count) in counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{bin},{},{},{count}\n",
                category.name(),
                report.histograms.bin_edges[bin],
                report.histograms.bin_edges[bin + 1],
            ));
        }
    }
    out
}

pub fn similarity(
    embeddings: PathBuf,
    bins: usize,
    temperature: f64,
    mode: JsdMode,
    out_dir: PathBuf,
    no_timestamp: bool,
) -> Result<()> {
    let batch = emb_io::read_labeled(&embeddings, temperature)
        .with_context(|| format!("reading {}", embeddings.display()))?;
    let report = overlap_report(&batch, bins, mode)?;
    std::fs::create_dir_all(&out_dir)?;
    write_or_print(Some(&out_dir.join("histograms.csv")), &histograms_csv(&report))?;
    let mut doc = json!({
        "mode": report.mode,
        "bins": report.bins,
        "jsd_true_pos_true_neg": report.jsd_true_pos_true_neg,
        "jsd_true_pos_false_pos": report.jsd_true_pos_false_pos,
    });
    if let Some(ts) = timestamp_field(no_timestamp) {
        doc["timestamp_unix"] = json!(ts);
    }
    write_or_print(Some(&out_dir.join("jsd.json")), &pretty(&doc)?)
}

pub fn simulate(
    config_path: PathBuf,
    out_dir: Option<PathBuf>,
    no_timestamp: bool,
) -> Result<()> {
    let text = std::fs::read_to_string(&config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let config = ExperimentConfig::from_json(&text)
        .with_context(|| format!("parsing {}", config_path.display()))?;
    let out_dir = out_dir
        .or_else(|| config.output.directory.clone().map(PathBuf::from))
        .context("no output directory: pass --out or set output.directory")?;
    std::fs::create_dir_all(&out_dir)?;

    let losses: Vec<(String, LossConfig)> = config
        .losses
        .iter()
        .map(|l| (l.name.clone(), l.config.clone()))
        .collect();
    let train_cfg = config
        .train
        .to_train_config(losses.first().context("config lists no losses")?.1.clone());
    let mut table = run_comparison(
        &config.dataset,
        &losses,
        &config.train.encoder,
        &train_cfg,
        config.train.n_seeds,
    )?;
    if no_timestamp {
        for row in &mut table.rows {
            for report in &mut row.reports {
                report.wall_time_seconds = 0.0;
            }
        }
    }

    let json_wanted = config.output.formats.contains(&OutputFormat::Json);
    let csv_wanted = config.output.formats.contains(&OutputFormat::Csv);
    if csv_wanted {
        write_or_print(Some(&out_dir.join("comparison.csv")), &table.to_csv())?;
    }
    if json_wanted {
        let mut doc = json!({
            "config": config,
            "comparison": table,
        });
        if let Some(ts) = timestamp_field(no_timestamp) {
            doc["timestamp_unix"] = json!(ts);
        }
        write_or_print(Some(&out_dir.join("reports.json")), &pretty(&doc)?)?;
    }

    // Side analyses of the first-seed dataset: noise rates and the
    // pair-similarity overlap table.
    let dataset = generate_noisy(&config.dataset)?;
    let overlap = overlap_report(&dataset.batch, config.analysis.bins, config.analysis.jsd_mode)?;
    if csv_wanted {
        write_or_print(Some(&out_dir.join("similarity.csv")), &histograms_csv(&overlap))?;
    }
    if json_wanted {
        let fp = false_positive_rate(&config.dataset.noise)?;
        let fnr = false_negative_rate(&config.dataset.noise)?;
        let simulated = if config.analysis.simulate_pairs > 0 {
            let mut rng = SeededRng::new(config.dataset.noise_seed, 1);
            Some(simulate_pair_outcomes(
                &config.dataset.noise,
                config.analysis.simulate_pairs,
                &mut rng,
            )?)
        } else {
            None
        };
        let mut doc = json!({
            "fp_rate": fp,
            "fn_rate": fnr,
            "simulated": simulated,
            "jsd_true_pos_true_neg": overlap.jsd_true_pos_true_neg,
            "jsd_true_pos_false_pos": overlap.jsd_true_pos_false_pos,
        });
        if let Some(ts) = timestamp_field(no_timestamp) {
            doc["timestamp_unix"] = json!(ts);
        }
        write_or_print(Some(&out_dir.join("analysis.json")), &pretty(&doc)?)?;
    }
    Ok(())
}

/// Returns false when any variant exceeds the tolerance.
pub fn gradcheck(
    step: f64,
    tolerance: f64,
    seeds: u64,
    json_output: bool,
    out: Option<PathBuf>,
) -> Result<bool> {
    let settings = GradCheckSettings {
        step,
        tolerance,
        seeds,
        ..Default::default()
    };
    let report = check_all_variants(&settings)?;
    if json_output {
        write_or_print(out.as_deref(), &pretty(&report)?)?;
    } else {
        let mut lines = String::new();
        for check in &report.checks {
            lines.push_str(&format!(
                "{:<28} max_rel_err {:.3e}  ({} cases)  {}\n",
                check.variant,
                check.max_relative_error,
                check.cases,
                if check.passed { "ok" } else { "FAIL" }
            ));
        }
        lines.push_str(&format!(
            "gradcheck: {} (tolerance {:.1e}, step {:.1e})",
            if report.passed { "ok" } else { "FAILED" },
            report.tolerance,
            report.step
        ));
        write_or_print(out.as_deref(), &lines)?;
    }
    Ok(report.passed)
}
