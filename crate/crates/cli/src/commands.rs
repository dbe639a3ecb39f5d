//! Subcommand implementations. Each command loads a scenario config, does its
//! work through the library, and writes every artifact through a manifest
//! builder so nothing lands outside the manifest.

use std::fs::File;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use subplan_core::acoustics::{render_diagram, write_diagram_csv};
use subplan_core::control::{self, ScenarioConfig};
use subplan_core::dp;
use subplan_core::error::{Error, Result};
use subplan_core::quantize;

use crate::manifest::{ManifestBuilder, RunManifest};

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Contract(_) | Error::Init(_) => 2,
        Error::Numerical(_) => 3,
        Error::Io(_) => 4,
    }
}

fn load_config(path: &Path, seed_override: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::from_path(path)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Render the loss diagram of every configured emitter as a CSV matrix.
pub fn cmd_diagram(config: &Path, out: &Path, seed_override: Option<u64>) -> Result<RunManifest> {
    let cfg = load_config(config, seed_override)?;
    let mut manifest = ManifestBuilder::new("diagram", &cfg.canonical_bytes(), cfg.seed, out)?;
    let started = Instant::now();
    let saturation = cfg.diagram.saturation.unwrap_or(f64::INFINITY);
    let render_to = |field, name: &str, manifest: &mut ManifestBuilder| -> Result<()> {
        let diagram = render_diagram(
            field,
            cfg.diagram.range_max,
            cfg.diagram.n_range,
            cfg.diagram.n_depth,
            saturation,
        )?;
        let mut buf = Vec::new();
        write_diagram_csv(&diagram, &mut buf)?;
        manifest.write_output(name, &buf)
    };
    for (k, target) in cfg.targets.iter().enumerate() {
        render_to(&target.emitter, &format!("target{}_loss.csv", k + 1), &mut manifest)?;
    }
    if let Some(field) = &cfg.carrier.emitter {
        render_to(field, "carrier_loss.csv", &mut manifest)?;
    }
    manifest.record_phase("render", started.elapsed().as_secs_f64());
    manifest.finish()
}

/// Train grids over the full horizon, estimate transitions, archive the chain.
pub fn cmd_quantize(config: &Path, out: &Path, seed_override: Option<u64>) -> Result<RunManifest> {
    let cfg = load_config(config, seed_override)?;
    let mut manifest = ManifestBuilder::new("quantize", &cfg.canonical_bytes(), cfg.seed, out)?;
    let started = Instant::now();
    let chain = control::build_prior_chain(&cfg, cfg.total_steps)?;
    manifest.record_phase("quantize", started.elapsed().as_secs_f64());
    let mut buf = Vec::new();
    quantize::save_chain(&chain, &mut buf)?;
    manifest.write_output("chain.json", &buf)?;
    manifest.finish()
}

/// Solve the dynamic program against a stored chain archive.
pub fn cmd_solve(
    config: &Path,
    chain_path: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<RunManifest> {
    let cfg = load_config(config, seed_override)?;
    let chain = quantize::load_chain(File::open(chain_path)?)?;
    let mut manifest = ManifestBuilder::new("solve", &cfg.canonical_bytes(), cfg.seed, out)?;
    let started = Instant::now();
    let solution = dp::solve(
        &chain,
        &cfg.action_space(),
        &cfg.carrier_start(),
        &cfg.cost_model()?,
        &cfg.target_depths(),
        dp::Direction::Min,
    )?;
    manifest.record_phase("solve", started.elapsed().as_secs_f64());
    let archive = dp::to_archive(&solution);
    let mut buf = Vec::new();
    dp::save_tables(&archive, &mut buf)?;
    manifest.write_output("tables.json", &buf)?;
    manifest.finish()
}

#[derive(Debug, Serialize)]
struct RunMetrics {
    baseline: bool,
    diverged_at: Option<usize>,
    subinterval_starts: Vec<usize>,
    stats: control::RunStats,
}

/// Execute a scenario loop; write the step log, metrics and manifest.
/// A diverged filter still lands its partial outputs, then surfaces as a
/// numerical error (exit code 3).
pub fn cmd_run(
    config: &Path,
    out: &Path,
    baseline: bool,
    seed_override: Option<u64>,
) -> Result<RunManifest> {
    let cfg = load_config(config, seed_override)?;
    let mut manifest = ManifestBuilder::new("run", &cfg.canonical_bytes(), cfg.seed, out)?;
    let started = Instant::now();
    let log = control::run_scenario(&cfg, baseline)?;
    manifest.record_phase("run", started.elapsed().as_secs_f64());
    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    manifest.write_output("log.csv", &csv)?;
    let metrics = RunMetrics {
        baseline,
        diverged_at: log.diverged,
        subinterval_starts: log.subinterval_starts.clone(),
        stats: control::RunStats::from_log(&log),
    };
    let metrics_bytes = serde_json::to_vec_pretty(&metrics)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    manifest.write_output("metrics.json", &metrics_bytes)?;
    let manifest = manifest.finish()?;
    if let Some(t) = log.diverged {
        return Err(Error::Numerical(format!(
            "filter diverged at step {t}; partial log and manifest written"
        )));
    }
    Ok(manifest)
}

/// Compare two run logs; `split` marks the first optimized step for the
/// per-period means (0 treats everything as the optimization period).
pub fn cmd_compare(
    log_a: &Path,
    log_b: &Path,
    out: &Path,
    split: usize,
) -> Result<RunManifest> {
    let bytes_a = std::fs::read(log_a)?;
    let bytes_b = std::fs::read(log_b)?;
    let a = control::ScenarioLog::read_csv(bytes_a.as_slice(), split)?;
    let b = control::ScenarioLog::read_csv(bytes_b.as_slice(), split)?;
    let summary = control::compare_runs(&a, &b)?;
    let mut config_bytes = bytes_a.clone();
    config_bytes.extend_from_slice(&bytes_b);
    config_bytes.extend_from_slice(&split.to_le_bytes());
    let mut manifest = ManifestBuilder::new("compare", &config_bytes, 0, out)?;
    let summary_bytes = serde_json::to_vec_pretty(&summary)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    manifest.write_output("compare.json", &summary_bytes)?;
    manifest.finish()
}
