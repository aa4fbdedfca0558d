//! `bpn train` — one training run into a run directory.

use std::path::PathBuf;

use anyhow::Result;
use bpn_core::rl;

use crate::config::{resolve, Resolved};
use crate::runs::RunDir;
use crate::TrainFlags;

pub fn run(flags: &TrainFlags, out: Option<PathBuf>) -> Result<()> {
    let resolved = resolve(flags)?;
    let dir = out.unwrap_or_else(|| resolved.default_out_dir());
    run_resolved(&resolved, &dir)?;
    Ok(())
}

/// Execute one resolved run into `dir`. Returns the per-iteration mean
/// total rewards.
pub fn run_resolved(resolved: &Resolved, dir: &std::path::Path) -> Result<Vec<f64>> {
    log::info!(
        "training {} on {} into {} (run id {})",
        resolved.algo.name(),
        resolved.env.name(),
        dir.display(),
        resolved.run_id()
    );
    let mut observer = RunDir::create(resolved, dir)?;
    let (_params, records) = rl::train(&resolved.train, resolved.env, resolved.algo, &mut observer);
    observer.finish()?;
    let curve: Vec<f64> = records.iter().map(|r| r.mean_total_reward()).collect();
    let best = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "run {} complete: {} iterations, best mean total reward {:.3}, final {:.3}",
        resolved.run_id(),
        records.len(),
        best,
        curve.last().copied().unwrap_or(f64::NAN),
    );
    Ok(curve)
}
