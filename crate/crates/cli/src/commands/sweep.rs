//! `bpn sweep` — an N × α grid of runs, aggregated into heatmap.csv.
//!
//! Each (n, α, seed) cell runs in its own directory and is skipped on rerun
//! once its completion marker exists, so interrupted sweeps resume.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use bpn_core::cvi::CviConfig;

use crate::config::resolve;
use crate::runs::{read_curve, DONE_MARKER};
use crate::TrainFlags;

/// Desk-scale default grid; `--full` switches to the paper-scale one.
const DESK_NODES: &[usize] = &[25, 400];
const DESK_ALPHAS: &[f64] = &[0.0, 0.95];
const DESK_SEEDS: usize = 3;
const FULL_NODES: &[usize] = &[25, 50, 100, 200, 400];
const FULL_ALPHAS: &[f64] = &[0.0, 0.5, 0.9, 0.95, 0.99];
const FULL_SEEDS: usize = 5;

pub fn run(
    flags: &TrainFlags,
    out: &Path,
    nodes_grid: Option<Vec<usize>>,
    alpha_grid: Option<Vec<f64>>,
    seeds: Option<usize>,
    full: bool,
) -> Result<()> {
    let base = resolve(flags)?;
    let nodes = nodes_grid.unwrap_or_else(|| {
        if full { FULL_NODES.to_vec() } else { DESK_NODES.to_vec() }
    });
    let alphas = alpha_grid.unwrap_or_else(|| {
        if full { FULL_ALPHAS.to_vec() } else { DESK_ALPHAS.to_vec() }
    });
    let n_seeds = seeds.unwrap_or(if full { FULL_SEEDS } else { DESK_SEEDS });
    if nodes.is_empty() || alphas.is_empty() || n_seeds == 0 {
        bail!("empty sweep grid");
    }
    std::fs::create_dir_all(out)?;

    let total = nodes.len() * alphas.len() * n_seeds;
    let mut done = 0usize;
    let mut rows = Vec::new();
    for &n in &nodes {
        for &alpha in &alphas {
            let mut curves: Vec<Vec<f64>> = Vec::with_capacity(n_seeds);
            for s in 0..n_seeds {
                let mut cell = base.clone();
                cell.train.nodes = n;
                cell.train.cvi =
                    CviConfig::new(alpha, cell.train.cvi.beta, cell.train.cvi.gamma_discount);
                cell.train.seed = base.train.seed + s as u64;
                let dir = out.join(format!("n{n}-a{alpha}-s{}", cell.train.seed));
                done += 1;
                if dir.join(DONE_MARKER).exists() {
                    log::info!("[{done}/{total}] {} already complete, skipping", dir.display());
                } else {
                    log::info!("[{done}/{total}] running {}", dir.display());
                    crate::commands::train::run_resolved(&cell, &dir)?;
                }
                curves.push(read_curve(&dir.join("curves.csv"))?);
            }
            rows.push((n, alpha, cell_value(&curves)?));
        }
    }

    let mut csv = String::from("n,alpha,seed_mean_max_reward\n");
    for (n, alpha, v) in &rows {
        let _ = writeln!(csv, "{n},{alpha},{v}");
    }
    std::fs::write(out.join("heatmap.csv"), &csv)?;
    println!("sweep complete: {total} runs, heatmap written to {}", out.join("heatmap.csv").display());
    for (n, alpha, v) in &rows {
        println!("  n={n:<4} alpha={alpha:<5} seed-mean max reward {v:.3}");
    }
    Ok(())
}

/// Fig.-7-style cell value: average the per-iteration curves over seeds
/// pointwise, then take the maximum over iterations.
pub fn cell_value(curves: &[Vec<f64>]) -> Result<f64> {
    let len = curves
        .iter()
        .map(Vec::len)
        .min()
        .context("no curves for sweep cell")?;
    if len == 0 {
        bail!("empty curve in sweep cell");
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..len {
        let mean = curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64;
        best = best.max(mean);
    }
    Ok(best)
}
