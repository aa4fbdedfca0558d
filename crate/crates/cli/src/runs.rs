//! Run directories: manifest, streamed learning curves, per-iteration
//! checkpoints (latest + best), and wall-time records.
//!
//! curves.csv carries only deterministic columns so identical manifests
//! reproduce it byte for byte; wall-clock timings go to timings.csv.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use bpn_core::format;
use bpn_core::net::NetworkParams;
use bpn_core::rl::{Algo, IterationRecord, TrainObserver};

use crate::config::Resolved;

pub const CURVES_HEADER: &str = "iteration,episode,total_reward,mean_loss";
pub const DONE_MARKER: &str = "COMPLETE";

pub struct RunDir {
    pub dir: PathBuf,
    algo: Algo,
    curves: BufWriter<File>,
    timings: BufWriter<File>,
    best_reward: f64,
    iter_started: Instant,
    pub failed: Option<anyhow::Error>,
}

impl RunDir {
    /// Create the directory, write the manifest, open the CSV streams.
    pub fn create(resolved: &Resolved, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating run directory {}", dir.display()))?;
        std::fs::write(dir.join("manifest.txt"), resolved.manifest(dir))?;
        let mut curves = BufWriter::new(File::create(dir.join("curves.csv"))?);
        writeln!(curves, "{CURVES_HEADER}")?;
        let mut timings = BufWriter::new(File::create(dir.join("timings.csv"))?);
        writeln!(timings, "iteration,wall_ms")?;
        Ok(Self {
            dir: dir.to_path_buf(),
            algo: resolved.algo,
            curves,
            timings,
            best_reward: f64::NEG_INFINITY,
            iter_started: Instant::now(),
            failed: None,
        })
    }

    fn checkpoint_bytes(&self, params: &NetworkParams) -> Result<Vec<u8>> {
        Ok(match self.algo {
            Algo::Bpn | Algo::Bqn => format::export_params(params)
                .map_err(|e| anyhow::anyhow!("compiling checkpoint: {e}"))?,
            Algo::CviFloat => format::encode_float(params),
        })
    }

    fn record(&mut self, rec: &IterationRecord, params: &NetworkParams) -> Result<()> {
        for (e, r) in rec.episode_rewards.iter().enumerate() {
            writeln!(self.curves, "{},{},{},{}", rec.iteration, e, r, rec.mean_loss)?;
        }
        self.curves.flush()?;
        let wall_ms = self.iter_started.elapsed().as_millis();
        writeln!(self.timings, "{},{}", rec.iteration, wall_ms)?;
        self.timings.flush()?;
        self.iter_started = Instant::now();

        let bytes = self.checkpoint_bytes(params)?;
        std::fs::write(self.dir.join("latest.bpn1"), &bytes)?;
        let mean = rec.mean_total_reward();
        if mean > self.best_reward {
            self.best_reward = mean;
            std::fs::write(self.dir.join("best.bpn1"), &bytes)?;
        }
        Ok(())
    }

    /// Mark the run finished; sweep resume skips directories carrying this.
    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.failed.take() {
            return Err(e);
        }
        self.curves.flush()?;
        self.timings.flush()?;
        std::fs::write(self.dir.join(DONE_MARKER), "ok\n")?;
        Ok(())
    }
}

impl TrainObserver for RunDir {
    fn on_iteration(&mut self, record: &IterationRecord, params: &NetworkParams) {
        if self.failed.is_none() {
            if let Err(e) = self.record(record, params) {
                self.failed = Some(e);
            }
        }
    }
}

/// Parse per-iteration mean total rewards back out of a curves.csv.
pub fn read_curve(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for line in text.lines().skip(1) {
        let mut cols = line.split(',');
        let iter: usize = cols.next().context("iteration column")?.parse()?;
        let _episode = cols.next().context("episode column")?;
        let reward: f64 = cols.next().context("reward column")?.parse()?;
        if sums.len() < iter {
            sums.resize(iter, (0.0, 0));
        }
        let cell = &mut sums[iter - 1];
        cell.0 += reward;
        cell.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(s, n)| if n > 0 { s / n as f64 } else { f64::NAN })
        .collect())
}
