//! `bpn eval` — greedy episodes from a checkpoint, with optional frame
//! dumps for qualitative inspection.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bpn_core::cvi::argmax;
use bpn_core::env::{make_env, EnvKind};
use bpn_core::format::{decode, Checkpoint};
use bpn_core::rl::TargetNet;
use bpn_core::rng::{self, tags};
use bpn_core::tensor::PixelTensor;

use crate::config::parse_env;

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    decode(&bytes).map_err(|e| anyhow::anyhow!("decoding {}: {e}", path.display()))
}

fn target_net(ckpt: Checkpoint) -> TargetNet {
    match ckpt {
        Checkpoint::Packed(net) => TargetNet::Packed(net),
        Checkpoint::Float(params) => TargetNet::Float(params),
    }
}

/// Infer the task from the checkpoint's input shape.
fn infer_env(ckpt: &Checkpoint) -> Result<EnvKind> {
    match ckpt.spec().input {
        (1, 84, 84) => Ok(EnvKind::Reaching),
        (6, 84, 84) => Ok(EnvKind::Tracking),
        other => bail!("cannot infer environment from input shape {other:?}; pass --env"),
    }
}

pub fn run(
    checkpoint: &Path,
    env_name: Option<&str>,
    episodes: usize,
    steps: Option<usize>,
    seed: u64,
    dump_frames: Option<PathBuf>,
) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let env_kind = match env_name {
        Some(n) => parse_env(n)?,
        None => infer_env(&ckpt)?,
    };
    let steps = steps.unwrap_or_else(|| env_kind.default_steps());
    if ckpt.n_actions() != env_kind.n_actions() {
        bail!(
            "checkpoint has {} actions but {} expects {}",
            ckpt.n_actions(),
            env_kind.name(),
            env_kind.n_actions()
        );
    }
    let net = target_net(ckpt);
    if let Some(dir) = &dump_frames {
        std::fs::create_dir_all(dir)?;
    }

    let mut env = make_env(env_kind, steps);
    let mut total_reward = 0.0;
    let mut total_steps = 0usize;
    let mut final_dist = 0.0;
    for e in 0..episodes {
        let mut obs = env.reset(rng::derive(seed, tags::EVAL, e as u64, 0));
        let mut last_reward = 0.0;
        for t in 0..steps {
            if let Some(dir) = &dump_frames {
                dump_png(dir, e, t, &obs)?;
            }
            let prefs = net.prefs(&obs);
            let sr = env.step(argmax(&prefs));
            total_reward += sr.reward;
            last_reward = sr.reward;
            total_steps += 1;
            obs = sr.observation;
            if sr.terminated || sr.truncated {
                if let Some(dir) = &dump_frames {
                    dump_png(dir, e, t + 1, &obs)?;
                }
                break;
            }
        }
        final_dist += -last_reward;
    }
    let mean_reward = total_reward / episodes as f64;
    let mean_steps = total_steps as f64 / episodes as f64;
    println!("episodes = {episodes}");
    println!("mean_total_reward = {mean_reward:.3}");
    println!("mean_survival_steps = {mean_steps:.2}");
    println!("mean_final_distance = {:.3}", final_dist / episodes as f64);
    Ok(())
}

/// Write an observation as a PNG: grayscale for 1-channel, the most recent
/// RGB frame for the stacked tracking observation.
pub fn dump_png(dir: &Path, episode: usize, step: usize, obs: &PixelTensor) -> Result<()> {
    let path = dir.join(format!("ep{episode:03}_step{step:03}.png"));
    let (c, h, w) = (obs.shape[0], obs.shape[1], obs.shape[2]);
    match c {
        1 => {
            let img = image::GrayImage::from_raw(w as u32, h as u32, obs.data.clone())
                .context("building grayscale image")?;
            img.save(&path)?;
        }
        6 => {
            // channels 3..6 are the current frame's RGB planes
            let hw = h * w;
            let mut rgb = Vec::with_capacity(hw * 3);
            for px in 0..hw {
                rgb.push(obs.data[3 * hw + px]);
                rgb.push(obs.data[4 * hw + px]);
                rgb.push(obs.data[5 * hw + px]);
            }
            let img = image::RgbImage::from_raw(w as u32, h as u32, rgb)
                .context("building rgb image")?;
            img.save(&path)?;
        }
        other => bail!("cannot render {other}-channel observation"),
    }
    Ok(())
}
