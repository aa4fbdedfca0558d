//! Config resolution: built-in defaults < config file (key = value lines)
//! < command-line flags. The fully resolved result is what manifests record.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use bpn_core::cvi::CviConfig;
use bpn_core::env::EnvKind;
use bpn_core::net::{describe_spec, NetworkSpec};
use bpn_core::rl::{Algo, TrainConfig};
use sha2::{Digest, Sha256};

/// Flags shared by train and sweep; unset values fall back to the config
/// file and then to built-in defaults.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct TrainFlags {
    /// Environment: reaching | tracking
    #[arg(long)]
    pub env: Option<String>,
    /// Algorithm: bpn | bqn | cvi-float
    #[arg(long)]
    pub algo: Option<String>,
    /// GIO coefficient α ∈ [0,1]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Softmax/mellowmax sharpness β > 0
    #[arg(long)]
    pub beta: Option<f64>,
    /// Discount factor γ ∈ [0,1)
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Output-layer node count N
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Outer iterations I
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Episodes per iteration E
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Steps per episode T
    #[arg(long)]
    pub steps: Option<usize>,
    /// Epochs per policy update C
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size B
    #[arg(long)]
    pub batch: Option<usize>,
    /// Replay retention U (iterations)
    #[arg(long)]
    pub retain: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f32>,
    /// Config file (key = value lines); flags override it
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub env: EnvKind,
    pub algo: Algo,
    pub train: TrainConfig,
}

pub fn parse_env(s: &str) -> Result<EnvKind> {
    match s {
        "reaching" => Ok(EnvKind::Reaching),
        "tracking" => Ok(EnvKind::Tracking),
        other => bail!("unknown environment '{other}' (expected reaching|tracking)"),
    }
}

pub fn parse_algo(s: &str) -> Result<Algo> {
    match s {
        "bpn" => Ok(Algo::Bpn),
        "bqn" => Ok(Algo::Bqn),
        "cvi-float" => Ok(Algo::CviFloat),
        other => bail!("unknown algorithm '{other}' (expected bpn|bqn|cvi-float)"),
    }
}

/// Parse a `key = value` config file into a map. `#` starts a comment.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected 'key = value', got '{raw}'", path.display(), ln + 1);
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|e| anyhow::anyhow!("config key '{key}': {e}")),
    }
}

/// Resolve flags + optional config file into a full configuration.
pub fn resolve(flags: &TrainFlags) -> Result<Resolved> {
    let file = match &flags.config {
        Some(p) => parse_config_file(p)?,
        None => BTreeMap::new(),
    };

    let env_name = flags
        .env
        .clone()
        .or_else(|| file.get("env").cloned())
        .unwrap_or_else(|| "reaching".to_string());
    let env = parse_env(&env_name)?;
    let algo_name = flags
        .algo
        .clone()
        .or_else(|| file.get("algo").cloned())
        .unwrap_or_else(|| "bpn".to_string());
    let algo = parse_algo(&algo_name)?;

    let d = TrainConfig::defaults(env);
    let alpha = flags.alpha.or(get(&file, "alpha")?).unwrap_or(d.cvi.alpha);
    let beta = flags.beta.or(get(&file, "beta")?).unwrap_or(d.cvi.beta);
    let gamma = flags.gamma.or(get(&file, "gamma")?).unwrap_or(d.cvi.gamma_discount);
    let train = TrainConfig {
        cvi: CviConfig::new(alpha, beta, gamma),
        epochs: flags.epochs.or(get(&file, "epochs")?).unwrap_or(d.epochs),
        minibatch: flags.batch.or(get(&file, "batch")?).unwrap_or(d.minibatch),
        iterations: flags.iterations.or(get(&file, "iterations")?).unwrap_or(d.iterations),
        episodes_per_iter: flags.episodes.or(get(&file, "episodes")?).unwrap_or(d.episodes_per_iter),
        steps_per_episode: flags.steps.or(get(&file, "steps")?).unwrap_or(d.steps_per_episode),
        retained_iterations: flags.retain.or(get(&file, "retain")?).unwrap_or(d.retained_iterations),
        seed: flags.seed.or(get(&file, "seed")?).unwrap_or(d.seed),
        learning_rate: flags.lr.or(get(&file, "lr")?).unwrap_or(d.learning_rate),
        nodes: flags.nodes.or(get(&file, "nodes")?).unwrap_or(d.nodes),
    };
    train.validate().map_err(|e| anyhow::anyhow!(e))?;
    Ok(Resolved { env, algo, train })
}

impl Resolved {
    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec::bpn(self.env.obs_shape(), self.train.nodes, self.env.n_actions())
    }

    /// The manifest body minus run id and output directory — the part the
    /// run id hashes.
    fn config_lines(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let _ = writeln!(s, "env = {}", self.env.name());
        let _ = writeln!(s, "algo = {}", self.algo.name());
        let _ = writeln!(s, "alpha = {}", t.cvi.alpha);
        let _ = writeln!(s, "beta = {}", t.cvi.beta);
        let _ = writeln!(s, "gamma = {}", t.cvi.gamma_discount);
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "batch = {}", t.minibatch);
        let _ = writeln!(s, "iterations = {}", t.iterations);
        let _ = writeln!(s, "episodes = {}", t.episodes_per_iter);
        let _ = writeln!(s, "steps = {}", t.steps_per_episode);
        let _ = writeln!(s, "retain = {}", t.retained_iterations);
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "lr = {}", t.learning_rate);
        let _ = writeln!(s, "nodes = {}", t.nodes);
        let _ = writeln!(s, "network = {}", describe_spec(&self.network_spec()));
        s
    }

    pub fn run_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.config_lines().as_bytes());
        let digest = h.finalize();
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn manifest(&self, out_dir: &Path) -> String {
        format!(
            "run_id = {}\n{}out = {}\nformat_version = {}\n",
            self.run_id(),
            self.config_lines(),
            out_dir.display(),
            bpn_core::compiled::FORMAT_VERSION,
        )
    }

    pub fn default_out_dir(&self) -> std::path::PathBuf {
        std::path::PathBuf::from("runs").join(format!(
            "{}-{}-s{}-{}",
            self.env.name(),
            self.algo.name(),
            self.train.seed,
            self.run_id()
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_table_values() {
        let r = resolve(&TrainFlags::default()).unwrap();
        assert_eq!(r.env, EnvKind::Reaching);
        assert_eq!(r.train.cvi.alpha, 0.95);
        assert_eq!(r.train.cvi.beta, 1.0);
        assert_eq!(r.train.cvi.gamma_discount, 0.99);
        assert_eq!(r.train.epochs, 50);
        assert_eq!(r.train.minibatch, 32);
        assert_eq!(r.train.iterations, 50);
        assert_eq!(r.train.episodes_per_iter, 10);
        assert_eq!(r.train.steps_per_episode, 20);
        assert_eq!(r.train.retained_iterations, 3);
        assert_eq!(r.train.nodes, 400);
    }

    #[test]
    fn tracking_overrides_step_cap() {
        let flags = TrainFlags { env: Some("tracking".into()), ..Default::default() };
        let r = resolve(&flags).unwrap();
        assert_eq!(r.train.steps_per_episode, 40);
        assert_eq!(r.env.n_actions(), 7);
    }

    #[test]
    fn flag_beats_config_beats_default() {
        let dir = std::env::temp_dir().join(format!("bpn-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("run.cfg");
        std::fs::write(&cfg, "alpha = 0.5\nnodes = 100\n# comment\nseed = 9\n").unwrap();
        let flags = TrainFlags {
            config: Some(cfg.clone()),
            alpha: Some(0.25),
            ..Default::default()
        };
        let r = resolve(&flags).unwrap();
        assert_eq!(r.train.cvi.alpha, 0.25); // flag wins
        assert_eq!(r.train.nodes, 100); // config wins over default
        assert_eq!(r.train.seed, 9);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn run_id_stable_and_config_sensitive() {
        let a = resolve(&TrainFlags::default()).unwrap();
        let b = resolve(&TrainFlags::default()).unwrap();
        assert_eq!(a.run_id(), b.run_id());
        let c = resolve(&TrainFlags { seed: Some(1), ..Default::default() }).unwrap();
        assert_ne!(a.run_id(), c.run_id());
    }
}
