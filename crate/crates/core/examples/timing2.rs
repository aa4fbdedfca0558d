use bpn_core::env::{make_env, EnvKind};
use bpn_core::net::{NetworkParams, NetworkSpec};
use bpn_core::rng;
use bpn_core::tensor::PixelTensor;
use bpn_core::train::{backward, forward_train, NetKind};
use bpn_core::cvi::bpn_loss;
use rand::Rng;
use std::time::Instant;

fn main() {
    // rayon sanity
    let t = Instant::now();
    let (a, b) = rayon::join(
        || { let mut s = 0u64; for i in 0..2_000_000_000u64 { s = s.wrapping_add(i); } s },
        || { let mut s = 0u64; for i in 0..2_000_000_000u64 { s = s.wrapping_mul(3).wrapping_add(i); } s },
    );
    println!("rayon join of 2x2e9 ops: {:.2}s (expect ~half of serial) {a} {b}", t.elapsed().as_secs_f64());

    let spec = NetworkSpec::bpn((1, 84, 84), 400, 14);
    let mut params = NetworkParams::init(spec, &mut rng::stream(0, 1, 0, 0));
    let mut env = make_env(EnvKind::Reaching, 20);
    let mut rng2 = rng::stream(1, 2, 0, 0);
    let mut obs_vec = Vec::new();
    let mut o = env.reset(0);
    for _ in 0..32 { let sr = env.step(rng2.gen_range(0..14)); obs_vec.push(o.clone()); o = sr.observation; }
    let refs: Vec<&PixelTensor> = obs_vec.iter().collect();
    let targets: Vec<f64> = (0..32).map(|i| -(i as f64)).collect();

    // warm
    let (_, _) = forward_train(&mut params, NetKind::Binary, &refs);

    let n = 30;
    let t = Instant::now();
    let mut cache_opt = None;
    for _ in 0..n {
        let (_, c) = forward_train(&mut params, NetKind::Binary, &refs);
        cache_opt = Some(c);
    }
    let fwd = t.elapsed().as_secs_f64() / n as f64;
    let cache = cache_opt.unwrap();

    let (prefs, cache2) = forward_train(&mut params, NetKind::Binary, &refs);
    let preds: Vec<f32> = (0..32).map(|i| prefs[i * 14]).collect();
    let (_, seeds) = bpn_loss(&targets, &preds);
    let mut dprefs = vec![0.0f32; 32 * 14];
    for i in 0..32 { dprefs[i * 14] = seeds[i]; }

    let t = Instant::now();
    for _ in 0..n {
        let _ = backward(&params, NetKind::Binary, &cache2, &dprefs);
    }
    let bwd = t.elapsed().as_secs_f64() / n as f64;
    let _ = cache;
    println!("B=32 reaching N=400: fwd {:.2} ms, bwd {:.2} ms  -> minibatch {:.2} ms", fwd*1e3, bwd*1e3, (fwd+bwd)*1e3);
    println!("  per policy_update (950 mb): {:.1}s", (fwd + bwd) * 950.0);
}

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
