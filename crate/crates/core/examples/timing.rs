use bpn_core::env::EnvKind;
use bpn_core::rl::{train, Algo, NullObserver, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("reach");
    match which {
        "reach" => {
            // criterion-5 shape: Table I, N=400, but only 3 iterations
            let cfg = TrainConfig { iterations: 3, nodes: 400, ..TrainConfig::defaults(EnvKind::Reaching) };
            let t = Instant::now();
            let (_, recs) = train(&cfg, EnvKind::Reaching, Algo::Bpn, &mut NullObserver);
            let dt = t.elapsed().as_secs_f64();
            println!("reaching N=400: 3 iters in {dt:.1}s -> est full run {:.1} min", dt / 3.0 * 50.0 / 60.0);
            for r in &recs { println!("  iter {} reward {:.1} loss {:.4} mbs {}", r.iteration, r.mean_total_reward(), r.mean_loss, r.minibatches); }
        }
        "track" => {
            let cfg = TrainConfig { iterations: 3, nodes: 100, ..TrainConfig::defaults(EnvKind::Tracking) };
            let t = Instant::now();
            let (_, recs) = train(&cfg, EnvKind::Tracking, Algo::Bpn, &mut NullObserver);
            let dt = t.elapsed().as_secs_f64();
            println!("tracking N=100: 3 iters in {dt:.1}s -> est full run {:.1} min", dt / 3.0 * 50.0 / 60.0);
            for r in &recs { println!("  iter {} reward {:.1} loss {:.4} mbs {}", r.iteration, r.mean_total_reward(), r.mean_loss, r.minibatches); }
        }
        "float" => {
            let cfg = TrainConfig { iterations: 3, nodes: 400, ..TrainConfig::defaults(EnvKind::Reaching) };
            let t = Instant::now();
            train(&cfg, EnvKind::Reaching, Algo::CviFloat, &mut NullObserver);
            let dt = t.elapsed().as_secs_f64();
            println!("float reaching N=400: 3 iters in {dt:.1}s -> est full run {:.1} min", dt / 3.0 * 50.0 / 60.0);
        }
        _ => eprintln!("reach|track|float"),
    }
}

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
