use bpn_cli::commands::eval::load_checkpoint;
use bpn_core::env::{make_env, EnvKind};
use bpn_core::format::Checkpoint;

fn main() {
    let path = std::env::args().nth(1).unwrap();
    let Checkpoint::Packed(net) = load_checkpoint(std::path::Path::new(&path)).unwrap() else { panic!() };
    println!("lambda = {}", net.lambda);
    let mut env = make_env(EnvKind::Reaching, 20);
    let mut obs = env.reset(0);
    for t in 0..6 {
        let p = net.infer(&obs);
        let maxi = p.iter().enumerate().max_by(|a,b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        let pr: Vec<String> = p.iter().map(|v| format!("{v:.0}")).collect();
        println!("t={t} argmax={maxi} prefs=[{}]", pr.join(","));
        let sr = env.step(maxi);
        println!("   reward {:.1}", sr.reward);
        obs = sr.observation;
    }
}
