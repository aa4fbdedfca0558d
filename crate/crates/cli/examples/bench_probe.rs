use bpn_cli::bench::{benchmark, FloatRefNet};
use bpn_core::compiled::compile;
use bpn_core::net::{NetworkParams, NetworkSpec};
use bpn_core::rng;

fn main() {
    for (c, n, a, label) in [(6usize, 100usize, 7usize, "tracking N=100"), (1, 400, 14, "reaching N=400")] {
        let spec = NetworkSpec::bpn((c, 84, 84), n, a);
        let params = NetworkParams::init(spec, &mut rng::stream(0, 1, 0, 0));
        let net = compile(&params).unwrap();
        let fl = FloatRefNet::random(&net.spec, 1);
        let r = benchmark(&net, &fl, 300).unwrap();
        println!("{label}: packed {:.1}us float {:.1}us speedup {:.2}x", r.packed_mean_us, r.float_mean_us, r.speedup);
    }
}
