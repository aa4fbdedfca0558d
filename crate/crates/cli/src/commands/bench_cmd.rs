//! `bpn bench` — packed vs naive-float inference timing.

use std::path::Path;

use anyhow::{bail, Result};
use bpn_core::format::Checkpoint;

use super::eval::load_checkpoint;
use crate::bench::{benchmark, FloatRefNet};

pub fn run(checkpoint: &Path, trials: usize) -> Result<()> {
    let net = match load_checkpoint(checkpoint)? {
        Checkpoint::Packed(net) => net,
        Checkpoint::Float(_) => bail!("bench needs a packed (binarized) checkpoint"),
    };
    let float_net = FloatRefNet::random(&net.spec, 1);
    let report = benchmark(&net, &float_net, trials)?;
    println!("trials = {}", report.trials);
    println!(
        "packed:  mean {:.1} us, median {:.1} us",
        report.packed_mean_us, report.packed_median_us
    );
    println!(
        "float:   mean {:.1} us, median {:.1} us",
        report.float_mean_us, report.float_median_us
    );
    println!("speedup = {:.2}x", report.speedup);
    Ok(())
}
