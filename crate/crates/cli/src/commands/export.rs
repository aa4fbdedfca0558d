//! `bpn export` — save a compiled copy of a checkpoint and print the
//! packed-vs-float32 size accounting per layer.

use std::path::Path;

use anyhow::{bail, Result};
use bpn_core::format::{encode_compiled, Checkpoint};

use super::eval::load_checkpoint;

pub fn run(checkpoint: &Path, out: &Path) -> Result<()> {
    let net = match load_checkpoint(checkpoint)? {
        Checkpoint::Packed(net) => net,
        Checkpoint::Float(_) => {
            bail!("checkpoint holds the float baseline; only binarized networks export")
        }
    };
    let bytes = encode_compiled(&net);
    std::fs::write(out, &bytes)?;

    println!("exported {} ({} bytes total)", out.display(), bytes.len());
    println!("{:<8} {:>14} {:>14} {:>10}", "layer", "packed bytes", "float32 bytes", "ratio");
    for (i, (packed, float)) in net.layer_weight_sizes().iter().enumerate() {
        println!(
            "{:<8} {:>14} {:>14} {:>10}",
            format!("{i}"),
            packed,
            float,
            format!("1/{:.1}", *float as f64 / *packed as f64)
        );
    }
    Ok(())
}
