//! Inference benchmark: packed XNOR/popcount path vs a naive float CNN of
//! the same topology. Single-threaded (a private one-worker pool) so the
//! comparison measures arithmetic, not scheduling.

use std::time::Instant;

use anyhow::Result;
use bpn_core::compiled::CompiledNetwork;
use bpn_core::kernels::{conv_float_naive, fc_float_naive};
use bpn_core::net::{LayerKind, NetworkSpec};
use bpn_core::rng;
use bpn_core::tensor::PixelTensor;
use rand::Rng;

/// Naive float CNN reference: real weights, running-stat batchnorm, ReLU,
/// straightforward sequential loops — the way a float deployment of the
/// same topology would be written without any bit tricks.
pub struct FloatRefNet {
    spec: NetworkSpec,
    /// Per layer: weights [out × k], plus (scale, shift) per unit for the
    /// folded-in batchnorm affine.
    layers: Vec<(Vec<f32>, Vec<f32>, Vec<f32>)>,
}

impl FloatRefNet {
    /// Deterministic pseudorandom parameters; values are irrelevant to
    /// timing but must be finite and varied.
    pub fn random(spec: &NetworkSpec, seed: u64) -> Self {
        let dims = spec.dims().expect("valid spec");
        let mut rng = rng::stream(seed, 0xBE7C, 0, 0);
        let layers = dims
            .iter()
            .map(|d| {
                let w: Vec<f32> =
                    (0..d.weight_count()).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let scale: Vec<f32> = (0..d.bn_units).map(|_| rng.gen_range(0.5..1.5)).collect();
                let shift: Vec<f32> = (0..d.bn_units).map(|_| rng.gen_range(-0.5..0.5)).collect();
                (w, scale, shift)
            })
            .collect();
        Self { spec: spec.clone(), layers }
    }

    pub fn forward(&self, obs: &PixelTensor) -> Vec<f32> {
        let dims = self.spec.dims().expect("valid spec");
        let (c0, h0, w0) = self.spec.input;
        // raw pixels scaled to [0,1]; conv_float_naive takes CHW, which is
        // the observation's native layout
        let mut act: Vec<f32> = obs.data.iter().map(|&p| p as f32 / 255.0).collect();
        let (mut h, mut w, mut cin) = (h0, w0, c0);
        let n_layers = dims.len();
        for (li, d) in dims.iter().enumerate() {
            let l = self.spec.layers[li];
            let (weights, scale, shift) = &self.layers[li];
            let is_last = li == n_layers - 1;
            let mut o = match l.kind {
                LayerKind::ConvBinWeight | LayerKind::ConvFullBin => {
                    let out = conv_float_naive(&act, cin, h, w, weights, d.out_size, l.kernel, l.stride);
                    h = d.out_hw.0;
                    w = d.out_hw.1;
                    cin = d.out_size;
                    out
                }
                LayerKind::FcFullBin | LayerKind::FcScaledOutput => {
                    let mut x = Vec::with_capacity(d.row_len);
                    x.push(1.0);
                    x.extend_from_slice(&act);
                    fc_float_naive(weights, &x, d.out_size, d.row_len)
                }
            };
            if is_last {
                return o;
            }
            // batchnorm affine (running statistics) + ReLU
            let units = d.bn_units;
            for (i, v) in o.iter_mut().enumerate() {
                let u = i % units;
                *v = (*v * scale[u] + shift[u]).max(0.0);
            }
            if l.kind.is_conv() {
                // conv_float_naive emits HWC; the next conv expects CHW
                if li + 1 < n_layers && self.spec.layers[li + 1].kind.is_conv() {
                    let mut t = vec![0.0f32; o.len()];
                    let hw = h * w;
                    for px in 0..hw {
                        for c in 0..cin {
                            t[c * hw + px] = o[px * cin + c];
                        }
                    }
                    act = t;
                } else {
                    act = o; // flattening for FC keeps HWC order
                }
            } else {
                act = o;
            }
        }
        unreachable!()
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub trials: usize,
    pub packed_mean_us: f64,
    pub packed_median_us: f64,
    pub float_mean_us: f64,
    pub float_median_us: f64,
    pub speedup: f64,
}

fn time_us<F: FnMut()>(trials: usize, warmup: usize, mut f: F) -> (f64, f64) {
    for _ in 0..warmup {
        f();
    }
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let t = Instant::now();
        f();
        samples.push(t.elapsed().as_secs_f64() * 1e6);
    }
    let mean = samples.iter().sum::<f64>() / trials as f64;
    let mut sorted = samples;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (mean, sorted[trials / 2])
}

/// Run the benchmark: `trials` timed inferences per network after warmup,
/// on a private single-thread pool.
pub fn benchmark(net: &CompiledNetwork, float_net: &FloatRefNet, trials: usize) -> Result<BenchReport> {
    assert!(trials >= 1);
    let (c, h, w) = net.spec.input;
    let mut rng = rng::stream(7, 0xB33F, 0, 0);
    let obs: Vec<PixelTensor> = (0..16)
        .map(|_| PixelTensor::new((0..c * h * w).map(|_| rng.gen()).collect(), vec![c, h, w]))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let warmup = (trials / 10).clamp(10, 200);
    let report = pool.install(|| {
        let mut i = 0usize;
        let mut sink = 0.0f32;
        let (packed_mean_us, packed_median_us) = time_us(trials, warmup, || {
            let p = net.infer(&obs[i % obs.len()]);
            sink += p[0];
            i += 1;
        });
        let (float_mean_us, float_median_us) = time_us(trials, warmup, || {
            let p = float_net.forward(&obs[i % obs.len()]);
            sink += p[0];
            i += 1;
        });
        std::hint::black_box(sink);
        BenchReport {
            trials,
            packed_mean_us,
            packed_median_us,
            float_mean_us,
            float_median_us,
            speedup: float_mean_us / packed_mean_us,
        }
    });
    Ok(report)
}
