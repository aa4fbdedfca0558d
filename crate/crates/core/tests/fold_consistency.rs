//! After training, the eval-mode trainer forward, the unpacked folded
//! reference forward, and the packed deployment path must tell the same
//! story: binarized layers bit-for-bit, the real-valued first layer within
//! float accumulation error (1e-5 absolute on pre-activations).

use bpn_core::compiled::compile;
use bpn_core::env::{make_env, EnvKind};
use bpn_core::kernels;
use bpn_core::net::{forward, NetworkParams};
use bpn_core::rl::{train, Algo, NullObserver, TrainConfig};
use bpn_core::tensor::PixelTensor;
use bpn_core::train::{forward_eval, NetKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trained_params() -> NetworkParams {
    let cfg = TrainConfig {
        epochs: 3,
        minibatch: 8,
        iterations: 3,
        episodes_per_iter: 3,
        steps_per_episode: 8,
        retained_iterations: 2,
        seed: 11,
        nodes: 24,
        ..TrainConfig::defaults(EnvKind::Reaching)
    };
    train(&cfg, EnvKind::Reaching, Algo::Bpn, &mut NullObserver).0
}

fn observations(n: usize, seed: u64) -> Vec<PixelTensor> {
    // mix of task renders and noise images
    let mut env = make_env(EnvKind::Reaching, 20);
    let mut out = Vec::new();
    let mut obs = env.reset(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        out.push(obs.clone());
        obs = env.step(rng.gen_range(0..14)).observation;
        if i % 3 == 0 {
            out.push(PixelTensor::new(
                (0..84 * 84).map(|_| rng.gen()).collect(),
                vec![1, 84, 84],
            ));
        }
    }
    out
}

#[test]
fn packed_reference_and_eval_forward_agree_after_training() {
    let params = trained_params();
    let net = compile(&params).expect("trained parameters compile");
    for (i, obs) in observations(30, 5).iter().enumerate() {
        let reference = forward(&params, obs);
        let packed = net.infer(obs);
        assert_eq!(reference, packed, "reference vs packed diverged on obs {i}");
        let eval = forward_eval(&params, NetKind::Binary, obs);
        assert_eq!(eval, packed, "trainer eval vs packed diverged on obs {i}");
    }
}

#[test]
fn first_layer_float_and_integer_paths_agree_within_1e5() {
    let params = trained_params();
    let l0 = params.spec.layers[0];
    let (c, h, w) = params.spec.input;
    let w_sign = params.signed_weights(0);
    let dims = params.dims();
    let cout = dims[0].out_size;
    let k = dims[0].row_len;

    for obs in observations(10, 9) {
        // f32 route: [0,1] pixels, float GEMM
        let mut hwc32 = Vec::new();
        kernels::chw_to_hwc(&obs.data, c, h, w, |p: u8| p as f32 / 255.0, &mut hwc32);
        let mut patches32 = Vec::new();
        let (p, _) = kernels::im2col_hwc(&hwc32, c, h, w, l0.kernel, l0.stride, &mut patches32);
        let w32: Vec<f32> = w_sign.iter().map(|&s| s as f32).collect();
        let mut wt32 = vec![0.0f32; k * cout];
        for co in 0..cout {
            for kk in 0..k {
                wt32[kk * cout + co] = w32[co * k + kk];
            }
        }
        let mut o32 = vec![0.0f32; p * cout];
        kernels::matmul_acc(&mut o32, &patches32, &wt32, p, k, cout);

        // exact route: integer MACs on raw pixels, scaled back by 255
        let mut hwc_i = Vec::new();
        kernels::chw_to_hwc(&obs.data, c, h, w, |p: u8| p as i16, &mut hwc_i);
        let mut patches_i = Vec::new();
        kernels::im2col_hwc(&hwc_i, c, h, w, l0.kernel, l0.stride, &mut patches_i);
        let w_i16: Vec<i16> = w_sign.iter().map(|&s| s as i16).collect();
        let mut o_int = vec![0i32; p * cout];
        kernels::int_conv_forward(&mut o_int, &patches_i, &w_i16, p, k, cout);

        for i in 0..o32.len() {
            let exact = o_int[i] as f64 / 255.0;
            let diff = (o32[i] as f64 - exact).abs();
            assert!(
                diff <= 1e-5,
                "first-layer pre-activation {i}: float {} vs exact {} (diff {diff})",
                o32[i],
                exact
            );
        }
    }
}
