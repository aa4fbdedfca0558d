//! Deployment form of a trained network: packed ±1 weights, folded integer
//! thresholds, and the word-level XNOR/popcount forward path.
//!
//! `CompiledNetwork` is immutable after construction and safe for any number
//! of concurrent readers.

use alloc::vec;
use alloc::vec::Vec;

use crate::kernels::{self, conv_output_size, xnor_popcount, PackedMatrix};
use crate::net::{
    fold_first_layer, fold_layer, scale_output, FoldedActivation, FoldedActivationReal,
    LayerKind, NetworkParams, NetworkSpec,
};
use crate::tensor::{PixelTensor, RealTensor};

pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum CompiledLayer {
    /// First layer: ±1 kernels over raw pixels, real-threshold fold.
    /// `weights_i16` is the same row-major data widened for the integer
    /// dot kernels.
    FirstConv {
        weights: Vec<i8>,
        weights_i16: Vec<i16>,
        fold: FoldedActivationReal,
    },
    /// Hidden binarized conv; kernel rows packed per output channel.
    BinConv {
        weights: PackedMatrix,
        fold: FoldedActivation,
    },
    /// Hidden binarized FC with the constant +1 bias element at input index 0.
    BinFc {
        weights: PackedMatrix,
        fold: FoldedActivation,
    },
    /// Output FC scaled by λ.
    OutFc { weights: PackedMatrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledNetwork {
    pub spec: NetworkSpec,
    pub layers: Vec<CompiledLayer>,
    pub lambda: f32,
    pub version: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompileError {
    /// A batchnorm unit with γ = 0 cannot fold to a threshold.
    ZeroGamma { layer: usize, unit: usize },
    NonFinite { layer: usize },
}

impl core::fmt::Display for CompileError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CompileError::ZeroGamma { layer, unit } => {
                write!(f, "layer {layer} unit {unit}: batchnorm gamma is zero, cannot fold")
            }
            CompileError::NonFinite { layer } => {
                write!(f, "layer {layer}: non-finite parameter")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CompileError {}

/// Compile trained parameters into the packed, thresholded deployment form.
pub fn compile(params: &NetworkParams) -> Result<CompiledNetwork, CompileError> {
    let dims = params.dims();
    let mut layers = Vec::with_capacity(dims.len());
    for (li, d) in dims.iter().enumerate() {
        let lp = &params.layers[li];
        if lp.weights.iter().any(|w| !w.is_finite()) {
            return Err(CompileError::NonFinite { layer: li });
        }
        if let Some(bn) = &lp.bn {
            for u in 0..bn.gamma.len() {
                if bn.gamma[u] == 0.0 {
                    return Err(CompileError::ZeroGamma { layer: li, unit: u });
                }
                if !bn.gamma[u].is_finite()
                    || !bn.beta[u].is_finite()
                    || !bn.running_mean[u].is_finite()
                    || !bn.running_var[u].is_finite()
                {
                    return Err(CompileError::NonFinite { layer: li });
                }
            }
        }
        let w_sign = params.signed_weights(li);
        let kind = params.spec.layers[li].kind;
        let layer = match kind {
            LayerKind::ConvBinWeight => {
                let weights_i16: Vec<i16> = w_sign.iter().map(|&s| s as i16).collect();
                let bn = lp.bn.as_ref().expect("first layer has bn");
                let fold = fold_first_layer(bn)
                    .map_err(|_| CompileError::ZeroGamma { layer: li, unit: 0 })?;
                CompiledLayer::FirstConv { weights: w_sign, weights_i16, fold }
            }
            LayerKind::ConvFullBin => {
                let bn = lp.bn.as_ref().expect("hidden layer has bn");
                let fold =
                    fold_layer(bn).map_err(|_| CompileError::ZeroGamma { layer: li, unit: 0 })?;
                CompiledLayer::BinConv {
                    weights: PackedMatrix::pack(&w_sign, d.out_size, d.row_len),
                    fold,
                }
            }
            LayerKind::FcFullBin => {
                let bn = lp.bn.as_ref().expect("hidden layer has bn");
                let fold =
                    fold_layer(bn).map_err(|_| CompileError::ZeroGamma { layer: li, unit: 0 })?;
                CompiledLayer::BinFc {
                    weights: PackedMatrix::pack(&w_sign, d.out_size, d.row_len),
                    fold,
                }
            }
            LayerKind::FcScaledOutput => CompiledLayer::OutFc {
                weights: PackedMatrix::pack(&w_sign, d.out_size, d.row_len),
            },
        };
        layers.push(layer);
    }
    let lambda = params.lambda();
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(CompileError::NonFinite { layer: dims.len() - 1 });
    }
    Ok(CompiledNetwork {
        spec: params.spec.clone(),
        layers,
        lambda,
        version: FORMAT_VERSION,
    })
}

/// Bit-level activation map in HWC order.
struct BitMap {
    words: Vec<u64>,
    len: usize,
}

impl BitMap {
    fn with_capacity(bits: usize) -> Self {
        Self { words: vec![0u64; bits.div_ceil(64)], len: bits }
    }

    #[inline]
    fn set(&mut self, i: usize, plus: bool) {
        if plus {
            self.words[i / 64] |= 1u64 << (i % 64);
        }
    }
}

/// Extract `len ≤ 64` bits starting at bit `start` from a word slice.
#[inline]
fn extract_bits(words: &[u64], start: usize, len: usize) -> u64 {
    debug_assert!(len >= 1 && len <= 64);
    let wi = start / 64;
    let off = start % 64;
    let lo = words[wi] >> off;
    let hi = if off > 0 && wi + 1 < words.len() {
        words[wi + 1] << (64 - off)
    } else {
        0
    };
    let v = lo | hi;
    if len == 64 {
        v
    } else {
        v & ((1u64 << len) - 1)
    }
}

/// Write `len ≤ 64` bits into a word buffer at bit position `at`.
#[inline]
fn write_bits(words: &mut [u64], at: usize, bits: u64, len: usize) {
    let wi = at / 64;
    let off = at % 64;
    words[wi] |= bits << off;
    if off > 0 && off + len > 64 {
        words[wi + 1] |= bits >> (64 - off);
    }
}

impl CompiledNetwork {
    pub fn n_actions(&self) -> usize {
        self.spec.n_actions()
    }

    /// Packed forward pass: integer first layer, XNOR/popcount everywhere
    /// else, λ-scaled preferences out.
    pub fn infer(&self, obs: &PixelTensor) -> Vec<f32> {
        let dims = self.spec.dims().expect("spec validated");
        let (c0, h0, w0) = self.spec.input;
        assert_eq!(
            obs.shape,
            vec![c0, h0, w0],
            "observation shape {:?} does not match network input {:?}",
            obs.shape,
            (c0, h0, w0)
        );

        let d0 = dims[0];
        let l0 = &self.spec.layers[0];
        let act_bits = match &self.layers[0] {
            CompiledLayer::FirstConv { weights_i16, fold, .. } => {
                let mut hwc: Vec<i16> = Vec::new();
                kernels::chw_to_hwc(&obs.data, c0, h0, w0, |p: u8| p as i16, &mut hwc);
                let mut patches = Vec::new();
                let (p, k) =
                    kernels::im2col_hwc(&hwc, c0, h0, w0, l0.kernel, l0.stride, &mut patches);
                let mut o = vec![0i32; p * d0.out_size];
                kernels::int_conv_forward(&mut o, &patches, weights_i16, p, k, d0.out_size);
                let mut bits = BitMap::with_capacity(p * d0.out_size);
                for pos in 0..p {
                    for co in 0..d0.out_size {
                        let i = pos * d0.out_size + co;
                        bits.set(i, fold.apply_scaled(co, o[i]) == 1);
                    }
                }
                bits
            }
            _ => unreachable!("first layer is FirstConv"),
        };

        let mut act = act_bits;
        let mut hw = d0.out_hw;
        let mut cin = d0.out_size;
        for li in 1..self.layers.len() {
            let d = dims[li];
            let spec_l = self.spec.layers[li];
            match &self.layers[li] {
                CompiledLayer::BinConv { weights, fold } => {
                    let (h, w) = hw;
                    let (oh, ow) = (
                        conv_output_size(h, spec_l.kernel, spec_l.stride),
                        conv_output_size(w, spec_l.kernel, spec_l.stride),
                    );
                    let run = spec_l.kernel * cin; // contiguous bits per window row
                    let patch_bits = spec_l.kernel * run;
                    let patch_words = patch_bits.div_ceil(64);
                    let tail = if patch_bits % 64 == 0 {
                        u64::MAX
                    } else {
                        (1u64 << (patch_bits % 64)) - 1
                    };
                    let mut patch = vec![0u64; patch_words];
                    let mut bits = BitMap::with_capacity(oh * ow * d.out_size);
                    let row_bits = w * cin;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            patch.iter_mut().for_each(|w| *w = 0);
                            let (y0, x0) = (oy * spec_l.stride, ox * spec_l.stride);
                            for ky in 0..spec_l.kernel {
                                let src = (y0 + ky) * row_bits + x0 * cin;
                                let mut done = 0;
                                while done < run {
                                    let n = (run - done).min(64);
                                    let chunk = extract_bits(&act.words, src + done, n);
                                    write_bits(&mut patch, ky * run + done, chunk, n);
                                    done += n;
                                }
                            }
                            let base = (oy * ow + ox) * d.out_size;
                            for co in 0..d.out_size {
                                let o = 2 * xnor_popcount(weights.row(co), &patch, tail) as i32
                                    - patch_bits as i32;
                                bits.set(base + co, fold.apply(co, o) == 1);
                            }
                        }
                    }
                    act = bits;
                    hw = (oh, ow);
                    cin = d.out_size;
                }
                CompiledLayer::BinFc { weights, fold } => {
                    let x = with_bias_bit(&act);
                    let o = kernels::fc_packed(weights, &x);
                    let mut bits = BitMap::with_capacity(d.out_size);
                    for (u, &v) in o.iter().enumerate() {
                        bits.set(u, fold.apply(u, v) == 1);
                    }
                    act = bits;
                }
                CompiledLayer::OutFc { weights } => {
                    let x = with_bias_bit(&act);
                    let o = kernels::fc_packed(weights, &x);
                    return scale_output(&o, self.lambda).values;
                }
                CompiledLayer::FirstConv { .. } => unreachable!(),
            }
        }
        unreachable!("output layer returns")
    }

    /// Spec-surface wrapper taking `[0,1]`-scaled reals.
    pub fn infer_real(&self, obs: &RealTensor) -> Vec<f32> {
        self.infer(&PixelTensor::from_real(obs))
    }

    /// Per-layer serialized weight sizes: (packed bytes, float32 bytes).
    /// First-layer kernels are ±1-valued and pack the same way; only their
    /// thresholds stay real.
    pub fn layer_weight_sizes(&self) -> Vec<(usize, usize)> {
        let dims = self.spec.dims().expect("spec validated");
        dims.iter()
            .map(|d| {
                let bits = d.weight_count();
                (bits.div_ceil(64) * 8, bits * 4)
            })
            .collect()
    }
}

/// Prepend the constant +1 bias bit to a packed activation vector.
fn with_bias_bit(act: &BitMap) -> crate::tensor::PackedBitTensor {
    let n = act.len + 1;
    let mut words = vec![0u64; n.div_ceil(64)];
    words[0] = 1; // bias bit at index 0
    for (i, &w) in act.words.iter().enumerate() {
        words[i] |= w << 1;
        if i + 1 < words.len() {
            words[i + 1] = w >> 63;
        }
    }
    crate::tensor::PackedBitTensor { words, logical_len: n, shape: vec![n] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::forward;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_params(spec: NetworkSpec, seed: u64) -> NetworkParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = NetworkParams::init(spec, &mut rng);
        // randomize batchnorm so folding is exercised beyond identity
        for lp in p.layers.iter_mut() {
            if let Some(bn) = lp.bn.as_mut() {
                for u in 0..bn.gamma.len() {
                    bn.gamma[u] = loop {
                        let g = rng.gen_range(-2.0..2.0f32);
                        if g.abs() > 1e-3 {
                            break g;
                        }
                    };
                    bn.beta[u] = rng.gen_range(-2.0..2.0f32);
                    bn.running_mean[u] = rng.gen_range(-10.0..10.0f32);
                    bn.running_var[u] = rng.gen_range(0.01..20.0f32);
                }
            }
        }
        p
    }

    #[test]
    fn packed_matches_reference_forward() {
        let spec = NetworkSpec::bpn((1, 84, 84), 31, 14);
        for seed in 0..5u64 {
            let params = random_params(spec.clone(), seed);
            let net = compile(&params).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            for _ in 0..10 {
                let obs = PixelTensor::new(
                    (0..84 * 84).map(|_| rng.gen::<u8>()).collect(),
                    vec![1, 84, 84],
                );
                assert_eq!(net.infer(&obs), forward(&params, &obs));
            }
        }
    }

    #[test]
    fn reaching_and_tracking_output_lengths() {
        let p1 = random_params(NetworkSpec::bpn((1, 84, 84), 16, 14), 1);
        let obs1 = PixelTensor::zeros(vec![1, 84, 84]);
        assert_eq!(compile(&p1).unwrap().infer(&obs1).len(), 14);

        let p2 = random_params(NetworkSpec::bpn((6, 84, 84), 16, 7), 2);
        let obs2 = PixelTensor::zeros(vec![6, 84, 84]);
        assert_eq!(compile(&p2).unwrap().infer(&obs2).len(), 7);
    }

    #[test]
    fn infer_deterministic_and_output_bounded() {
        let params = random_params(NetworkSpec::bpn((1, 84, 84), 20, 14), 3);
        let net = compile(&params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs = PixelTensor::new((0..84 * 84).map(|_| rng.gen()).collect(), vec![1, 84, 84]);
        let a = net.infer(&obs);
        let b = net.infer(&obs);
        assert_eq!(a, b);
        // Eq.-16 range bound: |P| ≤ λ·(summand count of the output layer)
        let bound = net.lambda * (20 + 1) as f32;
        for &p in &a {
            assert!(p.abs() <= bound, "{p} exceeds ±{bound}");
        }
    }

    #[test]
    fn compile_rejects_zero_gamma_naming_layer_unit() {
        let mut params = random_params(NetworkSpec::bpn((1, 84, 84), 8, 14), 4);
        params.layers[2].bn.as_mut().unwrap().gamma[5] = 0.0;
        match compile(&params) {
            Err(CompileError::ZeroGamma { layer: 2, unit: 5 }) => {}
            other => panic!("expected ZeroGamma at layer 2 unit 5, got {other:?}"),
        }
    }

    #[test]
    fn recompile_is_identical() {
        let params = random_params(NetworkSpec::bpn((1, 84, 84), 8, 14), 5);
        assert_eq!(compile(&params).unwrap(), compile(&params).unwrap());
    }

    #[test]
    fn bit_extract_write_round_trip() {
        let words = [0xdead_beef_cafe_f00du64, 0x0123_4567_89ab_cdefu64];
        for start in 0..64 {
            for len in 1..=48 {
                let v = extract_bits(&words, start, len);
                let mut out = [0u64; 3];
                write_bits(&mut out, start, v, len);
                assert_eq!(extract_bits(&out, start, len), v);
            }
        }
    }
}
