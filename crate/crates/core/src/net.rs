//! Network topology, batchnorm threshold folding, and trainable parameters.
//!
//! A network is a stack of convolutional layers followed by fully-connected
//! layers. Only the first layer sees real-valued input (raw pixels); weights
//! are binarized everywhere, and every hidden layer's batchnorm + sign
//! activation folds into a single threshold comparison for deployment.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::kernels::{self, conv_output_size};
use crate::tensor::{sign, PixelTensor, RealTensor};

/// Layer kinds, in the order they may appear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// First layer: real input, binarized weights, MAC + threshold.
    ConvBinWeight,
    /// Hidden conv: ±1 input, ±1 weights, XNOR/popcount + threshold.
    ConvFullBin,
    /// Hidden FC: ±1 input (with constant +1 bias element), ±1 weights.
    FcFullBin,
    /// Output FC: ±1 input, ±1 weights, output scaled by λ. No activation.
    FcScaledOutput,
}

impl LayerKind {
    pub fn is_conv(self) -> bool {
        matches!(self, LayerKind::ConvBinWeight | LayerKind::ConvFullBin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Kernel size (convs) — unused for FC layers.
    pub kernel: usize,
    /// Stride (convs) — unused for FC layers.
    pub stride: usize,
    /// Output channels (convs) or node count (FCs).
    pub channels_or_nodes: usize,
}

impl LayerSpec {
    pub fn conv_bin_weight(kernel: usize, stride: usize, channels: usize) -> Self {
        Self { kind: LayerKind::ConvBinWeight, kernel, stride, channels_or_nodes: channels }
    }
    pub fn conv_full_bin(kernel: usize, stride: usize, channels: usize) -> Self {
        Self { kind: LayerKind::ConvFullBin, kernel, stride, channels_or_nodes: channels }
    }
    pub fn fc_full_bin(nodes: usize) -> Self {
        Self { kind: LayerKind::FcFullBin, kernel: 0, stride: 0, channels_or_nodes: nodes }
    }
    pub fn fc_scaled_output(nodes: usize) -> Self {
        Self { kind: LayerKind::FcScaledOutput, kernel: 0, stride: 0, channels_or_nodes: nodes }
    }
}

/// Resolved per-layer geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerDims {
    /// Conv: input channels. FC: input length excluding the bias element.
    pub in_size: usize,
    /// Conv: input spatial size (h, w). FC: (0, 0).
    pub in_hw: (usize, usize),
    /// Conv: output spatial size. FC: (0, 0).
    pub out_hw: (usize, usize),
    /// Output channels / nodes.
    pub out_size: usize,
    /// Weight row length: kernel²·cin for convs, in_size + 1 (bias) for FCs.
    pub row_len: usize,
    /// Total units carrying batchnorm statistics (channels or nodes).
    pub bn_units: usize,
    /// Flattened output length fed to the next layer.
    pub out_len: usize,
}

impl LayerDims {
    pub fn weight_count(&self) -> usize {
        self.out_size * self.row_len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpecError {
    FirstLayerNotConvBinWeight,
    LastLayerNotScaledOutput,
    ConvAfterFc { layer: usize },
    KernelTooLarge { layer: usize, kernel: usize, input: usize },
    BadLayerParam { layer: usize, what: &'static str },
    Empty,
}

impl core::fmt::Display for SpecError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SpecError::FirstLayerNotConvBinWeight => {
                write!(f, "first layer must be a binarized-weight conv over real input")
            }
            SpecError::LastLayerNotScaledOutput => {
                write!(f, "last layer must be the scaled-output FC")
            }
            SpecError::ConvAfterFc { layer } => {
                write!(f, "layer {layer}: conv layers must precede FC layers")
            }
            SpecError::KernelTooLarge { layer, kernel, input } => {
                write!(f, "layer {layer}: kernel {kernel} larger than input {input}")
            }
            SpecError::BadLayerParam { layer, what } => {
                write!(f, "layer {layer}: invalid {what}")
            }
            SpecError::Empty => write!(f, "network must have at least two layers"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SpecError {}

/// Layer topology plus input image shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input: (usize, usize, usize), // (channels, height, width)
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input: (usize, usize, usize), layers: Vec<LayerSpec>) -> Result<Self, SpecError> {
        let spec = Self { input, layers };
        spec.dims()?;
        Ok(spec)
    }

    /// The architecture used throughout: Conv(8,4,8) → Conv(4,2,16) →
    /// Conv(3,1,16) → FC(n) → FC(actions).
    pub fn bpn(input: (usize, usize, usize), nodes: usize, actions: usize) -> Self {
        Self::new(
            input,
            vec![
                LayerSpec::conv_bin_weight(8, 4, 8),
                LayerSpec::conv_full_bin(4, 2, 16),
                LayerSpec::conv_full_bin(3, 1, 16),
                LayerSpec::fc_full_bin(nodes),
                LayerSpec::fc_scaled_output(actions),
            ],
        )
        .expect("canonical topology is valid")
    }

    pub fn n_actions(&self) -> usize {
        self.layers.last().map(|l| l.channels_or_nodes).unwrap_or(0)
    }

    /// Validate the spec and resolve per-layer geometry.
    pub fn dims(&self) -> Result<Vec<LayerDims>, SpecError> {
        if self.layers.len() < 2 {
            return Err(SpecError::Empty);
        }
        if self.layers[0].kind != LayerKind::ConvBinWeight {
            return Err(SpecError::FirstLayerNotConvBinWeight);
        }
        if self.layers[self.layers.len() - 1].kind != LayerKind::FcScaledOutput {
            return Err(SpecError::LastLayerNotScaledOutput);
        }
        let mut dims = Vec::with_capacity(self.layers.len());
        let (mut c, mut h, mut w) = self.input;
        let mut flat = 0usize;
        let mut seen_fc = false;
        for (i, l) in self.layers.iter().enumerate() {
            if l.channels_or_nodes == 0 {
                return Err(SpecError::BadLayerParam { layer: i, what: "zero output size" });
            }
            if l.kind.is_conv() {
                if seen_fc {
                    return Err(SpecError::ConvAfterFc { layer: i });
                }
                if i > 0 && l.kind == LayerKind::ConvBinWeight {
                    return Err(SpecError::BadLayerParam { layer: i, what: "real-input conv after first layer" });
                }
                if l.stride == 0 {
                    return Err(SpecError::BadLayerParam { layer: i, what: "zero stride" });
                }
                if l.kernel > h || l.kernel > w {
                    return Err(SpecError::KernelTooLarge {
                        layer: i,
                        kernel: l.kernel,
                        input: h.min(w),
                    });
                }
                let oh = conv_output_size(h, l.kernel, l.stride);
                let ow = conv_output_size(w, l.kernel, l.stride);
                let cout = l.channels_or_nodes;
                dims.push(LayerDims {
                    in_size: c,
                    in_hw: (h, w),
                    out_hw: (oh, ow),
                    out_size: cout,
                    row_len: l.kernel * l.kernel * c,
                    bn_units: cout,
                    out_len: oh * ow * cout,
                });
                c = cout;
                h = oh;
                w = ow;
                flat = oh * ow * cout;
            } else {
                if !seen_fc {
                    seen_fc = true;
                }
                let nin = flat;
                let nout = l.channels_or_nodes;
                dims.push(LayerDims {
                    in_size: nin,
                    in_hw: (0, 0),
                    out_hw: (0, 0),
                    out_size: nout,
                    row_len: nin + 1, // constant +1 bias element at index 0
                    bn_units: nout,
                    out_len: nout,
                });
                flat = nout;
            }
        }
        Ok(dims)
    }
}

/// Threshold comparison direction after folding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// +1 iff o ≥ τ (γ > 0).
    Geq,
    /// +1 iff o < τ (γ < 0; τ already shifted so the boundary lands on +1).
    Lt,
}

/// Folded batchnorm+sign for a binarized layer: one integer threshold and
/// direction per unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldedActivation {
    pub thresholds: Vec<i32>,
    pub directions: Vec<Direction>,
}

impl FoldedActivation {
    #[inline]
    pub fn apply(&self, unit: usize, o: i32) -> i8 {
        match self.directions[unit] {
            Direction::Geq => {
                if o >= self.thresholds[unit] {
                    1
                } else {
                    -1
                }
            }
            Direction::Lt => {
                if o < self.thresholds[unit] {
                    1
                } else {
                    -1
                }
            }
        }
    }
}

/// Folded activation for the first layer, whose pre-activations are real.
///
/// The boundary belongs to +1 in both directions (Sign(0) = +1), so the
/// γ < 0 case compares with ≤ rather than a shifted strict bound.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedActivationReal {
    pub thresholds: Vec<f32>,
    pub directions: Vec<Direction>,
}

impl FoldedActivationReal {
    /// Compare a pre-activation given on the ×255 integer pixel scale.
    #[inline]
    pub fn apply_scaled(&self, unit: usize, o_scaled: i32) -> i8 {
        let tau = self.thresholds[unit] as f64 * 255.0;
        let o = o_scaled as f64;
        let hit = match self.directions[unit] {
            Direction::Geq => o >= tau,
            Direction::Lt => o <= tau,
        };
        if hit {
            1
        } else {
            -1
        }
    }
}

/// Fold batchnorm + sign into an integer threshold comparison.
///
/// For integer pre-activations o,
/// `Sign(γ·(o−μ)/√(σ²+ε) + β)` equals the returned threshold test at every
/// point: γ > 0 gives GEQ with τ = ⌈μ − β√(σ²+ε)/γ⌉, γ < 0 gives LT with
/// the mirrored bound ⌊·⌋+1. Computed in f64 so the ceiling lands correctly.
pub fn fold_batchnorm(
    gamma: f32,
    beta: f32,
    mean: f32,
    var: f32,
    eps: f32,
) -> Result<(i32, Direction), FoldError> {
    if gamma == 0.0 {
        return Err(FoldError::ZeroGamma);
    }
    if !(var >= 0.0) {
        return Err(FoldError::NegativeVariance);
    }
    let t = threshold_point(gamma, beta, mean, var, eps);
    Ok(if gamma > 0.0 {
        (libm::ceil(t) as i32, Direction::Geq)
    } else {
        (libm::floor(t) as i32 + 1, Direction::Lt)
    })
}

/// First-layer fold: real threshold, same boundary semantics as `Sign`.
pub fn fold_batchnorm_real(
    gamma: f32,
    beta: f32,
    mean: f32,
    var: f32,
    eps: f32,
) -> Result<(f32, Direction), FoldError> {
    if gamma == 0.0 {
        return Err(FoldError::ZeroGamma);
    }
    if !(var >= 0.0) {
        return Err(FoldError::NegativeVariance);
    }
    let t = threshold_point(gamma, beta, mean, var, eps) as f32;
    Ok((t, if gamma > 0.0 { Direction::Geq } else { Direction::Lt }))
}

/// The point where γ·(o−μ)/√(σ²+ε) + β crosses zero.
fn threshold_point(gamma: f32, beta: f32, mean: f32, var: f32, eps: f32) -> f64 {
    let std = libm::sqrt(var as f64 + eps as f64);
    mean as f64 - beta as f64 * std / gamma as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldError {
    ZeroGamma,
    NegativeVariance,
}

impl core::fmt::Display for FoldError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FoldError::ZeroGamma => write!(f, "batchnorm gamma is zero (degenerate unit)"),
            FoldError::NegativeVariance => write!(f, "batchnorm variance is negative"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FoldError {}

/// Scale the output layer's integer pre-activations by λ into preferences.
pub fn scale_output(o: &[i32], lambda: f32) -> RealTensor {
    assert!(lambda > 0.0, "output scale λ must be positive, got {lambda}");
    RealTensor::new(o.iter().map(|&v| lambda * v as f32).collect(), vec![o.len()])
}

/// Per-layer batchnorm parameters (per channel for convs, per unit for FCs).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
}

impl BatchNorm {
    pub fn identity(units: usize) -> Self {
        Self {
            gamma: vec![1.0; units],
            beta: vec![0.0; units],
            running_mean: vec![0.0; units],
            running_var: vec![1.0; units],
            eps: 1e-5,
        }
    }
}

/// One layer's trainables: latent real weights and (hidden layers only)
/// batchnorm parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f32>,
    pub bn: Option<BatchNorm>,
}

/// Full parameter set: latent weights, batchnorm, and the output scale
/// λ = exp(ρ) with ρ trainable so λ stays positive.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub layers: Vec<LayerParams>,
    pub rho: f32,
}

pub const INITIAL_LAMBDA: f32 = 0.01;

impl NetworkParams {
    /// Random init: latent weights uniform in [−1, 1], identity batchnorm,
    /// λ = 0.01.
    pub fn init<R: Rng>(spec: NetworkSpec, rng: &mut R) -> Self {
        let dims = spec.dims().expect("spec validated");
        let n_layers = dims.len();
        let layers = dims
            .iter()
            .enumerate()
            .map(|(i, d)| LayerParams {
                weights: (0..d.weight_count()).map(|_| rng.gen_range(-1.0..1.0f32)).collect(),
                bn: if i + 1 < n_layers { Some(BatchNorm::identity(d.bn_units)) } else { None },
            })
            .collect();
        Self {
            spec,
            layers,
            rho: libm::logf(INITIAL_LAMBDA),
        }
    }

    pub fn lambda(&self) -> f32 {
        libm::expf(self.rho)
    }

    /// Binarized weights for one layer.
    pub fn signed_weights(&self, layer: usize) -> Vec<i8> {
        self.layers[layer].weights.iter().map(|&w| sign(w)).collect()
    }

    pub fn dims(&self) -> Vec<LayerDims> {
        self.spec.dims().expect("spec validated")
    }

    /// Largest |latent weight| across all layers.
    pub fn max_abs_weight(&self) -> f32 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .fold(0.0f32, |m, &w| m.max(w.abs()))
    }
}

/// Reference forward pass on the folded network: real-input conv (exact
/// integer arithmetic on the ×255 pixel scale), thresholded binarized
/// stack via ±1 MACs, λ-scaled output.
///
/// This is the unpacked twin of `compiled::CompiledNetwork::infer`; the two
/// must agree exactly.
pub fn forward(params: &NetworkParams, obs: &PixelTensor) -> Vec<f32> {
    let dims = params.dims();
    let (c0, h0, w0) = params.spec.input;
    assert_eq!(
        obs.shape,
        vec![c0, h0, w0],
        "observation shape {:?} does not match network input {:?}",
        obs.shape,
        (c0, h0, w0)
    );

    // First layer: signed-weight MAC over raw pixels, real-threshold fold.
    let d0 = dims[0];
    let w_sign = params.signed_weights(0);
    let mut hwc: Vec<i16> = Vec::new();
    kernels::chw_to_hwc(&obs.data, c0, h0, w0, |p: u8| p as i16, &mut hwc);
    let mut patches = Vec::new();
    let (p, k) = kernels::im2col_hwc(
        &hwc,
        c0,
        h0,
        w0,
        params.spec.layers[0].kernel,
        params.spec.layers[0].stride,
        &mut patches,
    );
    let mut o0 = vec![0i32; p * d0.out_size];
    let w_i16: Vec<i16> = w_sign.iter().map(|&s| s as i16).collect();
    kernels::int_conv_forward(&mut o0, &patches, &w_i16, p, k, d0.out_size);
    let bn0 = params.layers[0].bn.as_ref().expect("hidden layer has bn");
    let fold0 = fold_first_layer(bn0).expect("valid batchnorm");
    let mut act: Vec<i8> = Vec::with_capacity(p * d0.out_size);
    for pos in 0..p {
        for co in 0..d0.out_size {
            act.push(fold0.apply_scaled(co, o0[pos * d0.out_size + co]));
        }
    }

    // Hidden binarized stack; activations kept in HWC order.
    let n_layers = dims.len();
    let mut hw = d0.out_hw;
    for li in 1..n_layers {
        let d = dims[li];
        let spec_l = params.spec.layers[li];
        let w_sign = params.signed_weights(li);
        let is_last = li == n_layers - 1;
        let o: Vec<i32> = if spec_l.kind.is_conv() {
            conv_bin_reference(&act, d.in_size, hw.0, hw.1, &w_sign, d.out_size, spec_l.kernel, spec_l.stride)
        } else {
            // Prepend the constant +1 bias element.
            let mut input = Vec::with_capacity(act.len() + 1);
            input.push(1i8);
            input.extend_from_slice(&act);
            kernels::fc_reference_bin(&w_sign, &input, d.out_size, d.row_len)
        };
        if is_last {
            return scale_output(&o, params.lambda()).values;
        }
        let bn = params.layers[li].bn.as_ref().expect("hidden layer has bn");
        let fold = fold_layer(bn).expect("valid batchnorm");
        let units = d.bn_units;
        act = o
            .iter()
            .enumerate()
            .map(|(i, &v)| fold.apply(i % units, v))
            .collect();
        hw = d.out_hw;
    }
    unreachable!("last layer returns")
}

/// Spec-surface forward taking `[0,1]`-scaled reals; quantizes to the pixel
/// grid the exact path operates on.
pub fn forward_real(params: &NetworkParams, obs: &RealTensor) -> Vec<f32> {
    forward(params, &PixelTensor::from_real(obs))
}

/// Reference binarized conv: ±1 MACs over HWC activations.
pub fn conv_bin_reference(
    input: &[i8],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[i8],
    cout: usize,
    kernel: usize,
    stride: usize,
) -> Vec<i32> {
    let oh = conv_output_size(h, kernel, stride);
    let ow = conv_output_size(w, kernel, stride);
    let kk = kernel * kernel * cin;
    assert_eq!(weights.len(), cout * kk);
    assert_eq!(input.len(), h * w * cin);
    let mut out = vec![0i32; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let (y0, x0) = (oy * stride, ox * stride);
            for co in 0..cout {
                let wrow = &weights[co * kk..(co + 1) * kk];
                let mut acc = 0i32;
                let mut wi = 0;
                for ky in 0..kernel {
                    let row_base = ((y0 + ky) * w + x0) * cin;
                    for kx in 0..kernel {
                        let px_base = row_base + kx * cin;
                        for c in 0..cin {
                            acc += wrow[wi] as i32 * input[px_base + c] as i32;
                            wi += 1;
                        }
                    }
                }
                out[(oy * ow + ox) * cout + co] = acc;
            }
        }
    }
    out
}

/// Fold every unit of a hidden binarized layer.
pub fn fold_layer(bn: &BatchNorm) -> Result<FoldedActivation, FoldError> {
    let mut thresholds = Vec::with_capacity(bn.gamma.len());
    let mut directions = Vec::with_capacity(bn.gamma.len());
    for u in 0..bn.gamma.len() {
        let (t, d) = fold_batchnorm(bn.gamma[u], bn.beta[u], bn.running_mean[u], bn.running_var[u], bn.eps)?;
        thresholds.push(t);
        directions.push(d);
    }
    Ok(FoldedActivation { thresholds, directions })
}

/// Fold the first (real pre-activation) layer.
pub fn fold_first_layer(bn: &BatchNorm) -> Result<FoldedActivationReal, FoldError> {
    let mut thresholds = Vec::with_capacity(bn.gamma.len());
    let mut directions = Vec::with_capacity(bn.gamma.len());
    for u in 0..bn.gamma.len() {
        let (t, d) = fold_batchnorm_real(bn.gamma[u], bn.beta[u], bn.running_mean[u], bn.running_var[u], bn.eps)?;
        thresholds.push(t);
        directions.push(d);
    }
    Ok(FoldedActivationReal { thresholds, directions })
}

/// Human-readable one-line description of a spec (used by manifests).
pub fn describe_spec(spec: &NetworkSpec) -> String {
    let mut s = format!("input {}x{}x{}", spec.input.0, spec.input.1, spec.input.2);
    for l in &spec.layers {
        match l.kind {
            LayerKind::ConvBinWeight | LayerKind::ConvFullBin => {
                s += &format!(" -> Conv({},{},{})", l.kernel, l.stride, l.channels_or_nodes);
            }
            LayerKind::FcFullBin | LayerKind::FcScaledOutput => {
                s += &format!(" -> FC({})", l.channels_or_nodes);
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpn_shape_chain() {
        let spec = NetworkSpec::bpn((1, 84, 84), 400, 14);
        let dims = spec.dims().unwrap();
        assert_eq!(dims[0].out_hw, (20, 20));
        assert_eq!(dims[0].out_len, 20 * 20 * 8);
        assert_eq!(dims[1].out_hw, (9, 9));
        assert_eq!(dims[1].out_len, 9 * 9 * 16);
        assert_eq!(dims[2].out_hw, (7, 7));
        assert_eq!(dims[2].out_len, 7 * 7 * 16);
        assert_eq!(dims[3].in_size, 784);
        assert_eq!(dims[3].row_len, 785);
        assert_eq!(dims[3].out_len, 400);
        assert_eq!(dims[4].row_len, 401);
        assert_eq!(dims[4].out_len, 14);
    }

    #[test]
    fn spec_rejects_bad_orders() {
        let err = NetworkSpec::new(
            (1, 84, 84),
            vec![LayerSpec::conv_full_bin(8, 4, 8), LayerSpec::fc_scaled_output(4)],
        )
        .unwrap_err();
        assert_eq!(err, SpecError::FirstLayerNotConvBinWeight);

        let err = NetworkSpec::new(
            (1, 84, 84),
            vec![
                LayerSpec::conv_bin_weight(8, 4, 8),
                LayerSpec::fc_full_bin(10),
                LayerSpec::conv_full_bin(3, 1, 4),
                LayerSpec::fc_scaled_output(4),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, SpecError::ConvAfterFc { layer: 2 }));

        let err = NetworkSpec::new(
            (1, 4, 4),
            vec![LayerSpec::conv_bin_weight(8, 4, 8), LayerSpec::fc_scaled_output(4)],
        )
        .unwrap_err();
        assert!(matches!(err, SpecError::KernelTooLarge { .. }));
    }

    #[test]
    fn fold_hand_examples() {
        // γ=1, β=0, μ=5, σ²=1, ε=0 → τ=5, GEQ
        assert_eq!(fold_batchnorm(1.0, 0.0, 5.0, 1.0, 0.0).unwrap(), (5, Direction::Geq));
        // γ=−1 flips direction
        let (_, d) = fold_batchnorm(-1.0, 0.0, 5.0, 1.0, 0.0).unwrap();
        assert_eq!(d, Direction::Lt);
        // γ=1, β=0, μ=0 → plain sign
        assert_eq!(fold_batchnorm(1.0, 0.0, 0.0, 1.0, 0.0).unwrap(), (0, Direction::Geq));
        assert_eq!(fold_batchnorm(0.0, 1.0, 0.0, 1.0, 0.0), Err(FoldError::ZeroGamma));
    }

    #[test]
    fn fold_matches_bn_sign_on_integers() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..2000 {
            let gamma: f32 = loop {
                let g = rng.gen_range(-3.0..3.0f32);
                if g.abs() > 1e-4 {
                    break g;
                }
            };
            let beta = rng.gen_range(-3.0..3.0f32);
            let mean = rng.gen_range(-20.0..20.0f32);
            let var = rng.gen_range(0.0..25.0f32);
            let eps = 1e-5f32;
            let (tau, dir) = fold_batchnorm(gamma, beta, mean, var, eps).unwrap();
            let fold = FoldedActivation { thresholds: vec![tau], directions: vec![dir] };
            for o in -64..=64i32 {
                let bn = gamma as f64 * (o as f64 - mean as f64)
                    / libm::sqrt(var as f64 + eps as f64)
                    + beta as f64;
                let expect = if bn >= 0.0 { 1 } else { -1 };
                assert_eq!(
                    fold.apply(0, o),
                    expect,
                    "γ={gamma} β={beta} μ={mean} σ²={var} o={o} bn={bn}"
                );
            }
        }
    }

    #[test]
    fn scale_output_examples() {
        assert_eq!(scale_output(&[3, -2], 1.0).values, vec![3.0, -2.0]);
        let n = 40;
        assert_eq!(scale_output(&[n, -n], 0.5).values, vec![n as f32 / 2.0, -(n as f32) / 2.0]);
        assert_eq!(scale_output(&[0, 0, 0], 7.5).values, vec![0.0; 3]);
    }

    #[test]
    #[should_panic(expected = "positive")]
    fn scale_output_rejects_nonpositive_lambda() {
        scale_output(&[1], 0.0);
    }
}
