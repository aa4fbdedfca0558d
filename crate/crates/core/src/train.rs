//! Latent-weight training: batched forward with batch-statistic batchnorm,
//! hand-derived backward with straight-through estimators, and the Adam
//! optimizer.
//!
//! Three network kinds share one code path:
//! - `Binary`: sign-binarized weights and sign activations (STE backward) —
//!   the BPN/BQN training network;
//! - `Float`: raw weights and ReLU — the float CVI reference baseline;
//! - `Surrogate`: raw weights and hard-tanh. Its exact gradient coincides
//!   with the STE backward rule, which is what makes finite-difference
//!   checks of the backward pass possible.
//!
//! Gradients are accumulated in fixed chunk order, so results do not depend
//! on thread count.

use alloc::vec;
use alloc::vec::Vec;

use crate::kernels::{self, conv_output_size};
use crate::net::{LayerDims, NetworkParams};
use crate::tensor::PixelTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Binary,
    Float,
    Surrogate,
}

impl NetKind {
    fn binarize_weights(self) -> bool {
        matches!(self, NetKind::Binary)
    }
    fn scales_output(self) -> bool {
        !matches!(self, NetKind::Float)
    }
}

/// Batchnorm running-average momentum for batch statistics.
pub const BN_MOMENTUM: f32 = 0.1;

struct LayerCache {
    /// Conv layers: im2col patches [B·P × K]. FC layers: input with the
    /// constant +1 bias element [B × nin+1].
    input: Vec<f32>,
    /// Effective (possibly binarized) weights used in the forward pass,
    /// original [out × in] orientation; backward reuses them for dx.
    w_eff: Vec<f32>,
    /// Pre-batchnorm outputs [rows × units].
    o: Vec<f32>,
    /// Normalized pre-activations (empty for the output layer).
    xhat: Vec<f32>,
    /// Batchnorm outputs, kept for the STE clip mask.
    y: Vec<f32>,
    batch_var: Vec<f32>,
    rows: usize,
}

pub struct ForwardCache {
    layers: Vec<LayerCache>,
    dims: Vec<LayerDims>,
    pub batch: usize,
    pub prefs: Vec<f32>,
}

/// Per-layer gradient holder mirroring the trainables.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct GradientSet {
    pub layers: Vec<LayerGrads>,
    pub rho: f32,
}

impl GradientSet {
    pub fn is_finite(&self) -> bool {
        self.rho.is_finite()
            && self.layers.iter().all(|l| {
                l.weights.iter().all(|g| g.is_finite())
                    && l.gamma.iter().all(|g| g.is_finite())
                    && l.beta.iter().all(|g| g.is_finite())
            })
    }
}

/// Effective weights and their transpose in one pass over the latents.
fn weights_with_transpose(
    params: &NetworkParams,
    layer: usize,
    kind: NetKind,
    rows: usize,
    cols: usize,
) -> (Vec<f32>, Vec<f32>) {
    let src = &params.layers[layer].weights;
    debug_assert_eq!(src.len(), rows * cols);
    let binarize = kind.binarize_weights();
    let mut w_eff = Vec::with_capacity(src.len());
    let mut wt = vec![0.0f32; src.len()];
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        for (c, &w) in row.iter().enumerate() {
            let v = if binarize {
                if w >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                w
            };
            w_eff.push(v);
            wt[c * rows + r] = v;
        }
    }
    (w_eff, wt)
}

fn transpose(w: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut t = vec![0.0f32; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = w[r * cols + c];
        }
    }
    t
}

/// Per-unit batch mean and biased variance over `[rows × units]` data.
fn bn_batch_stats(o: &[f32], rows: usize, units: usize) -> (Vec<f32>, Vec<f32>) {
    match units {
        8 => bn_batch_stats_const::<8>(o, rows),
        16 => bn_batch_stats_const::<16>(o, rows),
        _ => {
            let m = rows as f32;
            let mut mean = vec![0.0f32; units];
            let mut var = vec![0.0f32; units];
            for chunk in o.chunks_exact(units) {
                for u in 0..units {
                    mean[u] += chunk[u];
                }
            }
            for mu in mean.iter_mut() {
                *mu /= m;
            }
            for chunk in o.chunks_exact(units) {
                for u in 0..units {
                    let d = chunk[u] - mean[u];
                    var[u] += d * d;
                }
            }
            for v in var.iter_mut() {
                *v /= m;
            }
            (mean, var)
        }
    }
}

/// Fused normalize pass: `x̂ = (o − μ)·inv_std`, `y = γ·x̂ + β`.
fn bn_norm_pass(
    o: &[f32],
    mean: &[f32],
    inv_std: &[f32],
    gamma: &[f32],
    beta: &[f32],
    units: usize,
    xhat: &mut [f32],
    y: &mut [f32],
) {
    match units {
        8 => bn_norm_pass_const::<8>(o, mean, inv_std, gamma, beta, xhat, y),
        16 => bn_norm_pass_const::<16>(o, mean, inv_std, gamma, beta, xhat, y),
        _ => {
            for ((oc, xc), yc) in o
                .chunks_exact(units)
                .zip(xhat.chunks_exact_mut(units))
                .zip(y.chunks_exact_mut(units))
            {
                for u in 0..units {
                    xc[u] = (oc[u] - mean[u]) * inv_std[u];
                    yc[u] = gamma[u] * xc[u] + beta[u];
                }
            }
        }
    }
}

fn bn_norm_pass_const<const U: usize>(
    o: &[f32],
    mean: &[f32],
    inv_std: &[f32],
    gamma: &[f32],
    beta: &[f32],
    xhat: &mut [f32],
    y: &mut [f32],
) {
    let mut mu = [0.0f32; U];
    mu.copy_from_slice(mean);
    let mut inv = [0.0f32; U];
    inv.copy_from_slice(inv_std);
    let mut g = [0.0f32; U];
    g.copy_from_slice(gamma);
    let mut b = [0.0f32; U];
    b.copy_from_slice(beta);
    for ((oc, xc), yc) in o
        .chunks_exact(U)
        .zip(xhat.chunks_exact_mut(U))
        .zip(y.chunks_exact_mut(U))
    {
        for u in 0..U {
            xc[u] = (oc[u] - mu[u]) * inv[u];
            yc[u] = g[u] * xc[u] + b[u];
        }
    }
}

fn bn_batch_stats_const<const U: usize>(o: &[f32], rows: usize) -> (Vec<f32>, Vec<f32>) {
    let m = rows as f32;
    let mut mean = [0.0f32; U];
    for chunk in o.chunks_exact(U) {
        for u in 0..U {
            mean[u] += chunk[u];
        }
    }
    for mu in mean.iter_mut() {
        *mu /= m;
    }
    let mut var = [0.0f32; U];
    for chunk in o.chunks_exact(U) {
        for u in 0..U {
            let d = chunk[u] - mean[u];
            var[u] += d * d;
        }
    }
    for v in var.iter_mut() {
        *v /= m;
    }
    (mean.to_vec(), var.to_vec())
}

/// Scatter-add of patch gradients back onto the HWC activation grid.
fn col2im_hwc(
    dpatches: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    dinput: &mut [f32],
) {
    let oh = conv_output_size(h, kernel, stride);
    let ow = conv_output_size(w, kernel, stride);
    let run = kernel * cin;
    let k = kernel * run;
    let mut pi = 0;
    for oy in 0..oh {
        for ox in 0..ow {
            let (y0, x0) = (oy * stride, ox * stride);
            let patch = &dpatches[pi * k..(pi + 1) * k];
            for ky in 0..kernel {
                let base = ((y0 + ky) * w + x0) * cin;
                for i in 0..run {
                    dinput[base + i] += patch[ky * run + i];
                }
            }
            pi += 1;
        }
    }
    debug_assert_eq!(pi, oh * ow);
}

/// Batched training-mode forward pass.
///
/// Uses batch statistics for batchnorm (batch ≥ 2 required) and updates the
/// running averages in `params`. Returns per-sample preferences `[B × |A|]`
/// and the cache backward needs.
pub fn forward_train(
    params: &mut NetworkParams,
    kind: NetKind,
    obs: &[&PixelTensor],
) -> (Vec<f32>, ForwardCache) {
    assert!(obs.len() >= 2, "training-mode batchnorm needs batch size >= 2, got {}", obs.len());
    let (prefs, cache, updates) = forward_core(params, kind, obs, true);
    for (li, mean, var) in updates {
        let bn = params.layers[li].bn.as_mut().expect("hidden layer has bn");
        for u in 0..bn.gamma.len() {
            bn.running_mean[u] = (1.0 - BN_MOMENTUM) * bn.running_mean[u] + BN_MOMENTUM * mean[u];
            bn.running_var[u] = (1.0 - BN_MOMENTUM) * bn.running_var[u] + BN_MOMENTUM * var[u];
        }
    }
    (prefs, cache)
}

/// Eval-mode batched forward (running statistics). Does not touch running
/// averages; any batch size ≥ 1 works.
pub fn forward_eval_batch(params: &NetworkParams, kind: NetKind, obs: &[&PixelTensor]) -> Vec<f32> {
    forward_core(params, kind, obs, false).0
}

/// Eval-mode forward on a single observation (the float baseline's behavior
/// path).
pub fn forward_eval(params: &NetworkParams, kind: NetKind, obs: &PixelTensor) -> Vec<f32> {
    forward_eval_batch(params, kind, &[obs])
}

type BnUpdates = Vec<(usize, Vec<f32>, Vec<f32>)>;

fn forward_core(
    params: &NetworkParams,
    kind: NetKind,
    obs: &[&PixelTensor],
    train: bool,
) -> (Vec<f32>, ForwardCache, BnUpdates) {
    let dims = params.dims();
    let batch = obs.len();
    assert!(batch >= 1, "empty batch");
    let (c0, h0, w0) = params.spec.input;
    for o in obs {
        assert_eq!(o.shape, vec![c0, h0, w0], "observation shape mismatch");
    }

    let n_layers = dims.len();
    let mut caches: Vec<LayerCache> = Vec::with_capacity(n_layers);
    let mut updates: BnUpdates = Vec::new();
    // Current activation, HWC per sample, concatenated over the batch.
    let mut act: Vec<f32> = Vec::new();
    let mut prefs = Vec::new();

    let mut hwc_scratch: Vec<f32> = Vec::new();
    for li in 0..n_layers {
        let d = dims[li];
        let spec_l = params.spec.layers[li];
        let is_last = li == n_layers - 1;

        let (w_eff, o, input, rows) = if spec_l.kind.is_conv() {
            // Gather patches for the whole batch.
            let k = d.row_len;
            let (w_eff, wt) = weights_with_transpose(params, li, kind, d.out_size, k);
            let mut patches: Vec<f32> = Vec::with_capacity(batch * d.out_hw.0 * d.out_hw.1 * k);
            let mut p_per = 0;
            if li == 0 {
                for ob in obs {
                    kernels::chw_to_hwc(&ob.data, c0, h0, w0, |p: u8| p as f32 / 255.0, &mut hwc_scratch);
                    let (p, _) = kernels::im2col_hwc(
                        &hwc_scratch,
                        c0,
                        h0,
                        w0,
                        spec_l.kernel,
                        spec_l.stride,
                        &mut patches,
                    );
                    p_per = p;
                }
            } else {
                let (h, w) = d.in_hw;
                let per_sample = h * w * d.in_size;
                for b in 0..batch {
                    let (p, _) = kernels::im2col_hwc(
                        &act[b * per_sample..(b + 1) * per_sample],
                        d.in_size,
                        h,
                        w,
                        spec_l.kernel,
                        spec_l.stride,
                        &mut patches,
                    );
                    p_per = p;
                }
            }
            let rows = batch * p_per;
            let mut o = vec![0.0f32; rows * d.out_size];
            kernels::matmul_acc(&mut o, &patches, &wt, rows, k, d.out_size);
            (w_eff, o, patches, rows)
        } else {
            // FC: prepend the constant +1 bias element per sample.
            let nin = d.in_size;
            let (w_eff, wt) = weights_with_transpose(params, li, kind, d.out_size, nin + 1);
            let mut x = Vec::with_capacity(batch * (nin + 1));
            for b in 0..batch {
                x.push(1.0);
                x.extend_from_slice(&act[b * nin..(b + 1) * nin]);
            }
            let mut o = vec![0.0f32; batch * d.out_size];
            kernels::matmul_acc(&mut o, &x, &wt, batch, nin + 1, d.out_size);
            (w_eff, o, x, batch)
        };

        if is_last {
            let lambda = if kind.scales_output() { params.lambda() } else { 1.0 };
            prefs = o.iter().map(|&v| lambda * v).collect();
            caches.push(LayerCache {
                input,
                w_eff,
                o,
                xhat: Vec::new(),
                y: Vec::new(),
                batch_var: Vec::new(),
                rows,
            });
            break;
        }

        // Batchnorm over rows, per unit.
        let units = d.bn_units;
        let bn = params.layers[li].bn.as_ref().expect("hidden layer has bn");
        let (mean, var) = if train {
            let (mean, var) = bn_batch_stats(&o, rows, units);
            updates.push((li, mean.clone(), var.clone()));
            (mean, var)
        } else {
            (bn.running_mean.clone(), bn.running_var.clone())
        };
        let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / libm::sqrtf(v + bn.eps)).collect();
        let mut xhat = vec![0.0f32; rows * units];
        let mut y = vec![0.0f32; rows * units];
        bn_norm_pass(&o, &mean, &inv_std, &bn.gamma, &bn.beta, units, &mut xhat, &mut y);

        // Activation.
        act = match kind {
            NetKind::Binary => y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect(),
            NetKind::Surrogate => y.iter().map(|&v| v.clamp(-1.0, 1.0)).collect(),
            NetKind::Float => y.iter().map(|&v| v.max(0.0)).collect(),
        };

        caches.push(LayerCache {
            input,
            w_eff,
            o,
            xhat,
            y,
            batch_var: var,
            rows,
        });
    }

    let cache = ForwardCache { layers: caches, dims, batch, prefs: prefs.clone() };
    (prefs, cache, updates)
}

/// `C[m×n] += Aᵀ · B` with `A: [p×m]`, `B: [p×n]`.
///
/// Transposing A first turns this into a row-major GEMM whose output rows
/// stay cache-resident; for narrow C the reduction dimension is split into
/// two fixed chunks so the work still lands on both cores deterministically.
fn matmul_at_b(c: &mut [f32], a: &[f32], b: &[f32], p: usize, m: usize, n: usize) {
    assert_eq!(a.len(), p * m);
    assert_eq!(b.len(), p * n);
    assert_eq!(c.len(), m * n);
    #[cfg(feature = "parallel")]
    {
        if m < 16 && p >= 512 && p * m * n >= 1 << 18 {
            let half = p / 2;
            let (a0, a1) = a.split_at(half * m);
            let (b0, b1) = b.split_at(half * n);
            let at0 = transpose(a0, half, m);
            let at1 = transpose(a1, p - half, m);
            let mut c1 = vec![0.0f32; m * n];
            rayon::join(
                || kernels::matmul_acc(c, &at0, b0, m, half, n),
                || kernels::matmul_acc(&mut c1, &at1, b1, m, p - half, n),
            );
            for (ci, c1i) in c.iter_mut().zip(&c1) {
                *ci += c1i;
            }
            return;
        }
    }
    let at = transpose(a, p, m);
    kernels::matmul_acc(c, &at, b, m, p, n);
}

/// Per-unit `Σdy` and `Σdy·x̂` reductions for the batchnorm backward.
fn bn_backward_sums(dy: &[f32], xhat: &[f32], rows: usize, units: usize) -> (Vec<f32>, Vec<f32>) {
    match units {
        8 => bn_backward_sums_const::<8>(dy, xhat),
        16 => bn_backward_sums_const::<16>(dy, xhat),
        _ => {
            let mut sum_dy = vec![0.0f32; units];
            let mut sum_dy_xhat = vec![0.0f32; units];
            for r in 0..rows {
                for u in 0..units {
                    let i = r * units + u;
                    sum_dy[u] += dy[i];
                    sum_dy_xhat[u] += dy[i] * xhat[i];
                }
            }
            (sum_dy, sum_dy_xhat)
        }
    }
}

fn bn_backward_sums_const<const U: usize>(dy: &[f32], xhat: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let mut s = [0.0f32; U];
    let mut sx = [0.0f32; U];
    for (dc, xc) in dy.chunks_exact(U).zip(xhat.chunks_exact(U)) {
        for u in 0..U {
            s[u] += dc[u];
            sx[u] += dc[u] * xc[u];
        }
    }
    (s.to_vec(), sx.to_vec())
}

/// `do = scale·(dy − mean(dy) − x̂·mean(dy·x̂))`, per unit.
fn bn_backward_pass(
    dy: &[f32],
    xhat: &[f32],
    scale: &[f32],
    mean_dy: &[f32],
    mean_dy_xhat: &[f32],
    units: usize,
    out: &mut [f32],
) {
    match units {
        8 => bn_backward_pass_const::<8>(dy, xhat, scale, mean_dy, mean_dy_xhat, out),
        16 => bn_backward_pass_const::<16>(dy, xhat, scale, mean_dy, mean_dy_xhat, out),
        _ => {
            for ((dc, xc), oc) in dy
                .chunks_exact(units)
                .zip(xhat.chunks_exact(units))
                .zip(out.chunks_exact_mut(units))
            {
                for u in 0..units {
                    oc[u] = scale[u] * (dc[u] - mean_dy[u] - xc[u] * mean_dy_xhat[u]);
                }
            }
        }
    }
}

fn bn_backward_pass_const<const U: usize>(
    dy: &[f32],
    xhat: &[f32],
    scale: &[f32],
    mean_dy: &[f32],
    mean_dy_xhat: &[f32],
    out: &mut [f32],
) {
    let mut sc = [0.0f32; U];
    sc.copy_from_slice(scale);
    let mut md = [0.0f32; U];
    md.copy_from_slice(mean_dy);
    let mut mdx = [0.0f32; U];
    mdx.copy_from_slice(mean_dy_xhat);
    for ((dc, xc), oc) in dy
        .chunks_exact(U)
        .zip(xhat.chunks_exact(U))
        .zip(out.chunks_exact_mut(U))
    {
        for u in 0..U {
            oc[u] = sc[u] * (dc[u] - md[u] - xc[u] * mdx[u]);
        }
    }
}

/// Backward pass from preference gradients `[B × |A|]` to a full gradient
/// set. The cache must come from a training-mode forward on the same
/// parameters.
pub fn backward(
    params: &NetworkParams,
    kind: NetKind,
    cache: &ForwardCache,
    dprefs: &[f32],
) -> GradientSet {
    let dims = &cache.dims;
    let n_layers = dims.len();
    let last = n_layers - 1;
    assert_eq!(dprefs.len(), cache.batch * dims[last].out_size);

    let mut grads: Vec<LayerGrads> = dims
        .iter()
        .enumerate()
        .map(|(li, d)| LayerGrads {
            weights: vec![0.0; d.weight_count()],
            gamma: vec![0.0; if li == last { 0 } else { d.bn_units }],
            beta: vec![0.0; if li == last { 0 } else { d.bn_units }],
        })
        .collect();

    // Output layer: P = λ·o_L (λ ≡ 1 for the float kind).
    let lambda = if kind.scales_output() { params.lambda() } else { 1.0 };
    let o_last = &cache.layers[last].o;
    let mut drho = 0.0f64;
    if kind.scales_output() {
        // dJ/dρ = Σ dP ⊙ o_L · λ  (since dP/dρ = o_L·e^ρ)
        for (dp, ol) in dprefs.iter().zip(o_last) {
            drho += *dp as f64 * *ol as f64;
        }
        drho *= lambda as f64;
    }
    let mut d_o: Vec<f32> = dprefs.iter().map(|&g| g * lambda).collect();

    // Walk layers in reverse; d_o enters each iteration as the gradient of
    // that layer's pre-batchnorm output.
    for li in (0..n_layers).rev() {
        let d = dims[li];
        let lc = &cache.layers[li];
        let spec_l = params.spec.layers[li];
        let w_eff = &lc.w_eff;

        // Weight and input gradients through the MAC.
        let d_input: Option<Vec<f32>> = if spec_l.kind.is_conv() {
            let k = d.row_len;
            let rows = lc.rows;
            // dW[cout×K] += d_oᵀ · patches
            matmul_at_b(&mut grads[li].weights, &d_o, &lc.input, rows, d.out_size, k);
            if li == 0 {
                None
            } else {
                // dpatches = d_o · W_eff, then scatter back per sample.
                let mut dpatches = vec![0.0f32; rows * k];
                kernels::matmul_acc(&mut dpatches, &d_o, &w_eff, rows, d.out_size, k);
                let (h, w) = d.in_hw;
                let per_sample = h * w * d.in_size;
                let p_per = rows / cache.batch;
                let mut dinput = vec![0.0f32; cache.batch * per_sample];
                for b in 0..cache.batch {
                    col2im_hwc(
                        &dpatches[b * p_per * k..(b + 1) * p_per * k],
                        d.in_size,
                        h,
                        w,
                        spec_l.kernel,
                        spec_l.stride,
                        &mut dinput[b * per_sample..(b + 1) * per_sample],
                    );
                }
                Some(dinput)
            }
        } else {
            let nin1 = d.row_len;
            // dW[nout×nin+1] += d_oᵀ · x
            matmul_at_b(&mut grads[li].weights, &d_o, &lc.input, cache.batch, d.out_size, nin1);
            // dx = d_o · W_eff, bias column stripped.
            let mut dx = vec![0.0f32; cache.batch * nin1];
            kernels::matmul_acc(&mut dx, &d_o, &w_eff, cache.batch, d.out_size, nin1);
            let mut dinput = vec![0.0f32; cache.batch * (nin1 - 1)];
            for b in 0..cache.batch {
                dinput[b * (nin1 - 1)..(b + 1) * (nin1 - 1)]
                    .copy_from_slice(&dx[b * nin1 + 1..(b + 1) * nin1]);
            }
            Some(dinput)
        };

        if li == 0 {
            break;
        }

        // The gradient we just produced is with respect to the PREVIOUS
        // layer's post-activation output. Push it through activation and
        // batchnorm of layer li−1 to get d(pre-BN) for that layer.
        let da = d_input.expect("hidden layers propagate");
        let prev = li - 1;
        let pc = &cache.layers[prev];
        let pd = dims[prev];
        let units = pd.bn_units;
        let rows = pc.rows;
        debug_assert_eq!(da.len(), rows * units);

        // Activation backward.
        let mut dy = vec![0.0f32; rows * units];
        match kind {
            NetKind::Binary | NetKind::Surrogate => {
                for i in 0..da.len() {
                    if pc.y[i].abs() <= 1.0 {
                        dy[i] = da[i];
                    }
                }
            }
            NetKind::Float => {
                for i in 0..da.len() {
                    if pc.y[i] > 0.0 {
                        dy[i] = da[i];
                    }
                }
            }
        }

        // Batchnorm backward (batch statistics).
        let bn = params.layers[prev].bn.as_ref().expect("hidden layer has bn");
        let (sum_dy, sum_dy_xhat) = bn_backward_sums(&dy, &pc.xhat, rows, units);
        grads[prev].gamma.copy_from_slice(&sum_dy_xhat);
        grads[prev].beta.copy_from_slice(&sum_dy);
        let m = rows as f32;
        let scale: Vec<f32> = (0..units)
            .map(|u| bn.gamma[u] / libm::sqrtf(pc.batch_var[u] + bn.eps))
            .collect();
        let mean_dy: Vec<f32> = sum_dy.iter().map(|&s| s / m).collect();
        let mean_dy_xhat: Vec<f32> = sum_dy_xhat.iter().map(|&s| s / m).collect();
        let mut d_o_prev = vec![0.0f32; rows * units];
        bn_backward_pass(&dy, &pc.xhat, &scale, &mean_dy, &mean_dy_xhat, units, &mut d_o_prev);
        d_o = d_o_prev;
    }

    GradientSet { layers: grads, rho: drho as f32 }
}

/// Adam with the standard moment defaults. The output-scale parameter ρ gets
/// a 100× learning-rate multiplier: Adam's per-parameter steps are bounded
/// by the learning rate, and λ = exp(ρ) has to traverse several log units
/// within the first training iterations.
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub rho_lr_mult: f32,
    step: u64,
    m: Vec<LayerGrads>,
    v: Vec<LayerGrads>,
    m_rho: f32,
    v_rho: f32,
    skipped: u64,
}

impl Adam {
    pub fn new(params: &NetworkParams, lr: f32) -> Self {
        let zeros: Vec<LayerGrads> = {
            let dims = params.dims();
            let last = dims.len() - 1;
            dims.iter()
                .enumerate()
                .map(|(li, d)| LayerGrads {
                    weights: vec![0.0; d.weight_count()],
                    gamma: vec![0.0; if li == last { 0 } else { d.bn_units }],
                    beta: vec![0.0; if li == last { 0 } else { d.bn_units }],
                })
                .collect()
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            rho_lr_mult: 100.0,
            step: 0,
            m: zeros.clone(),
            v: zeros,
            m_rho: 0.0,
            v_rho: 0.0,
            skipped: 0,
        }
    }

    pub fn steps_skipped(&self) -> u64 {
        self.skipped
    }

    /// One update. Non-finite gradients skip the step entirely. Binary-kind
    /// latent weights are clamped to [−1, 1] afterwards; the float kind
    /// trains neither ρ nor clamps.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &GradientSet, kind: NetKind) {
        if !grads.is_finite() {
            self.skipped += 1;
            log::warn!("skipping optimizer step {}: non-finite gradient", self.step + 1);
            return;
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(self.beta1 as f64, t);
        let bc2 = 1.0 - libm::pow(self.beta2 as f64, t);

        let update = |p: &mut f32, g: f32, m: &mut f32, v: &mut f32, lr: f32, b1: f32, b2: f32, eps: f32| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mhat = *m as f64 / bc1;
            let vhat = *v as f64 / bc2;
            *p -= (lr as f64 * mhat / (libm::sqrt(vhat) + eps as f64)) as f32;
        };

        for (li, lg) in grads.layers.iter().enumerate() {
            let lp = &mut params.layers[li];
            let (mm, vv) = (&mut self.m[li], &mut self.v[li]);
            for (i, &g) in lg.weights.iter().enumerate() {
                update(&mut lp.weights[i], g, &mut mm.weights[i], &mut vv.weights[i], self.lr, self.beta1, self.beta2, self.eps);
                if kind.binarize_weights() {
                    lp.weights[i] = lp.weights[i].clamp(-1.0, 1.0);
                }
            }
            if let Some(bn) = lp.bn.as_mut() {
                for (i, &g) in lg.gamma.iter().enumerate() {
                    update(&mut bn.gamma[i], g, &mut mm.gamma[i], &mut vv.gamma[i], self.lr, self.beta1, self.beta2, self.eps);
                }
                for (i, &g) in lg.beta.iter().enumerate() {
                    update(&mut bn.beta[i], g, &mut mm.beta[i], &mut vv.beta[i], self.lr, self.beta1, self.beta2, self.eps);
                }
            }
        }
        if kind.scales_output() {
            let lr = self.lr * self.rho_lr_mult;
            update(&mut params.rho, grads.rho, &mut self.m_rho, &mut self.v_rho, lr, self.beta1, self.beta2, self.eps);
        }
    }
}
