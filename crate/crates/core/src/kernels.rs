//! Compute kernels: XNOR/popcount dot products, sign-weight MACs, and the
//! f32 GEMM + im2col machinery behind the training path.
//!
//! Two independent routes exist for every binarized product: the packed
//! word-level route (`fc_packed`, `PackedMatrix`) and the reference ±1 MAC
//! route (`fc_reference`, `fc_reference_bin`). They must agree bit-exactly;
//! the test suites hold them to that.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{sign, PackedBitTensor, RealTensor};

/// ±1 weight matrix packed row-wise: each row is word-aligned so it can be
/// XNOR'd directly against a packed input vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedMatrix {
    pub words: Vec<u64>,
    pub rows: usize,
    pub cols: usize,
}

impl PackedMatrix {
    pub fn row_words(cols: usize) -> usize {
        cols.div_ceil(64)
    }

    /// Pack a row-major ±1 matrix, aligning each row to a word boundary.
    pub fn pack(values: &[i8], rows: usize, cols: usize) -> Self {
        assert_eq!(values.len(), rows * cols);
        let rw = Self::row_words(cols);
        let mut words = vec![0u64; rows * rw];
        for r in 0..rows {
            for c in 0..cols {
                if values[r * cols + c] == 1 {
                    words[r * rw + c / 64] |= 1u64 << (c % 64);
                }
            }
        }
        Self { words, rows, cols }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        let rw = Self::row_words(self.cols);
        &self.words[r * rw..(r + 1) * rw]
    }

    pub fn unpack(&self) -> Vec<i8> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for c in 0..self.cols {
                out.push(if row[c / 64] >> (c % 64) & 1 == 1 { 1 } else { -1 });
            }
        }
        out
    }

    #[inline]
    pub fn tail_mask(&self) -> u64 {
        let rem = self.cols % 64;
        if rem == 0 {
            u64::MAX
        } else {
            (1u64 << rem) - 1
        }
    }
}

/// Popcount of XNOR over word slices, with the final word masked to the
/// valid bits. Dead tail bits would otherwise count as matches (XNOR(0,0)=1).
#[inline]
pub fn xnor_popcount(w: &[u64], x: &[u64], tail_mask: u64) -> u32 {
    debug_assert_eq!(w.len(), x.len());
    let n = w.len();
    let mut count = 0u32;
    for i in 0..n {
        let mut m = !(w[i] ^ x[i]);
        if i == n - 1 {
            m &= tail_mask;
        }
        count += m.count_ones();
    }
    count
}

/// XNOR/popcount fully-connected product: `o_m = 2·popcount(XNOR(w_m, x)) − N`.
///
/// Equals the ±1 MAC `Σ_n w_mn·x_n` bit-exactly on the same data.
pub fn fc_packed(weights: &PackedMatrix, input: &PackedBitTensor) -> Vec<i32> {
    assert_eq!(
        weights.cols, input.logical_len,
        "fc_packed: weight row length {} != input length {}",
        weights.cols, input.logical_len
    );
    let n = weights.cols as i32;
    let mask = weights.tail_mask();
    (0..weights.rows)
        .map(|m| 2 * xnor_popcount(weights.row(m), &input.words, mask) as i32 - n)
        .collect()
}

/// Reference fully-connected product of Eq.-12 form: `o_m = Σ_n Sign(w_mn)·x_n`.
///
/// Weights are binarized by sign; the input is used as-is (it may be real
/// for the first layer or ±1-valued downstream).
pub fn fc_reference(weights: &RealTensor, input: &RealTensor) -> RealTensor {
    assert_eq!(weights.shape.len(), 2, "fc_reference: weights must be M×N");
    let (m, n) = (weights.shape[0], weights.shape[1]);
    assert_eq!(
        input.len(),
        n,
        "fc_reference: input length {} != weight columns {}",
        input.len(),
        n
    );
    let mut out = Vec::with_capacity(m);
    for r in 0..m {
        let mut acc = 0.0f32;
        for c in 0..n {
            acc += sign(weights.values[r * n + c]) as f32 * input.values[c];
        }
        out.push(acc);
    }
    RealTensor::new(out, vec![m])
}

/// ±1 integer MAC reference used by the folded forward path.
pub fn fc_reference_bin(weights: &[i8], input: &[i8], rows: usize, cols: usize) -> Vec<i32> {
    assert_eq!(weights.len(), rows * cols);
    assert_eq!(input.len(), cols);
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &weights[r * cols..(r + 1) * cols];
        let mut acc = 0i32;
        for c in 0..cols {
            acc += row[c] as i32 * input[c] as i32;
        }
        out.push(acc);
    }
    out
}

/// Spatial output size of a valid (no padding) convolution.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize) -> usize {
    assert!(
        kernel <= input,
        "kernel {kernel} larger than input {input}"
    );
    assert!(stride >= 1);
    (input - kernel) / stride + 1
}

/// Reorder a CHW image into channel-innermost HWC order, converting
/// elements on the way (pixel → f32 scaling, pixel → i16 widening).
pub fn chw_to_hwc<S: Copy, T, F: Fn(S) -> T>(
    input: &[S],
    cin: usize,
    h: usize,
    w: usize,
    f: F,
    out: &mut Vec<T>,
) {
    assert_eq!(input.len(), cin * h * w);
    out.clear();
    out.reserve(input.len());
    let hw = h * w;
    for px in 0..hw {
        for c in 0..cin {
            out.push(f(input[c * hw + px]));
        }
    }
}

/// Gather convolution windows of an HWC image into a patch matrix of shape
/// `[oh·ow × kh·kw·cin]`, window elements flattened (ky, kx, c). Each window
/// row is one contiguous run of `kernel·cin` elements.
pub fn im2col_hwc<T: Copy>(
    input: &[T],
    cin: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    out: &mut Vec<T>,
) -> (usize, usize) {
    assert_eq!(input.len(), cin * h * w);
    let oh = conv_output_size(h, kernel, stride);
    let ow = conv_output_size(w, kernel, stride);
    let k = kernel * kernel * cin;
    out.reserve(oh * ow * k);
    let run = kernel * cin;
    for oy in 0..oh {
        for ox in 0..ow {
            let (y0, x0) = (oy * stride, ox * stride);
            for ky in 0..kernel {
                let base = ((y0 + ky) * w + x0) * cin;
                out.extend_from_slice(&input[base..base + run]);
            }
        }
    }
    (oh * ow, k)
}

/// `C[m×n] += A[m×k] · B[k×n]`, all row-major.
///
/// The j-innermost rank-1 update order autovectorizes well; row blocks are
/// distributed over a fixed number of chunks so results are identical
/// regardless of thread count.
pub fn matmul_acc(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    #[cfg(feature = "parallel")]
    {
        if m >= 16 && m * k * n >= 1 << 18 {
            let half = m / 2;
            let (c0, c1) = c.split_at_mut(half * n);
            let (a0, a1) = a.split_at(half * k);
            rayon::join(
                || matmul_rows(c0, a0, b, half, k, n),
                || matmul_rows(c1, a1, b, m - half, k, n),
            );
            return;
        }
    }
    matmul_rows(c, a, b, m, k, n);
}

fn matmul_rows(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    // Narrow outputs (conv channel counts) keep the whole accumulator row in
    // registers; the generic rank-1 form handles everything else.
    match n {
        8 => return matmul_rows_const::<8>(c, a, b, m, k),
        16 => return matmul_rows_const::<16>(c, a, b, m, k),
        32 => return matmul_rows_const::<32>(c, a, b, m, k),
        _ => {}
    }
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                c_row[j] += aik * b_row[j];
            }
        }
    }
}

fn matmul_rows_const<const NC: usize>(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize) {
    for i in 0..m {
        let mut acc = [0.0f32; NC];
        let a_row = &a[i * k..(i + 1) * k];
        for kk in 0..k {
            let aik = a_row[kk];
            let b_row = &b[kk * NC..(kk + 1) * NC];
            for j in 0..NC {
                acc[j] += aik * b_row[j];
            }
        }
        let c_row = &mut c[i * NC..(i + 1) * NC];
        for j in 0..NC {
            c_row[j] += acc[j];
        }
    }
}

/// Exact integer first-layer forward: `c[i,j] = Σ_k patches[i,k]·weights[j,k]`
/// with i16 pixel patches and i16 (±1) weight rows, accumulated in i32.
///
/// Dot-product form: integer addition is associative, so the reduction
/// vectorizes (widening multiply-add), unlike its f32 counterpart.
pub fn int_conv_forward(c: &mut [i32], patches: &[i16], weights: &[i16], p: usize, k: usize, n: usize) {
    assert_eq!(patches.len(), p * k);
    assert_eq!(weights.len(), n * k);
    assert_eq!(c.len(), p * n);
    #[cfg(feature = "parallel")]
    {
        if p >= 64 {
            let half = p / 2;
            let (c0, c1) = c.split_at_mut(half * n);
            let (a0, a1) = patches.split_at(half * k);
            rayon::join(
                || int_conv_rows(c0, a0, weights, half, k, n),
                || int_conv_rows(c1, a1, weights, p - half, k, n),
            );
            return;
        }
    }
    int_conv_rows(c, patches, weights, p, k, n);
}

fn int_conv_rows(c: &mut [i32], patches: &[i16], weights: &[i16], p: usize, k: usize, n: usize) {
    for i in 0..p {
        let row = &patches[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            let w_row = &weights[j * k..(j + 1) * k];
            c_row[j] = dot_i16(row, w_row);
        }
    }
}

#[inline]
fn dot_i16(a: &[i16], b: &[i16]) -> i32 {
    a.iter().zip(b).map(|(&x, &y)| x as i32 * y as i32).sum()
}

/// Naive sequential fully-connected forward: one f32 accumulator per output,
/// no reassociation. Used as the independent oracle in tests and as the
/// benchmark's float reference.
#[inline(never)]
pub fn fc_float_naive(weights: &[f32], input: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    assert_eq!(weights.len(), rows * cols);
    assert_eq!(input.len(), cols);
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut acc = 0.0f32;
        for c in 0..cols {
            acc += weights[r * cols + c] * input[c];
        }
        out.push(acc);
    }
    out
}

/// Naive sequential valid convolution on a CHW f32 image, output HWC.
#[inline(never)]
pub fn conv_float_naive(
    input: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[f32],
    cout: usize,
    kernel: usize,
    stride: usize,
) -> Vec<f32> {
    let oh = conv_output_size(h, kernel, stride);
    let ow = conv_output_size(w, kernel, stride);
    let kk = kernel * kernel * cin;
    assert_eq!(weights.len(), cout * kk);
    let mut out = vec![0.0f32; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let (y0, x0) = (oy * stride, ox * stride);
            for co in 0..cout {
                let wrow = &weights[co * kk..(co + 1) * kk];
                let mut acc = 0.0f32;
                let mut wi = 0;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let base = (y0 + ky) * w + x0 + kx;
                        for c in 0..cin {
                            acc += wrow[wi] * input[c * h * w + base];
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

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fc_packed_hand_example() {
        // w=[+1,−1,+1,+1], x=[+1,+1,−1,+1]: XNOR bits 1001, popcount 2, o=0.
        let w = PackedMatrix::pack(&[1, -1, 1, 1], 1, 4);
        let x = PackedBitTensor::pack_flat(&[1, 1, -1, 1]);
        assert_eq!(fc_packed(&w, &x), vec![0]);
    }

    #[test]
    fn fc_packed_extremes() {
        let bits: Vec<i8> = (0..70).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let flipped: Vec<i8> = bits.iter().map(|&b| -b).collect();
        let w = PackedMatrix::pack(&bits, 1, 70);
        let x_same = PackedBitTensor::pack_flat(&bits);
        let x_opp = PackedBitTensor::pack_flat(&flipped);
        assert_eq!(fc_packed(&w, &x_same), vec![70]);
        assert_eq!(fc_packed(&w, &x_opp), vec![-70]);
    }

    #[test]
    fn fc_reference_hand_example() {
        // w=[1,−2], x=[3,4] → 3−4 = −1
        let w = RealTensor::new(vec![1.0, -2.0], vec![1, 2]);
        let x = RealTensor::new(vec![3.0, 4.0], vec![2]);
        assert_eq!(fc_reference(&w, &x).values, vec![-1.0]);
    }

    #[test]
    fn fc_reference_all_positive_on_ones() {
        let n = 17;
        let w = RealTensor::new(vec![0.25; 3 * n], vec![3, n]);
        let x = RealTensor::new(vec![1.0; n], vec![n]);
        assert_eq!(fc_reference(&w, &x).values, vec![n as f32; 3]);
    }

    #[test]
    fn fc_reference_zero_input() {
        let w = RealTensor::new(vec![-0.5, 0.5, 1.5, -1.5], vec![2, 2]);
        let x = RealTensor::zeros(vec![2]);
        assert_eq!(fc_reference(&w, &x).values, vec![0.0, 0.0]);
    }

    /// Brute-force ±1 MAC oracle for the packed path.
    fn mac_oracle(w: &[i8], x: &[i8]) -> i32 {
        w.iter().zip(x).map(|(&a, &b)| a as i32 * b as i32).sum()
    }

    #[test]
    fn packed_equals_reference_across_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(1..=257);
            let w: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let x: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let packed = fc_packed(
                &PackedMatrix::pack(&w, 1, n),
                &PackedBitTensor::pack_flat(&x),
            );
            assert_eq!(packed[0], mac_oracle(&w, &x), "n={n}");
        }
    }

    #[test]
    fn conv_output_sizes_chain() {
        assert_eq!(conv_output_size(84, 8, 4), 20);
        assert_eq!(conv_output_size(20, 4, 2), 9);
        assert_eq!(conv_output_size(9, 3, 1), 7);
    }

    #[test]
    fn matmul_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, k, n) = (70, 13, 9);
        let a: Vec<f32> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut c = vec![0.0f32; m * n];
        matmul_acc(&mut c, &a, &b, m, k, n);
        for i in 0..m {
            for j in 0..n {
                let exact: f64 = (0..k)
                    .map(|kk| a[i * k + kk] as f64 * b[kk * n + j] as f64)
                    .sum();
                assert!((c[i * n + j] as f64 - exact).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn im2col_matmul_matches_naive_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (cin, h, w, cout, kernel, stride) = (3, 11, 13, 4, 3, 2);
        let input: Vec<f32> = (0..cin * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let weights: Vec<f32> = (0..cout * kernel * kernel * cin)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let naive = conv_float_naive(&input, cin, h, w, &weights, cout, kernel, stride);
        let mut hwc = Vec::new();
        chw_to_hwc(&input, cin, h, w, |v: f32| v, &mut hwc);
        let mut patches = Vec::new();
        let (p, k) = im2col_hwc(&hwc, cin, h, w, kernel, stride, &mut patches);
        // transpose weights to [k × cout] for the GEMM
        let mut wt = vec![0.0f32; k * cout];
        for co in 0..cout {
            for kk in 0..k {
                wt[kk * cout + co] = weights[co * k + kk];
            }
        }
        let mut out = vec![0.0f32; p * cout];
        matmul_acc(&mut out, &patches, &wt, p, k, cout);
        for (a, b) in out.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn packed_reference_equivalence(
            seed in any::<u64>(),
            n in 1usize..257,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = 3;
            let w: Vec<i8> = (0..m * n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let x: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let packed = fc_packed(
                &PackedMatrix::pack(&w, m, n),
                &PackedBitTensor::pack_flat(&x),
            );
            for r in 0..m {
                prop_assert_eq!(packed[r], mac_oracle(&w[r * n..(r + 1) * n], &x));
            }
        }

        #[test]
        fn packed_matrix_round_trip(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..130) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<i8> = (0..rows * cols).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let m = PackedMatrix::pack(&vals, rows, cols);
            prop_assert_eq!(m.unpack(), vals);
        }
    }
}
