use bpn_core::kernels::matmul_acc;
use std::time::Instant;

fn main() {
    // one large GEMM, min over repetitions, to compare thread configs honestly
    let (m, k, n) = (12800usize, 384, 8);
    let a: Vec<f32> = (0..m * k).map(|i| (i % 17) as f32 * 0.1 - 0.8).collect();
    let b: Vec<f32> = (0..k * n).map(|i| (i % 13) as f32 * 0.1 - 0.6).collect();
    let mut c = vec![0.0f32; m * n];
    let mut best = f64::INFINITY;
    for _ in 0..40 {
        c.iter_mut().for_each(|x| *x = 0.0);
        let t = Instant::now();
        matmul_acc(&mut c, &a, &b, m, k, n);
        best = best.min(t.elapsed().as_secs_f64());
    }
    println!("threads={:?}: conv1-track GEMM {m}x{k}x{n}: best {:.3} ms, {:.1} GMAC/s",
        std::env::var("RAYON_NUM_THREADS").unwrap_or_default(), best * 1e3, (m*k*n) as f64 / best / 1e9);
}
