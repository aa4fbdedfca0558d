use bpn_core::kernels::matmul_acc;
use std::time::Instant;

fn bench(m: usize, k: usize, n: usize, reps: usize, label: &str) {
    let a: Vec<f32> = (0..m * k).map(|i| (i % 17) as f32 * 0.1 - 0.8).collect();
    let b: Vec<f32> = (0..k * n).map(|i| (i % 13) as f32 * 0.1 - 0.6).collect();
    let mut c = vec![0.0f32; m * n];
    matmul_acc(&mut c, &a, &b, m, k, n); // warm
    let t = Instant::now();
    for _ in 0..reps {
        c.iter_mut().for_each(|x| *x = 0.0);
        matmul_acc(&mut c, &a, &b, m, k, n);
    }
    let dt = t.elapsed().as_secs_f64() / reps as f64;
    let gmac = (m * k * n) as f64 / dt / 1e9;
    println!("{label}: {m}x{k}x{n}: {:.3} ms, {:.1} GMAC/s", dt * 1e3, gmac);
}

fn main() {
    bench(32, 785, 400, 200, "fc fwd   ");
    bench(12800, 64, 8, 200, "conv1 fwd");
    bench(2592, 128, 16, 200, "conv2 fwd");
    bench(1568, 144, 16, 200, "conv3 fwd");
    bench(512, 512, 512, 50, "square   ");
}
