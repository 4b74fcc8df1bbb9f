//! Measures conv2d forward+backward throughput on shapes representative of
//! one training iteration, reporting effective GMAC/s per shape.
//!
//! Run with: cargo run --example conv_throughput

use rlsr::tensor::{kaiming_uniform, Tensor};
use rlsr::Result;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

struct Case {
    label: &'static str,
    n: usize,
    ci: usize,
    co: usize,
    h: usize,
    k: usize,
    stride: usize,
    reps: usize,
}

fn run(case: &Case, rng: &mut ChaCha20Rng) -> Result<(f64, f64)> {
    let Case { n, ci, co, h, k, stride, reps, .. } = *case;
    let pad = k / 2;
    let x = Tensor::<f32>::param(kaiming_uniform(rng, ci * k * k, n * ci * h * h), &[n, ci, h, h])?;
    let w =
        Tensor::<f32>::param(kaiming_uniform(rng, ci * k * k, co * ci * k * k), &[co, ci, k, k])?;
    let b = Tensor::<f32>::param(vec![0.0; co], &[co])?;
    let oh = (h + 2 * pad - k) / stride + 1;
    let macs = (n * co * oh * oh * ci * k * k) as f64;

    let start = Instant::now();
    for _ in 0..reps {
        x.zero_grad();
        w.zero_grad();
        b.zero_grad();
        let y = x.conv2d(&w, Some(&b), stride, pad)?;
        let loss = y.mean_all()?;
        loss.backward()?;
    }
    let dt = start.elapsed().as_secs_f64();
    // Forward plus the two heavy backward kernels: ~3x the forward MAC count.
    let total = 3.0 * macs * reps as f64;
    Ok((total / dt / 1e9, dt / reps as f64 * 1e3))
}

fn main() -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let cases = [
        Case { label: "head 9x9 3->32 @16", n: 4, ci: 3, co: 32, h: 16, k: 9, stride: 1, reps: 200 },
        Case { label: "res 3x3 32->32 @16", n: 4, ci: 32, co: 32, h: 16, k: 3, stride: 1, reps: 200 },
        Case { label: "up 3x3 32->128 @32", n: 4, ci: 32, co: 128, h: 32, k: 3, stride: 1, reps: 40 },
        Case { label: "out 9x9 32->3 @64", n: 4, ci: 32, co: 3, h: 64, k: 9, stride: 1, reps: 40 },
        Case { label: "disc 3x3 32->64 @32", n: 4, ci: 32, co: 64, h: 32, k: 3, stride: 1, reps: 40 },
        Case { label: "disc 3x3 64->64 s2 @32", n: 4, ci: 64, co: 64, h: 32, k: 3, stride: 2, reps: 40 },
    ];
    println!("{:<26} {:>10} {:>12}", "shape", "GMAC/s", "ms/pass");
    let mut worst = f64::MAX;
    for case in &cases {
        let (rate, ms) = run(case, &mut rng)?;
        worst = worst.min(rate);
        println!("{:<26} {:>10.2} {:>12.3}", case.label, rate, ms);
    }
    println!("\nworst case: {worst:.2} GMAC/s (fwd+bwd)");
    Ok(())
}
