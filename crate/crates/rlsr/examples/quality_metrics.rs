//! Score image pairs with PSNR, single-scale SSIM, and MS-SSIM, including
//! the edge cases the metrics pin down exactly.

use rlsr::corpus::photo_fixture;
use rlsr::metrics::{max_feasible_scales, ms_ssim, psnr, psnr_from_mse, ssim};
use rlsr::raster::Image;

fn main() {
    let a = photo_fixture(176, 21);
    println!("identical images:");
    println!("  psnr    = {} dB", psnr(&a, &a, 1.0).unwrap());
    println!("  ssim    = {}", ssim(&a, &a).unwrap());
    println!("  ms-ssim = {}", ms_ssim(&a, &a, 5).unwrap());

    // Worst case: a 1x1 black-vs-white pair has MSE = peak^2, hence 0 dB.
    let black = Image::new(1, 1, 1, vec![0.0]).unwrap();
    let white = Image::new(1, 1, 1, vec![1.0]).unwrap();
    println!("1x1 black vs white: psnr = {} dB", psnr(&black, &white, 1.0).unwrap());
    println!("one 8-bit level of error: psnr = {:.4} dB", psnr_from_mse(1.0 / (255.0 * 255.0), 1.0));

    // Distort the fixture progressively and watch all three metrics fall.
    println!("\nuniform noise amplitude sweep on a 176x176 fixture:");
    let scales = max_feasible_scales(a.width(), a.height()).min(5);
    for amp in [0.01f32, 0.05, 0.15] {
        let mut b = a.clone();
        let mut state = 0x2545F4914F6CDD1Du64;
        for v in b.data_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (state >> 40) as f32 / (1u64 << 24) as f32;
            *v = (*v + amp * (2.0 * u - 1.0)).clamp(0.0, 1.0);
        }
        println!(
            "  amp {:.2}: psnr {:6.2} dB  ssim {:.4}  ms-ssim {:.4}",
            amp,
            psnr(&a, &b, 1.0).unwrap(),
            ssim(&a, &b).unwrap(),
            ms_ssim(&a, &b, scales).unwrap()
        );
    }
}
