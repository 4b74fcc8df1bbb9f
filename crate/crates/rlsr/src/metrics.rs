//! Full-reference image quality metrics: PSNR, SSIM, multi-scale SSIM.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5) in valid mode (windows
//! fully inside the image), stabilizers C1 = (0.01*M)^2 and C2 = (0.03*M)^2
//! with M = 1, weighted biased second moments, and all arithmetic in f64.
//! Color images score each channel independently and average.
//!
//! Two SSIM routes exist on purpose: the separable-filter implementation used
//! everywhere, and [`ssim_brute_force`], a direct per-window reference kept
//! for verification.

use crate::error::{Error, Result};
use crate::raster::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Canonical five-scale exponents. They sum to 1.0001; [`ms_ssim`]
/// renormalizes whatever prefix it uses, so a truncated run still forms a
/// weighted geometric mean and a single scale reduces to plain SSIM.
pub const MS_SSIM_EXPONENTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Mean squared error over interleaved samples, accumulated in f64.
pub fn mse(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    acc / a.len() as f64
}

/// 20*log10(max) - 10*log10(mse); identical inputs give +infinity.
pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * max_value.log10() - 10.0 * mse.log10()
    }
}

fn check_same_extents(op: &'static str, a: &Image, b: &Image) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(Error::Shape {
            op,
            message: format!(
                "images differ: {}x{}x{} vs {}x{}x{}",
                a.width(),
                a.height(),
                a.channels(),
                b.width(),
                b.height(),
                b.channels()
            ),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over all samples.
pub fn psnr(a: &Image, b: &Image, max_value: f64) -> Result<f64> {
    check_same_extents("psnr", a, b)?;
    Ok(psnr_from_mse(mse(a.data(), b.data()), max_value))
}

/// Normalized 1D Gaussian window.
fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0f64; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Planar f64 channels of an interleaved image.
fn planes(img: &Image) -> Vec<Vec<f64>> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = vec![vec![0.0f64; w * h]; c];
    for (i, &v) in img.data().iter().enumerate() {
        out[i % c][i / c] = v as f64;
    }
    out
}

/// Valid-mode separable correlation with the window along both axes:
/// (w, h) -> (w - 10, h - 10).
fn filter_valid(src: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - (SSIM_WINDOW - 1);
    let oh = h - (SSIM_WINDOW - 1);
    let mut mid = vec![0.0f64; ow * h];
    for y in 0..h {
        let row = &src[y * w..][..w];
        let out_row = &mut mid[y * ow..][..ow];
        for (ox, o) in out_row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &wt) in win.iter().enumerate() {
                acc += wt * row[ox + j];
            }
            *o = acc;
        }
    }
    let mut out = vec![0.0f64; ow * oh];
    for oy in 0..oh {
        let out_row = &mut out[oy * ow..][..ow];
        for ox in 0..ow {
            let mut acc = 0.0;
            for (j, &wt) in win.iter().enumerate() {
                acc += wt * mid[(oy + j) * ow + ox];
            }
            out_row[ox] = acc;
        }
    }
    out
}

/// Per-channel mean SSIM and mean contrast-structure term.
fn ssim_channel(x: &[f64], y: &[f64], w: usize, h: usize) -> (f64, f64) {
    let win = gaussian_window();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(x, w, h, &win);
    let mu_y = filter_valid(y, w, h, &win);
    let e_xx = filter_valid(&xx, w, h, &win);
    let e_yy = filter_valid(&yy, w, h, &win);
    let e_xy = filter_valid(&xy, w, h, &win);
    let mut ssim_sum = 0.0;
    let mut cs_sum = 0.0;
    let n = mu_x.len();
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = e_xx[i] - mx * mx;
        let vy = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let cs = (2.0 * cov + C2) / (vx + vy + C2);
        let lum = (2.0 * mx * my + C1) / (mx * mx + my * my + C1);
        ssim_sum += lum * cs;
        cs_sum += cs;
    }
    (ssim_sum / n as f64, cs_sum / n as f64)
}

fn check_ssim_size(op: &'static str, a: &Image) -> Result<()> {
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::InvalidInput {
            op,
            message: format!(
                "valid-mode window needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, image is {}x{}",
                a.width(),
                a.height()
            ),
        });
    }
    Ok(())
}

/// Mean SSIM over valid windows, averaged across channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same_extents("ssim", a, b)?;
    check_ssim_size("ssim", a)?;
    let (pa, pb) = (planes(a), planes(b));
    let mut total = 0.0;
    for (x, y) in pa.iter().zip(&pb) {
        total += ssim_channel(x, y, a.width(), a.height()).0;
    }
    Ok(total / pa.len() as f64)
}

/// Direct per-window SSIM used to verify the separable route. Quadratic in
/// the window size; keep off hot paths.
pub fn ssim_brute_force(a: &Image, b: &Image) -> Result<f64> {
    check_same_extents("ssim", a, b)?;
    check_ssim_size("ssim", a)?;
    let win = gaussian_window();
    let (w, h) = (a.width(), a.height());
    let (ow, oh) = (w - (SSIM_WINDOW - 1), h - (SSIM_WINDOW - 1));
    let (pa, pb) = (planes(a), planes(b));
    let mut total = 0.0;
    for (x, y) in pa.iter().zip(&pb) {
        let mut sum = 0.0;
        for wy in 0..oh {
            for wx in 0..ow {
                let mut mx = 0.0;
                let mut my = 0.0;
                let mut exx = 0.0;
                let mut eyy = 0.0;
                let mut exy = 0.0;
                for j in 0..SSIM_WINDOW {
                    for i in 0..SSIM_WINDOW {
                        let wt = win[j] * win[i];
                        let xv = x[(wy + j) * w + wx + i];
                        let yv = y[(wy + j) * w + wx + i];
                        mx += wt * xv;
                        my += wt * yv;
                        exx += wt * xv * xv;
                        eyy += wt * yv * yv;
                        exy += wt * xv * yv;
                    }
                }
                let vx = exx - mx * mx;
                let vy = eyy - my * my;
                let cov = exy - mx * my;
                sum += ((2.0 * mx * my + C1) / (mx * mx + my * my + C1))
                    * ((2.0 * cov + C2) / (vx + vy + C2));
            }
        }
        total += sum / (ow * oh) as f64;
    }
    Ok(total / pa.len() as f64)
}

/// Largest scale count for which the coarsest dyadic level still admits one
/// valid 11x11 window.
pub fn max_feasible_scales(width: usize, height: usize) -> usize {
    let mut scales = 0;
    let (mut w, mut h) = (width, height);
    while scales < MS_SSIM_EXPONENTS.len() && w >= SSIM_WINDOW && h >= SSIM_WINDOW {
        scales += 1;
        w /= 2;
        h /= 2;
    }
    scales
}

/// Non-overlapping 2x2 mean; odd trailing row/column dropped.
fn halve(src: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = vec![0.0f64; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            let base = 2 * oy * w + 2 * ox;
            out[oy * ow + ox] = 0.25 * (src[base] + src[base + 1] + src[base + w] + src[base + w + 1]);
        }
    }
    (out, ow, oh)
}

/// Multi-scale SSIM: contrast-structure terms at the finer scales, full SSIM
/// at the coarsest, combined as a weighted geometric mean with the
/// renormalized exponent prefix. Per-scale means clamp at zero.
pub fn ms_ssim(a: &Image, b: &Image, scales: usize) -> Result<f64> {
    check_same_extents("ms_ssim", a, b)?;
    if scales == 0 || scales > MS_SSIM_EXPONENTS.len() {
        return Err(Error::InvalidInput {
            op: "ms_ssim",
            message: format!("scales must be 1..={}, got {scales}", MS_SSIM_EXPONENTS.len()),
        });
    }
    let feasible = max_feasible_scales(a.width(), a.height());
    if scales > feasible {
        return Err(Error::InvalidInput {
            op: "ms_ssim",
            message: format!(
                "{}x{} supports at most {feasible} scales, requested {scales}",
                a.width(),
                a.height()
            ),
        });
    }
    let weight_sum: f64 = MS_SSIM_EXPONENTS[..scales].iter().sum();
    let (pa, pb) = (planes(a), planes(b));
    let mut total = 0.0;
    for (x0, y0) in pa.iter().zip(&pb) {
        let mut x = x0.clone();
        let mut y = y0.clone();
        let (mut w, mut h) = (a.width(), a.height());
        let mut score = 1.0f64;
        for (s, &e) in MS_SSIM_EXPONENTS[..scales].iter().enumerate() {
            let (ssim_mean, cs_mean) = ssim_channel(&x, &y, w, h);
            let term = if s + 1 == scales { ssim_mean } else { cs_mean }.max(0.0);
            score *= term.powf(e / weight_sum);
            if s + 1 < scales {
                let (nx, nw, nh) = halve(&x, w, h);
                let (ny, _, _) = halve(&y, w, h);
                x = nx;
                y = ny;
                w = nw;
                h = nh;
            }
        }
        total += score;
    }
    Ok(total / pa.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn noise(w: usize, h: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Image::new(w, h, c, (0..w * h * c).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    fn perturbed(img: &Image, amp: f32, seed: u64) -> Image {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data = img
            .data()
            .iter()
            .map(|&v| (v + rng.gen_range(-amp..amp)).clamp(0.0, 1.0))
            .collect();
        Image::new(img.width(), img.height(), img.channels(), data).unwrap()
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let img = noise(16, 16, 3, 1);
        assert!(psnr(&img, &img, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn psnr_of_black_vs_white_is_zero() {
        let black = Image::new(8, 8, 1, vec![0.0; 64]).unwrap();
        let white = Image::new(8, 8, 1, vec![1.0; 64]).unwrap();
        assert_eq!(psnr(&black, &white, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn psnr_of_one_quantization_step_matches_reference() {
        // Uniform difference of 1/255 at max 1: 20*log10(255) dB.
        let a = Image::new(8, 8, 1, vec![0.0; 64]).unwrap();
        let b = Image::new(8, 8, 1, vec![1.0 / 255.0; 64]).unwrap();
        let got = psnr(&a, &b, 1.0).unwrap();
        assert!((got - 48.130_803_608_679_1).abs() < 1e-3, "got {got}");
    }

    #[test]
    fn psnr_rejects_extent_mismatch() {
        assert!(psnr(&noise(8, 8, 1, 2), &noise(8, 9, 1, 2), 1.0).is_err());
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let img = noise(24, 16, 3, 3);
        let s = ssim(&img, &img).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "ssim {s}");
    }

    #[test]
    fn ssim_decreases_with_noise_amplitude() {
        let img = noise(32, 32, 1, 4);
        let light = ssim(&img, &perturbed(&img, 0.05, 5)).unwrap();
        let heavy = ssim(&img, &perturbed(&img, 0.3, 6)).unwrap();
        assert!(light > heavy, "light {light} heavy {heavy}");
        assert!(light < 1.0);
    }

    #[test]
    fn separable_route_matches_brute_force() {
        for seed in 0..3 {
            let a = noise(28, 21, 3, 100 + seed);
            let b = perturbed(&a, 0.2, 200 + seed);
            let fast = ssim(&a, &b).unwrap();
            let slow = ssim_brute_force(&a, &b).unwrap();
            assert!((fast - slow).abs() < 1e-9, "seed {seed}: {fast} vs {slow}");
        }
    }

    #[test]
    fn ssim_rejects_images_below_window_size() {
        let img = noise(10, 16, 1, 7);
        assert!(ssim(&img, &img).is_err());
    }

    #[test]
    fn feasible_scales_follow_dyadic_halving() {
        assert_eq!(max_feasible_scales(176, 176), 5);
        assert_eq!(max_feasible_scales(88, 88), 4);
        assert_eq!(max_feasible_scales(64, 64), 3);
        assert_eq!(max_feasible_scales(22, 22), 2);
        assert_eq!(max_feasible_scales(11, 11), 1);
        assert_eq!(max_feasible_scales(10, 64), 0);
    }

    #[test]
    fn ms_ssim_of_identical_images_is_one() {
        let img = noise(176, 176, 1, 8);
        let s = ms_ssim(&img, &img, 5).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "ms_ssim {s}");
    }

    #[test]
    fn single_scale_ms_ssim_equals_plain_ssim() {
        let a = noise(32, 32, 3, 9);
        let b = perturbed(&a, 0.15, 10);
        let single = ms_ssim(&a, &b, 1).unwrap();
        let plain = ssim(&a, &b).unwrap();
        assert!((single - plain).abs() < 1e-12, "{single} vs {plain}");
    }

    #[test]
    fn ms_ssim_rejects_infeasible_scale_requests() {
        let img = noise(64, 64, 1, 11);
        let err = ms_ssim(&img, &img, 5).unwrap_err().to_string();
        assert!(err.contains("at most 3"), "{err}");
        assert!(ms_ssim(&img, &img, 3).is_ok());
        assert!(ms_ssim(&img, &img, 0).is_err());
        assert!(ms_ssim(&img, &img, 6).is_err());
    }

    #[test]
    fn ms_ssim_decreases_with_noise() {
        let a = noise(88, 88, 1, 12);
        let light = ms_ssim(&a, &perturbed(&a, 0.05, 13), 4).unwrap();
        let heavy = ms_ssim(&a, &perturbed(&a, 0.3, 14), 4).unwrap();
        assert!(light > heavy, "light {light} heavy {heavy}");
    }

    #[test]
    fn exponent_prefix_renormalization_sums_to_one() {
        for scales in 1..=5 {
            let sum: f64 = MS_SSIM_EXPONENTS[..scales].iter().sum();
            let renorm: f64 = MS_SSIM_EXPONENTS[..scales].iter().map(|e| e / sum).sum();
            assert!((renorm - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn metrics_are_deterministic() {
        let a = noise(48, 48, 3, 15);
        let b = perturbed(&a, 0.1, 16);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&a, &b).unwrap());
        assert_eq!(ms_ssim(&a, &b, 3).unwrap(), ms_ssim(&a, &b, 3).unwrap());
    }
}
