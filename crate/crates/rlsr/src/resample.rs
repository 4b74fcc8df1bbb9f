//! Classical separable image resampling.
//!
//! Coordinates map through s = (o + 0.5) * scale - 0.5 with scale = in/out.
//! When downsampling (scale > 1) the kernel is stretched by the scale factor
//! so it acts as a low-pass filter. Taps falling outside the image clamp to
//! the edge sample, weights are renormalized to sum to one, and all
//! arithmetic runs in f64 before the final clamp into [0, 1].

use crate::error::{Error, Result};
use crate::raster::Image;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    /// Windowed sinc, radius 3.
    Lanczos3,
    /// Cubic convolution with a = -0.5 (Catmull-Rom), radius 2.
    CatmullRom,
    /// Single nearest tap; no kernel stretching on downsampling, so scaling
    /// by 1/2 reduces to stride-2 subsampling at offset 1.
    Nearest,
}

impl Filter {
    pub fn radius(self) -> f64 {
        match self {
            Filter::Lanczos3 => 3.0,
            Filter::CatmullRom => 2.0,
            Filter::Nearest => 0.5,
        }
    }

    /// Kernel value at x (in un-stretched units).
    pub fn kernel(self, x: f64) -> f64 {
        match self {
            Filter::Lanczos3 => lanczos3(x),
            Filter::CatmullRom => catmull_rom(x),
            Filter::Nearest => {
                if (-0.5..0.5).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Filter::Lanczos3 => "lanczos3",
            Filter::CatmullRom => "catmull_rom",
            Filter::Nearest => "nearest",
        }
    }
}

impl std::str::FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lanczos3" | "lanczos" => Ok(Filter::Lanczos3),
            "catmull_rom" | "bicubic" => Ok(Filter::CatmullRom),
            "nearest" => Ok(Filter::Nearest),
            other => Err(Error::InvalidInput {
                op: "filter",
                message: format!("unknown filter '{other}' (lanczos3|catmull_rom|nearest)"),
            }),
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// sinc(x) * sinc(x/3) inside |x| < 3, zero outside.
pub fn lanczos3(x: f64) -> f64 {
    let ax = x.abs();
    if ax >= 3.0 {
        0.0
    } else {
        sinc(ax) * sinc(ax / 3.0)
    }
}

/// Cubic convolution kernel with a = -0.5.
pub fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let ax = x.abs();
    if ax < 1.0 {
        (A + 2.0) * ax * ax * ax - (A + 3.0) * ax * ax + 1.0
    } else if ax < 2.0 {
        A * (ax * ax * ax - 5.0 * ax * ax + 8.0 * ax - 4.0)
    } else {
        0.0
    }
}

/// Weights for one output position along one axis.
struct Taps {
    start: usize,
    weights: Vec<f64>,
}

fn build_taps(in_n: usize, out_n: usize, filter: Filter) -> Vec<Taps> {
    let scale = in_n as f64 / out_n as f64;
    let mut taps = Vec::with_capacity(out_n);
    if filter == Filter::Nearest {
        for o in 0..out_n {
            let i = (((o as f64 + 0.5) * scale).floor() as isize).clamp(0, in_n as isize - 1);
            taps.push(Taps { start: i as usize, weights: vec![1.0] });
        }
        return taps;
    }
    let stretch = scale.max(1.0);
    let radius = filter.radius() * stretch;
    for o in 0..out_n {
        let s = (o as f64 + 0.5) * scale - 0.5;
        let lo = (s - radius).ceil() as isize;
        let hi = (s + radius).floor() as isize;
        let start = lo.clamp(0, in_n as isize - 1) as usize;
        let end = hi.clamp(0, in_n as isize - 1) as usize;
        let mut weights = vec![0.0f64; end - start + 1];
        let mut sum = 0.0;
        for i in lo..=hi {
            let w = filter.kernel((i as f64 - s) / stretch);
            let idx = i.clamp(0, in_n as isize - 1) as usize;
            weights[idx - start] += w;
            sum += w;
        }
        debug_assert!(sum.abs() > 1e-12, "kernel weights degenerate");
        for w in &mut weights {
            *w /= sum;
        }
        taps.push(Taps { start, weights });
    }
    taps
}

/// Resize to (out_w, out_h): horizontal pass then vertical pass, f64
/// intermediates, output clamped into [0, 1].
pub fn resample(img: &Image, out_w: usize, out_h: usize, filter: Filter) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidInput {
            op: "resample",
            message: format!("output extents must be positive, got {out_w}x{out_h}"),
        });
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let src = img.data();

    let htaps = build_taps(w, out_w, filter);
    let mut mid = vec![0.0f64; out_w * h * c];
    for y in 0..h {
        let in_row = &src[y * w * c..][..w * c];
        let mid_row = &mut mid[y * out_w * c..][..out_w * c];
        for (ox, t) in htaps.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for (j, &wt) in t.weights.iter().enumerate() {
                    acc += wt * in_row[(t.start + j) * c + ch] as f64;
                }
                mid_row[ox * c + ch] = acc;
            }
        }
    }

    let vtaps = build_taps(h, out_h, filter);
    let mut out = vec![0.0f32; out_w * out_h * c];
    for (oy, t) in vtaps.iter().enumerate() {
        let out_row = &mut out[oy * out_w * c..][..out_w * c];
        for ox in 0..out_w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (j, &wt) in t.weights.iter().enumerate() {
                    acc += wt * mid[((t.start + j) * out_w + ox) * c + ch];
                }
                out_row[ox * c + ch] = acc.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Image::new(out_w, out_h, c, out)
}

/// Convenience: scale both extents by `num/den` (rounding down, minimum 1).
pub fn resample_by(img: &Image, num: usize, den: usize, filter: Filter) -> Result<Image> {
    if num == 0 || den == 0 {
        return Err(Error::InvalidInput {
            op: "resample",
            message: "scale ratio terms must be positive".into(),
        });
    }
    let out_w = (img.width() * num / den).max(1);
    let out_h = (img.height() * num / den).max(1);
    resample(img, out_w, out_h, filter)
}

/// Mirror-extend the right and bottom edges so both extents become multiples
/// of `r`.
pub fn reflect_pad_to_multiple(img: &Image, r: usize) -> Result<Image> {
    if r == 0 {
        return Err(Error::InvalidInput { op: "pad", message: "factor must be positive".into() });
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let pw = w.div_ceil(r) * r;
    let ph = h.div_ceil(r) * r;
    if pw == w && ph == h {
        return Ok(img.clone());
    }
    if pw - w > w || ph - h > h {
        return Err(Error::InvalidInput {
            op: "pad",
            message: format!("image {w}x{h} too small to mirror-pad to multiple of {r}"),
        });
    }
    let mut out = Image::zeros(pw, ph, c)?;
    for y in 0..ph {
        let sy = if y < h { y } else { 2 * h - 1 - y };
        for x in 0..pw {
            let sx = if x < w { x } else { 2 * w - 1 - x };
            for ch in 0..c {
                out.set_sample(x, y, ch, img.sample(sx, sy, ch));
            }
        }
    }
    Ok(out)
}

/// Downsample by an integer factor with the Catmull-Rom kernel, mirror
/// padding first so the extents divide evenly.
pub fn bicubic_downsample(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 {
        return Err(Error::InvalidInput {
            op: "bicubic_downsample",
            message: "factor must be positive".into(),
        });
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let padded = reflect_pad_to_multiple(img, factor)?;
    resample(&padded, padded.width() / factor, padded.height() / factor, Filter::CatmullRom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(w: usize, h: usize, c: usize, v: f32) -> Image {
        Image::new(w, h, c, vec![v; w * h * c]).unwrap()
    }

    #[test]
    fn lanczos_kernel_reference_values() {
        assert_eq!(lanczos3(0.0), 1.0);
        assert!((lanczos3(0.5) - 0.6079271018540267).abs() < 1e-15);
        assert!(lanczos3(1.0).abs() < 1e-15);
        assert!(lanczos3(2.0).abs() < 1e-15);
        assert_eq!(lanczos3(3.0), 0.0);
        assert_eq!(lanczos3(-3.1), 0.0);
        assert!((lanczos3(-0.5) - lanczos3(0.5)).abs() < 1e-15);
    }

    #[test]
    fn catmull_rom_kernel_reference_values() {
        assert_eq!(catmull_rom(0.0), 1.0);
        assert_eq!(catmull_rom(0.5), 0.5625);
        assert_eq!(catmull_rom(1.0), 0.0);
        assert_eq!(catmull_rom(1.5), -0.0625);
        assert_eq!(catmull_rom(2.0), 0.0);
        assert_eq!(catmull_rom(-1.5), -0.0625);
    }

    #[test]
    fn flat_field_is_preserved_at_all_scales_and_filters() {
        let img = flat(32, 24, 3, 0.37);
        for filter in [Filter::Lanczos3, Filter::CatmullRom, Filter::Nearest] {
            for (num, den) in [(1, 4), (1, 2), (2, 1), (4, 1)] {
                let out = resample_by(&img, num, den, filter).unwrap();
                assert_eq!(out.width(), 32 * num / den);
                assert_eq!(out.height(), 24 * num / den);
                for &v in out.data() {
                    assert!(
                        (v - 0.37).abs() < 1e-6,
                        "{} x{num}/{den}: {v}",
                        filter.name()
                    );
                }
            }
        }
    }

    #[test]
    fn identity_resize_is_exact_for_kernel_filters() {
        let data: Vec<f32> = (0..8 * 6 * 3).map(|i| (i % 256) as f32 / 255.0).collect();
        let img = Image::new(8, 6, 3, data).unwrap();
        for filter in [Filter::Lanczos3, Filter::CatmullRom, Filter::Nearest] {
            let out = resample(&img, 8, 6, filter).unwrap();
            for (a, b) in img.data().iter().zip(out.data()) {
                assert!((a - b).abs() < 1e-6, "{}", filter.name());
            }
        }
    }

    #[test]
    fn nearest_upsample_duplicates_pixels() {
        let img = Image::new(2, 1, 1, vec![0.2, 0.8]).unwrap();
        let out = resample(&img, 4, 2, Filter::Nearest).unwrap();
        assert_eq!(out.data(), &[0.2, 0.2, 0.8, 0.8, 0.2, 0.2, 0.8, 0.8]);
    }

    #[test]
    fn nearest_halving_is_offset_subsampling() {
        // floor((o + 0.5) * 2) = 2o + 1: picks indices 1, 3, 5, ...
        let data: Vec<f32> = (0..8).map(|i| i as f32 / 10.0).collect();
        let img = Image::new(8, 1, 1, data).unwrap();
        let out = resample(&img, 4, 1, Filter::Nearest).unwrap();
        assert_eq!(out.data(), &[0.1, 0.3, 0.5, 0.7]);
    }

    #[test]
    fn catmull_rom_reproduces_linear_ramps_in_the_interior() {
        // Cubic convolution is exact on degree-1 signals away from edges.
        let w = 16;
        let data: Vec<f32> = (0..w).map(|x| x as f32 / (w - 1) as f32 * 0.8).collect();
        let img = Image::new(w, 1, 1, data).unwrap();
        let out = resample(&img, w * 2, 1, Filter::CatmullRom).unwrap();
        let scale = 0.5;
        for ox in 8..(2 * w - 8) {
            let s = (ox as f64 + 0.5) * scale - 0.5;
            let expect = s / (w - 1) as f64 * 0.8;
            let got = out.data()[ox] as f64;
            assert!((got - expect).abs() < 1e-6, "ox {ox}: {got} vs {expect}");
        }
    }

    #[test]
    fn downsampling_stretches_the_kernel() {
        // At x0.25 a checkerboard must average out instead of aliasing to a
        // constant 0 or 1 plane; unstretched kernels would alias.
        let w = 32;
        let data: Vec<f32> =
            (0..w * w).map(|i| (((i % w) + (i / w)) % 2) as f32).collect();
        let img = Image::new(w, w, 1, data).unwrap();
        let out = resample_by(&img, 1, 4, Filter::Lanczos3).unwrap();
        let mean: f32 = out.data().iter().sum::<f32>() / out.data().len() as f32;
        assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
        let spread = out
            .data()
            .iter()
            .map(|&v| (v - mean).abs())
            .fold(0.0f32, f32::max);
        assert!(spread < 0.25, "spread {spread}");
    }

    #[test]
    fn reflect_padding_mirrors_edges() {
        let img = Image::new(3, 2, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0].iter().map(|v| v / 10.0).collect()).unwrap();
        let padded = reflect_pad_to_multiple(&img, 4).unwrap();
        assert_eq!((padded.width(), padded.height()), (4, 4));
        // Row 0: [1 2 3 | 3] mirrored.
        assert_eq!(padded.sample(3, 0, 0), 0.3);
        // Row 2 mirrors row 1, row 3 mirrors row 0.
        assert_eq!(padded.sample(0, 2, 0), 0.4);
        assert_eq!(padded.sample(0, 3, 0), 0.1);
    }

    #[test]
    fn bicubic_downsample_handles_non_multiple_extents() {
        let img = flat(7, 5, 3, 0.5);
        let out = bicubic_downsample(&img, 4).unwrap();
        assert_eq!((out.width(), out.height()), (2, 2));
        for &v in out.data() {
            assert!((v - 0.5).abs() < 1e-6);
        }
        assert_eq!(bicubic_downsample(&img, 1).unwrap(), img);
    }

    #[test]
    fn resampling_is_deterministic() {
        let data: Vec<f32> = (0..24 * 18 * 3).map(|i| ((i * 37) % 251) as f32 / 250.0).collect();
        let img = Image::new(24, 18, 3, data).unwrap();
        let a = resample_by(&img, 1, 2, Filter::Lanczos3).unwrap();
        let b = resample_by(&img, 1, 2, Filter::Lanczos3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_zero_output() {
        let img = flat(4, 4, 1, 0.1);
        assert!(resample(&img, 0, 4, Filter::Nearest).is_err());
    }
}
