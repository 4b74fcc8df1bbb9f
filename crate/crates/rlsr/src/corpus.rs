//! Dataset handling: directory-backed corpora with deterministic ordering,
//! random patch-pair sampling for training, and the procedural image
//! generators used for desk-scale experiments and fixtures.

use crate::error::{Error, Result};
use crate::raster::Image;
use crate::resample::bicubic_downsample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub struct CorpusEntry {
    pub id: String,
    pub path: PathBuf,
    pub image: Image,
}

/// In-memory image collection. Entries are ordered lexicographically by id,
/// so two loads of the same directory are identical.
pub struct Corpus {
    split: Split,
    entries: Vec<CorpusEntry>,
    skipped: usize,
}

impl Corpus {
    /// Scan a directory for images, decoding each once. Undecodable files
    /// are skipped with a warning on stderr and counted.
    pub fn load<P: AsRef<Path>>(dir: P, split: Split) -> Result<Corpus> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::Corpus(format!("{} is not a directory", dir.display())));
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                    .unwrap_or(false)
            })
            .collect();
        paths.sort();
        let mut entries = Vec::new();
        let mut skipped = 0;
        for path in paths {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .map(String::from)
                .unwrap_or_else(|| path.display().to_string());
            match std::fs::read(&path).map_err(Error::from).and_then(|b| Image::decode(&b)) {
                Ok(image) => entries.push(CorpusEntry { id, path, image }),
                Err(err) => {
                    eprintln!("warning: skipping undecodable {}: {err}", path.display());
                    skipped += 1;
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::Corpus(format!(
                "no decodable images in {} ({skipped} skipped)",
                dir.display()
            )));
        }
        Ok(Corpus { split, entries, skipped })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }
}

/// Draw one (LR, HR) training pair: a uniform random `patch_hr` square crop
/// from a uniformly chosen image large enough to hold it, downsampled by
/// `factor`. `lr_jpeg_quality` optionally re-encodes the LR patch through
/// JPEG to mimic a lossy transmission chain.
pub fn sample_patch_pair(
    corpus: &Corpus,
    rng: &mut ChaCha20Rng,
    patch_hr: usize,
    factor: usize,
    lr_jpeg_quality: Option<u8>,
) -> Result<(Image, Image)> {
    if patch_hr == 0 || factor == 0 || patch_hr % factor != 0 {
        return Err(Error::Config(format!(
            "patch edge {patch_hr} must be a positive multiple of factor {factor}"
        )));
    }
    let eligible: Vec<usize> = corpus
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.image.width() >= patch_hr && e.image.height() >= patch_hr)
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Corpus(format!(
            "no image in the {} corpus is at least {patch_hr}x{patch_hr}",
            corpus.split
        )));
    }
    let img = &corpus.entries[eligible[rng.gen_range(0..eligible.len())]].image;
    let x0 = rng.gen_range(0..=img.width() - patch_hr);
    let y0 = rng.gen_range(0..=img.height() - patch_hr);
    let hr = img.crop(x0, y0, patch_hr, patch_hr)?;
    let mut lr = bicubic_downsample(&hr, factor)?;
    if let Some(q) = lr_jpeg_quality {
        lr = Image::decode(&lr.encode_jpeg(q)?)?;
    }
    Ok((lr, hr))
}

/// Stack same-shaped images into one (N,C,H,W) tensor.
pub fn batch_to_tensor(images: &[Image]) -> Result<crate::tensor::Tensor<f32>> {
    let first = images.first().ok_or(Error::InvalidInput {
        op: "batch_to_tensor",
        message: "empty batch".into(),
    })?;
    let (w, h, c) = (first.width(), first.height(), first.channels());
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if img.width() != w || img.height() != h || img.channels() != c {
            return Err(Error::Shape {
                op: "batch_to_tensor",
                message: "batch images must share extents and channels".into(),
            });
        }
        let t = img.to_tensor::<f32>();
        data.extend_from_slice(&t.data());
    }
    crate::tensor::Tensor::from_vec(data, &[images.len(), c, h, w])
}

fn gradient_image(rng: &mut ChaCha20Rng, edge: usize) -> Image {
    let mut img = Image::zeros(edge, edge, 3).expect("corpus image");
    let e = edge as f32;
    // Full-range repeating color ramps in the standard gradient geometries
    // (the repeating-linear/radial/conic family). A triangle-wave profile
    // keeps a steep constant slope across the whole image, which blocky
    // upsampling staircases everywhere, while half-periods of 4+ low-
    // resolution pixels stay comfortably above the factor-4 Nyquist limit.
    let kind = rng.gen_range(0..10);
    let lo: [f32; 3] = std::array::from_fn(|_| rng.gen_range(0.02..0.12));
    let hi: [f32; 3] = std::array::from_fn(|_| rng.gen_range(0.88..0.98));
    let half_period: f32 = rng.gen_range(17.0..26.0);
    let tri = |p: f32| {
        let u = (p / half_period).rem_euclid(2.0);
        if u < 1.0 {
            u
        } else {
            2.0 - u
        }
    };
    if kind < 4 {
        // Repeating radial ramp around a random center.
        let cx: f32 = rng.gen_range(0.2 * e..0.8 * e);
        let cy: f32 = rng.gen_range(0.2 * e..0.8 * e);
        let start: f32 = rng.gen_range(0.0..half_period);
        for y in 0..edge {
            for x in 0..edge {
                let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
                let t = tri(d + start);
                for ch in 0..3 {
                    img.set_sample(x, y, ch, lo[ch] + (hi[ch] - lo[ch]) * t);
                }
            }
        }
    } else if kind < 7 {
        // Conic ramp in angle around a center, steepest near the core.
        let cx: f32 = rng.gen_range(0.3 * e..0.7 * e);
        let cy: f32 = rng.gen_range(0.3 * e..0.7 * e);
        let phase: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
        for y in 0..edge {
            for x in 0..edge {
                let a = (y as f32 - cy).atan2(x as f32 - cx) + phase;
                let t = (a.rem_euclid(std::f32::consts::TAU)) / std::f32::consts::TAU;
                for ch in 0..3 {
                    img.set_sample(x, y, ch, lo[ch] + (hi[ch] - lo[ch]) * t);
                }
            }
        }
    } else {
        // Repeating linear ramp along a random direction.
        let phi: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
        let (s, c) = phi.sin_cos();
        let start: f32 = rng.gen_range(0.0..half_period);
        for y in 0..edge {
            for x in 0..edge {
                let p = x as f32 * c + y as f32 * s + start;
                let t = tri(p);
                for ch in 0..3 {
                    img.set_sample(x, y, ch, lo[ch] + (hi[ch] - lo[ch]) * t);
                }
            }
        }
    }
    img
}

fn checkerboard_image(rng: &mut ChaCha20Rng, edge: usize) -> Image {
    let mut img = Image::zeros(edge, edge, 3).expect("corpus image");
    // Rotated grid with a random phase and a cell width that is never a
    // multiple of the usual downsampling factors. An axis-aligned board whose
    // cells are a multiple of the factor is the one degenerate texture that
    // blocky nearest-neighbour upsampling reconstructs with the original
    // block structure intact; generic boards carry no such alignment. Cells
    // stay at 17 px or wider (4+ low-resolution pixels at factor 4) so the
    // grid survives antialiased downsampling with its edges recoverable.
    let cell =
        *[17usize, 18, 19, 21, 22, 23, 25, 26, 27].get(rng.gen_range(0..9)).unwrap() as f32;
    let theta: f32 = rng.gen_range(0.1..0.7);
    let (sin, cos) = theta.sin_cos();
    let (px, py): (f32, f32) = (rng.gen_range(0.0..cell), rng.gen_range(0.0..cell));
    let a: [f32; 3] = [rng.gen_range(0.0..0.4), rng.gen_range(0.0..0.4), rng.gen_range(0.0..0.4)];
    let b: [f32; 3] = [rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0)];
    for y in 0..edge {
        for x in 0..edge {
            let u = x as f32 * cos + y as f32 * sin + px;
            let v = y as f32 * cos - x as f32 * sin + py;
            let even = ((u / cell).floor() + (v / cell).floor()) as i64 % 2 == 0;
            for ch in 0..3 {
                img.set_sample(x, y, ch, if even { a[ch] } else { b[ch] });
            }
        }
    }
    img
}

fn blob_image(rng: &mut ChaCha20Rng, edge: usize) -> Image {
    let mut img = Image::zeros(edge, edge, 3).expect("corpus image");
    let base: f32 = rng.gen_range(0.35..0.65);
    for v in img.data_mut() {
        *v = base;
    }
    // Dense signed bumps around mid-gray. Sigmas sit just above the factor-4
    // Nyquist width, so the field survives downsampling but is steep enough
    // everywhere that blocky upsampling staircases it.
    let blobs = rng.gen_range(12..=18);
    for _ in 0..blobs {
        let cx: f32 = rng.gen_range(0.0..edge as f32);
        let cy: f32 = rng.gen_range(0.0..edge as f32);
        let sigma: f32 = rng.gen_range(2.5..5.0);
        let sign: f32 = if rng.gen_range(0..2) == 0 { 1.0 } else { -1.0 };
        let amp: [f32; 3] = std::array::from_fn(|_| sign * rng.gen_range(0.5..0.9));
        for y in 0..edge {
            for x in 0..edge {
                let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                let g = (-d2 / (2.0 * sigma * sigma)).exp();
                for ch in 0..3 {
                    let v = img.sample(x, y, ch) + amp[ch] * g;
                    img.set_sample(x, y, ch, v.clamp(0.0, 1.0));
                }
            }
        }
    }
    img
}

/// Deterministic procedural image: gradients, checkerboards and Gaussian
/// blobs in rotation by index.
pub fn synthetic_image(seed: u64, index: usize, edge: usize) -> Image {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    match index % 3 {
        0 => gradient_image(&mut rng, edge),
        1 => checkerboard_image(&mut rng, edge),
        _ => blob_image(&mut rng, edge),
    }
}

/// Write `count` synthetic PNGs (zero-padded names, lexicographic order
/// matches generation order) into `dir`, creating it if needed.
pub fn generate_synthetic_corpus<P: AsRef<Path>>(
    dir: P,
    count: usize,
    edge: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let img = synthetic_image(seed, i, edge);
        let path = dir.join(format!("img_{i:04}.png"));
        img.save_png(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Photo-like fixture: layered smooth blobs plus low-amplitude per-pixel
/// noise. JPEG handles it gracefully while PNG cannot exploit flat runs,
/// which is the regime the byte-budget comparisons assume.
pub fn photo_fixture(edge: usize, seed: u64) -> Image {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut img = blob_image(&mut rng, edge);
    let grad = gradient_image(&mut rng, edge);
    for (v, g) in img.data_mut().iter_mut().zip(grad.data()) {
        let noise: f32 = rng.gen_range(-0.02..0.02);
        *v = (0.7 * *v + 0.3 * g + noise).clamp(0.0, 1.0);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_corpus_loads_in_lexicographic_order() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic_corpus(dir.path(), 12, 48, 7).unwrap();
        let corpus = Corpus::load(dir.path(), Split::Train).unwrap();
        assert_eq!(corpus.len(), 12);
        assert_eq!(corpus.skipped(), 0);
        let ids: Vec<&str> = corpus.entries().iter().map(|e| e.id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(ids[0], "img_0000");
        for e in corpus.entries() {
            assert_eq!((e.image.width(), e.image.height(), e.image.channels()), (48, 48, 3));
            assert!(e.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = synthetic_image(9, 4, 32);
        let b = synthetic_image(9, 4, 32);
        assert_eq!(a.to_u8(), b.to_u8());
        let c = synthetic_image(10, 4, 32);
        assert_ne!(a.to_u8(), c.to_u8());
        let d = photo_fixture(64, 3);
        let e = photo_fixture(64, 3);
        assert_eq!(d.to_u8(), e.to_u8());
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Corpus::load(dir.path(), Split::Train).is_err());
        assert!(Corpus::load(dir.path().join("missing"), Split::Train).is_err());
    }

    #[test]
    fn undecodable_files_are_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic_corpus(dir.path(), 3, 32, 1).unwrap();
        std::fs::write(dir.path().join("broken.png"), b"not a png at all").unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"ignored entirely").unwrap();
        let corpus = Corpus::load(dir.path(), Split::Train).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.skipped(), 1);
    }

    #[test]
    fn patch_pairs_have_the_contracted_shapes() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic_corpus(dir.path(), 4, 80, 2).unwrap();
        let corpus = Corpus::load(dir.path(), Split::Train).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (lr, hr) = sample_patch_pair(&corpus, &mut rng, 64, 4, None).unwrap();
        assert_eq!((hr.width(), hr.height()), (64, 64));
        assert_eq!((lr.width(), lr.height()), (16, 16));
        assert_eq!(lr.channels(), 3);
    }

    #[test]
    fn sampling_is_reproducible_and_respects_min_size() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic_corpus(dir.path(), 4, 48, 3).unwrap();
        let corpus = Corpus::load(dir.path(), Split::Train).unwrap();
        let crops = |seed: u64| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..5)
                .map(|_| sample_patch_pair(&corpus, &mut rng, 32, 2, None).unwrap().1.to_u8())
                .collect::<Vec<_>>()
        };
        assert_eq!(crops(11), crops(11));
        assert_ne!(crops(11), crops(12));

        let mut rng = ChaCha20Rng::seed_from_u64(13);
        assert!(sample_patch_pair(&corpus, &mut rng, 64, 2, None).is_err());
        assert!(sample_patch_pair(&corpus, &mut rng, 33, 2, None).is_err());
    }

    #[test]
    fn jpeg_lr_option_is_lossy_but_close() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic_corpus(dir.path(), 3, 64, 4).unwrap();
        let corpus = Corpus::load(dir.path(), Split::Train).unwrap();
        let pair = |q: Option<u8>| {
            let mut rng = ChaCha20Rng::seed_from_u64(21);
            sample_patch_pair(&corpus, &mut rng, 64, 4, q).unwrap().0
        };
        let clean = pair(None);
        let coded = pair(Some(85));
        assert_eq!((coded.width(), coded.height()), (clean.width(), clean.height()));
        assert_ne!(clean.to_u8(), coded.to_u8());
        let max_err = clean
            .data()
            .iter()
            .zip(coded.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err < 0.25, "JPEG at q85 should stay close, max err {max_err}");
    }

    #[test]
    fn batches_stack_into_planar_tensors() {
        let a = synthetic_image(1, 0, 16);
        let b = synthetic_image(1, 1, 16);
        let t = batch_to_tensor(&[a.clone(), b]).unwrap();
        assert_eq!(t.shape(), &[2, 3, 16, 16]);
        let ta = a.to_tensor::<f32>();
        assert_eq!(&t.data()[..ta.len()], ta.data().as_slice());
        let tiny = synthetic_image(1, 2, 8);
        assert!(batch_to_tensor(&[a, tiny]).is_err());
        assert!(batch_to_tensor(&[]).is_err());
    }
}
