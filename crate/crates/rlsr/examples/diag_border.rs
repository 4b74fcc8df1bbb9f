//! Scratch diagnostic: is model reconstruction error concentrated at image
//! borders (zero-pad context) or uniform across the plane?

use rlsr::codec::{compress, decompress, PayloadCodec, Upsampler};
use rlsr::corpus::{generate_synthetic_corpus, Corpus, Split};
use rlsr::metrics::{mse, psnr_from_mse};
use rlsr::model::Generator;
use rlsr::raster::Image;

fn region_mse(a: &Image, b: &Image, margin: usize) -> (f64, f64) {
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let (mut inner, mut outer) = (Vec::new(), Vec::new());
    let (mut inner_ref, mut outer_ref) = (Vec::new(), Vec::new());
    for y in 0..h {
        for x in 0..w {
            let is_inner =
                x >= margin && y >= margin && x < w - margin && y < h - margin;
            for ch in 0..c {
                if is_inner {
                    inner.push(a.sample(x, y, ch));
                    inner_ref.push(b.sample(x, y, ch));
                } else {
                    outer.push(a.sample(x, y, ch));
                    outer_ref.push(b.sample(x, y, ch));
                }
            }
        }
    }
    (mse(&inner, &inner_ref), mse(&outer, &outer_ref))
}

fn main() {
    let held_dir = std::env::temp_dir().join("diag_held");
    let _ = generate_synthetic_corpus(&held_dir, 20, 64, 2002);
    let held = Corpus::load(&held_dir, Split::Test).unwrap();
    let ckpt = std::env::temp_dir().join("diag_mse-only.ckpt");
    let model = Generator::<f32>::load(&ckpt).unwrap();

    println!("margin = 16 HR px (4 LR px, the 9x9 head conv pad width)");
    for entry in held.entries().iter().take(6) {
        let (id, img) = (&entry.id, &entry.image);
        let container = compress(img, 4, 100, PayloadCodec::Png).unwrap();
        let recon = decompress(&container, &Upsampler::Model(&model)).unwrap();
        let (inner, outer) = region_mse(&recon, img, 16);
        println!(
            "{id}: inner {:.2} dB, border {:.2} dB",
            psnr_from_mse(inner, 1.0),
            psnr_from_mse(outer, 1.0)
        );
    }
}
