//! Scratch diagnostic: per-image-type PSNR of nearest/lanczos/model on the
//! held-out synthetic set. Types rotate by index: 0 gradient, 1 checkerboard,
//! 2 blobs.

use rlsr::codec::PayloadCodec;
use rlsr::corpus::{generate_synthetic_corpus, Corpus, Split};
use rlsr::eval::{evaluate, Method};
use rlsr::model::Generator;

fn main() {
    let held_dir = std::env::temp_dir().join("diag_held");
    let _ = generate_synthetic_corpus(&held_dir, 20, 64, 2002);
    let held = Corpus::load(&held_dir, Split::Test).unwrap();

    let ckpt = std::env::temp_dir().join("diag_mse-only.ckpt");
    let model = Generator::<f32>::load(&ckpt).ok();
    let mut methods = vec![Method::Nearest, Method::Lanczos];
    if model.is_some() {
        methods.push(Method::Model);
    }
    let (rows, _) = evaluate(&held, &methods, 4, 100, PayloadCodec::Png, model.as_ref()).unwrap();

    let type_name = |id: &str| {
        let idx: usize = id.trim_start_matches("img_").parse().unwrap();
        ["gradient", "checker", "blobs"][idx % 3]
    };
    println!("{:<10} {:<9} {:>8} {:>8}", "image", "type", "method", "psnr");
    for row in &rows {
        println!(
            "{:<10} {:<9} {:>8} {:>8.2}",
            row.image_id,
            type_name(&row.image_id),
            row.method,
            row.psnr_db
        );
    }
    for method in &methods {
        let name = method.name();
        for ty in ["gradient", "checker", "blobs"] {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == name && type_name(&r.image_id) == ty)
                .map(|r| r.psnr_db)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            println!("{name:>8} {ty:<9} n={} mean {mean:.2} dB", vals.len());
        }
    }
}
