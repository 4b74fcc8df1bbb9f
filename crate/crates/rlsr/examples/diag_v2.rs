//! Scratch diagnostic: per-type baseline PSNR/MS-SSIM on the redesigned
//! synthetic corpus, before any training.

use rlsr::codec::PayloadCodec;
use rlsr::corpus::{generate_synthetic_corpus, Corpus, Split};
use rlsr::eval::{evaluate, Method};

fn main() {
    let held_dir = std::env::temp_dir().join("diag_held_v2");
    let _ = std::fs::remove_dir_all(&held_dir);
    generate_synthetic_corpus(&held_dir, 20, 64, 2002).unwrap();
    let held = Corpus::load(&held_dir, Split::Test).unwrap();

    let methods = [Method::Nearest, Method::Lanczos, Method::Bicubic];
    let (rows, summary) = evaluate(&held, &methods, 4, 100, PayloadCodec::Png, None).unwrap();

    let type_name = |id: &str| {
        let idx: usize = id.trim_start_matches("img_").parse().unwrap();
        ["gradient", "checker", "blobs"][idx % 3]
    };
    for method in &methods {
        let name = method.name();
        for ty in ["gradient", "checker", "blobs"] {
            let psnrs: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == name && type_name(&r.image_id) == ty)
                .map(|r| r.psnr_db)
                .collect();
            let ssims: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == name && type_name(&r.image_id) == ty)
                .map(|r| r.ms_ssim)
                .collect();
            let pm = psnrs.iter().sum::<f64>() / psnrs.len() as f64;
            let sm = ssims.iter().sum::<f64>() / ssims.len() as f64;
            println!("{name:>8} {ty:<9} n={} mean {pm:.2} dB, ms-ssim {sm:.4}", psnrs.len());
        }
    }
    for m in &summary.methods {
        println!("{:>8} overall: {:.2} dB, ms-ssim {:.4}", m.method, m.mean_psnr_db, m.mean_ms_ssim);
    }
}
