//! Write a small procedural corpus (gradients, rotated checkerboards,
//! Gaussian blobs) and load it back with the corpus loader.

use rlsr::corpus::{generate_synthetic_corpus, Corpus, Split};

fn main() {
    let dir = std::env::temp_dir().join("rlsr-example-corpus");
    std::fs::create_dir_all(&dir).unwrap();
    let paths = generate_synthetic_corpus(&dir, 9, 64, 2024).unwrap();
    println!("wrote {} images under {}", paths.len(), dir.display());

    let corpus = Corpus::load(&dir, Split::Train).unwrap();
    println!("loaded {} entries ({} skipped) for split {}", corpus.len(), corpus.skipped(), corpus.split());
    for entry in corpus.entries().iter().take(3) {
        let img = &entry.image;
        let mean: f32 = img.data().iter().sum::<f32>() / img.data().len() as f32;
        println!("  {}: {}x{}x{}, mean level {:.3}", entry.id, img.width(), img.height(), img.channels(), mean);
    }
}
