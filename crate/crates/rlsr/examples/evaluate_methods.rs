//! Score reconstruction methods over a corpus through the full
//! compress/decompress chain and print the CSV rows plus the JSON summary.

use rlsr::codec::PayloadCodec;
use rlsr::corpus::{generate_synthetic_corpus, Corpus, Split};
use rlsr::eval::{evaluate, rows_to_csv, Method};

fn main() {
    let dir = std::env::temp_dir().join("rlsr-example-eval");
    std::fs::create_dir_all(&dir).unwrap();
    generate_synthetic_corpus(&dir, 6, 64, 321).unwrap();
    let corpus = Corpus::load(&dir, Split::Test).unwrap();

    let methods = [Method::Lanczos, Method::Bicubic, Method::Nearest, Method::Identity];
    let (rows, summary) = evaluate(&corpus, &methods, 4, 75, PayloadCodec::Jpeg, None).unwrap();

    print!("{}", rows_to_csv(&rows));
    println!();
    println!("{}", summary.to_json());
}
