//! Compress a fixture photo into the container format, inspect the byte
//! accounting, and reconstruct with a resampling filter.

use rlsr::codec::{compress, decompress, Container, PayloadCodec, Upsampler};
use rlsr::corpus::photo_fixture;
use rlsr::metrics::{ms_ssim, psnr};
use rlsr::resample::Filter;

fn main() {
    let original = photo_fixture(256, 77);
    let png_bytes = original.encode_png().unwrap().len();
    println!("original: 256x256x3, {png_bytes} bytes as PNG");

    for (codec, quality) in [(PayloadCodec::Png, 100), (PayloadCodec::Jpeg, 75), (PayloadCodec::Jpeg, 40)] {
        let container = compress(&original, 4, quality, codec).unwrap();
        let bytes = container.serialize();
        let parsed = Container::parse(&bytes).unwrap();
        assert_eq!(parsed.serialize(), bytes, "round-trip is bitwise exact");
        let rec = decompress(&parsed, &Upsampler::Filter(Filter::Lanczos3)).unwrap();
        println!(
            "factor 4, {:>4} q{quality:<3}: {:5} bytes ({:5.1}% of PNG)  psnr {:5.2} dB  ms-ssim {:.4}",
            codec.name(),
            bytes.len(),
            100.0 * bytes.len() as f64 / png_bytes as f64,
            psnr(&original, &rec, 1.0).unwrap(),
            ms_ssim(&original, &rec, 5).unwrap()
        );
    }

    // Header corruption never passes the checksum.
    let mut bytes = compress(&original, 4, 75, PayloadCodec::Jpeg).unwrap().serialize();
    bytes[5] ^= 0x01;
    println!("\nflipping one header bit: {:?}", Container::parse(&bytes).unwrap_err());
}
