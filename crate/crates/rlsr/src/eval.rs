//! Evaluation harness: run each reconstruction method over a corpus through
//! the full compress/decompress chain, score PSNR and MS-SSIM against the
//! originals, and emit CSV rows plus a JSON summary of per-method means and
//! byte totals.

use crate::codec::{compress, decompress, PayloadCodec, Upsampler};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::metrics::{max_feasible_scales, ms_ssim, psnr, MS_SSIM_EXPONENTS};
use crate::model::Generator;
use crate::raster::Image;
use crate::resample::Filter;
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lanczos,
    Bicubic,
    Nearest,
    Model,
    /// Diagnostic oracle: scores the original against itself, pinning the
    /// metric plumbing (PSNR +inf, MS-SSIM 1).
    Identity,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lanczos => "lanczos",
            Method::Bicubic => "bicubic",
            Method::Nearest => "nearest",
            Method::Model => "model",
            Method::Identity => "identity",
        }
    }

    pub fn parse_list(text: &str) -> Result<Vec<Method>> {
        let methods: Vec<Method> = text
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse())
            .collect::<Result<_>>()?;
        if methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        Ok(methods)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lanczos" | "lanczos3" => Ok(Method::Lanczos),
            "bicubic" | "catmull_rom" => Ok(Method::Bicubic),
            "nearest" => Ok(Method::Nearest),
            "model" => Ok(Method::Model),
            "identity" => Ok(Method::Identity),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// JSON has no infinity literal; emit the +inf PSNR sentinel as a string so
/// it survives serialization instead of decaying to null.
fn serialize_db<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.collect_str(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub image_id: String,
    pub method: String,
    #[serde(serialize_with = "serialize_db")]
    pub psnr_db: f64,
    pub ms_ssim: f64,
    pub bytes_original: u64,
    pub bytes_compressed: u64,
}

pub const CSV_HEADER: &str = "image_id,method,psnr_db,ms_ssim,bytes_original,bytes_compressed";

impl EvalRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{},{}",
            self.image_id,
            self.method,
            self.psnr_db,
            self.ms_ssim,
            self.bytes_original,
            self.bytes_compressed
        )
    }
}

/// Header plus one line per row, trailing newline included.
pub fn rows_to_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub images: usize,
    #[serde(serialize_with = "serialize_db")]
    pub mean_psnr_db: f64,
    pub mean_ms_ssim: f64,
    pub total_bytes_original: u64,
    pub total_bytes_compressed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub factor: usize,
    pub quality: u8,
    pub payload_codec: String,
    pub methods: Vec<MethodSummary>,
    /// Per-image failures excluded from the means above.
    pub failures: usize,
}

impl EvalSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

fn reconstruct(
    original: &Image,
    factor: usize,
    quality: u8,
    codec: PayloadCodec,
    method: Method,
    model: Option<&Generator<f32>>,
) -> Result<(Image, u64)> {
    let container = compress(original, factor, quality, codec)?;
    let bytes = container.serialize().len() as u64;
    let rec = match method {
        Method::Identity => original.clone(),
        Method::Lanczos => decompress(&container, &Upsampler::Filter(Filter::Lanczos3))?,
        Method::Bicubic => decompress(&container, &Upsampler::Filter(Filter::CatmullRom))?,
        Method::Nearest => decompress(&container, &Upsampler::Filter(Filter::Nearest))?,
        Method::Model => {
            let g = model.ok_or_else(|| {
                Error::Config("method 'model' needs a generator checkpoint".into())
            })?;
            decompress(&container, &Upsampler::Model(g))?
        }
    };
    Ok((rec, bytes))
}

/// Score every (image, method) pair. Rows arrive image-major in corpus
/// order, then in the given method order. A failing pair is reported on
/// stderr, counted, and excluded from rows and means.
pub fn evaluate(
    corpus: &Corpus,
    methods: &[Method],
    factor: usize,
    quality: u8,
    codec: PayloadCodec,
    model: Option<&Generator<f32>>,
) -> Result<(Vec<EvalRow>, EvalSummary)> {
    if methods.is_empty() {
        return Err(Error::Config("method list is empty".into()));
    }
    if methods.contains(&Method::Model) && model.is_none() {
        return Err(Error::Config("method 'model' needs a generator checkpoint".into()));
    }
    let mut rows = Vec::new();
    let mut failures = 0usize;
    for entry in corpus.entries() {
        let original = &entry.image;
        let bytes_original = match original.encode_png() {
            Ok(png) => png.len() as u64,
            Err(err) => {
                eprintln!("warning: {}: original encode failed: {err}", entry.id);
                failures += methods.len();
                continue;
            }
        };
        let scales = max_feasible_scales(original.width(), original.height())
            .min(MS_SSIM_EXPONENTS.len());
        for &method in methods {
            let scored = reconstruct(original, factor, quality, codec, method, model).and_then(
                |(rec, bytes_compressed)| {
                    Ok(EvalRow {
                        image_id: entry.id.clone(),
                        method: method.name().to_string(),
                        psnr_db: psnr(original, &rec, 1.0)?,
                        ms_ssim: ms_ssim(original, &rec, scales)?,
                        bytes_original,
                        bytes_compressed,
                    })
                },
            );
            match scored {
                Ok(row) => rows.push(row),
                Err(err) => {
                    eprintln!("warning: {} via {method} failed: {err}", entry.id);
                    failures += 1;
                }
            }
        }
    }
    let mut summaries = Vec::new();
    for &method in methods {
        let name = method.name();
        let picked: Vec<&EvalRow> = rows.iter().filter(|r| r.method == name).collect();
        if picked.is_empty() {
            continue;
        }
        let n = picked.len() as f64;
        summaries.push(MethodSummary {
            method: name.to_string(),
            images: picked.len(),
            mean_psnr_db: picked.iter().map(|r| r.psnr_db).sum::<f64>() / n,
            mean_ms_ssim: picked.iter().map(|r| r.ms_ssim).sum::<f64>() / n,
            total_bytes_original: picked.iter().map(|r| r.bytes_original).sum(),
            total_bytes_compressed: picked.iter().map(|r| r.bytes_compressed).sum(),
        });
    }
    let summary = EvalSummary {
        factor,
        quality,
        payload_codec: codec.name().to_string(),
        methods: summaries,
        failures,
    };
    Ok((rows, summary))
}
