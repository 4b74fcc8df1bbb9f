//! Command-line front end: compress, decompress, eval, train, and baseline
//! subcommands over the library. Every run prints its resolved effective
//! configuration to stderr before doing work, and exit codes distinguish
//! usage errors (1), I/O and parse errors (2), and numerical aborts (3).

use crate::codec::{compress, decompress, Container, PayloadCodec, Upsampler};
use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, rows_to_csv, EvalRow, EvalSummary, Method};
use crate::model::Generator;
use crate::raster::Image;
use crate::resample::Filter;
use crate::train::{train, TrainConfig};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "rlsr",
    version,
    about = "Downsample-then-super-resolve image compression toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Downsample an image and wrap the encoded payload in a container file
    Compress(CompressArgs),
    /// Reconstruct a full-size image from a container file
    Decompress(DecompressArgs),
    /// Score reconstruction methods over a corpus directory
    Eval(EvalArgs),
    /// Train the generator, discriminator, and policy head
    Train(TrainArgs),
    /// Score the resampling filters only, no learned model involved
    Baseline(EvalArgs),
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    /// Input image (PNG or JPEG)
    pub input: PathBuf,
    /// Downsampling factor
    #[arg(long, default_value_t = 4)]
    pub factor: usize,
    /// Payload encoder quality (JPEG only)
    #[arg(long, default_value_t = 75)]
    pub quality: u8,
    /// Payload codec: jpeg or png
    #[arg(long, default_value = "jpeg")]
    pub codec: String,
    /// Container file to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DecompressArgs {
    /// Container file produced by compress
    pub input: PathBuf,
    /// Reconstruction method: lanczos, bicubic, nearest, or model
    #[arg(long, default_value = "lanczos")]
    pub upsampler: String,
    /// Generator checkpoint, required when --upsampler model
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// PNG file to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of corpus images
    pub corpus: PathBuf,
    /// Comma-separated methods: lanczos, bicubic, nearest, model, identity
    #[arg(long, default_value = "lanczos,bicubic,nearest")]
    pub methods: String,
    /// Downsampling factor
    #[arg(long, default_value_t = 4)]
    pub factor: usize,
    /// Payload encoder quality (JPEG only)
    #[arg(long, default_value_t = 75)]
    pub quality: u8,
    /// Payload codec: jpeg or png
    #[arg(long, default_value = "jpeg")]
    pub codec: String,
    /// Generator checkpoint for the model method
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Row output format
    #[arg(long, value_parser = ["csv", "json"], default_value = "csv")]
    pub format: String,
    /// File for the rows; without it rows go to stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// TOML config file; flags below override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of HR training images
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub factor: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Reward discount, in (0, 1]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Iterations per reinforcement window
    #[arg(long)]
    pub k_window: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Checkpoint file to write
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss log (newline-delimited JSON) to write
    #[arg(long)]
    pub log: Option<PathBuf>,
}

/// Parse argv and execute; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are success; anything else is a
            // usage error and must exit 1, not clap's default 2.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compress(a) => cmd_compress(a),
        Command::Decompress(a) => cmd_decompress(a),
        Command::Eval(a) => cmd_eval(a, true),
        Command::Baseline(a) => cmd_eval(a, false),
        Command::Train(a) => cmd_train(a),
    }
}

fn print_config(command: &str, pairs: &[(&str, String)]) {
    eprintln!("config: command = {command}");
    for (key, value) in pairs {
        eprintln!("config: {key} = {value}");
    }
}

fn cmd_compress(a: CompressArgs) -> Result<()> {
    let codec: PayloadCodec = a.codec.parse()?;
    print_config(
        "compress",
        &[
            ("input", a.input.display().to_string()),
            ("factor", a.factor.to_string()),
            ("quality", a.quality.to_string()),
            ("codec", codec.name().to_string()),
            ("out", a.out.display().to_string()),
        ],
    );
    let img = Image::load(&a.input)?;
    let container = compress(&img, a.factor, a.quality, codec)?;
    let bytes = container.serialize();
    std::fs::write(&a.out, &bytes)?;
    println!(
        "compressed {}x{}x{} to {} bytes at {}",
        img.width(),
        img.height(),
        img.channels(),
        bytes.len(),
        a.out.display()
    );
    Ok(())
}

fn load_model(path: &PathBuf) -> Result<Generator<f32>> {
    Generator::load(path)
}

fn cmd_decompress(a: DecompressArgs) -> Result<()> {
    print_config(
        "decompress",
        &[
            ("input", a.input.display().to_string()),
            ("upsampler", a.upsampler.clone()),
            (
                "model",
                a.model.as_ref().map_or_else(|| "none".into(), |p| p.display().to_string()),
            ),
            ("out", a.out.display().to_string()),
        ],
    );
    let container = Container::parse(&std::fs::read(&a.input)?)?;
    let model;
    let upsampler = match a.upsampler.as_str() {
        "lanczos" | "lanczos3" => Upsampler::Filter(Filter::Lanczos3),
        "bicubic" | "catmull_rom" => Upsampler::Filter(Filter::CatmullRom),
        "nearest" => Upsampler::Filter(Filter::Nearest),
        "model" => {
            let path = a.model.as_ref().ok_or_else(|| {
                Error::Config("--upsampler model needs --model <checkpoint>".into())
            })?;
            model = load_model(path)?;
            Upsampler::Model(&model)
        }
        other => return Err(Error::Config(format!("unknown upsampler '{other}'"))),
    };
    let rec = decompress(&container, &upsampler)?;
    rec.save_png(&a.out)?;
    println!(
        "reconstructed {}x{}x{} to {}",
        rec.width(),
        rec.height(),
        rec.channels(),
        a.out.display()
    );
    Ok(())
}

fn render_rows(format: &str, rows: &[EvalRow], summary: &EvalSummary) -> String {
    if format == "json" {
        let doc = serde_json::json!({ "rows": rows, "summary": summary });
        let mut text = serde_json::to_string_pretty(&doc).expect("rows serialize");
        text.push('\n');
        text
    } else {
        rows_to_csv(rows)
    }
}

fn cmd_eval(a: EvalArgs, allow_model: bool) -> Result<()> {
    let command = if allow_model { "eval" } else { "baseline" };
    let codec: PayloadCodec = a.codec.parse()?;
    let methods = Method::parse_list(&a.methods)?;
    if !allow_model && methods.contains(&Method::Model) {
        return Err(Error::Config("baseline scores filters only; use eval for the model".into()));
    }
    print_config(
        command,
        &[
            ("corpus", a.corpus.display().to_string()),
            ("methods", methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")),
            ("factor", a.factor.to_string()),
            ("quality", a.quality.to_string()),
            ("codec", codec.name().to_string()),
            (
                "model",
                a.model.as_ref().map_or_else(|| "none".into(), |p| p.display().to_string()),
            ),
            ("format", a.format.clone()),
            ("out", a.out.as_ref().map_or_else(|| "stdout".into(), |p| p.display().to_string())),
        ],
    );
    let model = a.model.as_ref().map(load_model).transpose()?;
    let corpus = Corpus::load(&a.corpus, Split::Test)?;
    let (rows, summary) = evaluate(&corpus, &methods, a.factor, a.quality, codec, model.as_ref())?;
    let rendered = render_rows(&a.format, &rows, &summary);
    match &a.out {
        Some(path) => {
            std::fs::write(path, rendered.as_bytes())?;
            println!("{}", summary.to_json());
        }
        None => {
            print!("{rendered}");
            eprintln!("{}", summary.to_json());
        }
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => TrainConfig::from_toml_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.data_dir {
        cfg.data_dir = v;
    }
    if let Some(v) = a.factor {
        cfg.factor = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.iters {
        cfg.iters = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = a.k_window {
        cfg.k_window = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.out {
        cfg.checkpoint_path = v;
    }
    if let Some(v) = a.log {
        cfg.log_path = v;
    }
    if cfg.data_dir.as_os_str().is_empty() {
        return Err(Error::Config("train needs --data-dir or a config file setting it".into()));
    }
    eprintln!("config: command = train");
    for line in cfg.render().lines().filter(|l| !l.trim().is_empty()) {
        eprintln!("config: {line}");
    }
    let outcome = train(&cfg)?;
    let last = outcome.reports.last().expect("validated config trains at least one iteration");
    println!(
        "trained {} iterations, final l_total {:.6}, checkpoint {}, log {}",
        outcome.reports.len(),
        last.l_total,
        cfg.checkpoint_path.display(),
        cfg.log_path.display()
    );
    Ok(())
}
