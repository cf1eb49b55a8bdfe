use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dpconv::config::{ExperimentFile, KeyValues};
use dpconv::gradcheck::{run_gradcheck, GradcheckConfig, Operator, TOLERANCE};
use dpconv::imageio::{load_mask, load_rgb, rgb_to_tensor, save_mask, save_rgb, tensor_to_rgb};
use dpconv::maskprop::{generate_irregular_mask, run_transparency_experiment};
use dpconv::metrics::MetricReport;
use dpconv::net::{
    loss_trend, Checkpoint, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, TrainConfig, Trainer,
    LOSS_LOG_HEADER,
};
use dpconv::{Error, Tensor4};

const OUT_DIR_ENV: &str = "DPCONV_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "dpconv", version, about = "Dilated partial convolution inpainting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate irregular hole masks as grayscale PNGs (0 = hole, 255 = valid).
    Maskgen(MaskgenArgs),
    /// Run the layers-to-transparency experiment and write a CSV summary.
    Analyze(AnalyzeArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Train a small inpainting GAN on procedural textures.
    TrainDemo(TrainArgs),
    /// Inpaint one image with a trained checkpoint.
    Infer(InferArgs),
    /// Compare two directories of PNG images.
    Metrics(MetricsArgs),
}

#[derive(clap::Args, Debug)]
struct MaskgenArgs {
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    /// Target hole ratio in (0, 0.9).
    #[arg(long, value_parser = parse_ratio)]
    ratio: f64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to `$DPCONV_OUT_DIR/masks`, or `masks`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct AnalyzeArgs {
    /// Experiment file of `key = value` lines; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults to `$DPCONV_OUT_DIR/results.csv`, or `results.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    cap: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    per_bucket: Option<u64>,
}

#[derive(clap::Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturbs one operator's analytic gradient.
    #[arg(long, hide = true, value_parser = parse_operator)]
    inject_fault: Option<Operator>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Arch {
    Compact,
    Full,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    /// Optional `key = value` file with steps, size, batch, seed, arch.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    batch: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    arch: Option<Arch>,
    /// Defaults to `$DPCONV_OUT_DIR/model.ckpt`, or `model.ckpt`. The loss
    /// log is written next to it.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep the input bytes at valid pixels.
    #[arg(long)]
    composited: bool,
}

#[derive(clap::Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Defaults to `$DPCONV_OUT_DIR/metrics.csv`, or `metrics.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if r > 0.0 && r < 0.9 {
        Ok(r)
    } else {
        Err(format!("ratio {r} must lie in (0, 0.9)"))
    }
}

fn parse_operator(s: &str) -> Result<Operator, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with the process exit code it maps to.
enum Failure {
    Data(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn default_path(name: &str) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(name),
        _ => PathBuf::from(name),
    }
}

fn ensure_parent(path: &Path) -> std::io::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p),
        _ => Ok(()),
    }
}

fn maskgen(args: MaskgenArgs) -> CmdResult {
    let dir = args.out_dir.unwrap_or_else(|| default_path("masks"));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let seeds: Vec<u64> = (0..args.count).map(|_| rng.gen()).collect();
    let ratios = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let mask = generate_irregular_mask(args.height, args.width, args.ratio, s)?;
            save_mask(&mask, dir.join(format!("mask_{i:05}.png")))?;
            Ok(mask.ratio())
        })
        .collect::<dpconv::Result<Vec<f64>>>()?;
    if ratios.is_empty() {
        println!("generated 0 masks");
        return Ok(());
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "generated {} masks in {}: mean hole ratio {mean:.4} (min {min:.4}, max {max:.4}, target {:.4})",
        ratios.len(),
        dir.display(),
        args.ratio
    );
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> CmdResult {
    let mut file = match &args.config {
        Some(p) => ExperimentFile::load(p)?,
        None => ExperimentFile::default(),
    };
    let c = &mut file.config;
    if let Some(cap) = args.cap {
        c.cap = cap as usize;
    }
    if let Some(seed) = args.seed {
        c.seed = seed;
    }
    if let Some(p) = args.per_bucket {
        c.per_bucket = p as usize;
        c.mask_count = c.per_bucket * c.buckets.len();
    }
    let stacks = file.build_stacks()?;
    let summary = run_transparency_experiment(&file.config, &stacks)?;
    let out = args.out.unwrap_or_else(|| default_path("results.csv"));
    ensure_parent(&out)?;
    summary.write_csv(&out)?;
    for s in &stacks {
        if let Some(m) = summary.overall_mean(&s.name) {
            println!("{}: mean layers to transparency {m:.2}", s.name);
        }
    }
    println!("wrote {} rows to {}", summary.rows.len(), out.display());
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> CmdResult {
    let reports = run_gradcheck(&GradcheckConfig {
        trials: args.trials as usize,
        seed: args.seed,
        fault: args.inject_fault,
    })?;
    let mut failed = Vec::new();
    for r in &reports {
        let status = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<10} trials {:>3}  max rel error {:.3e}  {status}",
            r.operator.name(),
            r.trials,
            r.max_rel_error
        );
        if !r.passed() {
            failed.push(r.operator.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!(
            "gradient check above {TOLERANCE:e} for: {}",
            failed.join(", ")
        )))
    }
}

struct TrainSettings {
    steps: usize,
    size: usize,
    batch: usize,
    seed: u64,
    arch: Arch,
}

fn train_settings(args: &TrainArgs) -> Result<TrainSettings, Failure> {
    let mut s = TrainSettings {
        steps: 200,
        size: 64,
        batch: 8,
        seed: 0,
        arch: Arch::Compact,
    };
    if let Some(path) = &args.config {
        let kv = KeyValues::load(path)?;
        kv.reject_unknown(&["steps", "size", "batch", "seed", "arch"], &[])?;
        s.steps = kv.value("steps")?.unwrap_or(s.steps);
        s.size = kv.value("size")?.unwrap_or(s.size);
        s.batch = kv.value("batch")?.unwrap_or(s.batch);
        s.seed = kv.value("seed")?.unwrap_or(s.seed);
        if let Some(e) = kv.get("arch") {
            s.arch = Arch::from_str(&e.value, true).map_err(|m| Failure::from(kv.error(e, m)))?;
        }
    }
    s.steps = args.steps.unwrap_or(s.steps);
    s.size = args.size.unwrap_or(s.size);
    s.batch = args.batch.map_or(s.batch, |b| b as usize);
    s.seed = args.seed.unwrap_or(s.seed);
    s.arch = args.arch.unwrap_or(s.arch);
    Ok(s)
}

fn train_demo(args: TrainArgs) -> CmdResult {
    let s = train_settings(&args)?;
    let (gcfg, dcfg) = match s.arch {
        Arch::Compact => (GeneratorConfig::compact(s.size, s.size), DiscriminatorConfig::compact()),
        Arch::Full => (GeneratorConfig::with_widths(s.size, s.size, [64, 128, 256, 256], [128, 64, 64]), DiscriminatorConfig::default()),
    };
    let generator = Generator::new(gcfg.with_seed(s.seed))?;
    let discriminator = Discriminator::new(dcfg.with_seed(s.seed.wrapping_add(1)))?;
    let config = TrainConfig {
        batch_size: s.batch,
        steps: s.steps,
        seed: s.seed,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(generator, discriminator, config)?;
    // fail on an untrainable size before any output is written
    trainer.discriminator.forward(&Tensor4::zeros([1, 3, s.size, s.size]))?;

    let ckpt = args.checkpoint.clone().unwrap_or_else(|| default_path("model.ckpt"));
    ensure_parent(&ckpt)?;
    let log_path = ckpt.parent().unwrap_or(Path::new("")).join("loss_log.csv");
    let mut log = BufWriter::new(File::create(&log_path)?);
    writeln!(log, "{LOSS_LOG_HEADER}")?;
    let mut io_err = None;
    let result = trainer.run(s.size, s.steps, |l| {
        if let Err(e) = writeln!(log, "{}", l.csv_row()) {
            io_err.get_or_insert(e);
        }
        if l.step % 10 == 0 || l.step + 1 == s.steps {
            println!("step {:>4}  total {:.5}  pixel {:.5}  adv_d {:.5}", l.step, l.total, l.pixel, l.adv_d);
        }
    });
    log.flush()?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let logs = result?;
    Checkpoint::capture(&trainer.generator, &trainer.discriminator).save(&ckpt)?;
    if let Some((first, last)) = loss_trend(&logs, 10) {
        println!("mean total loss: first 10 steps {first:.5}, last 10 steps {last:.5} (ratio {:.3})", last / first);
    }
    println!("wrote {} and {}", ckpt.display(), log_path.display());
    Ok(())
}

fn infer(args: InferArgs) -> CmdResult {
    let (generator, _) = Checkpoint::load(&args.checkpoint)?.restore()?;
    let img = load_rgb(&args.image)?;
    let mask = load_mask(&args.mask)?;
    let (w, h) = img.dimensions();
    if (mask.height(), mask.width()) != (h as usize, w as usize) {
        return Err(Failure::Data(format!(
            "image is {w}x{h} but mask is {}x{}",
            mask.width(),
            mask.height()
        )));
    }
    let input = rgb_to_tensor(&img, -1.0, 1.0);
    let (raw, _) = generator.infer(&input, std::slice::from_ref(&mask))?;
    let mut out = tensor_to_rgb(&raw, 0, -1.0, 1.0)?;
    if args.composited {
        for (x, y, px) in out.enumerate_pixels_mut() {
            if mask.get(y as usize, x as usize) {
                *px = *img.get_pixel(x, y);
            }
        }
    }
    ensure_parent(&args.out)?;
    save_rgb(&out, &args.out)?;
    println!("wrote {} ({w}x{h}, {:.2}% holes)", args.out.display(), 100.0 * mask.ratio());
    Ok(())
}

fn png_names(dir: &Path) -> Result<BTreeSet<String>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let mut names = BTreeSet::new();
    for entry in entries {
        let path = entry?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            if let Some(n) = path.file_name().and_then(|n| n.to_str()) {
                names.insert(n.to_string());
            }
        }
    }
    Ok(names)
}

fn fmt_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn metrics(args: MetricsArgs) -> CmdResult {
    let (na, nb) = (png_names(&args.a)?, png_names(&args.b)?);
    if na != nb {
        let list = |s: Vec<&String>| {
            if s.is_empty() {
                "(none)".to_string()
            } else {
                s.into_iter().cloned().collect::<Vec<_>>().join(", ")
            }
        };
        return Err(Failure::Data(format!(
            "image sets differ; only in {}: {}; only in {}: {}",
            args.a.display(),
            list(na.difference(&nb).collect()),
            args.b.display(),
            list(nb.difference(&na).collect())
        )));
    }
    if na.is_empty() {
        return Err(Failure::Data(format!("no PNG images in {}", args.a.display())));
    }
    let names: Vec<&String> = na.iter().collect();
    let reports = names
        .par_iter()
        .map(|name| {
            let a = load_rgb(args.a.join(name))?;
            let b = load_rgb(args.b.join(name))?;
            if a.dimensions() != b.dimensions() {
                return Err(Error::Shape(format!(
                    "{name}: {:?} vs {:?}",
                    a.dimensions(),
                    b.dimensions()
                )));
            }
            MetricReport::evaluate(&rgb_to_tensor(&a, 0.0, 1.0), &rgb_to_tensor(&b, 0.0, 1.0))
        })
        .collect::<dpconv::Result<Vec<_>>>()?;
    let mut csv = String::from("name,l1_percent,psnr_db,ssim\n");
    let mut row = |name: &str, r: &MetricReport| {
        csv.push_str(&format!(
            "{name},{},{},{}\n",
            fmt_metric(r.l1_percent),
            fmt_metric(r.psnr_db),
            fmt_metric(r.ssim)
        ));
    };
    for (name, r) in names.iter().zip(&reports) {
        row(name, r);
    }
    let mean = MetricReport::mean(&reports).expect("non-empty");
    row("mean", &mean);
    let out = args.out.unwrap_or_else(|| default_path("metrics.csv"));
    ensure_parent(&out)?;
    std::fs::write(&out, csv)?;
    println!(
        "{} images: l1 {}%  psnr {} dB  ssim {}",
        reports.len(),
        fmt_metric(mean.l1_percent),
        fmt_metric(mean.psnr_db),
        fmt_metric(mean.ssim)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Maskgen(a) => maskgen(a),
        Command::Analyze(a) => analyze(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::TrainDemo(a) => train_demo(a),
        Command::Infer(a) => infer(a),
        Command::Metrics(a) => metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
