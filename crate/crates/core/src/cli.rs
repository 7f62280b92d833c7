//! The `hazeclear` command line.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors. All
//! flags are validated before any file is read or written.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::dataset::{scan_pairs, split, PairManifest, StemRule};
use crate::dcp::{self, DcpParams, Refine};
use crate::error::Error;
use crate::image::{is_image_file, load_image, save_image, Image, Rgb};
use crate::metrics::{evaluate_set, format_metric, Dehazer};
use crate::regression::{dehaze_mlr, train_with_progress, PixelBudget, RegressionModel, TrainConfig};
use crate::scene::synthetic_scene;
use crate::synth::{synth_set, DepthModel, SynthConfig};

/// White gap between montage panels, in pixels.
pub const GUTTER: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "hazeclear", version, about = "Single-image dehazing toolkit", args_override_self = true)]
struct Cli {
    /// Flat `key = value` file of flag defaults; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render procedural clean outdoor scenes.
    Scenes(ScenesArgs),
    /// Synthesize hazy images from a directory of clean images.
    Synth(SynthArgs),
    /// Build a manifest by pairing hazy and clean directories.
    Scan(ScanArgs),
    /// Split a manifest into train and test sides by scene.
    Split(SplitArgs),
    /// Train the regression correction on a manifest.
    Train(TrainArgs),
    /// Dehaze one image or a directory of images.
    Dehaze(DehazeArgs),
    /// Score a dehazer on a manifest and write a CSV report.
    Eval(EvalArgs),
    /// Write a side-by-side montage: input, DCP, and optionally the model.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct DcpArgs {
    /// Dark-channel window radius.
    #[arg(long, default_value_t = 7)]
    window_radius: usize,
    /// Fraction of haze removed.
    #[arg(long, default_value_t = 0.95)]
    omega: f64,
    /// Transmission floor.
    #[arg(long, default_value_t = 0.1)]
    t0: f64,
    /// Fraction of pixels considered when picking the airlight.
    #[arg(long, default_value_t = 0.001)]
    airlight_fraction: f64,
    /// Transmission refinement: none or guided.
    #[arg(long, default_value = "guided", value_parser = parse_refine)]
    refine: Refine,
    #[arg(long, default_value_t = 30)]
    guided_radius: usize,
    #[arg(long, default_value_t = 1e-3)]
    guided_eps: f64,
}

impl DcpArgs {
    fn params(&self) -> Result<DcpParams, CliError> {
        let params = DcpParams {
            window_radius: self.window_radius,
            omega: self.omega,
            t0: self.t0,
            airlight_fraction: self.airlight_fraction,
            refine: self.refine,
            guided_radius: self.guided_radius,
            guided_eps: self.guided_eps,
        };
        params.validate().map_err(usage)?;
        Ok(params)
    }
}

#[derive(Debug, Args)]
struct ScenesArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 96)]
    height: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated scattering coefficients.
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_value = "0.4,0.6,0.8,1,1.2,1.4,1.6,1.8,2")]
    betas: Vec<f64>,
    /// Comma-separated airlights, each a gray level or R:G:B.
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_value = "0.7,0.8,0.9,1", value_parser = parse_airlight)]
    airlights: Vec<Rgb>,
    /// constant:C, ramp:NEAR:FAR or radial:CENTER:EDGE.
    #[arg(long, default_value = "ramp:0.2:1.2", value_parser = parse_depth)]
    depth: DepthModel,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[arg(long)]
    hazy: PathBuf,
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// File-name rule: suffix (`<stem>_<A>_<beta>`) or exact.
    #[arg(long, default_value = "suffix", value_parser = parse_rule)]
    rule: StemRule,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Pixels sampled per image per step, or `all`.
    #[arg(long, default_value = "4096", value_parser = parse_pixels)]
    pixels: PixelBudget,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    dcp: DcpArgs,
}

#[derive(Debug, Args)]
struct DehazeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    dcp: DcpArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    dcp: DcpArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    dcp: DcpArgs,
}

fn parse_refine(s: &str) -> Result<Refine, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_rule(s: &str) -> Result<StemRule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_depth(s: &str) -> Result<DepthModel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pixels(s: &str) -> Result<PixelBudget, String> {
    if s == "all" {
        return Ok(PixelBudget::All);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive count or `all`, got `{s}`")),
        Ok(n) => Ok(PixelBudget::Count(n)),
    }
}

fn parse_airlight(s: &str) -> Result<Rgb, String> {
    let values = s
        .split(':')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad airlight `{s}`")))
        .collect::<Result<Vec<_>, _>>()?;
    match values[..] {
        [g] => Ok(Rgb::gray(g)),
        [r, g, b] => Ok(Rgb::new(r, g, b)),
        _ => Err(format!("airlight must be a gray level or R:G:B, got `{s}`")),
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
    /// Already printed by the argument parser (help, version or usage).
    Reported(i32),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

const SUBCOMMANDS: &[&str] = &[
    "scenes", "synth", "scan", "split", "train", "dehaze", "eval", "compare",
];

/// Splices `key = value` lines from a `--config` file into the argument
/// list right after the subcommand, so later explicit flags override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path = None;
    let mut i = 0;
    while i < args.len() {
        let arg = args[i].to_string_lossy();
        if arg == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
            i += 1;
        } else if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(usage(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                n + 1
            )));
        };
        let key = key.trim().replace('_', "-");
        extra.push(OsString::from(format!("--{key}={}", value.trim())));
    }
    let Some(sub) = args
        .iter()
        .skip(1)
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(args);
    };
    let at = sub + 2;
    let mut out = args[..at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let result = expand_config(args).and_then(|args| {
        let cli = Cli::try_parse_from(args).map_err(|e| {
            let _ = e.print();
            CliError::Reported(e.exit_code())
        })?;
        dispatch(cli.command)
    });
    match result {
        Ok(()) => 0,
        Err(CliError::Reported(code)) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Scenes(a) => cmd_scenes(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Dehaze(a) => cmd_dehaze(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(Error::Io {
        path: dir.to_path_buf(),
        source: e,
    }))
}

fn cmd_scenes(args: ScenesArgs) -> Result<(), CliError> {
    if args.count == 0 || args.height == 0 || args.width == 0 {
        return Err(usage("count, height and width must be positive"));
    }
    create_dir(&args.out)?;
    for i in 0..args.count {
        let seed = args.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let img = synthetic_scene(args.height, args.width, seed)?;
        save_image(&img, args.out.join(format!("scene_{i:04}.png")))?;
    }
    println!("scenes {} dir {}", args.count, args.out.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let config = SynthConfig {
        betas: args.betas,
        airlights: args.airlights,
        depth: args.depth,
        noise_sigma: args.noise,
        seed: args.seed,
    };
    config.validate().map_err(usage)?;
    let manifest = synth_set(&args.clean, &args.out, &config)?;
    println!(
        "pairs {} manifest {}",
        manifest.len(),
        args.out.join(crate::dataset::MANIFEST_FILE_NAME).display()
    );
    Ok(())
}

fn cmd_scan(args: ScanArgs) -> Result<(), CliError> {
    let outcome = scan_pairs(&args.hazy, &args.clean, args.rule)?;
    for skipped in &outcome.skipped {
        eprintln!("warning: no clean image for {}", skipped.display());
    }
    outcome.manifest.write(&args.out)?;
    println!(
        "pairs {} skipped {} manifest {}",
        outcome.manifest.len(),
        outcome.skipped.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_split(args: SplitArgs) -> Result<(), CliError> {
    if !(args.train_fraction > 0.0 && args.train_fraction < 1.0) {
        return Err(usage(format!(
            "train fraction must be in (0, 1), got {}",
            args.train_fraction
        )));
    }
    let manifest = PairManifest::read(&args.manifest)?;
    let (train, test) = split(&manifest, args.train_fraction, args.seed)?;
    train.write(&args.train_out)?;
    test.write(&args.test_out)?;
    println!("train {} test {}", train.len(), test.len());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let config = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        pixels_per_image: args.pixels,
        seed: args.seed,
        dcp: args.dcp.params()?,
    };
    config.validate().map_err(usage)?;
    let manifest = PairManifest::read(&args.manifest)?;
    let report = train_with_progress(&manifest, &config, |epoch, loss| {
        println!("epoch {epoch} loss {loss}");
    })?;
    report.model.save(&args.out)?;
    Ok(())
}

fn load_dehazer(model: Option<&Path>, dcp: DcpParams) -> Result<Dehazer, CliError> {
    Ok(match model {
        Some(path) => Dehazer::Mlr {
            model: RegressionModel::load(path)?,
            dcp,
        },
        None => Dehazer::Dcp(dcp),
    })
}

fn output_name(input: &Path) -> PathBuf {
    let keep = matches!(
        input.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm")
    );
    let name = input.file_name().map(PathBuf::from).unwrap_or_default();
    if keep {
        name
    } else {
        name.with_extension("png")
    }
}

fn cmd_dehaze(args: DehazeArgs) -> Result<(), CliError> {
    let dcp = args.dcp.params()?;
    let dehazer = load_dehazer(args.model.as_deref(), dcp)?;
    if args.input.is_dir() {
        let mut inputs: Vec<PathBuf> = fs::read_dir(&args.input)
            .map_err(|e| Error::io(&args.input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_file(p))
            .collect();
        inputs.sort();
        create_dir(&args.out)?;
        for input in &inputs {
            let img = load_image(input)?;
            save_image(&dehazer.run(&img)?, args.out.join(output_name(input)))?;
        }
        println!("dehazed {}", inputs.len());
    } else {
        let img = load_image(&args.input)?;
        save_image(&dehazer.run(&img)?, &args.out)?;
        println!("dehazed 1");
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let dcp = args.dcp.params()?;
    let dehazer = load_dehazer(args.model.as_deref(), dcp)?;
    let manifest = PairManifest::read(&args.manifest)?;
    let report = evaluate_set(&manifest, &dehazer)?;
    report.write_csv(&args.report)?;
    for row in report.rows.iter().filter(|r| r.psnr_db.is_none()) {
        eprintln!("warning: failed to evaluate {}", row.hazy.display());
    }
    println!(
        "mean_psnr {} mean_ssim {}",
        format_metric(report.mean_psnr),
        format_metric(report.mean_ssim)
    );
    Ok(())
}

/// Places images left to right, top-aligned, separated by white gutters.
pub fn montage(panels: &[&Image]) -> crate::error::Result<Image> {
    let height = panels.iter().map(|p| p.height()).max().unwrap_or(0);
    let width = panels.iter().map(|p| p.width()).sum::<usize>() + GUTTER * panels.len().saturating_sub(1);
    let mut planes = [vec![1.0; height * width], vec![1.0; height * width], vec![1.0; height * width]];
    let mut left = 0;
    for panel in panels {
        for c in 0..3 {
            for y in 0..panel.height() {
                let src = &panel.plane(c)[y * panel.width()..(y + 1) * panel.width()];
                planes[c][y * width + left..y * width + left + panel.width()].copy_from_slice(src);
            }
        }
        left += panel.width() + GUTTER;
    }
    Image::from_planes(height, width, planes)
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let dcp = args.dcp.params()?;
    let model = args.model.as_deref().map(RegressionModel::load).transpose()?;
    let img = load_image(&args.input)?;
    let dcp_out = dcp::dehaze_dcp(&img, &dcp)?.image;
    let mlr_out = model.map(|m| dehaze_mlr(&img, &m, &dcp)).transpose()?;
    let mut panels = vec![&img, &dcp_out];
    if let Some(out) = &mlr_out {
        panels.push(out);
    }
    let m = montage(&panels)?;
    save_image(&m, &args.out)?;
    println!("montage {}x{} {}", m.width(), m.height(), args.out.display());
    Ok(())
}
