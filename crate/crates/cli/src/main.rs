use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skyseg::data::{generate_scene, write_dataset, ClassSet, Palette, SceneSpec};
use skyseg::run::verify::{run_suite, Suite};
use skyseg::run::{run_eval, run_infer, run_train, InferRequest, RunConfig};
use skyseg::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "skyseg", version, about = "Multi-task aerial segmentation: data, training, evaluation, inference")]
struct Cli {
    /// `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render synthetic labeled scenes into a dataset directory.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// Side length of the square scenes in pixels.
        #[arg(long, default_value_t = 512)]
        size: u32,
        #[arg(long)]
        out: PathBuf,
        /// Label alphabet of the masks: dense20, lane13 or category11.
        #[arg(long, default_value = "dense20")]
        class_set: ClassSet,
        /// Use the wider colour palette that reaches every dense class.
        #[arg(long)]
        extended_palette: bool,
    },
    /// Train a network on the dataset named in the config.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Tile, predict, stitch and score a dataset; one metrics CSV per branch.
    Eval {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Score the ground truth against itself instead of running a network.
        #[arg(long)]
        oracle: bool,
    },
    /// Predict a label mask for one PPM image.
    Infer {
        image: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the edge branch prediction here.
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Rescale from source to target ground sampling distance, `src:dst` in cm/px.
        #[arg(long, value_parser = parse_gsd)]
        gsd: Option<(f64, f64)>,
    },
    /// Run a property suite and report the worst observed errors.
    Verify {
        #[arg(long, value_parser = parse_suite)]
        suite: Suite,
    },
}

fn parse_gsd(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected `src:dst`")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number"));
    let (src, dst) = (num(a)?, num(b)?);
    if !(src > 0.0 && dst > 0.0 && src.is_finite() && dst.is_finite()) {
        return Err("ground sampling distances must be positive".into());
    }
    Ok((src, dst))
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Data(_)
        | Error::Image(_)
        | Error::Format(_)
        | Error::LabelOutOfRange { .. }
        | Error::Io { .. } => EXIT_DATA,
        _ => EXIT_CONFIG,
    }
}

fn load_config(path: Option<&Path>) -> skyseg::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    Ok(cfg)
}

fn run(cli: Cli) -> skyseg::Result<u8> {
    match cli.command {
        Command::GenData {
            seed,
            count,
            size,
            out,
            class_set,
            extended_palette,
        } => {
            let palette = if extended_palette { Palette::Extended } else { Palette::Reduced };
            let samples: Vec<_> = (0..count as u64)
                .map(|i| {
                    let spec = SceneSpec::new(seed.wrapping_add(i), size, size).with_palette(palette);
                    generate_scene(&spec).labeled(class_set)
                })
                .collect();
            write_dataset(&out, &samples)?;
            println!("wrote {count} scenes to {}", out.display());
        }
        Command::Train { dataset, out_dir } => {
            let mut cfg = load_config(cli.config.as_deref())?;
            cfg.dataset = dataset.or(cfg.dataset);
            cfg.out_dir = out_dir.or(cfg.out_dir);
            let (report, outputs) = run_train(&cfg)?;
            if let Some(last) = report.last() {
                println!(
                    "trained {} steps over {} epochs, final loss {:.6}, pixel accuracy {:.4}",
                    report.steps.len(),
                    report.epochs_completed,
                    last.loss,
                    last.pixel_accuracy
                );
            }
            println!("weights: {}", outputs.weights().display());
        }
        Command::Eval {
            weights,
            dataset,
            out_dir,
            oracle,
        } => {
            let mut cfg = load_config(cli.config.as_deref())?;
            cfg.out_dir = out_dir.or(cfg.out_dir);
            for path in run_eval(&cfg, weights.as_deref(), dataset.as_deref(), oracle)? {
                println!("{}", path.display());
            }
        }
        Command::Infer {
            image,
            weights,
            out,
            edges,
            gsd,
        } => {
            let cfg = load_config(cli.config.as_deref())?;
            let req = InferRequest { image, out, edges, gsd };
            let (w, h) = run_infer(&cfg, weights.as_deref(), &req)?;
            println!("wrote {w}x{h} mask to {}", req.out.display());
        }
        Command::Verify { suite } => {
            let report = run_suite(suite)?;
            println!("{report}");
            if !report.passed() {
                return Ok(EXIT_VERIFY);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
