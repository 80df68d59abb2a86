use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use curvestyle::gradcheck;
use curvestyle::raster::RasterConfig;
use curvestyle::rules::RuleKind;
use curvestyle_cli::{check_weights, render_to_png, transfer, CliError, RunConfig};

/// Curve-based style transfer for SVG line drawings.
#[derive(Parser)]
#[command(name = "curvestyle", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize rule parameters so the content drawing takes on the style image's statistics.
    Transfer(TransferArgs),
    /// Rasterize an SVG to a grayscale PNG.
    Render(RenderArgs),
    /// Validate a CNSW weight bundle.
    CheckWeights {
        #[arg(long)]
        weights: PathBuf,
        /// JSON network spec to check shapes against; VGG19 when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Run the finite-difference suites and print max relative errors.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Args)]
struct TransferArgs {
    /// TOML or JSON file whose keys mirror these flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    content: Option<PathBuf>,
    #[arg(long)]
    style: Option<PathBuf>,
    /// `tiny` or a CNSW file.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    style_invert: bool,
    #[arg(long)]
    canvas: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Comma-separated: rigid, shear, curvature, smoothing, cp_translate.
    #[arg(long, value_delimiter = ',')]
    rules: Option<Vec<RuleKind>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    style_weights: Option<Vec<f64>>,
    #[arg(long)]
    content_weight: Option<f64>,
    #[arg(long)]
    content_tap: Option<String>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    p_drop: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    snapshot_every: Option<usize>,
}

impl TransferArgs {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        over!(weights, canvas, segments, tau, eps, rules, lambda, content_weight, reg, iters, lr, p_drop, seed, snapshot_every);
        if self.content.is_some() {
            cfg.content = self.content;
        }
        if self.style.is_some() {
            cfg.style = self.style;
        }
        if self.spec.is_some() {
            cfg.spec = self.spec;
        }
        if self.output.is_some() {
            cfg.output = self.output;
        }
        if self.style_weights.is_some() {
            cfg.style_weights = self.style_weights;
        }
        if self.content_tap.is_some() {
            cfg.content_tap = self.content_tap;
        }
        cfg.strict |= self.strict;
        cfg.style_invert |= self.style_invert;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 256)]
    canvas: usize,
    #[arg(long, default_value_t = 16)]
    segments: usize,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long)]
    strict: bool,
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Transfer(args) => {
            let cfg = args.resolve()?;
            let last = transfer(&cfg)?;
            println!(
                "done: style {:.6e} content {:.6e} reg {:.6e}",
                last.style, last.content, last.reg
            );
        }
        Command::Render(a) => {
            let raster = RasterConfig {
                height: a.canvas,
                width: a.canvas,
                segments: a.segments,
                tau: a.tau,
                eps: a.eps,
            };
            render_to_png(&a.input, &raster, a.strict, &a.output)?;
        }
        Command::CheckWeights { weights, spec } => {
            print!("{}", check_weights(&weights, spec.as_deref())?);
        }
        Command::Gradcheck { seed, tolerance } => {
            let results = gradcheck::run_all(seed)?;
            let mut worst = 0usize;
            for (i, r) in results.iter().enumerate() {
                println!("{:<12} {:>6} entries  max rel error {:.3e}", r.name, r.entries, r.max_rel_error);
                if r.max_rel_error > results[worst].max_rel_error {
                    worst = i;
                }
            }
            if !(results[worst].max_rel_error < tolerance) {
                let r = &results[worst];
                return Err(CliError::Gradient(format!("{} at {:.3e}", r.name, r.max_rel_error)));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
