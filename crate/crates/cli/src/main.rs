use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smsb::SmsbError;

mod commands;
mod config;

use config::RunConfig;

/// Sparse modeling of spectral blocks for hyperspectral image classification.
#[derive(Debug, Parser)]
#[command(name = "smsb", version, arg_required_else_help = true)]
struct Cli {
    /// TOML run configuration; its keys override the preset.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Parameter preset: indian-pines, pavia-university or salinas.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Runs for `evaluate` and `bench`; run r uses seed + r.
    #[arg(long, global = true)]
    repeats: Option<usize>,

    /// Worker threads, 0 for all cores.
    #[arg(long, global = true, env = "SMSB_THREADS")]
    threads: Option<usize>,

    /// Dictionary-learning lasso weight (default 1/sqrt(s)).
    #[arg(long, global = true, value_name = "MU")]
    mu_dict: Option<f64>,

    /// Joint-coding weight: <mu> or relative:<ratio>.
    #[arg(long, global = true, value_name = "MU")]
    mu_code: Option<String>,

    /// Block selection: top_n:<n> or threshold:<T>.
    #[arg(long, global = true, value_name = "MODE")]
    mask_mode: Option<String>,

    /// Output path (a directory for `synth`).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn the sub-dictionary and the block mask from a cube.
    Fit {
        #[arg(long)]
        cube: Option<PathBuf>,
    },
    /// Sparse features for every pixel, or the labeled ones with --labels.
    Encode {
        #[arg(long)]
        cube: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Train the SVM on labeled features and store it in the model
    /// (in place unless --out is given).
    TrainSvm {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Predict a label for every pixel.
    Classify {
        #[arg(long)]
        cube: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Ground truth; its class names and colors are copied and accuracy is printed.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Repeated split / fit / train / test runs with OA, AA and kappa.
    Evaluate {
        #[arg(long)]
        cube: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Also run the SVM on raw spectra.
        #[arg(long)]
        baseline: bool,
    },
    /// Render a label map as a PPM image.
    Map {
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Only draw pixels that are labeled here.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Write a synthetic cube, labels and a matching config.
    Synth {
        #[arg(long, default_value_t = 3)]
        classes: usize,
        /// Use the noisy generator instead of the separable one.
        #[arg(long)]
        noisy: bool,
        /// Override the generator noise level.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Stage timings of SMSB against the raw-spectra SVM.
    Bench {
        #[arg(long)]
        cube: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Classes of the synthetic scene used without --cube.
        #[arg(long, default_value_t = 3)]
        classes: usize,
    },
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig, SmsbError> {
        let mut cfg = RunConfig::load(self.config.as_deref(), self.preset.as_deref())?;
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if let Some(v) = self.mu_dict {
            cfg.dictionary.mu = Some(v);
        }
        if let Some(v) = &self.mu_code {
            cfg.coding.mu = v.clone();
        }
        if let Some(v) = &self.mask_mode {
            cfg.selection.mask_mode = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, exit) = match e.chain().find_map(|c| c.downcast_ref::<SmsbError>()) {
                Some(s) => (s.code(), s.family().exit_code()),
                None => ("cli.error", 1),
            };
            let msg = e.chain().map(|c| c.to_string()).collect::<Vec<_>>().join(": ");
            eprintln!("error[{code}]: {msg}");
            ExitCode::from(exit as u8)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = cli.run_config()?;
    if cli.dump_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(SmsbError::Config("no command given (see --help)".into()).into());
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| SmsbError::Resource(format!("thread pool: {e}")))?;
    let out = cli.out;
    match command {
        Command::Fit { cube } => commands::fit(&cfg, cube, out),
        Command::Encode { cube, model, labels } => commands::encode(&cfg, cube, model, labels, out),
        Command::TrainSvm { features, model } => commands::train_svm(&cfg, features, model, out),
        Command::Classify { cube, model, labels } => commands::classify(&cfg, cube, model, labels, out),
        Command::Evaluate { cube, labels, baseline } => commands::evaluate(&cfg, cube, labels, baseline, out),
        Command::Map { labels, truth } => commands::map(&cfg, labels, truth, out),
        Command::Synth { classes, noisy, noise } => commands::synth(&cfg, classes, noisy, noise, out),
        Command::Bench { cube, labels, classes } => commands::bench(&cfg, cube, labels, classes),
    }
}
