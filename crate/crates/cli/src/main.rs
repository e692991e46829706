mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graspgen::dataset::RunConfig;
use thiserror::Error;

/// Synthetic grasp datasets, label tools and sanity checks.
#[derive(Debug, Parser)]
#[command(name = "graspgen", version)]
struct Cli {
    /// TOML run configuration; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration (also seeds the toy trainer).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render depth images of one mesh from icosahedron viewpoints.
    Render {
        mesh: PathBuf,
        /// Number of views (default: views_per_object).
        #[arg(long)]
        views: Option<usize>,
    },
    /// Sample antipodal grasps on a mesh and score them.
    SampleGrasps {
        mesh: PathBuf,
        /// Number of grasps (default: grasps_per_object).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Generate a full dataset from a directory of meshes.
    GenDataset { object_dir: PathBuf },
    /// Draw augmentation pairs of one depth image and its labels.
    Augment {
        depth: PathBuf,
        /// JSON array of image grasps.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Number of pairs.
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Label anchors against a JSON array of image grasps.
    Match { labels: PathBuf },
    /// Finite-difference check of every loss gradient.
    Losscheck,
    /// Search the grasp-axis rotation for every grasp of a scene.
    RefineBeta {
        /// Directory with camera.json, one depth file per object and grasps.json.
        scene_dir: PathBuf,
        /// Per-object grasp lists (default: SCENE_DIR/grasps.json).
        #[arg(long)]
        grasps: Option<PathBuf>,
    },
    /// Train the toy contrastive encoder and plot its loss curve.
    TrainToy {
        /// Train on the depth images of a dataset instead of synthetic scenes.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Number of synthetic images.
        #[arg(long, default_value_t = 64)]
        images: usize,
        /// Side of the synthetic images.
        #[arg(long, default_value_t = 112)]
        side: usize,
    },
    /// Check a dataset manifest against its files and invariants.
    Validate { manifest: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(graspgen::Error),
    #[error(transparent)]
    Data(#[from] graspgen::Error),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(graspgen::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Render { mesh, views } => {
            if let Some(v) = views {
                cfg.views_per_object = v;
            }
            cfg.validate().map_err(CliError::Config)?;
            commands::render(&mesh, &cfg, out)
        }
        Command::SampleGrasps { mesh, count } => {
            if let Some(c) = count {
                cfg.grasps_per_object = c;
            }
            cfg.validate().map_err(CliError::Config)?;
            commands::sample_grasps(&mesh, &cfg, out)
        }
        Command::GenDataset { object_dir } => commands::gen_dataset(&object_dir, &cfg, out),
        Command::Augment { depth, labels, count } => commands::augment(&depth, labels.as_deref(), count, &cfg, out),
        Command::Match { labels } => commands::match_anchors(&labels, &cfg, out),
        Command::Losscheck => commands::losscheck(&cfg),
        Command::RefineBeta { scene_dir, grasps } => commands::refine_beta(&scene_dir, grasps.as_deref(), &cfg, out),
        Command::TrainToy { manifest, images, side } => {
            commands::train_toy(manifest.as_deref(), images, side, &cfg, out)
        }
        Command::Validate { manifest } => commands::validate(&manifest),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
