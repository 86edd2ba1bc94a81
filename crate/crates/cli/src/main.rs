use clap::{Parser, Subcommand};
use rollscan_cli::config::RunConfig;
use rollscan_cli::{cmd_analyze, cmd_calibrate, cmd_reconstruct, cmd_simulate};
use rollscan_core::CoreError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Single-shot compressive video with a rolling shutter sensor behind
/// multiplexing lensless optics: simulate measurements, reconstruct video
/// volumes, calibrate PSFs, and analyze results.
#[derive(Parser)]
#[command(name = "rollscan", version, about)]
struct Cli {
    /// Plain-text key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Random seed (overrides the config's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to the available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene, PSF, and measurement.
    Simulate,
    /// Recover a video volume from a measurement.
    Reconstruct,
    /// Turn a point-source calibration image into a normalized PSF.
    Calibrate {
        /// 16-bit grayscale or RGB PNG of a point source.
        #[arg(long)]
        input: PathBuf,
    },
    /// Projections, spectra, and metrics for a volume.
    Analyze {
        /// Volume container to analyze.
        #[arg(long)]
        volume: PathBuf,
        /// Optional ground-truth volume for quality metrics.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CoreError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CoreError::Config("--config is required".into()))?;
    let mut config = RunConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.noise.seed = seed;
    }
    if let Some(output) = &cli.output {
        config.output_dir = output.clone();
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CoreError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CoreError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate => {
            let config = load_config(cli)?;
            let out_dir = config.output_dir.clone();
            let outputs = cmd_simulate(&config, &out_dir)?;
            if cli.verbose {
                eprintln!("wrote {}", outputs.measurement_path.display());
                eprintln!("wrote {}", outputs.truth_path.display());
                eprintln!("wrote {}", outputs.psf_path.display());
                eprintln!("wrote {}", outputs.manifest_path.display());
            }
        }
        Command::Reconstruct => {
            let config = load_config(cli)?;
            let out_dir = config.output_dir.clone();
            let outputs = cmd_reconstruct(&config, &out_dir)?;
            if cli.verbose {
                eprintln!("wrote {}", outputs.volume_path.display());
                for (channel, ok) in outputs.converged.iter().enumerate() {
                    eprintln!("channel {channel} converged: {ok}");
                }
            }
        }
        Command::Calibrate { input } => {
            let out_dir = match (&cli.output, &cli.config) {
                (Some(dir), _) => dir.clone(),
                (None, Some(path)) => RunConfig::from_file(path)?.output_dir,
                (None, None) => PathBuf::from("out"),
            };
            let outputs = cmd_calibrate(input, &out_dir)?;
            if cli.verbose {
                eprintln!("wrote {}", outputs.psf_path.display());
                eprintln!(
                    "saturated fraction: {:.4}%",
                    outputs.saturated_fraction * 100.0
                );
            }
        }
        Command::Analyze { volume, truth } => {
            let config = load_config(cli)?;
            let out_dir = config.output_dir.clone();
            let outputs = cmd_analyze(volume, &config, truth.as_deref(), &out_dir)?;
            if cli.verbose {
                eprintln!("wrote {}", outputs.report_path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                CoreError::Config(_) | CoreError::Dimension(_) => 2,
                CoreError::Io(_) | CoreError::Image(_) | CoreError::Format(_) => 3,
                CoreError::Numerical(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}
