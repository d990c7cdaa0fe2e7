use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hrnsm::config::{RunConfig, SyntheticInput};
use hrnsm::dsp::Frontend;
use hrnsm::io::{read_spike_csv, write_ecg_csv, EcgRecording};
use hrnsm::pipeline::{self, ProtocolOptions};
use hrnsm::stimuli::synthetic_ecg;
use hrnsm::{Error, Result};

/// Spiking state machine that tracks monotonic heart-rate increases in ECG.
#[derive(Debug, Parser)]
#[command(name = "hrnsm", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (or file, for `synth`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the engine seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the integration step, in seconds.
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an ECG recording or a synthetic profile through the full pipeline.
    Detect {
        /// ECG CSV file.
        #[arg(long, conflicts_with = "synthetic")]
        input: Option<PathBuf>,
        /// Synthetic heart-rate profile file (TOML).
        #[arg(long)]
        synthetic: Option<PathBuf>,
        /// Sample rate for input files without an `fs_hz=` line.
        #[arg(long)]
        fs: Option<f64>,
    },
    /// Feed spike events (raster CSV format) into the network.
    Simulate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Drive every ordered pair of input channels in turn.
    Protocol {
        /// Plain winner-take-all network without gating.
        #[arg(long)]
        wta_only: bool,
        /// Poisson rate of each stimulus burst, Hz.
        #[arg(long, default_value_t = 50.0)]
        rate: f64,
        /// Burst length, seconds.
        #[arg(long, default_value_t = 3.0)]
        segment: f64,
        /// Silence between bursts, seconds.
        #[arg(long, default_value_t = 2.0)]
        gap: f64,
    },
    /// Write the band-pass filter coefficients as CSV.
    DesignFilters {
        #[arg(long, default_value_t = 256.0)]
        fs: f64,
    },
    /// Generate a synthetic ECG from a heart-rate profile file.
    Synth {
        #[arg(long)]
        synthetic: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.engine.seed = seed;
    }
    if let Some(dt) = common.dt {
        cfg.engine.dt = dt;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, command: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| pipeline::default_out_dir(command))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<i32> {
    let common = &cli.common;
    let mut cfg = load_config(common)?;
    match cli.command {
        Command::Detect { input, synthetic, fs } => {
            if let Some(path) = input {
                cfg.input.path = Some(path);
                cfg.input.synthetic = None;
            }
            if let Some(path) = synthetic {
                cfg.input.synthetic = Some(SyntheticInput::load(path)?);
                cfg.input.path = None;
            }
            if fs.is_some() {
                cfg.input.fs_hz = fs;
            }
            let label = cfg.input.path.as_ref().map(|p| p.display().to_string());
            let dir = out_dir(common, "detect");
            let (a, code) = pipeline::run_to_dir("detect", &cfg, label, &dir, || {
                let signal = pipeline::load_input(&cfg)?;
                pipeline::run_pipeline(&cfg, &signal)
            })?;
            print!("{}", pipeline::report(&a));
            println!("output        {}", dir.display());
            Ok(code)
        }
        Command::Simulate { input } => {
            let dir = out_dir(common, "simulate");
            let label = Some(input.display().to_string());
            let (a, code) = pipeline::run_to_dir("simulate", &cfg, label, &dir, || {
                pipeline::run_spikes(&cfg, read_spike_csv(&input)?)
            })?;
            print!("{}", pipeline::report(&a));
            println!("output        {}", dir.display());
            Ok(code)
        }
        Command::Protocol {
            wta_only,
            rate,
            segment,
            gap,
        } => {
            if wta_only {
                cfg.network.wta_only = true;
                cfg.custom_network = None;
            }
            let opts = ProtocolOptions {
                rate,
                segment,
                gap,
                ..Default::default()
            };
            let dir = out_dir(common, "protocol");
            let (a, code) = pipeline::run_to_dir("protocol", &cfg, None, &dir, || pipeline::run_protocol(&cfg, &opts))?;
            print!("{}", pipeline::report(&a));
            println!("output        {}", dir.display());
            Ok(code)
        }
        Command::DesignFilters { fs } => {
            cfg.validate()?;
            let frontend = Frontend::new(&cfg.frontend, fs)?;
            let mut csv = String::from("band,low_bpm,high_bpm,section,b0,b1,b2,a0,a1,a2\n");
            for (i, (band, filter)) in cfg.frontend.bands.iter().zip(&frontend.bands).enumerate() {
                for row in filter.to_csv().lines().skip(1) {
                    writeln!(csv, "{i},{},{},{row}", band.low_bpm, band.high_bpm).expect("write to String");
                }
            }
            match &common.out {
                Some(dir) => write_file(&dir.join("filters.csv"), &csv)?,
                None => match std::io::stdout().write_all(csv.as_bytes()) {
                    Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                        return Err(Error::Io {
                            path: PathBuf::from("<stdout>"),
                            source: e,
                        })
                    }
                    _ => {}
                },
            }
            Ok(0)
        }
        Command::Synth { synthetic } => {
            let s = SyntheticInput::load(&synthetic)?;
            let signal = synthetic_ecg(&s.profile, &s.ecg, s.seed)?;
            let path = common.out.clone().unwrap_or_else(|| PathBuf::from("synthetic_ecg.csv"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|source| Error::Io {
                    path: parent.to_path_buf(),
                    source,
                })?;
            }
            write_ecg_csv(&path, &EcgRecording::from_signal(&signal))?;
            println!("wrote {} ({:.1} s at {} Hz)", path.display(), signal.duration(), signal.fs);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
