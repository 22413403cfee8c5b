use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hybrid_precoding::codebook::{beamsteering_vcb, Codebook};
use hybrid_precoding::experiment::{
    apply_scale, cluster_sweep, load_experiment, load_or_default, rf_chain_sweep, run_sweep, train_baseband,
    train_rf, ExperimentConfig, SweepResult, TrainBbConfig, TrainRfConfig, TrainingOutput, VcbConfig,
};
use hybrid_precoding::greedy::{feedback_bits, RfFeedback};
use hybrid_precoding::{Error, Result};

/// Limited-feedback hybrid precoding for wideband mmWave MIMO-OFDM.
#[derive(Parser)]
#[command(name = "fshp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON or TOML configuration file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; sweeps write JSON when it ends in `.json` and CSV otherwise (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use K=512 subcarriers and a cyclic prefix of 128, overriding the configured values.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Record per-row wall-clock time (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train an RF codebook with the Lloyd algorithm.
    TrainRf {
        #[command(flatten)]
        common: Common,
        /// Distortion trace CSV; defaults to `<out>.trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Train a baseband codebook for an existing RF codebook.
    TrainBb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate a quantized beamsteering vector codebook.
    GenVcb {
        #[command(flatten)]
        common: Common,
    },
    /// Spectral efficiency versus SNR.
    Sweep(SweepArgs),
    /// Spectral efficiency versus number of single-ray clusters.
    ClusterSweep(SweepArgs),
    /// Spectral efficiency versus number of RF chains.
    RfchainSweep(SweepArgs),
    /// Feedback bits per channel use.
    Bits {
        #[arg(long, value_enum)]
        rf: RfKindArg,
        /// RF codebook size (ignored for `none`).
        #[arg(long, default_value_t = 1)]
        size: usize,
        #[arg(long)]
        n_rf: usize,
        #[arg(long)]
        n_s: usize,
        #[arg(long)]
        k: usize,
        /// Baseband codebook size; counted once per subcarrier when n_s < n_rf.
        #[arg(long)]
        bb_size: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RfKindArg {
    Matrix,
    Vector,
    None,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require_out(common: &Common) -> Result<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required for this command".into()))
}

fn write_training(out: TrainingOutput, path: &Path, trace: Option<PathBuf>) -> Result<()> {
    out.codebook.save(path)?;
    let trace = trace.unwrap_or_else(|| {
        let mut s = path.as_os_str().to_owned();
        s.push(".trace.csv");
        PathBuf::from(s)
    });
    write_text(&trace, &out.trace.to_csv())
}

fn run_sweep_command(args: SweepArgs, f: fn(&ExperimentConfig) -> Result<SweepResult>) -> Result<()> {
    let mut cfg = match &args.common.config {
        Some(p) => load_experiment(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    if args.common.full_scale {
        apply_scale(&mut cfg.system, true);
    }
    cfg.timing |= args.timing;
    let result = f(&cfg)?;
    let json = args
        .common
        .out
        .as_deref()
        .and_then(|p| p.extension())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let text = if json { result.to_json() } else { result.to_csv() };
    match &args.common.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainRf { common, trace } => {
            let mut cfg: TrainRfConfig = load_or_default(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if common.full_scale {
                apply_scale(&mut cfg.system, true);
            }
            let out = require_out(&common)?;
            write_training(train_rf(&cfg)?, out, trace)
        }
        Command::TrainBb { common, trace } => {
            let mut cfg: TrainBbConfig = load_or_default(common.config.as_deref())?;
            if let Some(base) = common.config.as_deref().and_then(Path::parent) {
                cfg.rf_codebook = base.join(&cfg.rf_codebook);
            }
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if common.full_scale {
                apply_scale(&mut cfg.system, true);
            }
            let out = require_out(&common)?;
            write_training(train_baseband(&cfg)?, out, trace)
        }
        Command::GenVcb { common } => {
            let cfg: VcbConfig = load_or_default(common.config.as_deref())?;
            let cb = beamsteering_vcb(cfg.n_bs, cfg.size, cfg.antenna_spacing, cfg.phase_bits).map_err(
                |e| match e {
                    Error::InvalidArgument(m) => Error::Config(m),
                    other => other,
                },
            )?;
            Codebook::Rf(cb).save(require_out(&common)?)
        }
        Command::Sweep(args) => run_sweep_command(args, run_sweep),
        Command::ClusterSweep(args) => run_sweep_command(args, cluster_sweep),
        Command::RfchainSweep(args) => run_sweep_command(args, rf_chain_sweep),
        Command::Bits {
            rf,
            size,
            n_rf,
            n_s,
            k,
            bb_size,
        } => {
            if n_s == 0 || n_s > n_rf || k == 0 {
                return Err(Error::Config(format!(
                    "need 1 <= n_s <= n_rf and k >= 1 (got n_s={n_s}, n_rf={n_rf}, k={k})"
                )));
            }
            let rf = match rf {
                RfKindArg::Matrix => RfFeedback::Matrix { codebook_size: size },
                RfKindArg::Vector => RfFeedback::Vector { codebook_size: size },
                RfKindArg::None => RfFeedback::None,
            };
            let b = feedback_bits(rf, n_rf, n_s, k, bb_size).map_err(|e| Error::Config(e.to_string()))?;
            if b.exact {
                println!("{}", b.bits);
            } else {
                println!("{} (rounded up)", b.bits);
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else if matches!(e, Error::Io { .. }) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
