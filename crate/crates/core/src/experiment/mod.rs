//! Configuration-driven Monte-Carlo experiments and codebook training drivers.
//!
//! Configuration files are JSON or TOML (chosen by file extension). Codebook
//! paths inside a configuration are resolved relative to the file's directory.

mod output;
mod sweep;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelStats, SystemConfig};
use crate::error::{Error, Result};
use crate::greedy::{ApproxOptions, EigenUpdate};
use crate::lloyd::LloydConfig;
use crate::precoder::PowerConstraint;

pub use output::{SweepResult, SweepRow, CSV_HEADER};
pub use sweep::{cluster_sweep, rf_chain_sweep, run_sweep, train_baseband, train_rf, TrainingOutput};

/// Desk-scale subcarrier count and cyclic prefix.
pub const DESK_SCALE: (usize, usize) = (64, 16);
/// Full-scale subcarrier count and cyclic prefix.
pub const FULL_SCALE: (usize, usize) = (512, 128);

/// Salt mixed into the seed of training channels so that training and
/// evaluation never share realizations even when configured with equal seeds.
pub const TRAINING_SALT: u64 = 0x7a3c_91e5_0d42_b6f8;

/// Where an RF codebook comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum RfSource {
    /// Beamsteering vector codebook generated on the fly.
    Beamsteering { size: usize, phase_bits: u32 },
    /// Codebook JSON file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeKind {
    /// Per-subcarrier SVD precoding without hybrid constraints.
    UnconstrainedSvd {
        mode: PowerConstraint,
    },
    /// Best RF precoder from a codebook (all `n_rf`-subsets for a vector codebook), optimal baseband.
    OptimalHybridExhaustive {
        mode: PowerConstraint,
        codebook: RfSource,
    },
    ApproxGsHp {
        vcb: RfSource,
        #[serde(default)]
        options: ApproxOptions,
    },
    DgHp {
        vcb: RfSource,
    },
    GsHp {
        vcb: RfSource,
        #[serde(default)]
        eigen: EigenUpdate,
    },
    /// Receiver picks the RF codeword, then one baseband codeword per subcarrier.
    TrainedCodebookLimitedFeedback {
        rf: RfSource,
        #[serde(default)]
        bb: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Row label in the output; defaults to a name derived from the scheme kind.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: SchemeKind,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind) -> Self {
        SchemeConfig { name: None, kind }
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.kind {
            SchemeKind::UnconstrainedSvd { mode } => format!("svd_{}", mode.label()),
            SchemeKind::OptimalHybridExhaustive { mode, .. } => {
                format!("hybrid_exhaustive_{}", mode.label())
            }
            SchemeKind::ApproxGsHp { options, .. } => match options.mode {
                PowerConstraint::Unitary => "approx_gs_hp".into(),
                m => format!("approx_gs_hp_{}", m.label()),
            },
            SchemeKind::DgHp { .. } => "dg_hp".into(),
            SchemeKind::GsHp { .. } => "gs_hp".into(),
            SchemeKind::TrainedCodebookLimitedFeedback { .. } => "limited_feedback".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub channel_stats: ChannelStats,
    pub schemes: Vec<SchemeConfig>,
    pub snr_grid_db: Vec<f64>,
    pub n_realizations: usize,
    pub seed: u64,
    /// Baseband codebook size used for feedback accounting when `n_s < n_rf`.
    pub bb_codebook_size: Option<usize>,
    /// Cluster counts for the cluster sweep (one ray per cluster).
    pub clusters_grid: Vec<usize>,
    /// RF-chain counts for the RF-chain sweep.
    pub nrf_grid: Vec<usize>,
    /// Record wall-clock time per row; off by default so that output is reproducible byte for byte.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: SystemConfig::default(),
            channel_stats: ChannelStats::default(),
            schemes: vec![SchemeConfig::new(SchemeKind::UnconstrainedSvd {
                mode: PowerConstraint::Unitary,
            })],
            snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            n_realizations: 200,
            seed: 1,
            bb_codebook_size: None,
            clusters_grid: (1..=8).collect(),
            nrf_grid: (2..=6).collect(),
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate().map_err(as_config)?;
        self.channel_stats.validate().map_err(as_config)?;
        if self.n_realizations == 0 {
            return Err(Error::Config("n_realizations must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("snr_grid_db is empty".into()));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr_grid_db holds a non-finite value".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes configured".into()));
        }
        Ok(())
    }

    /// Resolves relative codebook paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for s in &mut self.schemes {
            match &mut s.kind {
                SchemeKind::OptimalHybridExhaustive { codebook: src, .. }
                | SchemeKind::ApproxGsHp { vcb: src, .. }
                | SchemeKind::DgHp { vcb: src }
                | SchemeKind::GsHp { vcb: src, .. } => resolve_source(src, base),
                SchemeKind::TrainedCodebookLimitedFeedback { rf, bb } => {
                    resolve_source(rf, base);
                    if let Some(p) = bb {
                        *p = base.join(&*p);
                    }
                }
                SchemeKind::UnconstrainedSvd { .. } => {}
            }
        }
    }
}

fn resolve_source(src: &mut RfSource, base: &Path) {
    if let RfSource::File { path } = src {
        *path = base.join(&*path);
    }
}

/// Settings for training an RF codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRfConfig {
    pub system: SystemConfig,
    pub channel_stats: ChannelStats,
    pub n_train: usize,
    pub lloyd: LloydConfig,
    pub phase_bits: u32,
    /// Train a rank-1 vector codebook instead of an `n_rf`-column matrix codebook.
    pub vector: bool,
    pub seed: u64,
}

impl Default for TrainRfConfig {
    fn default() -> Self {
        TrainRfConfig {
            system: SystemConfig::default(),
            channel_stats: ChannelStats::default(),
            n_train: 1000,
            lloyd: LloydConfig::default(),
            phase_bits: 6,
            vector: false,
            seed: 1,
        }
    }
}

/// Settings for training a baseband codebook on top of an RF codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBbConfig {
    pub system: SystemConfig,
    pub channel_stats: ChannelStats,
    pub n_train: usize,
    pub lloyd: LloydConfig,
    pub rf_codebook: PathBuf,
    /// SNR at which each training channel's RF codeword is selected.
    pub train_snr_db: f64,
    pub seed: u64,
}

impl Default for TrainBbConfig {
    fn default() -> Self {
        TrainBbConfig {
            system: SystemConfig {
                n_s: 2,
                ..SystemConfig::default()
            },
            channel_stats: ChannelStats::default(),
            n_train: 1000,
            lloyd: LloydConfig {
                n_cb: 8,
                ..LloydConfig::default()
            },
            rf_codebook: PathBuf::from("rf_codebook.json"),
            train_snr_db: 0.0,
            seed: 1,
        }
    }
}

/// Settings for generating a beamsteering vector codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VcbConfig {
    pub n_bs: usize,
    pub size: usize,
    pub antenna_spacing: f64,
    pub phase_bits: u32,
}

impl Default for VcbConfig {
    fn default() -> Self {
        VcbConfig {
            n_bs: 32,
            size: 64,
            antenna_spacing: 0.5,
            phase_bits: 6,
        }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}

/// Parses a JSON or TOML configuration, chosen by the file extension.
pub fn parse_config<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let parsed = match ext.as_deref() {
        Some("toml") => toml::from_str(text).map_err(|e| e.to_string()),
        Some("json") => serde_json::from_str(text).map_err(|e| e.to_string()),
        _ => {
            return Err(Error::Config(format!(
                "{}: configuration files must end in .json or .toml",
                path.display()
            )))
        }
    };
    parsed.map_err(|message| Error::Config(format!("{}: {message}", path.display())))
}

/// Reads and parses a configuration file.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text, path)
}

/// Reads a configuration file, or returns the defaults when no path is given.
pub fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), load_config)
}

/// Loads an experiment configuration and resolves its codebook paths.
pub fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = load_config(path)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

/// Switches a system configuration between desk and full scale.
pub fn apply_scale(sys: &mut SystemConfig, full: bool) {
    let (k, d) = if full { FULL_SCALE } else { DESK_SCALE };
    sys.k_sub = k;
    sys.cp_len = d;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_config_round_trips_in_both_formats() {
        let cfg = ExperimentConfig {
            schemes: vec![
                SchemeConfig::new(SchemeKind::UnconstrainedSvd {
                    mode: PowerConstraint::Total,
                }),
                SchemeConfig {
                    name: Some("gs".into()),
                    kind: SchemeKind::GsHp {
                        vcb: RfSource::Beamsteering {
                            size: 32,
                            phase_bits: 5,
                        },
                        eigen: EigenUpdate::Full,
                    },
                },
                SchemeConfig::new(SchemeKind::TrainedCodebookLimitedFeedback {
                    rf: RfSource::File {
                        path: "rf.json".into(),
                    },
                    bb: Some("bb.json".into()),
                }),
            ],
            bb_codebook_size: Some(8),
            ..Default::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = parse_config(&json, Path::new("x.json")).unwrap();
        assert_eq!(back, cfg);
        let toml_text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = parse_config(&toml_text, Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_extension_is_a_config_error() {
        let r: Result<ExperimentConfig> = parse_config("{}", Path::new("x.yaml"));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn labels() {
        let s = SchemeConfig::new(SchemeKind::OptimalHybridExhaustive {
            mode: PowerConstraint::PerSubcarrierTotal,
            codebook: RfSource::File { path: "a".into() },
        });
        assert_eq!(s.label(), "hybrid_exhaustive_per_subcarrier");
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let mut cfg = ExperimentConfig {
            schemes: vec![SchemeConfig::new(SchemeKind::DgHp {
                vcb: RfSource::File {
                    path: "v.json".into(),
                },
            })],
            ..Default::default()
        };
        cfg.resolve_paths(Path::new("/tmp/exp"));
        match &cfg.schemes[0].kind {
            SchemeKind::DgHp {
                vcb: RfSource::File { path },
            } => assert_eq!(path, Path::new("/tmp/exp/v.json")),
            _ => unreachable!(),
        }
    }
}
