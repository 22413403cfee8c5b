use std::time::Instant;

use rayon::prelude::*;

use super::output::{mean_stderr, SweepResult, SweepRow};
use super::{ExperimentConfig, RfSource, SchemeKind, TrainBbConfig, TrainRfConfig, TRAINING_SALT};
use crate::channel::{
    db_to_linear, generate_channel, realization_rng, ChannelStats, SystemConfig, WidebandChannel,
};
use crate::codebook::{beamsteering_vcb, BasebandCodebook, Codebook, RfCodebook, RfKind};
use crate::error::{Error, Result};
use crate::greedy::{approx_gs_hp, dg_hp, feedback_bits, gs_hp, ApproxOptions, EigenUpdate, RfFeedback};
use crate::linalg::{gram, hermitian_eigenvalues, log2_one_plus, CMat};
use crate::lloyd::{
    baseband_training_set, train_baseband_codebook, train_rf_codebook, train_rf_vector_codebook,
    training_channels, DistortionTrace, TrainingSet,
};
use crate::precoder::{
    argmax_first, exhaustive_rf_search, inverse_sqrt_gram, mutual_information, unconstrained_mi,
    HybridPrecoder, PowerConstraint,
};

/// Upper limit on RF candidates enumerated from a vector codebook.
const MAX_SUBSETS: u128 = 100_000;

enum Plan {
    Svd(PowerConstraint),
    Exhaustive(PowerConstraint, Vec<CMat>),
    Approx(CMat, ApproxOptions),
    Dg(CMat),
    Gs(CMat, EigenUpdate),
    Limited(Vec<CMat>, Option<Vec<CMat>>),
}

struct Prepared {
    label: String,
    plan: Plan,
    bits: Option<u64>,
}

/// Loaded RF codebook together with its feedback structure.
struct RfSet {
    candidates: Vec<CMat>,
    feedback: RfFeedback,
}

fn load_rf(src: &RfSource, sys: &SystemConfig) -> Result<RfCodebook> {
    let cb = match src {
        RfSource::Beamsteering { size, phase_bits } => {
            beamsteering_vcb(sys.n_bs, *size, sys.antenna_spacing, *phase_bits).map_err(to_config)?
        }
        RfSource::File { path } => Codebook::load(path)
            .and_then(Codebook::into_rf)
            .map_err(|e| Error::Config(e.to_string()))?,
    };
    if cb.n != sys.n_bs {
        return Err(Error::Config(format!(
            "RF codebook has {} antennas, system has n_bs={}",
            cb.n, sys.n_bs
        )));
    }
    Ok(cb)
}

fn vcb_matrix(src: &RfSource, sys: &SystemConfig) -> Result<(CMat, usize)> {
    let cb = load_rf(src, sys)?;
    if cb.kind != RfKind::Vector {
        return Err(Error::Config("greedy schemes need a vector codebook".into()));
    }
    if cb.len() < sys.n_rf {
        return Err(Error::Config(format!(
            "vector codebook of size {} cannot fill {} RF chains",
            cb.len(),
            sys.n_rf
        )));
    }
    Ok((cb.stacked(), cb.len()))
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn rf_set(src: &RfSource, sys: &SystemConfig) -> Result<RfSet> {
    let cb = load_rf(src, sys)?;
    match cb.kind {
        RfKind::Matrix => {
            if cb.r != sys.n_rf {
                return Err(Error::Config(format!(
                    "RF codebook has {} columns, system has n_rf={}",
                    cb.r, sys.n_rf
                )));
            }
            Ok(RfSet {
                candidates: cb.matrices(),
                feedback: RfFeedback::Matrix {
                    codebook_size: cb.len(),
                },
            })
        }
        RfKind::Vector => {
            if cb.len() < sys.n_rf || binomial(cb.len(), sys.n_rf) > MAX_SUBSETS {
                return Err(Error::Config(format!(
                    "vector codebook of size {} gives an unusable number of {}-subsets",
                    cb.len(),
                    sys.n_rf
                )));
            }
            let stacked = cb.stacked();
            let candidates = subsets(cb.len(), sys.n_rf)
                .into_iter()
                .map(|s| CMat::from_fn(sys.n_bs, s.len(), |i, j| stacked[(i, s[j])]))
                .collect();
            Ok(RfSet {
                candidates,
                feedback: RfFeedback::Vector {
                    codebook_size: cb.len(),
                },
            })
        }
    }
}

fn load_bb(path: &std::path::Path, sys: &SystemConfig) -> Result<BasebandCodebook> {
    let bb = Codebook::load(path)
        .and_then(Codebook::into_baseband)
        .map_err(|e| Error::Config(e.to_string()))?;
    if bb.n != sys.n_rf || bb.r != sys.n_s {
        return Err(Error::Config(format!(
            "baseband codebook is {}x{}, system needs {}x{}",
            bb.n, bb.r, sys.n_rf, sys.n_s
        )));
    }
    Ok(bb)
}

fn bits(rf: RfFeedback, sys: &SystemConfig, bb: Option<usize>) -> Result<Option<u64>> {
    Ok(Some(feedback_bits(rf, sys.n_rf, sys.n_s, sys.k_sub, bb)?.bits))
}

fn prepare(cfg: &ExperimentConfig, sys: &SystemConfig) -> Result<Vec<Prepared>> {
    let bb_size = cfg.bb_codebook_size;
    cfg.schemes
        .iter()
        .map(|s| {
            let (plan, bits) = match &s.kind {
                SchemeKind::UnconstrainedSvd { mode } => (Plan::Svd(*mode), None),
                SchemeKind::OptimalHybridExhaustive { mode, codebook } => {
                    let set = rf_set(codebook, sys)?;
                    let b = bits(set.feedback, sys, bb_size)?;
                    (Plan::Exhaustive(*mode, set.candidates), b)
                }
                SchemeKind::ApproxGsHp { vcb, options } => {
                    let (m, size) = vcb_matrix(vcb, sys)?;
                    (
                        Plan::Approx(m, *options),
                        bits(RfFeedback::Vector { codebook_size: size }, sys, bb_size)?,
                    )
                }
                SchemeKind::DgHp { vcb } => {
                    let (m, size) = vcb_matrix(vcb, sys)?;
                    (
                        Plan::Dg(m),
                        bits(RfFeedback::Vector { codebook_size: size }, sys, bb_size)?,
                    )
                }
                SchemeKind::GsHp { vcb, eigen } => {
                    let (m, size) = vcb_matrix(vcb, sys)?;
                    (
                        Plan::Gs(m, *eigen),
                        bits(RfFeedback::Vector { codebook_size: size }, sys, bb_size)?,
                    )
                }
                SchemeKind::TrainedCodebookLimitedFeedback { rf, bb } => {
                    let set = rf_set(rf, sys)?;
                    let bb = match bb {
                        Some(p) if sys.n_s < sys.n_rf => Some(load_bb(p, sys)?.codewords),
                        _ => None,
                    };
                    let b = bits(set.feedback, sys, bb.as_ref().map(Vec::len))?;
                    (Plan::Limited(set.candidates, bb), b)
                }
            };
            Ok(Prepared {
                label: s.label(),
                plan,
                bits,
            })
        })
        .collect()
}

fn to_config(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}

/// Receiver-side selection of one baseband codeword per subcarrier for a fixed RF codeword.
fn quantized_baseband(
    f_rf: &CMat,
    bb: &[CMat],
    channel: &WidebandChannel,
    rho: f64,
    n_s: usize,
) -> Result<HybridPrecoder> {
    let inv = inverse_sqrt_gram(f_rf)?;
    let q = f_rf * &inv;
    let scale = rho / n_s as f64;
    let mut f_bb = Vec::with_capacity(channel.k());
    let mut equivalent = Vec::with_capacity(channel.k());
    for h in channel.matrices() {
        let hq = h * &q;
        let scores: Vec<f64> = bb
            .iter()
            .map(|g| log2_one_plus(hermitian_eigenvalues(&gram(&(&hq * g))), scale))
            .collect();
        let g = &bb[argmax_first(&scores).0];
        f_bb.push(&inv * g);
        equivalent.push(g.clone());
    }
    Ok(HybridPrecoder {
        f_rf: f_rf.clone(),
        f_bb,
        equivalent: Some(equivalent),
    })
}

fn evaluate(plan: &Plan, channel: &WidebandChannel, sys: &SystemConfig, rho: f64) -> Result<f64> {
    let (n_rf, n_s) = (sys.n_rf, sys.n_s);
    match plan {
        Plan::Svd(mode) => unconstrained_mi(channel, rho, n_s, *mode),
        Plan::Exhaustive(mode, cands) => Ok(exhaustive_rf_search(cands, channel, rho, n_s, *mode)?.1),
        Plan::Approx(vcb, opts) => {
            let (p, _) = approx_gs_hp(vcb, channel, n_rf, n_s, rho, *opts)?;
            Ok(mutual_information(channel, &p, rho))
        }
        Plan::Dg(vcb) => Ok(dg_hp(vcb, channel, rho, n_rf, n_s)?.mi),
        Plan::Gs(vcb, eigen) => Ok(gs_hp(vcb, channel, rho, n_rf, n_s, *eigen)?.mi),
        Plan::Limited(cands, bb) => {
            let (best, mi) = exhaustive_rf_search(cands, channel, rho, n_s, PowerConstraint::Unitary)?;
            match bb {
                Some(bb) => {
                    let p = quantized_baseband(&cands[best], bb, channel, rho, n_s)?;
                    Ok(mutual_information(channel, &p, rho))
                }
                None => Ok(mi),
            }
        }
    }
}

struct GridPoint {
    param: Option<usize>,
    system: SystemConfig,
    stats: ChannelStats,
    schemes: Vec<Prepared>,
}

fn run_grid(cfg: &ExperimentConfig, points: &[GridPoint]) -> Result<SweepResult> {
    let rhos: Vec<f64> = cfg.snr_grid_db.iter().map(|&s| db_to_linear(s)).collect();
    let mut rows = Vec::new();
    for pt in points {
        let n_cells = pt.schemes.len() * rhos.len();
        // Realization i uses the same channel for every scheme and SNR.
        let per_real: Vec<Vec<(f64, f64)>> = (0..cfg.n_realizations as u64)
            .into_par_iter()
            .map(|i| {
                let ch = generate_channel(&pt.system, &pt.stats, cfg.seed, i)?;
                let mut out = Vec::with_capacity(n_cells);
                for s in &pt.schemes {
                    for &rho in &rhos {
                        let t0 = cfg.timing.then(Instant::now);
                        let mi = evaluate(&s.plan, &ch, &pt.system, rho)?;
                        let ms = t0.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3);
                        out.push((mi, ms));
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        for (si, s) in pt.schemes.iter().enumerate() {
            for (ri, &snr) in cfg.snr_grid_db.iter().enumerate() {
                let cell = si * rhos.len() + ri;
                let values: Vec<f64> = per_real.iter().map(|r| r[cell].0).collect();
                let wall_ms = per_real.iter().map(|r| r[cell].1).sum();
                let (mean_se, stderr) = mean_stderr(&values);
                rows.push(SweepRow {
                    scheme: s.label.clone(),
                    snr_db: snr,
                    param: pt.param,
                    mean_se,
                    stderr,
                    n: values.len(),
                    feedback_bits: s.bits,
                    wall_ms,
                });
            }
        }
    }
    Ok(SweepResult { rows })
}

/// Spectral efficiency of every configured scheme over the SNR grid.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let point = GridPoint {
        param: None,
        system: cfg.system.clone(),
        stats: cfg.channel_stats.clone(),
        schemes: prepare(cfg, &cfg.system)?,
    };
    run_grid(cfg, &[point])
}

/// Sweep over the number of clusters with one ray per cluster; `param` is the cluster count.
pub fn cluster_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.clusters_grid.is_empty() {
        return Err(Error::Config("clusters_grid is empty".into()));
    }
    let mut points = Vec::with_capacity(cfg.clusters_grid.len());
    for &l in &cfg.clusters_grid {
        let stats = ChannelStats {
            clusters: l,
            rays: 1,
            ..cfg.channel_stats.clone()
        };
        stats.validate().map_err(to_config)?;
        points.push(GridPoint {
            param: Some(l),
            system: cfg.system.clone(),
            stats,
            schemes: prepare(cfg, &cfg.system)?,
        });
    }
    run_grid(cfg, &points)
}

/// Sweep over the number of RF chains at fixed `n_s`; `param` is the RF-chain count.
/// Counts below `n_s` are skipped with a warning.
pub fn rf_chain_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut points = Vec::new();
    for &n_rf in &cfg.nrf_grid {
        if n_rf < cfg.system.n_s {
            tracing::warn!(
                n_rf,
                n_s = cfg.system.n_s,
                "skipping RF-chain count below stream count"
            );
            continue;
        }
        let system = SystemConfig {
            n_rf,
            ..cfg.system.clone()
        };
        system.validate().map_err(to_config)?;
        let schemes = prepare(cfg, &system)?;
        points.push(GridPoint {
            param: Some(n_rf),
            system,
            stats: cfg.channel_stats.clone(),
            schemes,
        });
    }
    if points.is_empty() {
        return Err(Error::Config("nrf_grid has no entry with n_rf >= n_s".into()));
    }
    run_grid(cfg, &points)
}

#[derive(Debug, Clone)]
pub struct TrainingOutput {
    pub codebook: Codebook,
    pub trace: DistortionTrace,
}

fn training_inputs(
    sys: &SystemConfig,
    stats: &ChannelStats,
    n_train: usize,
    seed: u64,
) -> Result<Vec<WidebandChannel>> {
    sys.validate().map_err(to_config)?;
    stats.validate().map_err(to_config)?;
    if n_train == 0 {
        return Err(Error::Config("n_train must be at least 1".into()));
    }
    training_channels(sys, stats, n_train, seed ^ TRAINING_SALT)
}

fn lloyd_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    realization_rng(seed ^ TRAINING_SALT, u64::MAX)
}

/// Trains an RF codebook: `n_rf`-column matrices, or vectors when `cfg.vector` is set.
pub fn train_rf(cfg: &TrainRfConfig) -> Result<TrainingOutput> {
    if cfg.lloyd.n_cb == 0 {
        return Err(Error::Config("lloyd.n_cb must be at least 1".into()));
    }
    if !(1..=24).contains(&cfg.phase_bits) {
        return Err(Error::Config(format!(
            "phase_bits {} outside 1..=24",
            cfg.phase_bits
        )));
    }
    let channels = training_inputs(&cfg.system, &cfg.channel_stats, cfg.n_train, cfg.seed)?;
    let mut rng = lloyd_rng(cfg.seed);
    let (cb, trace) = if cfg.vector {
        train_rf_vector_codebook(&cfg.lloyd, cfg.phase_bits, &channels, &mut rng)?
    } else {
        let training = TrainingSet::from_channels(&channels, cfg.system.n_s)?;
        train_rf_codebook(&cfg.lloyd, cfg.phase_bits, cfg.system.n_rf, &training, &mut rng)?
    };
    Ok(TrainingOutput {
        codebook: Codebook::Rf(cb),
        trace,
    })
}

/// Trains a baseband codebook on top of the configured RF codebook.
pub fn train_baseband(cfg: &TrainBbConfig) -> Result<TrainingOutput> {
    if cfg.lloyd.n_cb == 0 {
        return Err(Error::Config("lloyd.n_cb must be at least 1".into()));
    }
    if cfg.system.n_s >= cfg.system.n_rf {
        return Err(Error::Config(format!(
            "baseband codebooks need n_s < n_rf (n_s={}, n_rf={})",
            cfg.system.n_s, cfg.system.n_rf
        )));
    }
    let rf = load_rf(
        &RfSource::File {
            path: cfg.rf_codebook.clone(),
        },
        &cfg.system,
    )?;
    if rf.kind != RfKind::Matrix || rf.r != cfg.system.n_rf {
        return Err(Error::Config(format!(
            "baseband training needs an RF matrix codebook with {} columns",
            cfg.system.n_rf
        )));
    }
    let channels = training_inputs(&cfg.system, &cfg.channel_stats, cfg.n_train, cfg.seed)?;
    let training = baseband_training_set(&rf, &channels, cfg.system.n_s, db_to_linear(cfg.train_snr_db))?;
    let (cb, trace) = train_baseband_codebook(&cfg.lloyd, &training, &mut lloyd_rng(cfg.seed))?;
    Ok(TrainingOutput {
        codebook: Codebook::Baseband(cb),
        trace,
    })
}
