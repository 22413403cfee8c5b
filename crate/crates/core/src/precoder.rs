//! Optimal baseband precoding for a fixed RF precoder, and mutual information.
//!
//! For an RF matrix `F_RF` with orthonormal factor `Q = F_RF (F_RF* F_RF)^{-1/2}`,
//! the best baseband precoder on subcarrier `k` is built from the SVD of the
//! effective channel `Σ[k] V[k]* Q`: its leading `N_S` right singular vectors,
//! optionally water-filled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::WidebandChannel;
use crate::error::{Error, Result};
use crate::linalg::{
    ensure_full_column_rank, gram, hermitian_eigenvalues, hermitian_power, log2_one_plus, singular_values,
    thin_svd, CMat, ThinSvd,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerConstraint {
    /// `Σ_k ‖F_RF F[k]‖_F² = K·N_S`.
    Total,
    /// `‖F_RF F[k]‖_F² = N_S` on every subcarrier.
    PerSubcarrierTotal,
    /// `F_RF F[k]` semi-unitary on every subcarrier.
    Unitary,
}

impl PowerConstraint {
    pub fn label(self) -> &'static str {
        match self {
            PowerConstraint::Total => "total",
            PowerConstraint::PerSubcarrierTotal => "per_subcarrier",
            PowerConstraint::Unitary => "unitary",
        }
    }
}

/// RF precoder plus one baseband matrix per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    pub f_rf: CMat,
    pub f_bb: Vec<CMat>,
    /// `(F_RF* F_RF)^{1/2} F[k]`, when computed.
    pub equivalent: Option<Vec<CMat>>,
}

impl HybridPrecoder {
    pub fn n_s(&self) -> usize {
        self.f_bb.first().map_or(0, |f| f.ncols())
    }

    pub fn k(&self) -> usize {
        self.f_bb.len()
    }

    /// `F_RF F[k]`.
    pub fn composite(&self, k: usize) -> CMat {
        &self.f_rf * &self.f_bb[k]
    }

    /// `Σ_k ‖F_RF F[k]‖_F²`.
    pub fn total_power(&self) -> f64 {
        (0..self.k())
            .map(|k| crate::linalg::frob_sq(&self.composite(k)))
            .sum()
    }
}

/// SVD of `Σ[k] V[k]* Q` for an orthonormal RF factor `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSvd {
    pub u_bar: CMat,
    pub sigma_bar: Vec<f64>,
    pub v_bar: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillResult {
    /// `Λ²[k]_{i,i}`, indexed `[k][i]`.
    pub power: Vec<Vec<f64>>,
    /// One level for the total constraint, one per subcarrier otherwise.
    pub water_level: Vec<f64>,
    /// Set when every gain in some budget group is zero, so the budget cannot be met.
    pub degenerate: bool,
}

impl WaterfillResult {
    /// Diagonal of `Λ[k]`.
    pub fn lambda(&self, k: usize) -> Vec<f64> {
        self.power[k].iter().map(|p| p.sqrt()).collect()
    }
}

/// `F_RF (F_RF* F_RF)^{-1/2}`.
pub fn orthonormal_factor(f_rf: &CMat) -> Result<CMat> {
    Ok(f_rf * inverse_sqrt_gram(f_rf)?)
}

/// `(F* F)^{-1/2}` after checking full column rank.
pub fn inverse_sqrt_gram(f: &CMat) -> Result<CMat> {
    ensure_full_column_rank(f)?;
    Ok(hermitian_power(&gram(f), -0.5))
}

pub fn effective_svd(h_svd: &ThinSvd, f_rf: &CMat) -> Result<EffectiveSvd> {
    let q = orthonormal_factor(f_rf)?;
    Ok(effective_svd_with(h_svd, &q))
}

fn effective_svd_with(h_svd: &ThinSvd, q: &CMat) -> EffectiveSvd {
    let svd = thin_svd(&(h_svd.sigma_vh() * q));
    EffectiveSvd {
        u_bar: svd.u,
        sigma_bar: svd.sigma,
        v_bar: svd.v,
    }
}

/// Water-filling over per-subcarrier stream gains `gains[k][i] = σ̄²`.
///
/// The water level is found exactly: with the positive-gain entries sorted by
/// their floor `N_S/(ρ·g)`, the active set is the longest prefix whose level
/// `(budget + Σ floors)/m` lies above its own last floor.
pub fn waterfill(gains: &[Vec<f64>], rho: f64, n_s: usize, mode: PowerConstraint) -> Result<WaterfillResult> {
    if !(rho > 0.0) {
        return Err(Error::invalid("SNR must be positive"));
    }
    if n_s == 0 {
        return Err(Error::invalid("need at least one stream"));
    }
    if gains.iter().flatten().any(|g| !(*g >= 0.0)) {
        return Err(Error::invalid("gains must be non-negative"));
    }
    match mode {
        PowerConstraint::Unitary => Err(Error::invalid("unitary constraint has no power loading")),
        PowerConstraint::Total => {
            let flat: Vec<f64> = gains.iter().flatten().copied().collect();
            let budget = (gains.len() * n_s) as f64;
            let (p, level, degenerate) = fill(&flat, rho, n_s, budget);
            let mut power = Vec::with_capacity(gains.len());
            let mut at = 0;
            for g in gains {
                power.push(p[at..at + g.len()].to_vec());
                at += g.len();
            }
            Ok(WaterfillResult {
                power,
                water_level: vec![level],
                degenerate,
            })
        }
        PowerConstraint::PerSubcarrierTotal => {
            let mut power = Vec::with_capacity(gains.len());
            let mut water_level = Vec::with_capacity(gains.len());
            let mut degenerate = false;
            for g in gains {
                let (p, level, deg) = fill(g, rho, n_s, n_s as f64);
                power.push(p);
                water_level.push(level);
                degenerate |= deg;
            }
            Ok(WaterfillResult {
                power,
                water_level,
                degenerate,
            })
        }
    }
}

fn fill(gains: &[f64], rho: f64, n_s: usize, budget: f64) -> (Vec<f64>, f64, bool) {
    let mut floors: Vec<(f64, usize)> = gains
        .iter()
        .enumerate()
        .filter(|(_, g)| **g > 0.0)
        .map(|(i, g)| (n_s as f64 / (rho * g), i))
        .collect();
    if floors.is_empty() {
        tracing::warn!("water-filling on an all-zero gain set; no power allocated");
        return (vec![0.0; gains.len()], 0.0, true);
    }
    floors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut prefix = 0.0;
    let mut level = 0.0;
    let mut active = 0;
    for (m, (floor, _)) in floors.iter().enumerate() {
        let candidate = (budget + prefix + floor) / (m + 1) as f64;
        if candidate <= *floor {
            break;
        }
        prefix += floor;
        level = candidate;
        active = m + 1;
    }
    let mut power = vec![0.0; gains.len()];
    for &(floor, i) in &floors[..active] {
        power[i] = (level - floor).max(0.0);
    }
    (power, level, false)
}

struct SubcarrierPlan {
    v_s: CMat,
    gains: Vec<f64>,
}

fn plan(f_rf: &CMat, channel: &WidebandChannel, n_s: usize) -> Result<(CMat, Vec<SubcarrierPlan>)> {
    check_dims(f_rf, channel, n_s)?;
    let inv_sqrt = inverse_sqrt_gram(f_rf)?;
    let q = f_rf * &inv_sqrt;
    let plans = channel
        .svds()
        .iter()
        .map(|svd| {
            let eff = effective_svd_with(svd, &q);
            let mut v_s = CMat::zeros(eff.v_bar.nrows(), n_s);
            let avail = eff.v_bar.ncols().min(n_s);
            v_s.columns_mut(0, avail).copy_from(&eff.v_bar.columns(0, avail));
            let gains = (0..n_s)
                .map(|i| eff.sigma_bar.get(i).map_or(0.0, |s| s * s))
                .collect();
            SubcarrierPlan { v_s, gains }
        })
        .collect();
    Ok((inv_sqrt, plans))
}

fn check_dims(f_rf: &CMat, channel: &WidebandChannel, n_s: usize) -> Result<()> {
    if f_rf.nrows() != channel.n_bs() {
        return Err(Error::invalid(format!(
            "RF precoder has {} rows, channel has {} transmit antennas",
            f_rf.nrows(),
            channel.n_bs()
        )));
    }
    let max_streams = f_rf.ncols().min(channel.n_ms()).min(channel.n_bs());
    if n_s == 0 || n_s > max_streams {
        return Err(Error::invalid(format!(
            "stream count {n_s} outside 1..={max_streams}"
        )));
    }
    Ok(())
}

/// Optimal baseband precoders for `f_rf` under the given power constraint.
pub fn optimal_baseband(
    f_rf: &CMat,
    channel: &WidebandChannel,
    rho: f64,
    n_s: usize,
    mode: PowerConstraint,
) -> Result<HybridPrecoder> {
    let (inv_sqrt, plans) = plan(f_rf, channel, n_s)?;
    let equivalent: Vec<CMat> = match mode {
        PowerConstraint::Unitary => plans.into_iter().map(|p| p.v_s).collect(),
        _ => {
            let gains: Vec<Vec<f64>> = plans.iter().map(|p| p.gains.clone()).collect();
            let wf = waterfill(&gains, rho, n_s, mode)?;
            plans
                .into_iter()
                .enumerate()
                .map(|(k, p)| {
                    let mut g = p.v_s;
                    for (i, lam) in wf.lambda(k).into_iter().enumerate() {
                        g.column_mut(i).iter_mut().for_each(|z| *z *= lam);
                    }
                    g
                })
                .collect()
        }
    };
    let f_bb = equivalent.iter().map(|g| &inv_sqrt * g).collect();
    Ok(HybridPrecoder {
        f_rf: f_rf.clone(),
        f_bb,
        equivalent: Some(equivalent),
    })
}

/// `(1/K) Σ_k log2 det(I + ρ/N_S · H[k] F_RF F[k] F[k]* F_RF* H[k]*)`.
///
/// Evaluated through the eigenvalues of the `N_S × N_S` Gram matrix of `H[k] F_RF F[k]`.
pub fn mutual_information(channel: &WidebandChannel, p: &HybridPrecoder, rho: f64) -> f64 {
    assert_eq!(channel.k(), p.k(), "subcarrier count mismatch");
    let n_s = p.n_s();
    let total: f64 = channel
        .matrices()
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let a = h * p.composite(k);
            log2_one_plus(hermitian_eigenvalues(&gram(&a)), rho / n_s as f64)
        })
        .sum();
    total / channel.k() as f64
}

/// Mutual information achieved by the optimal baseband for `f_rf`, in closed form.
pub fn hybrid_mi_for_rf(
    f_rf: &CMat,
    channel: &WidebandChannel,
    rho: f64,
    n_s: usize,
    mode: PowerConstraint,
) -> Result<f64> {
    check_dims(f_rf, channel, n_s)?;
    let q = orthonormal_factor(f_rf)?;
    let gains: Vec<Vec<f64>> = channel
        .svds()
        .iter()
        .map(|svd| {
            let s = singular_values(&(svd.sigma_vh() * &q));
            (0..n_s).map(|i| s.get(i).map_or(0.0, |x| x * x)).collect()
        })
        .collect();
    loaded_mi(&gains, rho, n_s, mode)
}

/// `(1/K) Σ_k Σ_i log2(1 + ρ/N_S · g[k][i] · p[k][i])` with `p` from the constraint.
pub(crate) fn loaded_mi(gains: &[Vec<f64>], rho: f64, n_s: usize, mode: PowerConstraint) -> Result<f64> {
    let scale = rho / n_s as f64;
    let total: f64 = match mode {
        PowerConstraint::Unitary => gains
            .iter()
            .map(|g| log2_one_plus(g.iter().copied(), scale))
            .sum(),
        _ => {
            let wf = waterfill(gains, rho, n_s, mode)?;
            gains
                .iter()
                .zip(&wf.power)
                .map(|(g, p)| log2_one_plus(g.iter().zip(p).map(|(g, p)| g * p), scale))
                .sum()
        }
    };
    Ok(total / gains.len() as f64)
}

/// Best codeword of an RF matrix codebook; ties go to the lowest index.
pub fn exhaustive_rf_search(
    codebook: &[CMat],
    channel: &WidebandChannel,
    rho: f64,
    n_s: usize,
    mode: PowerConstraint,
) -> Result<(usize, f64)> {
    if codebook.is_empty() {
        return Err(Error::invalid("empty RF codebook"));
    }
    channel.svds();
    let scores = codebook
        .par_iter()
        .map(|f| hybrid_mi_for_rf(f, channel, rho, n_s, mode))
        .collect::<Result<Vec<f64>>>()?;
    Ok(argmax_first(&scores))
}

pub(crate) fn argmax_first(scores: &[f64]) -> (usize, f64) {
    let mut best = (0, scores[0]);
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// Mutual information of unconstrained per-subcarrier SVD precoding with `n_s` streams.
pub fn unconstrained_mi(
    channel: &WidebandChannel,
    rho: f64,
    n_s: usize,
    mode: PowerConstraint,
) -> Result<f64> {
    let max = channel.n_ms().min(channel.n_bs());
    if n_s == 0 || n_s > max {
        return Err(Error::invalid(format!("stream count {n_s} outside 1..={max}")));
    }
    let gains: Vec<Vec<f64>> = channel
        .svds()
        .iter()
        .map(|svd| svd.sigma[..n_s].iter().map(|s| s * s).collect())
        .collect();
    loaded_mi(&gains, rho, n_s, mode)
}

/// `G[k] = (F_RF* F_RF)^{1/2} F[k]`.
pub fn equivalent_baseband_split(f_rf: &CMat, f_bb: &[CMat]) -> Result<Vec<CMat>> {
    ensure_full_column_rank(f_rf)?;
    let sqrt = hermitian_power(&gram(f_rf), 0.5);
    Ok(f_bb.iter().map(|f| &sqrt * f).collect())
}
