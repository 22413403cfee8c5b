//! Geometric wideband cluster channel model.
//!
//! A channel realization is a set of scattering clusters, each made of rays with a
//! delay, an angle of arrival/departure and a complex gain. Rays are pulse-shaped
//! with a raised-cosine filter onto `D` delay taps, and the taps are transformed
//! to `K` per-subcarrier matrices `H[k] = Σ_d H_d · exp(-j2πkd/K)`.
//!
//! The sampling period is normalized to 1, so every delay is in samples.
//! Subcarriers are indexed `0..K`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, thin_svd, CMat, ThinSvd, C64};

/// Antenna/RF-chain/OFDM dimensions and link parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_bs: usize,
    pub n_ms: usize,
    pub n_rf: usize,
    pub n_s: usize,
    /// Number of subcarriers `K`.
    pub k_sub: usize,
    /// Cyclic prefix length `D`; also the number of delay taps.
    pub cp_len: usize,
    pub snr_db: f64,
    /// Element spacing in wavelengths.
    pub antenna_spacing: f64,
    /// Raised-cosine roll-off β.
    pub rolloff: f64,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_bs: 32,
            n_ms: 8,
            n_rf: 3,
            n_s: 3,
            k_sub: 64,
            cp_len: 16,
            snr_db: 0.0,
            antenna_spacing: 0.5,
            rolloff: 1.0,
            rng_seed: 0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_bs", self.n_bs),
            ("n_ms", self.n_ms),
            ("n_rf", self.n_rf),
            ("n_s", self.n_s),
            ("k_sub", self.k_sub),
            ("cp_len", self.cp_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.n_s > self.n_rf || self.n_rf > self.n_bs.min(self.n_ms) {
            return Err(Error::invalid(format!(
                "need n_s <= n_rf <= min(n_bs, n_ms), got n_s={} n_rf={} n_bs={} n_ms={}",
                self.n_s, self.n_rf, self.n_bs, self.n_ms
            )));
        }
        if self.cp_len >= self.k_sub {
            return Err(Error::invalid(format!(
                "cp_len ({}) must be smaller than k_sub ({})",
                self.cp_len, self.k_sub
            )));
        }
        if !(self.antenna_spacing > 0.0) {
            return Err(Error::invalid("antenna_spacing must be positive"));
        }
        check_rolloff(self.rolloff)?;
        Ok(())
    }

    /// Linear SNR ρ.
    pub fn rho(&self) -> f64 {
        db_to_linear(self.snr_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// How ray delays are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayPolicy {
    /// Cluster delay uniform on `[0, D]`, each ray offset by a uniform `[0, ray_spread)` relative delay.
    ClusterUniform { ray_spread: f64 },
    /// Every ray gets its own delay uniform on `[0, D]`; cluster delay is 0.
    RayUniform,
}

/// Statistics of the cluster channel generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelStats {
    pub clusters: usize,
    pub rays: usize,
    /// Per-cluster angle spread in degrees (standard deviation of the Laplacian ray shifts).
    pub angle_spread_deg: f64,
    pub delay_policy: DelayPolicy,
    pub path_loss: f64,
}

impl Default for ChannelStats {
    fn default() -> Self {
        ChannelStats {
            clusters: 6,
            rays: 5,
            angle_spread_deg: 10.0,
            delay_policy: DelayPolicy::ClusterUniform { ray_spread: 1.0 },
            path_loss: 1.0,
        }
    }
}

impl ChannelStats {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.rays == 0 {
            return Err(Error::invalid("need at least one cluster and one ray"));
        }
        if !(self.path_loss > 0.0) {
            return Err(Error::invalid("path_loss must be positive"));
        }
        if self.angle_spread_deg < 0.0 {
            return Err(Error::invalid("angle spread must be non-negative"));
        }
        if let DelayPolicy::ClusterUniform { ray_spread } = self.delay_policy {
            if ray_spread < 0.0 {
                return Err(Error::invalid("ray delay spread must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub rel_delay: f64,
    pub aoa_shift: f64,
    pub aod_shift: f64,
    pub gain: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub delay: f64,
    pub aoa: f64,
    pub aod: f64,
    pub rays: Vec<Ray>,
}

/// Geometric parameters of one channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub path_loss: f64,
    pub clusters: Vec<Cluster>,
}

impl ClusterSet {
    pub fn ray_count(&self) -> usize {
        self.clusters.iter().map(|cl| cl.rays.len()).sum()
    }
}

/// Uniform linear array response `(1/√n)·exp(j2π·spacing·m·sin(angle))`, `m = 0..n`.
pub fn array_response_ula(angle: f64, n: usize, spacing: f64) -> Result<Vec<C64>> {
    if n == 0 {
        return Err(Error::invalid("array must have at least one element"));
    }
    if !(spacing > 0.0) {
        return Err(Error::invalid("antenna spacing must be positive"));
    }
    Ok(steering(angle, n, spacing))
}

pub(crate) fn steering(angle: f64, n: usize, spacing: f64) -> Vec<C64> {
    let amp = 1.0 / (n as f64).sqrt();
    let step = 2.0 * PI * spacing * angle.sin();
    (0..n).map(|m| C64::from_polar(amp, step * m as f64)).collect()
}

fn check_rolloff(rolloff: f64) -> Result<()> {
    if rolloff > 0.0 && rolloff <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "roll-off must lie in (0, 1], got {rolloff}"
        )))
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Raised-cosine pulse with unit symbol period, evaluated at `t` samples.
pub fn raised_cosine(t: f64, rolloff: f64) -> Result<f64> {
    check_rolloff(rolloff)?;
    Ok(rc_pulse(t, rolloff))
}

pub(crate) fn rc_pulse(t: f64, beta: f64) -> f64 {
    // cos(πβt)/(1-(2βt)²) rewritten with w = 1-|2βt| as sin(πw/2)/(w(2-w)),
    // which has no cancellation near the removable singularity |t| = 1/(2β).
    let w = 1.0 - (2.0 * beta * t).abs();
    if w.abs() < 1e-12 {
        return PI / 4.0 * sinc(1.0 / (2.0 * beta));
    }
    sinc(t) * (PI * w / 2.0).sin() / (w * (2.0 - w))
}

fn laplacian<R: Rng + ?Sized>(rng: &mut R, std_dev: f64) -> f64 {
    if std_dev == 0.0 {
        return 0.0;
    }
    let scale = std_dev / std::f64::consts::SQRT_2;
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Draws one cluster set. Ray gains are `CN(0, 1/(L·R))`; absolute delays are clamped to `[0, max_delay]`.
pub fn sample_cluster_set<R: Rng + ?Sized>(
    stats: &ChannelStats,
    max_delay: f64,
    rng: &mut R,
) -> Result<ClusterSet> {
    stats.validate()?;
    let spread = stats.angle_spread_deg.to_radians();
    let gain_std = (1.0 / (2.0 * (stats.clusters * stats.rays) as f64)).sqrt();
    let mut clusters = Vec::with_capacity(stats.clusters);
    for _ in 0..stats.clusters {
        let delay = match stats.delay_policy {
            DelayPolicy::ClusterUniform { .. } => rng.random::<f64>() * max_delay,
            DelayPolicy::RayUniform => 0.0,
        };
        let aoa = rng.random::<f64>() * 2.0 * PI;
        let aod = rng.random::<f64>() * 2.0 * PI;
        let mut rays = Vec::with_capacity(stats.rays);
        for _ in 0..stats.rays {
            let rel = match stats.delay_policy {
                DelayPolicy::ClusterUniform { ray_spread } => rng.random::<f64>() * ray_spread,
                DelayPolicy::RayUniform => rng.random::<f64>() * max_delay,
            };
            let rel_delay = rel.min(max_delay - delay).max(0.0);
            let aoa_shift = laplacian(rng, spread);
            let aod_shift = laplacian(rng, spread);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            rays.push(Ray {
                rel_delay,
                aoa_shift,
                aod_shift,
                gain: c(gain_std * re, gain_std * im),
            });
        }
        clusters.push(Cluster {
            delay,
            aoa,
            aod,
            rays,
        });
    }
    Ok(ClusterSet {
        path_loss: stats.path_loss,
        clusters,
    })
}

/// Delay-`d` MIMO channel matrix (`n_ms × n_bs`).
pub fn delay_tap(cs: &ClusterSet, d: usize, cfg: &SystemConfig) -> Result<CMat> {
    if d >= cfg.cp_len {
        return Err(Error::invalid(format!("tap index {d} outside 0..{}", cfg.cp_len)));
    }
    check_rolloff(cfg.rolloff)?;
    let rays = ray_responses(cs, cfg);
    Ok(tap_from_rays(&rays, d as f64, cs, cfg))
}

/// All `cp_len` delay taps.
pub fn delay_taps(cs: &ClusterSet, cfg: &SystemConfig) -> Result<Vec<CMat>> {
    check_rolloff(cfg.rolloff)?;
    let rays = ray_responses(cs, cfg);
    Ok((0..cfg.cp_len)
        .map(|d| tap_from_rays(&rays, d as f64, cs, cfg))
        .collect())
}

struct RayResponse {
    gain: C64,
    delay: f64,
    a_ms: Vec<C64>,
    a_bs_conj: Vec<C64>,
}

fn ray_responses(cs: &ClusterSet, cfg: &SystemConfig) -> Vec<RayResponse> {
    cs.clusters
        .iter()
        .flat_map(|cl| {
            cl.rays.iter().map(move |ray| RayResponse {
                gain: ray.gain,
                delay: cl.delay + ray.rel_delay,
                a_ms: steering(cl.aoa - ray.aoa_shift, cfg.n_ms, cfg.antenna_spacing),
                a_bs_conj: steering(cl.aod - ray.aod_shift, cfg.n_bs, cfg.antenna_spacing)
                    .into_iter()
                    .map(|z| z.conj())
                    .collect(),
            })
        })
        .collect()
}

fn tap_from_rays(rays: &[RayResponse], d: f64, cs: &ClusterSet, cfg: &SystemConfig) -> CMat {
    let norm = ((cfg.n_bs * cfg.n_ms) as f64 / cs.path_loss).sqrt();
    let mut tap = CMat::zeros(cfg.n_ms, cfg.n_bs);
    for ray in rays {
        let coef = ray.gain * (norm * rc_pulse(d - ray.delay, cfg.rolloff));
        if coef == c(0.0, 0.0) {
            continue;
        }
        for (j, b) in ray.a_bs_conj.iter().enumerate() {
            let cb = coef * b;
            for (i, a) in ray.a_ms.iter().enumerate() {
                tap[(i, j)] += a * cb;
            }
        }
    }
    tap
}

/// Per-subcarrier channel matrices with lazily cached thin SVDs.
#[derive(Debug, Clone)]
pub struct WidebandChannel {
    per_subcarrier: Vec<CMat>,
    svds: OnceLock<Vec<ThinSvd>>,
}

impl PartialEq for WidebandChannel {
    fn eq(&self, other: &Self) -> bool {
        self.per_subcarrier == other.per_subcarrier
    }
}

impl WidebandChannel {
    pub fn new(per_subcarrier: Vec<CMat>) -> Result<Self> {
        let first = per_subcarrier
            .first()
            .ok_or_else(|| Error::invalid("channel needs at least one subcarrier"))?;
        let shape = first.shape();
        if per_subcarrier.iter().any(|h| h.shape() != shape) {
            return Err(Error::invalid("subcarrier matrices differ in shape"));
        }
        Ok(WidebandChannel {
            per_subcarrier,
            svds: OnceLock::new(),
        })
    }

    /// Same matrix on every subcarrier.
    pub fn flat(h: CMat, k_sub: usize) -> Result<Self> {
        Self::new(vec![h; k_sub])
    }

    pub fn k(&self) -> usize {
        self.per_subcarrier.len()
    }

    pub fn n_ms(&self) -> usize {
        self.per_subcarrier[0].nrows()
    }

    pub fn n_bs(&self) -> usize {
        self.per_subcarrier[0].ncols()
    }

    pub fn matrices(&self) -> &[CMat] {
        &self.per_subcarrier
    }

    pub fn at(&self, k: usize) -> &CMat {
        &self.per_subcarrier[k]
    }

    /// Thin SVD of every `H[k]` (rank `min(n_ms, n_bs)`), computed on first use.
    pub fn svds(&self) -> &[ThinSvd] {
        self.svds
            .get_or_init(|| self.per_subcarrier.iter().map(thin_svd).collect())
    }

    pub fn energy(&self) -> f64 {
        self.per_subcarrier.iter().map(crate::linalg::frob_sq).sum()
    }
}

/// `H[k] = Σ_d taps[d]·exp(-j2πkd/K)` for `k = 0..K`.
pub fn to_subcarriers(taps: &[CMat], k_sub: usize) -> Result<WidebandChannel> {
    let first = taps
        .first()
        .ok_or_else(|| Error::invalid("need at least one delay tap"))?;
    if taps.len() > k_sub {
        return Err(Error::invalid(format!(
            "{} taps exceed {} subcarriers",
            taps.len(),
            k_sub
        )));
    }
    let (rows, cols) = first.shape();
    if taps.iter().any(|t| t.shape() != (rows, cols)) {
        return Err(Error::invalid("delay taps differ in shape"));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(k_sub);
    let mut out = vec![CMat::zeros(rows, cols); k_sub];
    let mut buf = vec![c(0.0, 0.0); k_sub];
    for i in 0..rows {
        for j in 0..cols {
            buf.iter_mut().for_each(|z| *z = c(0.0, 0.0));
            for (d, tap) in taps.iter().enumerate() {
                buf[d] = tap[(i, j)];
            }
            fft.process(&mut buf);
            for (k, h) in out.iter_mut().enumerate() {
                h[(i, j)] = buf[k];
            }
        }
    }
    WidebandChannel::new(out)
}

/// Rank-`r` truncated SVD of `h`.
pub fn truncated_svd(h: &CMat, r: usize) -> Result<ThinSvd> {
    let max = h.nrows().min(h.ncols());
    if r == 0 || r > max {
        return Err(Error::invalid(format!("rank {r} outside 1..={max}")));
    }
    Ok(thin_svd(h).truncate(r))
}

/// Independent generator for realization `index` of a sweep seeded with `seed`.
///
/// Each index maps to its own ChaCha stream, so realizations can be produced in
/// any order (or in parallel) with identical results.
pub fn realization_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generates realization `index` of the channel process seeded with `seed`.
pub fn generate_channel(
    cfg: &SystemConfig,
    stats: &ChannelStats,
    seed: u64,
    index: u64,
) -> Result<WidebandChannel> {
    let mut rng = realization_rng(seed, index);
    let cs = sample_cluster_set(stats, cfg.cp_len as f64, &mut rng)?;
    let taps = delay_taps(&cs, cfg)?;
    to_subcarriers(&taps, cfg.k_sub)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

const CHANNEL_MAGIC: &[u8; 8] = b"FSHPCH01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelHeader {
    pub n_bs: u32,
    pub n_ms: u32,
    pub k: u32,
    pub seed: u64,
}

/// JSON container: header, then each subcarrier matrix row-major as interleaved `re, im`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub header: ChannelHeader,
    pub data: Vec<f64>,
}

impl ChannelRecord {
    pub fn from_channel(ch: &WidebandChannel, seed: u64) -> Self {
        let mut data = Vec::with_capacity(ch.k() * ch.n_ms() * ch.n_bs() * 2);
        for h in ch.matrices() {
            for i in 0..h.nrows() {
                for j in 0..h.ncols() {
                    data.push(h[(i, j)].re);
                    data.push(h[(i, j)].im);
                }
            }
        }
        ChannelRecord {
            header: ChannelHeader {
                n_bs: ch.n_bs() as u32,
                n_ms: ch.n_ms() as u32,
                k: ch.k() as u32,
                seed,
            },
            data,
        }
    }

    pub fn to_channel(&self) -> Result<WidebandChannel> {
        let (n_ms, n_bs, k) = (
            self.header.n_ms as usize,
            self.header.n_bs as usize,
            self.header.k as usize,
        );
        let per = n_ms * n_bs * 2;
        if self.data.len() != per * k {
            return Err(Error::invalid(format!(
                "channel payload has {} values, header implies {}",
                self.data.len(),
                per * k
            )));
        }
        let mats = self
            .data
            .chunks_exact(per)
            .map(|chunk| {
                CMat::from_fn(n_ms, n_bs, |i, j| {
                    let at = 2 * (i * n_bs + j);
                    c(chunk[at], chunk[at + 1])
                })
            })
            .collect();
        WidebandChannel::new(mats)
    }

    /// Binary layout: magic, `n_bs, n_ms, k` as u32 LE, `seed` as u64 LE, then f64 LE payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 8 * self.data.len());
        out.extend_from_slice(CHANNEL_MAGIC);
        out.extend_from_slice(&self.header.n_bs.to_le_bytes());
        out.extend_from_slice(&self.header.n_ms.to_le_bytes());
        out.extend_from_slice(&self.header.k.to_le_bytes());
        out.extend_from_slice(&self.header.seed.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 28 || &bytes[..8] != CHANNEL_MAGIC {
            return Err(Error::invalid("not a channel container"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let header = ChannelHeader {
            n_bs: u32_at(8),
            n_ms: u32_at(12),
            k: u32_at(16),
            seed: u64::from_le_bytes(bytes[20..28].try_into().unwrap()),
        };
        let payload = &bytes[28..];
        if payload.len() % 8 != 0 {
            return Err(Error::invalid("truncated channel payload"));
        }
        let data = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let rec = ChannelRecord { header, data };
        rec.to_channel()?;
        Ok(rec)
    }
}
