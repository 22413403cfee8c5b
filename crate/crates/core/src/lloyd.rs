//! Lloyd-type codebook training on the Grassmann manifold.
//!
//! Each iteration assigns training members to their nearest codeword (mean
//! chordal distance over the member's subcarrier subspaces), replaces every
//! codeword by the extrinsic mean of its cell, and quantizes the result to the
//! phase grid. The distortion of the unconstrained codewords never increases.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{generate_channel, ChannelStats, SystemConfig, WidebandChannel};
use crate::codebook::{BasebandCodebook, RfCodebook, RfKind};
use crate::error::{Error, Result};
use crate::grassmann::{avg_chordal_from_projector_sum, centroid_from_projector_sum, projector_sum};
use crate::linalg::{random_semi_unitary, CMat};
use crate::precoder::{exhaustive_rf_search, inverse_sqrt_gram, orthonormal_factor, PowerConstraint};

/// One training sample: several subspaces of equal dimension (one per subcarrier).
#[derive(Debug, Clone)]
pub struct TrainingMember {
    pub bases: Vec<CMat>,
    pub sigmas: Vec<Vec<f64>>,
    projectors: CMat,
}

impl TrainingMember {
    pub fn new(bases: Vec<CMat>, sigmas: Vec<Vec<f64>>) -> Result<Self> {
        let projectors =
            projector_sum(&bases).ok_or_else(|| Error::invalid("training member without subspaces"))?;
        Ok(TrainingMember {
            bases,
            sigmas,
            projectors,
        })
    }

    /// `Σ_k Y_k Y_k*` over this member's subspaces.
    pub fn projector_sum(&self) -> &CMat {
        &self.projectors
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// Ambient dimension.
    pub n: usize,
    /// Dimension of every member subspace.
    pub rank: usize,
    pub members: Vec<TrainingMember>,
}

impl TrainingSet {
    pub fn new(members: Vec<TrainingMember>) -> Result<Self> {
        let first = members
            .first()
            .and_then(|m| m.bases.first())
            .ok_or_else(|| Error::invalid("empty training set"))?;
        let (n, rank) = first.shape();
        if members
            .iter()
            .flat_map(|m| &m.bases)
            .any(|b| b.shape() != (n, rank))
        {
            return Err(Error::invalid("training subspaces differ in shape"));
        }
        Ok(TrainingSet { n, rank, members })
    }

    /// Leading `rank` right singular subspaces of every subcarrier of every channel.
    pub fn from_channels(channels: &[WidebandChannel], rank: usize) -> Result<Self> {
        let members = channels
            .par_iter()
            .map(|ch| {
                let max = ch.n_ms().min(ch.n_bs());
                if rank == 0 || rank > max {
                    return Err(Error::invalid(format!("rank {rank} outside 1..={max}")));
                }
                let (bases, sigmas) = ch
                    .svds()
                    .iter()
                    .map(|s| {
                        let t = s.truncate(rank);
                        (t.v, t.sigma)
                    })
                    .unzip();
                TrainingMember::new(bases, sigmas)
            })
            .collect::<Result<Vec<_>>>()?;
        TrainingSet::new(members)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Channel realizations `0..n_train` of the process seeded with `seed`.
pub fn training_channels(
    sys: &SystemConfig,
    stats: &ChannelStats,
    n_train: usize,
    seed: u64,
) -> Result<Vec<WidebandChannel>> {
    if n_train == 0 {
        return Err(Error::invalid("training set needs at least one member"));
    }
    (0..n_train as u64)
        .into_par_iter()
        .map(|i| generate_channel(sys, stats, seed, i))
        .collect()
}

pub fn build_training_set(
    sys: &SystemConfig,
    stats: &ChannelStats,
    n_train: usize,
    rank: usize,
    seed: u64,
) -> Result<TrainingSet> {
    TrainingSet::from_channels(&training_channels(sys, stats, n_train, seed)?, rank)
}

/// `n_cb` random semi-unitary `n × r` matrices.
pub fn init_codebook<R: Rng + ?Sized>(n_cb: usize, n: usize, r: usize, rng: &mut R) -> Result<Vec<CMat>> {
    if n_cb == 0 {
        return Err(Error::invalid("codebook size must be positive"));
    }
    if r == 0 || r > n {
        return Err(Error::invalid(format!("codeword dimension {r} outside 1..={n}")));
    }
    Ok((0..n_cb).map(|_| random_semi_unitary(rng, n, r)).collect())
}

/// Mean distance from codeword `x` to member `m`.
pub fn member_distance(x: &CMat, m: &TrainingMember, rank: usize) -> f64 {
    avg_chordal_from_projector_sum(x, m.projector_sum(), m.bases.len(), rank)
}

/// Nearest codeword and its distance for every member; ties go to the lowest index.
pub fn assign(codewords: &[CMat], training: &TrainingSet) -> Vec<(usize, f64)> {
    training
        .members
        .par_iter()
        .map(|m| {
            let mut best = (0, f64::INFINITY);
            for (i, x) in codewords.iter().enumerate() {
                let d = member_distance(x, m, training.rank);
                if d < best.1 {
                    best = (i, d);
                }
            }
            best
        })
        .collect()
}

/// Member indices of each Voronoi cell.
pub fn partition(codewords: &[CMat], training: &TrainingSet) -> Vec<Vec<usize>> {
    cells_of(&assign(codewords, training), codewords.len())
}

fn cells_of(assignment: &[(usize, f64)], n_cb: usize) -> Vec<Vec<usize>> {
    let mut cells = vec![Vec::new(); n_cb];
    for (m, (i, _)) in assignment.iter().enumerate() {
        cells[*i].push(m);
    }
    cells
}

/// Mean over members of the distance to the nearest codeword.
pub fn codebook_distortion(codewords: &[CMat], training: &TrainingSet) -> f64 {
    let a = assign(codewords, training);
    a.iter().map(|(_, d)| d).sum::<f64>() / a.len() as f64
}

/// Distortion of an RF codebook, measured with the column space of each quantized codeword.
pub fn rf_codebook_distortion(cb: &RfCodebook, training: &TrainingSet) -> Result<f64> {
    let bases = cb
        .matrices()
        .iter()
        .map(orthonormal_factor)
        .collect::<Result<Vec<_>>>()?;
    Ok(codebook_distortion(&bases, training))
}

/// Centroid of every cell; an empty cell is reseeded at the worst-served member
/// not already used for another reseed.
pub fn recenter(
    cells: &[Vec<usize>],
    training: &TrainingSet,
    r: usize,
    member_distortion: &[f64],
) -> Result<Vec<CMat>> {
    let mut worst: Vec<usize> = (0..training.len()).collect();
    worst.sort_by(|&a, &b| {
        member_distortion[b]
            .total_cmp(&member_distortion[a])
            .then(a.cmp(&b))
    });
    let mut reseeds = worst.into_iter();
    let sources: Vec<Vec<usize>> = cells
        .iter()
        .map(|cell| {
            if cell.is_empty() {
                reseeds.next().into_iter().collect()
            } else {
                cell.clone()
            }
        })
        .collect();
    sources
        .par_iter()
        .map(|src| {
            let psum = src
                .iter()
                .map(|&m| training.members[m].projector_sum().clone())
                .reduce(|a, b| a + b)
                .ok_or_else(|| Error::invalid("more empty cells than training members"))?;
            centroid_from_projector_sum(&psum, r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LloydConfig {
    pub n_cb: usize,
    pub max_iters: usize,
    /// Stop once the relative distortion improvement drops below this.
    pub tol: f64,
}

impl Default for LloydConfig {
    fn default() -> Self {
        LloydConfig {
            n_cb: 64,
            max_iters: 50,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub unconstrained: f64,
    /// Distortion of the phase-quantized codebook; absent when no quantization is applied.
    pub rf: Option<f64>,
}

/// Distortion per iteration; entry 0 is the random initialization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistortionTrace {
    pub per_iteration: Vec<TraceEntry>,
}

impl DistortionTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,unconstrained_distortion,rf_distortion\n");
        for (i, e) in self.per_iteration.iter().enumerate() {
            let rf = e.rf.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{i},{},{rf}\n", e.unconstrained));
        }
        out
    }
}

/// Generic Lloyd loop. `quantize` maps the unconstrained codewords to an RF
/// codebook whose distortion is traced alongside.
fn lloyd<R: Rng + ?Sized>(
    cfg: &LloydConfig,
    training: &TrainingSet,
    r: usize,
    rng: &mut R,
    mut quantize: impl FnMut(&[CMat]) -> Result<Option<f64>>,
) -> Result<(Vec<CMat>, DistortionTrace)> {
    if training.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if r < training.rank {
        return Err(Error::invalid(format!(
            "codeword dimension {r} below training rank {}",
            training.rank
        )));
    }
    if cfg.max_iters == 0 {
        return Err(Error::invalid("max_iters must be positive"));
    }
    let mut centers = init_codebook(cfg.n_cb, training.n, r, rng)?;
    let mut assignment = assign(&centers, training);
    let mut trace = DistortionTrace::default();
    let mean = |a: &[(usize, f64)]| a.iter().map(|(_, d)| d).sum::<f64>() / a.len() as f64;
    let mut current = mean(&assignment);
    trace.per_iteration.push(TraceEntry {
        unconstrained: current,
        rf: quantize(&centers)?,
    });
    for iter in 1..=cfg.max_iters {
        let cells = cells_of(&assignment, centers.len());
        let distances: Vec<f64> = assignment.iter().map(|(_, d)| *d).collect();
        centers = recenter(&cells, training, r, &distances)?;
        assignment = assign(&centers, training);
        let next = mean(&assignment);
        trace.per_iteration.push(TraceEntry {
            unconstrained: next,
            rf: quantize(&centers)?,
        });
        tracing::debug!(iter, distortion = next, "lloyd iteration");
        let improvement = if current > 0.0 {
            (current - next) / current
        } else {
            0.0
        };
        current = next;
        if improvement < cfg.tol {
            break;
        }
    }
    Ok((centers, trace))
}

/// Trains an RF codebook of `r`-column codewords.
///
/// When the training subspaces have lower dimension than `r`, the generalized
/// chordal distance is used automatically.
pub fn train_rf_codebook<R: Rng + ?Sized>(
    cfg: &LloydConfig,
    phase_bits: u32,
    r: usize,
    training: &TrainingSet,
    rng: &mut R,
) -> Result<(RfCodebook, DistortionTrace)> {
    let kind = if r == 1 { RfKind::Vector } else { RfKind::Matrix };
    let (twins, trace) = lloyd(cfg, training, r, rng, |centers| {
        let cb = RfCodebook::from_unconstrained(kind, centers.to_vec(), phase_bits)?;
        // A quantized codeword can lose rank on tiny grids; report it as infinite distortion.
        Ok(Some(
            rf_codebook_distortion(&cb, training).unwrap_or(f64::INFINITY),
        ))
    })?;
    Ok((RfCodebook::from_unconstrained(kind, twins, phase_bits)?, trace))
}

/// Rank-1 Lloyd-trained vector codebook on the dominant right singular vector of each subcarrier.
pub fn train_rf_vector_codebook<R: Rng + ?Sized>(
    cfg: &LloydConfig,
    phase_bits: u32,
    channels: &[WidebandChannel],
    rng: &mut R,
) -> Result<(RfCodebook, DistortionTrace)> {
    let training = TrainingSet::from_channels(channels, 1)?;
    train_rf_codebook(cfg, phase_bits, 1, &training, rng)
}

/// Effective right-singular bases `V̄[k]_{:,1:N_S}` under the best unitary-mode RF codeword
/// of every channel; each subcarrier becomes a separate training member.
pub fn baseband_training_set(
    rf: &RfCodebook,
    channels: &[WidebandChannel],
    n_s: usize,
    rho: f64,
) -> Result<TrainingSet> {
    if n_s >= rf.r {
        return Err(Error::invalid(format!(
            "baseband codebooks need fewer streams than RF chains (n_s={n_s}, n_rf={})",
            rf.r
        )));
    }
    let codewords = rf.matrices();
    let per_channel = channels
        .par_iter()
        .map(|ch| {
            let (best, _) = exhaustive_rf_search(&codewords, ch, rho, n_s, PowerConstraint::Unitary)?;
            let f = &codewords[best];
            let q = f * inverse_sqrt_gram(f)?;
            ch.svds()
                .iter()
                .map(|svd| {
                    let eff = crate::linalg::thin_svd(&(svd.sigma_vh() * &q));
                    TrainingMember::new(
                        vec![eff.v.columns(0, n_s).into_owned()],
                        vec![eff.sigma[..n_s].to_vec()],
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    TrainingSet::new(per_channel.into_iter().flatten().collect())
}

/// Lloyd-trained semi-unitary baseband codebook (no phase quantization).
pub fn train_baseband_codebook<R: Rng + ?Sized>(
    cfg: &LloydConfig,
    training: &TrainingSet,
    rng: &mut R,
) -> Result<(BasebandCodebook, DistortionTrace)> {
    let (codewords, trace) = lloyd(cfg, training, training.rank, rng, |_| Ok(None))?;
    Ok((BasebandCodebook::new(codewords)?, trace))
}
