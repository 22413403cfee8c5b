//! Greedy RF beamforming-vector selection from a vector codebook.
//!
//! Three selectors share one contract: `n_rf` iterations, each adding the
//! unused codeword with the best score, ties to the lowest index, skipping
//! codewords that lie (numerically) in the span of those already chosen.
//!
//! * [`dg_hp`] scores each candidate matrix `[F, f]` directly.
//! * [`gs_hp`] scores `[F, P⊥f]` instead, so only one new orthonormal direction
//!   enters per candidate and the eigenvalues follow from a rank-one update.
//!   It selects the same codewords as [`dg_hp`].
//! * [`approx_gs_hp`] replaces the score by the residual channel energy captured
//!   by the candidate, which reduces each iteration to a single projection.

use serde::{Deserialize, Serialize};

use crate::channel::WidebandChannel;
use crate::error::{Error, Result};
use crate::grassmann::complement_projector;
use crate::linalg::{frob_sq, gram, hermitian_eigenvalues, log2_one_plus, singular_values, thin_svd, CMat};
use crate::precoder::{optimal_baseband, orthonormal_factor, HybridPrecoder, PowerConstraint};

/// Relative norm below which a projected candidate is treated as adding no new dimension.
pub const DEPENDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GreedySelection {
    /// Codebook column indices in selection order.
    pub indices: Vec<usize>,
    /// Selected original codewords as columns.
    pub f_rf: CMat,
    /// Unitary-constraint mutual information with all selected codewords.
    pub mi: f64,
    /// Score of the best candidate after each iteration.
    pub trajectory: Vec<f64>,
}

/// How [`gs_hp`] obtains the eigenvalues of a candidate's effective channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenUpdate {
    /// Dense Hermitian eigen-decomposition per candidate.
    Full,
    /// Secular-equation update of the previous iteration's eigenvalues.
    #[default]
    RankOne,
}

fn check_inputs(vcb: &CMat, channel: &WidebandChannel, n_rf: usize, n_s: usize) -> Result<()> {
    if vcb.nrows() != channel.n_bs() {
        return Err(Error::invalid(format!(
            "codewords have {} entries, channel has {} transmit antennas",
            vcb.nrows(),
            channel.n_bs()
        )));
    }
    if n_rf == 0 || n_s == 0 || n_s > n_rf || n_rf > channel.n_bs() {
        return Err(Error::invalid(format!(
            "need 1 <= n_s <= n_rf <= n_bs, got n_s={n_s} n_rf={n_rf}"
        )));
    }
    if n_s > channel.n_ms() {
        return Err(Error::invalid("more streams than receive antennas"));
    }
    if vcb.ncols() < n_rf {
        return Err(Error::Infeasible {
            needed: n_rf,
            found: vcb.ncols(),
        });
    }
    Ok(())
}

/// `P⊥ f` for the orthonormal basis `q` of the selected span, or `None` if `f` is
/// (relative to its norm) inside that span.
fn fresh_direction(q: &CMat, f: &CMat) -> Option<CMat> {
    let residual = if q.ncols() == 0 {
        f.clone()
    } else {
        f - q * (q.adjoint() * f)
    };
    let norm = residual.norm();
    (norm > DEPENDENCE_TOL * f.norm()).then(|| residual.unscale(norm))
}

/// `(1/K) Σ_k Σ_{j<m} log2(1 + ρ/N_S · λ_j[k])`, eigenvalues descending per subcarrier.
fn score(eigs: impl Iterator<Item = Vec<f64>>, m: usize, rho: f64, n_s: usize, k: usize) -> f64 {
    eigs.map(|e| log2_one_plus(e.into_iter().take(m), rho / n_s as f64))
        .sum::<f64>()
        / k as f64
}

fn argmax_candidate(scores: &[Option<f64>]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best
}

/// Direct greedy selection maximizing unitary-constraint mutual information.
pub fn dg_hp(
    vcb: &CMat,
    channel: &WidebandChannel,
    rho: f64,
    n_rf: usize,
    n_s: usize,
) -> Result<GreedySelection> {
    check_inputs(vcb, channel, n_rf, n_s)?;
    let svds = channel.svds();
    let mut chosen: Vec<usize> = Vec::with_capacity(n_rf);
    let mut q = CMat::zeros(vcb.nrows(), 0);
    let mut trajectory = Vec::with_capacity(n_rf);
    for i in 1..=n_rf {
        let m = i.min(n_s);
        let scores: Vec<Option<f64>> = (0..vcb.ncols())
            .map(|n| {
                if chosen.contains(&n) {
                    return None;
                }
                let f = vcb.columns(n, 1).into_owned();
                fresh_direction(&q, &f)?;
                let cand = append_columns(&selected(vcb, &chosen), &f);
                let qc = orthonormal_factor(&cand).ok()?;
                let eigs = svds.iter().map(|s| {
                    singular_values(&(s.sigma_vh() * &qc))
                        .into_iter()
                        .map(|x| x * x)
                        .collect()
                });
                Some(score(eigs, m, rho, n_s, channel.k()))
            })
            .collect();
        let (best, s) = argmax_candidate(&scores).ok_or(Error::Infeasible {
            needed: n_rf,
            found: chosen.len(),
        })?;
        chosen.push(best);
        q = orthonormal_factor(&selected(vcb, &chosen))?;
        trajectory.push(s);
    }
    finish(vcb, chosen, trajectory)
}

fn selected(vcb: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(vcb.nrows(), idx.len(), |r, c| vcb[(r, idx[c])])
}

fn append_columns(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn finish(vcb: &CMat, indices: Vec<usize>, trajectory: Vec<f64>) -> Result<GreedySelection> {
    Ok(GreedySelection {
        f_rf: selected(vcb, &indices),
        mi: *trajectory.last().expect("at least one iteration"),
        indices,
        trajectory,
    })
}

/// Per-subcarrier cache of the effective channel `Σ V* Q` for the current basis `Q`.
struct SubcarrierState {
    /// `Σ[k] V[k]*`.
    sv: CMat,
    /// Non-zero eigenvalues of `A A*` (descending) with `A = Σ V* Q`.
    eig: Vec<f64>,
    /// Matching eigenvectors (left singular vectors of `A`).
    vecs: CMat,
}

impl SubcarrierState {
    fn refresh(&mut self, q: &CMat) {
        let a = &self.sv * q;
        let svd = thin_svd(&a);
        self.eig = svd.sigma.iter().map(|s| s * s).collect();
        self.vecs = svd.u;
    }
}

/// Gram-Schmidt greedy selection; selects the same codewords as [`dg_hp`].
pub fn gs_hp(
    vcb: &CMat,
    channel: &WidebandChannel,
    rho: f64,
    n_rf: usize,
    n_s: usize,
    method: EigenUpdate,
) -> Result<GreedySelection> {
    check_inputs(vcb, channel, n_rf, n_s)?;
    let mut states: Vec<SubcarrierState> = channel
        .svds()
        .iter()
        .map(|s| SubcarrierState {
            sv: s.sigma_vh(),
            eig: Vec::new(),
            vecs: CMat::zeros(s.sigma.len(), 0),
        })
        .collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(n_rf);
    let mut q = CMat::zeros(vcb.nrows(), 0);
    let mut trajectory = Vec::with_capacity(n_rf);
    for i in 1..=n_rf {
        let m = i.min(n_s);
        let scores: Vec<Option<f64>> = (0..vcb.ncols())
            .map(|n| {
                if chosen.contains(&n) {
                    return None;
                }
                let dir = fresh_direction(&q, &vcb.columns(n, 1).into_owned())?;
                let eigs = states.iter().map(|st| {
                    let b = &st.sv * &dir;
                    match method {
                        EigenUpdate::Full => {
                            let a = append_columns(&(&st.sv * &q), &b);
                            hermitian_eigenvalues(&gram(&a))
                        }
                        EigenUpdate::RankOne => {
                            let c = st.vecs.adjoint() * &b;
                            rank_one_update(&st.eig, c.iter().map(|z| z.norm_sqr()), frob_sq(&b))
                        }
                    }
                });
                Some(score(eigs, m, rho, n_s, channel.k()))
            })
            .collect();
        let (best, s) = argmax_candidate(&scores).ok_or(Error::Infeasible {
            needed: n_rf,
            found: chosen.len(),
        })?;
        let dir = fresh_direction(&q, &vcb.columns(best, 1).into_owned())
            .expect("scored candidates have a fresh direction");
        q = append_columns(&q, &dir);
        chosen.push(best);
        states.iter_mut().for_each(|st| st.refresh(&q));
        trajectory.push(s);
    }
    finish(vcb, chosen, trajectory)
}

/// Eigenvalues of `D + b b*` where `D` has eigenvalues `d` (descending, non-zero)
/// on an orthonormal basis, `weights[j] = |⟨u_j, b⟩|²`, and `‖b‖² = norm_sq`.
///
/// The part of `b` outside the basis acts as one extra pole at zero. Returns
/// `d.len() + 1` eigenvalues, descending.
pub fn rank_one_update(d: &[f64], weights: impl IntoIterator<Item = f64>, norm_sq: f64) -> Vec<f64> {
    let w: Vec<f64> = weights.into_iter().collect();
    assert_eq!(w.len(), d.len());
    let captured: f64 = w.iter().sum();
    let mut poles: Vec<(f64, f64)> = d.iter().copied().zip(w).collect();
    poles.push((0.0, (norm_sq - captured).max(0.0)));

    let scale = d
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(norm_sq)
        .max(f64::MIN_POSITIVE);
    let mut fixed = Vec::new();
    // merge coincident poles; one copy stays a pole, the rest are unchanged eigenvalues
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(poles.len());
    for (p, wt) in poles {
        match merged.last_mut() {
            Some(last) if (last.0 - p).abs() <= 1e-13 * scale => {
                last.1 += wt;
                fixed.push(p);
            }
            _ => merged.push((p, wt)),
        }
    }
    let mut active = Vec::with_capacity(merged.len());
    for (p, wt) in merged {
        if wt <= 1e-15 * scale {
            fixed.push(p);
        } else {
            active.push((p, wt));
        }
    }
    let secular = |lam: f64| 1.0 + active.iter().map(|(p, w)| w / (p - lam)).sum::<f64>();
    let total: f64 = active.iter().map(|(_, w)| w).sum();
    let mut out = fixed;
    for j in 0..active.len() {
        let lo = active[j].0;
        let hi = if j == 0 { lo + total } else { active[j - 1].0 };
        out.push(bisect(&secular, lo, hi));
    }
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    // f increases from -inf just above `lo`; at `hi` it is non-negative (or +inf)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Truncation rank of the channel used by [`approx_gs_hp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    #[default]
    Streams,
    RfChains,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxOptions {
    pub truncation: Truncation,
    /// Constraint used for the final baseband design.
    pub mode: PowerConstraint,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        ApproxOptions {
            truncation: Truncation::Streams,
            mode: PowerConstraint::Unitary,
        }
    }
}

/// Approximate Gram-Schmidt selection: each iteration picks the codeword with the
/// largest projection onto the residual `Π = [Ṽ[1]Σ̃[1], …, Ṽ[K]Σ̃[K]]`, then removes
/// the selected direction from `Π`. The baseband is designed optimally afterwards.
pub fn approx_gs_hp(
    vcb: &CMat,
    channel: &WidebandChannel,
    n_rf: usize,
    n_s: usize,
    rho: f64,
    opts: ApproxOptions,
) -> Result<(HybridPrecoder, Vec<usize>)> {
    let (indices, f_rf) = approx_gs_select(vcb, channel, n_rf, n_s, opts.truncation)?;
    Ok((optimal_baseband(&f_rf, channel, rho, n_s, opts.mode)?, indices))
}

/// RF stage of [`approx_gs_hp`]: selected indices and the RF matrix of original codewords.
pub fn approx_gs_select(
    vcb: &CMat,
    channel: &WidebandChannel,
    n_rf: usize,
    n_s: usize,
    truncation: Truncation,
) -> Result<(Vec<usize>, CMat)> {
    check_inputs(vcb, channel, n_rf, n_s)?;
    let rank = match truncation {
        Truncation::Streams => n_s,
        Truncation::RfChains => n_rf,
    }
    .min(channel.n_ms().min(channel.n_bs()));
    let mut pi = residual_matrix(channel, rank);
    let mut chosen: Vec<usize> = Vec::with_capacity(n_rf);
    let mut q = CMat::zeros(vcb.nrows(), 0);
    for _ in 0..n_rf {
        let psi = pi.adjoint() * vcb;
        let scores: Vec<Option<f64>> = (0..vcb.ncols())
            .map(|n| {
                if chosen.contains(&n) {
                    return None;
                }
                fresh_direction(&q, &vcb.columns(n, 1).into_owned())?;
                Some(psi.column(n).norm_squared())
            })
            .collect();
        let (best, _) = argmax_candidate(&scores).ok_or(Error::Infeasible {
            needed: n_rf,
            found: chosen.len(),
        })?;
        chosen.push(best);
        let f = selected(vcb, &chosen);
        q = orthonormal_factor(&f)?;
        pi = complement_projector(&f)? * pi;
    }
    let f_rf = selected(vcb, &chosen);
    Ok((chosen, f_rf))
}

/// `[Ṽ[1]Σ̃[1], …, Ṽ[K]Σ̃[K]]` at the given truncation rank.
pub fn residual_matrix(channel: &WidebandChannel, rank: usize) -> CMat {
    let svds = channel.svds();
    let mut pi = CMat::zeros(channel.n_bs(), channel.k() * rank);
    for (k, s) in svds.iter().enumerate() {
        let t = s.truncate(rank);
        let block = t.sigma_vh().adjoint();
        pi.columns_mut(k * rank, t.rank()).copy_from(&block);
    }
    pi
}

/// RF codebook structure for feedback accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RfFeedback {
    /// One index into a matrix codebook.
    Matrix { codebook_size: usize },
    /// One index per RF chain into a vector codebook.
    Vector { codebook_size: usize },
    /// Unquantized (perfect) feedback; contributes no bits.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackBits {
    pub bits: u64,
    /// False when some codebook size is not a power of two and `log2` was rounded up.
    pub exact: bool,
}

fn index_bits(size: usize) -> Result<(u64, bool)> {
    if size == 0 {
        return Err(Error::invalid("codebook size must be positive"));
    }
    let bits = (usize::BITS - (size - 1).leading_zeros()) as u64;
    Ok((bits, size.is_power_of_two()))
}

/// Feedback bits per channel use: the RF index (or indices), plus one baseband
/// index per subcarrier when `n_s < n_rf`.
pub fn feedback_bits(
    rf: RfFeedback,
    n_rf: usize,
    n_s: usize,
    k_sub: usize,
    bb_codebook_size: Option<usize>,
) -> Result<FeedbackBits> {
    let (rf_bits, mut exact) = match rf {
        RfFeedback::Matrix { codebook_size } => index_bits(codebook_size)?,
        RfFeedback::Vector { codebook_size } => {
            let (b, e) = index_bits(codebook_size)?;
            (b * n_rf as u64, e)
        }
        RfFeedback::None => (0, true),
    };
    let bb_bits = if n_s < n_rf {
        match bb_codebook_size {
            Some(size) => {
                let (b, e) = index_bits(size)?;
                exact &= e;
                b * k_sub as u64
            }
            None => 0,
        }
    } else {
        0
    };
    Ok(FeedbackBits {
        bits: rf_bits + bb_bits,
        exact,
    })
}
