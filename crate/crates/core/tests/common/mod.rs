//! Reference implementations used as test oracles. They deliberately avoid the
//! library's decompositions: eigenvalues come from a real cyclic Jacobi sweep on
//! the real embedding of a Hermitian matrix, determinants from LU with pivoting.
#![allow(dead_code)]

use hybrid_precoding::channel::WidebandChannel;
use hybrid_precoding::linalg::{complex_gaussian, random_semi_unitary, CMat, C64};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Eigenvalues of a real symmetric matrix, descending.
pub fn jacobi_symmetric(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    let scale: f64 = a
        .iter()
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off <= 1e-32 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Eigenvalues of a Hermitian matrix, descending, via the real embedding
/// `[[Re, -Im], [Im, Re]]` whose spectrum repeats each eigenvalue twice.
pub fn hermitian_eigs(h: &CMat) -> Vec<f64> {
    let n = h.nrows();
    let mut a = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            let z = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            a[i][j] = z.re;
            a[i + n][j + n] = z.re;
            a[i][j + n] = -z.im;
            a[i + n][j] = z.im;
        }
    }
    jacobi_symmetric(a).into_iter().step_by(2).collect()
}

/// Singular values, descending, from the eigenvalues of `A* A`.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    hermitian_eigs(&(a.adjoint() * a))
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect()
}

/// Determinant by LU decomposition with partial pivoting.
pub fn lu_det(m: &CMat) -> C64 {
    let n = m.nrows();
    let mut a: Vec<Vec<C64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
    let mut det = C64::new(1.0, 0.0);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))
            .unwrap();
        if a[piv][col].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for j in col..n {
                let v = a[col][j];
                a[r][j] -= f * v;
            }
        }
    }
    det
}

/// `(1/K) Σ_k log2 |det(I + ρ/N_S · H[k] P[k] P[k]* H[k]*)|` with `P[k]` the composite precoder.
pub fn mi_by_det(channel: &WidebandChannel, composite: &[CMat], rho: f64) -> f64 {
    let n_s = composite[0].ncols() as f64;
    let total: f64 = channel
        .matrices()
        .iter()
        .zip(composite)
        .map(|(h, p)| {
            let a = h * p;
            let m = CMat::identity(a.nrows(), a.nrows()) + (&a * a.adjoint()) * C64::new(rho / n_s, 0.0);
            lu_det(&m).norm().log2()
        })
        .sum();
    total / channel.k() as f64
}

/// Orthonormal basis of the column span by modified Gram-Schmidt.
pub fn gram_schmidt(f: &CMat) -> CMat {
    let mut q = f.clone();
    for j in 0..q.ncols() {
        for i in 0..j {
            let proj = q.column(i).dotc(&q.column(j));
            let qi = q.column(i).clone_owned();
            q.column_mut(j).axpy(-proj, &qi, C64::new(1.0, 0.0));
        }
        let norm = q.column(j).norm();
        q.column_mut(j).unscale_mut(norm);
    }
    q
}

/// Unitary-constraint hybrid MI of the RF precoder `f`: top-`n_s` eigenvalues of `Q* H* H Q`.
pub fn unitary_hybrid_mi(f: &CMat, channel: &WidebandChannel, rho: f64, n_s: usize) -> f64 {
    let q = gram_schmidt(f);
    let keep = n_s.min(f.ncols());
    let total: f64 = channel
        .matrices()
        .iter()
        .map(|h| {
            let hq = h * &q;
            hermitian_eigs(&(hq.adjoint() * hq))
                .into_iter()
                .take(keep)
                .map(|l| (1.0 + rho / n_s as f64 * l.max(0.0)).log2())
                .sum::<f64>()
        })
        .sum();
    total / channel.k() as f64
}

/// Brute-force greedy selection: every candidate is scored by rebuilding the
/// orthonormal basis of the enlarged RF matrix from scratch. Also returns the
/// smallest margin between the winning and the runner-up score over all steps.
pub fn greedy_oracle(
    vcb: &CMat,
    channel: &WidebandChannel,
    rho: f64,
    n_rf: usize,
    n_s: usize,
) -> (Vec<usize>, f64, f64) {
    let mut chosen: Vec<usize> = Vec::new();
    let mut final_score = 0.0;
    let mut margin = f64::INFINITY;
    for _ in 0..n_rf {
        let mut scores: Vec<(usize, f64)> = Vec::new();
        for n in 0..vcb.ncols() {
            if chosen.contains(&n) {
                continue;
            }
            let cols: Vec<usize> = chosen.iter().copied().chain([n]).collect();
            scores.push((n, unitary_hybrid_mi(&columns(vcb, &cols), channel, rho, n_s)));
        }
        let (best, score) =
            scores.iter().copied().fold(
                (usize::MAX, f64::NEG_INFINITY),
                |b, s| if s.1 > b.1 { s } else { b },
            );
        let runner_up = scores
            .iter()
            .filter(|s| s.0 != best)
            .map(|s| s.1)
            .fold(f64::NEG_INFINITY, f64::max);
        margin = margin.min(score - runner_up);
        chosen.push(best);
        final_score = score;
    }
    (chosen, final_score, margin)
}

pub fn columns(m: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

/// Total-budget water-filling by bisection on the water level.
/// Returns the power per gain entry.
pub fn waterfill_bisection(gains: &[f64], scale: f64, budget: f64) -> Vec<f64> {
    let floors: Vec<f64> = gains
        .iter()
        .map(|&g| if g > 0.0 { 1.0 / (scale * g) } else { f64::INFINITY })
        .collect();
    let used = |mu: f64| floors.iter().map(|&f| (mu - f).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (
        0.0,
        budget
            + floors
                .iter()
                .copied()
                .filter(|f| f.is_finite())
                .fold(0.0, f64::max),
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if used(mid) > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    floors.iter().map(|&f| (mu - f).max(0.0)).collect()
}

pub fn unit_modulus<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
    })
}

pub fn gaussian_channel<R: Rng + ?Sized>(rng: &mut R, k: usize, n_ms: usize, n_bs: usize) -> WidebandChannel {
    WidebandChannel::new((0..k).map(|_| complex_gaussian(rng, n_ms, n_bs, 1.0)).collect()).unwrap()
}

pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    random_semi_unitary(rng, n, n)
}

/// Largest entry of `|M* M − I|`.
pub fn orthonormality_error(m: &CMat) -> f64 {
    let g = m.adjoint() * m;
    (0..g.nrows())
        .flat_map(|i| (0..g.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| {
            (g[(i, j)]
                - if i == j {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                })
            .norm()
        })
        .fold(0.0, f64::max)
}
