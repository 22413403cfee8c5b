//! Dense complex linear-algebra helpers shared by the precoding modules.
//!
//! Matrices are `nalgebra` types; SVD and Hermitian eigen-decompositions are
//! delegated to `faer`. The wrappers fix ordering and phase conventions so that
//! decompositions are deterministic.

use faer::{Mat, MatRef, Side};
use nalgebra::{DMatrix, QR};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Column-rank tolerance: a matrix counts as full column rank when σ_min/σ_max exceeds this.
pub const RANK_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `n × r` matrix holding the first `r` columns of the identity.
pub fn eye_cols(n: usize, r: usize) -> CMat {
    CMat::from_fn(n, r, |i, j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) })
}

pub fn frob_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Hermitian part `(m + m*)/2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

fn to_faer(m: &CMat) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted descending.
///
/// The input is symmetrized first, so small round-off asymmetry is tolerated.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    assert!(m.is_square(), "hermitian_eigen needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = to_faer(&hermitian_part(m))
        .self_adjoint_eigen(Side::Lower)
        .expect("Hermitian eigen-decomposition did not converge");
    let vals = eig.S().column_vector();
    let vecs = eig.U();
    // faer sorts ascending
    let values = (0..n).rev().map(|i| vals[i].re).collect();
    let vectors = CMat::from_fn(n, n, |i, j| vecs[(i, n - 1 - j)]);
    (values, vectors)
}

/// Eigenvalues only, sorted descending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v = to_faer(&hermitian_part(m))
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("Hermitian eigen-decomposition did not converge");
    v.reverse();
    v
}

/// Thin SVD `m = u · diag(sigma) · v*` with descending singular values.
///
/// Each right singular vector is rotated so that its first non-negligible entry is
/// real and positive; the matching left vector gets the same rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v: CMat,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Rank-`r` truncation (first `r` singular triplets).
    pub fn truncate(&self, r: usize) -> ThinSvd {
        let r = r.min(self.rank());
        ThinSvd {
            u: self.u.columns(0, r).into_owned(),
            sigma: self.sigma[..r].to_vec(),
            v: self.v.columns(0, r).into_owned(),
        }
    }

    /// `diag(sigma) · v*`, which has the same Gram matrix as the decomposed matrix.
    pub fn sigma_vh(&self) -> CMat {
        let mut out = self.v.adjoint();
        for (i, s) in self.sigma.iter().enumerate() {
            out.row_mut(i).scale_mut(*s);
        }
        out
    }

    pub fn reconstruct(&self) -> CMat {
        &self.u * self.sigma_vh()
    }
}

pub fn thin_svd(m: &CMat) -> ThinSvd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return ThinSvd {
            u: CMat::zeros(rows, 0),
            sigma: Vec::new(),
            v: CMat::zeros(cols, 0),
        };
    }
    let svd = to_faer(m).thin_svd().expect("SVD did not converge");
    let mut u = from_faer(svd.U());
    let mut v = from_faer(svd.V());
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..k).map(|i| s[i].re.max(0.0)).collect();
    for j in 0..k {
        let col = v.column(j);
        let scale = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            continue;
        }
        if let Some(first) = col.iter().find(|z| z.norm() > 1e-8 * scale) {
            let phase = first.conj() / first.norm();
            v.column_mut(j).iter_mut().for_each(|z| *z *= phase);
            u.column_mut(j).iter_mut().for_each(|z| *z *= phase);
        }
    }
    ThinSvd { u, sigma, v }
}

/// Singular values only, descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows().min(m.ncols()) == 0 {
        return Vec::new();
    }
    to_faer(m)
        .singular_values()
        .expect("SVD did not converge")
        .into_iter()
        .map(|s| s.max(0.0))
        .collect()
}

/// σ_min/σ_max of `m` (0 for an all-zero matrix).
pub fn column_rank_ratio(m: &CMat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if max > 0.0 => min / max,
        _ => 0.0,
    }
}

pub fn ensure_full_column_rank(m: &CMat) -> Result<()> {
    let ratio = column_rank_ratio(m);
    if m.ncols() > m.nrows() || ratio <= RANK_TOL {
        return Err(Error::DegenerateCodeword { ratio, tol: RANK_TOL });
    }
    Ok(())
}

/// `a^{p}` for a Hermitian positive-definite `a`, via its eigen-decomposition.
pub fn hermitian_power(a: &CMat, p: f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(a);
    let mut scaled = vecs.clone();
    for (j, lam) in vals.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lam.max(0.0).powf(p));
    }
    scaled * vecs.adjoint()
}

/// `m* m`.
pub fn gram(m: &CMat) -> CMat {
    m.adjoint() * m
}

/// Largest entrywise deviation of `m* m` from the identity.
pub fn semi_unitary_error(m: &CMat) -> f64 {
    let g = gram(m);
    let n = g.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - c(target, 0.0)).norm());
        }
    }
    worst
}

/// Matrix of i.i.d. circularly-symmetric complex Gaussians with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    let s = (var / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(s * re, s * im)
    })
}

/// Random `n × r` semi-unitary matrix: Q factor of a Gaussian matrix.
pub fn random_semi_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize, r: usize) -> CMat {
    assert!(r <= n, "semi-unitary needs r <= n");
    let g = complex_gaussian(rng, n, r, 1.0);
    QR::new(g).q()
}

/// Sum of `log2(1 + scale·λ)` over the given eigenvalues (negatives clamped to 0).
pub fn log2_one_plus(values: impl IntoIterator<Item = f64>, scale: f64) -> f64 {
    values
        .into_iter()
        .map(|l| (scale * l.max(0.0)).ln_1p())
        .sum::<f64>()
        / std::f64::consts::LN_2
}
