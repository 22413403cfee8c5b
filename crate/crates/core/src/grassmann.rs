//! Subspace geometry on the Grassmann manifold.
//!
//! Subspaces are represented by semi-unitary bases (`n × r`, `X* X = I`). All
//! distances are squared chordal distances.

use crate::error::{Error, Result};
use crate::linalg::{ensure_full_column_rank, frob_sq, gram, hermitian_eigen, CMat};

fn same_ambient(x: &CMat, y: &CMat) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::invalid(format!(
            "ambient dimensions differ: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    Ok(())
}

/// `r − ‖X* Y‖_F²`, clamped to `[0, r]`.
pub fn chordal_sq(x: &CMat, y: &CMat) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::invalid(format!(
            "subspace shapes differ: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    generalized_chordal_sq(x, y)
}

/// `min(r1, r2) − ‖U* V‖_F²` for subspaces of possibly different dimensions.
pub fn generalized_chordal_sq(u: &CMat, v: &CMat) -> Result<f64> {
    same_ambient(u, v)?;
    let r = u.ncols().min(v.ncols()) as f64;
    Ok((r - frob_sq(&(u.adjoint() * v))).clamp(0.0, r))
}

/// Mean squared (generalized) chordal distance from `x` to every member of `ys`.
pub fn avg_chordal(x: &CMat, ys: &[CMat], generalized: bool) -> Result<f64> {
    if ys.is_empty() {
        return Err(Error::invalid("empty subspace list"));
    }
    let mut total = 0.0;
    for y in ys {
        total += if generalized {
            generalized_chordal_sq(x, y)?
        } else {
            chordal_sq(x, y)?
        };
    }
    Ok(total / ys.len() as f64)
}

/// `Σ Y Y*` over the given bases.
pub fn projector_sum<'a>(bases: impl IntoIterator<Item = &'a CMat>) -> Option<CMat> {
    let mut acc: Option<CMat> = None;
    for y in bases {
        let p = y * y.adjoint();
        match acc.as_mut() {
            Some(a) => *a += p,
            None => acc = Some(p),
        }
    }
    acc
}

/// Average distance from `x` to `count` subspaces of dimension `r_y` whose projectors sum to `psum`.
///
/// Uses `Σ ‖X* Y‖_F² = tr(X* (Σ Y Y*) X)`, which avoids touching every member.
pub fn avg_chordal_from_projector_sum(x: &CMat, psum: &CMat, count: usize, r_y: usize) -> f64 {
    let r = x.ncols().min(r_y) as f64;
    let px = psum * x;
    let mut captured = 0.0;
    for j in 0..x.ncols() {
        captured += x.column(j).dotc(&px.column(j)).re;
    }
    (r - captured / count as f64).clamp(0.0, r)
}

/// Extrinsic mean of a set of subspaces: the leading `r` eigenvectors of `Σ Y Y*`.
///
/// Returns [`Error::InvalidArgument`] for an empty set; callers that partition
/// training data check for empty cells before calling.
pub fn karcher_centroid<'a>(bases: impl IntoIterator<Item = &'a CMat>, r: usize) -> Result<CMat> {
    let psum = projector_sum(bases).ok_or_else(|| Error::invalid("centroid of an empty cell"))?;
    centroid_from_projector_sum(&psum, r)
}

pub fn centroid_from_projector_sum(psum: &CMat, r: usize) -> Result<CMat> {
    if r == 0 || r > psum.nrows() {
        return Err(Error::invalid(format!(
            "centroid dimension {r} outside 1..={}",
            psum.nrows()
        )));
    }
    let (_, vecs) = hermitian_eigen(psum);
    Ok(vecs.columns(0, r).into_owned())
}

/// `I − F (F* F)^{-1} F*`.
pub fn complement_projector(f: &CMat) -> Result<CMat> {
    ensure_full_column_rank(f)?;
    let inv = gram(f).try_inverse().ok_or(Error::DegenerateCodeword {
        ratio: 0.0,
        tol: crate::linalg::RANK_TOL,
    })?;
    let n = f.nrows();
    Ok(CMat::identity(n, n) - f * inv * f.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::realization_rng;
    use crate::linalg::{c, complex_gaussian, eye_cols, hermitian_eigenvalues, random_semi_unitary};

    #[test]
    fn chordal_identities() {
        let mut rng = realization_rng(1, 0);
        let x = random_semi_unitary(&mut rng, 6, 2);
        assert!(chordal_sq(&x, &x).unwrap() < 1e-12);
        let a = eye_cols(4, 2);
        let b = CMat::from_fn(4, 2, |i, j| if i == j + 2 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert!((chordal_sq(&a, &b).unwrap() - 2.0).abs() < 1e-14);
        let y = random_semi_unitary(&mut rng, 6, 2);
        let proj = 0.5 * frob_sq(&(&x * x.adjoint() - &y * y.adjoint()));
        assert!((chordal_sq(&x, &y).unwrap() - proj).abs() < 1e-12);
        assert!(chordal_sq(&x, &eye_cols(6, 3)).is_err());
    }

    #[test]
    fn generalized_cases() {
        let mut rng = realization_rng(2, 0);
        let u = random_semi_unitary(&mut rng, 6, 3);
        let v = u.columns(0, 2).into_owned();
        assert!(generalized_chordal_sq(&u, &v).unwrap() < 1e-12);
        let a = eye_cols(5, 3);
        let b = CMat::from_fn(5, 2, |i, j| if i == j + 3 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert!((generalized_chordal_sq(&a, &b).unwrap() - 2.0).abs() < 1e-14);
        let w = random_semi_unitary(&mut rng, 6, 3);
        assert_eq!(
            generalized_chordal_sq(&u, &w).unwrap(),
            chordal_sq(&u, &w).unwrap()
        );
    }

    #[test]
    fn average_distance() {
        let a = eye_cols(4, 2);
        let b = CMat::from_fn(4, 2, |i, j| if i == j + 2 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert!((avg_chordal(&a, &[a.clone(), b.clone()], false).unwrap() - 1.0).abs() < 1e-14);
        assert!(avg_chordal(&a, &[], false).is_err());
        let psum = projector_sum([&a, &b]).unwrap();
        assert!((avg_chordal_from_projector_sum(&a, &psum, 2, 2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn centroid_of_single_member() {
        let mut rng = realization_rng(3, 0);
        let y = random_semi_unitary(&mut rng, 6, 2);
        let cen = karcher_centroid([&y], 2).unwrap();
        assert!(chordal_sq(&cen, &y).unwrap() < 1e-10);
        let twice = karcher_centroid([&y, &y], 2).unwrap();
        assert!(chordal_sq(&twice, &y).unwrap() < 1e-10);
        assert!(karcher_centroid(std::iter::empty::<&CMat>(), 2).is_err());
    }

    #[test]
    fn complement_projector_properties() {
        let p = complement_projector(&eye_cols(4, 2)).unwrap();
        let want = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(1.0, 0.0),
            c(1.0, 0.0),
        ]));
        assert!((&p - want).norm() < 1e-14);
        let mut rng = realization_rng(4, 0);
        let f = complex_gaussian(&mut rng, 7, 3, 1.0);
        let p = complement_projector(&f).unwrap();
        assert!((&p * &f).norm() < 1e-10);
        assert!((&p * &p - &p).norm() < 1e-10);
        assert!((&p - p.adjoint()).norm() < 1e-12);
        let ev = hermitian_eigenvalues(&p);
        for (i, l) in ev.iter().enumerate() {
            let want = if i < 4 { 1.0 } else { 0.0 };
            assert!((l - want).abs() < 1e-9);
        }
    }
}
