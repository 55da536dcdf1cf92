//! Dense linear-algebra helpers shared by the physics modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};
use num_complex::Complex64;

use crate::error::{GwError, Result};

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Pivot ratio below which an LU factorization is treated as singular.
const PIVOT_RATIO_FLOOR: f64 = 1e-15;

pub fn complexify(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Solves `a * x = b` with partial-pivoting LU.
pub fn solve(a: CMat, b: &CMat, what: &'static str) -> Result<CMat> {
    let lu = LU::new(a);
    check_pivots(&lu, what)?;
    lu.solve(b).ok_or(GwError::Singular(what))
}

fn check_pivots(lu: &LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>, what: &'static str) -> Result<()> {
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..u.nrows().min(u.ncols()) {
        let p = u[(i, i)].norm();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if !(lo > PIVOT_RATIO_FLOOR * hi) {
        return Err(GwError::Singular(what));
    }
    Ok(())
}

fn to_faer(m: &CMat) -> faer::Mat<Complex64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// Singular values in nonincreasing order.
///
/// SVDs go through faer, whose complex SVD stays accurate on the
/// rank-deficient operators met here (exactly zero trailing singular values).
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    to_faer(m).singular_values().expect("SVD of a finite matrix")
}

pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn frobenius_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `sigma_{k+1}` in 1-based terms: the largest discarded singular value of a
/// rank-`k` truncation, zero when nothing is discarded.
pub fn tail_singular_value(sv: &[f64], k: usize) -> f64 {
    sv.get(k).copied().unwrap_or(0.0)
}

/// Replaces `m` with `(m + m^T) / 2` (plain transpose, not adjoint).
pub fn symmetrize(m: &mut CMat) {
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = (m[(r, c)] + m[(c, r)]) * 0.5;
            m[(r, c)] = avg;
            m[(c, r)] = avg;
        }
    }
}

/// Rank-`k` truncated SVD, returning `(U, s, V)` with `m ~ U diag(s) V^*`.
pub fn truncated_svd(m: &CMat, k: usize) -> Result<(CMat, Vec<f64>, CMat)> {
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|e| GwError::Eigensolver(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let k = k.min(m.nrows().min(m.ncols()));
    let u_k = CMat::from_fn(m.nrows(), k, |r, c| u[(r, c)]);
    let v_k = CMat::from_fn(m.ncols(), k, |r, c| v[(r, c)]);
    Ok((u_k, (0..k).map(|j| s[j].re).collect(), v_k))
}

/// Eigen-decomposition of a real symmetric matrix with ascending eigenvalues.
///
/// Each eigenvector's sign is fixed so that its entry of largest magnitude
/// (first one on ties) is positive, making the output reproducible.
pub fn symmetric_eigen_sorted(m: RMat) -> Result<(Vec<f64>, RMat)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| GwError::Eigensolver("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = RMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for r in 0..n {
            if col[r].abs() > col[pivot].abs() {
                pivot = r;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(col * sign));
    }
    Ok((values, vectors))
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &RMat) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Spectral norm of a real symmetric matrix.
pub fn symmetric_spectral_norm(m: &RMat) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// 2-norm condition number estimate from singular values.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}
