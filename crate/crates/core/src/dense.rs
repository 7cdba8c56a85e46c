//! Small dense complex linear algebra over nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

pub type CMatrix = DMatrix<C64>;

pub fn from_rows(rows: &[Vec<C64>]) -> CMatrix {
    let n = rows.len();
    CMatrix::from_fn(n, n, |r, c| rows[r][c])
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// Column `k` of the returned matrix is the eigenvector of eigenvalue `k`.
pub fn hermitian_eigen(m: CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), m);
    }
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// Rows and columns that are exactly zero are split off first: each adds an
/// exact zero eigenvalue, and nalgebra's tridiagonal reduction can emit NaN
/// when they are left in.
pub fn hermitian_eigenvalues(m: CMatrix) -> Vec<f64> {
    let n = m.nrows();
    let keep: Vec<usize> = (0..n).filter(|&i| m.row(i).iter().any(|z| *z != C64::new(0.0, 0.0))).collect();
    let mut v = vec![0.0; n - keep.len()];
    if !keep.is_empty() {
        let sub = CMatrix::from_fn(keep.len(), keep.len(), |r, c| m[(keep[r], keep[c])]);
        v.extend(sub.symmetric_eigenvalues().iter().copied());
    }
    v.sort_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rows_are_split_off() {
        // weak coherent state padded with empty modes: a nearly rank-one
        // matrix that is mostly exact zeros
        let d = 216;
        let mut psi = vec![C64::new(0.0, 0.0); d];
        let mut c = 1.0;
        for n in 0..6 {
            psi[n * 36] = C64::new(0.0, -1.0).powu(n as u32) * c;
            c *= 1e-3 / ((n + 1) as f64).sqrt();
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let m = CMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / norm);
        let v = hermitian_eigenvalues(m);
        assert_eq!(v.len(), d);
        assert!(v.iter().all(|x| x.is_finite()));
        assert!((v[d - 1] - 1.0).abs() < 1e-12);
        assert!(v[0].abs() < 1e-12);
    }
}
