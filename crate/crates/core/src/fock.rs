//! Truncated multimode bosonic Fock space and the sparse complex operator
//! algebra built on top of it.
//!
//! States are occupation tuples `(n_0, n_1, ..., n_{M-1})` with every
//! `n_k <= per_mode_cap` and, optionally, `sum n_k <= total_cap`. They are
//! enumerated in lexicographic order (mode 0 most significant), so operator
//! matrices are reproducible bit-for-bit.

use std::fmt;

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Default ceiling on the number of basis states.
pub const DEFAULT_MAX_STATES: usize = 10_000;

const NO_STATE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("per-mode photon cap must be at least 1 (got 0), which would forbid all excitation")]
    ZeroCap,
    #[error("a basis needs at least one mode")]
    NoModes,
    #[error("total photon cap {total} is below the per-mode cap {per_mode}")]
    TotalCapTooSmall { total: usize, per_mode: usize },
    #[error("basis would contain {size} states, above the configured limit of {limit}")]
    TooManyStates { size: usize, limit: usize },
    #[error("mode index {mode} out of range for a {num_modes}-mode basis")]
    BadMode { mode: usize, num_modes: usize },
    #[error("operator dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Enumerated truncated Fock basis.
#[derive(Clone, PartialEq, Eq)]
pub struct BasisIndex {
    num_modes: usize,
    per_mode_cap: usize,
    total_cap: Option<usize>,
    // flat occupation table, `num_modes` entries per state
    occupations: Vec<u16>,
    // mixed-radix table over the full hypercube -> dense index
    lookup: Vec<u32>,
}

impl fmt::Debug for BasisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisIndex")
            .field("num_modes", &self.num_modes)
            .field("per_mode_cap", &self.per_mode_cap)
            .field("total_cap", &self.total_cap)
            .field("dim", &self.dim())
            .finish()
    }
}

/// Build a basis with the default state limit.
pub fn build_basis(
    num_modes: usize,
    per_mode_cap: usize,
    total_cap: Option<usize>,
) -> Result<BasisIndex, FockError> {
    BasisIndex::with_limit(num_modes, per_mode_cap, total_cap, DEFAULT_MAX_STATES)
}

impl BasisIndex {
    pub fn with_limit(
        num_modes: usize,
        per_mode_cap: usize,
        total_cap: Option<usize>,
        max_states: usize,
    ) -> Result<Self, FockError> {
        if num_modes == 0 {
            return Err(FockError::NoModes);
        }
        if per_mode_cap == 0 {
            return Err(FockError::ZeroCap);
        }
        if let Some(total) = total_cap {
            if total < per_mode_cap {
                return Err(FockError::TotalCapTooSmall { total, per_mode: per_mode_cap });
            }
        }
        let radix = per_mode_cap + 1;
        let cube = radix
            .checked_pow(num_modes as u32)
            .ok_or(FockError::TooManyStates { size: usize::MAX, limit: max_states })?;
        if total_cap.is_none() && cube > max_states {
            return Err(FockError::TooManyStates { size: cube, limit: max_states });
        }
        // The lookup table spans the whole hypercube; refuse absurd ones even
        // when the total cap would make the basis itself small.
        if cube > 64 * max_states.max(DEFAULT_MAX_STATES) {
            return Err(FockError::TooManyStates { size: cube, limit: max_states });
        }

        let mut occupations = Vec::new();
        let mut lookup = vec![NO_STATE; cube];
        let mut occ = vec![0usize; num_modes];
        let mut count = 0usize;
        for flat in 0..cube {
            // decode with mode 0 most significant => lexicographic order
            let mut rem = flat;
            for k in (0..num_modes).rev() {
                occ[k] = rem % radix;
                rem /= radix;
            }
            if let Some(total) = total_cap {
                if occ.iter().sum::<usize>() > total {
                    continue;
                }
            }
            if count >= max_states {
                return Err(FockError::TooManyStates { size: count + 1, limit: max_states });
            }
            lookup[flat] = count as u32;
            occupations.extend(occ.iter().map(|&n| n as u16));
            count += 1;
        }
        Ok(Self { num_modes, per_mode_cap, total_cap, occupations, lookup })
    }

    pub fn dim(&self) -> usize {
        self.occupations.len() / self.num_modes
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn per_mode_cap(&self) -> usize {
        self.per_mode_cap
    }

    pub fn total_cap(&self) -> Option<usize> {
        self.total_cap
    }

    /// Occupations of basis state `index`.
    pub fn state(&self, index: usize) -> &[u16] {
        &self.occupations[index * self.num_modes..(index + 1) * self.num_modes]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u16]> {
        self.occupations.chunks_exact(self.num_modes)
    }

    /// Dense index of an occupation tuple, if it lies inside the basis.
    pub fn index_of(&self, occ: &[usize]) -> Option<usize> {
        if occ.len() != self.num_modes {
            return None;
        }
        let radix = self.per_mode_cap + 1;
        let mut flat = 0usize;
        for &n in occ {
            if n > self.per_mode_cap {
                return None;
            }
            flat = flat * radix + n;
        }
        match self.lookup[flat] {
            NO_STATE => None,
            i => Some(i as usize),
        }
    }

    pub fn total_photons(&self, index: usize) -> usize {
        self.state(index).iter().map(|&n| n as usize).sum()
    }

    fn check_mode(&self, mode: usize) -> Result<(), FockError> {
        if mode >= self.num_modes {
            Err(FockError::BadMode { mode, num_modes: self.num_modes })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Create,
    Annihilate,
}

/// Creation or annihilation operator on one mode. Matrix elements leading out
/// of the basis (creation at a cap) are dropped.
pub fn ladder(basis: &BasisIndex, mode: usize, kind: Ladder) -> Result<SparseOperator, FockError> {
    basis.check_mode(mode)?;
    let dim = basis.dim();
    let mut triplets = Vec::with_capacity(dim);
    let mut occ = vec![0usize; basis.num_modes()];
    for col in 0..dim {
        for (o, &n) in occ.iter_mut().zip(basis.state(col)) {
            *o = n as usize;
        }
        let n = occ[mode];
        let amp = match kind {
            Ladder::Annihilate => {
                if n == 0 {
                    continue;
                }
                occ[mode] = n - 1;
                (n as f64).sqrt()
            }
            Ladder::Create => {
                occ[mode] = n + 1;
                ((n + 1) as f64).sqrt()
            }
        };
        if let Some(row) = basis.index_of(&occ) {
            triplets.push((row, col, C64::new(amp, 0.0)));
        }
    }
    Ok(SparseOperator::from_triplets(dim, triplets))
}

/// `a_k^dagger a_k`, built directly as a diagonal.
pub fn number(basis: &BasisIndex, mode: usize) -> Result<SparseOperator, FockError> {
    basis.check_mode(mode)?;
    Ok(SparseOperator::diagonal(
        (0..basis.dim()).map(|i| C64::new(basis.state(i)[mode] as f64, 0.0)),
    ))
}

/// Total photon number operator.
pub fn total_number(basis: &BasisIndex) -> SparseOperator {
    SparseOperator::diagonal((0..basis.dim()).map(|i| C64::new(basis.total_photons(i) as f64, 0.0)))
}

/// Square complex matrix in compressed sparse row form.
///
/// Column indices are sorted within each row and exact zeros are never
/// stored.
#[derive(Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl fmt::Debug for SparseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SparseOperator(dim={}, nnz={})", self.dim, self.nnz())
    }
}

impl SparseOperator {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(std::iter::repeat_n(C64::new(1.0, 0.0), dim))
    }

    pub fn diagonal(diag: impl IntoIterator<Item = C64>) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (i, v) in diag.into_iter().enumerate() {
            if v != C64::new(0.0, 0.0) {
                col_idx.push(i);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { dim: row_ptr.len() - 1, row_ptr, col_idx, values }
    }

    /// Assemble from `(row, col, value)` triplets. Duplicates are summed and
    /// entries that sum to exactly zero are dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            if rows.last() == Some(&r) && col_idx.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        let zero = C64::new(0.0, 0.0);
        let mut k = 0;
        for i in 0..values.len() {
            if values[i] != zero {
                rows[k] = rows[i];
                col_idx[k] = col_idx[i];
                values[k] = values[i];
                k += 1;
            }
        }
        rows.truncate(k);
        col_idx.truncate(k);
        values.truncate(k);
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { dim, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterate over stored `(row, col, value)` entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    /// Stored entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[span.clone()].binary_search(&col) {
            Ok(k) => self.values[span.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    fn check_dim(&self, other: &Self) -> Result<(), FockError> {
        if self.dim != other.dim {
            Err(FockError::DimensionMismatch { left: self.dim, right: other.dim })
        } else {
            Ok(())
        }
    }

    pub fn adjoint(&self) -> Self {
        let triplets = self.iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.dim, triplets)
    }

    pub fn transpose(&self) -> Self {
        let triplets = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.dim, triplets)
    }

    pub fn scale(&self, s: C64) -> Self {
        if s == C64::new(0.0, 0.0) {
            return Self::zeros(self.dim);
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Result<Self, FockError> {
        self.check_dim(other)?;
        let triplets = self.iter().chain(other.iter()).collect();
        Ok(Self::from_triplets(self.dim, triplets))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FockError> {
        self.add(&other.scale_real(-1.0))
    }

    /// Sparse matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self, FockError> {
        self.check_dim(other)?;
        let zero = C64::new(0.0, 0.0);
        let mut acc = vec![zero; self.dim];
        let mut mark = vec![usize::MAX; self.dim];
        let mut touched = Vec::new();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.dim {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = zero;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c] != zero {
                    col_idx.push(c);
                    values.push(acc[c]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { dim: self.dim, row_ptr, col_idx, values })
    }

    /// `[self, other] = self*other - other*self`.
    pub fn commutator(&self, other: &Self) -> Result<Self, FockError> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `max |A - A^dagger|` over all entries.
    pub fn hermiticity_error(&self) -> f64 {
        self.sub(&self.adjoint()).map(|d| d.max_abs()).unwrap_or(f64::INFINITY)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `y += alpha * A x`.
    pub fn apply_add(&self, x: &[C64], alpha: C64, y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (r, yr) in y.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let mut acc = C64::new(0.0, 0.0);
            for (c, v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                acc += v * x[*c];
            }
            *yr += alpha * acc;
        }
    }

    /// Dense row-major copy, for small operators and tests.
    pub fn to_dense(&self) -> Vec<Vec<C64>> {
        let mut out = vec![vec![C64::new(0.0, 0.0); self.dim]; self.dim];
        for (r, c, v) in self.iter() {
            out[r][c] = v;
        }
        out
    }

    /// Restrict to the rows and columns listed in `indices`, in that order.
    pub fn submatrix(&self, indices: &[usize]) -> Vec<Vec<C64>> {
        indices
            .iter()
            .map(|&r| indices.iter().map(|&c| self.get(r, c)).collect())
            .collect()
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(build_basis(3, 1, None).unwrap().dim(), 8);
        assert_eq!(build_basis(3, 10, None).unwrap().dim(), 1331);
        // brute force count of triples with n0+n1+n2 <= 4
        let mut count = 0;
        for a in 0..=4 {
            for b in 0..=4 {
                for d in 0..=4 {
                    if a + b + d <= 4 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, 35);
        assert_eq!(build_basis(3, 4, Some(4)).unwrap().dim(), count);
    }

    #[test]
    fn basis_errors() {
        assert_eq!(build_basis(3, 0, None), Err(FockError::ZeroCap));
        assert!(matches!(build_basis(3, 4, Some(3)), Err(FockError::TotalCapTooSmall { .. })));
        assert!(matches!(build_basis(3, 30, None), Err(FockError::TooManyStates { .. })));
        assert!(BasisIndex::with_limit(3, 30, None, 100_000).is_ok());
    }

    #[test]
    fn lexicographic_order_and_lookup() {
        let b = build_basis(3, 2, Some(3)).unwrap();
        let states: Vec<Vec<u16>> = b.states().map(|s| s.to_vec()).collect();
        let mut sorted = states.clone();
        sorted.sort();
        assert_eq!(states, sorted);
        for (i, s) in b.states().enumerate() {
            let occ: Vec<usize> = s.iter().map(|&n| n as usize).collect();
            assert_eq!(b.index_of(&occ), Some(i));
        }
        assert_eq!(b.index_of(&[2, 2, 0]), None);
        assert_eq!(b.index_of(&[3, 0, 0]), None);
    }

    #[test]
    fn ladder_examples() {
        let b = build_basis(3, 3, None).unwrap();
        let a0 = ladder(&b, 0, Ladder::Annihilate).unwrap();
        let ad0 = ladder(&b, 0, Ladder::Create).unwrap();
        let i100 = b.index_of(&[1, 0, 0]).unwrap();
        let i000 = b.index_of(&[0, 0, 0]).unwrap();
        assert_eq!(a0.get(i000, i100), c(1.0));

        let top = b.index_of(&[3, 0, 0]).unwrap();
        let mut v = vec![c(0.0); b.dim()];
        v[top] = c(1.0);
        assert!(ad0.apply(&v).iter().all(|z| z.norm() == 0.0));

        let n0 = ad0.matmul(&a0).unwrap();
        let i200 = b.index_of(&[2, 0, 0]).unwrap();
        assert!((n0.get(i200, i200) - c(2.0)).norm() < 1e-14);
        assert!(matches!(ladder(&b, 3, Ladder::Create), Err(FockError::BadMode { .. })));
    }

    #[test]
    fn canonical_commutator_away_from_cap() {
        let b = build_basis(3, 4, None).unwrap();
        for k in 0..3 {
            let a = ladder(&b, k, Ladder::Annihilate).unwrap();
            let ad = a.adjoint();
            assert_eq!(ad, ladder(&b, k, Ladder::Create).unwrap());
            let comm = a.commutator(&ad).unwrap();
            for i in 0..b.dim() {
                let n = b.state(i)[k] as usize;
                for (col, v) in comm.row(i) {
                    if n < b.per_mode_cap() {
                        assert_eq!(col, i);
                        assert!((v - c(1.0)).norm() < 1e-15);
                    } else {
                        // at the cap: [a, a^dag] = -N_max
                        assert_eq!(col, i);
                        assert!((v - c(-(n as f64))).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn number_operator_matches_labels() {
        let b = build_basis(3, 3, Some(5)).unwrap();
        for k in 0..3 {
            let a = ladder(&b, k, Ladder::Annihilate).unwrap();
            let n = a.adjoint().matmul(&a).unwrap();
            let direct = number(&b, k).unwrap();
            assert_eq!(n.nnz(), direct.nnz());
            for (r, col, v) in n.iter() {
                assert_eq!(r, col);
                assert!((v - direct.get(r, r)).norm() < 1e-13);
                assert_eq!(v.re.round(), b.state(r)[k] as f64);
            }
        }
    }

    #[test]
    fn compose_dimension_mismatch() {
        let a = SparseOperator::identity(3);
        let b = SparseOperator::identity(4);
        assert!(matches!(a.add(&b), Err(FockError::DimensionMismatch { .. })));
        assert!(matches!(a.matmul(&b), Err(FockError::DimensionMismatch { .. })));
    }

    #[test]
    fn triplets_sum_and_drop_zeros() {
        let op = SparseOperator::from_triplets(
            2,
            vec![(0, 1, c(1.0)), (0, 1, c(-1.0)), (1, 0, c(2.0)), (1, 0, c(0.5))],
        );
        assert_eq!(op.nnz(), 1);
        assert_eq!(op.get(1, 0), c(2.5));
    }

    #[test]
    fn builds_are_deterministic() {
        let b1 = build_basis(3, 4, None).unwrap();
        let b2 = build_basis(3, 4, None).unwrap();
        assert_eq!(b1, b2);
        let x1 = ladder(&b1, 1, Ladder::Create).unwrap().matmul(&ladder(&b1, 2, Ladder::Annihilate).unwrap());
        let x2 = ladder(&b2, 1, Ladder::Create).unwrap().matmul(&ladder(&b2, 2, Ladder::Annihilate).unwrap());
        assert_eq!(x1, x2);
    }
}
