use nalgebra::{ComplexField, DMatrix, DVector, RealField};
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
///
/// Column indices inside each row are sorted and unique. Explicit zeros may
/// be stored; they are harmless for every routine in this crate.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<F> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<F>,
}

impl<F: ComplexField + Copy> SparseMatrix<F> {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, F)]) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, F)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::dim(
                    "sparse triplet",
                    format!("index within {nrows}x{ncols}"),
                    format!("({i}, {j})"),
                ));
            }
            per_row[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for mut row in per_row {
            row.sort_by_key(|&(j, _)| j);
            let mut iter = row.into_iter().peekable();
            while let Some((j, mut v)) = iter.next() {
                while let Some(&(j2, v2)) = iter.peek() {
                    if j2 != j {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![F::one(); n])
    }

    pub fn from_diagonal(diag: &[F]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Stores every entry of `m` whose value is not exactly zero.
    pub fn from_dense(m: &DMatrix<F>) -> Self {
        let mut row_ptr = Vec::with_capacity(m.nrows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != F::zero() {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: m.nrows(),
            ncols: m.ncols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Entries of row `i` as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, F)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, F)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => F::zero(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<F> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t).expect("transpose indices are in range")
    }

    pub fn map<G: ComplexField + Copy>(&self, f: impl Fn(F) -> G) -> SparseMatrix<G> {
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, alpha: F) -> Self {
        self.map(|v| v * alpha)
    }

    /// `alpha * self + beta * other`.
    pub fn lin_comb(&self, alpha: F, other: &Self, beta: F) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "sparse linear combination",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        let mut t: Vec<_> = self.triplets().map(|(i, j, v)| (i, j, alpha * v)).collect();
        t.extend(other.triplets().map(|(i, j, v)| (i, j, beta * v)));
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn mul_vec(&self, x: &DVector<F>) -> DVector<F> {
        assert_eq!(x.len(), self.ncols, "sparse mat-vec dimension");
        DVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|i| self.row(i).fold(F::zero(), |acc, (j, v)| acc + v * x[j])),
        )
    }

    pub fn mul_dense(&self, x: &DMatrix<F>) -> DMatrix<F> {
        assert_eq!(x.nrows(), self.ncols, "sparse mat-mat dimension");
        let mut out = DMatrix::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            for i in 0..self.nrows {
                let mut acc = F::zero();
                for (j, v) in self.row(i) {
                    acc += v * x[(j, c)];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }

    /// Block-diagonal concatenation.
    pub fn block_diag(blocks: &[&Self]) -> Self {
        let nrows = blocks.iter().map(|b| b.nrows).sum();
        let ncols = blocks.iter().map(|b| b.ncols).sum();
        let mut t = Vec::new();
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            t.extend(b.triplets().map(|(i, j, v)| (i + r0, j + c0, v)));
            r0 += b.nrows;
            c0 += b.ncols;
        }
        Self::from_triplets(nrows, ncols, &t).expect("block indices are in range")
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> F::RealField {
        self.values
            .iter()
            .fold(F::RealField::zero(), |acc, v| acc + v.modulus_squared())
            .sqrt()
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> F::RealField {
        (0..self.nrows)
            .map(|i| self.row(i).fold(F::RealField::zero(), |acc, (_, v)| acc + v.modulus()))
            .fold(F::RealField::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn diagonal(&self) -> Vec<F> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Sum of all entries, i.e. `1ᵀ X 1`.
    pub fn sum(&self) -> F {
        self.values.iter().fold(F::zero(), |a, &v| a + v)
    }

    /// `‖X − Xᵀ‖_F / ‖X‖_F` (zero for the zero matrix).
    pub fn asymmetry(&self) -> F::RealField {
        if !self.is_square() {
            return F::RealField::max_value().unwrap_or_else(F::RealField::one);
        }
        let norm = self.norm_fro();
        if norm == F::RealField::zero() {
            return norm;
        }
        let diff = self
            .lin_comb(F::one(), &self.transpose(), -F::one())
            .expect("square");
        diff.norm_fro() / norm
    }

    /// `(X + Xᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        let half = F::from_real(nalgebra::convert(0.5));
        self.lin_comb(half, &self.transpose(), half).expect("square")
    }

    /// Removes row and column `k`.
    pub fn eliminate(&self, k: usize) -> Self {
        let shift = |i: usize| if i > k { i - 1 } else { i };
        let t: Vec<_> = self
            .triplets()
            .filter(|&(i, j, _)| i != k && j != k)
            .map(|(i, j, v)| (shift(i), shift(j), v))
            .collect();
        Self::from_triplets(self.nrows - 1, self.ncols - 1, &t).expect("in range")
    }

    /// Symmetric permutation `P X Pᵀ` where `perm[new] = old`.
    pub fn permute_sym(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let t: Vec<_> = self.triplets().map(|(i, j, v)| (inv[i], inv[j], v)).collect();
        Self::from_triplets(self.nrows, self.ncols, &t).expect("in range")
    }

    /// Lower and upper bandwidth.
    pub fn bandwidths(&self) -> (usize, usize) {
        self.triplets().fold((0, 0), |(kl, ku), (i, j, _)| {
            (kl.max(i.saturating_sub(j)), ku.max(j.saturating_sub(i)))
        })
    }
}

impl<F: ComplexField + Copy> From<&DMatrix<F>> for SparseMatrix<F> {
    fn from(m: &DMatrix<F>) -> Self {
        Self::from_dense(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]).unwrap();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn eliminate_drops_row_and_column() {
        let d = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let m = SparseMatrix::from_dense(&d).eliminate(0);
        assert_eq!(m.to_dense(), DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 8.0, 9.0]));
    }

    #[test]
    fn asymmetry_of_symmetric_matrix_is_zero() {
        let d = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        assert_eq!(SparseMatrix::from_dense(&d).asymmetry(), 0.0);
        let d = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 0.0, 2.0]);
        assert!(SparseMatrix::from_dense(&d).asymmetry() > 0.1);
    }

    #[test]
    fn permutation_roundtrip() {
        let d = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 5.0, 6.0, 0.0, 6.0, 9.0]);
        let m = SparseMatrix::from_dense(&d);
        let p = m.permute_sym(&[2, 0, 1]);
        assert_eq!(p.get(0, 0), 9.0);
        assert_eq!(p.get(0, 2), 6.0);
        let back = p.permute_sym(&[1, 2, 0]);
        assert_eq!(back, m);
    }
}
