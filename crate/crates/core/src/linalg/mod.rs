//! Linear-algebra kernels: sparse storage, banded direct solves,
//! quasi-triangular Sylvester/Lyapunov solvers and modal decomposition.

pub mod banded;
pub mod modal;
pub mod quasi;
pub mod sparse;

pub use banded::{rcm_ordering, BandedLu, SingularPivot};
pub use quasi::{solve_lyapunov, solve_sylvester, QuasiTriangular};
pub use sparse::SparseMatrix;

use nalgebra::DMatrix;

use crate::scalar::{Cplx, Real};

/// Lifts a real dense matrix to complex.
pub fn to_complex<T: Real>(m: &DMatrix<T>) -> DMatrix<Cplx<T>> {
    m.map(|v| Cplx::new(v, T::zero()))
}

/// Modified Gram–Schmidt with one reorthogonalization pass.
///
/// Orthonormalizes the columns of `w` against the orthonormal columns of
/// `basis` and against each other. Returns `(Q, H, R, kept)` with
/// `w = basis·H + Q·R` restricted to the kept columns; columns whose
/// remaining norm falls below `drop_tol` times their original norm are
/// dropped.
pub(crate) struct GramSchmidt<T: Real> {
    pub q: DMatrix<T>,
    pub h: DMatrix<T>,
    pub r: DMatrix<T>,
    pub kept: Vec<usize>,
}

pub(crate) fn gram_schmidt<T: Real>(basis: &DMatrix<T>, w: &DMatrix<T>, drop_tol: T) -> GramSchmidt<T> {
    let n = w.nrows();
    let k = basis.ncols();
    let cols = w.ncols();
    let mut h = DMatrix::<T>::zeros(k, cols);
    let mut r = DMatrix::<T>::zeros(cols, cols);
    let mut q_cols: Vec<nalgebra::DVector<T>> = Vec::new();
    let mut kept = Vec::new();
    for c in 0..cols {
        let mut v = w.column(c).into_owned();
        let orig = v.norm();
        for _pass in 0..2 {
            for j in 0..k {
                let coef = basis.column(j).dot(&v);
                h[(j, c)] += coef;
                v.axpy(-coef, &basis.column(j), T::one());
            }
            for (slot, qj) in q_cols.iter().enumerate() {
                let coef = qj.dot(&v);
                r[(slot, c)] += coef;
                v.axpy(-coef, qj, T::one());
            }
        }
        let nrm = v.norm();
        if nrm > drop_tol * orig && nrm > T::zero() {
            r[(q_cols.len(), c)] = nrm;
            q_cols.push(v / nrm);
            kept.push(c);
        }
    }
    let m = q_cols.len();
    let q = if m == 0 {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&q_cols)
    };
    GramSchmidt {
        q,
        h,
        r: r.rows(0, m).into_owned(),
        kept,
    }
}
