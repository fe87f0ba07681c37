//! Sparse direct solves through a reverse Cuthill–McKee reordering followed
//! by a banded LU factorization with partial pivoting.
//!
//! Mechanical system matrices (FEM stiffness, graph Laplacians, their
//! first-order companions) have small bandwidth after RCM, so one
//! factorization costs `O(n·kl·(kl+ku))` and one solve `O(n·(2kl+ku))`.

use std::collections::VecDeque;

use nalgebra::{ComplexField, DMatrix, DVector};

use super::sparse::SparseMatrix;

/// Reverse Cuthill–McKee ordering of the symmetrized sparsity pattern.
///
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering<F: ComplexField + Copy>(a: &SparseMatrix<F>) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let bfs_levels = |start: usize, visited: &[bool]| -> (usize, usize) {
        // returns (farthest node, eccentricity)
        let mut dist = vec![usize::MAX; n];
        let mut queue = VecDeque::from([start]);
        dist[start] = 0;
        let mut last = start;
        while let Some(u) = queue.pop_front() {
            last = match (dist[u], dist[last]) {
                (du, dl) if du > dl || (du == dl && degree[u] < degree[last]) => u,
                _ => last,
            };
            for &v in &adj[u] {
                if !visited[v] && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (last, dist[last])
    };

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node
        let mut start = seed;
        let (mut far, mut ecc) = bfs_levels(start, &visited);
        for _ in 0..8 {
            let (far2, ecc2) = bfs_levels(far, &visited);
            if ecc2 <= ecc {
                break;
            }
            start = far;
            far = far2;
            ecc = ecc2;
        }
            let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            next.sort_by_key(|&v| (degree[v], v));
            for v in next {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Reason a factorization was rejected.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularPivot {
    /// Elimination step (in the original numbering) where the pivot vanished.
    pub index: usize,
    pub magnitude: f64,
}

/// Banded LU factors `P A Pᵀ = Π L U` of a reordered sparse matrix.
#[derive(Clone, Debug)]
pub struct BandedLu<F> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    /// Row-major band storage: row `i` holds columns `i-kl ..= i+ku+kl`.
    band: Vec<F>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
}

impl<F: ComplexField + Copy> BandedLu<F> {
    /// Factorizes `a` with an RCM ordering computed from its pattern.
    pub fn factor(a: &SparseMatrix<F>) -> Result<Self, SingularPivot> {
        let perm = rcm_ordering(a);
        Self::factor_with_ordering(a, perm)
    }

    /// Factorizes `a` with a caller-supplied ordering (`perm[new] = old`),
    /// letting repeated solves with one sparsity pattern share the ordering.
    pub fn factor_with_ordering(a: &SparseMatrix<F>, perm: Vec<usize>) -> Result<Self, SingularPivot> {
        assert!(a.is_square(), "banded LU needs a square matrix");
        let n = a.nrows();
        let pa = a.permute_sym(&perm);
        let (kl, ku) = pa.bandwidths();
        let mut band = vec![F::zero(); n * Self::band_width(kl, ku)];
        for (i, j, v) in pa.triplets() {
            band[Self::band_index(kl, ku, i, j)] += v;
        }
        Self::factor_band(n, kl, ku, band, perm, a.norm_inf())
    }

    /// Row length of the band storage used by [`BandedLu::factor_band`].
    pub(crate) fn band_width(kl: usize, ku: usize) -> usize {
        2 * kl + ku + 1
    }

    /// Position of entry `(i, j)` (already reordered) in the band storage.
    #[inline]
    pub(crate) fn band_index(kl: usize, ku: usize, i: usize, j: usize) -> usize {
        i * Self::band_width(kl, ku) + (j + kl - i)
    }

    /// Factorizes a matrix given directly in band storage (reordered by
    /// `perm`, entries placed by [`BandedLu::band_index`]); `scale` is its
    /// infinity norm, used for the singularity test.
    pub(crate) fn factor_band(
        n: usize,
        kl: usize,
        ku: usize,
        mut band: Vec<F>,
        perm: Vec<usize>,
        scale: F::RealField,
    ) -> Result<Self, SingularPivot> {
        let width = Self::band_width(kl, ku);
        let idx = |i: usize, c: usize| i * width + (c + kl - i);
        let tiny = scale
            * <F::RealField as approx::AbsDiffEq>::default_epsilon()
            * nalgebra::convert::<f64, F::RealField>(64.0);

        let mut pivots = vec![0; n];
        for j in 0..n {
            let last_row = (j + kl).min(n.saturating_sub(1));
            let mut p = j;
            let mut best = band[idx(j, j)].modulus();
            for i in j + 1..=last_row {
                let m = band[idx(i, j)].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            pivots[j] = p;
            if !(best > tiny) {
                return Err(SingularPivot {
                    index: perm[j],
                    magnitude: nalgebra::try_convert::<F::RealField, f64>(best).unwrap_or(0.0),
                });
            }
            let last_col = (j + ku + kl).min(n - 1);
            if p != j {
                for c in j..=last_col {
                    band.swap(idx(j, c), idx(p, c));
                }
            }
            let pivot = band[idx(j, j)];
            for i in j + 1..=last_row {
                let l = band[idx(i, j)] / pivot;
                if l == F::zero() {
                    continue;
                }
                band[idx(i, j)] = l;
                for c in j + 1..=last_col {
                    let u = band[idx(j, c)];
                    if u != F::zero() {
                        band[idx(i, c)] -= l * u;
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            width,
            band,
            pivots,
            perm,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower/upper bandwidth of the reordered matrix.
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn ordering(&self) -> &[usize] {
        &self.perm
    }

    #[inline]
    fn at(&self, i: usize, c: usize) -> F {
        self.band[i * self.width + (c + self.kl - i)]
    }

    fn solve_in_place(&self, x: &mut [F]) {
        let n = self.n;
        // forward: apply row swaps and unit-lower multipliers
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                x.swap(j, p);
            }
            let xj = x[j];
            if xj == F::zero() {
                continue;
            }
            for i in j + 1..=(j + self.kl).min(n - 1) {
                x[i] -= self.at(i, j) * xj;
            }
        }
        // backward with U (upper bandwidth ku + kl)
        for i in (0..n).rev() {
            let mut acc = x[i];
            for c in i + 1..=(i + self.ku + self.kl).min(n - 1) {
                acc -= self.at(i, c) * x[c];
            }
            x[i] = acc / self.at(i, i);
        }
    }

    /// Solves in the reordered numbering, in place.
    pub(crate) fn solve_reordered(&self, x: &mut [F]) {
        assert_eq!(x.len(), self.n, "rhs length");
        self.solve_in_place(x);
    }

    pub fn solve_vec(&self, b: &DVector<F>) -> DVector<F> {
        assert_eq!(b.len(), self.n, "rhs length");
        let mut x: Vec<F> = self.perm.iter().map(|&old| b[old]).collect();
        self.solve_in_place(&mut x);
        let mut out = DVector::zeros(self.n);
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    pub fn solve(&self, b: &DMatrix<F>) -> DMatrix<F> {
        assert_eq!(b.nrows(), self.n, "rhs rows");
        let mut out = DMatrix::zeros(self.n, b.ncols());
        let mut x = vec![F::zero(); self.n];
        for c in 0..b.ncols() {
            for (new, &old) in self.perm.iter().enumerate() {
                x[new] = b[(old, c)];
            }
            self.solve_in_place(&mut x);
            for (new, &old) in self.perm.iter().enumerate() {
                out[(old, c)] = x[new];
            }
        }
        out
    }
}
