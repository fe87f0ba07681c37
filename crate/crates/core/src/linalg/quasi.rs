//! Bartels–Stewart style solvers on block upper-triangular matrices with
//! 1×1 and 2×2 diagonal blocks (real Schur forms and modal forms alike).

use nalgebra::{DMatrix, Schur};

use crate::error::{Error, Result};
use crate::scalar::{cplx, Cplx, Real};

/// Block upper-triangular matrix with 1×1/2×2 diagonal blocks.
///
/// Off-diagonal blocks that are exactly zero are skipped by the solvers, so
/// block-diagonal inputs (modal forms) are solved in time proportional to
/// the number of block pairs.
#[derive(Clone, Debug)]
pub struct QuasiTriangular<T> {
    t: DMatrix<T>,
    /// `(start, size)` of each diagonal block.
    blocks: Vec<(usize, usize)>,
    /// For block row `i`, the block columns `l > i` with a nonzero block.
    coupling: Vec<Vec<usize>>,
}

impl<T: Real> QuasiTriangular<T> {
    /// Wraps a quasi-triangular matrix, discovering its block structure.
    ///
    /// Subdiagonal entries negligible against their diagonal neighbours are
    /// treated as zero. Fails if the matrix is not quasi-triangular.
    pub fn new(mut t: DMatrix<T>) -> Result<Self> {
        let n = t.nrows();
        if t.ncols() != n {
            return Err(Error::dim("quasi-triangular matrix", "square", format!("{}x{}", n, t.ncols())));
        }
        let eps = T::machine_eps();
        for i in 1..n {
            for j in 0..i.saturating_sub(1) {
                if t[(i, j)] != T::zero() {
                    return Err(Error::EigenFailure(format!(
                        "matrix is not quasi-triangular: entry ({i}, {j}) is nonzero"
                    )));
                }
            }
            let sub = t[(i, i - 1)];
            if sub != T::zero() && sub.abs() <= eps * (t[(i, i)].abs() + t[(i - 1, i - 1)].abs()) {
                t[(i, i - 1)] = T::zero();
            }
        }
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < n {
            if i + 1 < n && t[(i + 1, i)] != T::zero() {
                if i + 2 < n && t[(i + 2, i + 1)] != T::zero() {
                    return Err(Error::EigenFailure(format!(
                        "unreduced 3x3 block at row {i} (Schur iteration did not converge)"
                    )));
                }
                blocks.push((i, 2));
                i += 2;
            } else {
                blocks.push((i, 1));
                i += 1;
            }
        }
        let coupling = (0..blocks.len())
            .map(|bi| {
                let (r0, rs) = blocks[bi];
                (bi + 1..blocks.len())
                    .filter(|&bl| {
                        let (c0, cs) = blocks[bl];
                        (r0..r0 + rs).any(|r| (c0..c0 + cs).any(|c| t[(r, c)] != T::zero()))
                    })
                    .collect()
            })
            .collect();
        Ok(Self { t, blocks, coupling })
    }

    /// Real Schur form `A = Q T Qᵀ` of a dense matrix.
    pub fn schur(a: DMatrix<T>) -> Result<(DMatrix<T>, Self)> {
        let n = a.nrows();
        let max_iter = 100 * n.max(10);
        let schur = Schur::try_new(a, T::machine_eps(), max_iter)
            .ok_or_else(|| Error::EigenFailure(format!("real Schur decomposition of order {n} did not converge")))?;
        let (q, t) = schur.unpack();
        Ok((q, Self::new(t)?))
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.t
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.t
    }

    /// Eigenvalues read off the diagonal blocks.
    pub fn eigenvalues(&self) -> Vec<Cplx<T>> {
        let mut out = Vec::with_capacity(self.dim());
        for &(s, size) in &self.blocks {
            if size == 1 {
                out.push(cplx(self.t[(s, s)], T::zero()));
            } else {
                let (a, b, c, d) = (self.t[(s, s)], self.t[(s, s + 1)], self.t[(s + 1, s)], self.t[(s + 1, s + 1)]);
                let half = T::lit(0.5);
                let mean = (a + d) * half;
                let diff = (a - d) * half;
                let disc = diff * diff + b * c;
                if disc >= T::zero() {
                    let r = disc.sqrt();
                    out.push(cplx(mean + r, T::zero()));
                    out.push(cplx(mean - r, T::zero()));
                } else {
                    let r = (-disc).sqrt();
                    out.push(cplx(mean, r));
                    out.push(cplx(mean, -r));
                }
            }
        }
        out
    }

    /// Checks that every eigenvalue satisfies `Re λ < -margin·max|λ|`.
    pub fn check_stable(&self, rel_margin: T) -> Result<()> {
        let eigs = self.eigenvalues();
        let scale = eigs.iter().fold(T::zero(), |m, z| m.max(z.re.hypot(z.im)));
        let margin = rel_margin * scale;
        for z in eigs {
            if !(z.re < -margin) {
                return Err(Error::Unstable {
                    re: z.re.as_f64(),
                    im: z.im.as_f64(),
                    margin: margin.as_f64(),
                });
            }
        }
        Ok(())
    }
}

/// Solves `T1 X + X T2ᵀ + W = 0` for `X` (`n1 × n2`).
pub fn solve_sylvester<T: Real>(t1: &QuasiTriangular<T>, t2: &QuasiTriangular<T>, w: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (n1, n2) = (t1.dim(), t2.dim());
    if w.nrows() != n1 || w.ncols() != n2 {
        return Err(Error::dim("Sylvester right-hand side", format!("{n1}x{n2}"), format!("{}x{}", w.nrows(), w.ncols())));
    }
    let mut x = DMatrix::<T>::zeros(n1, n2);
    let a = &t1.t;
    let b = &t2.t;
    let mut rhs_col = vec![T::zero(); n1 * 2];
    for bj in (0..t2.blocks.len()).rev() {
        let (c0, q) = t2.blocks[bj];
        // R_j = -W_j - Σ_{k>j} X_k T2_jkᵀ, stored column-major in rhs_col
        for jj in 0..q {
            for r in 0..n1 {
                rhs_col[jj * n1 + r] = -w[(r, c0 + jj)];
            }
        }
        for &bk in &t2.coupling[bj] {
            let (k0, ks) = t2.blocks[bk];
            for jj in 0..q {
                for kk in 0..ks {
                    let coef = b[(c0 + jj, k0 + kk)];
                    if coef == T::zero() {
                        continue;
                    }
                    for r in 0..n1 {
                        rhs_col[jj * n1 + r] -= x[(r, k0 + kk)] * coef;
                    }
                }
            }
        }
        for bi in (0..t1.blocks.len()).rev() {
            let (r0, p) = t1.blocks[bi];
            let mut rhs = [T::zero(); 4];
            for jj in 0..q {
                for ii in 0..p {
                    let mut v = rhs_col[jj * n1 + r0 + ii];
                    for &bl in &t1.coupling[bi] {
                        let (l0, ls) = t1.blocks[bl];
                        for ll in 0..ls {
                            v -= a[(r0 + ii, l0 + ll)] * x[(l0 + ll, c0 + jj)];
                        }
                    }
                    rhs[jj * p + ii] = v;
                }
            }
            let y = solve_small_sylvester(a, r0, p, b, c0, q, &rhs)?;
            for jj in 0..q {
                for ii in 0..p {
                    x[(r0 + ii, c0 + jj)] = y[jj * p + ii];
                }
            }
        }
    }
    Ok(x)
}

/// Solves `T X + X Tᵀ + Q = 0`.
pub fn solve_lyapunov<T: Real>(t: &QuasiTriangular<T>, q: &DMatrix<T>) -> Result<DMatrix<T>> {
    let x = solve_sylvester(t, t, q)?;
    Ok((&x + x.transpose()) * T::lit(0.5))
}

/// `A_ii Y + Y B_jjᵀ = R` for blocks of size `p, q ≤ 2`, column-major vectors.
fn solve_small_sylvester<T: Real>(
    a: &DMatrix<T>,
    r0: usize,
    p: usize,
    b: &DMatrix<T>,
    c0: usize,
    q: usize,
    rhs: &[T; 4],
) -> Result<[T; 4]> {
    let n = p * q;
    let mut m = [[T::zero(); 4]; 4];
    // (I_q ⊗ A_ii + B_jj ⊗ I_p)
    for jj in 0..q {
        for ii in 0..p {
            let row = jj * p + ii;
            for kk in 0..p {
                m[row][jj * p + kk] += a[(r0 + ii, r0 + kk)];
            }
            for ll in 0..q {
                m[row][ll * p + ii] += b[(c0 + jj, c0 + ll)];
            }
        }
    }
    let mut v = *rhs;
    // Gaussian elimination with partial pivoting
    let scale = m.iter().take(n).flat_map(|r| r.iter().take(n)).fold(T::zero(), |s, x| s.max(x.abs()));
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if !(m[piv][col].abs() > scale * T::machine_eps()) {
            return Err(Error::EigenFailure(
                "Sylvester operator is singular: the two spectra contain λ and -λ".into(),
            ));
        }
        m.swap(col, piv);
        v.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                let t = m[col][c];
                m[r][c] -= f * t;
            }
            let t = v[col];
            v[r] -= f * t;
        }
    }
    let mut y = [T::zero(); 4];
    for r in (0..n).rev() {
        let mut acc = v[r];
        for c in r + 1..n {
            acc -= m[r][c] * y[c];
        }
        y[r] = acc / m[r][r];
    }
    Ok(y)
}
