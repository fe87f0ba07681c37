//! Shifted resolvent solves and rational Krylov bases carrying their
//! Sylvester relation `A V = E V S + B L`.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{gram_schmidt, rcm_ordering, to_complex, BandedLu, SparseMatrix};
use crate::scalar::{Cplx, Real};
use crate::system::{singular, StateSpaceSystem};

/// Columns whose norm shrinks below this fraction during orthogonalization
/// are treated as linearly dependent.
pub(crate) const DROP_TOL: f64 = 1e-10;

/// Solves `(σE − A) X = R` repeatedly for one system.
///
/// Second-order systems are solved through `σ²M + σR + K` (half the size,
/// band of the mechanical matrices). The fill-reducing ordering and the band
/// storage of the pencil terms are prepared once and shared across shifts.
pub struct PencilSolver<'a, T: Real> {
    sys: &'a StateSpaceSystem<T>,
    prepared: OnceLock<Prepared<T>>,
}

/// Reordered band storage of the pencil terms.
struct Prepared<T: Real> {
    n: usize,
    perm: Vec<usize>,
    kl: usize,
    ku: usize,
    /// `[M, R, K]` for second-order systems, `[E, A]` otherwise.
    terms: Vec<Vec<T>>,
    norms: Vec<T>,
    /// Complex `M` and `R` for the coupling `σM + R` (second order only).
    coupling: Option<(SparseMatrix<Cplx<T>>, SparseMatrix<Cplx<T>>)>,
    e: SparseMatrix<Cplx<T>>,
}

impl<'a, T: Real> PencilSolver<'a, T> {
    pub fn new(sys: &'a StateSpaceSystem<T>) -> Self {
        Self {
            sys,
            prepared: OnceLock::new(),
        }
    }

    pub fn system(&self) -> &StateSpaceSystem<T> {
        self.sys
    }

    fn lift(m: &SparseMatrix<T>) -> SparseMatrix<Cplx<T>> {
        m.map(|v| Cplx::new(v, T::zero()))
    }

    fn prepared(&self) -> &Prepared<T> {
        self.prepared.get_or_init(|| {
            let (terms, coupling): (Vec<&SparseMatrix<T>>, _) = match self.sys.second_order() {
                Some(so) => (
                    vec![so.mass(), so.damping(), so.stiffness()],
                    Some((Self::lift(so.mass()), Self::lift(so.damping()))),
                ),
                None => (vec![self.sys.e(), self.sys.a()], None),
            };
            let n = terms[0].nrows();
            let mut pattern: Vec<(usize, usize, T)> = Vec::new();
            for t in &terms {
                pattern.extend(t.triplets().map(|(i, j, _)| (i, j, T::one())));
            }
            let pattern = SparseMatrix::from_triplets(n, n, &pattern).expect("pattern of square terms");
            let perm = rcm_ordering(&pattern);
            let permuted: Vec<SparseMatrix<T>> = terms.iter().map(|t| t.permute_sym(&perm)).collect();
            let (kl, ku) = permuted.iter().fold((0, 0), |(l, u), t| {
                let (tl, tu) = t.bandwidths();
                (l.max(tl), u.max(tu))
            });
            let len = n * BandedLu::<Cplx<T>>::band_width(kl, ku);
            let bands = permuted
                .iter()
                .map(|t| {
                    let mut band = vec![T::zero(); len];
                    for (i, j, v) in t.triplets() {
                        band[BandedLu::<Cplx<T>>::band_index(kl, ku, i, j)] += v;
                    }
                    band
                })
                .collect();
            Prepared {
                n,
                perm,
                kl,
                ku,
                terms: bands,
                norms: terms.iter().map(|t| t.norm_inf()).collect(),
                coupling,
                e: Self::lift(self.sys.e()),
            }
        })
    }

    /// `E` lifted to complex entries.
    pub(crate) fn e_complex(&self) -> &SparseMatrix<Cplx<T>> {
        &self.prepared().e
    }

    /// Factorizes `σE − A` for repeated solves.
    pub fn factor(&self, sigma: Cplx<T>) -> Result<ShiftedFactor<'_, T>> {
        let p = self.prepared();
        let one = Cplx::new(T::one(), T::zero());
        let coeffs = if p.coupling.is_some() {
            vec![sigma * sigma, sigma, one]
        } else {
            vec![sigma, -one]
        };
        let mut band = vec![Cplx::new(T::zero(), T::zero()); p.terms[0].len()];
        let mut scale = T::zero();
        for ((c, term), &norm) in coeffs.iter().zip(&p.terms).zip(&p.norms) {
            for (b, &v) in band.iter_mut().zip(term) {
                *b += *c * v;
            }
            scale += c.re.hypot(c.im) * norm;
        }
        let lu = BandedLu::factor_band(p.n, p.kl, p.ku, band, p.perm.clone(), scale).map_err(|e| singular(sigma, e))?;
        Ok(ShiftedFactor {
            sigma,
            lu,
            coupling: p.coupling.as_ref().map(|(m, r)| (m, r)),
        })
    }

    /// `(σE − A)⁻¹ R` for a real right-hand side.
    pub fn solve(&self, sigma: Cplx<T>, rhs: &DMatrix<T>) -> Result<DMatrix<Cplx<T>>> {
        Ok(self.factor(sigma)?.solve(&to_complex(rhs)))
    }
}

/// Factorization of one shifted pencil.
pub struct ShiftedFactor<'p, T: Real> {
    sigma: Cplx<T>,
    lu: BandedLu<Cplx<T>>,
    /// `M` and `R` when solving through the second-order pencil.
    coupling: Option<(&'p SparseMatrix<Cplx<T>>, &'p SparseMatrix<Cplx<T>>)>,
}

impl<T: Real> ShiftedFactor<'_, T> {
    pub fn solve(&self, rhs: &DMatrix<Cplx<T>>) -> DMatrix<Cplx<T>> {
        match self.coupling {
            Some((m, r)) => {
                // rows [b1; b2]: σx − y = b1 and (σ²M + σR + K)x = b2 + (σM + R)b1
                let n = self.lu.dim();
                let b1 = rhs.rows(0, n).into_owned();
                let b2 = rhs.rows(n, n);
                let x = self.lu.solve(&(b2 + m.mul_dense(&b1) * self.sigma + r.mul_dense(&b1)));
                let y = &x * self.sigma - &b1;
                let mut out = DMatrix::zeros(2 * n, rhs.ncols());
                out.rows_mut(0, n).copy_from(&x);
                out.rows_mut(n, n).copy_from(&y);
                out
            }
            None => self.lu.solve(rhs),
        }
    }
}

/// Orthonormal basis `V` with `A V = E V S + B L`.
#[derive(Clone, Debug)]
pub struct SylvesterBasis<T: Real> {
    pub v: DMatrix<T>,
    pub s: DMatrix<T>,
    pub l: DMatrix<T>,
}

impl<T: Real> SylvesterBasis<T> {
    pub fn empty(states: usize, inputs: usize) -> Self {
        Self {
            v: DMatrix::zeros(states, 0),
            s: DMatrix::zeros(0, 0),
            l: DMatrix::zeros(inputs, 0),
        }
    }

    pub fn order(&self) -> usize {
        self.v.ncols()
    }

    /// Merges a block `W` with `A W = E W S_w + (B − E V B_r) L_w`.
    ///
    /// `b_r` is the input map of the ROM built on the current basis (`None`
    /// means `B_r = 0`). Returns the number of columns added; dependent
    /// columns are dropped and the relation is then re-derived by least
    /// squares.
    pub fn extend(
        &mut self,
        sys: &StateSpaceSystem<T>,
        w: &DMatrix<T>,
        s_w: &DMatrix<T>,
        l_w: &DMatrix<T>,
        b_r: Option<&DMatrix<T>>,
    ) -> Result<usize> {
        let k = w.ncols();
        let gs = gram_schmidt(&self.v, w, T::lit(DROP_TOL));
        let kept = gs.kept.len();
        if kept == 0 {
            return Ok(0);
        }
        let r = self.order();
        if kept == k {
            let r_inv = gs
                .r
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Reduction("orthogonalization produced a singular triangular factor".into()))?;
            let h = &gs.h;
            let mut s12 = h * s_w - &self.s * h;
            if let Some(br) = b_r {
                s12 -= br * l_w;
            }
            let s12 = s12 * &r_inv;
            let s22 = &gs.r * s_w * &r_inv;
            let l2 = (l_w - &self.l * h) * &r_inv;
            let mut s = DMatrix::zeros(r + k, r + k);
            s.view_mut((0, 0), (r, r)).copy_from(&self.s);
            s.view_mut((0, r), (r, k)).copy_from(&s12);
            s.view_mut((r, r), (k, k)).copy_from(&s22);
            let mut l = DMatrix::zeros(self.l.nrows(), r + k);
            l.columns_mut(0, r).copy_from(&self.l);
            l.columns_mut(r, k).copy_from(&l2);
            self.v = concat_columns(&self.v, &gs.q);
            self.s = s;
            self.l = l;
        } else {
            self.v = concat_columns(&self.v, &gs.q);
            let (s, l) = sylvester_data_least_squares(sys, &self.v)?;
            self.s = s;
            self.l = l;
        }
        Ok(kept)
    }

    /// `‖A V − E V S − B L‖_F / ‖A V‖_F`.
    pub fn relation_residual(&self, sys: &StateSpaceSystem<T>) -> T {
        let av = sys.a().mul_dense(&self.v);
        let r = &av - sys.e().mul_dense(&self.v) * &self.s - sys.b() * &self.l;
        let scale = av.norm();
        if scale > T::zero() {
            r.norm() / scale
        } else {
            r.norm()
        }
    }
}

pub(crate) fn concat_columns<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Recovers `S, L` from `[E V, B] [S; L] = A V` when `span V` is known to be
/// a Sylvester subspace.
fn sylvester_data_least_squares<T: Real>(sys: &StateSpaceSystem<T>, v: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let r = v.ncols();
    let m = sys.inputs();
    let lhs = concat_columns(&sys.e().mul_dense(v), sys.b());
    let av = sys.a().mul_dense(v);
    let svd = lhs.clone().svd(true, true);
    let tol = svd.singular_values.max() * T::machine_eps() * T::from_usize_lossy(lhs.nrows().max(lhs.ncols()));
    let x = svd
        .solve(&av, tol)
        .map_err(|e| Error::Reduction(format!("least-squares Sylvester recovery failed: {e}")))?;
    let resid = (&lhs * &x - &av).norm();
    if resid > T::lit(1e-6) * av.norm() {
        return Err(Error::Reduction(format!(
            "basis is not a rational Krylov subspace (relative residual {:e})",
            resid / av.norm()
        )));
    }
    Ok((x.rows(0, r).into_owned(), x.rows(r, m).into_owned()))
}

/// Real block for a shift, relative to the input matrix `b`.
///
/// Returns `(W, S_w, L_w)` with `A W = E W S_w + b L_w`, built from
/// `order` block moments at `σ` (and its conjugate when complex).
pub(crate) fn shift_block<T: Real>(
    solver: &PencilSolver<'_, T>,
    sigma: Cplx<T>,
    order: usize,
    b: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>, DMatrix<T>)> {
    let sys = solver.system();
    let m = b.ncols();
    let n = sys.states();
    let k = order * m;
    // complex moments: v₁ = (σE−A)⁻¹b, v_{j+1} = (σE−A)⁻¹E v_j
    let f = solver.factor(sigma)?;
    let e = solver.e_complex();
    let mut blocks: Vec<DMatrix<Cplx<T>>> = Vec::with_capacity(order);
    blocks.push(f.solve(&to_complex(b)));
    for _ in 1..order {
        let prev = blocks.last().expect("previous block");
        blocks.push(f.solve(&e.mul_dense(prev)));
    }
    // complex S: σ on the diagonal, −I on the block superdiagonal; L = [−I, 0, …]
    let is_real = sigma.im == T::zero();
    let width = if is_real { k } else { 2 * k };
    let mut w = DMatrix::zeros(n, width);
    let mut s = DMatrix::zeros(width, width);
    let mut l = DMatrix::zeros(m, width);
    for (j, blk) in blocks.iter().enumerate() {
        for c in 0..m {
            let col = j * m + c;
            for i in 0..n {
                w[(i, col)] = blk[(i, c)].re;
                if !is_real {
                    w[(i, k + col)] = blk[(i, c)].im;
                }
            }
            s[(col, col)] = sigma.re;
            if !is_real {
                s[(k + col, k + col)] = sigma.re;
                s[(col, k + col)] = sigma.im;
                s[(k + col, col)] = -sigma.im;
            }
            if j > 0 {
                let prev = (j - 1) * m + c;
                s[(prev, col)] = -T::one();
                if !is_real {
                    s[(k + prev, k + col)] = -T::one();
                }
            } else {
                l[(c, col)] = -T::one();
            }
        }
    }
    Ok((w, s, l))
}

/// Orthonormal rational Krylov basis with its Sylvester data.
///
/// Complex shifts must come with their conjugates (each pair is used once).
/// Rank-deficient directions are dropped; `dropped` counts them.
#[derive(Clone, Debug)]
pub struct KrylovBasis<T: Real> {
    pub basis: SylvesterBasis<T>,
    pub dropped: usize,
}

pub fn rational_krylov_basis<T: Real>(
    sys: &StateSpaceSystem<T>,
    shifts: &[Cplx<T>],
    order_per_shift: &[usize],
) -> Result<KrylovBasis<T>> {
    if shifts.len() != order_per_shift.len() {
        return Err(Error::dim("orders per shift", shifts.len(), order_per_shift.len()));
    }
    let tol = T::lit(1e-12);
    let mut used = vec![false; shifts.len()];
    let mut plan = Vec::new();
    for (i, &s) in shifts.iter().enumerate() {
        if used[i] {
            continue;
        }
        used[i] = true;
        if s.im != T::zero() {
            let scale = s.re.hypot(s.im).max(T::one());
            let partner = (0..shifts.len()).find(|&j| {
                !used[j] && { let d = shifts[j] - s.conj(); d.re.hypot(d.im) } <= tol * scale && order_per_shift[j] == order_per_shift[i]
            });
            match partner {
                Some(j) => used[j] = true,
                None => {
                    return Err(Error::Reduction(format!(
                        "shift {s} has no conjugate partner of equal order; a real basis needs conjugate-closed shifts"
                    )))
                }
            }
            // keep the member with positive imaginary part
            let s = if s.im > T::zero() { s } else { s.conj() };
            plan.push((s, order_per_shift[i]));
        } else {
            plan.push((s, order_per_shift[i]));
        }
    }
    let solver = PencilSolver::new(sys);
    let mut basis = SylvesterBasis::empty(sys.states(), sys.inputs());
    let mut requested = 0;
    for (s, order) in plan {
        if order == 0 {
            continue;
        }
        let (w, s_w, l_w) = shift_block(&solver, s, order, sys.b())?;
        requested += w.ncols();
        basis.extend(sys, &w, &s_w, &l_w, None)?;
    }
    Ok(KrylovBasis {
        dropped: requested - basis.order(),
        basis,
    })
}
