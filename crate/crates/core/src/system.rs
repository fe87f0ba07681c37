//! Second-order mechanical systems, descriptor state-space systems and the
//! conversion between them.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::modal::inertia;
use crate::linalg::{to_complex, BandedLu, SparseMatrix};
use crate::scalar::{Cplx, Real};

/// Relative Frobenius asymmetry accepted on ingestion.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// `M q̈ + R q̇ + K q = F h(t)`, `y = Cout q`.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderSystem<T: Real> {
    m: SparseMatrix<T>,
    k: SparseMatrix<T>,
    r: SparseMatrix<T>,
    f: DMatrix<T>,
    cout: DMatrix<T>,
}

impl<T: Real> SecondOrderSystem<T> {
    /// Validates and symmetrizes the mechanical matrices.
    ///
    /// `M` must be symmetric positive definite, `K` and `R` symmetric
    /// positive semidefinite, all within [`SYMMETRY_TOL`].
    pub fn new(
        m: SparseMatrix<T>,
        k: SparseMatrix<T>,
        r: SparseMatrix<T>,
        f: DMatrix<T>,
        cout: DMatrix<T>,
    ) -> Result<Self> {
        let n = m.nrows();
        for (name, mat) in [("M", &m), ("K", &k), ("R", &r)] {
            if mat.shape() != (n, n) {
                return Err(Error::dim(format!("{name} matrix"), format!("{n}x{n}"), format!("{:?}", mat.shape())));
            }
            let asym = mat.asymmetry();
            if asym > T::lit(SYMMETRY_TOL) {
                return Err(Error::InvalidModel(format!(
                    "{name} is not symmetric (relative asymmetry {asym:e} > {SYMMETRY_TOL:e})"
                )));
            }
        }
        if f.nrows() != n {
            return Err(Error::dim("input map F rows", n, f.nrows()));
        }
        if cout.ncols() != n {
            return Err(Error::dim("output selector Cout columns", n, cout.ncols()));
        }
        let (m, k, r) = (m.symmetrized(), k.symmetrized(), r.symmetrized());
        let semidef_tol = T::lit(1e-12);
        let im = inertia(&m, semidef_tol);
        if im.negative > 0 || im.zero > 0 || n == 0 {
            return Err(Error::InvalidModel(format!(
                "M is not positive definite ({} negative, {} zero pivots)",
                im.negative, im.zero
            )));
        }
        for (name, mat) in [("K", &k), ("R", &r)] {
            if mat.nnz() > 0 && inertia(mat, semidef_tol).negative > 0 {
                return Err(Error::InvalidModel(format!("{name} is not positive semidefinite")));
            }
        }
        Ok(Self { m, k, r, f, cout })
    }

    /// Node (degree-of-freedom) count.
    pub fn dofs(&self) -> usize {
        self.m.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.f.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.cout.nrows()
    }

    pub fn mass(&self) -> &SparseMatrix<T> {
        &self.m
    }

    pub fn stiffness(&self) -> &SparseMatrix<T> {
        &self.k
    }

    pub fn damping(&self) -> &SparseMatrix<T> {
        &self.r
    }

    pub fn input_map(&self) -> &DMatrix<T> {
        &self.f
    }

    pub fn output_map(&self) -> &DMatrix<T> {
        &self.cout
    }

    /// Same mechanics with a different input map.
    pub fn with_input_map(&self, f: DMatrix<T>) -> Result<Self> {
        if f.nrows() != self.dofs() {
            return Err(Error::dim("input map F rows", self.dofs(), f.nrows()));
        }
        Ok(Self { f, ..self.clone() })
    }

    /// Same mechanics with a different output selector.
    pub fn with_output_map(&self, cout: DMatrix<T>) -> Result<Self> {
        if cout.ncols() != self.dofs() {
            return Err(Error::dim("output selector Cout columns", self.dofs(), cout.ncols()));
        }
        Ok(Self { cout, ..self.clone() })
    }

    /// `Cout (s²M + sR + K)⁻¹ F`, evaluated directly in second-order form.
    pub fn eval_transfer(&self, s: Cplx<T>) -> Result<DMatrix<Cplx<T>>> {
        let c = |x: T| Cplx::new(x, T::zero());
        let q = self
            .m
            .map(c)
            .lin_comb(s * s, &self.r.map(c), s)?
            .lin_comb(Cplx::new(T::one(), T::zero()), &self.k.map(c), Cplx::new(T::one(), T::zero()))?;
        let lu = BandedLu::factor(&q).map_err(|p| singular(s, p))?;
        Ok(to_complex(&self.cout) * lu.solve(&to_complex(&self.f)))
    }
}

/// Descriptor system `E ẋ = A x + B h`, `y = C x` with nonsingular `E`.
#[derive(Clone, Debug)]
pub struct StateSpaceSystem<T: Real> {
    e: SparseMatrix<T>,
    a: SparseMatrix<T>,
    b: DMatrix<T>,
    c: DMatrix<T>,
    second_order: Option<Arc<SecondOrderSystem<T>>>,
}

impl<T: Real> PartialEq for StateSpaceSystem<T> {
    fn eq(&self, other: &Self) -> bool {
        self.e == other.e && self.a == other.a && self.b == other.b && self.c == other.c
    }
}

impl<T: Real> StateSpaceSystem<T> {
    /// Checks dimensions and that `E` factorizes.
    pub fn new(e: SparseMatrix<T>, a: SparseMatrix<T>, b: DMatrix<T>, c: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.shape() != (n, n) {
            return Err(Error::dim("A", "square", format!("{:?}", a.shape())));
        }
        if e.shape() != (n, n) {
            return Err(Error::dim("E", format!("{n}x{n}"), format!("{:?}", e.shape())));
        }
        if b.nrows() != n {
            return Err(Error::dim("B rows", n, b.nrows()));
        }
        if c.ncols() != n {
            return Err(Error::dim("C columns", n, c.ncols()));
        }
        if n > 0 {
            BandedLu::factor(&e).map_err(|p| {
                Error::InvalidModel(format!(
                    "descriptor matrix E is singular (pivot {} has magnitude {:e})",
                    p.index, p.magnitude
                ))
            })?;
        }
        Ok(Self {
            e,
            a,
            b,
            c,
            second_order: None,
        })
    }

    /// Dense small system with `E = I`.
    pub fn from_dense(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        Self::new(SparseMatrix::identity(n), SparseMatrix::from_dense(&a), b, c)
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn e(&self) -> &SparseMatrix<T> {
        &self.e
    }

    pub fn a(&self) -> &SparseMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    /// The mechanical model this system was converted from, if any.
    pub fn second_order(&self) -> Option<&SecondOrderSystem<T>> {
        self.second_order.as_deref()
    }

    /// Replaces `B` with `B·Γ`. The second-order origin (if any) follows as `F·Γ`.
    pub fn with_input_projection(&self, gamma: &DMatrix<T>) -> Result<Self> {
        if gamma.nrows() != self.inputs() {
            return Err(Error::dim("input projection rows", self.inputs(), gamma.nrows()));
        }
        let second_order = match &self.second_order {
            Some(so) => Some(Arc::new(so.with_input_map(so.input_map() * gamma)?)),
            None => None,
        };
        Ok(Self {
            b: &self.b * gamma,
            second_order,
            ..self.clone()
        })
    }

    /// Replaces `B` by an arbitrary matrix of the same row count.
    pub fn with_input(&self, b: DMatrix<T>) -> Result<Self> {
        if b.nrows() != self.states() {
            return Err(Error::dim("B rows", self.states(), b.nrows()));
        }
        Ok(Self {
            b,
            second_order: None,
            ..self.clone()
        })
    }

    /// `sE − A` as a complex sparse matrix.
    pub fn pencil_at(&self, s: Cplx<T>) -> SparseMatrix<Cplx<T>> {
        let c = |x: T| Cplx::new(x, T::zero());
        self.e
            .map(c)
            .lin_comb(s, &self.a.map(c), Cplx::new(-T::one(), T::zero()))
            .expect("E and A share a shape")
    }

    /// `(sE − A)⁻¹ B` by one sparse factorization.
    pub fn resolvent_input(&self, s: Cplx<T>) -> Result<DMatrix<Cplx<T>>> {
        let lu = BandedLu::factor(&self.pencil_at(s)).map_err(|p| singular(s, p))?;
        Ok(lu.solve(&to_complex(&self.b)))
    }

    /// Dense `E⁻¹A` and `E⁻¹B`.
    pub fn standard_form(&self) -> Result<(DMatrix<T>, DMatrix<T>)> {
        let lu = BandedLu::factor(&self.e)
            .map_err(|_| Error::InvalidModel("descriptor matrix E is singular".into()))?;
        Ok((lu.solve(&self.a.to_dense()), lu.solve(&self.b)))
    }
}

/// Builds the first-order companion form with state `[q; q̇]`.
///
/// `E = blockdiag(I, M)`, `A = [[0, I], [−K, −R]]`, `B = [0; F]`, `C = [Cout, 0]`.
pub fn second_order_to_state_space<T: Real>(sys: &SecondOrderSystem<T>) -> Result<StateSpaceSystem<T>> {
    let n = sys.dofs();
    let ident = SparseMatrix::<T>::identity(n);
    let e = SparseMatrix::block_diag(&[&ident, sys.mass()]);
    let mut t: Vec<(usize, usize, T)> = (0..n).map(|i| (i, n + i, T::one())).collect();
    t.extend(sys.stiffness().triplets().map(|(i, j, v)| (n + i, j, -v)));
    t.extend(sys.damping().triplets().map(|(i, j, v)| (n + i, n + j, -v)));
    let a = SparseMatrix::from_triplets(2 * n, 2 * n, &t)?;
    let mut b = DMatrix::zeros(2 * n, sys.inputs());
    b.rows_mut(n, n).copy_from(sys.input_map());
    let mut c = DMatrix::zeros(sys.outputs(), 2 * n);
    c.columns_mut(0, n).copy_from(sys.output_map());
    let mut ss = StateSpaceSystem::new(e, a, b, c)?;
    ss.second_order = Some(Arc::new(sys.clone()));
    Ok(ss)
}

/// `C (sE − A)⁻¹ B`; fails with the offending `s` when it is a pole.
pub fn eval_transfer<T: Real>(sys: &StateSpaceSystem<T>, s: Cplx<T>) -> Result<DMatrix<Cplx<T>>> {
    let x = sys.resolvent_input(s)?;
    Ok(to_complex(sys.c()) * x)
}

pub(crate) fn singular<T: Real>(s: Cplx<T>, p: crate::linalg::SingularPivot) -> Error {
    Error::SingularSolve {
        re: s.re.as_f64(),
        im: s.im.as_f64(),
        pivot_index: p.index,
        magnitude: p.magnitude,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_oscillator() -> SecondOrderSystem<f64> {
        let one = || SparseMatrix::identity(1);
        SecondOrderSystem::new(one(), one(), one(), DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0))
            .unwrap()
    }

    #[test]
    fn unit_oscillator_blocks() {
        let ss = second_order_to_state_space(&unit_oscillator()).unwrap();
        assert_eq!(ss.a().to_dense(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]));
        assert_eq!(ss.e().to_dense(), DMatrix::identity(2, 2));
        assert_eq!(ss.b().as_slice(), &[0.0, 1.0]);
        assert_eq!(ss.c().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn dc_gain_of_unit_oscillator() {
        let ss = second_order_to_state_space(&unit_oscillator()).unwrap();
        let g = eval_transfer(&ss, Cplx::new(0.0, 0.0)).unwrap();
        assert!((g[(0, 0)] - Cplx::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn high_frequency_rolloff() {
        let ss = second_order_to_state_space(&unit_oscillator()).unwrap();
        let g = eval_transfer(&ss, Cplx::new(0.0, 1e6)).unwrap();
        assert!(g[(0, 0)].norm() < 1e-11);
    }

    #[test]
    fn evaluation_at_a_pole_is_an_error() {
        let ss = second_order_to_state_space(&unit_oscillator()).unwrap();
        let pole = Cplx::new(-0.5, 3f64.sqrt() / 2.0);
        match eval_transfer(&ss, pole) {
            Err(Error::SingularSolve { re, im, .. }) => {
                assert_eq!(re, -0.5);
                assert!((im - 0.8660254037844386).abs() < 1e-15);
            }
            other => panic!("expected singular solve, got {other:?}"),
        }
    }

    #[test]
    fn rejects_indefinite_mass() {
        let m = SparseMatrix::from_diagonal(&[1.0, -1.0]);
        let k = SparseMatrix::identity(2);
        let err = SecondOrderSystem::new(m, k.clone(), k, DMatrix::zeros(2, 1), DMatrix::zeros(1, 2)).unwrap_err();
        assert!(err.to_string().contains("M is not positive definite"), "{err}");
    }

    #[test]
    fn rejects_asymmetric_stiffness() {
        let k = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -0.5, 2.0]));
        let err = SecondOrderSystem::new(
            SparseMatrix::identity(2),
            k,
            SparseMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 2),
        )
        .unwrap_err();
        assert!(err.to_string().contains("K is not symmetric"), "{err}");
    }

    #[test]
    fn tiny_asymmetry_is_symmetrized() {
        let k = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0 - 1e-15, 2.0]));
        let sys = SecondOrderSystem::new(
            SparseMatrix::identity(2),
            k,
            SparseMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 2),
        )
        .unwrap();
        assert_eq!(sys.stiffness().get(0, 1), sys.stiffness().get(1, 0));
    }
}
