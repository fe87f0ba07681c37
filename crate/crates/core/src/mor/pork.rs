//! Pseudo-optimal reduction from a Sylvester basis.
//!
//! With `A V = E V S + B L`, solve `Sᵀ P + P S = Lᵀ L` and set
//! `B_r = −P⁻¹Lᵀ`, `A_r = S + B_r L`, `C_r = C V`, `E_r = I`. The ROM has
//! its poles at the mirror images of the shifts, interpolates at the
//! shifts, its Gramian is `P⁻¹`, and the error is H2-orthogonal to it.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::h2::STABILITY_MARGIN;
use crate::linalg::{solve_lyapunov, QuasiTriangular};
use crate::scalar::Real;
use crate::system::StateSpaceSystem;

use super::krylov::SylvesterBasis;

/// A reduced model with its certificate data.
#[derive(Clone, Debug)]
pub struct PseudoOptimalRom<T: Real> {
    pub rom: StateSpaceSystem<T>,
    /// `‖G_r‖²`.
    pub norm_sq: T,
    /// `B_r` in the basis coordinates (needed for residual inputs).
    pub b_r: DMatrix<T>,
    /// True when the basis spans the whole state space and the ROM is the
    /// FOM in new coordinates.
    pub exact: bool,
}

/// Solves `Sᵀ P + P S = Lᵀ L` (spectrum of `S` in the open right half-plane).
fn small_gramian<T: Real>(s: &DMatrix<T>, l: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (q, t) = QuasiTriangular::schur(-s.transpose())?;
    t.check_stable(T::lit(STABILITY_MARGIN)).map_err(|e| {
        Error::Reduction(format!("shifts must lie in the open right half-plane: {e}"))
    })?;
    let lq = l * &q;
    let y = solve_lyapunov(&t, &(lq.transpose() * lq))?;
    let p = &q * y * q.transpose();
    Ok((&p + p.transpose()) * T::lit(0.5))
}

/// Cholesky factor of `P` and `‖G_r‖² = ‖C_r R⁻¹‖_F²` for `P = RᵀR`
/// (the ROM Gramian is `P⁻¹`). Needs only the Sylvester data and `C V`.
pub(crate) fn gramian_and_norm<T: Real>(
    s: &DMatrix<T>,
    l: &DMatrix<T>,
    c_r: &DMatrix<T>,
) -> Result<(Cholesky<T, Dyn>, T)> {
    let p = small_gramian(s, l)?;
    let chol = Cholesky::<T, Dyn>::new(p).ok_or_else(|| {
        Error::Reduction(format!(
            "pseudo-optimal Gramian of order {} is not positive definite",
            s.nrows()
        ))
    })?;
    let x = chol
        .l()
        .solve_lower_triangular(&c_r.transpose())
        .ok_or_else(|| Error::Reduction("triangular solve with the Gramian factor failed".into()))?;
    let norm_sq = x.norm_squared();
    Ok((chol, norm_sq))
}

/// Pseudo-optimal ROM on `span V`.
///
/// A basis spanning the full state space yields the FOM itself in the
/// basis coordinates (error exactly zero).
pub fn pseudo_optimal_reduce<T: Real>(sys: &StateSpaceSystem<T>, basis: &SylvesterBasis<T>) -> Result<PseudoOptimalRom<T>> {
    let r = basis.order();
    if r == 0 {
        return Err(Error::Reduction("empty basis".into()));
    }
    let v = &basis.v;
    if r == sys.states() {
        return exact_rom(sys, v);
    }
    let c_r = sys.c() * v;
    let (chol, norm_sq) = gramian_and_norm(&basis.s, &basis.l, &c_r)?;
    let b_r = -chol.solve(&basis.l.transpose());
    let a_r = &basis.s + &b_r * &basis.l;
    let rom = StateSpaceSystem::from_dense(a_r, b_r.clone(), c_r)?;
    Ok(PseudoOptimalRom {
        rom,
        norm_sq,
        b_r,
        exact: false,
    })
}

fn exact_rom<T: Real>(sys: &StateSpaceSystem<T>, v: &DMatrix<T>) -> Result<PseudoOptimalRom<T>> {
    // V orthonormal and square: x = V z, ż = Vᵀ E⁻¹ A V z + Vᵀ E⁻¹ B h
    let (at, bt) = sys.standard_form()?;
    let a_r = v.transpose() * at * v;
    let b_r = v.transpose() * bt;
    let c_r = sys.c() * v;
    let rom = StateSpaceSystem::from_dense(a_r, b_r.clone(), c_r)?;
    let norm_sq = crate::h2::norm_sq(&crate::h2::Realization::dense(&rom)?)?;
    Ok(PseudoOptimalRom {
        rom,
        norm_sq,
        b_r,
        exact: true,
    })
}

/// One pseudo-optimal step in Gramian-balanced coordinates.
///
/// For `A W = E W S + B L` with `P = R Rᵀ`, the ROM in coordinates
/// `z̃ = Rᵀ z` has the identity as controllability Gramian:
/// `Ã = Rᵀ S R⁻ᵀ − R⁻¹LᵀL R⁻ᵀ`, `B̃ = −R⁻¹Lᵀ`, `C̃ = C W R⁻ᵀ`, and
/// `‖G_r‖² = ‖C̃‖_F²`. `w_tilde = W R⁻ᵀ` and `l_tilde = L R⁻ᵀ` carry the
/// relation into the same coordinates.
#[derive(Clone, Debug)]
pub(crate) struct PorkStep<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub w_tilde: DMatrix<T>,
    pub l_tilde: DMatrix<T>,
    pub norm_sq: T,
}

pub(crate) fn pork_step<T: Real>(
    sys: &StateSpaceSystem<T>,
    w: &DMatrix<T>,
    s: &DMatrix<T>,
    l: &DMatrix<T>,
) -> Result<PorkStep<T>> {
    let (w, s, l) = unit_columns(w, s, l);
    let p = small_gramian(&s, &l)?;
    let chol = Cholesky::<T, Dyn>::new(p).ok_or_else(|| {
        Error::Reduction(format!("pseudo-optimal Gramian of order {} is not positive definite", s.nrows()))
    })?;
    let r = chol.l();
    let fail = || Error::Reduction("triangular solve with the Gramian factor failed".into());
    // X R⁻ᵀ = (R⁻¹ Xᵀ)ᵀ
    let right = |x: &DMatrix<T>| -> Result<DMatrix<T>> { Ok(r.solve_lower_triangular(&x.transpose()).ok_or_else(fail)?.transpose()) };
    let w_tilde = right(&w)?;
    let l_tilde = right(&l)?;
    let b = -r.solve_lower_triangular(&l.transpose()).ok_or_else(fail)?;
    let a = right(&(r.transpose() * &s))? + &b * &l_tilde;
    let c = sys.c() * &w_tilde;
    let norm_sq = c.norm_squared();
    Ok(PorkStep {
        a,
        b,
        c,
        w_tilde,
        l_tilde,
        norm_sq,
    })
}

/// Rescales the relation to unit-norm columns: `W → W D`, `S → D⁻¹ S D`,
/// `L → L D`.
pub(crate) fn unit_columns<T: Real>(
    w: &DMatrix<T>,
    s: &DMatrix<T>,
    l: &DMatrix<T>,
) -> (DMatrix<T>, DMatrix<T>, DMatrix<T>) {
    let (mut w, mut s, mut l) = (w.clone(), s.clone(), l.clone());
    for j in 0..w.ncols() {
        let n = w.column(j).norm();
        if n > T::zero() {
            let d = T::one() / n;
            w.column_mut(j).scale_mut(d);
            l.column_mut(j).scale_mut(d);
            s.column_mut(j).scale_mut(d);
            s.row_mut(j).scale_mut(n);
        }
    }
    (w, s, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::h2::{h2_error_dense, h2_norm_gramian};
    use crate::mor::krylov::rational_krylov_basis;
    use crate::scalar::Cplx;
    use crate::system::eval_transfer;

    fn random_stable(n: usize, seed: u64) -> StateSpaceSystem<f64> {
        // A = −(X Xᵀ + I) − (Y − Yᵀ) has a negative definite symmetric part
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let x = DMatrix::from_fn(n, n, |_, _| next());
        let y = DMatrix::from_fn(n, n, |_, _| next());
        let a = -(&x * x.transpose() + DMatrix::identity(n, n)) - (&y - y.transpose()) * 4.0;
        let b = DMatrix::from_fn(n, 1, |_, _| next());
        let c = DMatrix::from_fn(1, n, |_, _| next());
        StateSpaceSystem::from_dense(a, b, c).unwrap()
    }

    #[test]
    fn pythagorean_contract() {
        let sys = random_stable(30, 7);
        let shifts = [Cplx::new(1.0, 2.0), Cplx::new(1.0, -2.0)];
        let kb = rational_krylov_basis(&sys, &shifts, &[2, 2]).unwrap();
        assert_eq!(kb.basis.order(), 4);
        let red = pseudo_optimal_reduce(&sys, &kb.basis).unwrap();
        let g2 = h2_norm_gramian(&sys).unwrap().powi(2);
        let err = h2_error_dense(&sys, &red.rom).unwrap();
        assert!((g2 - red.norm_sq - err * err).abs() <= 1e-8 * g2);
        let rom_sq = h2_norm_gramian(&red.rom).unwrap().powi(2);
        assert!((rom_sq - red.norm_sq).abs() <= 1e-10 * g2);
    }

    #[test]
    fn moment_matching_at_a_real_shift() {
        let sys = random_stable(20, 3);
        let sigma = 1.5;
        let kb = rational_krylov_basis(&sys, &[Cplx::new(sigma, 0.0)], &[3]).unwrap();
        let rom = pseudo_optimal_reduce(&sys, &kb.basis).unwrap().rom;
        let g = |s: f64, sys: &StateSpaceSystem<f64>| eval_transfer(sys, Cplx::new(s, 0.0)).unwrap()[(0, 0)].re;
        // value and first two derivatives by central differences
        let h = 1e-3;
        for sys_pair in [(&sys, &rom)] {
            let (f, r) = sys_pair;
            let d0 = (g(sigma, f) - g(sigma, r)).abs() / g(sigma, f).abs();
            assert!(d0 < 1e-8, "value mismatch {d0}");
            let d1 = |s: &StateSpaceSystem<f64>| (g(sigma + h, s) - g(sigma - h, s)) / (2.0 * h);
            let d2 = |s: &StateSpaceSystem<f64>| (g(sigma + h, s) - 2.0 * g(sigma, s) + g(sigma - h, s)) / (h * h);
            assert!((d1(f) - d1(r)).abs() <= 1e-6 * d1(f).abs().max(1e-12));
            assert!((d2(f) - d2(r)).abs() <= 1e-3 * d2(f).abs().max(1e-12));
        }
    }

    #[test]
    fn conjugate_pair_gives_two_real_columns() {
        let sys = random_stable(12, 11);
        let kb = rational_krylov_basis(&sys, &[Cplx::new(1.0, 2.0), Cplx::new(1.0, -2.0)], &[1, 1]).unwrap();
        let v = &kb.basis.v;
        assert_eq!(v.ncols(), 2);
        assert!((v.transpose() * v - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        assert!(kb.basis.relation_residual(&sys) < 1e-10);
    }

    #[test]
    fn full_basis_is_exact() {
        let sys = random_stable(6, 5);
        let shifts: Vec<_> = [0.5, 1.0, 2.0].iter().flat_map(|&w| [Cplx::new(1.0, w), Cplx::new(1.0, -w)]).collect();
        let kb = rational_krylov_basis(&sys, &shifts, &[1; 6]).unwrap();
        assert_eq!(kb.basis.order(), 6);
        let red = pseudo_optimal_reduce(&sys, &kb.basis).unwrap();
        assert!(red.exact);
        // a difference of Gramian traces resolves errors down to ~√ε·‖G‖
        let err = h2_error_dense(&sys, &red.rom).unwrap();
        assert!(err < 1e-6 * h2_norm_gramian(&sys).unwrap());
    }
}
