//! H2 norms and H2 distances of descriptor systems.
//!
//! Every system is brought to a quasi-triangular realization `(T, B̂, Ĉ)`
//! with the same transfer function:
//! - dense route: real Schur form of `E⁻¹A`;
//! - modal route (second-order systems with Rayleigh damping): one
//!   decoupled 2×2 block per mode. The modal route never forms an
//!   `ns × ns` matrix when only the norm itself is needed.
//!
//! Inner products `⟨G₁, G₂⟩ = tr(Ĉ₁ X Ĉ₂ᵀ)` with `T₁X + XT₂ᵀ + B̂₁B̂₂ᵀ = 0`
//! give norms and, blockwise, the norm of the augmented difference system.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::modal::{rayleigh_coefficients, symmetric_modes, ModalData};
use crate::linalg::{solve_lyapunov, solve_sylvester, BandedLu, QuasiTriangular, SparseMatrix};
use crate::scalar::{Cplx, Real};
use crate::system::{eval_transfer, SecondOrderSystem, StateSpaceSystem};

/// Relative stability margin: eigenvalues must satisfy `Re λ < −margin·max|λ|`.
pub const STABILITY_MARGIN: f64 = 1e-12;

/// Controllability Gramian with its residual diagnostics.
#[derive(Clone, Debug)]
pub struct Gramian<T: Real> {
    pub p: DMatrix<T>,
    /// `‖A P Eᵀ + E P Aᵀ + B Bᵀ‖_F`.
    pub residual: T,
    /// Residual divided by `‖A‖·‖P‖·‖E‖ + ‖B‖²` (Frobenius).
    pub relative_residual: T,
    /// Set when the relative residual exceeds `1e-8`.
    pub warning: Option<String>,
}

/// Solves `A P Eᵀ + E P Aᵀ + B Bᵀ = 0` for a stable pencil.
///
/// One factorization of `E` turns the problem into a standard Lyapunov
/// equation for `E⁻¹A`, which is solved in real Schur coordinates.
pub fn solve_generalized_lyapunov<T: Real>(
    a: &SparseMatrix<T>,
    e: &SparseMatrix<T>,
    b: &DMatrix<T>,
) -> Result<Gramian<T>> {
    let n = a.nrows();
    if a.shape() != (n, n) || e.shape() != (n, n) || b.nrows() != n {
        return Err(Error::dim("Lyapunov data", format!("{n}x{n} A, E and {n} rows of B"), format!(
            "A {:?}, E {:?}, B {}x{}",
            a.shape(),
            e.shape(),
            b.nrows(),
            b.ncols()
        )));
    }
    let lu = BandedLu::factor(e).map_err(|_| Error::InvalidModel("descriptor matrix E is singular".into()))?;
    let at = lu.solve(&a.to_dense());
    let bt = lu.solve(b);
    let (q, t) = QuasiTriangular::schur(at)?;
    t.check_stable(T::lit(STABILITY_MARGIN))?;
    let bq = q.transpose() * bt;
    let y = solve_lyapunov(&t, &(&bq * bq.transpose()))?;
    let p = &q * y * q.transpose();

    let (ad, ed) = (a.to_dense(), e.to_dense());
    let ape = &ad * &p * ed.transpose();
    let r = &ape + ape.transpose() + b * b.transpose();
    let residual = r.norm();
    let scale = ad.norm() * p.norm() * ed.norm() + b.norm_squared();
    let relative_residual = if scale > T::zero() { residual / scale } else { residual };
    let warning = (relative_residual > T::lit(1e-8)).then(|| {
        format!("ill-conditioned Lyapunov solve: relative residual {relative_residual:e}")
    });
    Ok(Gramian {
        p,
        residual,
        relative_residual,
        warning,
    })
}

/// Modal data of a Rayleigh-damped second-order system.
#[derive(Clone, Debug)]
pub struct ModalForm<T: Real> {
    pub data: ModalData<T>,
    /// `aᵢ = α + β ωᵢ²`.
    pub damping: Vec<T>,
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> ModalForm<T> {
    /// Decomposes `sys` if its damping is of Rayleigh form.
    pub fn new(sys: &SecondOrderSystem<T>) -> Result<Option<Self>> {
        let Some((alpha, beta)) = rayleigh_coefficients(sys.mass(), sys.stiffness(), sys.damping(), T::lit(1e-10))
        else {
            return Ok(None);
        };
        let (data, _) = symmetric_modes(sys.stiffness(), sys.mass(), sys.input_map(), sys.output_map())?;
        let damping: Vec<T> = data.omega_sq.iter().map(|&w2| alpha + beta * w2).collect();
        let scale = data.omega_sq.iter().fold(T::zero(), |m, &w| m.max(w.abs())).sqrt();
        for (&w2, &a) in data.omega_sq.iter().zip(&damping) {
            // poles solve s² + a s + ω² = 0: stable iff a > 0 and ω² > 0
            let tol = T::lit(STABILITY_MARGIN) * scale;
            if !(w2 > tol * tol) || !(a > tol) {
                let (re, im) = if a * a >= T::lit(4.0) * w2 {
                    let r = (a * a - T::lit(4.0) * w2).sqrt();
                    ((-a + r) * T::lit(0.5), T::zero())
                } else {
                    (-a * T::lit(0.5), (T::lit(4.0) * w2 - a * a).sqrt() * T::lit(0.5))
                };
                return Err(Error::Unstable {
                    re: re.as_f64(),
                    im: im.as_f64(),
                    margin: tol.as_f64(),
                });
            }
        }
        Ok(Some(Self {
            data,
            damping,
            alpha,
            beta,
        }))
    }

    pub fn modes(&self) -> usize {
        self.damping.len()
    }

    /// `‖G‖²` from the closed-form inner products of the modal terms.
    pub fn norm_sq(&self) -> T {
        let n = self.modes();
        let w2 = &self.data.omega_sq;
        let a = &self.damping;
        let bi = &self.data.modal_input; // n × m
        let co = &self.data.modal_output; // p × n
        let bb = bi * bi.transpose();
        let cc = co.transpose() * co;
        let rows: Vec<T> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = T::zero();
                for j in 0..n {
                    let g = cc[(i, j)] * bb[(i, j)];
                    if g == T::zero() {
                        continue;
                    }
                    acc += g * modal_kernel(a[i], w2[i], a[j], w2[j]);
                }
                acc
            })
            .collect();
        rows.into_iter().fold(T::zero(), |s, r| s + r)
    }
}

/// `⟨1/(s²+aᵢs+bᵢ), 1/(s²+aⱼs+bⱼ)⟩_H2`.
#[inline]
fn modal_kernel<T: Real>(ai: T, bi: T, aj: T, bj: T) -> T {
    let sa = ai + aj;
    let d = bi - bj;
    sa / (d * d + sa * (ai * bj + aj * bi))
}

/// Quasi-triangular realization `(T, B̂, Ĉ)` of a transfer function.
#[derive(Clone, Debug)]
pub struct Realization<T: Real> {
    pub t: QuasiTriangular<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
}

impl<T: Real> Realization<T> {
    /// Schur coordinates of `E⁻¹A`; fails if the pencil is not stable.
    pub fn dense(sys: &StateSpaceSystem<T>) -> Result<Self> {
        let (at, bt) = sys.standard_form()?;
        let (q, t) = QuasiTriangular::schur(at)?;
        t.check_stable(T::lit(STABILITY_MARGIN))?;
        Ok(Self {
            t,
            b: q.transpose() * bt,
            c: sys.c() * q,
        })
    }

    /// Block-diagonal modal realization with balanced 2×2 blocks
    /// `[[0, ω], [−ω, −a]]` acting on `(ω η, η̇)`.
    pub fn modal(form: &ModalForm<T>) -> Result<Self> {
        let n = form.modes();
        let (m, p) = (form.data.modal_input.ncols(), form.data.modal_output.nrows());
        let mut t = DMatrix::zeros(2 * n, 2 * n);
        let mut b = DMatrix::zeros(2 * n, m);
        let mut c = DMatrix::zeros(p, 2 * n);
        for i in 0..n {
            let w = form.data.omega_sq[i].sqrt();
            t[(2 * i, 2 * i + 1)] = w;
            t[(2 * i + 1, 2 * i)] = -w;
            t[(2 * i + 1, 2 * i + 1)] = -form.damping[i];
            b.row_mut(2 * i + 1).copy_from(&form.data.modal_input.row(i));
            c.column_mut(2 * i).copy_from(&(form.data.modal_output.column(i) / w));
        }
        Ok(Self {
            t: QuasiTriangular::new(t)?,
            b,
            c,
        })
    }

    /// Modal route when available, dense route otherwise.
    pub fn of(sys: &StateSpaceSystem<T>) -> Result<Self> {
        match sys.second_order().map(ModalForm::new).transpose()?.flatten() {
            Some(form) => Self::modal(&form),
            None => Self::dense(sys),
        }
    }

    pub fn order(&self) -> usize {
        self.t.dim()
    }
}

/// `⟨G₁, G₂⟩_H2` (trace inner product of impulse responses).
pub fn inner_product<T: Real>(r1: &Realization<T>, r2: &Realization<T>) -> Result<T> {
    if r1.b.ncols() != r2.b.ncols() || r1.c.nrows() != r2.c.nrows() {
        return Err(Error::dim(
            "H2 inner product (inputs, outputs)",
            format!("({}, {})", r1.b.ncols(), r1.c.nrows()),
            format!("({}, {})", r2.b.ncols(), r2.c.nrows()),
        ));
    }
    let x = solve_sylvester(&r1.t, &r2.t, &(&r1.b * r2.b.transpose()))?;
    Ok((&r1.c * x).component_mul(&r2.c).sum())
}

/// `‖G‖²` through the Gramian of a realization.
pub fn norm_sq<T: Real>(r: &Realization<T>) -> Result<T> {
    inner_product(r, r)
}

/// `‖G‖_H2` through the dense controllability Gramian of `(E, A, B, C)`.
pub fn h2_norm_gramian<T: Real>(sys: &StateSpaceSystem<T>) -> Result<T> {
    let g = solve_generalized_lyapunov(sys.a(), sys.e(), sys.b())?;
    Ok((sys.c() * &g.p * sys.c().transpose()).trace().max(T::zero()).sqrt())
}

/// `‖G‖_H2`. Rayleigh-damped second-order systems use closed-form modal
/// inner products; everything else the dense Gramian.
pub fn h2_norm<T: Real>(sys: &StateSpaceSystem<T>) -> Result<T> {
    if let Some(form) = sys.second_order().map(ModalForm::new).transpose()?.flatten() {
        return Ok(form.norm_sq().max(T::zero()).sqrt());
    }
    h2_norm_gramian(sys)
}

/// `‖G₁ − G₂‖_H2` of the augmented system `(blockdiag(E₁,E₂),
/// blockdiag(A₁,A₂), [B₁; B₂], [C₁, −C₂])`, solved blockwise.
pub fn h2_error<T: Real>(sys1: &StateSpaceSystem<T>, sys2: &StateSpaceSystem<T>) -> Result<T> {
    check_io(sys1, sys2)?;
    h2_distance(&Realization::of(sys1)?, &Realization::of(sys2)?)
}

/// Same as [`h2_error`] but always through dense Schur realizations.
pub fn h2_error_dense<T: Real>(sys1: &StateSpaceSystem<T>, sys2: &StateSpaceSystem<T>) -> Result<T> {
    check_io(sys1, sys2)?;
    h2_distance(&Realization::dense(sys1)?, &Realization::dense(sys2)?)
}

fn check_io<T: Real>(sys1: &StateSpaceSystem<T>, sys2: &StateSpaceSystem<T>) -> Result<()> {
    if sys1.inputs() != sys2.inputs() || sys1.outputs() != sys2.outputs() {
        return Err(Error::dim(
            "H2 error (inputs, outputs)",
            format!("({}, {})", sys1.inputs(), sys1.outputs()),
            format!("({}, {})", sys2.inputs(), sys2.outputs()),
        ));
    }
    Ok(())
}

/// `‖G₁ − G₂‖` from realizations. The Gramian blocks are grouped as
/// `(n₁₁ − n₁₂) + (n₂₂ − n₂₁)` so identical inputs give exactly zero.
pub fn h2_distance<T: Real>(r1: &Realization<T>, r2: &Realization<T>) -> Result<T> {
    let n11 = inner_product(r1, r1)?;
    let n22 = inner_product(r2, r2)?;
    let n12 = inner_product(r1, r2)?;
    let n21 = inner_product(r2, r1)?;
    Ok(((n11 - n12) + (n22 - n21)).max(T::zero()).sqrt())
}

/// `(1/2π ∫ ‖G(jω)‖_F² dω)^{1/2}` by globally adaptive Gauss–Kronrod
/// quadrature in `log ω`, with tail estimates at both ends.
///
/// Intended as an independent cross-check of the Gramian path; `tol` is the
/// requested relative accuracy of the norm.
pub fn h2_norm_quadrature<T: Real>(sys: &StateSpaceSystem<T>, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Quadrature(format!("tolerance must be positive, got {tol}")));
    }
    if sys.states() == 0 || sys.c().iter().all(|&v| v == T::zero()) || sys.b().iter().all(|&v| v == T::zero()) {
        return Ok(0.0);
    }
    let f = |omega: f64| -> Result<f64> {
        let g = eval_transfer(sys, Cplx::new(T::zero(), T::lit(omega)))?;
        Ok(g.iter().map(|z| z.norm_sqr().as_f64()).sum())
    };
    // integrand in u = ln ω: f(e^u)·e^u
    let h = |u: f64| -> Result<f64> {
        let w = u.exp();
        Ok(f(w)? * w)
    };
    // spectral scale from the pencil's diagonal magnitudes
    let scale = {
        let ad = sys.a().norm_inf().as_f64();
        let ed = sys.e().norm_inf().as_f64();
        (ad / ed.max(f64::MIN_POSITIVE)).max(1e-300)
    };
    let mut lo = (scale * 1e-8).ln();
    let mut hi = (scale * 1e4).ln();
    let max_evals = 400_000usize;
    let mut evals = 0usize;

    let mut panels: Vec<Panel> = Vec::new();
    let step = 1.0;
    let mut u = lo;
    while u < hi {
        let v = (u + step).min(hi);
        panels.push(gauss_kronrod(&h, u, v, &mut evals)?);
        u = v;
    }
    let rel = (tol * 1e-2).max(1e-14);
    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        // tails: near ω → 0 the integrand is ≈ ‖G(0)‖², so ∫₀^{ω_lo} ≈ f(ω_lo)·ω_lo;
        // a strictly proper G decays at least like 1/ω², so ∫_{ω_hi}^∞ ≤ f(ω_hi)·ω_hi.
        let tail_lo = h(lo)?;
        let tail_hi = h(hi)?;
        evals += 2;
        let target = rel * total.abs();
        if tail_lo > 0.25 * target {
            let new_lo = lo - 2.0 * step;
            panels.push(gauss_kronrod(&h, new_lo, lo, &mut evals)?);
            lo = new_lo;
        } else if tail_hi > 0.25 * target {
            let new_hi = hi + 2.0 * step;
            panels.push(gauss_kronrod(&h, hi, new_hi, &mut evals)?);
            hi = new_hi;
        } else if err > 0.5 * target {
            let (worst, _) = panels
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
                .expect("non-empty");
            let p = panels.swap_remove(worst);
            let mid = 0.5 * (p.a + p.b);
            panels.push(gauss_kronrod(&h, p.a, mid, &mut evals)?);
            panels.push(gauss_kronrod(&h, mid, p.b, &mut evals)?);
        } else {
            let total = total + tail_lo + tail_hi;
            return Ok((total / std::f64::consts::PI).max(0.0).sqrt());
        }
        if evals > max_evals {
            return Err(Error::Quadrature(format!(
                "no convergence after {evals} transfer evaluations (estimated error {err:e}, integral {total:e})"
            )));
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gauss_kronrod(h: &impl Fn(f64) -> Result<f64>, a: f64, b: f64, evals: &mut usize) -> Result<Panel> {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (k, (&x, &w)) in GK_NODES.iter().zip(&GK_WEIGHTS).enumerate() {
        let pts: &[f64] = if x == 0.0 { &[0.0] } else { &[x, -x] };
        for &s in pts {
            let v = h(c + r * s)?;
            *evals += 1;
            if !v.is_finite() {
                return Err(Error::Quadrature(format!("non-finite integrand at ω = {:e}", (c + r * s).exp())));
            }
            kronrod += w * v;
            // Gauss nodes are the odd-indexed Kronrod nodes
            if k % 2 == 1 {
                gauss += G_WEIGHTS[k / 2] * v;
            }
        }
    }
    Ok(Panel {
        a,
        b,
        value: kronrod * r,
        error: ((kronrod - gauss) * r).abs(),
    })
}
