//! Backward-Euler simulation, used only to validate bounds a posteriori.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{BandedLu, QuasiTriangular, SparseMatrix};
use crate::scalar::Real;
use crate::signal::InputSignal;
use crate::system::StateSpaceSystem;

/// Fraction of the shortest time constant used as the default step.
pub const DEFAULT_STEPS_PER_TAU: f64 = 50.0;
/// Slowest decay time constants simulated past the end of the input.
pub const DEFAULT_SETTLE_TAUS: f64 = 5.0;
/// Upper limit on the number of default steps.
pub const MAX_DEFAULT_STEPS: usize = 1_000_000;

/// Sampled outputs `y_k = C x_k` at `t_k = k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per sample, one column per output.
    pub outputs: DMatrix<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with header `t,y1,…,yp` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let p = self.outputs.ncols();
        let mut out = String::from("t");
        for i in 1..=p {
            let _ = write!(out, ",y{i}");
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t:.16e}");
            for j in 0..p {
                let _ = write!(out, ",{:.16e}", self.outputs[(k, j)]);
            }
            out.push('\n');
        }
        out
    }
}

/// Solves `(E − dt·A) x = r`; second-order systems go through the
/// half-size matrix `M + dt·R + dt²·K`.
enum StepSolver<T: Real> {
    SecondOrder {
        lu: BandedLu<T>,
        k: SparseMatrix<T>,
        n: usize,
        dt: T,
    },
    Pencil(BandedLu<T>),
}

impl<T: Real> StepSolver<T> {
    fn new(sys: &StateSpaceSystem<T>, dt: T) -> Result<Self> {
        let fail = |p: crate::linalg::SingularPivot| {
            Error::Simulation(format!(
                "E − dt·A is singular for dt = {:e} (pivot {} of magnitude {:e})",
                dt.as_f64(),
                p.index,
                p.magnitude
            ))
        };
        match sys.second_order() {
            Some(so) => {
                // [[I, −dt I], [dt K, M + dt R]] [x; v] = [r1; r2]
                let q = so
                    .mass()
                    .lin_comb(T::one(), so.damping(), dt)?
                    .lin_comb(T::one(), so.stiffness(), dt * dt)?;
                Ok(StepSolver::SecondOrder {
                    lu: BandedLu::factor(&q).map_err(fail)?,
                    k: so.stiffness().clone(),
                    n: so.dofs(),
                    dt,
                })
            }
            None => {
                let pencil = sys.e().lin_comb(T::one(), sys.a(), -dt)?;
                Ok(StepSolver::Pencil(BandedLu::factor(&pencil).map_err(fail)?))
            }
        }
    }

    fn solve(&self, r: &DMatrix<T>) -> DMatrix<T> {
        match self {
            StepSolver::SecondOrder { lu, k, n, dt } => {
                let r1 = r.rows(0, *n).into_owned();
                let r2 = r.rows(*n, *n);
                let v = lu.solve(&(r2 - k.mul_dense(&r1) * *dt));
                let x = r1 + &v * *dt;
                let mut out = DMatrix::zeros(2 * n, 1);
                out.rows_mut(0, *n).copy_from(&x);
                out.rows_mut(*n, *n).copy_from(&v);
                out
            }
            StepSolver::Pencil(lu) => lu.solve(r),
        }
    }
}

/// Integrates `E ẋ = A x + B h(t)` by backward Euler,
/// `(E − dt·A) x_{k+1} = E x_k + dt·B h(t_{k+1})`, with one factorization.
///
/// `inputs` holds one signal per input column. The grid is `t_k = k·dt`
/// for `k = 0..=N`, `N = ⌈horizon/dt⌉`.
pub fn backward_euler<T: Real>(
    sys: &StateSpaceSystem<T>,
    inputs: &[InputSignal],
    x0: &[f64],
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Simulation(format!("time step must be positive and finite, got {dt}")));
    }
    if !(horizon.is_finite() && horizon >= dt) {
        return Err(Error::Simulation(format!("horizon {horizon} must be at least one step ({dt})")));
    }
    if inputs.len() != sys.inputs() {
        return Err(Error::dim("input signals", sys.inputs(), inputs.len()));
    }
    if x0.len() != sys.states() {
        return Err(Error::dim("initial state", sys.states(), x0.len()));
    }
    let steps = (horizon / dt * (1.0 - 1e-12)).ceil() as usize;
    let dtt = T::lit(dt);
    let solver = StepSolver::new(sys, dtt)?;
    let b_dt = sys.b() * dtt;
    let mut x = DMatrix::from_fn(x0.len(), 1, |i, _| T::lit(x0[i]));
    let p = sys.outputs();
    let mut outputs = DMatrix::zeros(steps + 1, p);
    let mut times = Vec::with_capacity(steps + 1);
    let mut h = DMatrix::zeros(inputs.len(), 1);
    let record = |k: usize, x: &DMatrix<T>, outputs: &mut DMatrix<f64>| {
        let y = sys.c() * x;
        for j in 0..p {
            outputs[(k, j)] = y[(j, 0)].as_f64();
        }
    };
    times.push(0.0);
    record(0, &x, &mut outputs);
    for k in 1..=steps {
        let t = k as f64 * dt;
        for (j, s) in inputs.iter().enumerate() {
            h[(j, 0)] = T::lit(s.value(t));
        }
        let rhs = sys.e().mul_dense(&x) + &b_dt * &h;
        x = solver.solve(&rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation(format!("non-finite state at t = {t:e}")));
        }
        times.push(t);
        record(k, &x, &mut outputs);
    }
    Ok(Trajectory { times, outputs })
}

/// Root-mean-square and maximum absolute deviation between two
/// trajectories on the same grid (over all samples and outputs).
pub fn compare_outputs(y1: &Trajectory, y2: &Trajectory) -> Result<(f64, f64)> {
    if y1.outputs.shape() != y2.outputs.shape() || y1.times.len() != y2.times.len() {
        return Err(Error::dim(
            "trajectory grids",
            format!("{:?}", y1.outputs.shape()),
            format!("{:?}", y2.outputs.shape()),
        ));
    }
    for (a, b) in y1.times.iter().zip(&y2.times) {
        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
            return Err(Error::Simulation(format!("time grids differ ({a} vs {b})")));
        }
    }
    if y1.outputs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let d = &y1.outputs - &y2.outputs;
    let rmse = (d.norm_squared() / d.len() as f64).sqrt();
    let linf = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((rmse, linf))
}

/// Smallest and largest pole magnitude and the slowest decay rate `min |Re λ|`.
fn pole_scales<T: Real>(sys: &StateSpaceSystem<T>) -> Result<(f64, f64)> {
    let (a, _) = sys.standard_form()?;
    let (_, t) = QuasiTriangular::schur(a)?;
    let mut fast = 0.0f64;
    let mut slow = f64::INFINITY;
    for l in t.eigenvalues() {
        let (re, im) = (l.re.as_f64(), l.im.as_f64());
        fast = fast.max(re.hypot(im));
        slow = slow.min(re.abs());
    }
    Ok((fast, slow))
}

/// `τ_min / 50` with `τ_min = 1 / max|λ|` over the poles of `sys`
/// (normally the LPM).
pub fn default_dt<T: Real>(sys: &StateSpaceSystem<T>) -> Result<f64> {
    let (fast, _) = pole_scales(sys)?;
    if !(fast > 0.0 && fast.is_finite()) {
        return Err(Error::Simulation("cannot derive a time step from a system without poles".into()));
    }
    Ok(1.0 / fast / DEFAULT_STEPS_PER_TAU)
}

/// End of the input support plus five of the slowest decay time constants
/// `1 / min|Re λ|`, capped at [`MAX_DEFAULT_STEPS`] steps of `dt`.
pub fn default_horizon<T: Real>(sys: &StateSpaceSystem<T>, inputs: &[InputSignal], dt: f64) -> Result<f64> {
    let (_, slow) = pole_scales(sys)?;
    if !(slow > 0.0) {
        return Err(Error::Simulation("the system has a pole on the imaginary axis; no settling time".into()));
    }
    let support = inputs.iter().filter_map(InputSignal::support_end).fold(0.0f64, f64::max);
    let h = support + DEFAULT_SETTLE_TAUS / slow;
    Ok(h.min(dt * MAX_DEFAULT_STEPS as f64).max(dt))
}
