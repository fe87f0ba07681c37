//! Consistency conditions between an LPM and a DPM, and the simulation-free
//! bound `ε̄ = ε̄₁ + ε̄₂` on their output deviation.
//!
//! - C1: total masses agree.
//! - C2: projected initial conditions and sources agree.
//! - C3: the BoI outputs agree in H2, bounded through a certified ROM:
//!   `‖G_d − G_l‖ ≤ ‖G_d − G_r‖ + ‖G_r − G_l‖`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dpm::{dpm_total_mass, DampingOrigin, DpmModel};
use crate::error::{Error, Result};
use crate::h2::{h2_error, h2_norm};
use crate::lpm::{total_mass, LpmNetwork};
use crate::mor::{is_stable, FomNormSource, RomFamily};
use crate::scalar::Real;
use crate::signal::{input_energy_factor, InputSignal, SignalKind};
use crate::system::{SecondOrderSystem, StateSpaceSystem};

/// Default relative tolerance of the C3 verdict.
pub const DEFAULT_REL_TOL: f64 = 0.05;
/// Default relative tolerance of the C1 mass comparison.
pub const DEFAULT_MASS_TOL: f64 = 0.01;
/// Default absolute tolerance of the C2 residuals.
pub const DEFAULT_C2_TOL: f64 = 1e-6;

/// Maps between LPM and DPM quantities.
#[derive(Clone, Debug)]
pub struct ProjectionSet<T: Real> {
    /// LPM inputs × DPM inputs: `h_l = Γ_n h_d`.
    pub gamma_n: DMatrix<T>,
    /// LPM masses × DPM nodes: `x_l(0) = Γ_I x_d(0)`. `None` when the
    /// models declare none (then both must start at rest).
    pub gamma_i: Option<DMatrix<T>>,
    /// DPM output rows (the BoI selector).
    pub gamma_f: DMatrix<T>,
}

impl<T: Real> ProjectionSet<T> {
    /// Builds the projections a DPM manifest declares for `lpm`.
    ///
    /// A missing `gamma_n` defaults to the identity when both models have
    /// the same number of inputs.
    pub fn from_models(lpm: &LpmNetwork, dpm: &DpmModel<T>) -> Result<Self> {
        let ml = lpm.sources.len();
        let md = dpm.system.inputs();
        let n = dpm.system.dofs();
        let gamma_n = match &dpm.projection.gamma_n {
            Some(rows) => {
                if rows.len() != ml || rows.iter().any(|r| r.len() != md) {
                    return Err(Error::dim(
                        "projection.gamma_n",
                        format!("{ml}x{md} (LPM inputs x DPM inputs)"),
                        format!("{}x{}", rows.len(), rows.first().map_or(0, Vec::len)),
                    ));
                }
                DMatrix::from_fn(ml, md, |i, j| T::lit(rows[i][j]))
            }
            None if ml == md => DMatrix::identity(ml, md),
            None => {
                return Err(Error::doc(
                    "projection.gamma_n",
                    format!("required: the LPM has {ml} inputs and the DPM {md}"),
                ))
            }
        };
        let gamma_i = match &dpm.projection.gamma_i {
            Some(avgs) => {
                if avgs.len() != lpm.masses.len() {
                    return Err(Error::dim("projection.gamma_i", lpm.masses.len(), avgs.len()));
                }
                let mut g = DMatrix::zeros(avgs.len(), n);
                for (row, a) in avgs.iter().enumerate() {
                    let sel = a
                        .selector::<T>(n)
                        .map_err(|e| Error::doc(format!("projection.gamma_i[{row}]"), e.to_string()))?;
                    g.row_mut(row).copy_from(&sel.row(0));
                }
                Some(g)
            }
            None => None,
        };
        Ok(Self {
            gamma_n,
            gamma_i,
            gamma_f: dpm.system.output_map().clone(),
        })
    }

    /// Every BoI row is a convex combination (a surface average).
    pub fn gamma_f_is_average(&self) -> bool {
        self.gamma_f.row_iter().all(|r| {
            let sum = r.iter().fold(T::zero(), |s, &v| s + v);
            r.iter().all(|&v| v >= T::zero()) && (sum - T::one()).abs() <= T::lit(1e-12)
        })
    }
}

/// C1 outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassCheck {
    pub lpm_mass: f64,
    pub dpm_mass: f64,
    pub relative_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// C1: `|m_l − m_d| ≤ rel_tol·m_l`.
pub fn check_mass_match<T: Real>(lpm: &LpmNetwork, dpm: &SecondOrderSystem<T>, rel_tol: f64) -> MassCheck {
    let ml = total_mass(lpm);
    let md = dpm_total_mass(dpm);
    let dev = (ml - md).abs();
    MassCheck {
        lpm_mass: ml,
        dpm_mass: md,
        relative_deviation: if ml != 0.0 { dev / ml } else { f64::INFINITY },
        tolerance: rel_tol,
        pass: dev <= rel_tol * ml,
    }
}

/// How the C2 source residual was evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceComparison {
    /// Same shapes on both sides; residual from amplitudes only.
    Symbolic,
    /// At least one channel compared on a time grid.
    Numeric,
}

/// C2 outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IcSourceCheck {
    pub ic_residual: f64,
    pub source_residual: f64,
    pub comparison: SourceComparison,
    pub tolerance: f64,
    pub pass: bool,
}

/// C2: projected ICs and sources agree within `abs_tol`.
///
/// The source residual is the larger of `max_j sup_t |h_l,j(t) − (Γ_n
/// h_d(t))_j|` and the force balance `max_k |1ᵀF_lΓ_n e_k − 1ᵀF_d e_k|·peak(h_d,k)`
/// (both in force units). Channels whose contributing signals share one shape are compared
/// through their amplitudes; sampled signals or differing timing fall back
/// to a time grid. Different non-sampled kinds cannot be compared.
pub fn check_ic_source_match<T: Real>(
    lpm: &LpmNetwork,
    dpm: &DpmModel<T>,
    proj: &ProjectionSet<T>,
    abs_tol: f64,
) -> Result<IcSourceCheck> {
    let (xl, vl) = lpm.initial_conditions();
    let ic_residual = match &proj.gamma_i {
        Some(g) => {
            let res = |xd: &[f64], xl: &[f64]| -> f64 {
                let xd = DMatrix::from_fn(xd.len(), 1, |i, _| T::lit(xd[i]));
                let px = g * xd;
                xl.iter()
                    .enumerate()
                    .fold(0.0f64, |m, (i, &v)| m.max((px[(i, 0)].as_f64() - v).abs()))
            };
            res(&dpm.x0, &xl).max(res(&dpm.v0, &vl))
        }
        None => {
            let moving = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let any = moving(&xl).max(moving(&vl)).max(moving(&dpm.x0)).max(moving(&dpm.v0));
            if any > 0.0 {
                return Err(Error::doc(
                    "projection.gamma_i",
                    "required when either model has nonzero initial conditions",
                ));
            }
            0.0
        }
    };
    let lpm_signals = lpm.input_signals();
    if proj.gamma_n.nrows() != lpm_signals.len() || proj.gamma_n.ncols() != dpm.inputs.len() {
        return Err(Error::dim(
            "gamma_n",
            format!("{}x{}", lpm_signals.len(), dpm.inputs.len()),
            format!("{}x{}", proj.gamma_n.nrows(), proj.gamma_n.ncols()),
        ));
    }
    // total force per unit DPM input must agree: Σ F_l Γ_n e_k = Σ F_d e_k
    let lpm_loads: Vec<f64> = lpm.sources.iter().map(|s| s.loads.iter().map(|l| l.1).sum()).collect();
    let fd = dpm.system.input_map();
    let mut force_balance = 0.0f64;
    for (k, hd) in dpm.inputs.iter().enumerate() {
        let lumped: f64 = (0..lpm_loads.len()).map(|j| lpm_loads[j] * proj.gamma_n[(j, k)].as_f64()).sum();
        let distributed = fd.column(k).iter().fold(0.0, |a, v| a + v.as_f64());
        force_balance = force_balance.max((lumped - distributed).abs() * hd.peak());
    }
    let mut source_residual = force_balance;
    let mut comparison = SourceComparison::Symbolic;
    for (j, hl) in lpm_signals.iter().enumerate() {
        let terms: Vec<(f64, &InputSignal)> = dpm
            .inputs
            .iter()
            .enumerate()
            .map(|(k, s)| (proj.gamma_n[(j, k)].as_f64(), s))
            .filter(|(c, _)| *c != 0.0)
            .collect();
        let (r, how) = channel_residual(hl, &terms)?;
        source_residual = source_residual.max(r);
        if how == SourceComparison::Numeric {
            comparison = SourceComparison::Numeric;
        }
    }
    Ok(IcSourceCheck {
        ic_residual,
        source_residual,
        comparison,
        tolerance: abs_tol,
        pass: ic_residual <= abs_tol && source_residual <= abs_tol,
    })
}

fn channel_residual(hl: &InputSignal, terms: &[(f64, &InputSignal)]) -> Result<(f64, SourceComparison)> {
    let mut all: Vec<(f64, &InputSignal)> = vec![(1.0, hl)];
    all.extend(terms.iter().map(|&(c, s)| (-c, s)));
    // kinds must agree unless a sampled signal is involved
    let active: Vec<&(f64, &InputSignal)> = all.iter().filter(|(_, s)| s.peak() != 0.0).collect();
    let kinds: Vec<SignalKind> = active.iter().map(|(_, s)| s.kind()).collect();
    let sampled = kinds.contains(&SignalKind::Sampled);
    if !sampled {
        if let Some(&first) = kinds.first() {
            if let Some(other) = kinds.iter().find(|&&k| k != first) {
                return Err(Error::IncomparableSources(format!(
                    "LPM source of kind {} is driven by DPM sources of kind {other} (or vice versa)",
                    hl.kind()
                )));
            }
        }
        // symbolic: identical unit shapes, sum the amplitudes
        let shapes: Vec<(f64, InputSignal)> = active
            .iter()
            .filter_map(|(c, s)| s.normalized().map(|(a, shape)| (c * a, shape)))
            .collect();
        if shapes.windows(2).all(|w| w[0].1 == w[1].1) {
            let net: f64 = shapes.iter().map(|(a, _)| a).sum();
            return Ok((net.abs(), SourceComparison::Symbolic));
        }
    }
    Ok((numeric_residual(&all), SourceComparison::Numeric))
}

/// `sup_t |Σ cᵢ sᵢ(t)|` on the union of breakpoints (with one-sided
/// limits) and a uniform grid of 20 001 points.
fn numeric_residual(terms: &[(f64, &InputSignal)]) -> f64 {
    let mut end = 0.0f64;
    let mut times = vec![0.0];
    for (_, s) in terms {
        let e = s.support_end().unwrap_or(0.0);
        end = end.max(e);
        match s {
            InputSignal::Step { horizon, .. } => times.extend(horizon.iter()),
            InputSignal::RampHold { rise, end, .. } => times.extend([*rise, *end]),
            InputSignal::SineBurst { duration, .. } => times.push(*duration),
            InputSignal::Sampled { times: ts, .. } => times.extend(ts.iter()),
        }
    }
    let n = 20_000;
    times.extend((0..=n).map(|i| end * i as f64 / n as f64));
    let eval = |t: f64| terms.iter().map(|(c, s)| c * s.value(t)).sum::<f64>().abs();
    let mut worst = 0.0f64;
    for &t in &times {
        let dt = 1e-12 * t.abs().max(1e-300);
        worst = worst.max(eval(t)).max(eval(t - dt)).max(eval(t + dt));
    }
    worst
}

/// Replaces the LPM input by the DPM input through `B'_l = B_l Γ_n`.
pub fn substitute_source<T: Real>(
    lpm_ss: &StateSpaceSystem<T>,
    proj: &ProjectionSet<T>,
    dpm_input_dim: usize,
) -> Result<StateSpaceSystem<T>> {
    if proj.gamma_n.nrows() != lpm_ss.inputs() || proj.gamma_n.ncols() != dpm_input_dim {
        return Err(Error::dim(
            "gamma_n (LPM inputs x DPM inputs)",
            format!("{}x{}", lpm_ss.inputs(), dpm_input_dim),
            format!("{}x{}", proj.gamma_n.nrows(), proj.gamma_n.ncols()),
        ));
    }
    lpm_ss.with_input_projection(&proj.gamma_n)
}

/// `sqrt(∫₀^∞ ‖h_d(t)‖₂² dt)`, the factor turning an H2 error into a bound on
/// `max_t |y_d(t) − y_l(t)|` for zero initial conditions.
pub fn linf_bound_factor(inputs: &[InputSignal]) -> Result<f64> {
    input_energy_factor(inputs)
}

/// Bound at one ROM order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderBound {
    pub rom_order: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub eps_rel: f64,
}

/// Verdict of a consistency check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

/// Everything a check produces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub c1: Option<MassCheck>,
    pub c2: Option<IcSourceCheck>,
    /// `ε̄₁`: certified `‖G_d − G_r‖`.
    pub eps1: f64,
    /// `ε̄₂`: `‖G_r − G_l‖`.
    pub eps2: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub lpm_h2: f64,
    pub dpm_h2: f64,
    pub rom_order: usize,
    /// `ε̄₁` is a certificate (false when `‖G_d‖` was only estimated).
    pub eps1_certified: bool,
    pub input_energy_factor: f64,
    /// `ε̄ · input energy factor` (m), valid for zero initial conditions.
    pub linf_bound: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub orders: Vec<OrderBound>,
    pub notes: Vec<String>,
}

impl ConsistencyReport {
    /// Adds the C1/C2 records and recomputes the verdict.
    pub fn with_checks(mut self, c1: Option<MassCheck>, c2: Option<IcSourceCheck>) -> Self {
        self.c1 = c1;
        self.c2 = c2;
        self.verdict = self.decide();
        self
    }

    fn decide(&self) -> Verdict {
        let c1 = self.c1.as_ref().is_none_or(|c| c.pass);
        let c2 = self.c2.as_ref().is_none_or(|c| c.pass);
        if c1 && c2 && self.eps_rel <= self.tolerance {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        }
    }

    /// Names of the failed conditions.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.c1.as_ref().is_some_and(|c| !c.pass) {
            out.push("C1");
        }
        if self.c2.as_ref().is_some_and(|c| !c.pass) {
            out.push("C2");
        }
        if !(self.eps_rel <= self.tolerance) {
            out.push("C3");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// `rom_order,eps1,eps2,eps_rel` rows.
    pub fn bound_csv(&self) -> String {
        let mut out = String::from("rom_order,eps1,eps2,eps_rel\n");
        for o in &self.orders {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{:.16e}", o.rom_order, o.eps1, o.eps2, o.eps_rel);
        }
        out
    }

    /// Human-readable summary (6 significant digits).
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let verdict = match self.verdict {
            Verdict::Consistent => "CONSISTENT",
            Verdict::Inconsistent => "INCONSISTENT",
        };
        let _ = writeln!(s, "verdict: {verdict} (relative tolerance {:.6})", self.tolerance);
        if let Some(c1) = &self.c1 {
            let _ = writeln!(
                s,
                "C1 mass: LPM {:.6e} kg, DPM {:.6e} kg, deviation {:.6e} (tol {:.6e}) -> {}",
                c1.lpm_mass,
                c1.dpm_mass,
                c1.relative_deviation,
                c1.tolerance,
                pass(c1.pass)
            );
        }
        if let Some(c2) = &self.c2 {
            let _ = writeln!(
                s,
                "C2 ICs/sources: ic residual {:.6e}, source residual {:.6e} (tol {:.6e}, {:?}) -> {}",
                c2.ic_residual,
                c2.source_residual,
                c2.tolerance,
                c2.comparison,
                pass(c2.pass)
            );
        }
        let cert = if self.eps1_certified { "certified" } else { "estimated" };
        let _ = writeln!(s, "ROM order {}: eps1 = {:.6e} ({cert})", self.rom_order, self.eps1);
        let _ = writeln!(s, "eps2 = {:.6e}", self.eps2);
        let _ = writeln!(s, "eps = {:.6e}, |G_l| = {:.6e}, eps_rel = {:.6e}", self.eps_abs, self.lpm_h2, self.eps_rel);
        let _ = writeln!(
            s,
            "C3 max |y_d - y_l| <= {:.6e} (input energy factor {:.6e}) -> {}",
            self.linf_bound,
            self.input_energy_factor,
            pass(self.eps_rel <= self.tolerance)
        );
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// `ε̄ = ε̄₁ + ε̄₂` and its relative and time-domain forms.
///
/// `lpm_ss` must already be driven by the DPM input (see
/// [`substitute_source`]); `family` must come from reducing `dpm_ss`.
/// `ε̄₂` is evaluated at every order of the family; the verdict uses the
/// last (most accurate) ROM.
pub fn consistency_bound<T: Real>(
    lpm_ss: &StateSpaceSystem<T>,
    dpm_ss: &StateSpaceSystem<T>,
    family: &RomFamily<T>,
    inputs: &[InputSignal],
    rel_tol: f64,
) -> Result<ConsistencyReport> {
    if family.fom_dims != (dpm_ss.states(), dpm_ss.inputs(), dpm_ss.outputs()) {
        return Err(Error::dim(
            "ROM family vs DPM (states, inputs, outputs)",
            format!("{:?}", (dpm_ss.states(), dpm_ss.inputs(), dpm_ss.outputs())),
            format!("{:?}", family.fom_dims),
        ));
    }
    if lpm_ss.inputs() != dpm_ss.inputs() || lpm_ss.outputs() != dpm_ss.outputs() {
        return Err(Error::dim(
            "LPM vs DPM (inputs, outputs) after source substitution",
            format!("({}, {})", dpm_ss.inputs(), dpm_ss.outputs()),
            format!("({}, {})", lpm_ss.inputs(), lpm_ss.outputs()),
        ));
    }
    if !is_stable(lpm_ss)? {
        return Err(Error::InvalidModel(
            "the LPM is not asymptotically stable; its H2 norm is undefined".into(),
        ));
    }
    let last = family
        .last()
        .ok_or_else(|| Error::Reduction("the ROM family is empty".into()))?;
    let energy = linf_bound_factor(inputs)?;
    let (lpm_h2, eps2s) = rayon::join(
        || h2_norm(lpm_ss),
        || {
            family
                .steps
                .par_iter()
                .map(|s| h2_error(&s.rom, lpm_ss))
                .collect::<Result<Vec<T>>>()
        },
    );
    let lpm_h2 = lpm_h2?.as_f64();
    let eps2s = eps2s?;
    let rel = |abs: f64| {
        if lpm_h2 > 0.0 {
            abs / lpm_h2
        } else if abs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let orders: Vec<OrderBound> = family
        .steps
        .iter()
        .zip(&eps2s)
        .map(|(s, e2)| OrderBound {
            rom_order: s.order,
            eps1: s.certified_error,
            eps2: e2.as_f64(),
            eps_rel: rel(s.certified_error + e2.as_f64()),
        })
        .collect();
    let eps1 = last.certified_error;
    let eps2 = eps2s.last().expect("non-empty family").as_f64();
    let eps_abs = eps1 + eps2;
    let mut notes = Vec::new();
    if family.fom_norm_source == FomNormSource::Estimated {
        notes.push("the DPM H2 norm was estimated by quadrature; eps1 is an estimate, not a certificate".into());
    }
    if !family.target_met() {
        notes.push(format!(
            "the ROM family stopped at order {} ({:?}) above its target {:.6e}",
            last.order, family.stop_reason, family.target
        ));
    }
    let mut report = ConsistencyReport {
        c1: None,
        c2: None,
        eps1,
        eps2,
        eps_abs,
        eps_rel: rel(eps_abs),
        lpm_h2,
        dpm_h2: family.fom_h2,
        rom_order: last.order,
        eps1_certified: family.is_certified(),
        input_energy_factor: energy,
        linf_bound: eps_abs * energy,
        tolerance: rel_tol,
        verdict: Verdict::Inconsistent,
        orders,
        notes,
    };
    report.verdict = report.decide();
    Ok(report)
}

/// Adds the advisory notes a DPM's provenance calls for.
pub fn provenance_notes<T: Real>(dpm: &DpmModel<T>, proj: &ProjectionSet<T>) -> Vec<String> {
    let mut notes = Vec::new();
    if let DampingOrigin::RayleighStandIn { alpha, beta } = dpm.damping {
        notes.push(format!(
            "DPM damping is a Rayleigh stand-in R = {alpha:e} M + {beta:e} K, not a discretized damping law"
        ));
    }
    if !proj.gamma_f_is_average() {
        notes.push("a DPM BoI row is not a convex average of nodal displacements".into());
    }
    if dpm.x0.iter().chain(&dpm.v0).any(|&v| v != 0.0) {
        notes.push("nonzero initial conditions: the time-domain bound assumes a start at rest".into());
    }
    notes
}
