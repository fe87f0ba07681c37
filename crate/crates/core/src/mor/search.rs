//! Deterministic coarse-to-fine search for a pair of expansion points.
//!
//! A pair is parametrized by a magnitude `ω` and a shape `ζ`: for `ζ < 1`
//! the conjugate pair `ω(ζ ± i√(1−ζ²))`, for `ζ ≥ 1` the two reals
//! `ω(ζ ± √(ζ²−1))`. Every pair lies in the open right half-plane, so the
//! pseudo-optimal ROM built on it is stable by construction.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

use super::krylov::{shift_block, PencilSolver};
use super::pork::{gramian_and_norm, unit_columns};

/// Shift pair in `(ω, ζ)` form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftPair {
    pub omega: f64,
    pub zeta: f64,
}

impl ShiftPair {
    pub fn new(omega: f64, zeta: f64) -> Self {
        Self { omega, zeta }
    }

    /// The two shifts (complex pairs ordered with the positive imaginary
    /// part first).
    pub fn shifts(&self) -> [Cplx<f64>; 2] {
        let (w, z) = (self.omega, self.zeta);
        if z < 1.0 {
            let im = w * (1.0 - z * z).sqrt();
            [Cplx::new(w * z, im), Cplx::new(w * z, -im)]
        } else {
            let d = w * (z * z - 1.0).sqrt();
            // w(ζ − √(ζ²−1)) = w / (ζ + √(ζ²−1)) avoids cancellation
            [Cplx::new(w * z + d, 0.0), Cplx::new(w / (z + (z * z - 1.0).sqrt()), 0.0)]
        }
    }

    /// Distinct shifts with their moment counts; each entry yields `order`
    /// real columns per input for real shifts and `2·order` for complex ones,
    /// so a pair always contributes two columns per input.
    pub fn plan<T: Real>(&self) -> Vec<(Cplx<T>, usize)> {
        let [a, b] = self.shifts();
        let lift = |z: Cplx<f64>| Cplx::new(T::lit(z.re), T::lit(z.im));
        if a.im != 0.0 {
            vec![(lift(a), 1)]
        } else if a.re == b.re {
            vec![(lift(a), 2)]
        } else {
            vec![(lift(a), 1), (lift(b), 1)]
        }
    }
}

impl fmt::Display for ShiftPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b] = self.shifts();
        if a.im != 0.0 {
            write!(f, "{:.6e} ± {:.6e}j", a.re, a.im)
        } else {
            write!(f, "{:.6e}, {:.6e}", a.re, b.re)
        }
    }
}

/// Seed grid of the coarse search: `omega_points` log-spaced magnitudes
/// over `[10^lo, 10^hi] × scale` and a list of shape values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedGrid {
    pub omega_points: usize,
    pub decades: (f64, f64),
    pub zetas: Vec<f64>,
}

impl Default for SeedGrid {
    fn default() -> Self {
        Self {
            omega_points: 24,
            decades: (-2.0, 2.0),
            zetas: vec![1e-3, 1e-2, 0.1, 0.5, 0.9, 2.0],
        }
    }
}

impl SeedGrid {
    pub fn len(&self) -> usize {
        self.omega_points * self.zetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn log_omegas(&self, scale: f64, count: usize) -> Vec<f64> {
        let (lo, hi) = self.decades;
        let ls = scale.log10();
        if count == 1 {
            return vec![ls + 0.5 * (lo + hi)];
        }
        (0..count)
            .map(|i| ls + lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect()
    }

    /// Evenly spread subset of `items` of length `count`; a single pick is
    /// the middle element.
    fn pick<X: Copy>(items: &[X], count: usize) -> Vec<X> {
        if count >= items.len() {
            return items.to_vec();
        }
        if count == 1 {
            return vec![items[items.len() / 2]];
        }
        (0..count)
            .map(|i| items[(i * (items.len() - 1) + (count - 1) / 2) / (count - 1)])
            .collect()
    }

    /// Seeds that fit in `budget`, ordered ω-major.
    fn seeds(&self, scale: f64, budget: usize) -> Vec<ShiftPair> {
        let nz_full = self.zetas.len();
        let (nw, nz) = if budget >= self.len() {
            (self.omega_points, nz_full)
        } else {
            let nz = nz_full.min(budget).max(1);
            (self.omega_points.min(budget / nz).max(1), nz)
        };
        let zetas = Self::pick(&self.zetas, nz);
        let mut out = Vec::with_capacity(nw * nz);
        for lw in self.log_omegas(scale, nw) {
            for &z in &zetas {
                out.push(ShiftPair::new(10f64.powf(lw), z));
            }
        }
        out
    }
}

impl FromStr for SeedGrid {
    type Err = String;

    /// `"NWxNZ"`: `NW` magnitudes, and `NZ` shape values log-spaced over
    /// `[1e-3, 2]` (the default shapes when `NZ` is 6).
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("seed grid must look like 24x6, got {s:?}"))?;
        let nw: usize = a.trim().parse().map_err(|e| format!("seed grid magnitudes: {e}"))?;
        let nz: usize = b.trim().parse().map_err(|e| format!("seed grid shapes: {e}"))?;
        if nw == 0 || nz == 0 {
            return Err("seed grid dimensions must be positive".into());
        }
        let zetas = if nz == 6 {
            SeedGrid::default().zetas
        } else if nz == 1 {
            vec![0.5]
        } else {
            let (lo, hi) = (1e-3f64.log10(), 2f64.log10());
            (0..nz)
                .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (nz - 1) as f64))
                .collect()
        };
        Ok(SeedGrid {
            omega_points: nw,
            decades: (-2.0, 2.0),
            zetas,
        })
    }
}

/// Search controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub grid: SeedGrid,
    /// Total number of objective evaluations (seeds plus refinement).
    pub budget: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        let grid = SeedGrid::default();
        Self {
            budget: grid.len() + 24,
            grid,
        }
    }
}

/// Quantity to maximize over shift pairs.
pub trait ShiftObjective: Sync {
    /// Gain of a candidate (larger is better). Errors mark the candidate
    /// as unusable, e.g. a shift on a pole.
    fn gain(&self, pair: &ShiftPair) -> Result<f64>;
}

/// Gain of a trial order-2 pseudo-optimal step on the error system
/// `C (sE − A)⁻¹ B_⊥`: the squared H2 norm it removes.
pub struct ResidualGain<'s, 'a, T: Real> {
    pub solver: &'s PencilSolver<'a, T>,
    pub input: &'s DMatrix<T>,
}

impl<T: Real> ShiftObjective for ResidualGain<'_, '_, T> {
    fn gain(&self, pair: &ShiftPair) -> Result<f64> {
        let (w, s, l) = pair_block(self.solver, pair, self.input)?;
        let (w, s, l) = unit_columns(&w, &s, &l);
        let cw = self.solver.system().c() * &w;
        let (_, g) = gramian_and_norm(&s, &l, &cw)?;
        Ok(g.as_f64())
    }
}

/// Krylov block of a shift pair relative to `input`: `A W = E W S + input·L`.
pub(crate) fn pair_block<T: Real>(
    solver: &PencilSolver<'_, T>,
    pair: &ShiftPair,
    input: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>, DMatrix<T>)> {
    let plan = pair.plan::<T>();
    let mut blocks = Vec::with_capacity(plan.len());
    for (sigma, order) in plan {
        blocks.push(shift_block(solver, sigma, order, input)?);
    }
    Ok(block_diag_relation(&blocks))
}

/// Stacks independent blocks `A Wᵢ = E Wᵢ Sᵢ + B Lᵢ` into one relation.
fn block_diag_relation<T: Real>(
    blocks: &[(DMatrix<T>, DMatrix<T>, DMatrix<T>)],
) -> (DMatrix<T>, DMatrix<T>, DMatrix<T>) {
    let rows = blocks[0].0.nrows();
    let m = blocks[0].2.nrows();
    let k: usize = blocks.iter().map(|b| b.0.ncols()).sum();
    let mut w = DMatrix::zeros(rows, k);
    let mut s = DMatrix::zeros(k, k);
    let mut l = DMatrix::zeros(m, k);
    let mut off = 0;
    for (wi, si, li) in blocks {
        let c = wi.ncols();
        w.columns_mut(off, c).copy_from(wi);
        s.view_mut((off, off), (c, c)).copy_from(si);
        l.columns_mut(off, c).copy_from(li);
        off += c;
    }
    (w, s, l)
}

/// Outcome of a search.
#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: ShiftPair,
    pub gain: f64,
    pub evaluations: usize,
    /// Candidates that could not be evaluated.
    pub failures: usize,
}

struct Tracker {
    best: Option<(ShiftPair, f64)>,
    evaluations: usize,
    failures: usize,
    first_failure: Option<String>,
}

impl Tracker {
    fn record(&mut self, pair: ShiftPair, res: Result<f64>) -> f64 {
        self.evaluations += 1;
        match res {
            Ok(g) if g.is_finite() => {
                // strict improvement only: earlier candidates win ties
                if self.best.is_none_or(|(_, b)| g > b) {
                    self.best = Some((pair, g));
                }
                g
            }
            Ok(g) => {
                self.failures += 1;
                self.first_failure.get_or_insert_with(|| format!("non-finite gain {g} at {pair}"));
                f64::NEG_INFINITY
            }
            Err(e) => {
                self.failures += 1;
                self.first_failure.get_or_insert_with(|| format!("{pair}: {e}"));
                f64::NEG_INFINITY
            }
        }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Maximizes `objective` over shift pairs within `options.budget`
/// evaluations: a parallel seed grid around `scale` (a characteristic pole
/// magnitude of the system) followed by alternating golden-section
/// refinement in `log ω` and `log ζ`. Deterministic for fixed inputs.
pub fn adaptive_shift_search(objective: &dyn ShiftObjective, scale: f64, options: &SearchOptions) -> Result<SearchResult> {
    if options.budget == 0 || options.grid.is_empty() {
        return Err(Error::ShiftSearch("candidate budget and seed grid must be non-empty".into()));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::ShiftSearch(format!("spectral scale must be positive and finite, got {scale}")));
    }
    let seeds = options.grid.seeds(scale, options.budget);
    let gains: Vec<Result<f64>> = seeds.par_iter().map(|p| objective.gain(p)).collect();
    let mut tr = Tracker {
        best: None,
        evaluations: 0,
        failures: 0,
        first_failure: None,
    };
    for (p, g) in seeds.iter().zip(gains) {
        tr.record(*p, g);
    }
    let mut remaining = options.budget.saturating_sub(seeds.len());
    if let Some((start, _)) = tr.best {
        let (lo, hi) = options.grid.decades;
        let dw = if options.grid.omega_points > 1 {
            (hi - lo) / (options.grid.omega_points - 1) as f64
        } else {
            0.5 * (hi - lo).max(1.0)
        };
        let mut center = start;
        let mut round = 0;
        while remaining >= 2 {
            // alternate coordinates; each golden search gets a share of the budget
            let evals = remaining.min(12);
            let in_omega = round % 2 == 0;
            let (a, b) = if in_omega {
                let l = center.omega.log10();
                (l - dw, l + dw)
            } else {
                let l = center.zeta.log10();
                let dz = zeta_bracket(&options.grid.zetas, center.zeta);
                (l - dz, l + dz)
            };
            let make = |x: f64| {
                if in_omega {
                    ShiftPair::new(10f64.powf(x), center.zeta)
                } else {
                    ShiftPair::new(center.omega, 10f64.powf(x))
                }
            };
            golden_max(&mut tr, make, objective, a, b, evals);
            remaining -= evals;
            center = tr.best.expect("seeded").0;
            round += 1;
        }
    }
    match tr.best {
        Some((best, gain)) => Ok(SearchResult {
            best,
            gain,
            evaluations: tr.evaluations,
            failures: tr.failures,
        }),
        None => Err(Error::ShiftSearch(format!(
            "all {} candidates failed; first: {}",
            tr.evaluations,
            tr.first_failure.unwrap_or_default()
        ))),
    }
}

/// Half-width in `log10 ζ` of the refinement bracket: the distance to the
/// nearest neighbouring seed shape, at least a quarter decade.
fn zeta_bracket(zetas: &[f64], z: f64) -> f64 {
    let lz = z.log10();
    zetas
        .iter()
        .map(|&q| (q.log10() - lz).abs())
        .filter(|&d| d > 1e-12)
        .fold(f64::INFINITY, f64::min)
        .clamp(0.25, 1.0)
}

fn golden_max(
    tr: &mut Tracker,
    make: impl Fn(f64) -> ShiftPair,
    objective: &dyn ShiftObjective,
    mut a: f64,
    mut b: f64,
    evals: usize,
) {
    let eval = |x: f64, tr: &mut Tracker| {
        let p = make(x);
        tr.record(p, objective.gain(&p))
    };
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1, tr);
    let mut f2 = eval(x2, tr);
    for _ in 2..evals {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1, tr);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2, tr);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Bump(f64);

    impl ShiftObjective for Bump {
        fn gain(&self, p: &ShiftPair) -> Result<f64> {
            let d = (p.omega / self.0).ln();
            Ok(-d * d - (p.zeta.ln() - 0.3f64.ln()).powi(2))
        }
    }

    #[test]
    fn shifts_are_in_the_right_half_plane() {
        for &z in &[1e-4, 0.3, 0.999, 1.0, 1.5, 40.0] {
            for s in ShiftPair::new(3.0, z).shifts() {
                assert!(s.re > 0.0, "{z}: {s}");
            }
        }
        let [a, b] = ShiftPair::new(2.0, 0.6).shifts();
        assert!((a.norm() - 2.0).abs() < 1e-14 && (b - a.conj()).norm() == 0.0);
        let [a, b] = ShiftPair::new(2.0, 1.25).shifts();
        // product of the real pair is ω²
        assert!((a.re * b.re - 4.0).abs() < 1e-12);
    }

    #[test]
    fn plan_yields_two_columns_per_input() {
        for &z in &[0.2, 1.0, 3.0] {
            let cols: usize = ShiftPair::new(1.0, z)
                .plan::<f64>()
                .iter()
                .map(|(s, k)| if s.im != 0.0 { 2 * k } else { *k })
                .sum();
            assert_eq!(cols, 2);
        }
    }

    #[test]
    fn budget_one_returns_the_center_seed() {
        let opts = SearchOptions {
            budget: 1,
            ..Default::default()
        };
        let r = adaptive_shift_search(&Bump(50.0), 7.0, &opts).unwrap();
        assert_eq!(r.evaluations, 1);
        assert!((r.best.omega - 7.0).abs() < 1e-12);
        assert_eq!(r.best.zeta, 0.5);
    }

    #[test]
    fn refinement_finds_the_maximum() {
        let r = adaptive_shift_search(&Bump(13.0), 1.0, &SearchOptions::default()).unwrap();
        assert!((r.best.omega / 13.0).ln().abs() < 0.05, "{:?}", r.best);
        assert!(r.evaluations <= SearchOptions::default().budget);
    }

    #[test]
    fn all_failures_is_an_error() {
        struct Fail;
        impl ShiftObjective for Fail {
            fn gain(&self, _: &ShiftPair) -> Result<f64> {
                Err(Error::Reduction("pole".into()))
            }
        }
        let err = adaptive_shift_search(&Fail, 1.0, &SearchOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ShiftSearch(_)));
    }

    #[test]
    fn seed_grid_parses() {
        let g: SeedGrid = "10x3".parse().unwrap();
        assert_eq!((g.omega_points, g.zetas.len()), (10, 3));
        assert_eq!("24x6".parse::<SeedGrid>().unwrap(), SeedGrid::default());
        assert!("24".parse::<SeedGrid>().is_err());
        assert!("0x6".parse::<SeedGrid>().is_err());
    }
}
